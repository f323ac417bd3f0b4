#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayhjb/control.hpp"
#include "delayhjb/fixtures.hpp"

#include <cmath>

using namespace delayhjb;

namespace {

std::shared_ptr<const Coefficients> constant_cost(double c) {
    FunctionCoefficients::Spec s;
    s.name = "const-cost";
    s.lipschitz = 1.0;
    s.growth = CostGrowth{c, 0};
    s.drift = [](const PathView& x, Control u, Eigen::Ref<Eigen::VectorXd> b) { b[0] = u - x.tip(0); };
    s.diffusion = [](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> v) { v(0, 0) = 1.0; };
    s.cost = [c](const PathView&, Control) { return c; };
    return std::make_shared<FunctionCoefficients>(s);
}

ControlProblem const_problem(double c) {
    ControlProblem p;
    p.name = "const";
    p.coeffs = constant_cost(c);
    p.lambda = 4.0;
    p.control_set = {-1.0, 0.0, 1.0};
    p.switching_grid = {0.0, 0.5};
    return p;
}

ValueConfig vcfg(double dt, double horizon, std::size_t paths, std::uint64_t seed = 1) {
    ValueConfig c;
    c.sim = SimConfig{dt, horizon, paths, seed, 1};
    return c;
}

HistoryPath xi(double tip) { return HistoryPath::piecewise_linear_1d({-1.0, -0.4, 0.0}, {0.0, 0.3, tip}); }

}  // namespace

TEST_CASE("problem structure and validation") {
    auto p = lq_problem();
    CHECK_NOTHROW(p.check_structure());
    auto v = validate_problem(p, 100);
    CHECK(v.theta == doctest::Approx(3.5));
    CHECK_FALSE(v.lambda_above_theta);
    CHECK_FALSE(v.lambda_above_uniqueness);

    auto bad = p;
    bad.control_set.clear();
    CHECK_THROWS_AS(bad.check_structure(), std::invalid_argument);
    bad = p;
    bad.switching_grid = {0.5};
    CHECK_THROWS_AS(bad.check_structure(), std::invalid_argument);
    bad = p;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.check_structure(), std::invalid_argument);
}

TEST_CASE("control family and feedback law") {
    auto p = const_problem(0.0);
    p.feedback_gains = {0.5};
    auto fam = control_family(p);
    CHECK(fam.size() == 9 + 1);
    CHECK(fam.front().label == "open:-1/-1");
    CHECK(fam.back().label == "feedback:0.5");
    CHECK(control_family(p, 0.5).size() == 3 + 1);

    auto law = feedback_law(1.0, {-1.0, 0.0, 1.0});
    auto x = xi(0.6);
    CHECK(law(0.0, x.view()) == -1.0);
    auto y = xi(0.5);
    CHECK(law(0.0, y.view()) == -1.0);  // tie between -1 and 0 goes to the first
    auto z = xi(-0.2);
    CHECK(law(0.0, z.view()) == 0.0);
}

TEST_CASE("cost_J: zero cost") {
    auto p = const_problem(0.0);
    auto est = cost_J(xi(1.0), constant_control(0.0), p, vcfg(0.01, 2.0, 50));
    CHECK(est.value == 0.0);
    CHECK(est.std_error == 0.0);
    CHECK(est.tail_bound == 0.0);
    auto v = value_V(xi(1.0), p, vcfg(0.01, 2.0, 50));
    CHECK(v.value == 0.0);
}

TEST_CASE("cost_J: unit cost integrates to 1/lambda") {
    auto p = const_problem(1.0);
    for (double dt : {1e-2, 1e-3}) {
        auto est = cost_J(xi(1.0), constant_control(0.0), p, vcfg(dt, 3.0, 20));
        CHECK(est.std_error == doctest::Approx(0.0));
        double truncated = (1.0 - std::exp(-p.lambda * 3.0)) / p.lambda;
        CHECK(std::abs(est.value - truncated) <= p.lambda * dt * truncated);
        CHECK(est.value + est.tail_bound >= 1.0 / p.lambda - p.lambda * dt / p.lambda);
        CHECK(std::abs(est.value - 1.0 / p.lambda) <= est.tail_bound + dt);
    }
}

TEST_CASE("tail bound shrinks with the horizon") {
    auto p = lq_problem();
    auto a = cost_J(xi(1.0), constant_control(0.0), p, vcfg(0.01, 1.0, 200));
    auto b = cost_J(xi(1.0), constant_control(0.0), p, vcfg(0.01, 3.0, 200));
    CHECK(a.tail_bound > b.tail_bound);
    CHECK(b.tail_bound >= 0.0);

    auto cfg = vcfg(0.01, 1.0, 200);
    cfg.tail_tolerance = 1e-6;
    CHECK_THROWS_AS(cost_J(xi(1.0), constant_control(0.0), p, cfg), TailToleranceError);
}

TEST_CASE("LQ under the optimal feedback matches the Riccati value") {
    Riccati r(3.0, 1.0);
    CHECK(r.a == doctest::Approx((-3.0 + std::sqrt(13.0)) / 2.0));
    CHECK(r.a * r.a + 3.0 * r.a - 1.0 == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(r.value(1.0) == doctest::Approx(0.403701).epsilon(1e-6));

    auto p = lq_problem();
    auto x = exponential_embedding(Eigen::VectorXd::Constant(1, 1.0), 1.0);
    ControlLaw opt = [&](double, const PathView& h) { return r.feedback(h.tip(0)); };
    auto est = cost_J(x, opt, p, vcfg(1e-3, 3.0, 4000, 2));
    CHECK(std::abs(est.value - r.value(1.0)) <= 3.0 * est.std_error + est.tail_bound);
}

TEST_CASE("value_V is non-increasing under family enlargement") {
    LqOptions small;
    small.actions = 3;
    small.gains = {0.0, 0.3};
    LqOptions big;
    big.actions = 9;
    auto x = exponential_embedding(Eigen::VectorXd::Constant(1, 1.0), 1.0);
    auto cfg = vcfg(1e-2, 3.0, 500, 4);
    auto a = value_V(x, lq_problem(small), cfg);
    auto b = value_V(x, lq_problem(big), cfg);
    CHECK(b.value <= a.value);
    CHECK(b.candidates > a.candidates);
    CHECK(b.value >= Riccati(3.0, 1.0).value(1.0) - 3.0 * b.std_error - 0.02);
}

TEST_CASE("value estimates are bit-reproducible across thread counts") {
    auto p = exp_memory_problem();
    auto x = xi(0.8);
    auto c1 = vcfg(1e-2, 2.0, 100, 9);
    auto c8 = c1;
    c8.sim.threads = 8;
    auto a = value_V(x, p, c1);
    auto b = value_V(x, p, c8);
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
    CHECK(a.control_label == b.control_label);
}

TEST_CASE("dpp_residual: zero cost gives exactly zero") {
    auto p = const_problem(0.0);
    InnerValue inner = [](const PathView&, std::size_t) { return 0.0; };
    auto rep = dpp_residual(xi(1.0), 0.5, p, vcfg(0.01, 2.0, 50), inner, 0.0, 0.0);
    CHECK(rep.residual == 0.0);
    CHECK(rep.residual_se == 0.0);
    CHECK_THROWS_AS(dpp_residual(xi(1.0), 0.3, p, vcfg(0.01, 2.0, 50), inner, 0.0, 0.0),
                    std::invalid_argument);
}

TEST_CASE("dpp_residual on LQ with the exact inner value") {
    Riccati r(3.0, 1.0);
    InnerValue inner = [&](const PathView& h, std::size_t) { return r.value(h.tip(0)); };
    auto x = exponential_embedding(Eigen::VectorXd::Constant(1, 1.0), 1.0);
    LqOptions coarse;
    coarse.actions = 2;
    coarse.gains = {};
    LqOptions fine;
    fine.actions = 9;
    fine.gains = {};
    fine.u_max = 1.0;
    auto cfg = vcfg(1e-3, 0.1, 4000, 6);
    auto rc = dpp_residual(x, 0.1, lq_problem(coarse), cfg, inner, r.value(1.0), 0.0);
    auto rf = dpp_residual(x, 0.1, lq_problem(fine), cfg, inner, r.value(1.0), 0.0);
    CHECK(std::abs(rf.residual) <= 3.0 * rf.residual_se + 1e-3);
    CHECK(rf.rhs <= rc.rhs);
    CHECK(std::abs(rf.residual) <= std::abs(rc.residual));
}

TEST_CASE("shift modulus: delta 0 is exactly zero; LQ is degenerate") {
    auto x = xi(0.8);
    auto cfg = vcfg(1e-2, 2.0, 100);
    auto lq = shift_modulus_check(lq_problem(), cfg, x, {0.0, 0.1, 0.5});
    CHECK(lq.rows[0].lhs == 0.0);
    CHECK(lq.degenerate);
    CHECK(lq.stable());

    auto em = shift_modulus_check(exp_memory_problem(), cfg, x, {0.0, 0.1, 0.5});
    CHECK(em.rows[0].lhs == 0.0);
    CHECK_FALSE(em.degenerate);
    CHECK(em.rows[2].lhs > 0.0);
}

TEST_CASE("lipschitz_check_V on LQ") {
    auto rep = lipschitz_check_V(lq_problem(), vcfg(1e-2, 2.0, 200), 3, 3);
    CHECK(rep.pairs == 3);
    CHECK(rep.ratios.size() == 3);
    CHECK(rep.max_ratio > 0.0);
    CHECK(std::isfinite(rep.growth_ratio));
    auto same = value_V(xi(0.5), lq_problem(), vcfg(1e-2, 2.0, 100));
    auto again = value_V(xi(0.5), lq_problem(), vcfg(1e-2, 2.0, 100));
    CHECK(same.value - again.value == 0.0);
}

TEST_CASE("exponential embedding") {
    auto g = exponential_embedding(Eigen::VectorXd::Constant(1, 2.0), 1.0, 5);
    CHECK(g.tip()[0] == 2.0);
    CHECK(g.value_at(-0.5)[0] == doctest::Approx(2.0 * std::exp(-0.5)));
    CHECK(g.value_at(-1.0)[0] == 0.0);
}
