#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayhjb/calculus.hpp"
#include "delayhjb/fixtures.hpp"
#include "delayhjb/gauge.hpp"

#include <cmath>

using namespace delayhjb;

namespace {

TimedPath probe(double t = 0.4) {
    return TimedPath(t, HistoryPath::piecewise_linear_1d({-1.0, -0.3, 0.0}, {0.0, 1.5, 0.6}));
}

TimedPath probe2(const Eigen::Vector2d& tip) {
    std::vector<Eigen::VectorXd> vals{Eigen::Vector2d::Zero(), Eigen::Vector2d(0.2, -0.4), Eigen::VectorXd(tip)};
    return TimedPath(0.3, HistoryPath::piecewise_linear({-1.0, -0.5, 0.0}, vals));
}

}  // namespace

TEST_CASE("horizontal_fd examples") {
    auto t = time_functional(1);
    for (double h : {1e-3, 0.1, 1.0}) CHECK(horizontal_fd(t, probe(), {h, false}) == doctest::Approx(1.0));
    CHECK(horizontal_fd(endpoint_square(1), probe()) == doctest::Approx(0.0).epsilon(1e-12));

    RandomStream rng(4, StreamTag::probes, 0);
    AnchoredGauge s(GaugeSpec{2, 3.0}, TimedPath(0.1, random_path(rng)), GaugeKind::s_m);
    TimedPath p(0.7, random_path(rng));
    CHECK(std::abs(horizontal_fd(s, p, {0.0, true})) < 1e-9);
    CHECK(s.horizontal(p.time, p.path.view()) == 0.0);
}

TEST_CASE("vertical_grad_fd examples") {
    PowerTerm f(1, Eigen::VectorXd::Constant(1, 0.6));
    CHECK(vertical_grad_fd(f, probe())[0] == doctest::Approx(0.0).epsilon(1e-10));

    auto sq = endpoint_square(2);
    auto g = vertical_grad_fd(sq, probe2(Eigen::Vector2d(0.7, -1.2)));
    CHECK(g[0] == doctest::Approx(1.4));
    CHECK(g[1] == doctest::Approx(-2.4));

    auto c = constant_functional(5.0, 1);
    CHECK(vertical_grad_fd(c, probe())[0] == 0.0);
}

TEST_CASE("vertical_hess_fd examples") {
    auto h = vertical_hess_fd(endpoint_square(2), probe2(Eigen::Vector2d(0.7, -1.2)));
    CHECK((h.matrix - 2.0 * Eigen::Matrix2d::Identity()).norm() < 1e-6);
    CHECK(h.asymmetry < 1e-6);

    auto c = vertical_hess_fd(constant_functional(2.0, 1), probe());
    CHECK(c.matrix.norm() == 0.0);

    Eigen::Vector2d tip(0.7, -1.2);
    Eigen::VectorXd a0 = tip - Eigen::Vector2d(1.0, 0.0);
    PowerTerm f(2, a0);
    auto hf = vertical_hess_fd(f, probe2(tip), {0.0, true});
    Eigen::Matrix2d expect = 4.0 * Eigen::Matrix2d::Identity();
    expect(0, 0) += 8.0;
    CHECK((hf.matrix - expect).norm() < 1e-6);
}

TEST_CASE("compare_derivatives agrees on smooth functionals") {
    PowerTerm f(3, Eigen::VectorXd::Constant(1, -0.2));
    auto rows = compare_derivatives(f, probe());
    REQUIRE(rows.size() == 3);
    for (auto& r : rows) CHECK(r.pass);

    FunctionalFromFns partial("value only", [](double, const PathView& x) { return x.tip(0); });
    CHECK_FALSE(partial.has_derivatives());
    const auto pp = probe();
    Eigen::VectorXd out(1);
    CHECK_THROWS_AS(partial.gradient(0.0, pp.path.view(), out), MissingDerivative);
}

TEST_CASE("ito_residual: constant functional is exactly zero") {
    auto c = constant_functional(3.0, 1);
    auto bm = brownian_coefficients(1);
    SimConfig cfg{0.01, 1.0, 5, 3, 1};
    for (std::size_t i = 0; i < 5; ++i) {
        auto tr = euler_simulate(*bm, HistoryPath::zero(1, 1.0), constant_control(0.0), cfg, i);
        CHECK(ito_residual(c, tr) == 0.0);
    }
}

TEST_CASE("ito_residual: |x(0)|^2 on Brownian motion is the discrete Ito identity") {
    auto sq = endpoint_square(1);
    auto bm = brownian_coefficients(1);
    SimConfig cfg{0.01, 1.0, 1, 3, 1};
    auto tr = euler_simulate(*bm, HistoryPath::zero(1, 1.0), constant_control(0.0), cfg, 0);
    double w = 0.0, stoch = 0.0;
    for (std::size_t k = 0; k < tr.steps(); ++k) {
        stoch += 2.0 * w * tr.increment(k)[0];
        w += tr.increment(k)[0];
    }
    double expect = w * w - stoch - 1.0;
    CHECK(ito_residual(sq, tr) == doctest::Approx(expect).epsilon(1e-10));

    double prev = 0.0;
    for (double dt : {1e-2, 2.5e-3}) {
        SimConfig c{dt, 1.0, 4000, 8, 1};
        auto st = ito_check(sq, *bm, HistoryPath::zero(1, 1.0), constant_control(0.0), c);
        CHECK(std::abs(st.mean) <= 3.0 * st.mean_se + 1e-12);
        if (prev > 0.0) CHECK(prev / st.mean_abs >= 1.6);
        prev = st.mean_abs;
    }
}

TEST_CASE("generator terms") {
    Jet j;
    j.dt = 1.0;
    j.dx = Eigen::Vector2d(1.0, 2.0);
    j.dxx = Eigen::Matrix2d::Identity() * 2.0;
    Eigen::Vector2d b(0.5, -1.0);
    Eigen::Matrix2d s = Eigen::Matrix2d::Identity();
    auto g = generator_terms(j, b, s);
    CHECK(g.dt_term == 1.0);
    CHECK(g.drift_term == doctest::Approx(-1.5));
    CHECK(g.diffusion_term == doctest::Approx(2.0));
    CHECK(g.total() == doctest::Approx(1.5));
}
