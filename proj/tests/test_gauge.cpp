#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayhjb/gauge.hpp"

#include <cmath>

using namespace delayhjb;

namespace {

// peak `p` at theta = -0.5, endpoint `tip`
HistoryPath tent(double p, double tip) {
    return HistoryPath::piecewise_linear_1d({-1.0, -0.5, 0.0}, {0.0, p, tip});
}

TimedPath zero_at(double t) { return TimedPath(t, HistoryPath::zero(1, 1.0)); }

}  // namespace

TEST_CASE("S_m examples") {
    GaugeSpec g1{1, 3.0};
    TimedPath p(0.5, tent(1.0, 0.3));
    CHECK(s_m(g1, p, p) == 0.0);
    CHECK(s_m(g1, TimedPath(0.5, tent(1.0, 0.0)), zero_at(0.5)) == doctest::Approx(1.0));
    CHECK(s_m(g1, TimedPath(0.5, tent(0.5, 1.0)), zero_at(0.5)) == 0.0);
    CHECK_THROWS_AS(s_m(GaugeSpec{0, 3.0}, p, p), std::invalid_argument);
}

TEST_CASE("Upsilon examples") {
    auto peak = HistoryPath::piecewise_linear_1d({-1.0, 0.0}, {0.0, 1.0});
    for (int m : {1, 2, 3})
        CHECK(upsilon(GaugeSpec{m, 3.0}, TimedPath(0.2, peak), zero_at(0.2)) == doctest::Approx(3.0));
    CHECK(upsilon(GaugeSpec{1, 3.0}, TimedPath(0.2, tent(1.0, 0.0)), zero_at(0.2)) == doctest::Approx(1.0));

    for (int n : {1, 10, 1000}) {
        auto [a, b] = counterexample_pair(n);
        double ub = upsilon_bar(GaugeSpec{}, a, b);
        CHECK(ub <= 1.0 / n);
        CHECK(ub == doctest::Approx(1.0 / (double(n) * n)));
        CHECK(norm1_distance(a, b) >= 1.0);
    }
}

TEST_CASE("grad_s_m and hess_s_m examples") {
    GaugeSpec g1{1, 3.0};
    AnchoredGauge s(g1, zero_at(0.5), GaugeKind::s_m);
    TimedPath p(0.5, tent(2.0, 1.0));
    CHECK(grad_s_m(s, p)[0] == doctest::Approx(-27.0 / 8.0));
    CHECK(hess_s_m(s, p)(0, 0) == doctest::Approx(1.125));

    TimedPath same = zero_at(0.5);
    CHECK(grad_s_m(s, same)[0] == 0.0);
    CHECK(hess_s_m(s, same)(0, 0) == 0.0);

    TimedPath steep(0.5, tent(0.5, 1.0));
    CHECK(grad_s_m(s, steep)[0] == 0.0);
    CHECK(hess_s_m(s, steep)(0, 0) == 0.0);

    auto fd = vertical_hess_fd(s, p, {0.0, true});
    CHECK(fd.matrix(0, 0) == doctest::Approx(1.125).epsilon(1e-5));
}

TEST_CASE("power term derivatives") {
    Eigen::Vector2d a0(0.3, -0.1);
    auto z = power_term_derivs(2, a0, a0);
    CHECK(z.dt == 0.0);
    CHECK(z.dx.norm() == 0.0);
    CHECK(z.dxx.norm() == 0.0);

    for (double x : {-2.0, 0.1, 3.0}) {
        auto d = power_term_derivs(1, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, x));
        CHECK(d.dxx(0, 0) == doctest::Approx(2.0));
    }

    auto d = power_term_derivs(2, a0, a0 + Eigen::Vector2d(1.0, 0.0));
    CHECK(d.dx[0] == doctest::Approx(4.0));
    CHECK(d.dx[1] == doctest::Approx(0.0));
    Eigen::Matrix2d expect = 4.0 * Eigen::Matrix2d::Identity();
    expect(0, 0) += 8.0;
    CHECK((d.dxx - expect).norm() < 1e-12);
}

TEST_CASE("full_upsilon_derivs examples") {
    TimedPath anchor(0.4, tent(1.0, 0.5));
    AnchoredGauge ub(GaugeSpec{}, anchor, GaugeKind::upsilon_bar);
    auto j0 = full_upsilon_derivs(ub, anchor);
    CHECK(j0.dt == 0.0);
    CHECK(j0.dx.norm() == 0.0);
    CHECK(j0.dxx.norm() == 0.0);

    TimedPath later(1.4, shift(anchor.path, 1.0));
    auto j1 = full_upsilon_derivs(ub, later);
    CHECK(j1.dt == doctest::Approx(2.0));
    CHECK(j1.dx.norm() == doctest::Approx(0.0));
    CHECK(ub.value(later) == doctest::Approx(1.0));

    CHECK_THROWS_AS(ub.value(TimedPath(0.1, anchor.path)), std::invalid_argument);
}

TEST_CASE("derivatives agree with finite differences at random points") {
    DerivativeSuiteOptions opt;
    opt.probes = 100;
    auto rep = derivative_suite(opt);
    CHECK(rep.failed == 0);
    CHECK(rep.passed + rep.kink_filtered == 100);
    CHECK(rep.ok(0.95));
}

TEST_CASE("gauge_verify reports zero violations") {
    GaugeVerifyOptions opt;
    opt.samples = 500;
    opt.counterexample_n = 50;
    auto rows = gauge_verify(opt);
    CHECK(rows.size() == 3 * 2 * 3 + 4);
    for (auto& r : rows) {
        INFO(r.check);
        CHECK(r.violations == 0);
        CHECK(r.samples > 0);
    }
}

TEST_CASE("spec validation") {
    CHECK_THROWS(GaugeSpec{0, 3.0}.validate());
    CHECK_NOTHROW(GaugeSpec{2, 5.0}.validate());
}
