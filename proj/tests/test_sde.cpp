#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayhjb/fixtures.hpp"
#include "delayhjb/parallel.hpp"
#include "delayhjb/sde.hpp"

#include <cmath>
#include <sstream>

using namespace delayhjb;

namespace {

HistoryPath sample_xi() {
    return HistoryPath::piecewise_linear_1d({-1.0, -0.5, -0.2, 0.0}, {0.0, 1.0, -0.5, 0.7});
}

FunctionCoefficients::Spec ou_spec() {
    FunctionCoefficients::Spec s;
    s.name = "test";
    s.drift = [](const PathView& x, Control, Eigen::Ref<Eigen::VectorXd> b) { b[0] = -x.tip(0); };
    s.diffusion = [](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> v) { v(0, 0) = 1.0; };
    s.cost = [](const PathView&, Control) { return 0.0; };
    return s;
}

}  // namespace

TEST_CASE("history_at examples") {
    auto zero = zero_coefficients();
    auto xi = sample_xi();
    SimConfig cfg{0.01, 1.0, 1, 5, 1};
    auto traj = euler_simulate(*zero, xi, constant_control(0.0), cfg, 0, 0.0);
    CHECK(sup_distance(history_at(traj, 0.0), xi) < 1e-12);
    for (double s : {0.1, 0.37, 1.0}) {
        CHECK(sup_distance(history_at(traj, s), shift(xi, s)) < 1e-12);
        CHECK(history_at(traj, s).value_at(0.0)[0] == doctest::Approx(0.7));
    }

    auto ou = ou_coefficients();
    auto tr = euler_simulate(*ou, xi, constant_control(0.0), cfg, 3, 0.0);
    for (std::size_t k : {0u, 10u, 57u, 100u})
        CHECK(history_at(tr, tr.time(k)).value_at(0.0)[0] == doctest::Approx(tr.state(k)[0]));
    // between grid points the state is the linear interpolant
    double mid = history_at(tr, 0.105).value_at(0.0)[0];
    CHECK(mid == doctest::Approx(0.5 * (tr.state(10)[0] + tr.state(11)[0])));
}

TEST_CASE("nonzero start time") {
    auto ou = ou_coefficients();
    SimConfig cfg{0.1, 2.0, 1, 5, 1};
    auto tr = euler_simulate(*ou, sample_xi(), constant_control(0.0), cfg, 0, 1.0);
    CHECK(tr.steps() == 10);
    CHECK(tr.end_time() == doctest::Approx(2.0));
    CHECK(sup_distance(history_at(tr, 1.0), sample_xi()) < 1e-12);
}

TEST_CASE("OU moments") {
    auto ou = ou_coefficients();
    auto xi = HistoryPath::zero(1, 1.0);
    const std::size_t N = 20000;
    SimConfig cfg{1e-3, 2.0, N, 17, 1};
    std::vector<double> a(N), b(N), c(N);
    parallel_for(N, 1, [&](std::size_t i) {
        auto tr = euler_simulate(*ou, xi, constant_control(0.0), cfg, i);
        a[i] = tr.state(500)[0];
        b[i] = tr.state(1000)[0];
        c[i] = tr.state(2000)[0];
    });
    for (auto [v, s] : {std::pair{&a, 0.5}, std::pair{&b, 1.0}, std::pair{&c, 2.0}}) {
        auto m = sample_stats(*v);
        CHECK(std::abs(m.mean) <= 3.0 * m.std_error);
        std::vector<double> sq(N);
        for (std::size_t i = 0; i < N; ++i) sq[i] = (*v)[i] * (*v)[i];
        auto q = sample_stats(sq);
        double var = (1.0 - std::exp(-2.0 * s)) / 2.0;
        CHECK(std::abs(q.mean - var) <= 3.0 * q.std_error + var * 2e-3);
    }
}

TEST_CASE("determinism and replay") {
    auto ou = ou_coefficients();
    SimConfig cfg{0.01, 1.0, 1, 99, 1};
    auto t1 = euler_simulate(*ou, sample_xi(), constant_control(0.3), cfg, 4);
    auto t2 = euler_simulate(*ou, sample_xi(), constant_control(0.3), cfg, 4);
    std::ostringstream s1, s2, s3;
    t1.write_csv(s1, 4, true);
    t2.write_csv(s2, 4, true);
    CHECK(s1.str() == s2.str());

    std::vector<double> inc;
    for (std::size_t k = 0; k < t1.steps(); ++k) inc.push_back(t1.increment(k)[0]);
    EulerSimulator sim(*ou);
    Trajectory t3;
    sim.replay(sample_xi(), 0.0, 0.01, inc, constant_control(0.3), t3);
    t3.write_csv(s3, 4, true);
    CHECK(s3.str() == s1.str());
}

TEST_CASE("SimConfig validation") {
    CHECK_THROWS_AS((SimConfig{0.0, 1.0, 1, 1, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SimConfig{2.0, 1.0, 1, 1, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SimConfig{0.3, 1.0, 1, 1, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SimConfig{0.1, 1.0, 0, 1, 1}.validate()), std::invalid_argument);
    CHECK_NOTHROW((SimConfig{0.1, 1.0, 1, 1, 1}.validate()));
}

TEST_CASE("non-finite state is reported with its step") {
    auto s = ou_spec();
    s.drift = [](const PathView& x, Control, Eigen::Ref<Eigen::VectorXd> b) { b[0] = 1e200 * (1.0 + x.tip(0) * x.tip(0)); };
    FunctionCoefficients blow(s);
    SimConfig cfg{0.1, 1.0, 1, 1, 1};
    CHECK_THROWS_AS(euler_simulate(blow, sample_xi(), constant_control(0.0), cfg), SimulationError);
}

TEST_CASE("lipschitz_probe examples") {
    auto s = ou_spec();
    s.lipschitz = 4.0;
    s.cost = [](const PathView& x, Control) { return std::min(x.tip(0) * x.tip(0), 10.0); };
    auto rep = lipschitz_probe(FunctionCoefficients(s), 500, 1);
    CHECK_FALSE(rep.violation);
    CHECK(rep.lipschitz_ratio > 0.0);

    auto zero = zero_coefficients(1, 0.5);
    auto z = lipschitz_probe(*zero, 100, 1);
    CHECK(z.growth_ratio == 0.0);
    CHECK(z.lipschitz_ratio == 0.0);
    CHECK_FALSE(z.violation);

    auto q = ou_spec();
    q.lipschitz = 1.0;
    q.drift = [](const PathView& x, Control, Eigen::Ref<Eigen::VectorXd> b) { b[0] = x.tip(0) * x.tip(0); };
    auto v = lipschitz_probe(FunctionCoefficients(q), 200, 1);
    CHECK(v.violation);
    CHECK(v.worst_pair_tip > 1.0);
}

TEST_CASE("discount thresholds") {
    CHECK(theta_threshold(1.0) == doctest::Approx(3.5));
    CHECK(lambda_uniqueness(1.0) == doctest::Approx(27.0));
    CHECK(theta_threshold(0.2) == doctest::Approx(0.3));
    CHECK(lambda_uniqueness(0.2) == doctest::Approx(3.0));
}

TEST_CASE("moment estimates on zero coefficients vanish") {
    auto zero = zero_coefficients();
    SimConfig cfg{0.01, 1.0, 10, 1, 1};
    std::vector<double> ev{0.5, 1.0};
    auto rep = moment_estimates(*zero, sample_xi(), constant_control(0.0), -4.0, cfg, ev);
    for (auto& r : rep.rows) CHECK(r.drift_sq_mean == 0.0);
    CHECK(rep.fitted_drift == 0.0);
    CHECK(rep.small_time_slope == 0.0);
}

TEST_CASE("OU moment constants are stable across dt") {
    auto ou = ou_coefficients();
    auto xi = HistoryPath::piecewise_linear_1d({-1.0, 0.0}, {0.0, 1.0});
    std::vector<double> ev{0.5, 1.0, 1.5, 2.0};
    std::vector<double> growth, drift;
    for (double dt : {1e-2, 1e-3}) {
        SimConfig cfg{dt, 2.0, 2000, 5, 1};
        auto rep = moment_estimates(*ou, xi, constant_control(0.0), -4.0, cfg, ev);
        CHECK(std::isfinite(rep.fitted_growth));
        CHECK(std::isfinite(rep.small_time_slope));
        growth.push_back(rep.fitted_growth);
        drift.push_back(rep.fitted_drift);
    }
    CHECK(max_relative_change(growth) < 0.25);
    CHECK(max_relative_change(drift) < 0.25);
}

TEST_CASE("coupling on OU contracts") {
    auto ou = ou_coefficients();
    auto xi = HistoryPath::piecewise_linear_1d({-1.0, 0.0}, {0.0, 1.0});
    auto other = HistoryPath::piecewise_linear_1d({-1.0, 0.0}, {0.0, 0.5});
    SimConfig cfg{1e-2, 2.0, 200, 5, 1};
    auto rep = coupling_estimate(*ou, xi, other, constant_control(0.0), cfg);
    CHECK(rep.rhs == doctest::Approx(0.25));
    CHECK(rep.fitted == doctest::Approx(1.0));
}

TEST_CASE("max_relative_change") {
    std::vector<double> v{1.0, 1.1, 1.0};
    CHECK(max_relative_change(v) == doctest::Approx(0.1 / 1.1));
}
