#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayhjb/path.hpp"
#include "delayhjb/random.hpp"

#include <sstream>

using namespace delayhjb;

namespace {

HistoryPath counter_x(int n) {
    const double a = 1.0 / n;
    return HistoryPath::piecewise_linear_1d({-1.0 - a, -a, 0.0}, {0.0, 0.0, 1.0});
}

HistoryPath counter_y(int n) {
    const double a = 1.0 / n;
    return HistoryPath::piecewise_linear_1d({-1.0 - 2.0 * a, -2.0 * a, -a, 0.0}, {0.0, 0.0, 1.0, 1.0});
}

}  // namespace

TEST_CASE("sup norm examples") {
    CHECK(HistoryPath::zero(2, 1.0).sup_norm() == 0.0);

    Eigen::VectorXd zero3 = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd peak(3);
    peak << 0.0, 0.0, 2.0;
    auto x = HistoryPath::piecewise_constant({-1.0, 0.0}, {zero3, peak});
    CHECK(x.regularity() == Regularity::cadlag);
    CHECK(x.sup_norm() == doctest::Approx(2.0));
    CHECK(x.sup_norm_open() == doctest::Approx(0.0));

    auto y = HistoryPath::piecewise_linear_1d({-2.0, -1.0, 0.0}, {0.0, -3.0, 1.0});
    CHECK(y.sup_norm() == doctest::Approx(3.0));
}

TEST_CASE("value_at interpolates and keeps the jump at 0") {
    auto x = HistoryPath::piecewise_linear_1d({-2.0, -1.0, 0.0}, {0.0, 2.0, 0.0});
    CHECK(x.value_at(-1.5)[0] == doctest::Approx(1.0));
    CHECK(x.value_at(-5.0)[0] == 0.0);
    auto b = x.bumped(0, 0.5);
    CHECK(b.value_at(0.0)[0] == doctest::Approx(0.5));
    CHECK(b.view().left_limit_at(0.0)[0] == doctest::Approx(0.0));
    CHECK_THROWS_AS(HistoryPath::piecewise_linear_1d({-1.0, 0.0}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(HistoryPath::piecewise_linear_1d({-1.0, -0.5}, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("shift examples") {
    auto z = HistoryPath::zero(1, 2.0);
    CHECK(shift(z, 0.7).sup_norm() == 0.0);

    RandomStream rng(3, StreamTag::probes, 0);
    auto x = random_path(rng);
    CHECK(shift(x, 0.0) == x);

    for (int n : {1, 2, 7, 1000}) {
        auto xs = shift(counter_x(n), 1.0 / n);
        CHECK(sup_distance(xs, counter_y(n)) < 1e-12);
    }
    CHECK_THROWS_AS(shift(x, -0.1), std::invalid_argument);
}

TEST_CASE("shift freezes the endpoint") {
    auto x = HistoryPath::piecewise_linear_1d({-1.0, -0.5, 0.0}, {0.0, 3.0, 1.0});
    auto xs = shift(x, 0.25);
    CHECK(xs.value_at(0.0)[0] == doctest::Approx(1.0));
    CHECK(xs.value_at(-0.2)[0] == doctest::Approx(1.0));
    CHECK(xs.value_at(-0.75)[0] == doctest::Approx(3.0));
}

TEST_CASE("d_infinity examples") {
    RandomStream rng(5, StreamTag::probes, 0);
    auto x = random_path(rng);
    auto y = random_path(rng);
    TimedPath a(0.3, x);
    CHECK(d_infinity(a, a) == 0.0);

    auto z = HistoryPath::zero(1, 1.0);
    CHECK(d_infinity(TimedPath(0.0, z), TimedPath(1.0, z)) == doctest::Approx(1.0));

    CHECK(d_infinity(TimedPath(0.5, x), TimedPath(0.5, y)) == doctest::Approx(sup_distance(x, y)));
    CHECK(d_infinity(TimedPath(0.2, x), TimedPath(0.9, y)) ==
          doctest::Approx(d_infinity(TimedPath(0.9, y), TimedPath(0.2, x))));
}

TEST_CASE("norm1_distance examples") {
    RandomStream rng(6, StreamTag::probes, 0);
    auto x = random_path(rng);
    auto y = random_path(rng);
    CHECK(norm1_distance(TimedPath(1.0, x), TimedPath(1.0, x)) == 0.0);
    CHECK(norm1_distance(TimedPath(1.0, x), TimedPath(1.0, y)) == doctest::Approx(sup_distance(x, y)));
    for (int n : {1, 10, 1000}) {
        double d = norm1_distance(TimedPath(0.0, counter_x(n)), TimedPath(1.0 / n, counter_y(n)));
        CHECK(d == doctest::Approx(1.0 / n + 1.0));
        CHECK(d >= 1.0);
        CHECK(d_infinity(TimedPath(0.0, counter_x(n)), TimedPath(1.0 / n, counter_y(n))) ==
              doctest::Approx(1.0 / n));
    }
}

TEST_CASE("difference and sum") {
    auto x = HistoryPath::piecewise_linear_1d({-1.0, -0.5, 0.0}, {0.0, 1.0, 2.0});
    auto y = HistoryPath::piecewise_linear_1d({-2.0, -0.25, 0.0}, {0.0, -1.0, 1.0});
    auto d = difference(x, y);
    for (double th : {-1.5, -0.75, -0.3, -0.1, 0.0})
        CHECK(d.value_at(th)[0] == doctest::Approx(x.value_at(th)[0] - y.value_at(th)[0]));
    CHECK(sup_distance(sum(d, y), x) < 1e-12);
    CHECK(sup_distance(x, y) == doctest::Approx(d.sup_norm()));
}

TEST_CASE("exp integral matches quadrature") {
    auto x = HistoryPath::piecewise_linear_1d({-2.0, -1.0, 0.0}, {0.0, 2.0, -1.0});
    double h = 1e-5;
    double acc = 0.0;
    for (double th = -2.0 + h / 2; th < 0.0; th += h) acc += std::exp(th) * x.value_at(th)[0] * h;
    CHECK(x.view().exp_integral(1.0, 0) == doctest::Approx(acc).epsilon(1e-8));
}

TEST_CASE("path CSV round trip") {
    RandomStream rng(9, StreamTag::probes, 0);
    auto x = random_path(rng, {2, 8, 1.5, 1.0}).bumped(1, 0.3);
    std::stringstream ss;
    write_path_csv(ss, x);
    auto y = read_path_csv(ss);
    CHECK(y.dim() == 2);
    CHECK(y.regularity() == Regularity::cadlag);
    CHECK(sup_distance(x, y) < 1e-12);
}

TEST_CASE("materialize of a view equals the path") {
    auto x = HistoryPath::piecewise_linear_1d({-1.0, -0.5, 0.0}, {0.0, 1.0, 2.0});
    CHECK(materialize(x.view()) == x);
}
