#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayhjb/parallel.hpp"
#include "delayhjb/random.hpp"

#include <set>
#include <vector>

using namespace delayhjb;

TEST_CASE("streams are keyed, not positional") {
    RandomStream a(42, StreamTag::paths, 7);
    RandomStream b(42, StreamTag::paths, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    std::set<std::uint64_t> firsts;
    for (auto tag : {StreamTag::paths, StreamTag::brownian, StreamTag::probes, StreamTag::nested,
                     StreamTag::selection, StreamTag::domain})
        for (std::uint64_t idx = 0; idx < 4; ++idx)
            for (std::uint64_t sub = 0; sub < 3; ++sub)
                firsts.insert(RandomStream(42, tag, idx, sub).next_u64());
    CHECK(firsts.size() == 6 * 4 * 3);
    CHECK(RandomStream(1, StreamTag::paths, 0).next_u64() != RandomStream(2, StreamTag::paths, 0).next_u64());
}

TEST_CASE("uniform and normal ranges") {
    RandomStream r(1, StreamTag::probes, 0);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform(-2.0, 3.0);
        CHECK((u >= -2.0 && u < 3.0));
        double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 4.0 / std::sqrt(double(n)));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("random_path respects its spec") {
    RandomStream r(3, StreamTag::probes, 0);
    RandomPathSpec spec{2, 16, 3.0, 1.5};
    auto x = random_path(r, spec);
    CHECK(x.dim() == 2);
    CHECK(x.size() == 16);
    CHECK(x.left_horizon() == doctest::Approx(3.0));
    CHECK(x.value_at(-3.0).norm() == 0.0);
    CHECK(x.sup_norm() <= 1.5 * std::sqrt(2.0) + 1e-12);
    CHECK(x.regularity() == Regularity::continuous);
}

TEST_CASE("parallel_for result is independent of the worker count") {
    auto fill = [](int threads) {
        std::vector<double> out(1000);
        parallel_for(out.size(), threads, [&](std::size_t i) {
            RandomStream r(9, StreamTag::paths, i);
            out[i] = r.normal();
        });
        return pairwise_sum(out);
    };
    double one = fill(1);
    CHECK(fill(8) == one);
    CHECK(fill(3) == one);
}

TEST_CASE("parallel_for propagates exceptions") {
    CHECK_THROWS_AS(parallel_for(100, 4, [](std::size_t i) {
                        if (i == 37) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
}

TEST_CASE("sample_stats") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    auto s = sample_stats(v);
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std_dev == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(sample_stats(std::vector<double>{}).count == 0);
}
