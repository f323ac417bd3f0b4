#pragma once

#include "delayhjb/path.hpp"

#include <cstdint>
#include <random>

namespace delayhjb {

/// Stream tags keep unrelated consumers of one seed on disjoint substreams.
enum class StreamTag : std::uint64_t {
    paths = 1,
    brownian = 2,
    probes = 3,
    nested = 4,
    selection = 5,
    domain = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Per-(seed, tag, index) generator. Two streams with the same key produce the
/// same numbers regardless of which thread owns them.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t index,
                 std::uint64_t sub_index = 0);

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * std::generate_canonical<double, 53>(engine_);
    }
    std::uint64_t next_u64() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

struct RandomPathSpec {
    int dim = 1;
    int nodes = 32;
    double left_horizon = 4.0;
    double amplitude = 2.0;
};

/// Piecewise-linear path on a uniform grid over [-T_h, 0], node values i.i.d.
/// uniform in [-A, A]^d, leftmost node forced to zero.
HistoryPath random_path(RandomStream& rng, const RandomPathSpec& spec = {});

}  // namespace delayhjb
