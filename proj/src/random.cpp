#include "delayhjb/random.hpp"

#include <stdexcept>

namespace delayhjb {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t index,
                           std::uint64_t sub_index) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ static_cast<std::uint64_t>(tag));
    key = splitmix64(key ^ index);
    key = splitmix64(key ^ (sub_index * 0xd1b54a32d192ed03ULL));
    engine_.seed(key);
}

HistoryPath random_path(RandomStream& rng, const RandomPathSpec& spec) {
    if (spec.nodes < 2 || spec.dim < 1 || !(spec.left_horizon > 0.0))
        throw std::invalid_argument("random_path: bad spec");
    std::vector<double> nodes(spec.nodes);
    std::vector<Eigen::VectorXd> values(spec.nodes, Eigen::VectorXd::Zero(spec.dim));
    for (int j = 0; j < spec.nodes; ++j) {
        nodes[j] = -spec.left_horizon +
                   spec.left_horizon * static_cast<double>(j) / (spec.nodes - 1);
        if (j == 0) continue;
        for (int i = 0; i < spec.dim; ++i)
            values[j][i] = rng.uniform(-spec.amplitude, spec.amplitude);
    }
    nodes.back() = 0.0;
    return HistoryPath::piecewise_linear(std::move(nodes), values);
}

}  // namespace delayhjb
