#pragma once

#include "delayhjb/path.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace delayhjb {

using PathObjective = std::function<double(const TimedPath&)>;
using PairPenalty = std::function<double(const TimedPath&, const TimedPath&)>;

/// Finite set of candidates, iterated in storage order.
struct SearchDomain {
    std::vector<TimedPath> candidates;
    double floor_time = 0.0;

    void validate() const;
    std::size_t size() const { return candidates.size(); }
};

class NotEpsilonMaximal : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct VariationalResult {
    std::size_t maximizer = 0;            ///< index into the domain
    std::vector<std::size_t> centers;     ///< centers[0] is the start
    std::vector<double> weights;          ///< delta_i per center
    double perturbed_value = 0.0;         ///< f(x^) - sum delta_i rho(x^, c_i)
    std::size_t iterations = 0;
    bool stabilized = true;               ///< false when max_iters ran out
    bool center_times_monotone = true;    ///< t_i non-decreasing for i >= 1
};

/// Perturbed maximization on a finite domain: starting from an
/// epsilon-maximal `start`, repeatedly moves the center to the exact argmax of
/// f - sum_{i<=k} delta_i rho(., c_i) until the latest center is the strict
/// maximizer. Ties with the current center are resolved by moving to the first
/// tying candidate at positive rho-distance.
VariationalResult borwein_preiss(const PathObjective& f, const PairPenalty& rho,
                                 std::vector<double> deltas, double epsilon, std::size_t start,
                                 const SearchDomain& domain, std::size_t max_iters = 1000,
                                 int threads = 1);

/// delta_i = delta0 * 2^{-i}, i < count
std::vector<double> halving_deltas(double delta0, std::size_t count);

struct VariationalCheck {
    bool distance_bounds = false;   ///< rho(x^, c_0) <= eps/delta_0, rho(x^, c_i) <= eps/(2^i delta_0)
    bool value_bound = false;       ///< f(x^) - penalty(x^) >= f(c_0)
    bool strict_max = false;        ///< penalized value strictly largest at x^
    double strict_margin = 0.0;     ///< min over y != x^ of the penalized gap
    std::size_t duplicates = 0;     ///< candidates at rho-distance 0 from x^ (excluded from strictness)
    bool all() const { return distance_bounds && value_bound && strict_max; }
};

/// Exhaustive check of the three conclusions over the whole domain.
VariationalCheck verify_borwein_preiss(const VariationalResult& result, const PathObjective& f,
                                       const PairPenalty& rho, double epsilon,
                                       const SearchDomain& domain);

/// Seeded domain of `size` random timed paths with times in [0, 2].
SearchDomain random_domain(std::uint64_t seed, std::size_t index, std::size_t size);

/// Domain CSV: columns candidate,time,theta,v1..vd; rows of one candidate are
/// contiguous and follow the path CSV conventions.
SearchDomain read_domain_csv(std::istream& in);
void write_domain_csv(std::ostream& out, const SearchDomain& domain);

/// Named objectives for the CLI: "tip" (x(0)_1 - t^2), "neg-sup" (-|x|_C),
/// "tip-minus-sup" (x(0)_1 - 0.5 |x|_C - 0.1 t).
PathObjective named_objective(const std::string& name);

}  // namespace delayhjb
