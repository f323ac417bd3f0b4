#pragma once

#include "delayhjb/random.hpp"
#include "delayhjb/sde.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace delayhjb {

/// Discounted control problem: minimize E int_0^inf e^{-lambda s} q(X_s, u(s)) ds.
struct ControlProblem {
    std::string name;
    std::shared_ptr<const Coefficients> coeffs;
    double lambda = 1.0;
    std::vector<Control> control_set;
    /// Interval start times of the piecewise-constant open-loop family; starts at 0.
    std::vector<double> switching_grid{0.0};
    /// Optional feedback family u = (action nearest to -k x(0)).
    std::vector<double> feedback_gains;
    /// Left horizon of the histories the problem is probed with.
    double history_horizon = 1.0;

    void check_structure() const;  // throws on malformed problems
};

struct ProblemValidation {
    double theta = 0.0;
    double lambda_min_uniqueness = 0.0;
    bool lambda_above_theta = false;
    bool lambda_above_uniqueness = false;
    bool hypothesis_probe_ok = false;  ///< lipschitz_probe found no violation
    LipschitzReport probe;
};

/// Reports (does not throw) on the discount thresholds and on a
/// Lipschitz/growth probe of the coefficients.
ProblemValidation validate_problem(const ControlProblem& problem, std::size_t probe_pairs = 200,
                                   std::uint64_t seed = 1);

struct ControlCandidate {
    std::string label;
    ControlLaw law;
};

/// Open-loop sequences over the switching grid points below `until`
/// (constant after the last one), followed by the feedback family.
std::vector<ControlCandidate> control_family(const ControlProblem& problem,
                                             double until = std::numeric_limits<double>::infinity());

/// u = action nearest to -gain * x(0) (first on ties).
ControlLaw feedback_law(double gain, std::vector<Control> actions);

struct ValueConfig {
    SimConfig sim;
    /// Paths used to pick the argmin control; 0 takes the min over the main paths.
    std::size_t selection_paths = 0;
    /// Throw when the tail bound exceeds this.
    std::optional<double> tail_tolerance;
    StreamTag tag = StreamTag::paths;
    std::uint64_t sub = 0;
};

class TailToleranceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ValueEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double tail_bound = 0.0;
    double horizon_used = 0.0;
    std::size_t paths_used = 0;
    std::string control_label;
    std::size_t control_index = 0;
    std::size_t candidates = 1;
    double beta = 0.0;            ///< exponent used in the tail bound
    bool beta_in_theorem_range = true;
    double fitted_moment = 0.0;   ///< C-hat of the moment bound over [0, T]
    double quadrature_weight = 0.0; ///< sum_k e^{-lambda s_k} dt
};

/// Per-path discounted costs of one control plus the data for the tail bound.
struct PathCosts {
    std::vector<double> costs;
    double fitted_moment = 0.0;
};

PathCosts simulate_costs(const HistoryPath& x, const ControlLaw& control,
                         const ControlProblem& problem, const ValueConfig& cfg,
                         StreamTag tag, std::size_t paths);

/// J(x, u): left-point discounted quadrature to T plus a tail bound.
ValueEstimate cost_J(const HistoryPath& x, const ControlLaw& control,
                     const ControlProblem& problem, const ValueConfig& cfg);

/// min of cost_J over control_family(problem).
ValueEstimate value_V(const HistoryPath& x, const ControlProblem& problem, const ValueConfig& cfg);

/// Inner value used on the right side of the dynamic programming identity.
using InnerValue = std::function<double(const PathView& history, std::size_t outer_path)>;

/// Inner value by re-rooted value_V with `inner` budget; outer path i uses
/// the nested substreams (seed, nested, ., i + 1).
InnerValue nested_inner_value(const ControlProblem& problem, ValueConfig inner);

struct DppReport {
    double t = 0.0;
    double lhs = 0.0;
    double lhs_se = 0.0;
    double rhs = 0.0;
    double rhs_se = 0.0;
    double residual = 0.0;     ///< lhs - rhs
    double residual_se = 0.0;  ///< sqrt(lhs_se^2 + rhs_se^2)
    std::string control_label;
    std::size_t candidates = 0;
};

/// V(x) - min_u E[int_0^t e^{-lambda s} q ds + e^{-lambda t} V(X_t)]. `lhs`
/// supplies V(x) with its standard error; the min runs over the family
/// restricted to [0, t).
DppReport dpp_residual(const HistoryPath& x, double t, const ControlProblem& problem,
                       const ValueConfig& cfg, const InnerValue& inner, double lhs,
                       double lhs_se);

struct LipschitzVReport {
    std::size_t pairs = 0;
    double max_ratio = 0.0;     ///< max |V(x) - V(y)| / |x - y|_C
    double growth_ratio = 0.0;  ///< max |V(x)| / (1 + |x|_C)
    std::vector<double> ratios;
};

/// Common-random-number value differences on seeded random path pairs.
LipschitzVReport lipschitz_check_V(const ControlProblem& problem, const ValueConfig& cfg,
                                   std::size_t num_pairs, std::uint64_t pair_seed);

struct ShiftModulusRow {
    double delta = 0.0;
    double lhs = 0.0;     ///< |V(x) - V(x_delta)|
    double shape = 0.0;   ///< (1 + |x|_C)(delta + delta^{1/2} + 1 - e^{-lambda delta})
    double fitted = 0.0;  ///< lhs / shape
};

struct ShiftModulusReport {
    std::vector<ShiftModulusRow> rows;
    double max_fitted = 0.0;
    bool degenerate = false;  ///< all differences exactly zero
    /// fitted constant does not grow by more than `factor` as delta decreases
    bool stable(double factor = 2.0) const;
};

ShiftModulusReport shift_modulus_check(const ControlProblem& problem, const ValueConfig& cfg,
                                       const HistoryPath& x, const std::vector<double>& deltas);

/// Problem factories.
struct LqOptions {
    double lambda = 3.0;
    double sigma = 1.0;
    double u_max = 1.0;
    std::size_t actions = 9;
    std::vector<double> gains{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    std::vector<double> switching_grid{0.0};
};
ControlProblem lq_problem(const LqOptions& opt = {});

struct ExpMemoryOptions {
    double lambda = 3.0;
    double kappa = 0.5;
    double sigma = 1.0;
    double u_max = 1.0;
    std::size_t actions = 3;
    std::vector<double> switching_grid{0.0, 0.5, 1.0};
};
ControlProblem exp_memory_problem(const ExpMemoryOptions& opt = {});

/// gamma(theta) = e^theta z on a uniform grid of [-T_h, 0], with the value at
/// -T_h replaced by 0.
HistoryPath exponential_embedding(const Eigen::VectorXd& z, double left_horizon, std::size_t nodes = 33);

}  // namespace delayhjb
