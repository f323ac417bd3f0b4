#pragma once

#include "delayhjb/path.hpp"
#include "delayhjb/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace delayhjb {

using Control = double;

/// Admissible control in feedback form: u(s) = law(s, X_s). Open-loop
/// controls ignore the path argument.
using ControlLaw = std::function<Control(double time, const PathView& history)>;

/// |q(x,u)| <= constant * (1 + |x|_C^power); power 0 means |q| <= constant.
struct CostGrowth {
    double constant = 1.0;
    int power = 1;
};

/// Coefficient triple (b, sigma, q) of the controlled delay equation together
/// with its declared Lipschitz/growth constant L.
class Coefficients {
public:
    virtual ~Coefficients() = default;

    virtual std::string name() const = 0;
    virtual int state_dim() const = 0;
    virtual int noise_dim() const = 0;
    virtual double lipschitz_constant() const = 0;
    virtual CostGrowth cost_growth() const { return {lipschitz_constant(), 1}; }

    virtual void drift(const PathView& x, Control u, Eigen::Ref<Eigen::VectorXd> out) const = 0;
    virtual void diffusion(const PathView& x, Control u, Eigen::Ref<Eigen::MatrixXd> out) const = 0;
    virtual double running_cost(const PathView& x, Control u) const = 0;

    /// Rate r of an exponential memory kernel the coefficients read through
    /// PathView::exp_integral; the simulator keeps it updated in O(1).
    virtual std::optional<double> memory_rate() const { return std::nullopt; }
};

using DriftFn = std::function<void(const PathView&, Control, Eigen::Ref<Eigen::VectorXd>)>;
using DiffusionFn = std::function<void(const PathView&, Control, Eigen::Ref<Eigen::MatrixXd>)>;
using CostFn = std::function<double(const PathView&, Control)>;

class FunctionCoefficients final : public Coefficients {
public:
    struct Spec {
        std::string name;
        int state_dim = 1;
        int noise_dim = 1;
        double lipschitz = 1.0;
        std::optional<CostGrowth> growth;
        std::optional<double> memory_rate;
        DriftFn drift;
        DiffusionFn diffusion;
        CostFn cost;
    };

    explicit FunctionCoefficients(Spec spec);

    std::string name() const override { return spec_.name; }
    int state_dim() const override { return spec_.state_dim; }
    int noise_dim() const override { return spec_.noise_dim; }
    double lipschitz_constant() const override { return spec_.lipschitz; }
    CostGrowth cost_growth() const override {
        return spec_.growth.value_or(CostGrowth{spec_.lipschitz, 1});
    }
    void drift(const PathView& x, Control u, Eigen::Ref<Eigen::VectorXd> out) const override {
        spec_.drift(x, u, out);
    }
    void diffusion(const PathView& x, Control u, Eigen::Ref<Eigen::MatrixXd> out) const override {
        spec_.diffusion(x, u, out);
    }
    double running_cost(const PathView& x, Control u) const override { return spec_.cost(x, u); }
    std::optional<double> memory_rate() const override { return spec_.memory_rate; }

private:
    Spec spec_;
};

struct SimConfig {
    double dt = 1e-3;
    double horizon = 1.0;  ///< final time T of [t, T]
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate(double start_time = 0.0) const;
    std::size_t steps(double start_time = 0.0) const;
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// One simulated path X^{t,xi,u} on [t, T] together with everything needed to
/// replay it: increments, controls, and the coefficient values used per step.
///
/// The history buffer concatenates the initial datum (on absolute times
/// t + theta) with the Euler states, so X_s for any grid time is a prefix view.
class Trajectory {
public:
    double start_time() const { return start_; }
    double dt() const { return dt_; }
    std::size_t steps() const { return steps_; }
    int state_dim() const { return d_; }
    int noise_dim() const { return n_; }
    double time(std::size_t k) const { return start_ + static_cast<double>(k) * dt_; }
    double end_time() const { return time(steps_); }
    const HistoryPath& initial() const { return xi_; }

    Eigen::Map<const Eigen::VectorXd> state(std::size_t k) const {
        return {right_.data() + (xi_nodes_ - 1 + k) * d_, d_};
    }
    /// X_{s_k} as a view into the buffer (valid while the trajectory lives).
    PathView history_view(std::size_t k) const;
    /// X_s re-gridded on the trajectory node set; s may fall between steps.
    HistoryPath history_at(double s) const;

    std::span<const double> increment(std::size_t k) const { return {dw_.data() + k * n_, static_cast<std::size_t>(n_)}; }
    std::span<const double> drift(std::size_t k) const { return {drift_.data() + k * d_, static_cast<std::size_t>(d_)}; }
    /// d x n, column-major
    Eigen::Map<const Eigen::MatrixXd> vol(std::size_t k) const { return {vol_.data() + k * d_ * n_, d_, n_}; }
    Control control(std::size_t k) const { return controls_[k]; }
    double running_cost(std::size_t k) const { return costs_[k]; }

    /// max_{t <= r <= s_k} |X(r)|, combined with |xi|_C this is |X_{s_k}|_C.
    double history_sup(std::size_t k) const { return prefix_sup_[xi_nodes_ - 1 + k]; }

    void write_csv(std::ostream& out, std::size_t path_id, bool header) const;

private:
    friend class EulerSimulator;

    double start_ = 0.0;
    double dt_ = 0.0;
    std::size_t steps_ = 0;
    int d_ = 0;
    int n_ = 0;
    HistoryPath xi_;
    std::size_t xi_nodes_ = 0;
    std::vector<double> times_;
    std::vector<double> left_;
    std::vector<double> right_;
    std::vector<double> prefix_sup_;
    std::vector<double> exp_cache_;
    std::optional<double> exp_rate_;
    std::vector<double> dw_;
    std::vector<double> drift_;
    std::vector<double> vol_;
    std::vector<Control> controls_;
    std::vector<double> costs_;
};

/// Euler-Maruyama for dX = b(X_s,u)ds + sigma(X_s,u)dW with X_t = xi.
/// Reuses its trajectory buffers between calls.
class EulerSimulator {
public:
    explicit EulerSimulator(const Coefficients& coeffs);

    /// Simulates with increments drawn from `rng`.
    void run(const HistoryPath& xi, double start_time, double dt, std::size_t steps,
             const ControlLaw& control, RandomStream& rng, Trajectory& out);
    /// Replays given increments (steps x n, row-major).
    void replay(const HistoryPath& xi, double start_time, double dt,
                std::span<const double> increments, const ControlLaw& control, Trajectory& out);

private:
    template <typename NoiseSource>
    void simulate(const HistoryPath& xi, double start_time, double dt, std::size_t steps,
                  const ControlLaw& control, NoiseSource&& noise, Trajectory& out);

    const Coefficients& coeffs_;
    Eigen::VectorXd b_;
    Eigen::MatrixXd sigma_;
};

/// Simulates path `path_id` of the configuration (substream (seed, paths, id)).
Trajectory euler_simulate(const Coefficients& coeffs, const HistoryPath& xi,
                          const ControlLaw& control, const SimConfig& cfg,
                          std::size_t path_id = 0, double start_time = 0.0);

HistoryPath history_at(const Trajectory& traj, double s);

ControlLaw constant_control(Control u);

struct LipschitzReport {
    double growth_ratio = 0.0;     ///< max sqrt(|b|^2 v |sigma|_2^2 v |q|^2 / (1+|x|_C^2))
    double lipschitz_ratio = 0.0;  ///< max (|db| v |dsigma|_2 v |dq|) / |x-y|_C
    double declared = 0.0;
    bool violation = false;
    std::size_t worst_pair = 0;
    double worst_pair_tip = 0.0;   ///< |x(0)| of the pair attaining the worst ratio
    std::size_t pairs = 0;
};

/// Samples random path pairs (shared control from `controls`) and records the
/// largest ratios in the growth and Lipschitz bounds.
LipschitzReport lipschitz_probe(const Coefficients& coeffs, std::size_t num_pairs,
                                std::uint64_t seed, std::span<const Control> controls = {});

double theta_threshold(double lipschitz);
double lambda_uniqueness(double lipschitz);

struct MomentRow {
    double time = 0.0;
    double sup_sq_mean = 0.0;      ///< E|X_s|_C^2
    double sup_sq_se = 0.0;
    double weighted_lhs = 0.0;     ///< e^{2 beta s} E|X_s|_C^2 + int_t^s e^{2 beta l} E|X_l|_C^2 dl
    double drift_sq_mean = 0.0;    ///< E|X_s - xi_{s-t}|_C^2
    double drift_sq_se = 0.0;
    double drift_shape = 0.0;      ///< (1+|xi|_C^2) e^{-2 beta s} ((s-t)+1)(s-t)
};

struct MomentReport {
    double beta = 0.0;
    double dt = 0.0;
    std::size_t paths = 0;
    double fitted_growth = 0.0;      ///< C-hat: max_s weighted_lhs / (1+|xi|_C^2)
    double fitted_drift = 0.0;       ///< C0-hat: max over eval times of drift_sq_mean / drift_shape
    double small_time_slope = 0.0;   ///< max over small s-t of E|X_s - xi_{s-t}|_C^2 / (s-t)
    std::vector<MomentRow> rows;
};

class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Empirical versions of the exponential moment bound and the small-time
/// drift bound. `eval_times` are absolute times in (t, T]; the small-time slope
/// uses the first `small_steps` grid points.
MomentReport moment_estimates(const Coefficients& coeffs, const HistoryPath& xi,
                              const ControlLaw& control, double beta, const SimConfig& cfg,
                              std::span<const double> eval_times, std::size_t small_steps = 10,
                              double start_time = 0.0);

struct CouplingReport {
    double p = 2.0;
    double dt = 0.0;
    double lhs_mean = 0.0;   ///< E sup_{s<=T} |X^xi(s) - X^xi'(s)|^p
    double lhs_se = 0.0;
    double rhs = 0.0;        ///< |xi - xi'|_C^p
    double fitted = 0.0;     ///< C_p-hat
};

/// Common-noise coupling of two initial data.
CouplingReport coupling_estimate(const Coefficients& coeffs, const HistoryPath& xi,
                                 const HistoryPath& xi_other, const ControlLaw& control,
                                 const SimConfig& cfg, double p = 2.0);

/// Largest relative change |a-b|/max(|a|,|b|) between consecutive values.
double max_relative_change(std::span<const double> values);

}  // namespace delayhjb
