#pragma once

#include "delayhjb/calculus.hpp"
#include "delayhjb/control.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace delayhjb {

struct HamiltonianValue {
    double value = 0.0;
    Control argmin = 0.0;
    std::size_t index = 0;
};

/// min over the finite control set of (p, b) + 1/2 tr(l sigma sigma^T) + q;
/// the first control wins ties.
HamiltonianValue hamiltonian(const PathView& x, const Eigen::Ref<const Eigen::VectorXd>& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& l, const Coefficients& coeffs,
                             std::span<const Control> controls);

/// d_t phi + (d_x phi, b(x,u)) + 1/2 tr(d_xx phi sigma sigma^T)
double generator(const FunctionalWithDerivatives& phi, double s, const PathView& x, Control u,
                 const Coefficients& coeffs);

struct HJBResidualReport {
    TimedPath probe;
    double residual = 0.0;
    Control control = 0.0;
    double lambda_term = 0.0;   ///< -lambda v
    double dt_term = 0.0;
    double hamiltonian = 0.0;
    double recomputed() const { return lambda_term + dt_term + hamiltonian; }
};

/// -lambda v + d_t v + H(x, d_x v, d_xx v) at (t, x).
HJBResidualReport classical_residual(const FunctionalWithDerivatives& v, const HistoryPath& x, double t,
                                     const ControlProblem& problem);

/// v(t, x) = a x(0)^2 + sigma^2 a / lambda with its derivatives.
FunctionalFromFns riccati_functional(double lambda, double sigma);

enum class ViscositySide { sub, super };

using PathFunctional = std::function<double(const TimedPath&)>;

struct ViscosityReport {
    ViscositySide side = ViscositySide::sub;
    double touching_gap = 0.0;       ///< w - phi (sub) or w + phi (super) at the probe
    double membership_margin = 0.0;  ///< max of w - phi (sub) or -(w + phi) (super) over samples
    double inequality = 0.0;
    bool membership_ok = false;
    bool inequality_ok = false;
    std::size_t samples = 0;
    std::string note = "sampled membership - not a proof";
};

/// Checks the test-function membership on the sampled domain and evaluates
/// the sub/supersolution inequality at the probe.
ViscosityReport viscosity_probe(const PathFunctional& w, const FunctionalWithDerivatives& phi,
                                const TimedPath& probe, const ControlProblem& problem,
                                std::span<const TimedPath> samples, ViscositySide side,
                                double tol = 1e-9);

class NotPointDependent : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Coefficients read through the endpoint only: b(z, u), sigma(z, u), q(z, u).
struct ReducedProblem {
    int dim = 1;
    double lambda = 1.0;
    std::vector<Control> control_set;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, Control)> drift;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, Control)> diffusion;
    std::function<double(const Eigen::VectorXd&, Control)> cost;
    double probe_deviation = 0.0;  ///< largest coefficient change seen by the probe
    std::size_t probes = 0;
};

/// Probes that the coefficients depend on x(0) only (history perturbations
/// leaving the endpoint fixed change nothing beyond 1e-12) and returns the
/// finite-dimensional problem, evaluated on the paths e^theta z.
ReducedProblem reduce_no_delay(const ControlProblem& problem, std::size_t probes = 64,
                               std::uint64_t seed = 1);

struct EmbeddingCheck {
    double value_embedded = 0.0;  ///< V at e^theta z
    double value_other = 0.0;     ///< V at a different history with the same endpoint
    double difference = 0.0;
    double std_error = 0.0;
    bool pass = false;            ///< |difference| <= 3 std_error (or exactly 0)
};

EmbeddingCheck embedding_check(const ControlProblem& problem, const ValueConfig& cfg,
                               const Eigen::VectorXd& z, std::uint64_t seed);

/// eps -> problem with perturbed coefficients (eps = 0 gives the base).
using ProblemFamily = std::function<ControlProblem(double eps)>;

struct StabilityRow {
    double eps = 0.0;
    double coeff_distance = 0.0;
    double value_distance = 0.0;
    double value_se = 0.0;         ///< paired standard error of the largest difference
    double quadrature_weight = 0.0;  ///< sum_k e^{-lambda s_k} dt of the value estimates
    double tail_bound = 0.0;
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    bool monotone = true;  ///< value distance non-increasing as eps decreases
};

StabilityReport stability_experiment(const ControlProblem& base, const ProblemFamily& family,
                                     const std::vector<double>& eps_ladder, const ValueConfig& cfg,
                                     std::span<const HistoryPath> xs, std::size_t coeff_samples = 200,
                                     std::uint64_t seed = 1);

/// Perturbation families used by the stability experiment.
ProblemFamily cost_shift_family(const ControlProblem& base);
ProblemFamily drift_shift_family(const ControlProblem& base);

}  // namespace delayhjb
