#pragma once

#include "delayhjb/path.hpp"
#include "delayhjb/sde.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace delayhjb {

class MissingDerivative : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Value and Dupire derivatives of a functional at one point (t, x).
struct Jet {
    double value = 0.0;
    double dt = 0.0;
    Eigen::VectorXd dx;
    Eigen::MatrixXd dxx;
};

/// A non-anticipative functional f(t, x) on [0, inf) x D_0 with optional
/// analytic horizontal / vertical derivatives.
class FunctionalWithDerivatives {
public:
    virtual ~FunctionalWithDerivatives() = default;

    virtual std::string name() const = 0;
    virtual double value(double t, const PathView& x) const = 0;

    virtual bool has_derivatives() const { return false; }
    virtual double horizontal(double t, const PathView& x) const;
    virtual void gradient(double t, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const;
    virtual void hessian(double t, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const;

    /// All four quantities at once; overridden where they share work.
    virtual void jet(double t, const PathView& x, Jet& out) const;

    /// Radius of the vertical-bump ball around x(0) on which f is smooth
    /// (infinite for globally smooth functionals).
    virtual double smooth_radius(double /*t*/, const PathView& /*x*/) const {
        return std::numeric_limits<double>::infinity();
    }

    double value(const TimedPath& p) const { return value(p.time, p.path.view()); }
    Jet jet(const TimedPath& p) const;
};

/// Functional assembled from callables; any derivative may be left empty.
class FunctionalFromFns final : public FunctionalWithDerivatives {
public:
    using ValueFn = std::function<double(double, const PathView&)>;
    using GradFn = std::function<void(double, const PathView&, Eigen::Ref<Eigen::VectorXd>)>;
    using HessFn = std::function<void(double, const PathView&, Eigen::Ref<Eigen::MatrixXd>)>;

    FunctionalFromFns(std::string name, ValueFn value, ValueFn dt = {}, GradFn dx = {},
                      HessFn dxx = {});

    std::string name() const override { return name_; }
    double value(double t, const PathView& x) const override { return value_(t, x); }
    bool has_derivatives() const override { return dt_ && dx_ && dxx_; }
    double horizontal(double t, const PathView& x) const override;
    void gradient(double t, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const override;
    void hessian(double t, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const override;

private:
    std::string name_;
    ValueFn value_;
    ValueFn dt_;
    GradFn dx_;
    HessFn dxx_;
};

/// f(t, x) = c
FunctionalFromFns constant_functional(double c, int dim);
/// f(t, x) = t
FunctionalFromFns time_functional(int dim);
/// f(t, x) = |x(0)|^2
FunctionalFromFns endpoint_square(int dim);

struct FdOptions {
    double h = 0.0;          ///< 0 selects the default step
    bool richardson = false;
};

double default_horizontal_step(const TimedPath& p);
double default_vertical_step(const TimedPath& p);

/// [f(t+h, x_h) - f(t, x)] / h, optionally extrapolated over {h, h/2}.
double horizontal_fd(const FunctionalWithDerivatives& f, const TimedPath& p, FdOptions opt = {});

/// Central differences with the bump x + h e_i 1_{0}.
Eigen::VectorXd vertical_grad_fd(const FunctionalWithDerivatives& f, const TimedPath& p,
                                 FdOptions opt = {});

struct HessianFd {
    Eigen::MatrixXd matrix;   ///< symmetrized (A + A^T)/2
    double asymmetry = 0.0;   ///< max |A - A^T| / max(max |A|, tiny)
};

HessianFd vertical_hess_fd(const FunctionalWithDerivatives& f, const TimedPath& p,
                           FdOptions opt = {});

/// One analytic-vs-FD comparison for one derivative of one functional.
struct DerivativeComparison {
    std::string quantity;    ///< "dt", "dx", "dxx"
    Eigen::MatrixXd analytic;
    Eigen::MatrixXd fd;
    double abs_err = 0.0;    ///< Frobenius norm of the difference
    double rel_err = 0.0;    ///< abs_err / |analytic|
    double step = 0.0;
    double convergence = 0.0; ///< change between the h and h/2 extrapolations
    bool pass = false;
};

struct DerivativeCheckOptions {
    double rel_tol = 1e-5;
    double abs_floor = 1e-7;
    /// FD steps stay below this fraction of the functional's smooth radius.
    double radius_fraction = 0.25;
    /// Vertical steps as multiples of default_vertical_step; the Hessian
    /// stencil divides by h^2 and needs the larger one.
    double grad_step_factor = 10.0;
    double hess_step_factor = 40.0;
};

/// Compares dt, dx and dxx of f at p with Richardson-extrapolated finite
/// differences; the step starts at the default and is halved once to check
/// convergence.
std::vector<DerivativeComparison> compare_derivatives(const FunctionalWithDerivatives& f,
                                                      const TimedPath& p,
                                                      const DerivativeCheckOptions& opt = {});

/// The three integrand pieces of the functional Ito formula at one grid point.
struct GeneratorTerms {
    double dt_term = 0.0;         ///< d_t f
    double drift_term = 0.0;      ///< (d_x f, b)
    double diffusion_term = 0.0;  ///< 1/2 tr(d_xx f sigma sigma^T)
    double total() const { return dt_term + drift_term + diffusion_term; }
};

GeneratorTerms generator_terms(const Jet& jet, const Eigen::Ref<const Eigen::VectorXd>& drift,
                               const Eigen::Ref<const Eigen::MatrixXd>& vol);

/// f(T, X_T) - f(t, X_t) - sum L f dt - sum d_x f sigma dW, left-point sums
/// over the recorded drift, volatility and increments of the trajectory.
double ito_residual(const FunctionalWithDerivatives& f, const Trajectory& traj);

struct ItoStats {
    double dt = 0.0;
    std::size_t paths = 0;
    double mean = 0.0;        ///< signed residual
    double mean_se = 0.0;
    double mean_abs = 0.0;
    double mean_abs_se = 0.0;
};

/// ito_residual over cfg.paths independent paths of the given dynamics.
ItoStats ito_check(const FunctionalWithDerivatives& f, const Coefficients& coeffs,
                   const HistoryPath& xi, const ControlLaw& control, const SimConfig& cfg);

}  // namespace delayhjb
