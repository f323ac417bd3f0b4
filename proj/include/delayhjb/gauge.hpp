#pragma once

#include "delayhjb/calculus.hpp"
#include "delayhjb/path.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace delayhjb {

/// Parameters (m, M) of the gauge family; S, Upsilon, Upsilon-bar without
/// qualification mean m = 3, M = 3.
struct GaugeSpec {
    int m = 3;
    double M = 3.0;

    void validate() const;
};

/// (N^{2m} - |x(0)-y(0)|^{2m})^3 / N^{4m} with N the sup norm of the aligned
/// difference x_{(s-t)v0} - y_{(t-s)v0}; 0 when N = 0.
double s_m(const GaugeSpec& spec, const TimedPath& p, const TimedPath& q);
/// S_m + M |x(0) - y(0)|^{2m}
double upsilon(const GaugeSpec& spec, const TimedPath& p, const TimedPath& q);
/// Upsilon + |s - t|^2
double upsilon_bar(const GaugeSpec& spec, const TimedPath& p, const TimedPath& q);

enum class GaugeKind { s_m, upsilon, upsilon_bar };

std::string to_string(GaugeKind k);

/// The gauge functional with a frozen anchor (t_hat, a), as a functional of
/// (t, x) with t >= t_hat, together with its closed-form derivatives.
class AnchoredGauge final : public FunctionalWithDerivatives {
public:
    AnchoredGauge(GaugeSpec spec, TimedPath anchor, GaugeKind kind = GaugeKind::upsilon_bar);

    std::string name() const override;
    double value(double t, const PathView& x) const override;
    bool has_derivatives() const override { return true; }
    double horizontal(double t, const PathView& x) const override;
    void gradient(double t, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const override;
    void hessian(double t, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const override;
    void jet(double t, const PathView& x, Jet& out) const override;
    /// | |x-a|_{C-} - |x(0)-a(0)| |: distance of x(0) to the kink set.
    double smooth_radius(double t, const PathView& x) const override;

    /// smooth_radius divided by max(|x-a|_{C-}, |x(0)-a(0)|).
    double relative_kink_distance(double t, const PathView& x) const;

    const GaugeSpec& spec() const { return spec_; }
    const TimedPath& anchor() const { return anchor_; }
    GaugeKind kind() const { return kind_; }

    using FunctionalWithDerivatives::jet;
    using FunctionalWithDerivatives::value;

private:
    // Aligned difference x - a_{t - t_hat}, summarized.
    struct Geometry {
        Eigen::VectorXd v;       ///< x(0) - a(0)
        double r = 0.0;          ///< |v|
        double open_norm = 0.0;  ///< |x - a_{t-t_hat}|_{C-}
    };
    Geometry geometry(double t, const PathView& x) const;
    void fill(double t, const Geometry& g, Jet& out, bool derivatives) const;

    GaugeSpec spec_;
    TimedPath anchor_;
    GaugeKind kind_;
    bool zero_anchor_;
};

struct PowerDerivs {
    double dt = 0.0;
    Eigen::VectorXd dx;
    Eigen::MatrixXd dxx;
};

/// Derivatives of |x(0) - a0|^{2m} at x(0) = v.
PowerDerivs power_term_derivs(int m, const Eigen::VectorXd& a0, const Eigen::VectorXd& v);

/// f(t, x) = |x(0) - a0|^{2m}
class PowerTerm final : public FunctionalWithDerivatives {
public:
    PowerTerm(int m, Eigen::VectorXd a0);

    std::string name() const override;
    double value(double t, const PathView& x) const override;
    bool has_derivatives() const override { return true; }
    double horizontal(double, const PathView&) const override { return 0.0; }
    void gradient(double t, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const override;
    void hessian(double t, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const override;

    using FunctionalWithDerivatives::value;

private:
    int m_;
    Eigen::VectorXd a0_;
};

Eigen::VectorXd grad_s_m(const AnchoredGauge& g, const TimedPath& p);
Eigen::MatrixXd hess_s_m(const AnchoredGauge& g, const TimedPath& p);
/// (dt, dx, dxx) of the anchored Upsilon or Upsilon-bar at p.
Jet full_upsilon_derivs(const AnchoredGauge& g, const TimedPath& p);

/// The pair (0, x^n), (1/n, y^n) with x^n = 1 + n theta on [-1/n, 0] and
/// y^n = (2 + n theta) ^ 1 on [-2/n, 0].
std::pair<TimedPath, TimedPath> counterexample_pair(int n);

struct GaugeCheckRow {
    std::string check;
    int m = 0;
    double M = 0.0;
    std::size_t samples = 0;
    std::size_t violations = 0;
    double worst_slack = 0.0;  ///< min over samples of (rhs - lhs) / max(|rhs|, 1)
};

struct GaugeVerifyOptions {
    std::size_t samples = 10000;
    std::uint64_t seed = 7;
    std::vector<int> ms{1, 2, 3};
    std::vector<double> Ms{3.0, 5.0};
    int counterexample_n = 1000;
    int threads = 1;
    double tol = 1e-12;  ///< relative rounding allowance
};

/// Two-sided norm bound, subadditivity, the gauge lower bound, the d_inf implication
/// and the |.|_1 counterexample, each as a row.
std::vector<GaugeCheckRow> gauge_verify(const GaugeVerifyOptions& opt);

/// One random probe of the analytic-vs-FD derivative suite.
struct DerivativeProbe {
    std::size_t index = 0;
    std::string functional;
    TimedPath point;
    double kink_distance = 0.0;  ///< relative distance to the non-smooth set
    bool kink_filtered = false;
    std::vector<DerivativeComparison> rows;  ///< empty when filtered
    bool pass = false;
};

struct DerivativeSuiteOptions {
    std::size_t probes = 1000;
    std::uint64_t seed = 11;
    int threads = 1;
    double kink_threshold = 1e-3;
    DerivativeCheckOptions check;
};

struct DerivativeSuiteReport {
    std::vector<DerivativeProbe> probes;
    std::size_t kink_filtered = 0;
    std::size_t compared = 0;
    std::size_t passed = 0;
    std::size_t failed = 0;  ///< compared but outside tolerance
    double pass_fraction() const {
        return probes.empty() ? 0.0 : static_cast<double>(passed) / static_cast<double>(probes.size());
    }
    bool ok(double min_fraction = 0.99) const { return failed == 0 && pass_fraction() >= min_fraction; }
};

/// Cycles through S_m, Upsilon, UpsilonBar and the endpoint power term with
/// m in {1,2,3}, random anchors and random points with terminal jumps.
DerivativeSuiteReport derivative_suite(const DerivativeSuiteOptions& opt);

}  // namespace delayhjb
