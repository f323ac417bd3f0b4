#include "delayhjb/gauge.hpp"

#include "delayhjb/parallel.hpp"
#include "delayhjb/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>

namespace delayhjb {

namespace {

double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

struct Gap {
    double N = 0.0;   // full sup norm of the aligned difference
    double r = 0.0;   // |x(0) - y(0)|
};

Gap aligned_gap(const TimedPath& p, const TimedPath& q) {
    const HistoryPath diff = aligned_difference(p, q);
    return {diff.sup_norm(), diff.tip().norm()};
}

double s_from(int m, double N, double r) {
    if (N == 0.0) return 0.0;
    const double A = ipow(N, 2 * m);
    const double B = ipow(r, 2 * m);
    const double D = A - B;
    return D * D * D / (A * A);
}

}  // namespace

void GaugeSpec::validate() const {
    if (m < 1) throw std::invalid_argument("gauge: m must be at least 1");
    if (!std::isfinite(M)) throw std::invalid_argument("gauge: M must be finite");
}

double s_m(const GaugeSpec& spec, const TimedPath& p, const TimedPath& q) {
    spec.validate();
    const Gap g = aligned_gap(p, q);
    return s_from(spec.m, g.N, g.r);
}

double upsilon(const GaugeSpec& spec, const TimedPath& p, const TimedPath& q) {
    spec.validate();
    const Gap g = aligned_gap(p, q);
    return s_from(spec.m, g.N, g.r) + spec.M * ipow(g.r, 2 * spec.m);
}

double upsilon_bar(const GaugeSpec& spec, const TimedPath& p, const TimedPath& q) {
    const double dt = p.time - q.time;
    return upsilon(spec, p, q) + dt * dt;
}

std::string to_string(GaugeKind k) {
    switch (k) {
        case GaugeKind::s_m: return "S";
        case GaugeKind::upsilon: return "Upsilon";
        case GaugeKind::upsilon_bar: return "UpsilonBar";
    }
    return "?";
}

AnchoredGauge::AnchoredGauge(GaugeSpec spec, TimedPath anchor, GaugeKind kind)
    : spec_(spec), anchor_(std::move(anchor)), kind_(kind),
      zero_anchor_(anchor_.path.sup_norm() == 0.0) {
    spec_.validate();
}

std::string AnchoredGauge::name() const {
    return to_string(kind_) + "[m=" + std::to_string(spec_.m) + ",M=" +
           std::to_string(spec_.M).substr(0, 4) + "]";
}

AnchoredGauge::Geometry AnchoredGauge::geometry(double t, const PathView& x) const {
    if (x.dim() != anchor_.path.dim()) throw std::invalid_argument("gauge: dimension mismatch");
    const double h = t - anchor_.time;
    if (h < 0.0) throw std::invalid_argument("gauge: evaluation time precedes the anchor time");
    Geometry g;
    if (zero_anchor_) {
        // a_{h} = 0, the aligned difference is x itself
        g.v = x.tip();
        g.open_norm = x.sup_norm_open();
    } else {
        const HistoryPath diff = difference(materialize(x), shift(anchor_.path, h));
        g.v = diff.tip();
        g.open_norm = diff.sup_norm_open();
    }
    g.r = g.v.norm();
    return g;
}

void AnchoredGauge::fill(double t, const Geometry& g, Jet& out, bool derivatives) const {
    const int m = spec_.m;
    const int d = static_cast<int>(g.v.size());
    const double N = std::max(g.open_norm, g.r);
    const double A = ipow(N, 2 * m);
    const double B = ipow(g.r, 2 * m);
    const bool with_power = kind_ != GaugeKind::s_m;
    const double tau = t - anchor_.time;

    out.value = s_from(m, N, g.r);
    if (with_power) out.value += spec_.M * B;
    if (kind_ == GaugeKind::upsilon_bar) out.value += tau * tau;
    if (!derivatives) return;

    out.dt = kind_ == GaugeKind::upsilon_bar ? 2.0 * tau : 0.0;
    out.dx = Eigen::VectorXd::Zero(d);
    out.dxx = Eigen::MatrixXd::Zero(d, d);
    const Eigen::MatrixXd vvT = g.v * g.v.transpose();
    if (g.r < g.open_norm) {
        const double D = A - B;
        const double inv = 1.0 / (A * A);
        const double r2m2 = ipow(g.r, 2 * m - 2);
        out.dx = -6.0 * m * D * D * r2m2 * inv * g.v;
        out.dxx = 24.0 * m * m * D * ipow(g.r, 4 * m - 4) * inv * vvT -
                  6.0 * m * D * D * r2m2 * inv * Eigen::MatrixXd::Identity(d, d);
        if (m >= 2) out.dxx -= 12.0 * m * (m - 1) * D * D * ipow(g.r, 2 * m - 4) * inv * vvT;
    }
    if (with_power) {
        const double r2m2 = ipow(g.r, 2 * m - 2);
        out.dx += spec_.M * 2.0 * m * r2m2 * g.v;
        out.dxx += spec_.M * 2.0 * m * r2m2 * Eigen::MatrixXd::Identity(d, d);
        if (m >= 2) out.dxx += spec_.M * 4.0 * m * (m - 1) * ipow(g.r, 2 * m - 4) * vvT;
    }
}

double AnchoredGauge::value(double t, const PathView& x) const {
    Jet j;
    fill(t, geometry(t, x), j, false);
    return j.value;
}

double AnchoredGauge::horizontal(double t, const PathView& x) const {
    if (t < anchor_.time) throw std::invalid_argument("gauge: evaluation time precedes the anchor time");
    (void)x;
    return kind_ == GaugeKind::upsilon_bar ? 2.0 * (t - anchor_.time) : 0.0;
}

void AnchoredGauge::gradient(double t, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const {
    Jet j;
    fill(t, geometry(t, x), j, true);
    out = j.dx;
}

void AnchoredGauge::hessian(double t, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const {
    Jet j;
    fill(t, geometry(t, x), j, true);
    out = j.dxx;
}

void AnchoredGauge::jet(double t, const PathView& x, Jet& out) const {
    fill(t, geometry(t, x), out, true);
}

double AnchoredGauge::smooth_radius(double t, const PathView& x) const {
    const Geometry g = geometry(t, x);
    return std::abs(g.open_norm - g.r);
}

double AnchoredGauge::relative_kink_distance(double t, const PathView& x) const {
    const Geometry g = geometry(t, x);
    const double scale = std::max(g.open_norm, g.r);
    return scale > 0.0 ? std::abs(g.open_norm - g.r) / scale : 0.0;
}

PowerDerivs power_term_derivs(int m, const Eigen::VectorXd& a0, const Eigen::VectorXd& v) {
    if (m < 1) throw std::invalid_argument("power term: m must be at least 1");
    if (a0.size() != v.size()) throw std::invalid_argument("power term: dimension mismatch");
    const int d = static_cast<int>(v.size());
    const Eigen::VectorXd w = v - a0;
    const double r = w.norm();
    const double r2m2 = ipow(r, 2 * m - 2);
    PowerDerivs out;
    out.dx = 2.0 * m * r2m2 * w;
    out.dxx = 2.0 * m * r2m2 * Eigen::MatrixXd::Identity(d, d);
    if (m >= 2) out.dxx += 4.0 * m * (m - 1) * ipow(r, 2 * m - 4) * w * w.transpose();
    return out;
}

PowerTerm::PowerTerm(int m, Eigen::VectorXd a0) : m_(m), a0_(std::move(a0)) {
    if (m_ < 1) throw std::invalid_argument("power term: m must be at least 1");
}

std::string PowerTerm::name() const { return "Power[m=" + std::to_string(m_) + "]"; }

double PowerTerm::value(double, const PathView& x) const {
    return ipow((x.tip() - a0_).norm(), 2 * m_);
}

void PowerTerm::gradient(double, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const {
    out = power_term_derivs(m_, a0_, x.tip()).dx;
}

void PowerTerm::hessian(double, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const {
    out = power_term_derivs(m_, a0_, x.tip()).dxx;
}

Eigen::VectorXd grad_s_m(const AnchoredGauge& g, const TimedPath& p) {
    const AnchoredGauge s(g.spec(), g.anchor(), GaugeKind::s_m);
    return s.jet(p).dx;
}

Eigen::MatrixXd hess_s_m(const AnchoredGauge& g, const TimedPath& p) {
    const AnchoredGauge s(g.spec(), g.anchor(), GaugeKind::s_m);
    return s.jet(p).dxx;
}

Jet full_upsilon_derivs(const AnchoredGauge& g, const TimedPath& p) { return g.jet(p); }

std::pair<TimedPath, TimedPath> counterexample_pair(int n) {
    if (n < 1) throw std::invalid_argument("counterexample: n must be positive");
    const double k = static_cast<double>(n);
    TimedPath x(0.0, HistoryPath::piecewise_linear_1d({-1.0 / k, 0.0}, {0.0, 1.0}));
    TimedPath y(1.0 / k, HistoryPath::piecewise_linear_1d({-2.0 / k, -1.0 / k, 0.0}, {0.0, 1.0, 1.0}));
    return {std::move(x), std::move(y)};
}

namespace {

// Evaluates lhs <= rhs per sample and summarizes.
GaugeCheckRow summarize(std::string name, int m, double M, const std::vector<double>& lhs,
                        const std::vector<double>& rhs, double tol) {
    GaugeCheckRow row;
    row.check = std::move(name);
    row.m = m;
    row.M = M;
    row.samples = lhs.size();
    row.worst_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double scale = std::max({std::abs(lhs[i]), std::abs(rhs[i]), 1.0});
        const double slack = (rhs[i] - lhs[i]) / scale;
        row.worst_slack = std::min(row.worst_slack, slack);
        if (slack < -tol) ++row.violations;
    }
    return row;
}

}  // namespace

std::vector<GaugeCheckRow> gauge_verify(const GaugeVerifyOptions& opt) {
    if (opt.samples < 1) throw std::invalid_argument("gauge_verify: samples must be positive");
    const std::size_t n = opt.samples;
    const RandomPathSpec spec;
    const HistoryPath zero = HistoryPath::zero(1, spec.left_horizon);
    std::vector<GaugeCheckRow> rows;

    for (int m : opt.ms) {
        for (double M : opt.Ms) {
            const GaugeSpec g{m, M};
            g.validate();
            std::vector<double> lo_l(n), lo_r(n), up_l(n), up_r(n), sub_l(n), sub_r(n);
            parallel_for(n, opt.threads, [&](std::size_t i) {
                RandomStream rng(opt.seed, StreamTag::probes, i);
                const HistoryPath x = random_path(rng, spec);
                const HistoryPath y = random_path(rng, spec);
                const TimedPath origin(0.0, zero);
                auto ups = [&](const HistoryPath& p) { return upsilon(g, TimedPath(0.0, p), origin); };
                const double ux = ups(x);
                const double A = ipow(x.sup_norm(), 2 * m);
                lo_l[i] = A;
                lo_r[i] = ux;
                up_l[i] = ux;
                up_r[i] = M * A;
                sub_l[i] = ups(sum(x, y));
                sub_r[i] = ipow(2.0, 2 * m - 1) * (ux + ups(y));
            });
            if (M >= 3.0) {
                rows.push_back(summarize("norm_bound_lower", m, M, lo_l, lo_r, opt.tol));
                rows.push_back(summarize("norm_bound_upper", m, M, up_l, up_r, opt.tol));
                rows.push_back(summarize("subadditivity", m, M, sub_l, sub_r, opt.tol));
            }
        }
    }

    // gauge lower bound and the d_inf implication for the default (3, 3)
    const GaugeSpec g3{};
    std::vector<double> gl_l(n), gl_r(n), di_l(n), di_r(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        RandomStream rng(opt.seed, StreamTag::probes, i, 1);
        const TimedPath p(rng.uniform(0.0, 2.0), random_path(rng, spec));
        const TimedPath q(rng.uniform(0.0, 2.0), random_path(rng, spec));
        const HistoryPath diff = aligned_difference(p, q);
        const double dt = p.time - q.time;
        gl_l[i] = ipow(diff.sup_norm(), 6) + dt * dt;
        gl_r[i] = upsilon_bar(g3, p, q);

        // nearby pair at a random scale so the implication is not vacuous
        const double eps = std::pow(10.0, -rng.uniform(0.0, 4.0));
        const TimedPath q2(p.time + eps * rng.uniform(0.0, 1.0),
                           sum(p.path, random_path(rng, spec).scaled(eps)));
        const double delta = upsilon_bar(g3, p, q2);
        di_l[i] = d_infinity(p, q2);
        di_r[i] = std::pow(delta, 1.0 / 6.0) + std::sqrt(delta);
    });
    rows.push_back(summarize("gauge_lower_bound", g3.m, g3.M, gl_l, gl_r, opt.tol));
    rows.push_back(summarize("dinf_implication", g3.m, g3.M, di_l, di_r, opt.tol));

    const auto cn = static_cast<std::size_t>(std::max(opt.counterexample_n, 1));
    std::vector<double> cu_l(cn), cu_r(cn), cn_l(cn), cn_r(cn);
    for (std::size_t k = 1; k <= cn; ++k) {
        const auto [x, y] = counterexample_pair(static_cast<int>(k));
        cu_l[k - 1] = upsilon_bar(g3, x, y);
        cu_r[k - 1] = 1.0 / static_cast<double>(k);
        cn_l[k - 1] = 1.0;
        cn_r[k - 1] = norm1_distance(x, y);
    }
    rows.push_back(summarize("counterexample_upsilon_bar", g3.m, g3.M, cu_l, cu_r, 0.0));
    rows.push_back(summarize("counterexample_norm1", g3.m, g3.M, cn_l, cn_r, 0.0));
    return rows;
}

DerivativeSuiteReport derivative_suite(const DerivativeSuiteOptions& opt) {
    DerivativeSuiteReport rep;
    rep.probes.resize(opt.probes);
    parallel_for(opt.probes, opt.threads, [&](std::size_t i) {
        RandomStream rng(opt.seed, StreamTag::probes, i);
        RandomPathSpec spec;
        spec.dim = 1 + static_cast<int>(i % 2);
        spec.nodes = 16;
        spec.left_horizon = 2.0;
        spec.amplitude = 1.0;
        const int m = 1 + static_cast<int>((i / 2) % 3);
        const int kind = static_cast<int>((i / 6) % 4);
        const TimedPath anchor(rng.uniform(0.0, 1.0), random_path(rng, spec));
        Eigen::VectorXd jump(spec.dim);
        for (int k = 0; k < spec.dim; ++k) jump[k] = rng.normal();
        const TimedPath point(anchor.time + rng.uniform(0.0, 1.0), random_path(rng, spec).bumped(jump));

        DerivativeProbe& pr = rep.probes[i];
        pr.index = i;
        pr.point = point;
        const GaugeSpec g{m, 3.0};
        std::unique_ptr<FunctionalWithDerivatives> f;
        if (kind == 3) {
            f = std::make_unique<PowerTerm>(m, anchor.path.tip());
            pr.kink_distance = std::numeric_limits<double>::infinity();
        } else {
            const auto k = kind == 0 ? GaugeKind::s_m : kind == 1 ? GaugeKind::upsilon : GaugeKind::upsilon_bar;
            auto gauge = std::make_unique<AnchoredGauge>(g, anchor, k);
            pr.kink_distance = gauge->relative_kink_distance(point.time, point.path.view());
            f = std::move(gauge);
        }
        pr.functional = f->name();
        if (pr.kink_distance < opt.kink_threshold) {
            pr.kink_filtered = true;
            return;
        }
        pr.rows = compare_derivatives(*f, point, opt.check);
        pr.pass = std::all_of(pr.rows.begin(), pr.rows.end(), [](const auto& r) { return r.pass; });
    });
    for (const auto& pr : rep.probes) {
        if (pr.kink_filtered) {
            ++rep.kink_filtered;
            continue;
        }
        ++rep.compared;
        if (pr.pass) ++rep.passed;
        else ++rep.failed;
    }
    return rep;
}

}  // namespace delayhjb
