#include "delayhjb/calculus.hpp"

#include "delayhjb/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace delayhjb {

double FunctionalWithDerivatives::horizontal(double, const PathView&) const {
    throw MissingDerivative(name() + ": no horizontal derivative");
}

void FunctionalWithDerivatives::gradient(double, const PathView&, Eigen::Ref<Eigen::VectorXd>) const {
    throw MissingDerivative(name() + ": no vertical gradient");
}

void FunctionalWithDerivatives::hessian(double, const PathView&, Eigen::Ref<Eigen::MatrixXd>) const {
    throw MissingDerivative(name() + ": no vertical Hessian");
}

void FunctionalWithDerivatives::jet(double t, const PathView& x, Jet& out) const {
    const int d = x.dim();
    out.value = value(t, x);
    out.dt = horizontal(t, x);
    out.dx.resize(d);
    out.dxx.resize(d, d);
    gradient(t, x, out.dx);
    hessian(t, x, out.dxx);
}

Jet FunctionalWithDerivatives::jet(const TimedPath& p) const {
    Jet j;
    jet(p.time, p.path.view(), j);
    return j;
}

FunctionalFromFns::FunctionalFromFns(std::string name, ValueFn value, ValueFn dt, GradFn dx,
                                     HessFn dxx)
    : name_(std::move(name)), value_(std::move(value)), dt_(std::move(dt)), dx_(std::move(dx)),
      dxx_(std::move(dxx)) {
    if (!value_) throw std::invalid_argument("functional: value callable is required");
}

double FunctionalFromFns::horizontal(double t, const PathView& x) const {
    if (!dt_) return FunctionalWithDerivatives::horizontal(t, x);
    return dt_(t, x);
}

void FunctionalFromFns::gradient(double t, const PathView& x, Eigen::Ref<Eigen::VectorXd> out) const {
    if (!dx_) return FunctionalWithDerivatives::gradient(t, x, out);
    dx_(t, x, out);
}

void FunctionalFromFns::hessian(double t, const PathView& x, Eigen::Ref<Eigen::MatrixXd> out) const {
    if (!dxx_) return FunctionalWithDerivatives::hessian(t, x, out);
    dxx_(t, x, out);
}

FunctionalFromFns constant_functional(double c, int dim) {
    (void)dim;
    return FunctionalFromFns(
        "constant", [c](double, const PathView&) { return c; },
        [](double, const PathView&) { return 0.0; },
        [](double, const PathView&, Eigen::Ref<Eigen::VectorXd> g) { g.setZero(); },
        [](double, const PathView&, Eigen::Ref<Eigen::MatrixXd> h) { h.setZero(); });
}

FunctionalFromFns time_functional(int dim) {
    (void)dim;
    return FunctionalFromFns(
        "time", [](double t, const PathView&) { return t; },
        [](double, const PathView&) { return 1.0; },
        [](double, const PathView&, Eigen::Ref<Eigen::VectorXd> g) { g.setZero(); },
        [](double, const PathView&, Eigen::Ref<Eigen::MatrixXd> h) { h.setZero(); });
}

FunctionalFromFns endpoint_square(int dim) {
    (void)dim;
    return FunctionalFromFns(
        "endpoint_square", [](double, const PathView& x) { return x.tip().squaredNorm(); },
        [](double, const PathView&) { return 0.0; },
        [](double, const PathView& x, Eigen::Ref<Eigen::VectorXd> g) { g = 2.0 * x.tip(); },
        [](double, const PathView&, Eigen::Ref<Eigen::MatrixXd> h) { h.setIdentity(); h *= 2.0; });
}

double default_horizontal_step(const TimedPath& p) { return 1e-4 * std::max(1.0, p.time); }
double default_vertical_step(const TimedPath& p) { return 1e-4 * std::max(1.0, p.path.sup_norm()); }

namespace {

double checked_step(double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite differences: h must be positive");
    return h;
}

double forward_quotient(const FunctionalWithDerivatives& f, const TimedPath& p, double h, double f0) {
    const HistoryPath xh = shift(p.path, h);
    return (f.value(p.time + h, xh.view()) - f0) / h;
}

Eigen::VectorXd central_gradient(const FunctionalWithDerivatives& f, const TimedPath& p, double h) {
    const int d = p.path.dim();
    Eigen::VectorXd g(d);
    for (int i = 0; i < d; ++i) {
        const double up = f.value(p.time, p.path.bumped(i, h).view());
        const double dn = f.value(p.time, p.path.bumped(i, -h).view());
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

// Raw (unsymmetrized) stencil: A(i,j) bumps coordinate i first.
Eigen::MatrixXd hessian_stencil(const FunctionalWithDerivatives& f, const TimedPath& p, double h) {
    const int d = p.path.dim();
    const double f0 = f.value(p.time, p.path.view());
    Eigen::MatrixXd a(d, d);
    auto at = [&](int i, double hi, int j, double hj) {
        return f.value(p.time, p.path.bumped(i, hi).bumped(j, hj).view());
    };
    for (int i = 0; i < d; ++i) {
        const double up = f.value(p.time, p.path.bumped(i, h).view());
        const double dn = f.value(p.time, p.path.bumped(i, -h).view());
        a(i, i) = (up - 2.0 * f0 + dn) / (h * h);
        for (int j = 0; j < d; ++j) {
            if (j == i) continue;
            a(i, j) = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) /
                      (4.0 * h * h);
        }
    }
    return a;
}

}  // namespace

double horizontal_fd(const FunctionalWithDerivatives& f, const TimedPath& p, FdOptions opt) {
    const double h = checked_step(opt.h > 0.0 ? opt.h : default_horizontal_step(p));
    const double f0 = f.value(p);
    const double d1 = forward_quotient(f, p, h, f0);
    if (!opt.richardson) return d1;
    const double d2 = forward_quotient(f, p, 0.5 * h, f0);
    return 2.0 * d2 - d1;
}

Eigen::VectorXd vertical_grad_fd(const FunctionalWithDerivatives& f, const TimedPath& p, FdOptions opt) {
    const double h = checked_step(opt.h > 0.0 ? opt.h : default_vertical_step(p));
    const Eigen::VectorXd g1 = central_gradient(f, p, h);
    if (!opt.richardson) return g1;
    const Eigen::VectorXd g2 = central_gradient(f, p, 0.5 * h);
    return (4.0 * g2 - g1) / 3.0;
}

HessianFd vertical_hess_fd(const FunctionalWithDerivatives& f, const TimedPath& p, FdOptions opt) {
    const double h = checked_step(opt.h > 0.0 ? opt.h : default_vertical_step(p));
    Eigen::MatrixXd a = hessian_stencil(f, p, h);
    if (opt.richardson) a = (4.0 * hessian_stencil(f, p, 0.5 * h) - a) / 3.0;
    HessianFd out;
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    out.asymmetry = (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
    out.matrix = 0.5 * (a + a.transpose());
    return out;
}

std::vector<DerivativeComparison> compare_derivatives(const FunctionalWithDerivatives& f,
                                                      const TimedPath& p,
                                                      const DerivativeCheckOptions& opt) {
    const Jet jet = f.jet(p);
    double hg = opt.grad_step_factor * default_vertical_step(p);
    double hh = opt.hess_step_factor * default_vertical_step(p);
    const double radius = f.smooth_radius(p.time, p.path.view());
    if (std::isfinite(radius)) {
        hg = std::min(hg, opt.radius_fraction * radius);
        hh = std::min(hh, opt.radius_fraction * radius);
    }
    const double ht = default_horizontal_step(p);

    std::vector<DerivativeComparison> rows;
    auto finish = [&](std::string name, Eigen::MatrixXd analytic, Eigen::MatrixXd fd,
                      Eigen::MatrixXd fd_half, double step) {
        DerivativeComparison c;
        c.quantity = std::move(name);
        c.abs_err = (analytic - fd_half).norm();
        const double scale = analytic.norm();
        c.rel_err = scale > 0.0 ? c.abs_err / scale : c.abs_err;
        c.convergence = (fd - fd_half).norm();
        c.pass = c.abs_err <= std::max(opt.rel_tol * scale, opt.abs_floor);
        c.analytic = std::move(analytic);
        c.fd = std::move(fd_half);
        c.step = step;
        rows.push_back(std::move(c));
    };

    {
        Eigen::MatrixXd a(1, 1), f1(1, 1), f2(1, 1);
        a(0, 0) = jet.dt;
        f1(0, 0) = horizontal_fd(f, p, {ht, true});
        f2(0, 0) = horizontal_fd(f, p, {0.5 * ht, true});
        finish("dt", a, f1, f2, 0.5 * ht);
    }
    if (hg > 0.0) {
        finish("dx", jet.dx, vertical_grad_fd(f, p, {hg, true}),
               vertical_grad_fd(f, p, {0.5 * hg, true}), 0.5 * hg);
        finish("dxx", jet.dxx, vertical_hess_fd(f, p, {hh, true}).matrix,
               vertical_hess_fd(f, p, {0.5 * hh, true}).matrix, 0.5 * hh);
    } else {
        // sitting on the kink: no admissible step, nothing to compare
        for (const auto& [q, analytic] : {std::pair<const char*, Eigen::MatrixXd>{"dx", jet.dx},
                                          std::pair<const char*, Eigen::MatrixXd>{"dxx", jet.dxx}}) {
            DerivativeComparison c;
            c.quantity = q;
            c.analytic = analytic;
            c.fd = Eigen::MatrixXd::Constant(analytic.rows(), analytic.cols(), std::nan(""));
            rows.push_back(std::move(c));
        }
    }
    return rows;
}

GeneratorTerms generator_terms(const Jet& jet, const Eigen::Ref<const Eigen::VectorXd>& drift,
                               const Eigen::Ref<const Eigen::MatrixXd>& vol) {
    GeneratorTerms g;
    g.dt_term = jet.dt;
    g.drift_term = jet.dx.dot(drift);
    g.diffusion_term = 0.5 * (jet.dxx * vol * vol.transpose()).trace();
    return g;
}

double ito_residual(const FunctionalWithDerivatives& f, const Trajectory& traj) {
    if (!f.has_derivatives())
        throw MissingDerivative(f.name() + ": ito_residual needs all three derivatives");
    const std::size_t steps = traj.steps();
    const double dt = traj.dt();
    const int d = traj.state_dim();
    const int n = traj.noise_dim();
    Jet jet;
    jet.dx.resize(d);
    jet.dxx.resize(d, d);
    double integral = 0.0;
    double stochastic = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        f.jet(traj.time(k), traj.history_view(k), jet);
        const Eigen::Map<const Eigen::VectorXd> b(traj.drift(k).data(), d);
        const auto vol = traj.vol(k);
        integral += generator_terms(jet, b, vol).total() * dt;
        const Eigen::Map<const Eigen::VectorXd> dw(traj.increment(k).data(), n);
        stochastic += jet.dx.dot(vol * dw);
    }
    const double start = f.value(traj.time(0), traj.history_view(0));
    const double end = f.value(traj.time(steps), traj.history_view(steps));
    return end - start - integral - stochastic;
}

ItoStats ito_check(const FunctionalWithDerivatives& f, const Coefficients& coeffs,
                   const HistoryPath& xi, const ControlLaw& control, const SimConfig& cfg) {
    cfg.validate();
    const std::size_t steps = cfg.steps();
    std::vector<double> res(cfg.paths);
    const std::size_t blocks = std::min<std::size_t>(cfg.paths, 64);
    parallel_for(blocks, cfg.threads, [&](std::size_t b) {
        EulerSimulator sim(coeffs);
        Trajectory traj;
        for (std::size_t i = b * cfg.paths / blocks; i < (b + 1) * cfg.paths / blocks; ++i) {
            RandomStream rng(cfg.seed, StreamTag::paths, i);
            sim.run(xi, 0.0, cfg.dt, steps, control, rng, traj);
            res[i] = ito_residual(f, traj);
        }
    });
    std::vector<double> abs_res(res.size());
    std::transform(res.begin(), res.end(), abs_res.begin(), [](double r) { return std::abs(r); });
    const SampleStats s = sample_stats(res);
    const SampleStats a = sample_stats(abs_res);
    return {cfg.dt, cfg.paths, s.mean, s.std_error, a.mean, a.std_error};
}

}  // namespace delayhjb
