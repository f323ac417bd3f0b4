#include "delayhjb/hjb.hpp"

#include "delayhjb/control.hpp"
#include "delayhjb/fixtures.hpp"
#include "delayhjb/parallel.hpp"
#include "delayhjb/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace delayhjb {

HamiltonianValue hamiltonian(const PathView& x, const Eigen::Ref<const Eigen::VectorXd>& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& l, const Coefficients& coeffs,
                             std::span<const Control> controls) {
    if (controls.empty()) throw std::invalid_argument("hamiltonian: empty control set");
    const int d = coeffs.state_dim();
    const int n = coeffs.noise_dim();
    if (p.size() != d || l.rows() != d || l.cols() != d)
        throw std::invalid_argument("hamiltonian: p / l dimension mismatch");
    const double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
    if ((l - l.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument("hamiltonian: l must be symmetric");

    Eigen::VectorXd b(d);
    Eigen::MatrixXd sg(d, n);
    HamiltonianValue best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < controls.size(); ++i) {
        const Control u = controls[i];
        coeffs.drift(x, u, b);
        coeffs.diffusion(x, u, sg);
        const double h = p.dot(b) + 0.5 * (l * sg * sg.transpose()).trace() + coeffs.running_cost(x, u);
        if (h < best.value) {
            best.value = h;
            best.argmin = u;
            best.index = i;
        }
    }
    return best;
}

double generator(const FunctionalWithDerivatives& phi, double s, const PathView& x, Control u,
                 const Coefficients& coeffs) {
    if (!phi.has_derivatives()) throw MissingDerivative("generator: '" + phi.name() + "' has no derivatives");
    Jet jet;
    phi.jet(s, x, jet);
    Eigen::VectorXd b(coeffs.state_dim());
    Eigen::MatrixXd sg(coeffs.state_dim(), coeffs.noise_dim());
    coeffs.drift(x, u, b);
    coeffs.diffusion(x, u, sg);
    return generator_terms(jet, b, sg).total();
}

HJBResidualReport classical_residual(const FunctionalWithDerivatives& v, const HistoryPath& x, double t,
                                     const ControlProblem& problem) {
    problem.check_structure();
    if (!v.has_derivatives())
        throw MissingDerivative("classical_residual: '" + v.name() + "' has no derivatives");
    const PathView view = x.view();
    Jet jet;
    v.jet(t, view, jet);
    const HamiltonianValue h = hamiltonian(view, jet.dx, jet.dxx, *problem.coeffs, problem.control_set);
    HJBResidualReport rep;
    rep.probe = TimedPath(t, x);
    rep.lambda_term = -problem.lambda * jet.value;
    rep.dt_term = jet.dt;
    rep.hamiltonian = h.value;
    rep.control = h.argmin;
    rep.residual = rep.recomputed();
    return rep;
}

FunctionalFromFns riccati_functional(double lambda, double sigma) {
    const Riccati ric(lambda, sigma);
    return FunctionalFromFns(
        "riccati",
        [ric](double, const PathView& x) { return ric.value(x.tip(0)); },
        [](double, const PathView&) { return 0.0; },
        [ric](double, const PathView& x, Eigen::Ref<Eigen::VectorXd> g) { g[0] = ric.gradient(x.tip(0)); },
        [ric](double, const PathView&, Eigen::Ref<Eigen::MatrixXd> h) { h(0, 0) = ric.hessian(); });
}

ViscosityReport viscosity_probe(const PathFunctional& w, const FunctionalWithDerivatives& phi,
                                const TimedPath& probe, const ControlProblem& problem,
                                std::span<const TimedPath> samples, ViscositySide side, double tol) {
    problem.check_structure();
    if (!phi.has_derivatives())
        throw MissingDerivative("viscosity_probe: '" + phi.name() + "' has no derivatives");
    const bool sub = side == ViscositySide::sub;
    const double sign = sub ? 1.0 : -1.0;

    ViscosityReport rep;
    rep.side = side;
    rep.samples = samples.size();
    const double w0 = w(probe);
    rep.touching_gap = sub ? w0 - phi.value(probe) : w0 + phi.value(probe);
    rep.membership_margin = -std::numeric_limits<double>::infinity();
    for (const auto& y : samples) {
        if (y.time < probe.time) continue;  // the test class lives on [t, inf)
        const double m = sub ? w(y) - phi.value(y) : -(w(y) + phi.value(y));
        rep.membership_margin = std::max(rep.membership_margin, m);
    }
    if (rep.samples == 0) rep.membership_margin = 0.0;
    rep.membership_ok = std::abs(rep.touching_gap) <= tol && rep.membership_margin <= tol;

    Jet jet = phi.jet(probe);
    const HamiltonianValue h = hamiltonian(probe.path.view(), sign * jet.dx, sign * jet.dxx,
                                           *problem.coeffs, problem.control_set);
    rep.inequality = -problem.lambda * w0 + sign * jet.dt + h.value;
    rep.inequality_ok = sub ? rep.inequality >= -tol : rep.inequality <= tol;
    return rep;
}

namespace {

// same path with the endpoint kept and the rest moved
HistoryPath endpoint_preserving_perturbation(const HistoryPath& x, RandomStream& rng) {
    RandomPathSpec spec;
    spec.dim = x.dim();
    spec.left_horizon = x.left_horizon();
    spec.nodes = 9;
    spec.amplitude = 1.0;
    const HistoryPath g = random_path(rng, spec);
    std::vector<double> nodes = g.nodes();
    std::vector<Eigen::VectorXd> vals;
    for (std::size_t j = 0; j < g.size(); ++j) vals.emplace_back(g.right(j));
    vals.back().setZero();
    // keep a nonzero value close to 0 so the perturbation is visible just before the tip
    nodes.insert(nodes.end() - 1, -1e-3);
    vals.insert(vals.end() - 1, Eigen::VectorXd::Constant(x.dim(), rng.uniform(0.5, 1.0)));
    return sum(x, HistoryPath::piecewise_linear(std::move(nodes), vals));
}

}  // namespace

ReducedProblem reduce_no_delay(const ControlProblem& problem, std::size_t probes, std::uint64_t seed) {
    problem.check_structure();
    const auto& c = *problem.coeffs;
    const int d = c.state_dim();
    const int n = c.noise_dim();
    double worst = 0.0;
    RandomPathSpec spec;
    spec.dim = d;
    spec.left_horizon = problem.history_horizon;
    spec.nodes = 17;
    Eigen::VectorXd b1(d), b2(d);
    Eigen::MatrixXd s1(d, n), s2(d, n);
    for (std::size_t i = 0; i < probes; ++i) {
        RandomStream rng(seed, StreamTag::probes, i);
        const HistoryPath x = random_path(rng, spec);
        const HistoryPath y = endpoint_preserving_perturbation(x, rng);
        for (Control u : problem.control_set) {
            c.drift(x.view(), u, b1);
            c.drift(y.view(), u, b2);
            c.diffusion(x.view(), u, s1);
            c.diffusion(y.view(), u, s2);
            const double q1 = c.running_cost(x.view(), u);
            const double q2 = c.running_cost(y.view(), u);
            const double scale = 1.0 + std::max({b1.norm(), s1.norm(), std::abs(q1)});
            const double dev = std::max({(b1 - b2).norm(), (s1 - s2).norm(), std::abs(q1 - q2)}) / scale;
            worst = std::max(worst, dev);
        }
    }
    if (worst > 1e-12)
        throw NotPointDependent("reduce_no_delay: coefficients of '" + c.name() +
                                "' depend on the history beyond x(0) (relative change " +
                                std::to_string(worst) + ")");

    ReducedProblem r;
    r.dim = d;
    r.lambda = problem.lambda;
    r.control_set = problem.control_set;
    r.probe_deviation = worst;
    r.probes = probes;
    const auto coeffs = problem.coeffs;
    const double horizon = problem.history_horizon;
    r.drift = [coeffs, horizon](const Eigen::VectorXd& z, Control u) {
        Eigen::VectorXd b(coeffs->state_dim());
        coeffs->drift(exponential_embedding(z, horizon).view(), u, b);
        return b;
    };
    r.diffusion = [coeffs, horizon](const Eigen::VectorXd& z, Control u) {
        Eigen::MatrixXd s(coeffs->state_dim(), coeffs->noise_dim());
        coeffs->diffusion(exponential_embedding(z, horizon).view(), u, s);
        return s;
    };
    r.cost = [coeffs, horizon](const Eigen::VectorXd& z, Control u) {
        return coeffs->running_cost(exponential_embedding(z, horizon).view(), u);
    };
    return r;
}

EmbeddingCheck embedding_check(const ControlProblem& problem, const ValueConfig& cfg,
                               const Eigen::VectorXd& z, std::uint64_t seed) {
    const HistoryPath x = exponential_embedding(z, problem.history_horizon);
    RandomStream rng(seed, StreamTag::probes, 0, 1);
    const HistoryPath y = endpoint_preserving_perturbation(x, rng);
    const ValueEstimate vx = value_V(x, problem, cfg);
    const ValueEstimate vy = value_V(y, problem, cfg);
    EmbeddingCheck chk;
    chk.value_embedded = vx.value;
    chk.value_other = vy.value;
    chk.difference = vx.value - vy.value;
    chk.std_error = std::hypot(vx.std_error, vy.std_error);
    chk.pass = chk.difference == 0.0 || std::abs(chk.difference) <= 3.0 * chk.std_error;
    return chk;
}

StabilityReport stability_experiment(const ControlProblem& base, const ProblemFamily& family,
                                     const std::vector<double>& eps_ladder, const ValueConfig& cfg,
                                     std::span<const HistoryPath> xs, std::size_t coeff_samples,
                                     std::uint64_t seed) {
    base.check_structure();
    if (xs.empty()) throw std::invalid_argument("stability_experiment: no sample histories");
    std::vector<ValueEstimate> base_values;
    for (const auto& x : xs) base_values.push_back(value_V(x, base, cfg));
    const auto base_family = control_family(base);

    const auto& c0 = *base.coeffs;
    const int d = c0.state_dim();
    const int n = c0.noise_dim();
    RandomPathSpec spec;
    spec.dim = d;
    spec.left_horizon = base.history_horizon;
    spec.nodes = 17;

    StabilityReport rep;
    for (double eps : eps_ladder) {
        const ControlProblem pert = family(eps);
        pert.check_structure();
        StabilityRow row;
        row.eps = eps;
        Eigen::VectorXd b1(d), b2(d);
        Eigen::MatrixXd s1(d, n), s2(d, n);
        for (std::size_t i = 0; i < coeff_samples; ++i) {
            RandomStream rng(seed, StreamTag::probes, i, 2);
            const HistoryPath x = random_path(rng, spec);
            for (Control u : base.control_set) {
                c0.drift(x.view(), u, b1);
                pert.coeffs->drift(x.view(), u, b2);
                c0.diffusion(x.view(), u, s1);
                pert.coeffs->diffusion(x.view(), u, s2);
                const double dq = std::abs(c0.running_cost(x.view(), u) - pert.coeffs->running_cost(x.view(), u));
                row.coeff_distance = std::max({row.coeff_distance, (b1 - b2).norm(), (s1 - s2).norm(), dq});
            }
        }
        const auto pert_family = control_family(pert);
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const ValueEstimate ve = value_V(xs[k], pert, cfg);
            const double dist = std::abs(ve.value - base_values[k].value);
            if (dist >= row.value_distance) {
                row.value_distance = dist;
                // paired standard error of the difference on the shared paths
                const auto a = simulate_costs(xs[k], pert_family[ve.control_index].law, pert, cfg, cfg.tag,
                                              cfg.sim.paths);
                const auto b = simulate_costs(xs[k], base_family[base_values[k].control_index].law, base, cfg,
                                              cfg.tag, cfg.sim.paths);
                std::vector<double> diff(a.costs.size());
                for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.costs[i] - b.costs[i];
                row.value_se = sample_stats(diff).std_error;
            }
            row.quadrature_weight = ve.quadrature_weight;
            row.tail_bound = std::max(row.tail_bound, ve.tail_bound);
        }
        rep.rows.push_back(row);
    }
    std::vector<StabilityRow> sorted = rep.rows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.eps > b.eps; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].value_distance > sorted[i - 1].value_distance) rep.monotone = false;
    return rep;
}

namespace {

ControlProblem with_coefficients(const ControlProblem& base, std::shared_ptr<const Coefficients> c) {
    ControlProblem p = base;
    p.coeffs = std::move(c);
    return p;
}

FunctionCoefficients::Spec forwarding_spec(const std::shared_ptr<const Coefficients>& c) {
    FunctionCoefficients::Spec s;
    s.name = c->name();
    s.state_dim = c->state_dim();
    s.noise_dim = c->noise_dim();
    s.lipschitz = c->lipschitz_constant();
    s.growth = c->cost_growth();
    s.memory_rate = c->memory_rate();
    s.drift = [c](const PathView& x, Control u, Eigen::Ref<Eigen::VectorXd> b) { c->drift(x, u, b); };
    s.diffusion = [c](const PathView& x, Control u, Eigen::Ref<Eigen::MatrixXd> sg) { c->diffusion(x, u, sg); };
    s.cost = [c](const PathView& x, Control u) { return c->running_cost(x, u); };
    return s;
}

}  // namespace

ProblemFamily cost_shift_family(const ControlProblem& base) {
    return [base](double eps) {
        if (eps == 0.0) return base;
        auto s = forwarding_spec(base.coeffs);
        s.name += "+q" + std::to_string(eps);
        const auto c = base.coeffs;
        s.cost = [c, eps](const PathView& x, Control u) { return c->running_cost(x, u) + eps; };
        return with_coefficients(base, std::make_shared<FunctionCoefficients>(std::move(s)));
    };
}

ProblemFamily drift_shift_family(const ControlProblem& base) {
    return [base](double eps) {
        if (eps == 0.0) return base;
        auto s = forwarding_spec(base.coeffs);
        s.name += "+b" + std::to_string(eps);
        const auto c = base.coeffs;
        s.drift = [c, eps](const PathView& x, Control u, Eigen::Ref<Eigen::VectorXd> b) {
            c->drift(x, u, b);
            b.array() += eps;
        };
        return with_coefficients(base, std::make_shared<FunctionCoefficients>(std::move(s)));
    };
}

}  // namespace delayhjb
