#include "delayhjb/control.hpp"

#include "delayhjb/fixtures.hpp"
#include "delayhjb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace delayhjb {

void ControlProblem::check_structure() const {
    if (!coeffs) throw std::invalid_argument("control problem: coefficients missing");
    if (!(lambda > 0.0)) throw std::invalid_argument("control problem: lambda must be positive");
    if (control_set.empty()) throw std::invalid_argument("control problem: empty control set");
    if (switching_grid.empty() || switching_grid.front() != 0.0)
        throw std::invalid_argument("control problem: switching grid must start at 0");
    for (std::size_t i = 1; i < switching_grid.size(); ++i)
        if (!(switching_grid[i] > switching_grid[i - 1]))
            throw std::invalid_argument("control problem: switching grid must be increasing");
    if (!(history_horizon > 0.0)) throw std::invalid_argument("control problem: history horizon must be positive");
}

ProblemValidation validate_problem(const ControlProblem& problem, std::size_t probe_pairs,
                                   std::uint64_t seed) {
    problem.check_structure();
    ProblemValidation v;
    const double L = problem.coeffs->lipschitz_constant();
    v.theta = theta_threshold(L);
    v.lambda_min_uniqueness = lambda_uniqueness(L);
    v.lambda_above_theta = problem.lambda > v.theta;
    v.lambda_above_uniqueness = problem.lambda >= v.lambda_min_uniqueness;
    v.probe = lipschitz_probe(*problem.coeffs, probe_pairs, seed, problem.control_set);
    v.hypothesis_probe_ok = !v.probe.violation;
    return v;
}

ControlLaw feedback_law(double gain, std::vector<Control> actions) {
    if (actions.empty()) throw std::invalid_argument("feedback_law: no actions");
    return [gain, actions = std::move(actions)](double, const PathView& x) {
        const double target = -gain * x.tip(0);
        Control best = actions.front();
        double gap = std::abs(best - target);
        for (Control a : actions) {
            const double g = std::abs(a - target);
            if (g < gap) {
                gap = g;
                best = a;
            }
        }
        return best;
    };
}

std::vector<ControlCandidate> control_family(const ControlProblem& problem, double until) {
    problem.check_structure();
    std::vector<double> grid;
    for (double s : problem.switching_grid)
        if (s < until) grid.push_back(s);
    const std::size_t k = problem.control_set.size();
    double count = std::pow(static_cast<double>(k), static_cast<double>(grid.size()));
    if (count > 1e5) throw std::invalid_argument("control family too large (" + std::to_string(count) + " sequences)");

    std::vector<ControlCandidate> family;
    const auto total = static_cast<std::size_t>(count);
    for (std::size_t code = 0; code < total; ++code) {
        std::vector<Control> seq(grid.size());
        std::size_t c = code;
        std::ostringstream label;
        label << "open:";
        for (std::size_t j = 0; j < grid.size(); ++j) {
            seq[j] = problem.control_set[c % k];
            c /= k;
            label << (j ? "/" : "") << seq[j];
        }
        ControlLaw law = [grid, seq](double s, const PathView&) {
            std::size_t j = 0;
            while (j + 1 < grid.size() && s >= grid[j + 1]) ++j;
            return seq[j];
        };
        family.push_back({label.str(), std::move(law)});
    }
    for (double g : problem.feedback_gains) {
        std::ostringstream label;
        label << "feedback:" << g;
        family.push_back({label.str(), feedback_law(g, problem.control_set)});
    }
    return family;
}

namespace {

struct TailShape {
    double beta = 0.0;
    bool in_range = true;
};

TailShape tail_shape(const ControlProblem& problem) {
    const double theta = theta_threshold(problem.coeffs->lipschitz_constant());
    const int p = std::max(problem.coeffs->cost_growth().power, 1);
    if (problem.lambda > p * theta) return {-(p * theta + problem.lambda) / (2.0 * p), true};
    return {-problem.lambda / (2.0 * p), false};
}

std::size_t block_count(std::size_t n) { return std::min<std::size_t>(n, 64); }

}  // namespace

PathCosts simulate_costs(const HistoryPath& x, const ControlLaw& control,
                         const ControlProblem& problem, const ValueConfig& cfg, StreamTag tag,
                         std::size_t paths) {
    problem.check_structure();
    cfg.sim.validate();
    if (paths < 1) throw std::invalid_argument("simulate_costs: need at least one path");
    const std::size_t steps = cfg.sim.steps();
    const double dt = cfg.sim.dt;
    std::vector<double> disc(steps);
    for (std::size_t k = 0; k < steps; ++k) disc[k] = std::exp(-problem.lambda * dt * static_cast<double>(k)) * dt;

    PathCosts out;
    out.costs.resize(paths);
    const std::size_t blocks = block_count(paths);
    std::vector<std::vector<double>> moments(blocks, std::vector<double>(steps + 1, 0.0));
    parallel_for(blocks, cfg.sim.threads, [&](std::size_t b) {
        EulerSimulator sim(*problem.coeffs);
        Trajectory traj;
        auto& m2 = moments[b];
        for (std::size_t i = b * paths / blocks; i < (b + 1) * paths / blocks; ++i) {
            RandomStream rng(cfg.sim.seed, tag, i, cfg.sub);
            sim.run(x, 0.0, dt, steps, control, rng, traj);
            double acc = 0.0;
            for (std::size_t k = 0; k < steps; ++k) acc += disc[k] * traj.running_cost(k);
            out.costs[i] = acc;
            for (std::size_t k = 0; k <= steps; ++k) {
                const double s = traj.history_view(k).sup_norm();
                m2[k] += s * s;
            }
        }
    });
    const TailShape shape = tail_shape(problem);
    const double denom = 1.0 + x.sup_norm() * x.sup_norm();
    for (std::size_t k = 0; k <= steps; ++k) {
        double m = 0.0;
        for (const auto& part : moments) m += part[k];
        m /= static_cast<double>(paths);
        out.fitted_moment = std::max(out.fitted_moment,
                                     std::exp(2.0 * shape.beta * dt * static_cast<double>(k)) * m / denom);
    }
    return out;
}

namespace {

ValueEstimate finish_estimate(const PathCosts& pc, const HistoryPath& x, const ControlProblem& problem,
                              const ValueConfig& cfg) {
    const SampleStats st = sample_stats(pc.costs);
    const TailShape shape = tail_shape(problem);
    const CostGrowth growth = problem.coeffs->cost_growth();
    const double T = cfg.sim.horizon;
    const double lam = problem.lambda;
    const int p = std::max(growth.power, 1);
    const double rate = lam + p * shape.beta;
    const double moment = std::pow(pc.fitted_moment * (1.0 + x.sup_norm() * x.sup_norm()), 0.5 * p);

    ValueEstimate v;
    v.value = st.mean;
    v.std_error = st.std_error;
    // bounded costs (power 0) need no moment term
    v.tail_bound = growth.power == 0
                       ? growth.constant * std::exp(-lam * T) / lam
                       : growth.constant * (std::exp(-lam * T) / lam + moment * std::exp(-rate * T) / rate);
    v.horizon_used = T;
    v.paths_used = pc.costs.size();
    v.beta = shape.beta;
    v.beta_in_theorem_range = shape.in_range;
    v.fitted_moment = pc.fitted_moment;
    const std::size_t steps = cfg.sim.steps();
    for (std::size_t k = 0; k < steps; ++k)
        v.quadrature_weight += std::exp(-lam * cfg.sim.dt * static_cast<double>(k)) * cfg.sim.dt;
    if (cfg.tail_tolerance && v.tail_bound > *cfg.tail_tolerance) {
        std::ostringstream msg;
        msg << "tail bound " << v.tail_bound << " exceeds tolerance " << *cfg.tail_tolerance
            << " at horizon " << T;
        throw TailToleranceError(msg.str());
    }
    return v;
}

}  // namespace

ValueEstimate cost_J(const HistoryPath& x, const ControlLaw& control, const ControlProblem& problem,
                     const ValueConfig& cfg) {
    const PathCosts pc = simulate_costs(x, control, problem, cfg, cfg.tag, cfg.sim.paths);
    ValueEstimate v = finish_estimate(pc, x, problem, cfg);
    v.control_label = "given";
    return v;
}

ValueEstimate value_V(const HistoryPath& x, const ControlProblem& problem, const ValueConfig& cfg) {
    const auto family = control_family(problem);
    std::size_t best = 0;
    if (cfg.selection_paths > 0 && family.size() > 1) {
        double best_mean = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < family.size(); ++c) {
            const PathCosts pilot =
                simulate_costs(x, family[c].law, problem, cfg, StreamTag::selection, cfg.selection_paths);
            const double m = pairwise_sum(pilot.costs) / static_cast<double>(pilot.costs.size());
            if (m < best_mean) {
                best_mean = m;
                best = c;
            }
        }
        const PathCosts pc = simulate_costs(x, family[best].law, problem, cfg, cfg.tag, cfg.sim.paths);
        ValueEstimate v = finish_estimate(pc, x, problem, cfg);
        v.control_label = family[best].label;
        v.control_index = best;
        v.candidates = family.size();
        return v;
    }
    std::optional<ValueEstimate> out;
    for (std::size_t c = 0; c < family.size(); ++c) {
        const PathCosts pc = simulate_costs(x, family[c].law, problem, cfg, cfg.tag, cfg.sim.paths);
        const double m = pairwise_sum(pc.costs) / static_cast<double>(pc.costs.size());
        if (!out || m < out->value) {
            out = finish_estimate(pc, x, problem, cfg);
            out->control_label = family[c].label;
            out->control_index = c;
        }
    }
    out->candidates = family.size();
    return *out;
}

InnerValue nested_inner_value(const ControlProblem& problem, ValueConfig inner) {
    inner.tag = StreamTag::nested;
    inner.sim.threads = 1;
    return [problem, inner](const PathView& history, std::size_t outer_path) {
        ValueConfig c = inner;
        c.sub = outer_path + 1;
        return value_V(materialize(history), problem, c).value;
    };
}

DppReport dpp_residual(const HistoryPath& x, double t, const ControlProblem& problem,
                       const ValueConfig& cfg, const InnerValue& inner, double lhs, double lhs_se) {
    problem.check_structure();
    if (!(t > 0.0)) throw std::invalid_argument("dpp_residual: t must be positive");
    const auto& grid = problem.switching_grid;
    const bool on_grid = std::find(grid.begin(), grid.end(), t) != grid.end();
    if (!on_grid && t < grid.back())
        throw std::invalid_argument("dpp_residual: t must lie on the switching grid or beyond its last point");
    SimConfig sim = cfg.sim;
    sim.horizon = t;
    sim.validate();
    const std::size_t steps = sim.steps();
    const double dt = sim.dt;
    const double end_disc = std::exp(-problem.lambda * t);
    const auto family = control_family(problem, t);

    auto evaluate = [&](const ControlLaw& law, StreamTag tag, std::size_t paths) {
        std::vector<double> vals(paths);
        const std::size_t blocks = block_count(paths);
        parallel_for(blocks, sim.threads, [&](std::size_t b) {
            EulerSimulator simulator(*problem.coeffs);
            Trajectory traj;
            for (std::size_t i = b * paths / blocks; i < (b + 1) * paths / blocks; ++i) {
                RandomStream rng(sim.seed, tag, i, cfg.sub);
                simulator.run(x, 0.0, dt, steps, law, rng, traj);
                double acc = 0.0;
                for (std::size_t k = 0; k < steps; ++k)
                    acc += std::exp(-problem.lambda * dt * static_cast<double>(k)) * dt * traj.running_cost(k);
                vals[i] = acc + end_disc * inner(traj.history_view(steps), i);
            }
        });
        return vals;
    };

    DppReport rep;
    rep.t = t;
    rep.candidates = family.size();
    std::size_t best = 0;
    std::vector<double> best_vals;
    if (cfg.selection_paths > 0 && family.size() > 1) {
        double best_mean = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < family.size(); ++c) {
            const auto v = evaluate(family[c].law, StreamTag::selection, cfg.selection_paths);
            const double m = pairwise_sum(v) / static_cast<double>(v.size());
            if (m < best_mean) {
                best_mean = m;
                best = c;
            }
        }
        best_vals = evaluate(family[best].law, cfg.tag, sim.paths);
    } else {
        double best_mean = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < family.size(); ++c) {
            auto v = evaluate(family[c].law, cfg.tag, sim.paths);
            const double m = pairwise_sum(v) / static_cast<double>(v.size());
            if (m < best_mean) {
                best_mean = m;
                best = c;
                best_vals = std::move(v);
            }
        }
    }
    const SampleStats st = sample_stats(best_vals);
    rep.lhs = lhs;
    rep.lhs_se = lhs_se;
    rep.rhs = st.mean;
    rep.rhs_se = st.std_error;
    rep.residual = lhs - st.mean;
    rep.residual_se = std::sqrt(lhs_se * lhs_se + st.std_error * st.std_error);
    rep.control_label = family[best].label;
    return rep;
}

LipschitzVReport lipschitz_check_V(const ControlProblem& problem, const ValueConfig& cfg,
                                   std::size_t num_pairs, std::uint64_t pair_seed) {
    LipschitzVReport rep;
    rep.pairs = num_pairs;
    RandomPathSpec spec;
    spec.left_horizon = problem.history_horizon;
    spec.nodes = 17;
    spec.amplitude = 1.0;
    for (std::size_t p = 0; p < num_pairs; ++p) {
        RandomStream rng(pair_seed, StreamTag::probes, p);
        const HistoryPath x = random_path(rng, spec);
        const HistoryPath y = sum(x, random_path(rng, spec).scaled(0.5));
        const double vx = value_V(x, problem, cfg).value;
        const double vy = value_V(y, problem, cfg).value;
        const double dist = sup_distance(x, y);
        const double ratio = dist > 0.0 ? std::abs(vx - vy) / dist : 0.0;
        rep.ratios.push_back(ratio);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        rep.growth_ratio = std::max({rep.growth_ratio, std::abs(vx) / (1.0 + x.sup_norm()),
                                     std::abs(vy) / (1.0 + y.sup_norm())});
    }
    return rep;
}

bool ShiftModulusReport::stable(double factor) const {
    if (degenerate || rows.empty()) return true;
    // rows are stored in the order given; compare against the largest delta
    const auto largest = std::max_element(rows.begin(), rows.end(),
                                          [](const auto& a, const auto& b) { return a.delta < b.delta; });
    return max_fitted <= factor * largest->fitted;
}

ShiftModulusReport shift_modulus_check(const ControlProblem& problem, const ValueConfig& cfg,
                                       const HistoryPath& x, const std::vector<double>& deltas) {
    ShiftModulusReport rep;
    const double vx = value_V(x, problem, cfg).value;
    rep.degenerate = true;
    for (double delta : deltas) {
        if (delta < 0.0) throw std::invalid_argument("shift_modulus_check: deltas must be non-negative");
        ShiftModulusRow row;
        row.delta = delta;
        row.lhs = delta == 0.0 ? 0.0 : std::abs(vx - value_V(shift(x, delta), problem, cfg).value);
        row.shape = (1.0 + x.sup_norm()) * (delta + std::sqrt(delta) + 1.0 - std::exp(-problem.lambda * delta));
        row.fitted = row.shape > 0.0 ? row.lhs / row.shape : 0.0;
        if (row.lhs != 0.0) rep.degenerate = false;
        rep.max_fitted = std::max(rep.max_fitted, row.fitted);
        rep.rows.push_back(row);
    }
    return rep;
}

ControlProblem lq_problem(const LqOptions& opt) {
    ControlProblem p;
    p.name = "lq";
    p.coeffs = lq_coefficients(opt.sigma);
    p.lambda = opt.lambda;
    p.control_set = uniform_grid(-opt.u_max, opt.u_max, opt.actions);
    p.switching_grid = opt.switching_grid;
    p.feedback_gains = opt.gains;
    p.history_horizon = 1.0;
    p.check_structure();
    return p;
}

ControlProblem exp_memory_problem(const ExpMemoryOptions& opt) {
    ControlProblem p;
    p.name = "exp-memory";
    p.coeffs = exp_memory_coefficients(opt.kappa, opt.sigma);
    p.lambda = opt.lambda;
    p.control_set = uniform_grid(-opt.u_max, opt.u_max, opt.actions);
    p.switching_grid = opt.switching_grid;
    p.history_horizon = 1.0;
    p.check_structure();
    return p;
}

HistoryPath exponential_embedding(const Eigen::VectorXd& z, double left_horizon, std::size_t nodes) {
    if (nodes < 2) throw std::invalid_argument("exponential_embedding: need at least two nodes");
    std::vector<double> theta = uniform_grid(-left_horizon, 0.0, nodes);
    theta.back() = 0.0;
    std::vector<Eigen::VectorXd> values(nodes);
    for (std::size_t j = 0; j < nodes; ++j) values[j] = std::exp(theta[j]) * z;
    values.front().setZero();
    return HistoryPath::piecewise_linear(std::move(theta), values);
}

}  // namespace delayhjb
