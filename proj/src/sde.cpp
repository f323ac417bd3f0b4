#include "delayhjb/sde.hpp"

#include "delayhjb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace delayhjb {

FunctionCoefficients::FunctionCoefficients(Spec spec) : spec_(std::move(spec)) {
    if (spec_.state_dim < 1 || spec_.noise_dim < 1)
        throw std::invalid_argument("coefficients: dimensions must be positive");
    if (!(spec_.lipschitz > 0.0))
        throw std::invalid_argument("coefficients: declared L must be positive");
    if (!spec_.drift || !spec_.diffusion || !spec_.cost)
        throw std::invalid_argument("coefficients: b, sigma and q are all required");
}

void SimConfig::validate(double start_time) const {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(horizon > start_time)) throw std::invalid_argument("horizon must exceed the start time");
    if (dt > horizon - start_time + 1e-12) throw std::invalid_argument("dt must not exceed the horizon");
    if (paths < 1) throw std::invalid_argument("paths must be at least 1");
    if (threads < 1) throw std::invalid_argument("threads must be at least 1");
    const double ratio = (horizon - start_time) / dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-6 * std::max(1.0, ratio))
        throw std::invalid_argument("horizon - start time must be a multiple of dt");
}

std::size_t SimConfig::steps(double start_time) const {
    return static_cast<std::size_t>(std::llround((horizon - start_time) / dt));
}

PathView Trajectory::history_view(std::size_t k) const {
    if (k > steps_) throw std::out_of_range("history_view: step beyond trajectory");
    const std::size_t count = xi_nodes_ + k;
    const std::size_t dd = static_cast<std::size_t>(d_);
    using S = std::span<const double>;
    PathView v(S(times_.data(), count), S(left_.data(), count * dd), S(right_.data(), count * dd),
               S(prefix_sup_.data(), count), time(k), d_);
    if (exp_rate_) v.attach_exp_cache(exp_cache_.data(), *exp_rate_);
    return v;
}

HistoryPath Trajectory::history_at(double s) const {
    const double t_end = end_time();
    const double slack = 1e-9 * dt_;
    if (s < start_ - slack || s > t_end + slack)
        throw std::out_of_range("history_at: s outside the simulated range");
    const double pos = (s - start_) / dt_;
    const double k_near = std::round(pos);
    if (std::abs(pos - k_near) <= 1e-9) return materialize(history_view(static_cast<std::size_t>(k_near)));

    // between grid points: keep every stored node before s and add the
    // linearly interpolated state at s
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const PathView v = history_view(k);
    const std::size_t dd = static_cast<std::size_t>(d_);
    std::vector<double> nodes(v.size() + 1);
    std::vector<double> left((v.size() + 1) * dd);
    std::vector<double> right((v.size() + 1) * dd);
    for (std::size_t j = 0; j < v.size(); ++j) {
        nodes[j] = times_[j] - s;
        std::copy_n(v.left(j), d_, left.begin() + j * dd);
        std::copy_n(v.right(j), d_, right.begin() + j * dd);
    }
    const double w = (s - time(k)) / dt_;
    const auto a = state(k);
    const auto b = state(k + 1);
    for (int i = 0; i < d_; ++i) {
        const double x = (1.0 - w) * a[i] + w * b[i];
        left[v.size() * dd + i] = x;
        right[v.size() * dd + i] = x;
    }
    nodes.back() = 0.0;
    return HistoryPath(std::move(nodes), std::move(left), std::move(right), d_);
}

void Trajectory::write_csv(std::ostream& out, std::size_t path_id, bool header) const {
    if (header) {
        out << "path,step,time";
        for (int i = 0; i < d_; ++i) out << ",x" << (i + 1);
        out << ",control\n";
    }
    out << std::setprecision(17);
    for (std::size_t k = 0; k <= steps_; ++k) {
        out << path_id << ',' << k << ',' << time(k);
        const auto x = state(k);
        for (int i = 0; i < d_; ++i) out << ',' << x[i];
        out << ',';
        if (k < steps_) out << controls_[k];
        out << '\n';
    }
}

EulerSimulator::EulerSimulator(const Coefficients& coeffs)
    : coeffs_(coeffs), b_(coeffs.state_dim()), sigma_(coeffs.state_dim(), coeffs.noise_dim()) {}

template <typename NoiseSource>
void EulerSimulator::simulate(const HistoryPath& xi, double start_time, double dt,
                              std::size_t steps, const ControlLaw& control,
                              NoiseSource&& noise, Trajectory& out) {
    const int d = coeffs_.state_dim();
    const int n = coeffs_.noise_dim();
    if (xi.dim() != d) throw std::invalid_argument("simulate: initial datum has wrong dimension");
    if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
    if (start_time < 0.0) throw std::invalid_argument("simulate: start time must be non-negative");
    const std::size_t dd = static_cast<std::size_t>(d);
    const std::size_t nn = static_cast<std::size_t>(n);

    out.start_ = start_time;
    out.dt_ = dt;
    out.steps_ = steps;
    out.d_ = d;
    out.n_ = n;
    if (!(out.xi_ == xi)) out.xi_ = xi;
    out.xi_nodes_ = xi.size();
    const std::size_t total = xi.size() + steps;
    out.times_.resize(total);
    out.left_.resize(total * dd);
    out.right_.resize(total * dd);
    out.prefix_sup_.resize(total);
    out.dw_.resize(steps * nn);
    out.drift_.resize(steps * dd);
    out.vol_.resize(steps * dd * nn);
    out.controls_.resize(steps);
    out.costs_.resize(steps);
    out.exp_rate_ = coeffs_.memory_rate();
    if (out.exp_rate_) out.exp_cache_.assign(total * dd, 0.0);

    const double rate = out.exp_rate_.value_or(0.0);
    double running_sup = 0.0;
    auto push_node = [&](std::size_t j) {
        double l2 = 0.0;
        double r2 = 0.0;
        for (std::size_t i = 0; i < dd; ++i) {
            l2 += out.left_[j * dd + i] * out.left_[j * dd + i];
            r2 += out.right_[j * dd + i] * out.right_[j * dd + i];
        }
        running_sup = std::max({running_sup, std::sqrt(l2), std::sqrt(r2)});
        out.prefix_sup_[j] = running_sup;
        if (out.exp_rate_ && j > 0) {
            const double len = out.times_[j] - out.times_[j - 1];
            const double decay = std::exp(-rate * len);
            for (std::size_t i = 0; i < dd; ++i) {
                out.exp_cache_[j * dd + i] =
                    decay * (out.exp_cache_[(j - 1) * dd + i] +
                             exp_segment_weight(rate, len, out.right_[(j - 1) * dd + i],
                                                out.left_[j * dd + i]));
            }
        }
    };

    for (std::size_t j = 0; j < xi.size(); ++j) {
        out.times_[j] = start_time + xi.nodes()[j];
        for (std::size_t i = 0; i < dd; ++i) {
            out.left_[j * dd + i] = xi.left(j)[i];
            out.right_[j * dd + i] = xi.right(j)[i];
        }
        push_node(j);
    }
    out.times_[xi.size() - 1] = start_time;

    const double sqdt = std::sqrt(dt);
    for (std::size_t k = 0; k < steps; ++k) {
        const PathView view = out.history_view(k);
        const double s = out.time(k);
        const Control u = control(s, view);
        coeffs_.drift(view, u, b_);
        coeffs_.diffusion(view, u, sigma_);
        const double q = coeffs_.running_cost(view, u);
        if (!b_.allFinite() || !sigma_.allFinite() || !std::isfinite(q))
            throw SimulationError("non-finite coefficient output", k);

        double* dw = out.dw_.data() + k * nn;
        for (std::size_t i = 0; i < nn; ++i) dw[i] = noise(k, i, sqdt);
        out.controls_[k] = u;
        out.costs_[k] = q;
        std::copy_n(b_.data(), dd, out.drift_.data() + k * dd);
        std::copy_n(sigma_.data(), dd * nn, out.vol_.data() + k * dd * nn);

        const std::size_t cur = xi.size() - 1 + k;
        const std::size_t nxt = cur + 1;
        out.times_[nxt] = out.time(k + 1);
        for (std::size_t i = 0; i < dd; ++i) {
            double x = out.right_[cur * dd + i] + b_[i] * dt;
            for (std::size_t r = 0; r < nn; ++r) x += sigma_(i, r) * dw[r];
            if (!std::isfinite(x)) throw SimulationError("state overflow", k);
            out.left_[nxt * dd + i] = x;
            out.right_[nxt * dd + i] = x;
        }
        push_node(nxt);
    }
}

void EulerSimulator::run(const HistoryPath& xi, double start_time, double dt, std::size_t steps,
                         const ControlLaw& control, RandomStream& rng, Trajectory& out) {
    simulate(xi, start_time, dt, steps, control,
             [&rng](std::size_t, std::size_t, double sqdt) { return sqdt * rng.normal(); }, out);
}

void EulerSimulator::replay(const HistoryPath& xi, double start_time, double dt,
                            std::span<const double> increments, const ControlLaw& control,
                            Trajectory& out) {
    const std::size_t n = static_cast<std::size_t>(coeffs_.noise_dim());
    if (increments.size() % n != 0)
        throw std::invalid_argument("replay: increment record does not match the noise dimension");
    // copy first: `increments` may alias out's own record
    const std::vector<double> dw(increments.begin(), increments.end());
    simulate(xi, start_time, dt, dw.size() / n, control,
             [&dw, n](std::size_t k, std::size_t i, double) { return dw[k * n + i]; }, out);
}

Trajectory euler_simulate(const Coefficients& coeffs, const HistoryPath& xi,
                          const ControlLaw& control, const SimConfig& cfg, std::size_t path_id,
                          double start_time) {
    cfg.validate(start_time);
    EulerSimulator sim(coeffs);
    RandomStream rng(cfg.seed, StreamTag::paths, path_id);
    Trajectory traj;
    sim.run(xi, start_time, cfg.dt, cfg.steps(start_time), control, rng, traj);
    return traj;
}

HistoryPath history_at(const Trajectory& traj, double s) { return traj.history_at(s); }

ControlLaw constant_control(Control u) {
    return [u](double, const PathView&) { return u; };
}

double theta_threshold(double lipschitz) {
    if (!(lipschitz > 0.0)) throw std::invalid_argument("theta: L must be positive");
    return 2.5 * lipschitz * lipschitz + lipschitz;
}

double lambda_uniqueness(double lipschitz) {
    if (!(lipschitz > 0.0)) throw std::invalid_argument("lambda_uniqueness: L must be positive");
    return (12.0 + 15.0 * lipschitz) * lipschitz;
}

LipschitzReport lipschitz_probe(const Coefficients& coeffs, std::size_t num_pairs,
                                std::uint64_t seed, std::span<const Control> controls) {
    const int d = coeffs.state_dim();
    const int n = coeffs.noise_dim();
    LipschitzReport rep;
    rep.declared = coeffs.lipschitz_constant();
    rep.pairs = num_pairs;
    RandomPathSpec spec;
    spec.dim = d;
    Eigen::VectorXd bx(d), by(d);
    Eigen::MatrixXd sx(d, n), sy(d, n);
    double worst = 0.0;
    for (std::size_t p = 0; p < num_pairs; ++p) {
        RandomStream rng(seed, StreamTag::probes, p);
        const HistoryPath x = random_path(rng, spec);
        HistoryPath y = random_path(rng, spec);
        if (p % 2 == 1) {
            // nearby pair: small perturbation of x
            y = sum(x, y.scaled(1e-3));
        }
        const Control u = controls.empty() ? 0.0 : controls[p % controls.size()];
        const PathView xv = x.view();
        const PathView yv = y.view();
        coeffs.drift(xv, u, bx);
        coeffs.drift(yv, u, by);
        coeffs.diffusion(xv, u, sx);
        coeffs.diffusion(yv, u, sy);
        const double qx = coeffs.running_cost(xv, u);
        const double qy = coeffs.running_cost(yv, u);

        auto growth_of = [](const Eigen::VectorXd& b, const Eigen::MatrixXd& s, double q, double norm) {
            return std::max({b.norm(), s.norm(), std::abs(q)}) / std::sqrt(1.0 + norm * norm);
        };
        const double g = std::max(growth_of(bx, sx, qx, x.sup_norm()), growth_of(by, sy, qy, y.sup_norm()));
        rep.growth_ratio = std::max(rep.growth_ratio, g);
        const double dist = sup_distance(x, y);
        if (dist > 0.0) {
            const double l =
                std::max({(bx - by).norm(), (sx - sy).norm(), std::abs(qx - qy)}) / dist;
            rep.lipschitz_ratio = std::max(rep.lipschitz_ratio, l);
            if (l > worst) {
                worst = l;
                rep.worst_pair = p;
                rep.worst_pair_tip = std::abs(xv.tip(0));
            }
        }
        if (g > worst) {
            worst = g;
            rep.worst_pair = p;
            rep.worst_pair_tip = std::abs(xv.tip(0));
        }
    }
    rep.violation = std::max(rep.growth_ratio, rep.lipschitz_ratio) > rep.declared * (1.0 + 1e-9);
    return rep;
}

namespace {

// Per-step sums accumulated over a fixed block of paths.
struct MomentSums {
    std::vector<double> sup_sq, sup_sq2, drift_sq, drift_sq2;
    explicit MomentSums(std::size_t n) : sup_sq(n, 0.0), sup_sq2(n, 0.0), drift_sq(n, 0.0), drift_sq2(n, 0.0) {}
};

// Splits [0, n) into a thread-count-independent number of contiguous blocks.
std::size_t block_count(std::size_t n) { return std::min<std::size_t>(n, 64); }
std::size_t block_begin(std::size_t b, std::size_t blocks, std::size_t n) { return b * n / blocks; }

}  // namespace

MomentReport moment_estimates(const Coefficients& coeffs, const HistoryPath& xi,
                              const ControlLaw& control, double beta, const SimConfig& cfg,
                              std::span<const double> eval_times, std::size_t small_steps,
                              double start_time) {
    const double theta = theta_threshold(coeffs.lipschitz_constant());
    if (!(beta < -theta))
        throw PreconditionError("moment_estimates: beta must be below -(5/2 L^2 + L) = " +
                                std::to_string(-theta));
    cfg.validate(start_time);
    const std::size_t steps = cfg.steps(start_time);
    const std::size_t grid = steps + 1;
    for (double s : eval_times)
        if (!(s > start_time) || s > cfg.horizon + 1e-12)
            throw std::invalid_argument("moment_estimates: evaluation times must lie in (t, T]");

    const std::size_t blocks = block_count(cfg.paths);
    std::vector<MomentSums> partial(blocks, MomentSums(grid));
    parallel_for(blocks, cfg.threads, [&](std::size_t b) {
        EulerSimulator sim(coeffs);
        Trajectory traj;
        MomentSums& acc = partial[b];
        const Eigen::VectorXd tip0 = xi.tip();
        for (std::size_t p = block_begin(b, blocks, cfg.paths); p < block_begin(b + 1, blocks, cfg.paths); ++p) {
            RandomStream rng(cfg.seed, StreamTag::paths, p);
            sim.run(xi, start_time, cfg.dt, steps, control, rng, traj);
            double drift_max = 0.0;
            for (std::size_t k = 0; k < grid; ++k) {
                const double sup = traj.history_view(k).sup_norm();
                drift_max = std::max(drift_max, (traj.state(k) - tip0).norm());
                const double a = sup * sup;
                const double c = drift_max * drift_max;
                acc.sup_sq[k] += a;
                acc.sup_sq2[k] += a * a;
                acc.drift_sq[k] += c;
                acc.drift_sq2[k] += c * c;
            }
        }
    });
    MomentSums total(grid);
    for (const auto& part : partial)
        for (std::size_t k = 0; k < grid; ++k) {
            total.sup_sq[k] += part.sup_sq[k];
            total.sup_sq2[k] += part.sup_sq2[k];
            total.drift_sq[k] += part.drift_sq[k];
            total.drift_sq2[k] += part.drift_sq2[k];
        }

    const double N = static_cast<double>(cfg.paths);
    auto mean_se = [N](double s1, double s2) {
        const double m = s1 / N;
        const double var = N > 1 ? std::max(0.0, (s2 - N * m * m) / (N - 1)) : 0.0;
        return std::pair{m, std::sqrt(var / N)};
    };

    MomentReport rep;
    rep.beta = beta;
    rep.dt = cfg.dt;
    rep.paths = cfg.paths;
    const double xi_sq = xi.sup_norm() * xi.sup_norm();
    std::vector<double> weighted(grid);
    double integral = 0.0;
    for (std::size_t k = 0; k < grid; ++k) {
        const double s = start_time + static_cast<double>(k) * cfg.dt;
        const double m = total.sup_sq[k] / N;
        weighted[k] = std::exp(2.0 * beta * s) * m + integral;
        integral += std::exp(2.0 * beta * s) * m * cfg.dt;
        rep.fitted_growth = std::max(rep.fitted_growth, weighted[k] / (1.0 + xi_sq));
    }
    for (std::size_t k = 1; k <= std::min(small_steps, steps); ++k) {
        const double gap = static_cast<double>(k) * cfg.dt;
        rep.small_time_slope = std::max(rep.small_time_slope, total.drift_sq[k] / N / gap);
    }
    for (double s : eval_times) {
        const auto k = static_cast<std::size_t>(std::llround((s - start_time) / cfg.dt));
        MomentRow row;
        row.time = start_time + static_cast<double>(k) * cfg.dt;
        std::tie(row.sup_sq_mean, row.sup_sq_se) = mean_se(total.sup_sq[k], total.sup_sq2[k]);
        row.weighted_lhs = weighted[k];
        std::tie(row.drift_sq_mean, row.drift_sq_se) = mean_se(total.drift_sq[k], total.drift_sq2[k]);
        const double gap = row.time - start_time;
        row.drift_shape = (1.0 + xi_sq) * std::exp(-2.0 * beta * row.time) * (gap + 1.0) * gap;
        rep.fitted_drift = std::max(rep.fitted_drift, row.drift_sq_mean / row.drift_shape);
        rep.rows.push_back(row);
    }
    return rep;
}

CouplingReport coupling_estimate(const Coefficients& coeffs, const HistoryPath& xi,
                                 const HistoryPath& xi_other, const ControlLaw& control,
                                 const SimConfig& cfg, double p) {
    cfg.validate();
    if (!(p >= 1.0)) throw std::invalid_argument("coupling_estimate: p must be >= 1");
    const std::size_t steps = cfg.steps();
    std::vector<double> lhs(cfg.paths);
    const std::size_t blocks = block_count(cfg.paths);
    parallel_for(blocks, cfg.threads, [&](std::size_t b) {
        EulerSimulator sim(coeffs);
        Trajectory a;
        Trajectory c;
        for (std::size_t i = block_begin(b, blocks, cfg.paths); i < block_begin(b + 1, blocks, cfg.paths); ++i) {
            RandomStream rng(cfg.seed, StreamTag::paths, i);
            sim.run(xi, 0.0, cfg.dt, steps, control, rng, a);
            RandomStream rng2(cfg.seed, StreamTag::paths, i);
            sim.run(xi_other, 0.0, cfg.dt, steps, control, rng2, c);
            double sup = 0.0;
            for (std::size_t k = 0; k <= steps; ++k) sup = std::max(sup, (a.state(k) - c.state(k)).norm());
            lhs[i] = std::pow(sup, p);
        }
    });
    const SampleStats st = sample_stats(lhs);
    CouplingReport rep;
    rep.p = p;
    rep.dt = cfg.dt;
    rep.lhs_mean = st.mean;
    rep.lhs_se = st.std_error;
    rep.rhs = std::pow(sup_distance(xi, xi_other), p);
    rep.fitted = rep.rhs > 0.0 ? rep.lhs_mean / rep.rhs : 0.0;
    return rep;
}

double max_relative_change(std::span<const double> values) {
    double worst = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double scale = std::max(std::abs(values[i]), std::abs(values[i - 1]));
        if (scale > 0.0) worst = std::max(worst, std::abs(values[i] - values[i - 1]) / scale);
    }
    return worst;
}

}  // namespace delayhjb
