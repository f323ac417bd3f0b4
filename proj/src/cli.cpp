#include "delayhjb/cli.hpp"

#include "delayhjb/calculus.hpp"
#include "delayhjb/control.hpp"
#include "delayhjb/fixtures.hpp"
#include "delayhjb/gauge.hpp"
#include "delayhjb/hjb.hpp"
#include "delayhjb/parallel.hpp"
#include "delayhjb/variational.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace delayhjb::cli {

namespace {

struct Param {
    std::string key;
    std::string def;
    std::string help;
    std::vector<std::string> choices{};
    bool positive = false;
};

using Handler = int (*)(const RunConfig&, std::ostream&);

struct Command {
    std::string name;
    std::string help;
    std::vector<Param> params;
    /// fixture -> key -> default, applied when the key was not given
    std::map<std::string, std::map<std::string, std::string>> fixture_defaults;
    Handler handler;

    bool choices_ok(const std::string& key, const std::string& value) const {
        for (const auto& p : params)
            if (p.key == key)
                return p.choices.empty() || std::find(p.choices.begin(), p.choices.end(), value) != p.choices.end();
        return false;
    }
};

std::vector<Param> sim_params(const std::string& dt, const std::string& paths, const std::string& horizon,
                              const std::string& seed = "1") {
    return {{"seed", seed, "random seed"},
            {"dt", dt, "time step", {}, true},
            {"paths", paths, "Monte Carlo paths", {}, true},
            {"horizon", horizon, "simulation end time", {}, true}};
}

std::vector<Param> operator+(std::vector<Param> a, const std::vector<Param>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// ---------------------------------------------------------------- reports

std::string cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}
std::string cell(std::size_t v) { return std::to_string(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(bool v) { return v ? "true" : "false"; }
std::string cell(const std::string& v) { return v; }
std::string cell(const char* v) { return v; }

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    template <typename... Ts>
    void add(const Ts&... vs) {
        rows.push_back({cell(vs)...});
    }
};

void write_report(const RunConfig& cfg, const std::vector<Table>& tables) {
    const std::filesystem::path path(cfg.out);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open report file " + cfg.out);
    f << "# delayhjb " << cfg.command << '\n';
    for (const auto& [k, v] : cfg.values) f << "# " << k << '=' << v << '\n';
    for (const auto& [fx, kv] : cfg.fixture_values)
        for (const auto& [k, v] : kv) f << "# " << fx << '.' << k << '=' << v << '\n';
    for (std::size_t t = 0; t < tables.size(); ++t) {
        if (t > 0) f << '\n';
        f << "# table=" << tables[t].name << '\n';
        for (std::size_t c = 0; c < tables[t].columns.size(); ++c) f << (c ? "," : "") << tables[t].columns[c];
        f << '\n';
        for (const auto& row : tables[t].rows) {
            for (std::size_t c = 0; c < row.size(); ++c) f << (c ? "," : "") << row[c];
            f << '\n';
        }
    }
    if (!f) throw std::runtime_error("failed writing report file " + cfg.out);
}

int verdict(bool pass, std::ostream& log) {
    log << (pass ? "result: pass" : "result: FAIL") << '\n';
    return pass ? ok : check_failed;
}

// ---------------------------------------------------------------- fixtures

std::vector<std::string> fixture_list(const RunConfig& cfg, std::vector<std::string> all) {
    const std::string& f = cfg.str("fixture");
    if (f == "all") return all;
    return {f};
}

ControlProblem problem_for(const std::string& fixture, const RunConfig& cfg) {
    if (fixture == "lq") {
        LqOptions o;
        if (cfg.has("lambda")) o.lambda = cfg.num("lambda");
        if (cfg.has("sigma")) o.sigma = cfg.num("sigma");
        return lq_problem(o);
    }
    if (fixture == "exp-memory") {
        ExpMemoryOptions o;
        if (cfg.has("lambda")) o.lambda = cfg.num("lambda");
        if (cfg.has("sigma")) o.sigma = cfg.num("sigma");
        if (cfg.has("kappa")) o.kappa = cfg.num("kappa");
        return exp_memory_problem(o);
    }
    throw ConfigError("unknown control fixture '" + fixture + "'");
}

std::shared_ptr<const Coefficients> dynamics_for(const std::string& fixture) {
    if (fixture == "ou") return ou_coefficients();
    if (fixture == "brownian") return brownian_coefficients(1);
    if (fixture == "lq") return lq_coefficients(1.0);
    if (fixture == "exp-memory") return exp_memory_coefficients(0.5, 1.0);
    throw ConfigError("unknown fixture '" + fixture + "'");
}

HistoryPath embedded(double z, double left_horizon) {
    return exponential_embedding(Eigen::VectorXd::Constant(1, z), left_horizon);
}

ValueConfig value_config(const RunConfig& cfg) {
    ValueConfig v;
    v.sim = cfg.sim();
    if (cfg.has("selection-paths")) v.selection_paths = cfg.count("selection-paths");
    return v;
}

// ---------------------------------------------------------------- commands

int cmd_gauge_verify(const RunConfig& cfg, std::ostream& log) {
    GaugeVerifyOptions o;
    o.samples = cfg.count("samples");
    o.seed = cfg.seed();
    o.counterexample_n = static_cast<int>(cfg.count("counterexample-n"));
    o.tol = cfg.num("tol");
    o.threads = cfg.threads;
    const auto rows = gauge_verify(o);
    Table t{"checks", {"check", "m", "M", "samples", "violations", "worst_slack"}, {}};
    std::size_t violations = 0;
    for (const auto& r : rows) {
        t.add(r.check, r.m, r.M, r.samples, r.violations, r.worst_slack);
        violations += r.violations;
        log << r.check << " m=" << r.m << " M=" << r.M << " violations=" << r.violations << '\n';
    }
    write_report(cfg, {t});
    return verdict(violations == 0, log);
}

int cmd_deriv_check(const RunConfig& cfg, std::ostream& log) {
    DerivativeSuiteOptions o;
    o.probes = cfg.count("probes");
    o.seed = cfg.seed();
    o.threads = cfg.threads;
    o.kink_threshold = cfg.num("kink-threshold");
    o.check.rel_tol = cfg.num("rel-tol");
    o.check.abs_floor = cfg.num("abs-floor");
    const auto rep = derivative_suite(o);
    Table t{"probes",
            {"probe", "functional", "dim", "kink_distance", "status", "quantity", "analytic_norm", "abs_err",
             "rel_err", "step", "pass"},
            {}};
    for (const auto& p : rep.probes) {
        const int dim = p.point.path.dim();
        if (p.kink_filtered) {
            t.add(p.index, p.functional, dim, p.kink_distance, "kink", "-", "", "", "", "", "");
            continue;
        }
        for (const auto& r : p.rows)
            t.add(p.index, p.functional, dim, p.kink_distance, p.pass ? "pass" : "fail", r.quantity,
                  r.analytic.norm(), r.abs_err, r.rel_err, r.step, r.pass);
    }
    const double min_fraction = cfg.num("min-fraction");
    Table s{"summary", {"probes", "kink_filtered", "compared", "passed", "failed", "pass_fraction"}, {}};
    s.add(rep.probes.size(), rep.kink_filtered, rep.compared, rep.passed, rep.failed, rep.pass_fraction());
    write_report(cfg, {s, t});
    log << "probes=" << rep.probes.size() << " kink_filtered=" << rep.kink_filtered
        << " passed=" << rep.passed << " failed=" << rep.failed << '\n';
    return verdict(rep.ok(min_fraction), log);
}

int cmd_ito_check(const RunConfig& cfg, std::ostream& log) {
    const SimConfig base = cfg.sim();
    const double refine = cfg.num("refine");
    const double min_ratio = cfg.num("min-ratio");
    const HistoryPath xi = embedded(cfg.num("z"), cfg.num("history-horizon"));
    std::vector<std::string> functionals{"square", "upsilon"};
    if (cfg.str("functional") != "all") functionals = {cfg.str("functional")};

    Table t{"residuals",
            {"fixture", "functional", "dt", "paths", "mean", "mean_se", "mean_abs", "mean_abs_se"}, {}};
    Table s{"checks", {"fixture", "functional", "signed_z", "signed_ok", "abs_ratio", "ratio_ok"}, {}};
    bool pass = true;
    for (const auto& fx : fixture_list(cfg, {"brownian", "ou"})) {
        const auto coeffs = dynamics_for(fx);
        for (const auto& fn : functionals) {
            std::unique_ptr<FunctionalWithDerivatives> f;
            if (fn == "square")
                f = std::make_unique<FunctionalFromFns>(endpoint_square(1));
            else
                f = std::make_unique<AnchoredGauge>(GaugeSpec{1, 3.0},
                                                    TimedPath(0.0, HistoryPath::zero(1, 1.0)),
                                                    GaugeKind::upsilon);
            SimConfig fine = base;
            fine.dt = base.dt / refine;
            const ItoStats a = ito_check(*f, *coeffs, xi, constant_control(0.0), base);
            const ItoStats b = ito_check(*f, *coeffs, xi, constant_control(0.0), fine);
            for (const auto& st : {a, b})
                t.add(fx, f->name(), st.dt, st.paths, st.mean, st.mean_se, st.mean_abs, st.mean_abs_se);
            const double z = a.mean_se > 0.0 ? std::abs(a.mean) / a.mean_se : 0.0;
            const bool signed_ok = std::abs(a.mean) <= 3.0 * a.mean_se;
            const double ratio = a.mean_abs / b.mean_abs;
            const bool ratio_ok = ratio >= min_ratio;
            s.add(fx, f->name(), z, signed_ok, ratio, ratio_ok);
            log << fx << ' ' << f->name() << ": |mean|/se=" << z << " abs ratio=" << ratio << '\n';
            pass = pass && signed_ok && ratio_ok;
        }
    }
    write_report(cfg, {s, t});
    return verdict(pass, log);
}

int cmd_bp_search(const RunConfig& cfg, std::ostream& log) {
    const PathObjective f = named_objective(cfg.str("objective"));
    const GaugeSpec g{};
    const PairPenalty rho = [g](const TimedPath& a, const TimedPath& b) { return upsilon_bar(g, a, b); };
    const double eps = cfg.num("epsilon");
    const double delta0 = cfg.num("delta0");

    std::vector<SearchDomain> domains;
    if (!cfg.str("domain-file").empty()) {
        std::ifstream in(cfg.str("domain-file"));
        if (!in) throw ConfigError("cannot read domain file " + cfg.str("domain-file"));
        domains.push_back(read_domain_csv(in));
    } else {
        for (std::size_t d = 0; d < cfg.count("domains"); ++d)
            domains.push_back(random_domain(cfg.seed(), d, cfg.count("size")));
    }

    Table t{"domains",
            {"domain", "size", "start", "maximizer", "centers", "perturbed_value", "distance_bounds",
             "value_bound", "strict_max", "strict_margin", "duplicates", "pass"},
            {}};
    bool pass = true;
    for (std::size_t d = 0; d < domains.size(); ++d) {
        const auto& dom = domains[d];
        std::vector<double> fv(dom.size());
        for (std::size_t j = 0; j < dom.size(); ++j) fv[j] = f(dom.candidates[j]);
        const double sup = *std::max_element(fv.begin(), fv.end());
        // first candidate within eps/2 of the max
        std::size_t start = 0;
        while (fv[start] < sup - 0.5 * eps) ++start;
        const auto res = borwein_preiss(f, rho, {delta0}, eps, start, dom, 1000, cfg.threads);
        const auto chk = verify_borwein_preiss(res, f, rho, eps, dom);
        const bool ok_d = chk.all() && res.stabilized;
        pass = pass && ok_d;
        t.add(d, dom.size(), start, res.maximizer, res.centers.size(), res.perturbed_value, chk.distance_bounds,
              chk.value_bound, chk.strict_max, chk.strict_margin, chk.duplicates, ok_d);
    }
    write_report(cfg, {t});
    log << "domains=" << domains.size() << '\n';
    return verdict(pass, log);
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    const auto coeffs = dynamics_for(cfg.str("fixture"));
    const SimConfig sim = cfg.sim();
    const HistoryPath xi = embedded(cfg.num("z"), cfg.num("history-horizon"));
    const ControlLaw law = constant_control(cfg.num("control"));
    std::vector<std::string> chunks(sim.paths);
    parallel_for(sim.paths, sim.threads, [&](std::size_t i) {
        const Trajectory traj = euler_simulate(*coeffs, xi, law, sim, i);
        std::ostringstream os;
        traj.write_csv(os, i, false);
        chunks[i] = os.str();
    });
    write_report(cfg, {});
    std::ofstream f(cfg.out, std::ios::app);
    f << "# table=trajectories\n";
    const Trajectory head = euler_simulate(*coeffs, xi, law, SimConfig{sim.dt, sim.dt, 1, sim.seed, 1});
    std::ostringstream hdr;
    head.write_csv(hdr, 0, true);
    f << hdr.str().substr(0, hdr.str().find('\n') + 1);
    for (const auto& c : chunks) f << c;
    log << "paths=" << sim.paths << " steps=" << sim.steps() << '\n';
    return ok;
}

int cmd_sde_estimates(const RunConfig& cfg, std::ostream& log) {
    const auto coeffs = dynamics_for(cfg.str("fixture"));
    const double beta = cfg.num("beta");
    const double z = cfg.num("z");
    const double hh = cfg.num("history-horizon");
    const HistoryPath xi = embedded(z, hh);
    const HistoryPath xi2 = embedded(z + cfg.num("coupling-offset"), hh);
    const auto eval = cfg.list("eval-times");
    const double max_change = cfg.num("max-change");

    Table t{"estimates", {"dt", "paths", "fitted_growth", "fitted_drift", "small_time_slope", "coupling"}, {}};
    std::vector<double> growth, drift, coupling;
    for (double dt : cfg.list("dt-list")) {
        SimConfig sim = cfg.sim();
        sim.dt = dt;
        const MomentReport m = moment_estimates(*coeffs, xi, constant_control(0.0), beta, sim, eval);
        const CouplingReport c = coupling_estimate(*coeffs, xi, xi2, constant_control(0.0), sim, 2.0);
        t.add(dt, sim.paths, m.fitted_growth, m.fitted_drift, m.small_time_slope, c.fitted);
        growth.push_back(m.fitted_growth);
        drift.push_back(m.fitted_drift);
        coupling.push_back(c.fitted);
        log << "dt=" << dt << " growth=" << m.fitted_growth << " drift=" << m.fitted_drift
            << " coupling=" << c.fitted << '\n';
    }
    Table s{"stability", {"quantity", "max_relative_change", "finite", "pass"}, {}};
    bool pass = true;
    for (const auto& [name, v] : {std::pair<const char*, std::vector<double>&>{"fitted_growth", growth},
                                  {"fitted_drift", drift},
                                  {"coupling", coupling}}) {
        const bool finite = std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
        const double ch = max_relative_change(v);
        const bool p = finite && ch < max_change;
        s.add(name, ch, finite, p);
        pass = pass && p;
    }
    write_report(cfg, {s, t});
    return verdict(pass, log);
}

struct ResidualSweep {
    std::vector<HJBResidualReport> reports;
    double max_abs = 0.0;
};

ResidualSweep lq_residual_sweep(const RunConfig& cfg, double lambda, double sigma) {
    LqOptions o;
    o.lambda = lambda;
    o.sigma = sigma;
    o.actions = cfg.count("hjb-actions");
    o.u_max = cfg.num("hjb-u-max");
    const ControlProblem fine = lq_problem(o);
    const FunctionalFromFns v = riccati_functional(lambda, sigma);
    ResidualSweep out;
    out.reports.resize(cfg.count("hjb-probes"));
    RandomPathSpec spec;
    spec.left_horizon = fine.history_horizon;
    spec.nodes = 17;
    parallel_for(out.reports.size(), cfg.threads, [&](std::size_t i) {
        RandomStream rng(cfg.seed(), StreamTag::probes, i, 7);
        const double z = rng.uniform(-2.0, 2.0);
        HistoryPath x = random_path(rng, spec);
        x = x.bumped(Eigen::VectorXd::Constant(1, z - x.tip()[0]));
        out.reports[i] = classical_residual(v, x, rng.uniform(0.0, 1.0), fine);
    });
    for (const auto& r : out.reports) out.max_abs = std::max(out.max_abs, std::abs(r.residual));
    return out;
}

int cmd_value_lq(const RunConfig& cfg, std::ostream& log) {
    LqOptions o;
    o.lambda = cfg.num("lambda");
    o.sigma = cfg.num("sigma");
    o.actions = cfg.count("actions");
    o.u_max = cfg.num("u-max");
    const ControlProblem problem = lq_problem(o);
    const double z = cfg.num("z");
    const HistoryPath x = embedded(z, problem.history_horizon);
    const ValueEstimate v = value_V(x, problem, value_config(cfg));
    const Riccati ric(o.lambda, o.sigma);
    const double ref = ric.value(z);
    const double excess = v.value - ref;
    const double budget = std::max(3.0 * v.std_error, cfg.num("rel-budget") * ref);
    const bool value_ok = excess >= -3.0 * v.std_error && excess <= budget;

    const ResidualSweep sweep = lq_residual_sweep(cfg, o.lambda, o.sigma);
    const double du = 2.0 * cfg.num("hjb-u-max") / static_cast<double>(cfg.count("hjb-actions") - 1);
    const bool residual_ok = sweep.max_abs <= cfg.num("residual-tol");

    Table t{"value",
            {"z", "riccati_a", "reference", "estimate", "std_error", "excess", "budget", "tail_bound",
             "beta", "beta_in_theorem_range", "control", "candidates", "pass"},
            {}};
    t.add(z, ric.a, ref, v.value, v.std_error, excess, budget, v.tail_bound, v.beta, v.beta_in_theorem_range,
          v.control_label, v.candidates, value_ok);
    Table r{"hjb_residual", {"probes", "max_abs_residual", "grid_floor", "tol", "pass"}, {}};
    r.add(sweep.reports.size(), sweep.max_abs, 0.25 * du * du, cfg.num("residual-tol"), residual_ok);
    write_report(cfg, {t, r});
    log << "riccati reference V(" << z << ") = " << cell(ref) << '\n'
        << "monte carlo estimate = " << cell(v.value) << " +- " << cell(v.std_error) << " (" << v.control_label
        << ")\n"
        << "max classical residual = " << cell(sweep.max_abs) << '\n';
    return verdict(value_ok && residual_ok, log);
}

int cmd_dpp_check(const RunConfig& cfg, std::ostream& log) {
    Table t{"dpp",
            {"fixture", "t", "lhs", "lhs_se", "rhs", "rhs_se", "residual", "residual_se", "budget", "control",
             "candidates", "pass"},
            {}};
    bool pass = true;
    for (const auto& fx : fixture_list(cfg, {"lq", "exp-memory"})) {
        const RunConfig fc = cfg.for_fixture(fx);
        const ControlProblem problem = problem_for(fx, fc);
        const HistoryPath x = embedded(fc.num("z"), problem.history_horizon);
        ValueConfig outer = value_config(fc);
        ValueConfig lhs_cfg = outer;
        lhs_cfg.sim.paths = fc.count("lhs-paths");
        const ValueEstimate lhs = value_V(x, problem, lhs_cfg);
        InnerValue inner;
        double rel = 0.0;
        if (fx == "lq") {
            const Riccati ric(problem.lambda, fc.has("sigma") ? fc.num("sigma") : 1.0);
            inner = [ric](const PathView& h, std::size_t) { return ric.value(h.tip(0)); };
        } else {
            ValueConfig in = outer;
            in.sim.paths = fc.count("inner-paths");
            in.selection_paths = 0;
            inner = nested_inner_value(problem, in);
            rel = fc.num("budget-rel");
        }
        for (double tt : fc.list("t-list")) {
            const DppReport rep = dpp_residual(x, tt, problem, outer, inner, lhs.value, lhs.std_error);
            const double budget = 3.0 * rep.residual_se + rel * std::abs(lhs.value);
            const bool p = std::abs(rep.residual) <= budget;
            pass = pass && p;
            t.add(fx, tt, rep.lhs, rep.lhs_se, rep.rhs, rep.rhs_se, rep.residual, rep.residual_se, budget,
                  rep.control_label, rep.candidates, p);
            log << fx << " t=" << tt << " residual=" << cell(rep.residual) << " budget=" << cell(budget) << '\n';
        }
    }
    write_report(cfg, {t});
    return verdict(pass, log);
}

int cmd_lipschitz_v(const RunConfig& cfg, std::ostream& log) {
    Table t{"ratios", {"fixture", "dt", "pairs", "max_ratio", "growth_ratio"}, {}};
    Table s{"stability", {"fixture", "ratio_of_ratios", "factor", "pass"}, {}};
    const double factor = cfg.num("factor");
    bool pass = true;
    for (const auto& fx : fixture_list(cfg, {"lq", "exp-memory"})) {
        const RunConfig fc = cfg.for_fixture(fx);
        const ControlProblem problem = problem_for(fx, fc);
        std::vector<double> ratios;
        for (double dt : fc.list("dt-list")) {
            ValueConfig v = value_config(fc);
            v.sim.dt = dt;
            const auto rep = lipschitz_check_V(problem, v, fc.count("pairs"), fc.num("pair-seed"));
            t.add(fx, dt, rep.pairs, rep.max_ratio, rep.growth_ratio);
            ratios.push_back(rep.max_ratio);
        }
        const double lo = *std::min_element(ratios.begin(), ratios.end());
        const double hi = *std::max_element(ratios.begin(), ratios.end());
        const bool p = lo > 0.0 && hi <= factor * lo;
        s.add(fx, lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity(), factor, p);
        log << fx << ": ratios " << cell(lo) << " .. " << cell(hi) << '\n';
        pass = pass && p;
    }
    write_report(cfg, {s, t});
    return verdict(pass, log);
}

int cmd_shift_modulus(const RunConfig& cfg, std::ostream& log) {
    Table t{"rows", {"fixture", "delta", "lhs", "shape", "fitted"}, {}};
    Table s{"stability", {"fixture", "max_fitted", "degenerate", "factor", "pass"}, {}};
    const double factor = cfg.num("factor");
    bool pass = true;
    for (const auto& fx : fixture_list(cfg, {"lq", "exp-memory"})) {
        const RunConfig fc = cfg.for_fixture(fx);
        const ControlProblem problem = problem_for(fx, fc);
        const HistoryPath x = embedded(fc.num("z"), problem.history_horizon);
        const auto rep = shift_modulus_check(problem, value_config(fc), x, fc.list("deltas"));
        for (const auto& r : rep.rows) t.add(fx, r.delta, r.lhs, r.shape, r.fitted);
        const bool p = rep.stable(factor);
        s.add(fx, rep.max_fitted, rep.degenerate, factor, p);
        log << fx << ": max fitted " << cell(rep.max_fitted) << (rep.degenerate ? " (degenerate)" : "") << '\n';
        pass = pass && p;
    }
    write_report(cfg, {s, t});
    return verdict(pass, log);
}

int cmd_hjb_residual(const RunConfig& cfg, std::ostream& log) {
    const double lambda = cfg.num("lambda");
    const double sigma = cfg.num("sigma");
    const ResidualSweep sweep = lq_residual_sweep(cfg, lambda, sigma);
    const double tol = cfg.num("residual-tol");
    Table t{"residuals",
            {"probe", "t", "z", "residual", "control", "lambda_term", "dt_term", "hamiltonian"}, {}};
    for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
        const auto& r = sweep.reports[i];
        t.add(i, r.probe.time, r.probe.path.tip()[0], r.residual, r.control, r.lambda_term, r.dt_term,
              r.hamiltonian);
    }

    // viscosity probes at the first residual probe: phi = w +- gauge penalty
    LqOptions o;
    o.lambda = lambda;
    o.sigma = sigma;
    o.actions = cfg.count("hjb-actions");
    o.u_max = cfg.num("hjb-u-max");
    const ControlProblem fine = lq_problem(o);
    const Riccati ric(lambda, sigma);
    const TimedPath anchor = sweep.reports.front().probe;
    const AnchoredGauge pen(GaugeSpec{}, anchor, GaugeKind::upsilon_bar);
    const FunctionalFromFns w_fn = riccati_functional(lambda, sigma);
    auto combo = [&](double sw, double sp) {
        return FunctionalFromFns(
            "test",
            [&, sw, sp](double s, const PathView& x) { return sw * w_fn.value(s, x) + sp * pen.value(s, x); },
            [&, sw, sp](double s, const PathView& x) { return sp * pen.horizontal(s, x); },
            [&, sw, sp](double s, const PathView& x, Eigen::Ref<Eigen::VectorXd> g) {
                Eigen::VectorXd a(1), b(1);
                w_fn.gradient(s, x, a);
                pen.gradient(s, x, b);
                g = sw * a + sp * b;
            },
            [&, sw, sp](double s, const PathView& x, Eigen::Ref<Eigen::MatrixXd> h) {
                Eigen::MatrixXd a(1, 1), b(1, 1);
                w_fn.hessian(s, x, a);
                pen.hessian(s, x, b);
                h = sw * a + sp * b;
            });
    };
    const PathFunctional w = [ric](const TimedPath& p) { return ric.value(p.path.tip()[0]); };
    std::vector<TimedPath> samples;
    RandomPathSpec spec;
    spec.left_horizon = 1.0;
    spec.nodes = 17;
    for (std::size_t i = 0; i < cfg.count("viscosity-samples"); ++i) {
        RandomStream rng(cfg.seed(), StreamTag::probes, i, 9);
        samples.emplace_back(anchor.time + rng.uniform(0.0, 1.0), random_path(rng, spec));
    }
    const auto sub = viscosity_probe(w, combo(1.0, 1.0), anchor, fine, samples, ViscositySide::sub, tol);
    const auto super = viscosity_probe(w, combo(-1.0, 1.0), anchor, fine, samples, ViscositySide::super, tol);
    Table v{"viscosity",
            {"side", "touching_gap", "membership_margin", "inequality", "membership_ok", "inequality_ok", "samples",
             "note"},
            {}};
    for (const auto& r : {sub, super})
        v.add(r.side == ViscositySide::sub ? "sub" : "super", r.touching_gap, r.membership_margin, r.inequality,
              r.membership_ok, r.inequality_ok, r.samples, r.note);
    write_report(cfg, {t, v});
    log << "max |residual| = " << cell(sweep.max_abs) << " over " << sweep.reports.size() << " probes\n"
        << "viscosity sub inequality = " << cell(sub.inequality) << ", super = " << cell(super.inequality)
        << " (" << sub.note << ")\n";
    const bool pass = sweep.max_abs <= tol && sub.membership_ok && sub.inequality_ok && super.membership_ok &&
                      super.inequality_ok;
    return verdict(pass, log);
}

int cmd_stability(const RunConfig& cfg, std::ostream& log) {
    const ControlProblem base = problem_for(cfg.str("fixture"), cfg);
    std::vector<HistoryPath> xs;
    for (double z : cfg.list("z-list")) xs.push_back(embedded(z, base.history_horizon));
    const ValueConfig v = value_config(cfg);
    const auto ladder = cfg.list("eps");

    Table t{"ladder",
            {"family", "eps", "coeff_distance", "value_distance", "value_se", "expected", "tolerance", "pass"}, {}};
    bool cost_ok = true;
    const auto q = stability_experiment(base, cost_shift_family(base), ladder, v, xs, 50, cfg.seed());
    for (const auto& r : q.rows) {
        const double expected = r.eps * r.quadrature_weight;
        const double tol = r.eps * std::abs(r.quadrature_weight - 1.0 / base.lambda) +
                           r.eps * std::exp(-base.lambda * v.sim.horizon) / base.lambda + 3.0 * r.value_se;
        const bool p = std::abs(r.value_distance - r.eps / base.lambda) <= tol;
        cost_ok = cost_ok && p;
        t.add("cost+eps", r.eps, r.coeff_distance, r.value_distance, r.value_se, expected, tol, p);
    }
    const auto b = stability_experiment(base, drift_shift_family(base), ladder, v, xs, 50, cfg.seed());
    for (const auto& r : b.rows) t.add("drift+eps", r.eps, r.coeff_distance, r.value_distance, r.value_se, "", "", "");
    Table s{"monotone", {"family", "monotone"}, {}};
    s.add("drift+eps", b.monotone);
    const bool pass = cost_ok && b.monotone;
    write_report(cfg, {t, s});
    log << "cost ladder within tolerance=" << cell(cost_ok) << ", drift ladder monotone=" << cell(b.monotone) << '\n';
    return verdict(pass, log);
}

int cmd_reduce_check(const RunConfig& cfg, std::ostream& log) {
    const std::string fx = cfg.str("fixture");
    const ControlProblem problem = problem_for(fx, cfg);
    Table t{"reduction", {"fixture", "reducible", "probes", "probe_deviation", "message"}, {}};
    try {
        const ReducedProblem r = reduce_no_delay(problem, cfg.count("probes"), cfg.seed());
        t.add(fx, true, r.probes, r.probe_deviation, "point-dependent");
        Table d{"descriptor", {"z", "u", "drift", "diffusion", "cost"}, {}};
        for (double z : {-1.0, 0.0, 1.0})
            for (Control u : problem.control_set) {
                const Eigen::VectorXd zz = Eigen::VectorXd::Constant(1, z);
                d.add(z, u, r.drift(zz, u)[0], r.diffusion(zz, u)(0, 0), r.cost(zz, u));
            }
        const EmbeddingCheck e =
            embedding_check(problem, value_config(cfg), Eigen::VectorXd::Constant(1, cfg.num("z")), cfg.seed());
        Table c{"embedding", {"z", "value_embedded", "value_other", "difference", "std_error", "pass"}, {}};
        c.add(cfg.num("z"), e.value_embedded, e.value_other, e.difference, e.std_error, e.pass);
        write_report(cfg, {t, d, c});
        log << fx << ": reducible, embedding difference " << cell(e.difference) << '\n';
        return verdict(e.pass, log);
    } catch (const NotPointDependent& err) {
        t.add(fx, false, cfg.count("probes"), "", "history dependence detected");
        write_report(cfg, {t});
        log << fx << ": " << err.what() << '\n';
        return verdict(false, log);
    }
}

const std::vector<Command>& commands() {
    static const std::vector<std::string> control_fixtures{"lq", "exp-memory"};
    static const std::vector<std::string> control_fixtures_all{"all", "lq", "exp-memory"};
    static const std::vector<Command> cmds = [] {
        std::vector<Command> c;
        c.push_back({"gauge-verify",
                     "norm bounds, subadditivity, gauge property and counterexample suites",
                     {{"seed", "7", "random seed"},
                      {"samples", "10000", "random paths per suite", {}, true},
                      {"counterexample-n", "1000", "largest n of the counterexample family", {}, true},
                      {"tol", "1e-12", "relative rounding allowance"}},
                     {},
                     cmd_gauge_verify});
        c.push_back({"deriv-check",
                     "analytic gauge derivatives against finite differences",
                     {{"seed", "11", "random seed"},
                      {"probes", "1000", "random probes", {}, true},
                      {"rel-tol", "1e-5", "relative tolerance", {}, true},
                      {"abs-floor", "1e-7", "absolute floor", {}, true},
                      {"kink-threshold", "1e-3", "relative kink distance below which probes are skipped", {}, true},
                      {"min-fraction", "0.99", "required passing fraction", {}, true}},
                     {},
                     cmd_deriv_check});
        c.push_back({"ito-check",
                     "functional Ito formula residuals and their dt refinement",
                     sim_params("1e-3", "10000", "1") +
                         std::vector<Param>{{"fixture", "all", "dynamics", {"all", "brownian", "ou"}},
                                            {"functional", "all", "functional", {"all", "square", "upsilon"}},
                                            {"z", "0.5", "initial endpoint"},
                                            {"history-horizon", "1", "history length", {}, true},
                                            {"refine", "4", "dt refinement factor", {}, true},
                                            {"min-ratio", "1.6", "required decrease of mean |residual|", {}, true}},
                     {},
                     cmd_ito_check});
        c.push_back({"bp-search",
                     "Borwein-Preiss perturbation search with exhaustive verification",
                     {{"seed", "5", "random seed"},
                      {"domains", "50", "random domains", {}, true},
                      {"size", "2000", "candidates per domain", {}, true},
                      {"objective", "tip", "objective", {"tip", "neg-sup", "tip-minus-sup"}},
                      {"epsilon", "0.5", "epsilon", {}, true},
                      {"delta0", "1", "first weight", {}, true},
                      {"domain-file", "", "CSV domain instead of random ones"}},
                     {},
                     cmd_bp_search});
        c.push_back({"simulate",
                     "Euler-Maruyama trajectories of a fixture",
                     sim_params("1e-2", "4", "1") +
                         std::vector<Param>{{"fixture", "ou", "dynamics", {"ou", "brownian", "lq", "exp-memory"}},
                                            {"z", "1", "initial endpoint"},
                                            {"history-horizon", "1", "history length", {}, true},
                                            {"control", "0", "constant control"}},
                     {},
                     cmd_simulate});
        c.push_back({"sde-estimates",
                     "moment, small-time and coupling constants across dt",
                     sim_params("1e-2", "4000", "2") +
                         std::vector<Param>{{"fixture", "ou", "dynamics", {"ou", "brownian"}},
                                            {"beta", "-4", "moment exponent"},
                                            {"z", "1", "initial endpoint"},
                                            {"coupling-offset", "0.5", "endpoint gap of the coupled history"},
                                            {"history-horizon", "1", "history length", {}, true},
                                            {"eval-times", "0.5,1,1.5,2", "evaluation times"},
                                            {"dt-list", "1e-2,1e-3", "time steps compared"},
                                            {"max-change", "0.25", "allowed relative change", {}, true}},
                     {},
                     cmd_sde_estimates});
        c.push_back({"value-lq",
                     "Monte Carlo value of the LQ fixture against the Riccati solution",
                     sim_params("1e-3", "100000", "3") +
                         std::vector<Param>{{"lambda", "3", "discount", {}, true},
                                            {"sigma", "1", "volatility"},
                                            {"z", "1", "initial endpoint"},
                                            {"actions", "9", "control grid size", {}, true},
                                            {"u-max", "1", "control bound", {}, true},
                                            {"selection-paths", "2000", "pilot paths for the control choice"},
                                            {"rel-budget", "0.02", "relative excess allowed", {}, true},
                                            {"hjb-probes", "100", "classical residual probes", {}, true},
                                            {"hjb-actions", "401", "control grid of the residual", {}, true},
                                            {"hjb-u-max", "4", "control bound of the residual", {}, true},
                                            {"residual-tol", "1e-3", "residual tolerance", {}, true}},
                     {},
                     cmd_value_lq});
        c.push_back({"dpp-check",
                     "dynamic programming residuals",
                     sim_params("1e-3", "20000", "3") +
                         std::vector<Param>{{"fixture", "all", "problem", control_fixtures_all},
                                            {"t-list", "0.1,0.5", "intermediate times"},
                                            {"z", "1", "initial endpoint"},
                                            {"lhs-paths", "100000", "paths of the left side", {}, true},
                                            {"inner-paths", "200", "nested paths", {}, true},
                                            {"selection-paths", "2000", "pilot paths"},
                                            {"budget-rel", "0.05", "relative discretization budget"}},
                     {{"exp-memory",
                       {{"dt", "1e-2"}, {"paths", "120"}, {"inner-paths", "150"}, {"horizon", "2"}, {"t-list", "0.5"},
                        {"lhs-paths", "20000"}, {"selection-paths", "0"}}}},
                     cmd_dpp_check});
        c.push_back({"lipschitz-v",
                     "value Lipschitz ratios across dt",
                     sim_params("1e-2", "1000", "3") +
                         std::vector<Param>{{"fixture", "all", "problem", control_fixtures_all},
                                            {"pairs", "4", "history pairs", {}, true},
                                            {"pair-seed", "3", "seed of the pairs"},
                                            {"dt-list", "1e-2,5e-3", "time steps compared"},
                                            {"factor", "2", "allowed ratio change", {}, true}},
                     {{"exp-memory", {{"horizon", "2"}}}},
                     cmd_lipschitz_v});
        c.push_back({"shift-modulus",
                     "value shift modulus fit",
                     sim_params("1e-2", "4000", "3") +
                         std::vector<Param>{{"fixture", "all", "problem", control_fixtures_all},
                                            {"z", "1", "initial endpoint"},
                                            {"deltas", "0.01,0.1,0.5", "shifts"},
                                            {"factor", "2", "allowed growth of the fitted constant", {}, true}},
                     {{"exp-memory", {{"horizon", "2"}}}},
                     cmd_shift_modulus});
        c.push_back({"hjb-residual",
                     "classical HJB residual of the Riccati functional and viscosity probes",
                     {{"seed", "1", "random seed"},
                      {"lambda", "3", "discount", {}, true},
                      {"sigma", "1", "volatility"},
                      {"hjb-probes", "100", "probes", {}, true},
                      {"hjb-actions", "401", "control grid", {}, true},
                      {"hjb-u-max", "4", "control bound", {}, true},
                      {"viscosity-samples", "2000", "membership samples", {}, true},
                      {"residual-tol", "1e-3", "tolerance", {}, true}},
                     {},
                     cmd_hjb_residual});
        c.push_back({"stability",
                     "coefficient perturbation ladders",
                     sim_params("1e-2", "2000", "3") +
                         std::vector<Param>{{"fixture", "lq", "problem", control_fixtures},
                                            {"eps", "0.2,0.1,0.05", "perturbation sizes"},
                                            {"z-list", "-1,0.5,1", "initial endpoints"}},
                     {{"exp-memory", {{"horizon", "2"}}}},
                     cmd_stability});
        c.push_back({"reduce-check",
                     "no-delay reduction probe and embedding check",
                     sim_params("1e-2", "4000", "3") +
                         std::vector<Param>{{"fixture", "lq", "problem", control_fixtures},
                                            {"probes", "64", "perturbation probes", {}, true},
                                            {"z", "1", "endpoint of the embedding check"}},
                     {{"exp-memory", {{"horizon", "2"}}}},
                     cmd_reduce_check});
        return c;
    }();
    return cmds;
}

}  // namespace

RunConfig RunConfig::for_fixture(const std::string& fixture) const {
    RunConfig c = *this;
    c.fixture_values.clear();
    const auto it = fixture_values.find(fixture);
    if (it != fixture_values.end())
        for (const auto& [k, v] : it->second) c.values[k] = v;
    return c;
}

const std::string& RunConfig::str(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError("missing setting '" + key + "' for " + command);
    return it->second;
}

double RunConfig::num(const std::string& key) const {
    const std::string& s = str(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("--" + key + ": not a number: '" + s + "'");
    }
}

std::size_t RunConfig::count(const std::string& key) const {
    const double v = num(key);
    if (v < 0.0 || v != std::floor(v) || v > 1e15) throw ConfigError("--" + key + ": expected a whole number");
    return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::seed() const { return static_cast<std::uint64_t>(count("seed")); }

std::vector<double> RunConfig::list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--" + key + ": bad list entry '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("--" + key + ": empty list");
    return out;
}

SimConfig RunConfig::sim() const {
    SimConfig s;
    s.dt = num("dt");
    s.horizon = num("horizon");
    s.paths = count("paths");
    s.seed = seed();
    s.threads = threads;
    return s;
}

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& c : commands()) n.push_back(c.name);
        return n;
    }();
    return names;
}

namespace {

// key=value lines; keys under [section] apply only to that subcommand
std::map<std::string, std::string> read_config_file(const std::string& path, const std::string& command) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::ParseError& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    std::map<std::string, std::string> kv;
    for (const auto& it : items) {
        if (it.name == "++" || it.name == "--") continue;
        std::string section;
        for (const auto& p : it.parents) section += (section.empty() ? "" : ".") + p;
        if (!section.empty() && section != command) continue;
        std::string value;
        for (const auto& v : it.inputs) value += (value.empty() ? "" : ",") + v;
        kv[it.name] = value;
    }
    return kv;
}

}  // namespace

bool parse_args(int argc, const char* const* argv, RunConfig& cfg, std::ostream& out) {
    CLI::App app{"delayhjb - path-dependent control and HJB experiments"};
    app.require_subcommand(1);
    int threads = 1;
    std::string out_path;
    std::string config_path;
    auto add_common = [&](CLI::App* a) {
        std::vector<CLI::Option*> o;
        o.push_back(a->add_option("--config", config_path, "key=value config file (optional [subcommand] sections)"));
        o.push_back(a->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024)));
        o.push_back(a->add_option("--out", out_path, "report CSV path"));
        return o;
    };
    const auto top = add_common(&app);

    const auto& cmds = commands();
    if (argc > 1) {
        const std::string first = argv[1];
        const bool known = std::any_of(cmds.begin(), cmds.end(), [&](const auto& c) { return c.name == first; });
        if (!first.empty() && first[0] != '-' && !known)
            throw ConfigError("unknown subcommand '" + first + "'\n" + app.help());
    }

    std::vector<std::map<std::string, std::string>> given(cmds.size());
    std::vector<std::map<std::string, CLI::Option*>> opts(cmds.size());
    std::vector<std::vector<CLI::Option*>> common(cmds.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        CLI::App* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
        common[i] = add_common(sub);
        for (const auto& p : cmds[i].params) {
            CLI::Option* o = sub->add_option("--" + p.key, given[i][p.key], p.help);
            if (!p.def.empty()) o->default_str(p.def);
            if (!p.choices.empty()) o->check(CLI::IsMember(p.choices));
            opts[i][p.key] = o;
        }
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return false;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return false;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string(e.what()) + "\n" + app.help());
    }

    for (std::size_t i = 0; i < cmds.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        const auto& cmd = cmds[i];
        auto flagged = [&](std::size_t k) { return top[k]->count() + common[i][k]->count() > 0; };
        cfg = RunConfig{};
        cfg.command = cmd.name;

        // precedence: flags > config file > fixture defaults > command defaults
        std::map<std::string, std::string> file;
        if (!config_path.empty()) file = read_config_file(config_path, cmd.name);
        std::set<std::string> from_file;
        for (const auto& [k, v] : file) {
            if (k == "threads" || k == "out") continue;
            if (!opts[i].count(k)) throw ConfigError("config file: unknown key '" + k + "' for " + cmd.name);
            from_file.insert(k);
        }
        auto source = [&](const std::string& k) -> const std::string* {
            if (opts[i][k]->count()) return &given[i][k];
            if (from_file.count(k)) return &file[k];
            return nullptr;
        };
        for (const auto& p : cmd.params) {
            const std::string* v = source(p.key);
            cfg.values[p.key] = v ? *v : p.def;
        }
        if (cfg.has("fixture")) {
            if (!cmd.choices_ok("fixture", cfg.values["fixture"]))
                throw ConfigError("unknown fixture '" + cfg.values["fixture"] + "'");
            const auto it = cmd.fixture_defaults.find(cfg.values["fixture"]);
            if (it != cmd.fixture_defaults.end())
                for (const auto& [k, v] : it->second)
                    if (!source(k)) cfg.values[k] = v;
            if (cfg.values["fixture"] == "all")
                for (const auto& [fx, kv] : cmd.fixture_defaults)
                    for (const auto& [k, v] : kv)
                        if (!source(k) && cfg.values[k] != v) cfg.fixture_values[fx][k] = v;
        }
        for (const auto& p : cmd.params)
            if (!p.choices.empty() && !cmd.choices_ok(p.key, cfg.values[p.key]))
                throw ConfigError("--" + p.key + ": '" + cfg.values[p.key] + "' is not one of the allowed values");

        if (!flagged(1) && file.count("threads")) {
            try {
                threads = std::stoi(file["threads"]);
            } catch (const std::exception&) {
                throw ConfigError("config file: threads must be an integer");
            }
            if (threads < 1 || threads > 1024) throw ConfigError("config file: threads must be in [1, 1024]");
        }
        if (!flagged(2) && file.count("out")) out_path = file["out"];
        cfg.threads = threads;

        for (const auto& p : cmd.params) {
            if (!p.positive) continue;
            if (!(cfg.num(p.key) > 0.0)) throw ConfigError("--" + p.key + " must be positive");
        }
        if (out_path.empty()) {
            const char* dir = std::getenv("DELAYHJB_OUTPUT_DIR");
            out_path = (std::filesystem::path(dir && *dir ? dir : ".") / (cfg.command + ".csv")).string();
        }
        cfg.out = out_path;
        return true;
    }
    throw ConfigError("no subcommand given\n" + app.help());
}

int run(const RunConfig& cfg, std::ostream& log) {
    for (const auto& c : commands())
        if (c.name == cfg.command) {
            const int code = c.handler(cfg, log);
            log << "report: " << cfg.out << '\n';
            return code;
        }
    throw ConfigError("unknown subcommand '" + cfg.command + "'");
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        if (!parse_args(argc, argv, cfg, out)) return ok;
        return run(cfg, out);
    } catch (const std::invalid_argument& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return invalid_config;
    } catch (const std::exception& e) {
        err << "runtime fault: " << e.what() << '\n';
        return runtime_fault;
    }
}

}  // namespace delayhjb::cli
