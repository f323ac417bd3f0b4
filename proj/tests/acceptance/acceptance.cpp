// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is 0 only when every criterion passes.

#include "delayhjb/cli.hpp"
#include "delayhjb/gauge.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

using namespace delayhjb;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

const fs::path& work_dir() {
    static const fs::path d = [] {
        fs::path p = fs::temp_directory_path() / "delayhjb_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

// Runs a subcommand in-process; its log becomes the detail text.
Outcome run_cli(std::vector<std::string> args) {
    const std::string name = args.front();
    args.insert(args.begin(), "delayhjb");
    args.push_back("--out");
    args.push_back((work_dir() / (name + ".csv")).string());
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    Outcome o;
    o.pass = code == cli::ok;
    o.detail = name + " exit " + std::to_string(code) + "\n" + out.str() + err.str();
    return o;
}

Outcome both(Outcome a, const Outcome& b) {
    a.pass = a.pass && b.pass;
    a.detail += b.detail;
    return a;
}

// C1 and C3 share one gauge_verify run.
const std::vector<GaugeCheckRow>& gauge_rows(double* elapsed = nullptr) {
    static double secs = 0.0;
    static const std::vector<GaugeCheckRow> rows = [] {
        GaugeVerifyOptions opt;
        opt.samples = 10000;
        opt.seed = 7;
        opt.counterexample_n = 1000;
        const auto t0 = Clock::now();
        auto r = gauge_verify(opt);
        secs = seconds_since(t0);
        return r;
    }();
    if (elapsed) *elapsed = secs;
    return rows;
}

Outcome gauge_subset(const std::vector<std::string>& checks) {
    Outcome o;
    o.pass = true;
    std::ostringstream d;
    for (const auto& r : gauge_rows()) {
        bool wanted = false;
        for (const auto& c : checks) wanted = wanted || r.check == c;
        if (!wanted) continue;
        d << r.check << " m=" << r.m << " M=" << r.M << " samples=" << r.samples << " violations=" << r.violations
          << '\n';
        o.pass = o.pass && r.violations == 0 && r.samples > 0;
    }
    o.detail = d.str();
    return o;
}

Outcome c1() {
    double secs = 0.0;
    gauge_rows(&secs);
    Outcome o = gauge_subset({"norm_bound_lower", "norm_bound_upper", "subadditivity"});
    o.detail += "gauge suites took " + std::to_string(secs) + " s (limit 10 s)\n";
    o.pass = o.pass && secs < 10.0;
    return o;
}

Outcome c2() {
    DerivativeSuiteOptions opt;
    opt.probes = 1000;
    const auto rep = derivative_suite(opt);
    Outcome o;
    o.pass = rep.ok(0.99);
    std::ostringstream d;
    d << "probes=" << rep.probes.size() << " passed=" << rep.passed << " kink_filtered=" << rep.kink_filtered
      << " failed=" << rep.failed << " pass_fraction=" << rep.pass_fraction() << '\n';
    o.detail = d.str();
    return o;
}

Outcome c3() { return gauge_subset({"counterexample_upsilon_bar", "counterexample_norm1", "dinf_implication"}); }

Outcome c4() { return run_cli({"ito-check"}); }
Outcome c5() { return run_cli({"sde-estimates"}); }
Outcome c6() { return both(run_cli({"value-lq"}), run_cli({"hjb-residual"})); }
Outcome c7() { return run_cli({"dpp-check"}); }
Outcome c8() { return both(run_cli({"lipschitz-v"}), run_cli({"shift-modulus"})); }
Outcome c9() { return run_cli({"bp-search"}); }
Outcome c10() { return run_cli({"stability"}); }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Every subcommand with small budgets through the real executable, at 1 and 8 threads.
Outcome c11() {
    const std::vector<std::string> runs{
        "gauge-verify --samples 500 --counterexample-n 50",
        "deriv-check --probes 60",
        "ito-check --paths 200 --dt 1e-2",
        "bp-search --domains 3 --size 150",
        "simulate --paths 3",
        "sde-estimates --paths 300 --dt-list 1e-2,5e-3",
        "value-lq --paths 500 --dt 1e-2 --selection-paths 100 --hjb-probes 10",
        "dpp-check --fixture lq --dt 1e-2 --paths 300 --lhs-paths 500 --selection-paths 100",
        "dpp-check --fixture exp-memory --paths 20 --inner-paths 20 --lhs-paths 200",
        "lipschitz-v --paths 100 --pairs 2",
        "shift-modulus --paths 200",
        "hjb-residual --hjb-probes 10 --viscosity-samples 100",
        "stability --paths 200",
        "reduce-check --paths 200",
        "reduce-check --fixture exp-memory --paths 50",
    };
    const std::string bin = DELAYHJB_CLI_PATH;
    Outcome o;
    o.pass = true;
    std::ostringstream d;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        std::string body[2];
        int codes[2] = {-1, -1};
        for (int k = 0; k < 2; ++k) {
            const int threads = k == 0 ? 1 : 8;
            const fs::path out = work_dir() / ("det_" + std::to_string(i) + "_t" + std::to_string(threads) + ".csv");
            const std::string cmd = bin + " " + runs[i] + " --seed 13 --threads " + std::to_string(threads) +
                                    " --out " + out.string() + " > /dev/null 2>&1";
            const int rc = std::system(cmd.c_str());
            codes[k] = rc == -1 ? -1 : WEXITSTATUS(rc);
            body[k] = slurp(out);
        }
        const bool same = !body[0].empty() && body[0] == body[1] && codes[0] == codes[1] && codes[0] != 2 &&
                          codes[0] != 3;
        d << (same ? "identical " : "DIFFERENT ") << runs[i] << " (exit " << codes[0] << "/" << codes[1] << ", "
          << body[0].size() << " bytes)\n";
        o.pass = o.pass && same;
    }
    o.detail = d.str();
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* title;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"C1", "gauge norm bounds and subadditivity on 1e4 paths, < 10 s", c1},
        {"C2", "analytic derivatives vs finite differences on 1000 probes", c2},
        {"C3", "counterexample family and gauge property", c3},
        {"C4", "functional Ito formula residuals and dt refinement", c4},
        {"C5", "SDE moment, small-time and coupling constants stable across dt", c5},
        {"C6", "LQ Riccati oracle and classical HJB residual", c6},
        {"C7", "dynamic programming residuals", c7},
        {"C8", "value Lipschitz ratio and shift modulus stability", c8},
        {"C9", "Borwein-Preiss conclusions on 50 domains", c9},
        {"C10", "stability ladders", c10},
        {"C11", "byte-identical reports at 1 and 8 threads", c11},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what() + "\n";
        }
        const double secs = seconds_since(t0);
        std::cout << c.id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << c.title << "  (" << secs << " s)\n";
        std::istringstream lines(o.detail);
        for (std::string line; std::getline(lines, line);)
            if (!line.empty()) std::cout << "    " << line << '\n';
        std::cout.flush();
        failed += o.pass ? 0 : 1;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
    return failed == 0 ? 0 : 1;
}
