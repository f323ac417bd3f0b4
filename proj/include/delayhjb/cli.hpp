#pragma once

#include "delayhjb/control.hpp"
#include "delayhjb/sde.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace delayhjb::cli {

enum ExitCode : int { ok = 0, check_failed = 1, invalid_config = 2, runtime_fault = 3 };

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Effective settings of one run after defaults, config file and flags.
struct RunConfig {
    std::string command;
    std::map<std::string, std::string> values;
    /// fixture -> key -> value replacing `values` for that fixture when the
    /// command runs several fixtures (keys not set by flag or config file)
    std::map<std::string, std::map<std::string, std::string>> fixture_values;
    int threads = 1;
    std::string out;  ///< CSV report path

    bool has(const std::string& key) const { return values.count(key) > 0; }
    const std::string& str(const std::string& key) const;
    double num(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t seed() const;
    std::vector<double> list(const std::string& key) const;
    SimConfig sim() const;  ///< dt, horizon, paths, seed, threads
    RunConfig for_fixture(const std::string& fixture) const;
};

const std::vector<std::string>& subcommands();

/// Parses argv (argv[0] is the program name). Throws ConfigError.
/// Returns false when only help was requested (text written to `out`).
bool parse_args(int argc, const char* const* argv, RunConfig& cfg, std::ostream& out);

/// Runs one subcommand; returns ok or check_failed. Library exceptions propagate.
int run(const RunConfig& cfg, std::ostream& log);

/// parse + run with the exit-code mapping of the command-line tool.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace delayhjb::cli
