#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "epss/date.hpp"
#include "epss/eval.hpp"
#include "epss/gbt.hpp"
#include "epss/synth.hpp"
#include "epss/tuner.hpp"

namespace epss {

/// Effective run configuration: config file values overridden by CLI flags.
struct RunConfig {
    std::filesystem::path vulns;
    std::filesystem::path observations;
    std::filesystem::path feeds;
    std::filesystem::path tweets;
    std::optional<Date> window_start;
    std::optional<Date> window_end;
    std::optional<Date> as_of;
    Horizon horizon = Horizon::y1;
    int min_count = 10;
    std::uint64_t seed = 42;
    std::filesystem::path out_dir = "out";
    std::optional<std::filesystem::path> model_dir;  // defaults to out_dir
    bool strict = false;
    int threads = 1;
    std::optional<std::filesystem::path> lexicon_path;
    BoostParams boost;  // Table-style defaults
    SearchSpace space;
    int n_trials = 16;
    std::vector<StrategySpec> extra_strategies;
    SynthParams synth;
    int top_k = 10;

    static RunConfig from_json_file(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Runs one subcommand. Exit status: 0 success, 1 pipeline failure (with a
/// machine-readable error record on err), 2 usage/config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace epss
