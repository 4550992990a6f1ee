#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "epss/cli.hpp"
#include "epss/io_util.hpp"
#include "epss/synth.hpp"

using namespace epss;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("epss_test_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::vector<std::string>& args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
    std::ostringstream out, err;
    int status = run_cli(args, out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return status;
}

// Small synthetic corpus written under dir/data, with a config pointing at it.
fs::path prepare_inputs(const TempDir& tmp, int n_cves = 400) {
    fs::path data = tmp.path / "data";
    fs::create_directories(data);
    SynthParams params;
    params.n_cves = n_cves;
    params.seed = 99;
    SynthOutput synth = generate_synth(params);
    write_file_atomic(data / "vulns.ndjson", synth.vulns);
    write_file_atomic(data / "observations.ndjson", synth.observations);
    write_file_atomic(data / "feeds.ndjson", synth.feeds);
    write_file_atomic(data / "tweets.ndjson", synth.tweets);

    json config;
    config["inputs"] = {{"vulns", (data / "vulns.ndjson").string()},
                        {"observations", (data / "observations.ndjson").string()},
                        {"feeds", (data / "feeds.ndjson").string()},
                        {"tweets", (data / "tweets.ndjson").string()}};
    config["window"] = {{"start", params.window_start.to_string()},
                        {"end", params.window_end.to_string()}};
    config["as_of"] = params.as_of.to_string();
    config["horizon"] = "6m";
    config["min_count"] = 5;
    config["seed"] = 7;
    // Small model so the suite stays fast.
    config["boost"] = {{"rounds", 10}, {"max_depth", 5}, {"learning_rate", 0.3},
                       {"gamma", 1.0}, {"subsample", 1.0}};
    fs::path config_path = tmp.path / "config.json";
    write_file_atomic(config_path, config.dump(2));
    return config_path;
}

std::map<fs::path, std::string> hash_tree(const fs::path& dir) {
    std::map<fs::path, std::string> hashes;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) hashes[entry.path()] = file_digest(entry.path());
    }
    return hashes;
}

}  // namespace

TEST_CASE("unknown subcommand and bad flags exit 2") {
    std::string err;
    CHECK(run({"frobnicate"}, nullptr, &err) == 2);
    CHECK(run({"train", "--no-such-flag"}, nullptr, &err) == 2);
    CHECK(run({}, nullptr, &err) == 2);
}

TEST_CASE("config validation failures exit 2") {
    TempDir tmp("cfg");
    std::string err;
    // Missing input files.
    CHECK(run({"train", "--as-of", "2022-11-01", "--out", (tmp.path / "out").string()},
              nullptr, &err) == 2);
    CHECK(err.find("error") != std::string::npos);
    // Bad date flag.
    CHECK(run({"train", "--as-of", "not-a-date"}, nullptr, &err) == 2);
    // Bad horizon.
    CHECK(run({"train", "--horizon", "10y"}, nullptr, &err) == 2);
}

TEST_CASE("synth then ingest then train then score round") {
    TempDir tmp("pipeline");
    fs::path config = prepare_inputs(tmp);
    fs::path out = tmp.path / "out";

    std::string text, err;
    REQUIRE(run({"ingest", "--config", config.string(), "--out", out.string()}, &text, &err) == 0);
    CHECK(fs::exists(out / "ingest_report.json"));
    CHECK(fs::exists(out / "corpus_vulns.ndjson"));
    CHECK(fs::exists(out / "ingest.manifest.json"));

    REQUIRE(run({"train", "--config", config.string(), "--out", out.string()}, &text, &err) == 0);
    CHECK(fs::exists(out / "model.json"));
    CHECK(fs::exists(out / "dictionary.tsv"));
    CHECK(fs::exists(out / "rows.ndjson"));
    CHECK(fs::exists(out / "cvss_converter.json"));

    REQUIRE(run({"score", "--config", config.string(), "--out", out.string(), "--model-dir",
                 out.string()},
                &text, &err) == 0);
    REQUIRE(fs::exists(out / "scores.csv"));
    auto lines = split_lines(read_file(out / "scores.csv"));
    REQUIRE(lines.size() > 1);
    CHECK(lines[0] == "cve_id,probability,percentile");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto first_comma = lines[i].find(',');
        auto second_comma = lines[i].find(',', first_comma + 1);
        REQUIRE(first_comma != std::string::npos);
        REQUIRE(second_comma != std::string::npos);
        double proba = std::stod(lines[i].substr(first_comma + 1, second_comma - first_comma - 1));
        double percentile = std::stod(lines[i].substr(second_comma + 1));
        CHECK(proba >= 0.0);
        CHECK(proba <= 1.0);
        CHECK(percentile >= 0.0);
        CHECK(percentile <= 100.0);
    }
}

TEST_CASE("train is byte-identical across reruns and thread counts") {
    TempDir tmp("det");
    fs::path config = prepare_inputs(tmp);
    fs::path out1 = tmp.path / "out1";
    fs::path out2 = tmp.path / "out2";
    fs::path out3 = tmp.path / "out3";
    REQUIRE(run({"train", "--config", config.string(), "--out", out1.string(), "--threads",
                 "1"}) == 0);
    REQUIRE(run({"train", "--config", config.string(), "--out", out2.string(), "--threads",
                 "4"}) == 0);
    REQUIRE(run({"train", "--config", config.string(), "--out", out3.string(), "--threads",
                 "1"}) == 0);
    CHECK(read_file(out1 / "model.json") == read_file(out2 / "model.json"));
    CHECK(read_file(out1 / "model.json") == read_file(out3 / "model.json"));
    CHECK(read_file(out1 / "rows.ndjson") == read_file(out2 / "rows.ndjson"));
    CHECK(read_file(out1 / "dictionary.tsv") == read_file(out2 / "dictionary.tsv"));
    CHECK(!fs::exists(out1 / "scores.csv"));  // score artifacts belong to `score`
}

TEST_CASE("no subcommand mutates its inputs") {
    TempDir tmp("immutable");
    fs::path config = prepare_inputs(tmp);
    fs::path data = tmp.path / "data";
    auto before = hash_tree(data);
    fs::path out = tmp.path / "out";
    REQUIRE(run({"train", "--config", config.string(), "--out", out.string()}) == 0);
    REQUIRE(run({"eval", "--config", config.string(), "--out", out.string(), "--model-dir",
                 out.string()}) == 0);
    CHECK(hash_tree(data) == before);
}

TEST_CASE("eval, calibrate, strategies, explain artifacts appear and parse") {
    TempDir tmp("reports");
    fs::path config = prepare_inputs(tmp, 500);
    fs::path out = tmp.path / "out";
    REQUIRE(run({"train", "--config", config.string(), "--out", out.string()}) == 0);

    std::string text, err;
    REQUIRE(run({"eval", "--config", config.string(), "--out", out.string(), "--model-dir",
                 out.string()},
                &text, &err) == 0);
    CHECK(fs::exists(out / "pr_curve.tsv"));
    json metrics = json::parse(read_file(out / "eval_metrics.json"));
    CHECK(metrics["auc_pr"].get<double>() >= 0.0);
    CHECK(metrics["auc_pr"].get<double>() <= 1.0);
    CHECK(metrics.contains("best_f1"));

    REQUIRE(run({"calibrate", "--config", config.string(), "--out", out.string(),
                 "--model-dir", out.string()},
                &text, &err) == 0);
    json cal = json::parse(read_file(out / "calibration_metrics.json"));
    CHECK(cal["brier"].get<double>() >= 0.0);
    CHECK(cal["brier"].get<double>() <= 1.0);

    REQUIRE(run({"strategies", "--config", config.string(), "--out", out.string(),
                 "--model-dir", out.string()},
                &text, &err) == 0);
    auto strategy_lines = split_lines(read_file(out / "strategies.tsv"));
    CHECK(strategy_lines.size() == 7);  // header + six built-ins

    REQUIRE(run({"explain", "--config", config.string(), "--out", out.string(), "--model-dir",
                 out.string()},
                &text, &err) == 0);
    CHECK(fs::exists(out / "attributions.tsv"));
    CHECK(fs::exists(out / "feature_importance.tsv"));
    CHECK(fs::exists(out / "class_importance.tsv"));
}

TEST_CASE("manifest records inputs and outputs with digests") {
    TempDir tmp("manifest");
    fs::path config = prepare_inputs(tmp);
    fs::path out = tmp.path / "out";
    REQUIRE(run({"train", "--config", config.string(), "--out", out.string()}) == 0);
    json manifest = json::parse(read_file(out / "train.manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["inputs"].size() >= 4);
    CHECK(manifest["outputs"].contains((out / "model.json").string()));
    // Digests match the files on disk.
    for (const auto& [path, digest] : manifest["outputs"].items()) {
        CHECK(file_digest(path) == digest.get<std::string>());
    }
}

TEST_CASE("featurize emits a dictionary and an unlabeled snapshot") {
    TempDir tmp("featurize");
    fs::path config = prepare_inputs(tmp);
    fs::path out = tmp.path / "out";
    REQUIRE(run({"featurize", "--config", config.string(), "--out", out.string()}) == 0);
    CHECK(fs::exists(out / "dictionary.tsv"));
    json report = json::parse(read_file(out / "featurize_report.json"));
    CHECK(report["dictionary_size"].get<int>() > 55);
    bool found_snapshot = false;
    for (const auto& entry : fs::directory_iterator(out)) {
        if (entry.path().filename().string().rfind("snapshot_", 0) == 0) found_snapshot = true;
    }
    CHECK(found_snapshot);
}

TEST_CASE("sweep-horizon writes the comparison table with skips marked") {
    TempDir tmp("sweep");
    fs::path config = prepare_inputs(tmp);
    fs::path out = tmp.path / "out";
    REQUIRE(run({"sweep-horizon", "--config", config.string(), "--out", out.string()}) == 0);
    auto lines = split_lines(read_file(out / "horizon_sweep.tsv"));
    REQUIRE(lines.size() == 5);  // header + 4 horizons
    CHECK(lines[0].rfind("horizon", 0) == 0);
    // The synthetic window starts 2021-06-01 with as_of 2022-11-01: 2y and 3y
    // horizons must be skipped.
    CHECK(lines[3].find("skipped") != std::string::npos);
    CHECK(lines[4].find("skipped") != std::string::npos);
}

TEST_CASE("synth subcommand writes a loadable corpus plus truth") {
    TempDir tmp("synthcmd");
    fs::path out = tmp.path / "out";
    json config;
    config["synth"] = {{"n_cves", 120}};
    fs::path config_path = tmp.path / "config.json";
    write_file_atomic(config_path, config.dump());
    REQUIRE(run({"synth", "--config", config_path.string(), "--out", out.string(), "--seed",
                 "11"}) == 0);
    CHECK(fs::exists(out / "synth_vulns.ndjson"));
    CHECK(fs::exists(out / "synth_truth.ndjson"));
    auto truth = parse_truth(read_file(out / "synth_truth.ndjson"));
    CHECK(!truth.empty());
    for (const SynthTruth& t : truth) {
        CHECK(t.true_p30 >= 0.0);
        CHECK(t.true_p30 <= 1.0);
    }
    // Determinism: the same seed writes byte-identical streams.
    fs::path out2 = tmp.path / "out2";
    REQUIRE(run({"synth", "--config", config_path.string(), "--out", out2.string(), "--seed",
                 "11"}) == 0);
    CHECK(read_file(out / "synth_vulns.ndjson") == read_file(out2 / "synth_vulns.ndjson"));
    CHECK(read_file(out / "synth_observations.ndjson") ==
          read_file(out2 / "synth_observations.ndjson"));
}

TEST_CASE("fingerprint mismatch between model and dictionary fails") {
    TempDir tmp("fingerprint");
    fs::path config = prepare_inputs(tmp);
    fs::path out = tmp.path / "out";
    REQUIRE(run({"train", "--config", config.string(), "--out", out.string()}) == 0);
    // Corrupt the dictionary: append a bogus feature.
    std::string dict = read_file(out / "dictionary.tsv");
    auto lines = split_lines(dict);
    dict += std::to_string(lines.size() - 2) + "\tvendors\tvendor:bogus\n";
    write_file_atomic(out / "dictionary.tsv", dict);
    std::string err;
    CHECK(run({"score", "--config", config.string(), "--out", out.string(), "--model-dir",
               out.string()},
              nullptr, &err) == 1);
    CHECK(err.find("fingerprint") != std::string::npos);
}
