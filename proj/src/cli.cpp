#include "epss/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "epss/corpus.hpp"
#include "epss/error.hpp"
#include "epss/explain.hpp"
#include "epss/featurizer.hpp"
#include "epss/io_util.hpp"
#include "epss/labeler.hpp"
#include "epss/lexicon.hpp"
#include "epss/parallel.hpp"
#include "epss/rng.hpp"

namespace epss {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "1.0.0";

json boost_params_to_json(const BoostParams& p) {
    json obj;
    obj["learning_rate"] = p.learning_rate;
    obj["max_depth"] = p.max_depth;
    obj["subsample"] = p.subsample;
    obj["gamma"] = p.gamma;
    obj["max_delta_step"] = p.max_delta_step;
    obj["rounds"] = p.rounds;
    obj["lambda"] = p.lambda;
    obj["min_child_weight"] = p.min_child_weight;
    return obj;
}

void boost_params_from_json(const json& obj, BoostParams& p) {
    if (obj.contains("learning_rate")) p.learning_rate = obj["learning_rate"].get<double>();
    if (obj.contains("max_depth")) p.max_depth = obj["max_depth"].get<int>();
    if (obj.contains("subsample")) p.subsample = obj["subsample"].get<double>();
    if (obj.contains("gamma")) p.gamma = obj["gamma"].get<double>();
    if (obj.contains("max_delta_step")) p.max_delta_step = obj["max_delta_step"].get<double>();
    if (obj.contains("rounds")) p.rounds = obj["rounds"].get<int>();
    if (obj.contains("lambda")) p.lambda = obj["lambda"].get<double>();
    if (obj.contains("min_child_weight"))
        p.min_child_weight = obj["min_child_weight"].get<double>();
}

Date parse_date_or_throw(const std::string& text, const std::string& what) {
    auto d = Date::parse(text);
    if (!d) throw ValidationError("invalid date for " + what + ": " + text);
    return *d;
}

}  // namespace

RunConfig RunConfig::from_json_file(const fs::path& path) {
    json obj = json::parse(read_file(path), nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
        throw ValidationError("config file is not a json object: " + path.string());
    RunConfig cfg;
    if (obj.contains("inputs")) {
        const json& in = obj["inputs"];
        if (in.contains("vulns")) cfg.vulns = in["vulns"].get<std::string>();
        if (in.contains("observations")) cfg.observations = in["observations"].get<std::string>();
        if (in.contains("feeds")) cfg.feeds = in["feeds"].get<std::string>();
        if (in.contains("tweets")) cfg.tweets = in["tweets"].get<std::string>();
    }
    if (obj.contains("window")) {
        const json& w = obj["window"];
        if (w.contains("start"))
            cfg.window_start = parse_date_or_throw(w["start"].get<std::string>(), "window.start");
        if (w.contains("end"))
            cfg.window_end = parse_date_or_throw(w["end"].get<std::string>(), "window.end");
    }
    if (obj.contains("as_of"))
        cfg.as_of = parse_date_or_throw(obj["as_of"].get<std::string>(), "as_of");
    if (obj.contains("horizon")) {
        auto h = horizon_from_name(obj["horizon"].get<std::string>());
        if (!h) throw ValidationError("invalid horizon (expected 6m|1y|2y|3y)");
        cfg.horizon = *h;
    }
    if (obj.contains("min_count")) cfg.min_count = obj["min_count"].get<int>();
    if (obj.contains("seed")) cfg.seed = obj["seed"].get<std::uint64_t>();
    if (obj.contains("out_dir")) cfg.out_dir = obj["out_dir"].get<std::string>();
    if (obj.contains("model_dir")) cfg.model_dir = fs::path(obj["model_dir"].get<std::string>());
    if (obj.contains("strict")) cfg.strict = obj["strict"].get<bool>();
    if (obj.contains("threads")) cfg.threads = obj["threads"].get<int>();
    if (obj.contains("lexicon")) cfg.lexicon_path = fs::path(obj["lexicon"].get<std::string>());
    if (obj.contains("boost")) boost_params_from_json(obj["boost"], cfg.boost);
    if (obj.contains("top_k")) cfg.top_k = obj["top_k"].get<int>();
    if (obj.contains("search_space")) {
        const json& s = obj["search_space"];
        auto range = [&](const char* key, ParamRange& r) {
            if (s.contains(key)) {
                r.lo = s[key].at(0).get<double>();
                r.hi = s[key].at(1).get<double>();
            }
        };
        range("learning_rate", cfg.space.learning_rate);
        range("max_depth", cfg.space.max_depth);
        range("subsample", cfg.space.subsample);
        range("gamma", cfg.space.gamma);
        range("max_delta_step", cfg.space.max_delta_step);
        range("rounds", cfg.space.rounds);
        if (s.contains("horizons")) {
            cfg.space.horizons.clear();
            for (const json& h : s["horizons"]) {
                auto parsed = horizon_from_name(h.get<std::string>());
                if (!parsed) throw ValidationError("search_space: invalid horizon");
                cfg.space.horizons.push_back(*parsed);
            }
        }
        if (s.contains("n_trials")) cfg.n_trials = s["n_trials"].get<int>();
    }
    if (obj.contains("strategies")) {
        for (const json& s : obj["strategies"]) {
            StrategySpec spec;
            spec.name = s.at("name").get<std::string>();
            if (s.contains("feature")) {
                spec.feature = s["feature"].get<std::string>();
                if (s.contains("value")) spec.feature_value = s["value"].get<double>();
            } else if (s.contains("feed")) {
                auto feed = feed_from_name(s["feed"].get<std::string>());
                if (!feed) throw ValidationError("strategies: unknown feed");
                spec.feed = feed;
            } else if (s.contains("score_ge")) {
                spec.score_ge = s["score_ge"].get<double>();
            } else {
                throw ValidationError("strategies: entry needs feature|feed|score_ge");
            }
            cfg.extra_strategies.push_back(std::move(spec));
        }
    }
    if (obj.contains("synth")) {
        const json& s = obj["synth"];
        if (s.contains("n_cves")) cfg.synth.n_cves = s["n_cves"].get<int>();
        if (s.contains("target_prevalence"))
            cfg.synth.target_prevalence = s["target_prevalence"].get<double>();
        if (s.contains("window_start"))
            cfg.synth.window_start =
                parse_date_or_throw(s["window_start"].get<std::string>(), "synth.window_start");
        if (s.contains("window_end"))
            cfg.synth.window_end =
                parse_date_or_throw(s["window_end"].get<std::string>(), "synth.window_end");
        if (s.contains("as_of"))
            cfg.synth.as_of = parse_date_or_throw(s["as_of"].get<std::string>(), "synth.as_of");
    }
    return cfg;
}

std::string RunConfig::to_json() const {
    json obj;
    obj["inputs"] = {{"vulns", vulns.string()},
                     {"observations", observations.string()},
                     {"feeds", feeds.string()},
                     {"tweets", tweets.string()}};
    if (window_start || window_end) {
        json w;
        if (window_start) w["start"] = window_start->to_string();
        if (window_end) w["end"] = window_end->to_string();
        obj["window"] = w;
    }
    if (as_of) obj["as_of"] = as_of->to_string();
    obj["horizon"] = horizon_name(horizon);
    obj["min_count"] = min_count;
    obj["seed"] = seed;
    obj["out_dir"] = out_dir.string();
    if (model_dir) obj["model_dir"] = model_dir->string();
    obj["strict"] = strict;
    obj["threads"] = threads;
    if (lexicon_path) obj["lexicon"] = lexicon_path->string();
    obj["boost"] = boost_params_to_json(boost);
    obj["top_k"] = top_k;
    json space_json;
    auto put = [&](const char* key, const ParamRange& r) {
        space_json[key] = json::array({r.lo, r.hi});
    };
    put("learning_rate", space.learning_rate);
    put("max_depth", space.max_depth);
    put("subsample", space.subsample);
    put("gamma", space.gamma);
    put("max_delta_step", space.max_delta_step);
    put("rounds", space.rounds);
    json horizons = json::array();
    for (Horizon h : space.horizons) horizons.push_back(horizon_name(h));
    space_json["horizons"] = horizons;
    space_json["n_trials"] = n_trials;
    obj["search_space"] = space_json;
    obj["synth"] = {{"n_cves", synth.n_cves},
                    {"target_prevalence", synth.target_prevalence},
                    {"window_start", synth.window_start.to_string()},
                    {"window_end", synth.window_end.to_string()},
                    {"as_of", synth.as_of.to_string()}};
    return obj.dump(2);
}

namespace {

// Records every input read and artifact written, then emits the manifest.
class Manifest {
public:
    Manifest(std::string command, const RunConfig& cfg)
        : command_(std::move(command)), config_json_(cfg.to_json()), out_dir_(cfg.out_dir) {}

    std::string read_input(const fs::path& path) {
        std::string content = read_file(path);
        inputs_[path.string()] = hex64(fnv1a64(content));
        return content;
    }

    void write_artifact(const fs::path& path, const std::string& content) {
        write_file_atomic(path, content);
        outputs_[path.string()] = hex64(fnv1a64(content));
    }

    void finish(std::uint64_t seed) {
        json obj;
        obj["tool_version"] = kToolVersion;
        obj["command"] = command_;
        obj["seed"] = seed;
        obj["config"] = json::parse(config_json_);
        obj["inputs"] = inputs_;
        obj["outputs"] = outputs_;
        write_file_atomic(out_dir_ / (command_ + ".manifest.json"), obj.dump(2));
    }

private:
    std::string command_;
    std::string config_json_;
    fs::path out_dir_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

Lexicon load_lexicon(const RunConfig& cfg, Manifest& manifest) {
    if (cfg.lexicon_path) return Lexicon::from_config(manifest.read_input(*cfg.lexicon_path));
    return Lexicon::bundled();
}

ParsedData load_inputs(const RunConfig& cfg, Manifest& manifest) {
    for (const fs::path* p : {&cfg.vulns, &cfg.observations, &cfg.feeds, &cfg.tweets}) {
        if (p->empty()) throw ValidationError("config: all four input streams are required");
        if (!fs::exists(*p)) throw ValidationError("input file does not exist: " + p->string());
    }
    ParseOptions options;
    options.strict = cfg.strict;
    options.window_start = cfg.window_start;
    options.window_end = cfg.window_end;
    return parse_corpus(manifest.read_input(cfg.vulns), manifest.read_input(cfg.observations),
                        manifest.read_input(cfg.feeds), manifest.read_input(cfg.tweets), options);
}

Date require_as_of(const RunConfig& cfg) {
    if (!cfg.as_of) throw ValidationError("config: as_of is required for this subcommand");
    return *cfg.as_of;
}

struct ModelBundle {
    FeatureDictionary dictionary;
    std::optional<CvssConversionModel> converter;
    Ensemble model;
};

ModelBundle load_model_bundle(const RunConfig& cfg, Manifest& manifest) {
    fs::path dir = cfg.model_dir.value_or(cfg.out_dir);
    ModelBundle bundle;
    bundle.dictionary = FeatureDictionary::parse(manifest.read_input(dir / "dictionary.tsv"));
    if (fs::exists(dir / "cvss_converter.json"))
        bundle.converter =
            CvssConversionModel::from_json(manifest.read_input(dir / "cvss_converter.json"));
    bundle.model = Ensemble::from_json(manifest.read_input(dir / "model.json"));
    return bundle;
}

void check_fingerprint(const Ensemble& model, const FeatureDictionary& dict) {
    if (!model.dictionary_fingerprint.empty() &&
        model.dictionary_fingerprint != dict.fingerprint())
        throw Error("dictionary fingerprint mismatch: model was trained against a different "
                    "feature dictionary");
}

std::string format_double(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::vector<double> snapshot_scores(const Ensemble& model, const Snapshot& snapshot,
                                    int threads) {
    std::vector<double> scores(snapshot.rows.size());
    parallel_for(snapshot.rows.size(), threads, [&](std::size_t i) {
        scores[i] = model.predict_proba(snapshot.rows[i].features);
    });
    return scores;
}

// ---- subcommands ---------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("synth", cfg);
    SynthParams params = cfg.synth;
    params.seed = cfg.seed;
    SynthOutput synth = generate_synth(params);
    manifest.write_artifact(cfg.out_dir / "synth_vulns.ndjson", synth.vulns);
    manifest.write_artifact(cfg.out_dir / "synth_observations.ndjson", synth.observations);
    manifest.write_artifact(cfg.out_dir / "synth_feeds.ndjson", synth.feeds);
    manifest.write_artifact(cfg.out_dir / "synth_tweets.ndjson", synth.tweets);
    manifest.write_artifact(cfg.out_dir / "synth_truth.ndjson", synth.truth_ndjson());
    json info;
    info["n_cves"] = params.n_cves;
    info["base_rate"] = synth.base_rate;
    info["window_start"] = params.window_start.to_string();
    info["window_end"] = params.window_end.to_string();
    info["as_of"] = params.as_of.to_string();
    info["target_prevalence"] = params.target_prevalence;
    manifest.write_artifact(cfg.out_dir / "synth_info.json", info.dump(2));
    manifest.finish(cfg.seed);
    out << "synth: wrote " << params.n_cves << " CVEs under " << cfg.out_dir.string() << "\n";
    return 0;
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("ingest", cfg);
    ParsedData data = load_inputs(cfg, manifest);
    manifest.write_artifact(cfg.out_dir / "corpus_vulns.ndjson", serialize_vulns(data.corpus));
    manifest.write_artifact(cfg.out_dir / "corpus_observations.ndjson",
                            serialize_observations(data.activity));
    manifest.write_artifact(cfg.out_dir / "corpus_feeds.ndjson", serialize_feeds(data.feeds));
    manifest.write_artifact(cfg.out_dir / "corpus_tweets.ndjson", serialize_tweets(data.tweets));
    manifest.write_artifact(cfg.out_dir / "ingest_report.json", data.report.to_json());
    manifest.finish(cfg.seed);
    out << "ingest: " << data.report.vulns_accepted << " vulns, "
        << data.report.observations_accepted << " observations, " << data.report.feeds_accepted
        << " feed rows, " << data.report.tweets_accepted << " tweet rows; "
        << data.report.rejected.size() << " rejected\n";
    return 0;
}

// Shared train-time assembly: dictionary/converter built at the training
// knowledge cutoff, rows over [as_of - horizon, as_of - 30d].
struct TrainContext {
    ParsedData data;
    Lexicon lexicon;
    FeatureDictionary dictionary;
    std::optional<CvssConversionModel> converter;
    Date horizon_start;
    Date horizon_end;
};

TrainContext make_train_context(const RunConfig& cfg, Manifest& manifest) {
    TrainContext ctx{load_inputs(cfg, manifest), load_lexicon(cfg, manifest), {}, {}, Date{0},
                     Date{0}};
    Date as_of = require_as_of(cfg);
    ctx.horizon_end = as_of.minus_days(kForwardWindowDays);
    ctx.horizon_start = as_of.minus_days(horizon_days(cfg.horizon));
    ctx.dictionary =
        FeatureDictionary::build(ctx.data.corpus, ctx.lexicon, ctx.horizon_end, cfg.min_count);
    ctx.converter = build_cvss_converter(ctx.data.corpus, ctx.horizon_end,
                                         derive_seed(cfg.seed, "cvss_converter"));
    return ctx;
}

int cmd_featurize(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("featurize", cfg);
    ParsedData data = load_inputs(cfg, manifest);
    Lexicon lexicon = load_lexicon(cfg, manifest);
    Date as_of = require_as_of(cfg);
    FeatureDictionary dictionary =
        FeatureDictionary::build(data.corpus, lexicon, as_of, cfg.min_count);
    auto converter =
        build_cvss_converter(data.corpus, as_of, derive_seed(cfg.seed, "cvss_converter"));
    FeatureExtractor extractor(data.corpus, data.feeds, data.tweets, dictionary, lexicon,
                               converter ? &*converter : nullptr);
    Snapshot snapshot = build_snapshot(extractor, data.activity, as_of, /*labeled=*/false);
    manifest.write_artifact(cfg.out_dir / "dictionary.tsv", dictionary.serialize());
    if (converter)
        manifest.write_artifact(cfg.out_dir / "cvss_converter.json", converter->to_json());
    manifest.write_artifact(cfg.out_dir / ("snapshot_" + as_of.to_string() + ".ndjson"),
                            serialize_snapshot(snapshot));
    json report;
    report["dictionary_size"] = dictionary.size();
    report["dictionary_fingerprint"] = dictionary.fingerprint();
    report["snapshot_rows"] = snapshot.rows.size();
    report["missing_cvss"] = extractor.missing_cvss().size();
    manifest.write_artifact(cfg.out_dir / "featurize_report.json", report.dump(2));
    manifest.finish(cfg.seed);
    out << "featurize: dictionary of " << dictionary.size() << " features, snapshot of "
        << snapshot.rows.size() << " rows\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("train", cfg);
    TrainContext ctx = make_train_context(cfg, manifest);
    FeatureExtractor extractor(ctx.data.corpus, ctx.data.feeds, ctx.data.tweets, ctx.dictionary,
                               ctx.lexicon, ctx.converter ? &*ctx.converter : nullptr);
    auto rows = build_training_rows(extractor, ctx.data.activity, ctx.horizon_start,
                                    ctx.horizon_end, cfg.threads);
    if (rows.empty()) throw Error("train: no training rows in horizon");
    auto instances = rows_to_instances(rows);
    BoostParams params = cfg.boost;
    params.seed = derive_seed(cfg.seed, "train");
    Ensemble model = train(instances, params, ctx.dictionary.fingerprint(), cfg.threads);

    manifest.write_artifact(cfg.out_dir / "dictionary.tsv", ctx.dictionary.serialize());
    if (ctx.converter)
        manifest.write_artifact(cfg.out_dir / "cvss_converter.json", ctx.converter->to_json());
    manifest.write_artifact(cfg.out_dir / "rows.ndjson",
                            serialize_rows(rows, ctx.dictionary.fingerprint()));
    manifest.write_artifact(cfg.out_dir / "model.json", model.to_json());
    double weight = 0.0, positive = 0.0;
    for (const TrainingRow& row : rows) {
        weight += row.exposure;
        positive += row.exploited_days;
    }
    json report;
    report["rows"] = rows.size();
    report["cves"] = ctx.data.corpus.size();
    report["day_weight"] = weight;
    report["label_prevalence"] = positive / weight;
    report["base_margin"] = model.base_margin;
    report["dictionary_size"] = ctx.dictionary.size();
    report["horizon_start"] = ctx.horizon_start.to_string();
    report["horizon_end"] = ctx.horizon_end.to_string();
    manifest.write_artifact(cfg.out_dir / "train_report.json", report.dump(2));
    manifest.finish(cfg.seed);
    out << "train: " << rows.size() << " rows, " << model.trees.size()
        << " trees, base margin " << format_double(model.base_margin, 4) << "\n";
    return 0;
}

int cmd_score(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("score", cfg);
    ParsedData data = load_inputs(cfg, manifest);
    Lexicon lexicon = load_lexicon(cfg, manifest);
    ModelBundle bundle = load_model_bundle(cfg, manifest);
    check_fingerprint(bundle.model, bundle.dictionary);
    FeatureExtractor extractor(data.corpus, data.feeds, data.tweets, bundle.dictionary, lexicon,
                               bundle.converter ? &*bundle.converter : nullptr);
    Date as_of = require_as_of(cfg);
    Snapshot snapshot = build_snapshot(extractor, data.activity, as_of, /*labeled=*/false);
    std::vector<double> scores = snapshot_scores(bundle.model, snapshot, cfg.threads);

    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    std::string csv = "cve_id,probability,percentile\n";
    for (std::size_t i = 0; i < snapshot.rows.size(); ++i) {
        auto at_or_below = static_cast<double>(
            std::upper_bound(sorted.begin(), sorted.end(), scores[i]) - sorted.begin());
        double percentile = 100.0 * at_or_below / static_cast<double>(sorted.size());
        csv += snapshot.rows[i].cve_id;
        csv += ',';
        csv += format_double(scores[i]);
        csv += ',';
        csv += format_double(percentile);
        csv += '\n';
    }
    manifest.write_artifact(cfg.out_dir / "scores.csv", csv);
    manifest.finish(cfg.seed);
    out << "score: " << snapshot.rows.size() << " CVEs scored at " << as_of.to_string() << "\n";
    return 0;
}

struct EvalContext {
    Snapshot snapshot;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
};

EvalContext make_eval_context(const RunConfig& cfg, Manifest& manifest,
                              ParsedData* keep_data = nullptr,
                              std::optional<FeatureDictionary>* keep_dict = nullptr) {
    ParsedData data = load_inputs(cfg, manifest);
    Lexicon lexicon = load_lexicon(cfg, manifest);
    ModelBundle bundle = load_model_bundle(cfg, manifest);
    check_fingerprint(bundle.model, bundle.dictionary);
    FeatureExtractor extractor(data.corpus, data.feeds, data.tweets, bundle.dictionary, lexicon,
                               bundle.converter ? &*bundle.converter : nullptr);
    EvalContext ctx;
    ctx.snapshot = build_snapshot(extractor, data.activity, require_as_of(cfg), true);
    ctx.scores = snapshot_scores(bundle.model, ctx.snapshot, cfg.threads);
    ctx.labels.reserve(ctx.snapshot.rows.size());
    for (const SnapshotRow& row : ctx.snapshot.rows) ctx.labels.push_back(row.label ? 1 : 0);
    if (keep_data) *keep_data = std::move(data);
    if (keep_dict) *keep_dict = std::move(bundle.dictionary);
    return ctx;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("eval", cfg);
    EvalContext ctx = make_eval_context(cfg, manifest);
    PRCurve curve = pr_curve(ctx.scores, ctx.labels);
    double auc = auc_pr(curve);
    BestF1 best = best_f1(curve);

    std::string tsv = "threshold\ttp\tfp\tfn\tprecision\trecall\teffort\n";
    for (const PrPoint& p : curve.points) {
        tsv += format_double(p.threshold) + "\t" + format_double(p.tp, 0) + "\t" +
               format_double(p.fp, 0) + "\t" + format_double(p.fn, 0) + "\t" +
               format_double(p.precision) + "\t" + format_double(p.recall) + "\t" +
               format_double(p.effort) + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "pr_curve.tsv", tsv);
    json metrics;
    metrics["auc_pr"] = auc;
    metrics["universe"] = curve.universe;
    metrics["positives"] = curve.positives;
    metrics["best_f1"] = {{"threshold", best.threshold}, {"f1", best.f1},
                          {"efficiency", best.efficiency}, {"coverage", best.coverage},
                          {"effort", best.effort}};
    manifest.write_artifact(cfg.out_dir / "eval_metrics.json", metrics.dump(2));
    manifest.finish(cfg.seed);
    out << "eval: auc_pr " << format_double(auc, 4) << ", best F1 " << format_double(best.f1, 4)
        << " at threshold " << format_double(best.threshold, 4) << "\n";
    return 0;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("calibrate", cfg);
    EvalContext ctx = make_eval_context(cfg, manifest);
    CalibrationReport report = calibration_bins(ctx.scores, ctx.labels);
    std::string tsv = "bin\tlower\tupper\tmean_predicted\tobserved_rate\tcount\n";
    for (std::size_t b = 0; b < report.bins.size(); ++b) {
        const CalibrationBin& bin = report.bins[b];
        tsv += std::to_string(b) + "\t" + format_double(bin.lower) + "\t" +
               format_double(bin.upper) + "\t" + format_double(bin.mean_predicted) + "\t" +
               format_double(bin.observed_rate) + "\t" + std::to_string(bin.count) + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "calibration.tsv", tsv);
    json metrics;
    metrics["brier"] = report.brier;
    metrics["bins"] = report.bins.size();
    metrics["scheme"] = "quantile";
    manifest.write_artifact(cfg.out_dir / "calibration_metrics.json", metrics.dump(2));
    manifest.finish(cfg.seed);
    out << "calibrate: brier " << format_double(report.brier, 6) << "\n";
    return 0;
}

int cmd_explain(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("explain", cfg);
    ParsedData data = load_inputs(cfg, manifest);
    Lexicon lexicon = load_lexicon(cfg, manifest);
    ModelBundle bundle = load_model_bundle(cfg, manifest);
    check_fingerprint(bundle.model, bundle.dictionary);
    FeatureExtractor extractor(data.corpus, data.feeds, data.tweets, bundle.dictionary, lexicon,
                               bundle.converter ? &*bundle.converter : nullptr);
    Snapshot snapshot = build_snapshot(extractor, data.activity, require_as_of(cfg), false);

    std::vector<Attribution> attributions(snapshot.rows.size());
    parallel_for(snapshot.rows.size(), cfg.threads, [&](std::size_t i) {
        attributions[i] = tree_shap(bundle.model, snapshot.rows[i].features);
    });

    // Attributions are on the margin scale; probability is a derived column.
    std::string tsv = "cve_id\tphi0\tmargin\tprobability\ttop_features\n";
    for (std::size_t i = 0; i < snapshot.rows.size(); ++i) {
        const Attribution& a = attributions[i];
        std::vector<std::pair<std::uint32_t, double>> items(a.phi.begin(), a.phi.end());
        std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) {
            return std::abs(x.second) > std::abs(y.second);
        });
        std::string top;
        for (std::size_t k = 0; k < items.size() && k < static_cast<std::size_t>(cfg.top_k);
             ++k) {
            if (k) top += ",";
            top += bundle.dictionary.def(items[k].first).name + "=" +
                   format_double(items[k].second, 4);
        }
        tsv += snapshot.rows[i].cve_id + "\t" + format_double(a.phi0, 6) + "\t" +
               format_double(a.margin, 6) + "\t" + format_double(sigmoid(a.margin)) + "\t" +
               top + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "attributions.tsv", tsv);

    AttributionSummary summary = aggregate(attributions, bundle.dictionary);
    std::string feature_tsv = "rank\tfeature\tclass\tmean_abs_phi\n";
    for (std::size_t r = 0; r < summary.features.size(); ++r) {
        const FeatureImportance& f = summary.features[r];
        if (f.mean_abs_phi <= 0 && r >= 30) break;
        feature_tsv += std::to_string(r + 1) + "\t" + f.name + "\t" +
                       feature_class_name(bundle.dictionary.def(f.feature).cls) + "\t" +
                       format_double(f.mean_abs_phi, 8) + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "feature_importance.tsv", feature_tsv);

    std::string class_tsv = "class\tmean_abs_phi\tvalues\tp50\tp90\tp99\tmax\n";
    for (const ClassImportance& c : summary.classes) {
        auto quantile = [&](double q) {
            if (c.abs_values.empty()) return 0.0;
            std::size_t idx = static_cast<std::size_t>(
                q * static_cast<double>(c.abs_values.size() - 1));
            return c.abs_values[idx];
        };
        class_tsv += std::string(feature_class_name(c.cls)) + "\t" +
                     format_double(c.mean_abs_phi, 8) + "\t" +
                     std::to_string(c.abs_values.size()) + "\t" + format_double(quantile(0.5), 8) +
                     "\t" + format_double(quantile(0.9), 8) + "\t" +
                     format_double(quantile(0.99), 8) + "\t" +
                     format_double(c.abs_values.empty() ? 0.0 : c.abs_values.back(), 8) + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "class_importance.tsv", class_tsv);
    manifest.finish(cfg.seed);
    out << "explain: " << snapshot.rows.size() << " attributions\n";
    return 0;
}

int cmd_strategies(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("strategies", cfg);
    ParsedData data = load_inputs(cfg, manifest);
    Lexicon lexicon = load_lexicon(cfg, manifest);
    ModelBundle bundle = load_model_bundle(cfg, manifest);
    check_fingerprint(bundle.model, bundle.dictionary);
    FeatureExtractor extractor(data.corpus, data.feeds, data.tweets, bundle.dictionary, lexicon,
                               bundle.converter ? &*bundle.converter : nullptr);
    Snapshot snapshot = build_snapshot(extractor, data.activity, require_as_of(cfg), true);
    std::vector<double> scores = snapshot_scores(bundle.model, snapshot, cfg.threads);

    std::vector<StrategySpec> specs = builtin_strategies();
    for (const StrategySpec& s : cfg.extra_strategies) specs.push_back(s);
    auto outcomes = run_strategies(specs, snapshot, extractor, scores);

    std::string tsv = "strategy\tselected\texploited\ttp\tefficiency\tcoverage\teffort\n";
    for (const StrategyOutcome& o : outcomes) {
        tsv += o.strategy + "\t" + std::to_string(o.selected) + "\t" +
               std::to_string(o.exploited) + "\t" + std::to_string(o.tp) + "\t" +
               format_double(o.efficiency) + "\t" + format_double(o.coverage) + "\t" +
               format_double(o.effort) + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "strategies.tsv", tsv);
    manifest.finish(cfg.seed);
    out << "strategies: evaluated " << outcomes.size() << " strategies over "
        << snapshot.rows.size() << " CVEs\n";
    return 0;
}

int cmd_sweep_horizon(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("sweep-horizon", cfg);
    ParsedData data = load_inputs(cfg, manifest);
    Lexicon lexicon = load_lexicon(cfg, manifest);
    Date as_of = require_as_of(cfg);
    Date horizon_end = as_of.minus_days(kForwardWindowDays);
    FeatureDictionary dictionary =
        FeatureDictionary::build(data.corpus, lexicon, horizon_end, cfg.min_count);
    auto converter = build_cvss_converter(data.corpus, horizon_end,
                                          derive_seed(cfg.seed, "cvss_converter"));
    FeatureExtractor extractor(data.corpus, data.feeds, data.tweets, dictionary, lexicon,
                               converter ? &*converter : nullptr);
    BoostParams params = cfg.boost;
    params.seed = derive_seed(cfg.seed, "sweep");
    auto results =
        horizon_sweep(extractor, data.activity, cfg.space.horizons, params, as_of, cfg.threads);
    std::string tsv = "horizon\tstatus\tn_rows\tauc_pr\n";
    for (const HorizonResult& r : results) {
        tsv += std::string(horizon_name(r.horizon)) + "\t" +
               (r.skipped ? "skipped: " + r.note : "ok") + "\t" + std::to_string(r.n_rows) +
               "\t" + (r.skipped ? "" : format_double(r.auc)) + "\n";
    }
    manifest.write_artifact(cfg.out_dir / "horizon_sweep.tsv", tsv);
    manifest.finish(cfg.seed);
    out << "sweep-horizon: " << results.size() << " horizons evaluated\n";
    return 0;
}

int cmd_tune(const RunConfig& cfg, std::ostream& out) {
    Manifest manifest("tune", cfg);
    TrainContext ctx = make_train_context(cfg, manifest);
    FeatureExtractor extractor(ctx.data.corpus, ctx.data.feeds, ctx.data.tweets, ctx.dictionary,
                               ctx.lexicon, ctx.converter ? &*ctx.converter : nullptr);
    auto rows = build_training_rows(extractor, ctx.data.activity, ctx.horizon_start,
                                    ctx.horizon_end, cfg.threads);
    TuneOutcome outcome = tune(rows, cfg.space, cfg.n_trials, derive_seed(cfg.seed, "tune"),
                               cfg.threads, cfg.boost);
    manifest.write_artifact(cfg.out_dir / "trials.tsv", trial_log_tsv(outcome));
    json best;
    best["params"] = boost_params_to_json(outcome.best);
    best["confirmed_mean_auc"] = outcome.confirmation.mean_auc;
    best["confirmation_failed"] = outcome.confirmation.failed;
    best["surrogate_fit_rmse"] = outcome.surrogate_fit_rmse;
    best["diagnostics"] = outcome.diagnostics;
    manifest.write_artifact(cfg.out_dir / "best_params.json", best.dump(2));
    manifest.finish(cfg.seed);
    out << "tune: " << outcome.trials.size() << " trials, confirmed auc "
        << format_double(outcome.confirmation.mean_auc, 4) << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"EPSS-style exploit prediction pipeline"};
    app.require_subcommand(1);

    std::string config_path, as_of_str, horizon_str, out_dir_str, model_dir_str;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> threads_flag;
    bool strict_flag = false;

    const std::vector<std::string> subcommands = {
        "ingest",     "featurize", "train",      "tune",          "score", "eval",
        "calibrate",  "explain",   "strategies", "sweep-horizon", "synth"};
    for (const std::string& name : subcommands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "path to json run config");
        sub->add_option("--seed", seed_flag, "64-bit run seed");
        sub->add_option("--as-of", as_of_str, "snapshot date YYYY-MM-DD");
        sub->add_option("--horizon", horizon_str, "training horizon: 6m|1y|2y|3y");
        sub->add_option("--out", out_dir_str, "output directory");
        sub->add_option("--model-dir", model_dir_str, "directory holding train artifacts");
        sub->add_flag("--strict", strict_flag, "abort on malformed records");
        sub->add_option("--threads", threads_flag, "worker thread count");
    }

    std::vector<const char*> argv;
    argv.push_back("epss");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << app.help();
        err << json{{"error", e.what()}}.dump() << "\n";
        return 2;
    }

    std::string command = app.get_subcommands().front()->get_name();

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = RunConfig::from_json_file(config_path);
        if (seed_flag) cfg.seed = *seed_flag;
        if (!as_of_str.empty()) cfg.as_of = parse_date_or_throw(as_of_str, "--as-of");
        if (!horizon_str.empty()) {
            auto h = horizon_from_name(horizon_str);
            if (!h) throw ValidationError("invalid --horizon (expected 6m|1y|2y|3y)");
            cfg.horizon = *h;
        }
        if (!out_dir_str.empty()) cfg.out_dir = out_dir_str;
        if (!model_dir_str.empty()) cfg.model_dir = fs::path(model_dir_str);
        if (strict_flag) cfg.strict = true;
        if (threads_flag) cfg.threads = *threads_flag;
        if (cfg.threads < 1) throw ValidationError("threads must be >= 1");
        std::filesystem::create_directories(cfg.out_dir);
    } catch (const std::exception& e) {
        err << json{{"error", e.what()}, {"command", command}}.dump() << "\n";
        return 2;
    }

    try {
        if (command == "synth") return cmd_synth(cfg, out);
        if (command == "ingest") return cmd_ingest(cfg, out);
        if (command == "featurize") return cmd_featurize(cfg, out);
        if (command == "train") return cmd_train(cfg, out);
        if (command == "score") return cmd_score(cfg, out);
        if (command == "eval") return cmd_eval(cfg, out);
        if (command == "calibrate") return cmd_calibrate(cfg, out);
        if (command == "explain") return cmd_explain(cfg, out);
        if (command == "strategies") return cmd_strategies(cfg, out);
        if (command == "sweep-horizon") return cmd_sweep_horizon(cfg, out);
        if (command == "tune") return cmd_tune(cfg, out);
    } catch (const ValidationError& e) {
        err << json{{"error", e.what()}, {"command", command}, {"kind", "validation"}}.dump()
            << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << json{{"error", e.what()}, {"command", command}, {"kind", "pipeline"}}.dump()
            << "\n";
        return 1;
    }
    err << json{{"error", "unknown subcommand"}, {"command", command}}.dump() << "\n";
    return 2;
}

}  // namespace epss
