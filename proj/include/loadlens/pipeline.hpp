#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "loadlens/common.hpp"
#include "loadlens/dataset.hpp"
#include "loadlens/decomposition.hpp"
#include "loadlens/errors.hpp"
#include "loadlens/features.hpp"
#include "loadlens/interpret.hpp"
#include "loadlens/metrics.hpp"
#include "loadlens/model.hpp"
#include "loadlens/similarity.hpp"

namespace loadlens {

/// Declarative description of one run: dataset source, windowing, kernel
/// selection, model and training settings, output directory.
struct RunConfig {
    enum class SourceKind { Synthetic, Csv };

    json raw; // normalized config document (hash source)

    std::uint64_t seed = 1;
    std::string output_dir = "out";
    SourceKind source = SourceKind::Synthetic;
    SyntheticSpec synthetic;
    std::string csv_path;
    CsvSchema csv_schema;

    int history = 96;
    int horizon = 24;
    int stride = 1;
    std::size_t lookforward = 768;

    bool kernels_auto = false;
    int auto_n = 5;
    std::vector<int> periods;

    SplitSpec split;

    int embed_dim = 32;
    int attention_layers = 2;
    int heads = 4;
    int ffn_dim = 64;
    int conv_channels = 32;
    int conv_layers = 2;
    int conv_kernel = 3;
    int feature_hidden = 16;
    AblationConfig ablation;

    TrainConfig train;
    bool emit_images = false;
};

/// Odd smoothing kernel for a detected period: even periods widen by one.
inline int kernel_size_for_period(int period_hours) {
    if (period_hours < 1) throw ConfigError("period must be >= 1 hour");
    return period_hours % 2 == 0 ? period_hours + 1 : period_hours;
}

namespace detail {

inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json* cursor = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("empty key segment in override '" + assignment + "'");
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*cursor)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        cursor = &(*cursor)[key];
        start = dot + 1;
    }
}

} // namespace detail

inline RunConfig run_config_from_json(json doc) {
    RunConfig cfg;
    if (!doc.is_object()) throw ConfigError("run config must be a JSON object");

    cfg.seed = doc.value("seed", std::uint64_t{1});
    cfg.output_dir = doc.value("output_dir", std::string("out"));
    cfg.emit_images = doc.value("emit_images", false);

    if (!doc.contains("dataset") || !doc.at("dataset").is_object())
        throw ConfigError("run config needs a dataset object");
    const json& ds = doc.at("dataset");
    const std::string kind = ds.value("kind", "");
    const bool has_synth = ds.contains("synthetic");
    const bool has_csv = ds.contains("csv");
    if (kind == "synthetic") {
        if (has_csv) throw ConfigError("dataset must have exactly one source");
        cfg.source = RunConfig::SourceKind::Synthetic;
        const json sj = has_synth ? ds.at("synthetic") : json::object();
        cfg.synthetic.length = sj.value("length", std::size_t{4000});
        cfg.synthetic.seed = sj.value("seed", cfg.seed);
        cfg.synthetic.trend_slope = sj.value("trend_slope", 0.0);
        cfg.synthetic.noise_stddev = sj.value("noise_stddev", 0.1);
        cfg.synthetic.temperature_period = sj.value("temperature_period", 160.0);
        cfg.synthetic.temperature_amplitude = sj.value("temperature_amplitude", 1.0);
        cfg.synthetic.seasonal.clear();
        if (sj.contains("seasonal"))
            for (const auto& s : sj.at("seasonal"))
                cfg.synthetic.seasonal.push_back({s.at("period_hours").get<double>(),
                                                  s.at("amplitude").get<double>(),
                                                  s.value("phase", 0.0)});
        if (sj.contains("coupling"))
            for (const auto& [name, v] : sj.at("coupling").items())
                cfg.synthetic.coupling[name] = v.get<double>();
        cfg.synthetic.coupling_lag = sj.value("coupling_lag", std::size_t{0});
        cfg.synthetic.validate();
    } else if (kind == "csv") {
        if (has_synth) throw ConfigError("dataset must have exactly one source");
        if (!has_csv) throw ConfigError("csv dataset needs a csv object");
        cfg.source = RunConfig::SourceKind::Csv;
        const json& cj = ds.at("csv");
        cfg.csv_path = cj.at("path").get<std::string>();
        cfg.csv_schema.timestamp_column = cj.value("timestamp_column", std::string("timestamp"));
        cfg.csv_schema.load_column = cj.value("load_column", std::string("load"));
        cfg.csv_schema.feature_columns =
            cj.value("feature_columns", std::vector<std::string>{});
    } else {
        throw ConfigError("dataset.kind must be 'synthetic' or 'csv'");
    }

    if (doc.contains("window")) {
        const json& w = doc.at("window");
        cfg.history = w.value("history", 96);
        cfg.horizon = w.value("horizon", 24);
        cfg.stride = w.value("stride", 1);
    }
    if (cfg.history < 1 || cfg.horizon < 1 || cfg.stride < 1)
        throw ConfigError("window history/horizon/stride must be >= 1");

    if (doc.contains("similarity"))
        cfg.lookforward = doc.at("similarity").value("lookforward", std::size_t{768});

    if (!doc.contains("kernels")) throw ConfigError("run config needs a kernels object");
    const json& k = doc.at("kernels");
    if (k.contains("auto") == k.contains("periods"))
        throw ConfigError("kernels needs exactly one of 'auto' or 'periods'");
    if (k.contains("auto")) {
        cfg.kernels_auto = true;
        cfg.auto_n = k.at("auto").get<int>();
        if (cfg.auto_n < 1) throw ConfigError("kernels.auto must be >= 1");
    } else {
        cfg.periods = k.at("periods").get<std::vector<int>>();
        if (cfg.periods.empty()) throw ConfigError("kernels.periods must be non-empty");
    }

    if (doc.contains("split")) {
        const json& s = doc.at("split");
        cfg.split.ratios = {s.value("train", 0.7), s.value("val", 0.2), s.value("test", 0.1)};
    }
    cfg.split.validate();

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        cfg.embed_dim = m.value("embed_dim", 32);
        cfg.attention_layers = m.value("attention_layers", 2);
        cfg.heads = m.value("heads", 4);
        cfg.ffn_dim = m.value("ffn_dim", 64);
        cfg.conv_channels = m.value("conv_channels", 32);
        cfg.conv_layers = m.value("conv_layers", 2);
        cfg.conv_kernel = m.value("conv_kernel", 3);
        cfg.feature_hidden = m.value("feature_hidden", 16);
        if (m.contains("ablation")) {
            const json& ab = m.at("ablation");
            cfg.ablation.disable_trend = ab.value("disable_trend", false);
            cfg.ablation.disable_residual = ab.value("disable_residual", false);
            cfg.ablation.raw_load = ab.value("raw_load", false);
            cfg.ablation.drop_trend_periods = ab.value("drop_trend_periods", std::vector<int>{});
            cfg.ablation.drop_residual_periods =
                ab.value("drop_residual_periods", std::vector<int>{});
        }
    }

    if (doc.contains("train")) {
        const json& t = doc.at("train");
        cfg.train.batch_size = t.value("batch_size", 64);
        cfg.train.epochs = t.value("epochs", 100);
        cfg.train.learning_rate = t.value("learning_rate", 1e-3);
        cfg.train.patience = t.value("patience", 10);
    }
    cfg.train.seed = cfg.seed;
    cfg.train.validate();

    cfg.raw = std::move(doc);
    return cfg;
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {}) {
    json doc = read_json_file(path);
    for (const auto& o : overrides) detail::apply_override(doc, o);
    return run_config_from_json(std::move(doc));
}

/// Stable hash over the normalized config document.
inline std::string config_hash(const RunConfig& cfg) {
    return hash_string(cfg.raw.dump());
}

// --- shared pipeline steps --------------------------------------------------

/// Standardized splits plus their window sets; produced identically by every
/// command so artifacts line up.
struct PreparedData {
    StandardizationState stats;
    TimeSeriesDataset train;
    TimeSeriesDataset val;
    TimeSeriesDataset test;
    std::vector<WindowSample> train_windows;
    std::vector<WindowSample> val_windows;
    std::vector<WindowSample> test_windows;
    std::string dataset_fingerprint;
};

inline TimeSeriesDataset build_dataset(const RunConfig& cfg) {
    if (cfg.source == RunConfig::SourceKind::Synthetic) return generate_synthetic(cfg.synthetic);
    return load_csv(cfg.csv_path, cfg.csv_schema);
}

inline PreparedData prepare_data(const RunConfig& cfg) {
    TimeSeriesDataset full = build_dataset(cfg);
    full.validate();
    PreparedData out;
    out.dataset_fingerprint = full.fingerprint();
    auto parts = split(full, cfg.split);
    out.stats = compute_standardization(parts[0]);
    out.train = standardize(parts[0], out.stats);
    out.val = standardize(parts[1], out.stats);
    out.test = standardize(parts[2], out.stats);
    const std::size_t stride = static_cast<std::size_t>(cfg.stride);
    out.train_windows = make_windows(out.train, static_cast<std::size_t>(cfg.history),
                                     static_cast<std::size_t>(cfg.horizon), stride);
    out.val_windows = make_windows(out.val, static_cast<std::size_t>(cfg.history),
                                   static_cast<std::size_t>(cfg.horizon), stride);
    out.test_windows = make_windows(out.test, static_cast<std::size_t>(cfg.history),
                                    static_cast<std::size_t>(cfg.horizon), stride);
    return out;
}

namespace detail {

inline std::string artifact_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.output_dir) / name).string();
}

inline void stamp(json& j, const RunConfig& cfg) {
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
}

inline std::vector<KernelScale> resolve_scales(const RunConfig& cfg) {
    std::vector<KernelScale> scales;
    if (cfg.kernels_auto) {
        const std::string path = artifact_path(cfg, "kernels.json");
        if (!std::filesystem::exists(path))
            throw ConfigError("kernels are set to auto but " + path +
                              " does not exist; run analyze first");
        const json kj = read_json_file(path);
        const auto periods = kj.at("periods").get<std::vector<int>>();
        const auto sizes = kj.at("kernel_sizes").get<std::vector<int>>();
        if (periods.size() != sizes.size())
            throw ConfigError("kernels.json has mismatched periods/kernel_sizes");
        for (std::size_t i = 0; i < periods.size(); ++i)
            scales.push_back({periods[i], sizes[i]});
    } else {
        for (int p : cfg.periods) scales.push_back({p, kernel_size_for_period(p)});
    }
    return scales;
}

inline std::vector<std::string> dataset_feature_names(const RunConfig& cfg) {
    if (cfg.source == RunConfig::SourceKind::Synthetic)
        return {"temperature", "calendar", "humidity"};
    return cfg.csv_schema.feature_columns;
}

inline ModelConfig build_model_config(const RunConfig& cfg,
                                      const std::vector<KernelScale>& scales) {
    ModelConfig mc;
    mc.history = cfg.history;
    mc.horizon = cfg.horizon;
    mc.scales = scales;
    mc.feature_names = dataset_feature_names(cfg);
    mc.embed_dim = cfg.embed_dim;
    mc.attention_layers = cfg.attention_layers;
    mc.heads = cfg.heads;
    mc.ffn_dim = cfg.ffn_dim;
    mc.conv_channels = cfg.conv_channels;
    mc.conv_layers = cfg.conv_layers;
    mc.conv_kernel = cfg.conv_kernel;
    mc.feature_hidden = cfg.feature_hidden;
    mc.ablation = cfg.ablation;
    mc.seed = cfg.seed;
    mc.validate();
    return mc;
}

} // namespace detail

// --- commands ---------------------------------------------------------------

struct AnalyzeResult {
    std::string profile_path;
    std::string kernels_path;
    std::vector<int> periods;
    std::vector<int> kernel_sizes;
};

/// Profiles lag similarity on the standardized training split and writes
/// profile.json plus kernels.json.
inline AnalyzeResult cmd_analyze(const RunConfig& cfg) {
    PreparedData data = prepare_data(cfg);
    SimilarityProfile profile =
        similarity_profile(data.train.load, static_cast<std::size_t>(cfg.history),
                           cfg.lookforward);

    AnalyzeResult result;
    result.profile_path = detail::artifact_path(cfg, "profile.json");
    json pj = to_json(profile);
    detail::stamp(pj, cfg);
    write_json_file(result.profile_path, pj);
    if (cfg.emit_images)
        detail::write_matrix_ppm(profile.rows, result.profile_path + ".ppm");

    if (cfg.kernels_auto) {
        KernelRecommendation rec = recommend_kernels(profile, static_cast<std::size_t>(cfg.auto_n));
        result.periods.assign(rec.periods.begin(), rec.periods.end());
        result.kernel_sizes.assign(rec.kernel_sizes.begin(), rec.kernel_sizes.end());
    } else {
        for (int p : cfg.periods) {
            result.periods.push_back(p);
            result.kernel_sizes.push_back(kernel_size_for_period(p));
        }
    }
    result.kernels_path = detail::artifact_path(cfg, "kernels.json");
    json kj{{"kind", "kernels"},
            {"periods", result.periods},
            {"kernel_sizes", result.kernel_sizes},
            {"source", cfg.kernels_auto ? "auto" : "explicit"}};
    detail::stamp(kj, cfg);
    write_json_file(result.kernels_path, kj);
    return result;
}

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    TrainingLog log;
    std::string model_fingerprint;
};

/// Trains from the config and writes checkpoint.json plus training_log.json.
inline TrainResult cmd_train(const RunConfig& cfg) {
    PreparedData data = prepare_data(cfg);
    const auto scales = detail::resolve_scales(cfg);
    ModelConfig mc = detail::build_model_config(cfg, scales);

    AdditiveForecaster model(mc);
    PreparedSet train_set = prepare_samples(data.train_windows, mc);
    PreparedSet val_set = prepare_samples(data.val_windows, mc);
    TrainResult result;
    result.log = model.train(train_set, val_set, cfg.train);
    model.set_standardization(data.stats);

    result.checkpoint_path = detail::artifact_path(cfg, "checkpoint.json");
    json cj = checkpoint_to_json(model);
    detail::stamp(cj, cfg);
    cj["seed"] = cfg.seed; // stamp() writes the run seed; keep it authoritative
    write_json_file(result.checkpoint_path, cj);

    result.log_path = detail::artifact_path(cfg, "training_log.json");
    json lj = result.log.to_json();
    lj["kind"] = "training_log";
    detail::stamp(lj, cfg);
    write_json_file(result.log_path, lj);
    result.model_fingerprint = model.fingerprint();
    return result;
}

struct EvaluateResult {
    std::string metrics_path;
    MetricsReport standardized;
    std::optional<MetricsReport> actual;
    double persistence_mse = 0.0;
};

/// Evaluates a checkpoint on the test windows; reports standardized metrics
/// and, when standardization stats are recorded, actual-unit metrics.
inline EvaluateResult cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path) {
    if (!std::filesystem::exists(checkpoint_path))
        throw IoError("checkpoint not found: " + checkpoint_path);
    AdditiveForecaster model = load_checkpoint(checkpoint_path);
    PreparedData data = prepare_data(cfg);
    PreparedSet test_set = prepare_samples(data.test_windows, model.config());
    const nn::Mat pred = model.predict(test_set);

    EvaluateResult result;
    result.standardized = evaluate(to_rows(pred), to_rows(test_set.targets), Units::Standardized);

    nn::Mat persistence(test_set.size(), model.config().horizon);
    for (Eigen::Index i = 0; i < test_set.size(); ++i)
        persistence.row(i).setConstant(
            data.test_windows[static_cast<std::size_t>(i)].history_load.back());
    result.persistence_mse = mse_loss(persistence, test_set.targets);

    json mj{{"kind", "metrics"},
            {"standardized", to_json(result.standardized)},
            {"persistence_mse", result.persistence_mse}};
    if (model.standardization()) {
        const auto& stats = *model.standardization();
        nn::Mat pred_actual = pred;
        nn::Mat targets_actual = test_set.targets;
        for (Eigen::Index r = 0; r < pred_actual.rows(); ++r)
            for (Eigen::Index c = 0; c < pred_actual.cols(); ++c) {
                pred_actual(r, c) = pred_actual(r, c) * stats.load.stddev + stats.load.mean;
                targets_actual(r, c) = targets_actual(r, c) * stats.load.stddev + stats.load.mean;
            }
        result.actual = evaluate(to_rows(pred_actual), to_rows(targets_actual), Units::Actual);
        mj["actual"] = to_json(*result.actual);
    } else {
        mj["actual"] = nullptr;
    }
    detail::stamp(mj, cfg);
    result.metrics_path = detail::artifact_path(cfg, "metrics.json");
    write_json_file(result.metrics_path, mj);
    return result;
}

struct ExplainResult {
    std::string significance_path;
    SignificanceReport report;
};

/// Extracts significance scores from a checkpoint and writes
/// significance.json (plus an optional heatmap image).
inline ExplainResult cmd_explain(const RunConfig& cfg, const std::string& checkpoint_path) {
    if (!std::filesystem::exists(checkpoint_path))
        throw IoError("checkpoint not found: " + checkpoint_path);
    AdditiveForecaster model = load_checkpoint(checkpoint_path);
    TimeSeriesDataset full = build_dataset(cfg);
    ExplainResult result;
    result.report = extract_significance(model, full.fingerprint());
    result.significance_path = detail::artifact_path(cfg, "significance.json");
    json sj = result.report.to_json();
    detail::stamp(sj, cfg);
    write_json_file(result.significance_path, sj);
    if (cfg.emit_images)
        emit_significance_heatmap(result.report, result.significance_path, true);
    return result;
}

struct PerturbResult {
    std::string report_path;
    PerturbationReport report;
};

/// Runs the perturbation harness described by a spec file (JSON array of
/// specs, or an object with a "specs" array) and writes perturbation.json.
inline PerturbResult cmd_perturb(const RunConfig& cfg, const std::string& specs_path) {
    const json sj = read_json_file(specs_path);
    std::vector<PerturbationSpec> specs;
    const json& arr = sj.is_array() ? sj : sj.at("specs");
    for (const auto& item : arr) specs.push_back(perturbation_spec_from_json(item));

    PreparedData data = prepare_data(cfg);
    PerturbationContext ctx;
    ctx.model_config = detail::build_model_config(cfg, detail::resolve_scales(cfg));
    ctx.train_config = cfg.train;
    ctx.train_windows = data.train_windows;
    ctx.val_windows = data.val_windows;
    ctx.test_windows = data.test_windows;

    PerturbResult result;
    result.report = run_perturbations(ctx, specs);
    result.report_path = detail::artifact_path(cfg, "perturbation.json");
    json rj = result.report.to_json();
    detail::stamp(rj, cfg);
    write_json_file(result.report_path, rj);
    return result;
}

} // namespace loadlens
