#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "loadlens/common.hpp"
#include "loadlens/dataset.hpp"
#include "loadlens/errors.hpp"
#include "loadlens/metrics.hpp"
#include "loadlens/model.hpp"
#include "loadlens/similarity.hpp"

namespace loadlens {

/// Signed significance scores read straight off a model: combiner weights for
/// features (gamma), trend branches (alpha) and residual branches (beta).
struct SignificanceReport {
    std::map<std::string, double> feature_scores;
    std::map<int, double> trend_scores;    // keyed by period hours
    std::map<int, double> residual_scores; // keyed by period hours
    std::string model_fingerprint;
    std::string dataset_fingerprint;

    json to_json() const {
        json features = json::object();
        for (const auto& [name, v] : feature_scores) features[name] = v;
        json trend = json::object();
        for (const auto& [hours, v] : trend_scores) trend[std::to_string(hours)] = v;
        json residual = json::object();
        for (const auto& [hours, v] : residual_scores) residual[std::to_string(hours)] = v;
        return json{{"kind", "significance"}, {"features", features},
                    {"trend", trend},         {"residual", residual},
                    {"model", model_fingerprint}, {"dataset", dataset_fingerprint}};
    }
};

inline SignificanceReport significance_from_json(const json& j) {
    if (j.value("kind", "") != "significance")
        throw IoError("not a significance report");
    SignificanceReport r;
    for (const auto& [name, v] : j.at("features").items())
        r.feature_scores[name] = v.get<double>();
    for (const auto& [hours, v] : j.at("trend").items())
        r.trend_scores[std::stoi(hours)] = v.get<double>();
    for (const auto& [hours, v] : j.at("residual").items())
        r.residual_scores[std::stoi(hours)] = v.get<double>();
    r.model_fingerprint = j.at("model").get<std::string>();
    r.dataset_fingerprint = j.at("dataset").get<std::string>();
    return r;
}

/// Reads combiner weights off the model without touching any parameter.
inline SignificanceReport extract_significance(const AdditiveForecaster& model,
                                               const std::string& dataset_fingerprint = "") {
    SignificanceReport r;
    const auto& names = model.config().feature_names;
    const nn::Mat& gamma = model.feature_bank().gamma().value();
    for (std::size_t q = 0; q < names.size(); ++q)
        r.feature_scores[names[q]] = gamma(0, static_cast<Eigen::Index>(q));
    const auto trend_hours = model.trend_periods();
    for (std::size_t i = 0; i < trend_hours.size(); ++i)
        r.trend_scores[trend_hours[i]] = model.alpha().value()(0, static_cast<Eigen::Index>(i));
    const auto residual_hours = model.residual_periods();
    for (std::size_t i = 0; i < residual_hours.size(); ++i)
        r.residual_scores[residual_hours[i]] =
            model.beta().value()(0, static_cast<Eigen::Index>(i));
    r.model_fingerprint = model.fingerprint();
    r.dataset_fingerprint = dataset_fingerprint;
    return r;
}

/// Cosine similarity of two reports' concatenated (gamma, alpha, beta)
/// vectors in canonical key order (feature names sorted, periods ascending).
inline double compare_significance(const SignificanceReport& a, const SignificanceReport& b) {
    auto keys_equal = [](const auto& x, const auto& y) {
        if (x.size() != y.size()) return false;
        auto it = y.begin();
        for (const auto& [k, v] : x) {
            (void)v;
            if (it->first != k) return false;
            ++it;
        }
        return true;
    };
    if (!keys_equal(a.feature_scores, b.feature_scores))
        throw KeyMismatchError("feature score keys differ");
    if (!keys_equal(a.trend_scores, b.trend_scores))
        throw KeyMismatchError("trend score keys differ");
    if (!keys_equal(a.residual_scores, b.residual_scores))
        throw KeyMismatchError("residual score keys differ");

    auto flatten = [](const SignificanceReport& r) {
        std::vector<double> v;
        for (const auto& [k, val] : r.feature_scores) {
            (void)k;
            v.push_back(val);
        }
        for (const auto& [k, val] : r.trend_scores) {
            (void)k;
            v.push_back(val);
        }
        for (const auto& [k, val] : r.residual_scores) {
            (void)k;
            v.push_back(val);
        }
        return v;
    };
    return cosine_similarity(flatten(a), flatten(b));
}

/// Writes the significance JSON artifact; optionally also a raster heatmap
/// (one row per score group).
inline void emit_significance_heatmap(const SignificanceReport& report, const std::string& path,
                                      bool with_image = false) {
    write_json_file(path, report.to_json());
    if (!with_image) return;
    const std::size_t cols = std::max({report.feature_scores.size(), report.trend_scores.size(),
                                       report.residual_scores.size(), std::size_t{1}});
    std::vector<std::vector<double>> rows(3, std::vector<double>(cols, 0.0));
    std::size_t c = 0;
    for (const auto& [k, v] : report.feature_scores) {
        (void)k;
        rows[0][c++] = v;
    }
    c = 0;
    for (const auto& [k, v] : report.trend_scores) {
        (void)k;
        rows[1][c++] = v;
    }
    c = 0;
    for (const auto& [k, v] : report.residual_scores) {
        (void)k;
        rows[2][c++] = v;
    }
    double hi = 0.0;
    for (const auto& row : rows)
        for (double v : row) hi = std::max(hi, std::abs(v));
    if (hi == 0.0) hi = 1.0;
    detail::write_matrix_ppm(rows, path + ".ppm", -hi, hi);
}

// --- perturbation harness ---------------------------------------------------

/// One ablation row: drop named features and/or per-period branches, retrain,
/// re-evaluate.
struct PerturbationSpec {
    std::string label;
    std::vector<std::string> drop_features;
    std::vector<int> drop_trend_kernels;    // period hours
    std::vector<int> drop_residual_kernels; // period hours
    std::optional<std::uint64_t> retrain_seed;

    std::string effective_label() const {
        if (!label.empty()) return label;
        std::string out;
        for (const auto& f : drop_features) out += (out.empty() ? "" : "+") + ("w/o " + f);
        for (int h : drop_trend_kernels)
            out += (out.empty() ? "" : "+") + ("w/o trend " + std::to_string(h) + "h");
        for (int h : drop_residual_kernels)
            out += (out.empty() ? "" : "+") + ("w/o residual " + std::to_string(h) + "h");
        return out.empty() ? "baseline-copy" : out;
    }

    json to_json() const {
        json j{{"label", effective_label()},
               {"drop_features", drop_features},
               {"drop_trend_kernels", drop_trend_kernels},
               {"drop_residual_kernels", drop_residual_kernels}};
        if (retrain_seed)
            j["retrain_seed"] = *retrain_seed;
        else
            j["retrain_seed"] = nullptr;
        return j;
    }
};

inline PerturbationSpec perturbation_spec_from_json(const json& j) {
    PerturbationSpec s;
    s.label = j.value("label", "");
    s.drop_features = j.value("drop_features", std::vector<std::string>{});
    s.drop_trend_kernels = j.value("drop_trend_kernels", std::vector<int>{});
    s.drop_residual_kernels = j.value("drop_residual_kernels", std::vector<int>{});
    if (j.contains("retrain_seed") && !j.at("retrain_seed").is_null())
        s.retrain_seed = j.at("retrain_seed").get<std::uint64_t>();
    return s;
}

struct PerturbationRow {
    PerturbationSpec spec;
    bool failed = false;
    std::string error;
    MetricsReport metrics;
    double delta_mse = 0.0;
    std::string test_window_fingerprint;
};

struct PerturbationReport {
    MetricsReport baseline;
    std::string baseline_test_fingerprint;
    std::vector<PerturbationRow> rows;

    json to_json() const {
        json rows_json = json::array();
        for (const auto& r : rows) {
            json rj{{"spec", r.spec.to_json()},
                    {"failed", r.failed},
                    {"test_windows", r.test_window_fingerprint}};
            if (r.failed) {
                rj["error"] = r.error;
            } else {
                rj["metrics"] = loadlens::to_json(r.metrics);
                rj["delta_mse"] = r.delta_mse;
            }
            rows_json.push_back(rj);
        }
        return json{{"kind", "perturbation"},
                    {"baseline", loadlens::to_json(baseline)},
                    {"test_windows", baseline_test_fingerprint},
                    {"rows", rows_json}};
    }
};

/// Everything the perturbation harness needs: the base configuration and the
/// standardized train/val/test windows (with the full feature complement).
struct PerturbationContext {
    ModelConfig model_config;
    TrainConfig train_config;
    std::vector<WindowSample> train_windows;
    std::vector<WindowSample> val_windows;
    std::vector<WindowSample> test_windows;
};

namespace detail {

inline std::vector<WindowSample> filter_window_features(const std::vector<WindowSample>& windows,
                                                        const std::vector<std::size_t>& keep) {
    std::vector<WindowSample> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        WindowSample f;
        f.history_load = w.history_load;
        f.target = w.target;
        f.origin_index = w.origin_index;
        for (std::size_t q : keep) f.history_features.push_back(w.history_features[q]);
        out.push_back(std::move(f));
    }
    return out;
}

struct TrainedRun {
    AdditiveForecaster model;
    MetricsReport test_metrics;
};

inline TrainedRun train_and_evaluate(const ModelConfig& mc, const TrainConfig& tc,
                                     const std::vector<WindowSample>& train_windows,
                                     const std::vector<WindowSample>& val_windows,
                                     const std::vector<WindowSample>& test_windows) {
    TrainedRun run{AdditiveForecaster(mc), {}};
    PreparedSet train_set = prepare_samples(train_windows, mc);
    PreparedSet val_set = prepare_samples(val_windows, mc);
    PreparedSet test_set = prepare_samples(test_windows, mc);
    run.model.train(train_set, val_set, tc);
    const nn::Mat pred = run.model.predict(test_set);
    run.test_metrics = evaluate(to_rows(pred), to_rows(test_set.targets), Units::Standardized);
    return run;
}

} // namespace detail

/// Trains the baseline and one model per spec, evaluating everything on the
/// identical test windows. A failing row is recorded and the harness moves on.
inline PerturbationReport run_perturbations(const PerturbationContext& ctx,
                                            const std::vector<PerturbationSpec>& specs) {
    ctx.model_config.validate();
    ctx.train_config.validate();
    const auto& base_features = ctx.model_config.feature_names;
    for (const auto& spec : specs) {
        for (const auto& f : spec.drop_features)
            if (std::find(base_features.begin(), base_features.end(), f) == base_features.end())
                throw KeyMismatchError("perturbation drops unknown feature '" + f + "'");
        auto check_period = [&](int hours) {
            for (const auto& s : ctx.model_config.scales)
                if (s.period_hours == hours) return;
            throw KeyMismatchError("perturbation drops unknown period " + std::to_string(hours));
        };
        for (int h : spec.drop_trend_kernels) check_period(h);
        for (int h : spec.drop_residual_kernels) check_period(h);
    }

    PerturbationReport report;
    report.baseline_test_fingerprint = window_set_fingerprint(ctx.test_windows);
    auto baseline = detail::train_and_evaluate(ctx.model_config, ctx.train_config,
                                               ctx.train_windows, ctx.val_windows,
                                               ctx.test_windows);
    report.baseline = baseline.test_metrics;

    for (const auto& spec : specs) {
        PerturbationRow row;
        row.spec = spec;
        row.test_window_fingerprint = report.baseline_test_fingerprint;
        try {
            ModelConfig mc = ctx.model_config;
            TrainConfig tc = ctx.train_config;
            if (spec.retrain_seed) {
                mc.seed = *spec.retrain_seed;
                tc.seed = *spec.retrain_seed;
            }
            mc.ablation.drop_trend_periods.insert(mc.ablation.drop_trend_periods.end(),
                                                  spec.drop_trend_kernels.begin(),
                                                  spec.drop_trend_kernels.end());
            mc.ablation.drop_residual_periods.insert(mc.ablation.drop_residual_periods.end(),
                                                     spec.drop_residual_kernels.begin(),
                                                     spec.drop_residual_kernels.end());

            std::vector<std::size_t> keep;
            mc.feature_names.clear();
            for (std::size_t q = 0; q < base_features.size(); ++q) {
                if (std::find(spec.drop_features.begin(), spec.drop_features.end(),
                              base_features[q]) == spec.drop_features.end()) {
                    keep.push_back(q);
                    mc.feature_names.push_back(base_features[q]);
                }
            }

            auto run = detail::train_and_evaluate(
                mc, tc, detail::filter_window_features(ctx.train_windows, keep),
                detail::filter_window_features(ctx.val_windows, keep),
                detail::filter_window_features(ctx.test_windows, keep));
            row.metrics = run.test_metrics;
            row.delta_mse = run.test_metrics.mse - report.baseline.mse;
        } catch (const Error& e) {
            row.failed = true;
            row.error = e.what();
        }
        report.rows.push_back(row);
    }
    return report;
}

} // namespace loadlens
