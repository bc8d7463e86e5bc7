#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "loadlens/common.hpp"
#include "loadlens/errors.hpp"

namespace loadlens {

enum class Units { Standardized, Actual };

inline std::string to_string(Units u) {
    return u == Units::Standardized ? "standardized" : "actual";
}

inline Units units_from_string(const std::string& s) {
    if (s == "standardized") return Units::Standardized;
    if (s == "actual") return Units::Actual;
    throw ValidationError("unknown units '" + s + "'");
}

/**
 * Forecast error metrics over a batch of horizon vectors.
 *
 * mse, mae and rmse use the per-element convention (averaged over all
 * B*T entries). mape is a percentage and is absent when any target
 * element is exactly zero.
 */
struct MetricsReport {
    double mse = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape; ///< percent; empty when undefined
    Units units = Units::Standardized;
    std::size_t n_samples = 0;
};

inline json to_json(const MetricsReport& r) {
    json j{{"mse", r.mse}, {"mae", r.mae}, {"rmse", r.rmse},
           {"units", to_string(r.units)}, {"n", r.n_samples}};
    if (r.mape)
        j["mape"] = *r.mape;
    else
        j["mape"] = nullptr;
    return j;
}

inline MetricsReport metrics_from_json(const json& j) {
    MetricsReport r;
    r.mse = j.at("mse").get<double>();
    r.mae = j.at("mae").get<double>();
    r.rmse = j.at("rmse").get<double>();
    if (!j.at("mape").is_null()) r.mape = j.at("mape").get<double>();
    r.units = units_from_string(j.at("units").get<std::string>());
    r.n_samples = j.at("n").get<std::size_t>();
    return r;
}

/// Evaluates MSE/MAE/RMSE/MAPE over equally shaped prediction and target
/// batches. A zero target element leaves mape unset instead of failing the
/// other metrics.
inline MetricsReport evaluate(const std::vector<std::vector<double>>& predictions,
                              const std::vector<std::vector<double>>& targets, Units units) {
    if (predictions.size() != targets.size())
        throw ShapeMismatchError("batch sizes " + std::to_string(predictions.size()) + " vs " +
                                 std::to_string(targets.size()));
    if (predictions.empty()) throw ShapeMismatchError("empty batch");

    double sse = 0.0;
    double sae = 0.0;
    double sape = 0.0;
    bool mape_defined = true;
    std::size_t count = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != targets[i].size())
            throw ShapeMismatchError("row " + std::to_string(i) + ": " +
                                     std::to_string(predictions[i].size()) + " vs " +
                                     std::to_string(targets[i].size()));
        for (std::size_t t = 0; t < predictions[i].size(); ++t) {
            const double err = predictions[i][t] - targets[i][t];
            sse += err * err;
            sae += std::abs(err);
            if (targets[i][t] == 0.0)
                mape_defined = false;
            else
                sape += std::abs(err / targets[i][t]);
            ++count;
        }
    }
    if (count == 0) throw ShapeMismatchError("empty rows");

    MetricsReport r;
    r.mse = sse / static_cast<double>(count);
    r.mae = sae / static_cast<double>(count);
    r.rmse = std::sqrt(r.mse);
    if (mape_defined) r.mape = 100.0 * sape / static_cast<double>(count);
    r.units = units;
    r.n_samples = predictions.size();
    return r;
}

/**
 * Predicts the standardized-units metrics from actual-units metrics:
 * mse scales by 1/sigma^2, mae and rmse by 1/sigma. MAPE does not
 * transfer under standardization and is left unset.
 */
inline MetricsReport scale_relations(const MetricsReport& actual, double sigma_test) {
    if (actual.units != Units::Actual)
        throw ValidationError("scale_relations expects a report in actual units");
    if (sigma_test <= 0.0) throw NonPositiveSigmaError(sigma_test);
    MetricsReport r;
    r.mse = actual.mse / (sigma_test * sigma_test);
    r.mae = actual.mae / sigma_test;
    r.rmse = actual.rmse / sigma_test;
    r.mape = std::nullopt;
    r.units = Units::Standardized;
    r.n_samples = actual.n_samples;
    return r;
}

} // namespace loadlens
