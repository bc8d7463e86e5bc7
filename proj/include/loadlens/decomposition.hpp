#pragma once

#include <string>
#include <vector>

#include "loadlens/common.hpp"
#include "loadlens/errors.hpp"

namespace loadlens {

/// Kernel sizes for the multi-scale moving-average decomposition.
/// All sizes must be odd; parity correction from even periods happens in
/// the similarity module, not here.
struct DecompositionConfig {
    std::vector<int> kernel_sizes;

    void validate() const {
        if (kernel_sizes.empty()) throw ConfigError("at least one decomposition kernel required");
        std::vector<int> sorted = kernel_sizes;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] < 1) throw ConfigError("kernel sizes must be >= 1");
            if (sorted[i] % 2 == 0) throw EvenKernelError(sorted[i]);
            if (i > 0 && sorted[i] == sorted[i - 1])
                throw ConfigError("duplicate kernel size " + std::to_string(sorted[i]));
        }
    }
};

/// Per-kernel trend and residual series. Every pair sums back to the
/// source series elementwise, and every series keeps the source length.
struct DecomposedSeries {
    std::size_t source_len = 0;
    std::vector<int> kernel_sizes;
    std::vector<std::vector<double>> trends;
    std::vector<std::vector<double>> residuals;
};

/**
 * Centered moving average with replicate padding.
 *
 * Conceptually the series is padded with (k-1)/2 copies of its first value
 * at the head and of its last value at the tail, then averaged over a
 * window of width k, so the output keeps the input length.
 */
inline std::vector<double> moving_average_trend(const std::vector<double>& series, int kernel) {
    if (kernel % 2 == 0) throw EvenKernelError(kernel);
    if (kernel < 1) throw ConfigError("kernel must be >= 1");
    const std::size_t n = series.size();
    if (static_cast<std::size_t>(kernel) > n) throw KernelTooLargeError(kernel, n);

    const int half = (kernel - 1) / 2;
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    std::vector<double> trend(n);
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        // Ascending-index accumulation; clamping reproduces the padded
        // series without materializing it.
        double sum = 0.0;
        for (std::ptrdiff_t w = i - half; w <= i + half; ++w) {
            const std::ptrdiff_t idx = w < 0 ? 0 : (w > last ? last : w);
            sum += series[static_cast<std::size_t>(idx)];
        }
        trend[static_cast<std::size_t>(i)] = sum / static_cast<double>(kernel);
    }
    return trend;
}

/// Residual seasonal component: series minus trend, elementwise.
inline std::vector<double> residual(const std::vector<double>& series,
                                    const std::vector<double>& trend) {
    if (series.size() != trend.size()) throw LengthMismatchError(series.size(), trend.size());
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) out[i] = series[i] - trend[i];
    return out;
}

/// Applies every kernel independently to the original series (no cascading).
inline DecomposedSeries decompose_multiscale(const std::vector<double>& series,
                                             const DecompositionConfig& cfg) {
    cfg.validate();
    DecomposedSeries out;
    out.source_len = series.size();
    out.kernel_sizes = cfg.kernel_sizes;
    for (int k : cfg.kernel_sizes) {
        auto trend = moving_average_trend(series, k);
        out.residuals.push_back(residual(series, trend));
        out.trends.push_back(std::move(trend));
    }
    return out;
}

inline json to_json(const DecomposedSeries& d) {
    return json{{"kernels", d.kernel_sizes}, {"trends", d.trends}, {"residuals", d.residuals}};
}

inline DecomposedSeries decomposed_series_from_json(const json& j) {
    DecomposedSeries d;
    d.kernel_sizes = j.at("kernels").get<std::vector<int>>();
    d.trends = j.at("trends").get<std::vector<std::vector<double>>>();
    d.residuals = j.at("residuals").get<std::vector<std::vector<double>>>();
    d.source_len = d.trends.empty() ? 0 : d.trends.front().size();
    return d;
}

} // namespace loadlens
