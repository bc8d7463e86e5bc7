#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "loadlens/common.hpp"
#include "loadlens/errors.hpp"

namespace loadlens {

/**
 * Lag self-similarity profile of a load series.
 *
 * Row i holds the cosine similarity between the length-P window starting
 * at i and the windows starting at i+1 .. i+W. mean_by_lag aggregates each
 * lag column with the arithmetic mean.
 */
struct SimilarityProfile {
    std::size_t history = 0;     ///< P, window length
    std::size_t lookforward = 0; ///< W, number of lags scanned
    std::vector<std::vector<double>> rows;
    std::vector<double> mean_by_lag;

    std::size_t row_count() const { return rows.size(); }
};

/// Decomposition kernel sizes recommended from similarity peaks.
/// periods are lag hours in descending peak strength; each even period p
/// maps to the odd kernel size p+1, odd periods map to themselves.
struct KernelRecommendation {
    std::vector<int> periods;
    std::vector<int> kernel_sizes;
};

/// Cosine similarity a.b / (|a| |b|), clamped to [-1, 1].
inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw LengthMismatchError(a.size(), b.size());
    if (a.empty()) throw LengthMismatchError(0, 0);
    Eigen::Map<const Eigen::VectorXd> va(a.data(), static_cast<Eigen::Index>(a.size()));
    Eigen::Map<const Eigen::VectorXd> vb(b.data(), static_cast<Eigen::Index>(b.size()));
    const double na = va.norm();
    const double nb = vb.norm();
    if (na == 0.0 || nb == 0.0) throw ZeroVectorError();
    const double sim = va.dot(vb) / (na * nb);
    return std::clamp(sim, -1.0, 1.0);
}

/**
 * Computes the full similarity profile of a series.
 *
 * Requires series length >= P + W and yields exactly
 * (length - P - W + 1) rows.
 */
inline SimilarityProfile similarity_profile(const std::vector<double>& load, std::size_t history,
                                            std::size_t lookforward) {
    if (history < 1 || lookforward < 1)
        throw ConfigError("similarity history and lookforward must be >= 1");
    const std::size_t m = load.size();
    if (m < history + lookforward) throw SeriesTooShortError(m, history + lookforward);

    const std::size_t n_rows = m - history - lookforward + 1;
    const std::size_t n_windows = m - history + 1;

    Eigen::Map<const Eigen::VectorXd> series(load.data(), static_cast<Eigen::Index>(m));
    std::vector<double> norms(n_windows);
    for (std::size_t s = 0; s < n_windows; ++s) {
        norms[s] = series.segment(static_cast<Eigen::Index>(s),
                                  static_cast<Eigen::Index>(history)).norm();
        if (norms[s] == 0.0) throw ZeroVectorError();
    }

    SimilarityProfile profile;
    profile.history = history;
    profile.lookforward = lookforward;
    profile.rows.assign(n_rows, std::vector<double>(lookforward));
    profile.mean_by_lag.assign(lookforward, 0.0);

    for (std::size_t i = 0; i < n_rows; ++i) {
        const auto base = series.segment(static_cast<Eigen::Index>(i),
                                         static_cast<Eigen::Index>(history));
        auto& row = profile.rows[i];
        for (std::size_t lag = 1; lag <= lookforward; ++lag) {
            const std::size_t j = i + lag;
            const double sim = base.dot(series.segment(static_cast<Eigen::Index>(j),
                                                       static_cast<Eigen::Index>(history))) /
                               (norms[i] * norms[j]);
            row[lag - 1] = std::clamp(sim, -1.0, 1.0);
            profile.mean_by_lag[lag - 1] += row[lag - 1];
        }
    }
    for (double& v : profile.mean_by_lag) v /= static_cast<double>(n_rows);
    return profile;
}

/**
 * Picks the top-N strict local maxima of mean_by_lag and converts each
 * peak lag to an odd kernel size.
 *
 * A lag is a peak when its mean similarity is strictly greater than both
 * neighbors; the first and last lags are never peaks. Ties in peak value
 * break toward the smaller lag.
 */
inline KernelRecommendation recommend_kernels(const SimilarityProfile& profile, std::size_t n) {
    if (n < 1) throw ConfigError("requested kernel count must be >= 1");
    if (profile.rows.empty() || profile.mean_by_lag.empty())
        throw ValidationError("similarity profile is empty");

    const auto& mean = profile.mean_by_lag;
    std::vector<std::pair<double, int>> peaks; // (value, lag)
    for (std::size_t i = 1; i + 1 < mean.size(); ++i)
        if (mean[i] > mean[i - 1] && mean[i] > mean[i + 1])
            peaks.emplace_back(mean[i], static_cast<int>(i + 1));
    if (peaks.size() < n) throw NotEnoughPeaksError(peaks.size(), n);

    std::stable_sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    KernelRecommendation rec;
    for (std::size_t i = 0; i < n; ++i) {
        const int period = peaks[i].second;
        rec.periods.push_back(period);
        rec.kernel_sizes.push_back(period % 2 == 0 ? period + 1 : period);
    }
    return rec;
}

inline json to_json(const SimilarityProfile& profile) {
    return json{{"kind", "similarity_profile"},
                {"P", profile.history},
                {"W", profile.lookforward},
                {"rows", profile.rows},
                {"mean_by_lag", profile.mean_by_lag}};
}

inline SimilarityProfile similarity_profile_from_json(const json& j) {
    if (j.value("kind", "") != "similarity_profile")
        throw ValidationError("not a similarity_profile artifact");
    SimilarityProfile p;
    p.history = j.at("P").get<std::size_t>();
    p.lookforward = j.at("W").get<std::size_t>();
    p.rows = j.at("rows").get<std::vector<std::vector<double>>>();
    p.mean_by_lag = j.at("mean_by_lag").get<std::vector<double>>();
    return p;
}

/// Writes the profile artifact as JSON, plus an optional .ppm raster
/// sidecar next to it when with_image is set.
inline void emit_similarity_heatmap(const SimilarityProfile& profile,
                                    const std::filesystem::path& path, bool with_image = false) {
    write_json_file(path, to_json(profile));
    if (with_image) {
        auto image_path = path;
        image_path.replace_extension(".ppm");
        detail::write_matrix_ppm(profile.rows, image_path);
    }
}

} // namespace loadlens
