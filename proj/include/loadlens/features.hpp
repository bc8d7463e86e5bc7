#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "loadlens/errors.hpp"
#include "loadlens/nn/autograd.hpp"

namespace loadlens {

struct FeatureEncoderConfig {
    std::vector<std::string> feature_names;
    int hidden_size = 16;

    void validate() const {
        if (feature_names.empty())
            throw ConfigError("feature encoder needs at least one feature");
        if (hidden_size < 1) throw ConfigError("feature hidden size must be >= 1");
    }
};

/// Per-feature significance: signed combiner weights plus a ranking by
/// absolute value (largest magnitude first, ties keep configuration order).
struct FeatureSignificance {
    std::map<std::string, double> scores;
    std::vector<std::string> ranking;
};

/// One recurrent encoder per exogenous feature (no cross-feature mixing),
/// each mapping a length-P window to a length-P per-step scalar sequence,
/// plus a trainable linear combiner gamma over the K encoders.
class FeatureEncoderBank {
public:
    FeatureEncoderBank() = default;

    FeatureEncoderBank(FeatureEncoderConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const int H = cfg_.hidden_size;
        cells_.reserve(cfg_.feature_names.size());
        for (std::size_t q = 0; q < cfg_.feature_names.size(); ++q) {
            Cell cell;
            cell.wx = nn::Var::param(nn::glorot_uniform(1, 4 * H, rng));
            cell.uh = nn::Var::param(nn::glorot_uniform(H, 4 * H, rng));
            nn::Mat b = nn::Mat::Zero(1, 4 * H);
            b.middleCols(H, H).setConstant(1.0); // open forget gate at start
            cell.b = nn::Var::param(std::move(b));
            cell.proj_w = nn::Var::param(nn::glorot_uniform(H, 1, rng));
            cell.proj_b = nn::Var::param(nn::Mat::Zero(1, 1));
            cells_.push_back(std::move(cell));
        }
        const double k = static_cast<double>(cfg_.feature_names.size());
        gamma_ = nn::Var::param(
            nn::Mat::Constant(1, static_cast<Eigen::Index>(cfg_.feature_names.size()), 1.0 / k));
    }

    const FeatureEncoderConfig& config() const { return cfg_; }
    std::size_t feature_count() const { return cells_.size(); }
    const nn::Var& gamma() const { return gamma_; }

    /// Graph-building encoder for feature q over a B x P batch of windows.
    /// Returns a B x P per-step representation.
    nn::Var encode(std::size_t q, const nn::Var& windows) const {
        if (q >= cells_.size())
            throw IndexOutOfRangeError(static_cast<long long>(q), cells_.size());
        const Cell& cell = cells_[q];
        const int H = cfg_.hidden_size;
        const Eigen::Index B = windows.rows();
        const Eigen::Index P = windows.cols();
        nn::Var h = nn::Var::constant(nn::Mat::Zero(B, H));
        nn::Var c = nn::Var::constant(nn::Mat::Zero(B, H));
        std::vector<nn::Var> steps;
        steps.reserve(static_cast<std::size_t>(P));
        for (Eigen::Index t = 0; t < P; ++t) {
            nn::Var x = nn::slice_cols(windows, t, 1);
            nn::Var z = nn::add_rowvec(nn::add(nn::matmul(x, cell.wx), nn::matmul(h, cell.uh)),
                                       cell.b);
            nn::Var gi = nn::sigmoid(nn::slice_cols(z, 0, H));
            nn::Var gf = nn::sigmoid(nn::slice_cols(z, H, H));
            nn::Var gg = nn::tanh_op(nn::slice_cols(z, 2 * H, H));
            nn::Var go = nn::sigmoid(nn::slice_cols(z, 3 * H, H));
            c = nn::add(nn::mul(gf, c), nn::mul(gi, gg));
            h = nn::mul(go, nn::tanh_op(c));
            steps.push_back(nn::add_rowvec(nn::matmul(h, cell.proj_w), cell.proj_b));
        }
        return nn::concat_cols(steps);
    }

    /// Graph-building combination: sum_q gamma_q * encode(q), over per-feature
    /// B x P window batches given in feature order.
    nn::Var combine(const std::vector<nn::Var>& per_feature_windows) const {
        if (per_feature_windows.size() != cells_.size())
            throw ShapeMismatchError("expected " + std::to_string(cells_.size()) +
                                     " feature window batches, got " +
                                     std::to_string(per_feature_windows.size()));
        nn::Var out;
        for (std::size_t q = 0; q < cells_.size(); ++q) {
            nn::Var gq = nn::slice_cols(gamma_, static_cast<Eigen::Index>(q), 1);
            nn::Var term = nn::scalar_mul(gq, encode(q, per_feature_windows[q]));
            out = out.valid() ? nn::add(out, term) : term;
        }
        return out;
    }

    std::vector<nn::NamedParam> parameters(const std::string& prefix = "features") const {
        std::vector<nn::NamedParam> out;
        for (std::size_t q = 0; q < cells_.size(); ++q) {
            const std::string base = prefix + "." + cfg_.feature_names[q];
            out.push_back({base + ".wx", cells_[q].wx});
            out.push_back({base + ".uh", cells_[q].uh});
            out.push_back({base + ".b", cells_[q].b});
            out.push_back({base + ".proj_w", cells_[q].proj_w});
            out.push_back({base + ".proj_b", cells_[q].proj_b});
        }
        out.push_back({prefix + ".gamma", gamma_});
        return out;
    }

private:
    struct Cell {
        nn::Var wx;     // 1 x 4H input weights (gate order: input, forget, cell, output)
        nn::Var uh;     // H x 4H recurrent weights
        nn::Var b;      // 1 x 4H bias
        nn::Var proj_w; // H x 1 per-step projection
        nn::Var proj_b; // 1 x 1
    };

    FeatureEncoderConfig cfg_;
    std::vector<Cell> cells_;
    nn::Var gamma_; // 1 x K
};

/// Encodes one feature window (length P) through encoder q.
inline std::vector<double> encode_feature(const FeatureEncoderBank& bank, std::size_t q,
                                          const std::vector<double>& window) {
    nn::Mat x(1, static_cast<Eigen::Index>(window.size()));
    for (std::size_t i = 0; i < window.size(); ++i)
        x(0, static_cast<Eigen::Index>(i)) = window[i];
    nn::Var out = bank.encode(q, nn::Var::constant(std::move(x)));
    std::vector<double> result(window.size());
    for (std::size_t i = 0; i < window.size(); ++i)
        result[i] = out.value()(0, static_cast<Eigen::Index>(i));
    return result;
}

/// Combines all feature encoders over a P x K window matrix (one column per
/// feature, in bank order) into a single length-P representation.
inline std::vector<double> combine_features(const FeatureEncoderBank& bank,
                                            const std::vector<std::vector<double>>& window_matrix_cols) {
    if (window_matrix_cols.size() != bank.feature_count())
        throw ShapeMismatchError("window matrix has " + std::to_string(window_matrix_cols.size()) +
                                 " columns, bank expects " + std::to_string(bank.feature_count()));
    const std::size_t p = window_matrix_cols.empty() ? 0 : window_matrix_cols.front().size();
    std::vector<nn::Var> batches;
    for (const auto& col : window_matrix_cols) {
        if (col.size() != p) throw ShapeMismatchError("ragged feature window matrix");
        nn::Mat x(1, static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < p; ++i) x(0, static_cast<Eigen::Index>(i)) = col[i];
        batches.push_back(nn::Var::constant(std::move(x)));
    }
    nn::Var out = bank.combine(batches);
    std::vector<double> result(p);
    for (std::size_t i = 0; i < p; ++i) result[i] = out.value()(0, static_cast<Eigen::Index>(i));
    return result;
}

/// Reports current combiner weights keyed by feature name, with a ranking by
/// absolute weight.
inline FeatureSignificance feature_significance(const FeatureEncoderBank& bank) {
    FeatureSignificance sig;
    const auto& names = bank.config().feature_names;
    std::vector<std::size_t> order(names.size());
    for (std::size_t q = 0; q < names.size(); ++q) {
        sig.scores[names[q]] = bank.gamma().value()(0, static_cast<Eigen::Index>(q));
        order[q] = q;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(bank.gamma().value()(0, static_cast<Eigen::Index>(a))) >
               std::abs(bank.gamma().value()(0, static_cast<Eigen::Index>(b)));
    });
    for (std::size_t q : order) sig.ranking.push_back(names[q]);
    return sig;
}

} // namespace loadlens
