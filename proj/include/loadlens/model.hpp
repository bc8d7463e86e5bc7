#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "loadlens/common.hpp"
#include "loadlens/dataset.hpp"
#include "loadlens/decomposition.hpp"
#include "loadlens/errors.hpp"
#include "loadlens/features.hpp"
#include "loadlens/nn/autograd.hpp"
#include "loadlens/nn/optimizer.hpp"

namespace loadlens {

/// One decomposition scale: the detected period and the (odd) smoothing
/// kernel derived from it.
struct KernelScale {
    int period_hours = 0;
    int kernel_size = 0;
};

/// Ablation switches: drop the trend branch family, drop the residual branch
/// family, feed the raw load window to every branch instead of decomposed
/// components, or drop individual branches by their period.
struct AblationConfig {
    bool disable_trend = false;
    bool disable_residual = false;
    bool raw_load = false;
    std::vector<int> drop_trend_periods;
    std::vector<int> drop_residual_periods;
};

struct ModelConfig {
    int history = 96; // P
    int horizon = 24; // T
    std::vector<KernelScale> scales;
    std::vector<std::string> feature_names;
    int embed_dim = 32;
    int attention_layers = 2;
    int heads = 4;
    int ffn_dim = 64;
    int conv_channels = 32;
    int conv_layers = 2;
    int conv_kernel = 3;
    int feature_hidden = 16;
    AblationConfig ablation;
    std::uint64_t seed = 1;

    void validate() const {
        if (scales.empty()) throw ConfigError("model needs at least one scale");
        if (history < 1 || horizon < 1) throw ConfigError("history and horizon must be >= 1");
        if (embed_dim < 1 || ffn_dim < 1 || conv_channels < 1 || feature_hidden < 1)
            throw ConfigError("model dimensions must be >= 1");
        if (heads < 1 || embed_dim % heads != 0)
            throw ConfigError("embed_dim must be a positive multiple of heads");
        if (attention_layers < 1 || conv_layers < 1)
            throw ConfigError("layer counts must be >= 1");
        if (conv_kernel < 1 || conv_kernel % 2 == 0)
            throw ConfigError("conv kernel width must be odd and >= 1");
        for (const auto& s : scales) {
            if (s.kernel_size < 1 || s.kernel_size % 2 == 0) throw EvenKernelError(s.kernel_size);
            if (s.kernel_size > history)
                throw KernelTooLargeError(s.kernel_size, static_cast<std::size_t>(history));
        }
        if (feature_names.empty()) throw ConfigError("model needs at least one feature");
        auto period_known = [this](int hours) {
            for (const auto& s : scales)
                if (s.period_hours == hours) return true;
            return false;
        };
        for (int hours : ablation.drop_trend_periods)
            if (!period_known(hours))
                throw KeyMismatchError("unknown trend period " + std::to_string(hours));
        for (int hours : ablation.drop_residual_periods)
            if (!period_known(hours))
                throw KeyMismatchError("unknown residual period " + std::to_string(hours));
        if (trend_scale_indices().empty() && residual_scale_indices().empty())
            throw ConfigError("cannot disable both branch families");
    }

    /// Indices into `scales` that keep a trend branch after ablation.
    std::vector<std::size_t> trend_scale_indices() const {
        std::vector<std::size_t> out;
        if (ablation.disable_trend) return out;
        for (std::size_t s = 0; s < scales.size(); ++s) {
            const int hours = scales[s].period_hours;
            if (std::find(ablation.drop_trend_periods.begin(), ablation.drop_trend_periods.end(),
                          hours) == ablation.drop_trend_periods.end())
                out.push_back(s);
        }
        return out;
    }

    /// Indices into `scales` that keep a residual branch after ablation.
    std::vector<std::size_t> residual_scale_indices() const {
        std::vector<std::size_t> out;
        if (ablation.disable_residual) return out;
        for (std::size_t s = 0; s < scales.size(); ++s) {
            const int hours = scales[s].period_hours;
            if (std::find(ablation.drop_residual_periods.begin(),
                          ablation.drop_residual_periods.end(),
                          hours) == ablation.drop_residual_periods.end())
                out.push_back(s);
        }
        return out;
    }
};

struct TrainConfig {
    int batch_size = 64;
    int epochs = 100;
    double learning_rate = 1e-3;
    int patience = 10;
    std::uint64_t seed = 1;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (patience < 0) throw ConfigError("patience must be >= 0");
    }
};

/// Model-ready view of a window set: per-scale trend/residual batches,
/// per-feature batches and targets, all row-per-sample.
struct PreparedSet {
    std::vector<nn::Mat> trends;    // one B x P matrix per scale
    std::vector<nn::Mat> residuals; // one B x P matrix per scale
    std::vector<nn::Mat> features;  // one B x P matrix per feature
    nn::Mat targets;                // B x T
    std::vector<std::size_t> origins;
    std::string window_fingerprint;

    Eigen::Index size() const { return targets.rows(); }
};

/// Decomposes every window independently (replicate padding only within the
/// window, so no future information crosses the forecast origin) and lays the
/// batch out for training.
inline PreparedSet prepare_samples(const std::vector<WindowSample>& windows,
                                   const ModelConfig& cfg) {
    cfg.validate();
    const auto n_scales = cfg.scales.size();
    const Eigen::Index b = static_cast<Eigen::Index>(windows.size());
    const Eigen::Index p = cfg.history;
    const Eigen::Index t = cfg.horizon;

    PreparedSet set;
    set.trends.assign(n_scales, nn::Mat(b, p));
    set.residuals.assign(n_scales, nn::Mat(b, p));
    set.features.assign(cfg.feature_names.size(), nn::Mat(b, p));
    set.targets.resize(b, t);
    set.origins.reserve(windows.size());
    set.window_fingerprint = window_set_fingerprint(windows);

    for (Eigen::Index i = 0; i < b; ++i) {
        const WindowSample& w = windows[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(w.history_load.size()) != p ||
            static_cast<Eigen::Index>(w.target.size()) != t)
            throw ShapeMismatchError("window does not match model history/horizon");
        if (w.history_features.size() != cfg.feature_names.size())
            throw ShapeMismatchError("window has " + std::to_string(w.history_features.size()) +
                                     " features, model expects " +
                                     std::to_string(cfg.feature_names.size()));
        set.origins.push_back(w.origin_index);
        for (Eigen::Index j = 0; j < t; ++j)
            set.targets(i, j) = w.target[static_cast<std::size_t>(j)];
        for (std::size_t q = 0; q < cfg.feature_names.size(); ++q)
            for (Eigen::Index j = 0; j < p; ++j)
                set.features[q](i, j) = w.history_features[q][static_cast<std::size_t>(j)];
        for (std::size_t s = 0; s < n_scales; ++s) {
            if (cfg.ablation.raw_load) {
                for (Eigen::Index j = 0; j < p; ++j) {
                    set.trends[s](i, j) = w.history_load[static_cast<std::size_t>(j)];
                    set.residuals[s](i, j) = w.history_load[static_cast<std::size_t>(j)];
                }
            } else {
                const auto trend = moving_average_trend(w.history_load, cfg.scales[s].kernel_size);
                for (Eigen::Index j = 0; j < p; ++j) {
                    set.trends[s](i, j) = trend[static_cast<std::size_t>(j)];
                    set.residuals[s](i, j) =
                        w.history_load[static_cast<std::size_t>(j)] - trend[static_cast<std::size_t>(j)];
                }
            }
        }
    }
    return set;
}

/// Stacks a scale component window and the feature representation into the
/// P x 2 inputs consumed by the branches (column 0 = component, column 1 =
/// feature representation).
inline std::pair<std::vector<std::array<double, 2>>, std::vector<std::array<double, 2>>>
assemble_inputs(const std::vector<double>& trend_window, const std::vector<double>& residual_window,
                const std::vector<double>& feature_repr) {
    if (trend_window.size() != residual_window.size() ||
        trend_window.size() != feature_repr.size())
        throw LengthMismatchError(trend_window.size(), feature_repr.size());
    std::vector<std::array<double, 2>> t(trend_window.size());
    std::vector<std::array<double, 2>> r(residual_window.size());
    for (std::size_t i = 0; i < trend_window.size(); ++i) {
        t[i] = {trend_window[i], feature_repr[i]};
        r[i] = {residual_window[i], feature_repr[i]};
    }
    return {std::move(t), std::move(r)};
}

/// Per-element mean squared error over a B x T prediction batch.
inline double mse_loss(const nn::Mat& predictions, const nn::Mat& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
        throw ShapeMismatchError("mse_loss shapes " + std::to_string(predictions.rows()) + "x" +
                                 std::to_string(predictions.cols()) + " vs " +
                                 std::to_string(targets.rows()) + "x" +
                                 std::to_string(targets.cols()));
    return (predictions - targets).array().square().mean();
}

/// Repeats the last observed value across the horizon.
inline std::vector<double> persistence_forecast(const std::vector<double>& history, int horizon) {
    if (history.empty()) throw SeriesTooShortError(0, 1);
    return std::vector<double>(static_cast<std::size_t>(horizon), history.back());
}

/// Copies a matrix into row vectors (bridge to the metrics interfaces).
inline std::vector<std::vector<double>> to_rows(const nn::Mat& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
    return rows;
}

struct EpochLog {
    int epoch = 0;
    double train_mse = 0.0;          // per-element
    double val_mse = 0.0;            // per-element
    double train_mse_per_sample = 0.0; // per-sample squared-norm average
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_val_mse = std::numeric_limits<double>::infinity();
    bool stopped_early = false;

    json to_json() const {
        json arr = json::array();
        for (const auto& e : epochs)
            arr.push_back({{"epoch", e.epoch},
                           {"train_mse", e.train_mse},
                           {"val_mse", e.val_mse},
                           {"train_mse_per_sample", e.train_mse_per_sample}});
        return json{{"epochs", arr},
                    {"best_epoch", best_epoch},
                    {"best_val_mse", best_val_mse},
                    {"stopped_early", stopped_early}};
    }
};

/// Additive multi-scale forecaster: per-scale attention branches on trend
/// inputs and convolution branches on residual inputs, each branch scaled by
/// a trainable scalar, summed into the forecast.
class AdditiveForecaster {
public:
    AdditiveForecaster() = default;

    explicit AdditiveForecaster(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(cfg_.seed);
        FeatureEncoderConfig fc;
        fc.feature_names = cfg_.feature_names;
        fc.hidden_size = cfg_.feature_hidden;
        bank_ = FeatureEncoderBank(fc, rng);

        trend_scale_idx_ = cfg_.trend_scale_indices();
        residual_scale_idx_ = cfg_.residual_scale_indices();
        for (std::size_t i = 0; i < trend_scale_idx_.size(); ++i)
            trend_branches_.push_back(make_trend_branch(rng));
        for (std::size_t i = 0; i < residual_scale_idx_.size(); ++i)
            residual_branches_.push_back(make_residual_branch(rng));

        const double init = 1.0 / (2.0 * static_cast<double>(cfg_.scales.size()));
        alpha_ = nn::Var::param(nn::Mat::Constant(
            1, static_cast<Eigen::Index>(trend_scale_idx_.size()), init));
        beta_ = nn::Var::param(nn::Mat::Constant(
            1, static_cast<Eigen::Index>(residual_scale_idx_.size()), init));
    }

    const ModelConfig& config() const { return cfg_; }
    const FeatureEncoderBank& feature_bank() const { return bank_; }
    const nn::Var& alpha() const { return alpha_; }
    const nn::Var& beta() const { return beta_; }
    nn::Var& alpha() { return alpha_; }
    nn::Var& beta() { return beta_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }
    const std::optional<StandardizationState>& standardization() const { return standardization_; }
    void set_standardization(std::optional<StandardizationState> s) {
        standardization_ = std::move(s);
    }

    /// Deterministic sinusoidal positional encoding, depending only on (P, d).
    static nn::Mat positional_encoding(Eigen::Index p, Eigen::Index d) {
        nn::Mat pe(p, d);
        for (Eigen::Index pos = 0; pos < p; ++pos) {
            for (Eigen::Index i = 0; i < d; ++i) {
                const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
                const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
                pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
            }
        }
        return pe;
    }

    /// Builds the forecast graph for a batch slice of a prepared set.
    /// Returns a B x T variable wired to all trainable parameters.
    nn::Var forward_graph(const PreparedSet& set, const std::vector<Eigen::Index>& batch) const {
        const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
        const Eigen::Index p = cfg_.history;
        if (b < 1) throw ShapeMismatchError("empty batch");

        std::vector<nn::Var> feature_windows;
        feature_windows.reserve(set.features.size());
        for (const auto& f : set.features)
            feature_windows.push_back(nn::Var::constant(take_rows(f, batch)));
        nn::Var repr = bank_.combine(feature_windows); // B x P

        nn::Var out;
        for (std::size_t i = 0; i < trend_branches_.size(); ++i) {
            const std::size_t s = trend_scale_idx_[i];
            nn::Var comp = nn::Var::constant(take_rows(set.trends[s], batch));
            nn::Var branch_out =
                trend_branch_forward(trend_branches_[i], stack_channels(comp, repr, b, p), b);
            nn::Var term = nn::scalar_mul(
                nn::slice_cols(alpha_, static_cast<Eigen::Index>(i), 1), branch_out);
            out = out.valid() ? nn::add(out, term) : term;
        }
        for (std::size_t i = 0; i < residual_branches_.size(); ++i) {
            const std::size_t s = residual_scale_idx_[i];
            nn::Var comp = nn::Var::constant(take_rows(set.residuals[s], batch));
            nn::Var branch_out = residual_branch_forward(residual_branches_[i],
                                                         stack_channels(comp, repr, b, p), b);
            nn::Var term = nn::scalar_mul(
                nn::slice_cols(beta_, static_cast<Eigen::Index>(i), 1), branch_out);
            out = out.valid() ? nn::add(out, term) : term;
        }
        return out;
    }

    /// Periods (hours) of the scales whose trend branch is active, in branch
    /// order (matches alpha columns).
    std::vector<int> trend_periods() const {
        std::vector<int> out;
        for (std::size_t s : trend_scale_idx_) out.push_back(cfg_.scales[s].period_hours);
        return out;
    }

    /// Periods (hours) of the scales whose residual branch is active (matches
    /// beta columns).
    std::vector<int> residual_periods() const {
        std::vector<int> out;
        for (std::size_t s : residual_scale_idx_) out.push_back(cfg_.scales[s].period_hours);
        return out;
    }

    /// Forward pass over one prepared sample; returns the length-T forecast.
    std::vector<double> forward(const PreparedSet& set, std::size_t index) const {
        if (static_cast<Eigen::Index>(index) >= set.size())
            throw IndexOutOfRangeError(static_cast<long long>(index),
                                       static_cast<std::size_t>(set.size()));
        nn::Var y = forward_graph(set, {static_cast<Eigen::Index>(index)});
        std::vector<double> result(static_cast<std::size_t>(y.cols()));
        for (Eigen::Index j = 0; j < y.cols(); ++j) result[static_cast<std::size_t>(j)] = y.value()(0, j);
        return result;
    }

    /// Batched forecast over a whole prepared set (standardized units).
    nn::Mat predict(const PreparedSet& set) const {
        if (!trained_) throw NotTrainedError();
        return predict_raw(set);
    }

    /// Same as predict but without the trained-model requirement; used by
    /// training internals and diagnostics.
    nn::Mat predict_raw(const PreparedSet& set) const {
        const Eigen::Index total = set.size();
        nn::Mat out(total, cfg_.horizon);
        const Eigen::Index chunk = 256;
        for (Eigen::Index start = 0; start < total; start += chunk) {
            const Eigen::Index count = std::min(chunk, total - start);
            std::vector<Eigen::Index> batch(static_cast<std::size_t>(count));
            for (Eigen::Index i = 0; i < count; ++i) batch[static_cast<std::size_t>(i)] = start + i;
            nn::Var y = forward_graph(set, batch);
            out.middleRows(start, count) = y.value();
        }
        return out;
    }

    /// Gradient-descent training with early stopping on validation MSE.
    /// Restores the best-validation parameters before returning.
    TrainingLog train(const PreparedSet& train_set, const PreparedSet& val_set,
                      const TrainConfig& tc) {
        tc.validate();
        if (train_set.size() == 0) throw EmptySplitError("train");
        if (val_set.size() == 0) throw EmptySplitError("val");

        auto params = parameters();
        nn::Adam::Options opts;
        opts.learning_rate = tc.learning_rate;
        nn::Adam optimizer(params, opts);
        std::mt19937_64 shuffle_rng(tc.seed);

        std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.size()));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);

        TrainingLog log;
        std::vector<nn::Mat> best_values;
        int since_best = 0;
        const double t_elems = static_cast<double>(cfg_.horizon);

        for (int epoch = 0; epoch < tc.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            double sq_sum = 0.0;
            double elem_count = 0.0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(tc.batch_size)) {
                const std::size_t count =
                    std::min(order.size() - start, static_cast<std::size_t>(tc.batch_size));
                std::vector<Eigen::Index> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() +
                                                    static_cast<std::ptrdiff_t>(start + count));
                nn::Var pred = forward_graph(train_set, batch);
                nn::Var target = nn::Var::constant(take_rows(train_set.targets, batch));
                nn::Var loss = nn::mse(pred, target);
                const double loss_val = loss.value()(0, 0);
                if (!std::isfinite(loss_val)) throw DivergedLossError(epoch);
                sq_sum += loss_val * static_cast<double>(count) * t_elems;
                elem_count += static_cast<double>(count) * t_elems;
                optimizer.zero_grad();
                nn::backward(loss);
                optimizer.step();
            }

            EpochLog e;
            e.epoch = epoch;
            e.train_mse = sq_sum / elem_count;
            e.train_mse_per_sample = e.train_mse * t_elems;
            const nn::Mat val_pred = predict_raw(val_set);
            e.val_mse = mse_loss(val_pred, val_set.targets);
            if (!std::isfinite(e.val_mse)) throw DivergedLossError(epoch);
            log.epochs.push_back(e);

            if (e.val_mse < log.best_val_mse) {
                log.best_val_mse = e.val_mse;
                log.best_epoch = epoch;
                best_values.clear();
                for (const auto& np : params) best_values.push_back(np.var.value());
                since_best = 0;
            } else if (++since_best > tc.patience) {
                log.stopped_early = true;
                break;
            }
        }

        if (!best_values.empty())
            for (std::size_t i = 0; i < params.size(); ++i) params[i].var.value() = best_values[i];
        trained_ = true;
        return log;
    }

    /// All trainable parameters in a stable, named order.
    std::vector<nn::NamedParam> parameters() const {
        std::vector<nn::NamedParam> out = bank_.parameters();
        for (std::size_t i = 0; i < trend_branches_.size(); ++i) {
            const std::string base =
                "trend." + std::to_string(cfg_.scales[trend_scale_idx_[i]].period_hours);
            const TrendBranch& br = trend_branches_[i];
            out.push_back({base + ".tok_w", br.tok_w});
            out.push_back({base + ".tok_b", br.tok_b});
            for (std::size_t l = 0; l < br.layers.size(); ++l) {
                const std::string lb = base + ".layer" + std::to_string(l);
                const AttentionLayer& ly = br.layers[l];
                out.push_back({lb + ".wq", ly.wq});
                out.push_back({lb + ".bq", ly.bq});
                out.push_back({lb + ".wk", ly.wk});
                out.push_back({lb + ".bk", ly.bk});
                out.push_back({lb + ".wv", ly.wv});
                out.push_back({lb + ".bv", ly.bv});
                out.push_back({lb + ".wo", ly.wo});
                out.push_back({lb + ".bo", ly.bo});
                out.push_back({lb + ".ln1_g", ly.ln1_g});
                out.push_back({lb + ".ln1_b", ly.ln1_b});
                out.push_back({lb + ".ffn_w1", ly.ffn_w1});
                out.push_back({lb + ".ffn_b1", ly.ffn_b1});
                out.push_back({lb + ".ffn_w2", ly.ffn_w2});
                out.push_back({lb + ".ffn_b2", ly.ffn_b2});
                out.push_back({lb + ".ln2_g", ly.ln2_g});
                out.push_back({lb + ".ln2_b", ly.ln2_b});
            }
            out.push_back({base + ".head_w", br.head_w});
            out.push_back({base + ".head_b", br.head_b});
        }
        for (std::size_t i = 0; i < residual_branches_.size(); ++i) {
            const std::string base =
                "residual." + std::to_string(cfg_.scales[residual_scale_idx_[i]].period_hours);
            const ResidualBranch& br = residual_branches_[i];
            for (std::size_t l = 0; l < br.conv_w.size(); ++l) {
                out.push_back({base + ".conv" + std::to_string(l) + ".w", br.conv_w[l]});
                out.push_back({base + ".conv" + std::to_string(l) + ".b", br.conv_b[l]});
            }
            out.push_back({base + ".head_w", br.head_w});
            out.push_back({base + ".head_b", br.head_b});
        }
        out.push_back({"combiner.alpha", alpha_});
        out.push_back({"combiner.beta", beta_});
        return out;
    }

    /// Stable fingerprint over configuration and every parameter value.
    std::string fingerprint() const {
        Fnv1a h;
        h.update(std::string("loadlens-model"));
        h.update(cfg_.seed);
        for (const auto& np : parameters()) {
            h.update(np.name);
            h.update(static_cast<std::uint64_t>(np.var.rows()));
            h.update(static_cast<std::uint64_t>(np.var.cols()));
            const nn::Mat& m = np.var.value();
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) h.update(m(r, c));
        }
        return h.hex();
    }

private:
    struct AttentionLayer {
        nn::Var wq, bq, wk, bk, wv, bv, wo, bo;
        nn::Var ln1_g, ln1_b;
        nn::Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        nn::Var ln2_g, ln2_b;
    };

    struct TrendBranch {
        nn::Var tok_w; // 2 x d
        nn::Var tok_b; // 1 x d
        std::vector<AttentionLayer> layers;
        nn::Var head_w; // (P*d) x T
        nn::Var head_b; // 1 x T
    };

    struct ResidualBranch {
        std::vector<nn::Var> conv_w; // layer 0: (k*2) x G, later: (k*G) x G
        std::vector<nn::Var> conv_b; // 1 x G
        nn::Var head_w;              // (P*G) x T
        nn::Var head_b;              // 1 x T
    };

    TrendBranch make_trend_branch(std::mt19937_64& rng) const {
        const Eigen::Index d = cfg_.embed_dim;
        TrendBranch br;
        br.tok_w = nn::Var::param(nn::glorot_uniform(2, d, rng));
        br.tok_b = nn::Var::param(nn::Mat::Zero(1, d));
        for (int l = 0; l < cfg_.attention_layers; ++l) {
            AttentionLayer ly;
            ly.wq = nn::Var::param(nn::glorot_uniform(d, d, rng));
            ly.bq = nn::Var::param(nn::Mat::Zero(1, d));
            ly.wk = nn::Var::param(nn::glorot_uniform(d, d, rng));
            ly.bk = nn::Var::param(nn::Mat::Zero(1, d));
            ly.wv = nn::Var::param(nn::glorot_uniform(d, d, rng));
            ly.bv = nn::Var::param(nn::Mat::Zero(1, d));
            ly.wo = nn::Var::param(nn::glorot_uniform(d, d, rng));
            ly.bo = nn::Var::param(nn::Mat::Zero(1, d));
            ly.ln1_g = nn::Var::param(nn::Mat::Ones(1, d));
            ly.ln1_b = nn::Var::param(nn::Mat::Zero(1, d));
            ly.ffn_w1 = nn::Var::param(nn::glorot_uniform(d, cfg_.ffn_dim, rng));
            ly.ffn_b1 = nn::Var::param(nn::Mat::Zero(1, cfg_.ffn_dim));
            ly.ffn_w2 = nn::Var::param(nn::glorot_uniform(cfg_.ffn_dim, d, rng));
            ly.ffn_b2 = nn::Var::param(nn::Mat::Zero(1, d));
            ly.ln2_g = nn::Var::param(nn::Mat::Ones(1, d));
            ly.ln2_b = nn::Var::param(nn::Mat::Zero(1, d));
            br.layers.push_back(std::move(ly));
        }
        br.head_w = nn::Var::param(nn::glorot_uniform(cfg_.history * d, cfg_.horizon, rng));
        br.head_b = nn::Var::param(nn::Mat::Zero(1, cfg_.horizon));
        return br;
    }

    ResidualBranch make_residual_branch(std::mt19937_64& rng) const {
        const Eigen::Index g = cfg_.conv_channels;
        ResidualBranch br;
        for (int l = 0; l < cfg_.conv_layers; ++l) {
            const Eigen::Index in_ch = (l == 0) ? 2 : g;
            br.conv_w.push_back(nn::Var::param(nn::glorot_uniform(cfg_.conv_kernel * in_ch, g, rng)));
            br.conv_b.push_back(nn::Var::param(nn::Mat::Zero(1, g)));
        }
        br.head_w = nn::Var::param(nn::glorot_uniform(cfg_.history * g, cfg_.horizon, rng));
        br.head_b = nn::Var::param(nn::Mat::Zero(1, cfg_.horizon));
        return br;
    }

    static nn::Mat take_rows(const nn::Mat& src, const std::vector<Eigen::Index>& rows) {
        nn::Mat out(static_cast<Eigen::Index>(rows.size()), src.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
        return out;
    }

    /// Interleaves a component batch and the feature representation batch into
    /// a (B*P) x 2 token stream (row order: sample-major, then step).
    static nn::Var stack_channels(const nn::Var& component, const nn::Var& repr, Eigen::Index b,
                                  Eigen::Index p) {
        nn::Var c0 = nn::reshape(component, b * p, 1);
        nn::Var c1 = nn::reshape(repr, b * p, 1);
        return nn::concat_cols({c0, c1});
    }

    nn::Var trend_branch_forward(const TrendBranch& br, const nn::Var& tokens_in,
                                 Eigen::Index b) const {
        const Eigen::Index p = cfg_.history;
        const Eigen::Index d = cfg_.embed_dim;
        const Eigen::Index dh = d / cfg_.heads;

        nn::Var x = nn::add_rowvec(nn::matmul(tokens_in, br.tok_w), br.tok_b);
        nn::Mat pe_one = positional_encoding(p, d);
        nn::Mat pe(b * p, d);
        for (Eigen::Index i = 0; i < b; ++i) pe.middleRows(i * p, p) = pe_one;
        x = nn::add(x, nn::Var::constant(std::move(pe)));

        const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (const auto& ly : br.layers) {
            nn::Var q = nn::add_rowvec(nn::matmul(x, ly.wq), ly.bq);
            nn::Var k = nn::add_rowvec(nn::matmul(x, ly.wk), ly.bk);
            nn::Var v = nn::add_rowvec(nn::matmul(x, ly.wv), ly.bv);
            std::vector<nn::Var> sample_outs;
            sample_outs.reserve(static_cast<std::size_t>(b));
            for (Eigen::Index i = 0; i < b; ++i) {
                nn::Var qs = nn::slice_rows(q, i * p, p);
                nn::Var ks = nn::slice_rows(k, i * p, p);
                nn::Var vs = nn::slice_rows(v, i * p, p);
                std::vector<nn::Var> heads;
                heads.reserve(static_cast<std::size_t>(cfg_.heads));
                for (int hd = 0; hd < cfg_.heads; ++hd) {
                    nn::Var qh = nn::slice_cols(qs, hd * dh, dh);
                    nn::Var kh = nn::slice_cols(ks, hd * dh, dh);
                    nn::Var vh = nn::slice_cols(vs, hd * dh, dh);
                    nn::Var scores = nn::scale(nn::matmul_nt(qh, kh), attn_scale);
                    heads.push_back(nn::matmul(nn::softmax_rows(scores), vh));
                }
                sample_outs.push_back(cfg_.heads == 1 ? heads.front() : nn::concat_cols(heads));
            }
            nn::Var attn = b == 1 ? sample_outs.front() : nn::concat_rows(sample_outs);
            attn = nn::add_rowvec(nn::matmul(attn, ly.wo), ly.bo);
            x = nn::layer_norm_rows(nn::add(x, attn), ly.ln1_g, ly.ln1_b);
            nn::Var ffn = nn::add_rowvec(
                nn::matmul(nn::relu(nn::add_rowvec(nn::matmul(x, ly.ffn_w1), ly.ffn_b1)),
                           ly.ffn_w2),
                ly.ffn_b2);
            x = nn::layer_norm_rows(nn::add(x, ffn), ly.ln2_g, ly.ln2_b);
        }

        nn::Var flat = nn::reshape(x, b, p * d);
        return nn::add_rowvec(nn::matmul(flat, br.head_w), br.head_b);
    }

    nn::Var residual_branch_forward(const ResidualBranch& br, const nn::Var& tokens_in,
                                    Eigen::Index b) const {
        const Eigen::Index p = cfg_.history;
        const Eigen::Index k = cfg_.conv_kernel;
        const Eigen::Index half = k / 2;

        // Same-length convolution via gathered neighborhoods (zero padding at
        // the window edges; index -1 marks a padded row).
        auto idx = std::make_shared<std::vector<Eigen::Index>>();
        idx->reserve(static_cast<std::size_t>(b * p * k));
        for (Eigen::Index i = 0; i < b; ++i)
            for (Eigen::Index t = 0; t < p; ++t)
                for (Eigen::Index j = -half; j <= half; ++j) {
                    const Eigen::Index step = t + j;
                    idx->push_back(step < 0 || step >= p ? -1 : i * p + step);
                }

        nn::Var x = tokens_in; // (B*P) x channels
        for (std::size_t l = 0; l < br.conv_w.size(); ++l) {
            nn::Var patches = nn::gather_rows(x, idx);              // (B*P*k) x ch
            patches = nn::reshape(patches, b * p, k * x.cols());    // (B*P) x (k*ch)
            x = nn::add_rowvec(nn::matmul(patches, br.conv_w[l]), br.conv_b[l]);
            if (l + 1 < br.conv_w.size()) x = nn::relu(x);
        }

        nn::Var flat = nn::reshape(x, b, p * cfg_.conv_channels);
        return nn::add_rowvec(nn::matmul(flat, br.head_w), br.head_b);
    }

    ModelConfig cfg_;
    FeatureEncoderBank bank_;
    std::vector<std::size_t> trend_scale_idx_;
    std::vector<std::size_t> residual_scale_idx_;
    std::vector<TrendBranch> trend_branches_;
    std::vector<ResidualBranch> residual_branches_;
    nn::Var alpha_; // 1 x N
    nn::Var beta_;  // 1 x N
    bool trained_ = false;
    std::optional<StandardizationState> standardization_;
};

// --- checkpointing ----------------------------------------------------------

namespace detail {

inline json model_config_to_json(const ModelConfig& c) {
    json scales = json::array();
    for (const auto& s : c.scales)
        scales.push_back({{"period_hours", s.period_hours}, {"kernel_size", s.kernel_size}});
    return json{{"history", c.history},
                {"horizon", c.horizon},
                {"scales", scales},
                {"feature_names", c.feature_names},
                {"embed_dim", c.embed_dim},
                {"attention_layers", c.attention_layers},
                {"heads", c.heads},
                {"ffn_dim", c.ffn_dim},
                {"conv_channels", c.conv_channels},
                {"conv_layers", c.conv_layers},
                {"conv_kernel", c.conv_kernel},
                {"feature_hidden", c.feature_hidden},
                {"ablation",
                 {{"disable_trend", c.ablation.disable_trend},
                  {"disable_residual", c.ablation.disable_residual},
                  {"raw_load", c.ablation.raw_load},
                  {"drop_trend_periods", c.ablation.drop_trend_periods},
                  {"drop_residual_periods", c.ablation.drop_residual_periods}}},
                {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.history = j.at("history").get<int>();
    c.horizon = j.at("horizon").get<int>();
    for (const auto& s : j.at("scales"))
        c.scales.push_back(
            {s.at("period_hours").get<int>(), s.at("kernel_size").get<int>()});
    c.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.attention_layers = j.at("attention_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.conv_channels = j.at("conv_channels").get<int>();
    c.conv_layers = j.at("conv_layers").get<int>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.feature_hidden = j.at("feature_hidden").get<int>();
    const auto& ab = j.at("ablation");
    c.ablation.disable_trend = ab.at("disable_trend").get<bool>();
    c.ablation.disable_residual = ab.at("disable_residual").get<bool>();
    c.ablation.raw_load = ab.at("raw_load").get<bool>();
    c.ablation.drop_trend_periods = ab.value("drop_trend_periods", std::vector<int>{});
    c.ablation.drop_residual_periods = ab.value("drop_residual_periods", std::vector<int>{});
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json standardization_to_json(const StandardizationState& s) {
    json features = json::array();
    for (const auto& f : s.features)
        features.push_back({{"mean", f.mean}, {"stddev", f.stddev}});
    return json{{"load", {{"mean", s.load.mean}, {"stddev", s.load.stddev}}},
                {"features", features}};
}

inline StandardizationState standardization_from_json(const json& j) {
    StandardizationState s;
    s.load.mean = j.at("load").at("mean").get<double>();
    s.load.stddev = j.at("load").at("stddev").get<double>();
    for (const auto& f : j.at("features"))
        s.features.push_back({f.at("mean").get<double>(), f.at("stddev").get<double>()});
    return s;
}

} // namespace detail

inline json checkpoint_to_json(const AdditiveForecaster& model) {
    json params = json::array();
    for (const auto& np : model.parameters()) {
        const nn::Mat& m = np.var.value();
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(m.rows() * m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
        params.push_back({{"name", np.name},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"data", data}});
    }
    json j{{"version", "loadlens-ckpt-v1"},
           {"config", detail::model_config_to_json(model.config())},
           {"seed", model.config().seed},
           {"trained", model.trained()},
           {"params", params}};
    if (model.standardization())
        j["standardization"] = detail::standardization_to_json(*model.standardization());
    else
        j["standardization"] = nullptr;
    return j;
}

inline void save_checkpoint(const AdditiveForecaster& model, const std::string& path) {
    write_json_file(path, checkpoint_to_json(model));
}

inline AdditiveForecaster checkpoint_from_json(const json& j) {
    if (!j.contains("version") || j.at("version").get<std::string>() != "loadlens-ckpt-v1")
        throw IoError("unsupported checkpoint version");
    AdditiveForecaster model(detail::model_config_from_json(j.at("config")));
    std::map<std::string, nn::Var> by_name;
    for (const auto& np : model.parameters()) by_name.emplace(np.name, np.var);
    std::size_t loaded = 0;
    for (const auto& pj : j.at("params")) {
        const std::string name = pj.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw KeyMismatchError("unknown parameter '" + name + "'");
        const Eigen::Index rows = pj.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = pj.at("cols").get<Eigen::Index>();
        if (rows != it->second.rows() || cols != it->second.cols())
            throw KeyMismatchError("parameter '" + name + "' has unexpected shape");
        const auto data = pj.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols)
            throw KeyMismatchError("parameter '" + name + "' has unexpected size");
        nn::Mat& m = it->second.value();
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++];
        ++loaded;
    }
    if (loaded != by_name.size())
        throw KeyMismatchError("checkpoint is missing parameters (" + std::to_string(loaded) +
                               " of " + std::to_string(by_name.size()) + ")");
    if (!j.at("standardization").is_null())
        model.set_standardization(detail::standardization_from_json(j.at("standardization")));
    if (j.value("trained", false)) model.mark_trained();
    return model;
}

inline AdditiveForecaster load_checkpoint(const std::string& path) {
    return checkpoint_from_json(read_json_file(path));
}

} // namespace loadlens
