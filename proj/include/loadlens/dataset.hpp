#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "loadlens/common.hpp"
#include "loadlens/errors.hpp"

namespace loadlens {

/// Per-column standardization statistics. stddev is the population
/// standard deviation of the raw column.
struct ColumnStats {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Standardization applied to a dataset: one entry for the load column and
/// one per feature column, in feature order.
struct StandardizationState {
    ColumnStats load;
    std::vector<ColumnStats> features;
};

/**
 * Aligned load + auxiliary feature series at a uniform (hourly) resolution.
 *
 * All columns share the same length and timestamp axis. Timestamps are kept
 * for validation only; calendar information reaches a model exclusively
 * through explicit feature columns.
 */
struct TimeSeriesDataset {
    std::vector<std::int64_t> timestamps;          ///< epoch seconds, uniform spacing
    std::vector<double> load;
    std::vector<std::string> feature_names;        ///< K names
    std::vector<std::vector<double>> features;     ///< K series, each of length M
    std::optional<StandardizationState> standardization;

    std::size_t length() const { return load.size(); }
    std::size_t feature_count() const { return features.size(); }

    const std::vector<double>& feature(const std::string& name) const {
        for (std::size_t q = 0; q < feature_names.size(); ++q)
            if (feature_names[q] == name) return features[q];
        throw MissingColumnError(name);
    }

    /// Checks the structural invariants (alignment, ordering, uniform spacing).
    void validate() const {
        const std::size_t m = load.size();
        if (timestamps.size() != m)
            throw ShapeMismatchError("timestamps length " + std::to_string(timestamps.size()) +
                                     " vs load length " + std::to_string(m));
        if (feature_names.size() != features.size())
            throw ShapeMismatchError("feature name/series count");
        for (std::size_t q = 0; q < features.size(); ++q)
            if (features[q].size() != m)
                throw ShapeMismatchError("feature '" + feature_names[q] + "' length " +
                                         std::to_string(features[q].size()) + " vs " +
                                         std::to_string(m));
        if (m >= 2) {
            const std::int64_t step = timestamps[1] - timestamps[0];
            if (step <= 0) throw NonUniformTimestampsError("timestamp", 2);
            for (std::size_t i = 2; i < m; ++i)
                if (timestamps[i] - timestamps[i - 1] != step)
                    throw NonUniformTimestampsError("timestamp", i + 1);
        }
    }

    /// Stable content fingerprint over column names and all values.
    std::string fingerprint() const {
        Fnv1a h;
        for (auto t : timestamps) h.update(static_cast<std::uint64_t>(t));
        h.update(load);
        for (std::size_t q = 0; q < features.size(); ++q) {
            h.update(feature_names[q]);
            h.update(features[q]);
        }
        return h.hex();
    }
};

/// Chronological train/val/test split ratios. Remainder rows after the
/// floor rule always fall to the test split.
struct SplitSpec {
    std::array<double, 3> ratios{0.7, 0.2, 0.1};
    enum class RemainderPolicy { ToTest };
    RemainderPolicy remainder_policy = RemainderPolicy::ToTest;

    void validate() const {
        for (double r : ratios)
            if (r < 0.0) throw ConfigError("split ratios must be non-negative");
        const double sum = ratios[0] + ratios[1] + ratios[2];
        if (std::abs(sum - 1.0) > 1e-12)
            throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
    }
};

/// One training instance: P history steps of load and features, T target steps.
struct WindowSample {
    std::vector<double> history_load;                  ///< length P
    std::vector<std::vector<double>> history_features; ///< K series of length P
    std::vector<double> target;                        ///< length T
    std::size_t origin_index = 0;                      ///< start position in the source series
};

/// Names the columns of a CSV source. Columns listed in feature_columns are
/// the auxiliary features, in that order; other columns are ignored.
struct CsvSchema {
    std::string timestamp_column;
    std::string load_column;
    std::vector<std::string> feature_columns;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_numeric_cell(const std::string& raw, const std::string& column,
                                 std::size_t row) {
    const std::string cell = trim(raw);
    if (cell.empty()) throw NonNumericCellError(column, row, raw);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || !std::isfinite(v))
        throw NonNumericCellError(column, row, raw);
    return v;
}

// Accepts integer epoch hours or ISO-8601 "YYYY-MM-DD[T ]HH:MM[:SS]".
// Returns epoch seconds.
inline std::int64_t parse_timestamp(const std::string& raw, const std::string& column,
                                    std::size_t row) {
    const std::string cell = trim(raw);
    if (cell.empty()) throw NonNumericCellError(column, row, raw);
    if (cell.find('-') == std::string::npos || cell.find('-') == 0) {
        char* end = nullptr;
        const long long hours = std::strtoll(cell.c_str(), &end, 10);
        if (end != cell.c_str() + cell.size())
            throw NonNumericCellError(column, row, raw);
        return static_cast<std::int64_t>(hours) * 3600;
    }
    std::tm tm{};
    int year, month, day, hour = 0, minute = 0, second = 0;
    char sep = '\0';
    const int n = std::sscanf(cell.c_str(), "%d-%d-%d%c%d:%d:%d", &year, &month, &day, &sep,
                              &hour, &minute, &second);
    if (n < 3 || (n > 3 && sep != 'T' && sep != ' '))
        throw NonNumericCellError(column, row, raw);
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = minute;
    tm.tm_sec = second;
    return static_cast<std::int64_t>(timegm(&tm));
}

} // namespace detail

/**
 * Parses a CSV file into a TimeSeriesDataset.
 *
 * A header row is required. Missing cells are rejected, not imputed.
 * Timestamps must be strictly increasing with uniform spacing.
 */
inline TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    if (schema.feature_columns.empty())
        throw ConfigError("schema must declare at least one feature column");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw IoError("empty file " + path.string());
    const auto header = detail::split_csv_line(line);

    auto column_index = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::trim(header[i]) == name) return i;
        throw MissingColumnError(name);
    };

    const std::size_t ts_idx = column_index(schema.timestamp_column);
    const std::size_t load_idx = column_index(schema.load_column);
    std::vector<std::size_t> feature_idx;
    for (const auto& name : schema.feature_columns) feature_idx.push_back(column_index(name));

    TimeSeriesDataset ds;
    ds.feature_names = schema.feature_columns;
    ds.features.resize(schema.feature_columns.size());

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        auto cell_at = [&](std::size_t idx, const std::string& name) -> const std::string& {
            if (idx >= cells.size()) throw NonNumericCellError(name, row, "<missing>");
            return cells[idx];
        };
        ds.timestamps.push_back(
            detail::parse_timestamp(cell_at(ts_idx, schema.timestamp_column),
                                    schema.timestamp_column, row));
        ds.load.push_back(
            detail::parse_numeric_cell(cell_at(load_idx, schema.load_column),
                                       schema.load_column, row));
        for (std::size_t q = 0; q < feature_idx.size(); ++q)
            ds.features[q].push_back(detail::parse_numeric_cell(
                cell_at(feature_idx[q], schema.feature_columns[q]), schema.feature_columns[q],
                row));
    }
    if (ds.load.empty()) throw IoError("no data rows in " + path.string());

    // Uniform-spacing validation, reported against the timestamp column.
    if (ds.timestamps.size() >= 2) {
        const std::int64_t step = ds.timestamps[1] - ds.timestamps[0];
        if (step <= 0) throw NonUniformTimestampsError(schema.timestamp_column, 2);
        for (std::size_t i = 2; i < ds.timestamps.size(); ++i)
            if (ds.timestamps[i] - ds.timestamps[i - 1] != step)
                throw NonUniformTimestampsError(schema.timestamp_column, i + 1);
    }
    return ds;
}

namespace detail {

inline ColumnStats compute_stats(const std::vector<double>& column, const std::string& name) {
    double mean = 0.0;
    for (double x : column) mean += x;
    mean /= static_cast<double>(column.size());
    double var = 0.0;
    for (double x : column) var += (x - mean) * (x - mean);
    var /= static_cast<double>(column.size());
    const double sd = std::sqrt(var);
    if (sd <= 1e-12) throw ZeroVarianceError(name);
    return {mean, sd};
}

inline void apply_standardize(std::vector<double>& column, const ColumnStats& s) {
    for (double& x : column) x = (x - s.mean) / s.stddev;
}

} // namespace detail

/// Computes per-column standardization statistics from a raw dataset.
inline StandardizationState compute_standardization(const TimeSeriesDataset& ds) {
    StandardizationState state;
    state.load = detail::compute_stats(ds.load, "load");
    for (std::size_t q = 0; q < ds.features.size(); ++q)
        state.features.push_back(detail::compute_stats(ds.features[q], ds.feature_names[q]));
    return state;
}

/**
 * Standardizes every column to (x - mean) / stddev.
 *
 * When stats is absent the dataset's own statistics are used; callers pass
 * the train-split statistics when transforming validation/test splits so no
 * information leaks backwards. The applied transform is recorded and
 * invertible.
 */
inline TimeSeriesDataset standardize(const TimeSeriesDataset& ds,
                                     const std::optional<StandardizationState>& stats = {}) {
    if (ds.standardization)
        throw ValidationError("dataset is already standardized");
    StandardizationState state = stats ? *stats : compute_standardization(ds);
    if (state.features.size() != ds.features.size())
        throw ShapeMismatchError("standardization stats cover " +
                                 std::to_string(state.features.size()) + " features, dataset has " +
                                 std::to_string(ds.features.size()));
    TimeSeriesDataset out = ds;
    detail::apply_standardize(out.load, state.load);
    for (std::size_t q = 0; q < out.features.size(); ++q)
        detail::apply_standardize(out.features[q], state.features[q]);
    out.standardization = state;
    return out;
}

/// Inverts a recorded standardization, recovering raw values.
inline TimeSeriesDataset destandardize(const TimeSeriesDataset& ds) {
    if (!ds.standardization) throw ValidationError("dataset is not standardized");
    const auto& state = *ds.standardization;
    TimeSeriesDataset out = ds;
    for (double& x : out.load) x = x * state.load.stddev + state.load.mean;
    for (std::size_t q = 0; q < out.features.size(); ++q)
        for (double& x : out.features[q])
            x = x * state.features[q].stddev + state.features[q].mean;
    out.standardization.reset();
    return out;
}

/// Applies the inverse load transform to a vector of standardized values.
inline std::vector<double> inverse_standardize(const ColumnStats& stats,
                                               const std::vector<double>& values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = values[i] * stats.stddev + stats.mean;
    return out;
}

/// Split lengths under the floor rule: floor(ratio * M) for train and val,
/// remainder to test.
inline std::array<std::size_t, 3> split_lengths(std::size_t m, const std::array<double, 3>& ratios) {
    // The epsilon absorbs cases like 0.7 * 17520 landing a hair below the
    // exact integer in floating point.
    const double eps = 1e-9 * static_cast<double>(m) + 1e-12;
    const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(m) + eps));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(m) + eps));
    if (n_train + n_val > m) throw ConfigError("split ratios exceed dataset length");
    return {n_train, n_val, m - n_train - n_val};
}

namespace detail {

inline TimeSeriesDataset slice_dataset(const TimeSeriesDataset& ds, std::size_t begin,
                                       std::size_t count) {
    TimeSeriesDataset out;
    out.timestamps.assign(ds.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          ds.timestamps.begin() + static_cast<std::ptrdiff_t>(begin + count));
    out.load.assign(ds.load.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.load.begin() + static_cast<std::ptrdiff_t>(begin + count));
    out.feature_names = ds.feature_names;
    for (const auto& f : ds.features)
        out.features.emplace_back(f.begin() + static_cast<std::ptrdiff_t>(begin),
                                  f.begin() + static_cast<std::ptrdiff_t>(begin + count));
    out.standardization = ds.standardization;
    return out;
}

} // namespace detail

/// Chronological split into (train, val, test). Concatenating the three
/// parts in order reproduces the input.
inline std::array<TimeSeriesDataset, 3> split(const TimeSeriesDataset& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t m = ds.length();
    if (m < 10) throw DatasetTooSmallError(m, 10);
    const auto lengths = split_lengths(m, spec.ratios);
    return {detail::slice_dataset(ds, 0, lengths[0]),
            detail::slice_dataset(ds, lengths[0], lengths[1]),
            detail::slice_dataset(ds, lengths[0] + lengths[1], lengths[2])};
}

/**
 * Slides a (P history, T target) window over the series.
 *
 * Yields floor((M - P - T) / stride) + 1 samples; sample i starts at
 * index i * stride.
 */
inline std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, std::size_t history,
                                              std::size_t horizon, std::size_t stride = 1) {
    if (history < 1 || horizon < 1 || stride < 1)
        throw ConfigError("window history, horizon and stride must be >= 1");
    const std::size_t m = ds.length();
    if (m < history + horizon) throw SeriesTooShortError(m, history + horizon);

    const std::size_t count = (m - history - horizon) / stride + 1;
    std::vector<WindowSample> windows;
    windows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = i * stride;
        WindowSample w;
        w.origin_index = start;
        w.history_load.assign(ds.load.begin() + static_cast<std::ptrdiff_t>(start),
                              ds.load.begin() + static_cast<std::ptrdiff_t>(start + history));
        w.history_features.reserve(ds.features.size());
        for (const auto& f : ds.features)
            w.history_features.emplace_back(
                f.begin() + static_cast<std::ptrdiff_t>(start),
                f.begin() + static_cast<std::ptrdiff_t>(start + history));
        w.target.assign(ds.load.begin() + static_cast<std::ptrdiff_t>(start + history),
                        ds.load.begin() + static_cast<std::ptrdiff_t>(start + history + horizon));
        windows.push_back(std::move(w));
    }
    return windows;
}

/// Stable fingerprint over a window set (all history, feature and target values).
inline std::string window_set_fingerprint(const std::vector<WindowSample>& windows) {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(windows.size()));
    for (const auto& w : windows) {
        h.update(static_cast<std::uint64_t>(w.origin_index));
        h.update(w.history_load);
        for (const auto& f : w.history_features) h.update(f);
        h.update(w.target);
    }
    return h.hex();
}

// --- synthetic data ---------------------------------------------------------

/**
 * Desk-scale synthetic generator standing in for utility-grid load data.
 *
 * load(t) = trend_slope * t
 *         + sum of sinusoids at the configured seasonal periods
 *         + sum of coupling[q] * feature_q(t)
 *         + Gaussian noise.
 *
 * Three auxiliary features are generated: "temperature" (a sinusoidal
 * driver with its own period and a seed-derived phase), "calendar" (a
 * binary weekend flag on a 168 h week) and "humidity" (white noise, a pure
 * distractor). Output is a deterministic function of these fields.
 */
struct SyntheticSpec {
    std::size_t length = 4000;
    std::uint64_t seed = 1;
    double trend_slope = 0.0; ///< load units per hour

    struct Seasonal {
        double period_hours;
        double amplitude = 1.0;
        double phase = 0.0;
    };
    std::vector<Seasonal> seasonal;

    double noise_stddev = 0.0;
    double temperature_period = 160.0;
    double temperature_amplitude = 1.0;
    std::map<std::string, double> coupling; ///< feature name -> coefficient
    std::size_t coupling_lag = 0; ///< hours: load(t) uses feature(t - lag)

    void validate() const {
        if (length < 1) throw ConfigError("synthetic length must be >= 1");
        for (const auto& s : seasonal)
            if (s.period_hours <= 0.0) throw ConfigError("seasonal period must be positive");
        if (temperature_period <= 0.0) throw ConfigError("temperature period must be positive");
        if (noise_stddev < 0.0) throw ConfigError("noise stddev must be non-negative");
        if (coupling_lag >= length) throw ConfigError("coupling lag must be < length");
        for (const auto& [name, _] : coupling)
            if (name != "temperature" && name != "calendar" && name != "humidity")
                throw ConfigError("unknown coupling target '" + name + "'");
    }
};

inline TimeSeriesDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t m = spec.length;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Draw order is fixed so output is reproducible from the seed alone.
    const double temp_phase = uniform(rng);
    std::vector<double> humidity(m);
    for (auto& v : humidity) v = gauss(rng);
    std::vector<double> noise(m, 0.0);
    if (spec.noise_stddev > 0.0)
        for (auto& v : noise) v = spec.noise_stddev * gauss(rng);

    TimeSeriesDataset ds;
    ds.feature_names = {"temperature", "calendar", "humidity"};
    ds.features.resize(3);
    auto& temperature = ds.features[0];
    auto& calendar = ds.features[1];
    temperature.resize(m);
    calendar.resize(m);
    ds.features[2] = std::move(humidity);

    for (std::size_t t = 0; t < m; ++t) {
        const double td = static_cast<double>(t);
        temperature[t] = spec.temperature_amplitude *
                         std::sin(2.0 * std::numbers::pi * td / spec.temperature_period + temp_phase);
        calendar[t] = (t % 168) >= 120 ? 1.0 : 0.0; // weekend hours of a Monday-start week
    }

    auto coupling_of = [&](const std::string& name) {
        auto it = spec.coupling.find(name);
        return it == spec.coupling.end() ? 0.0 : it->second;
    };
    const double c_temp = coupling_of("temperature");
    const double c_cal = coupling_of("calendar");
    const double c_hum = coupling_of("humidity");

    ds.timestamps.resize(m);
    ds.load.resize(m);
    for (std::size_t t = 0; t < m; ++t) {
        const double td = static_cast<double>(t);
        // With a positive coupling lag, load(t) reflects the features as they
        // were `lag` hours earlier (earliest value before that).
        const std::size_t tf = t >= spec.coupling_lag ? t - spec.coupling_lag : 0;
        double v = spec.trend_slope * td;
        for (const auto& s : spec.seasonal)
            v += s.amplitude * std::sin(2.0 * std::numbers::pi * td / s.period_hours + s.phase);
        v += c_temp * temperature[tf] + c_cal * calendar[tf] + c_hum * ds.features[2][tf];
        v += noise[t];
        ds.timestamps[t] = static_cast<std::int64_t>(t) * 3600;
        ds.load[t] = v;
    }
    return ds;
}

} // namespace loadlens
