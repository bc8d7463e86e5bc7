#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "loadlens/dataset.hpp"
#include "loadlens/similarity.hpp"

namespace {

using loadlens::cosine_similarity;
using loadlens::recommend_kernels;
using loadlens::similarity_profile;
using loadlens::SimilarityProfile;

double cosine_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> s(n);
    for (auto& v : s) v = gauss(rng);
    return s;
}

TEST(Similarity, CosineMatchesOracle) {
    std::mt19937_64 rng(17);
    for (int c = 0; c < 100; ++c) {
        const auto a = random_series(rng, 48);
        const auto b = random_series(rng, 48);
        EXPECT_NEAR(cosine_similarity(a, b), cosine_oracle(a, b), 1e-12);
    }
}

TEST(Similarity, CosineEdgeCases) {
    const std::vector<double> a{1.0, 2.0, 3.0};
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    const std::vector<double> neg{-1.0, -2.0, -3.0};
    EXPECT_NEAR(cosine_similarity(a, neg), -1.0, 1e-12);
    const std::vector<double> orth{0.0, 3.0, -2.0};
    EXPECT_NEAR(cosine_similarity(a, orth), 0.0, 1e-12);
    EXPECT_THROW(cosine_similarity(a, {1.0, 2.0}), loadlens::LengthMismatchError);
    EXPECT_THROW(cosine_similarity(a, {0.0, 0.0, 0.0}), loadlens::ZeroVectorError);
    EXPECT_THROW(cosine_similarity({}, {}), loadlens::LengthMismatchError);
}

TEST(Similarity, CosineIsClamped) {
    // Near-parallel vectors whose naive quotient can exceed 1 by rounding.
    std::vector<double> a(64, 1.0 / 3.0);
    std::vector<double> b(64, 1.0 / 7.0);
    const double sim = cosine_similarity(a, b);
    EXPECT_LE(sim, 1.0);
    EXPECT_GE(sim, 0.999999);
}

TEST(Similarity, ProfileMatchesBruteForce) {
    std::mt19937_64 rng(23);
    const auto load = random_series(rng, 120);
    const std::size_t history = 16, lookforward = 10;
    const auto profile = similarity_profile(load, history, lookforward);

    const std::size_t expected_rows = load.size() - history - lookforward + 1;
    ASSERT_EQ(profile.row_count(), expected_rows);
    ASSERT_EQ(profile.mean_by_lag.size(), lookforward);

    for (std::size_t i = 0; i < expected_rows; ++i) {
        ASSERT_EQ(profile.rows[i].size(), lookforward);
        const std::vector<double> base(load.begin() + static_cast<std::ptrdiff_t>(i),
                                       load.begin() + static_cast<std::ptrdiff_t>(i + history));
        for (std::size_t lag = 1; lag <= lookforward; ++lag) {
            const std::vector<double> other(
                load.begin() + static_cast<std::ptrdiff_t>(i + lag),
                load.begin() + static_cast<std::ptrdiff_t>(i + lag + history));
            EXPECT_NEAR(profile.rows[i][lag - 1], cosine_oracle(base, other), 1e-12);
        }
    }
    for (std::size_t lag = 0; lag < lookforward; ++lag) {
        double mean = 0.0;
        for (const auto& row : profile.rows) mean += row[lag];
        mean /= static_cast<double>(expected_rows);
        EXPECT_NEAR(profile.mean_by_lag[lag], mean, 1e-12);
    }
}

TEST(Similarity, ProfileRejectsShortSeries) {
    const std::vector<double> load(20, 1.0);
    EXPECT_THROW(similarity_profile(load, 16, 10), loadlens::SeriesTooShortError);
    EXPECT_THROW(similarity_profile(load, 0, 4), loadlens::ConfigError);
    EXPECT_THROW(similarity_profile(load, 4, 0), loadlens::ConfigError);
}

TEST(Similarity, ProfileRejectsZeroWindow) {
    std::vector<double> load(60, 1.0);
    for (std::size_t i = 20; i < 28; ++i) load[i] = 0.0; // an all-zero window exists
    EXPECT_THROW(similarity_profile(load, 8, 4), loadlens::ZeroVectorError);
}

TEST(Similarity, RecoversKnownPeriodicities) {
    // Constructed series with 12 h and 24 h components plus mild noise.
    std::mt19937_64 rng(41);
    std::normal_distribution<double> gauss(0.0, 0.1);
    std::vector<double> load(1500);
    for (std::size_t t = 0; t < load.size(); ++t) {
        const double td = static_cast<double>(t);
        load[t] = std::sin(2.0 * std::numbers::pi * td / 24.0) +
                  0.7 * std::sin(2.0 * std::numbers::pi * td / 12.0) + gauss(rng);
    }
    const auto profile = similarity_profile(load, 72, 30);
    const auto rec = recommend_kernels(profile, 2);
    std::vector<int> periods = rec.periods;
    std::sort(periods.begin(), periods.end());
    EXPECT_EQ(periods, (std::vector<int>{12, 24}));
    std::vector<int> kernels = rec.kernel_sizes;
    std::sort(kernels.begin(), kernels.end());
    EXPECT_EQ(kernels, (std::vector<int>{13, 25}));
}

TEST(Similarity, ParityRuleOddStaysEvenBumps) {
    // A profile engineered to have peaks at lags 5 (odd) and 8 (even).
    SimilarityProfile p;
    p.history = 4;
    p.lookforward = 10;
    p.mean_by_lag = {0.0, 0.1, 0.0, 0.2, 0.9, 0.2, 0.1, 0.8, 0.1, 0.0};
    p.rows = {p.mean_by_lag};
    const auto rec = recommend_kernels(p, 2);
    ASSERT_EQ(rec.periods.size(), 2u);
    EXPECT_EQ(rec.periods[0], 5);  // strongest peak first
    EXPECT_EQ(rec.periods[1], 8);
    EXPECT_EQ(rec.kernel_sizes[0], 5); // odd period keeps its size
    EXPECT_EQ(rec.kernel_sizes[1], 9); // even period bumps to odd
}

TEST(Similarity, PeakDetectionIsStrict) {
    // Plateaus are not peaks; endpoints are never peaks.
    SimilarityProfile p;
    p.history = 4;
    p.lookforward = 7;
    p.mean_by_lag = {0.9, 0.5, 0.7, 0.7, 0.5, 0.6, 0.9};
    p.rows = {p.mean_by_lag};
    EXPECT_THROW(recommend_kernels(p, 1), loadlens::NotEnoughPeaksError);
}

TEST(Similarity, PeakTiesBreakTowardSmallerLag) {
    SimilarityProfile p;
    p.history = 4;
    p.lookforward = 9;
    p.mean_by_lag = {0.0, 0.8, 0.0, 0.0, 0.8, 0.0, 0.0, 0.3, 0.0};
    p.rows = {p.mean_by_lag};
    const auto rec = recommend_kernels(p, 1);
    EXPECT_EQ(rec.periods, (std::vector<int>{2}));
    EXPECT_EQ(rec.kernel_sizes, (std::vector<int>{3}));
}

TEST(Similarity, NotEnoughPeaksReported) {
    SimilarityProfile p;
    p.history = 4;
    p.lookforward = 5;
    p.mean_by_lag = {0.1, 0.2, 0.9, 0.2, 0.1};
    p.rows = {p.mean_by_lag};
    EXPECT_NO_THROW(recommend_kernels(p, 1));
    EXPECT_THROW(recommend_kernels(p, 2), loadlens::NotEnoughPeaksError);
    EXPECT_THROW(recommend_kernels(p, 0), loadlens::ConfigError);
}

TEST(Similarity, JsonRoundTrip) {
    std::mt19937_64 rng(29);
    const auto load = random_series(rng, 80);
    const auto profile = similarity_profile(load, 12, 8);
    const auto j = loadlens::to_json(profile);
    EXPECT_EQ(j.at("kind"), "similarity_profile");
    const auto back = loadlens::similarity_profile_from_json(j);
    EXPECT_EQ(back.history, profile.history);
    EXPECT_EQ(back.lookforward, profile.lookforward);
    EXPECT_EQ(back.rows, profile.rows);
    EXPECT_EQ(back.mean_by_lag, profile.mean_by_lag);
    EXPECT_THROW(loadlens::similarity_profile_from_json(loadlens::json{{"kind", "other"}}),
                 loadlens::ValidationError);
}

TEST(Similarity, HeatmapEmission) {
    std::mt19937_64 rng(31);
    const auto load = random_series(rng, 80);
    const auto profile = similarity_profile(load, 12, 8);
    const auto dir = std::filesystem::temp_directory_path() / "loadlens_sim_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "profile.json";
    loadlens::emit_similarity_heatmap(profile, path, true);
    EXPECT_TRUE(std::filesystem::exists(path));
    const auto ppm = dir / "profile.ppm";
    ASSERT_TRUE(std::filesystem::exists(ppm));
    std::ifstream in(ppm);
    std::string magic;
    in >> magic;
    EXPECT_EQ(magic, "P6");
    std::filesystem::remove_all(dir);
}

} // namespace
