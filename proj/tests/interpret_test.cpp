#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "loadlens/dataset.hpp"
#include "loadlens/interpret.hpp"

namespace {

namespace fs = std::filesystem;
using loadlens::AdditiveForecaster;
using loadlens::compare_significance;
using loadlens::extract_significance;
using loadlens::ModelConfig;
using loadlens::PerturbationContext;
using loadlens::PerturbationSpec;
using loadlens::run_perturbations;
using loadlens::SignificanceReport;
using loadlens::TrainConfig;

ModelConfig tiny_config(std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.history = 16;
    cfg.horizon = 4;
    cfg.scales = {{24, 5}, {12, 3}};
    cfg.feature_names = {"temperature", "calendar", "humidity"};
    cfg.embed_dim = 8;
    cfg.attention_layers = 1;
    cfg.heads = 2;
    cfg.ffn_dim = 16;
    cfg.conv_channels = 4;
    cfg.conv_layers = 2;
    cfg.conv_kernel = 3;
    cfg.feature_hidden = 3;
    cfg.seed = seed;
    return cfg;
}

std::vector<loadlens::WindowSample> windows_from_synthetic(std::size_t length, std::uint64_t seed,
                                                           const ModelConfig& cfg) {
    loadlens::SyntheticSpec spec;
    spec.length = std::max<std::size_t>(length, 200); // weekend flag needs both values
    spec.seed = seed;
    spec.seasonal = {{24.0, 1.0, 0.1}};
    spec.noise_stddev = 0.05;
    const auto ds = loadlens::standardize(loadlens::generate_synthetic(spec));
    return loadlens::make_windows(ds, static_cast<std::size_t>(cfg.history),
                                  static_cast<std::size_t>(cfg.horizon), 2);
}

TEST(Significance, ExtractMatchesModelWeights) {
    const ModelConfig cfg = tiny_config(3);
    AdditiveForecaster model(cfg);
    const auto report = extract_significance(model, "feedbeef00000000");

    ASSERT_EQ(report.feature_scores.size(), 3u);
    for (const auto& name : cfg.feature_names)
        EXPECT_NEAR(report.feature_scores.at(name), 1.0 / 3.0, 1e-12);
    ASSERT_EQ(report.trend_scores.size(), 2u);
    EXPECT_NEAR(report.trend_scores.at(24), 0.25, 1e-12);
    EXPECT_NEAR(report.trend_scores.at(12), 0.25, 1e-12);
    ASSERT_EQ(report.residual_scores.size(), 2u);
    EXPECT_EQ(report.model_fingerprint, model.fingerprint());
    EXPECT_EQ(report.dataset_fingerprint, "feedbeef00000000");
}

TEST(Significance, AblatedModelsReportOnlyActiveBranches) {
    ModelConfig cfg = tiny_config();
    cfg.ablation.drop_trend_periods = {24};
    AdditiveForecaster model(cfg);
    const auto report = extract_significance(model);
    EXPECT_EQ(report.trend_scores.size(), 1u);
    EXPECT_TRUE(report.trend_scores.count(12));
    EXPECT_EQ(report.residual_scores.size(), 2u);
}

TEST(Significance, JsonSchemaAndRoundTrip) {
    AdditiveForecaster model(tiny_config(5));
    auto report = extract_significance(model, "0123456789abcdef");
    const auto j = report.to_json();

    EXPECT_EQ(j.at("kind"), "significance");
    EXPECT_TRUE(j.at("features").is_object());
    EXPECT_TRUE(j.at("features").contains("temperature"));
    EXPECT_TRUE(j.at("trend").is_object());
    EXPECT_TRUE(j.at("trend").contains("24"));
    EXPECT_TRUE(j.at("residual").contains("12"));
    EXPECT_EQ(j.at("model").get<std::string>(), model.fingerprint());
    EXPECT_EQ(j.at("dataset").get<std::string>(), "0123456789abcdef");

    const auto back = loadlens::significance_from_json(j);
    EXPECT_EQ(back.feature_scores, report.feature_scores);
    EXPECT_EQ(back.trend_scores, report.trend_scores);
    EXPECT_EQ(back.residual_scores, report.residual_scores);
    EXPECT_EQ(back.model_fingerprint, report.model_fingerprint);
    EXPECT_EQ(back.dataset_fingerprint, report.dataset_fingerprint);

    EXPECT_THROW(loadlens::significance_from_json(loadlens::json{{"kind", "metrics"}}),
                 loadlens::IoError);
}

TEST(Significance, CompareSelfAndScaled) {
    AdditiveForecaster model(tiny_config(7));
    const auto a = extract_significance(model);
    EXPECT_NEAR(compare_significance(a, a), 1.0, 1e-12);

    // Same direction, different magnitude: cosine stays 1.
    SignificanceReport scaled = a;
    for (auto& [k, v] : scaled.feature_scores) v *= 3.0;
    for (auto& [k, v] : scaled.trend_scores) v *= 3.0;
    for (auto& [k, v] : scaled.residual_scores) v *= 3.0;
    EXPECT_NEAR(compare_significance(a, scaled), 1.0, 1e-12);

    SignificanceReport flipped = a;
    for (auto& [k, v] : flipped.feature_scores) v = -v;
    for (auto& [k, v] : flipped.trend_scores) v = -v;
    for (auto& [k, v] : flipped.residual_scores) v = -v;
    EXPECT_NEAR(compare_significance(a, flipped), -1.0, 1e-12);
}

TEST(Significance, CompareRejectsKeyMismatch) {
    AdditiveForecaster model(tiny_config());
    const auto a = extract_significance(model);

    SignificanceReport renamed = a;
    renamed.feature_scores.erase("humidity");
    renamed.feature_scores["wind"] = 0.1;
    EXPECT_THROW(compare_significance(a, renamed), loadlens::KeyMismatchError);

    SignificanceReport fewer = a;
    fewer.trend_scores.erase(24);
    EXPECT_THROW(compare_significance(a, fewer), loadlens::KeyMismatchError);
}

TEST(Significance, HeatmapEmission) {
    AdditiveForecaster model(tiny_config(9));
    const auto report = extract_significance(model, "aa");
    const auto dir = fs::temp_directory_path() / "loadlens_interpret_test";
    fs::create_directories(dir);
    const auto path = (dir / "significance.json").string();
    loadlens::emit_significance_heatmap(report, path, true);
    ASSERT_TRUE(fs::exists(path));
    ASSERT_TRUE(fs::exists(path + ".ppm"));
    std::ifstream in(path + ".ppm");
    std::string magic;
    in >> magic;
    EXPECT_EQ(magic, "P6");
    const auto j = loadlens::read_json_file(path);
    EXPECT_EQ(j.at("kind"), "significance");
    fs::remove_all(dir);
}

TEST(PerturbationSpecs, LabelsAndJson) {
    PerturbationSpec spec;
    spec.drop_features = {"humidity"};
    spec.drop_trend_kernels = {24};
    EXPECT_EQ(spec.effective_label(), "w/o humidity+w/o trend 24h");
    spec.label = "custom";
    EXPECT_EQ(spec.effective_label(), "custom");

    const auto j = spec.to_json();
    EXPECT_EQ(j.at("label"), "custom");
    EXPECT_TRUE(j.at("retrain_seed").is_null());
    auto back = loadlens::perturbation_spec_from_json(j);
    EXPECT_EQ(back.drop_features, spec.drop_features);
    EXPECT_EQ(back.drop_trend_kernels, spec.drop_trend_kernels);
    EXPECT_FALSE(back.retrain_seed.has_value());

    loadlens::json with_seed = j;
    with_seed["retrain_seed"] = 77;
    back = loadlens::perturbation_spec_from_json(with_seed);
    ASSERT_TRUE(back.retrain_seed.has_value());
    EXPECT_EQ(*back.retrain_seed, 77u);

    PerturbationSpec empty;
    EXPECT_EQ(empty.effective_label(), "baseline-copy");
}

class PerturbationFixture : public ::testing::Test {
protected:
    void SetUp() override {
        ctx_.model_config = tiny_config(2);
        ctx_.train_config.batch_size = 16;
        ctx_.train_config.epochs = 2;
        ctx_.train_config.learning_rate = 0.01;
        ctx_.train_config.patience = 5;
        ctx_.train_config.seed = 2;
        ctx_.train_windows = windows_from_synthetic(220, 11, ctx_.model_config);
        ctx_.val_windows = windows_from_synthetic(80, 12, ctx_.model_config);
        ctx_.test_windows = windows_from_synthetic(80, 13, ctx_.model_config);
    }
    PerturbationContext ctx_;
};

TEST_F(PerturbationFixture, RowsShareTestWindowsAndReportDeltas) {
    PerturbationSpec drop_feature;
    drop_feature.drop_features = {"humidity"};
    PerturbationSpec drop_branch;
    drop_branch.drop_trend_kernels = {24};
    PerturbationSpec reseeded;
    reseeded.retrain_seed = 99;

    const auto report = run_perturbations(ctx_, {drop_feature, drop_branch, reseeded});
    ASSERT_EQ(report.rows.size(), 3u);
    EXPECT_EQ(report.baseline_test_fingerprint,
              loadlens::window_set_fingerprint(ctx_.test_windows));
    for (const auto& row : report.rows) {
        EXPECT_FALSE(row.failed) << row.error;
        // Every retrained variant is scored on the identical test windows.
        EXPECT_EQ(row.test_window_fingerprint, report.baseline_test_fingerprint);
        EXPECT_NEAR(row.delta_mse, row.metrics.mse - report.baseline.mse, 1e-12);
    }

    const auto j = report.to_json();
    EXPECT_EQ(j.at("kind"), "perturbation");
    EXPECT_EQ(j.at("rows").size(), 3u);
    EXPECT_EQ(j.at("test_windows"), report.baseline_test_fingerprint);
    EXPECT_TRUE(j.at("rows")[0].contains("metrics"));
    EXPECT_TRUE(j.at("baseline").contains("mse"));
}

TEST_F(PerturbationFixture, UnknownTargetsRejectedUpFront) {
    PerturbationSpec bad_feature;
    bad_feature.drop_features = {"wind"};
    EXPECT_THROW(run_perturbations(ctx_, {bad_feature}), loadlens::KeyMismatchError);

    PerturbationSpec bad_period;
    bad_period.drop_trend_kernels = {48};
    EXPECT_THROW(run_perturbations(ctx_, {bad_period}), loadlens::KeyMismatchError);
}

TEST_F(PerturbationFixture, FailingRowIsCapturedNotFatal) {
    // Dropping every feature leaves the encoder bank without inputs, which the
    // model rejects; the harness must record the failure and keep going.
    PerturbationSpec drop_all;
    drop_all.drop_features = {"temperature", "calendar", "humidity"};
    PerturbationSpec fine;
    fine.drop_features = {"calendar"};

    const auto report = run_perturbations(ctx_, {drop_all, fine});
    ASSERT_EQ(report.rows.size(), 2u);
    EXPECT_TRUE(report.rows[0].failed);
    EXPECT_FALSE(report.rows[0].error.empty());
    EXPECT_FALSE(report.rows[1].failed) << report.rows[1].error;

    const auto j = report.to_json();
    EXPECT_TRUE(j.at("rows")[0].contains("error"));
    EXPECT_FALSE(j.at("rows")[0].contains("metrics"));
}

TEST_F(PerturbationFixture, RetrainSeedChangesOutcomeDeterministically) {
    PerturbationSpec same_seed; // baseline copy, same seeds
    PerturbationSpec other_seed;
    other_seed.retrain_seed = 1234;

    const auto report = run_perturbations(ctx_, {same_seed, other_seed});
    ASSERT_EQ(report.rows.size(), 2u);
    ASSERT_FALSE(report.rows[0].failed);
    ASSERT_FALSE(report.rows[1].failed);
    // A baseline copy reproduces the baseline numbers exactly.
    EXPECT_DOUBLE_EQ(report.rows[0].metrics.mse, report.baseline.mse);
    EXPECT_DOUBLE_EQ(report.rows[0].delta_mse, 0.0);
    // A different seed almost surely lands elsewhere.
    EXPECT_NE(report.rows[1].metrics.mse, report.baseline.mse);

    // The whole harness is deterministic.
    const auto again = run_perturbations(ctx_, {same_seed, other_seed});
    EXPECT_EQ(report.to_json().dump(), again.to_json().dump());
}

} // namespace
