#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "loadlens/common.hpp"

#ifndef LOADLENS_BIN
#error "LOADLENS_BIN must point at the command-line binary"
#endif

namespace {

namespace fs = std::filesystem;
using loadlens::json;

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

class CliFixture : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               (std::string("loadlens_cli_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        out_dir_ = dir_ / "artifacts";
        config_path_ = dir_ / "config.json";
        write_config(default_config());
    }
    void TearDown() override { fs::remove_all(dir_); }

    json default_config() const {
        return json{
            {"seed", 1},
            {"output_dir", out_dir_.string()},
            {"dataset",
             {{"kind", "synthetic"},
              {"synthetic",
               {{"length", 700},
                {"seasonal", json::array({{{"period_hours", 24}, {"amplitude", 1.0}},
                                          {{"period_hours", 12}, {"amplitude", 0.6}}})},
                {"noise_stddev", 0.1},
                {"coupling", {{"temperature", 0.9}}}}}}},
            {"window", {{"history", 32}, {"horizon", 8}, {"stride", 2}}},
            {"similarity", {{"lookforward", 30}}},
            {"kernels", {{"auto", 2}}},
            {"model",
             {{"embed_dim", 8},
              {"attention_layers", 1},
              {"heads", 2},
              {"ffn_dim", 16},
              {"conv_channels", 4},
              {"conv_layers", 2},
              {"conv_kernel", 3},
              {"feature_hidden", 4}}},
            {"train",
             {{"batch_size", 32}, {"epochs", 2}, {"learning_rate", 0.003}, {"patience", 5}}}};
    }

    void write_config(const json& j) {
        std::ofstream out(config_path_);
        out << j.dump(2) << "\n";
    }

    int run_cli(const std::string& args, std::string* output = nullptr) {
        const fs::path capture = dir_ / "cli_output.txt";
        const std::string cmd = std::string(LOADLENS_BIN) + " " + args + " -c " +
                                config_path_.string() + " >" + capture.string() + " 2>&1";
        const int rc = std::system(cmd.c_str());
        if (output) *output = read_file(capture);
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }

    json artifact(const std::string& name) const {
        return loadlens::read_json_file(out_dir_ / name);
    }

    fs::path dir_, out_dir_, config_path_;
};

TEST_F(CliFixture, FullPipelineProducesConsistentArtifacts) {
    std::string out;
    ASSERT_EQ(run_cli("analyze", &out), 0) << out;

    // Kernel auto-detection recovers both seasonal periods.
    const json kernels = artifact("kernels.json");
    EXPECT_EQ(kernels.at("kind"), "kernels");
    EXPECT_EQ(kernels.at("source"), "auto");
    std::vector<int> periods = kernels.at("periods").get<std::vector<int>>();
    std::vector<int> sizes = kernels.at("kernel_sizes").get<std::vector<int>>();
    std::sort(periods.begin(), periods.end());
    std::sort(sizes.begin(), sizes.end());
    EXPECT_EQ(periods, (std::vector<int>{12, 24}));
    EXPECT_EQ(sizes, (std::vector<int>{13, 25}));

    const json profile = artifact("profile.json");
    EXPECT_EQ(profile.at("kind"), "similarity_profile");
    EXPECT_EQ(profile.at("P").get<int>(), 32);
    EXPECT_EQ(profile.at("W").get<int>(), 30);

    ASSERT_EQ(run_cli("train", &out), 0) << out;
    EXPECT_NE(out.find("best epoch"), std::string::npos);
    const json ckpt = artifact("checkpoint.json");
    EXPECT_EQ(ckpt.at("version"), "loadlens-ckpt-v1");
    EXPECT_TRUE(ckpt.at("trained").get<bool>());
    const json log = artifact("training_log.json");
    EXPECT_EQ(log.at("kind"), "training_log");
    EXPECT_EQ(log.at("epochs").size(), 2u);

    ASSERT_EQ(run_cli("evaluate", &out), 0) << out;
    const json metrics = artifact("metrics.json");
    EXPECT_EQ(metrics.at("kind"), "metrics");
    EXPECT_GT(metrics.at("standardized").at("mse").get<double>(), 0.0);
    EXPECT_GT(metrics.at("persistence_mse").get<double>(), 0.0);
    ASSERT_FALSE(metrics.at("actual").is_null());
    EXPECT_EQ(metrics.at("actual").at("units"), "actual");

    ASSERT_EQ(run_cli("explain", &out), 0) << out;
    const json sig = artifact("significance.json");
    EXPECT_EQ(sig.at("kind"), "significance");
    for (const char* feature : {"temperature", "calendar", "humidity"})
        EXPECT_TRUE(sig.at("features").contains(feature));
    EXPECT_TRUE(sig.at("trend").is_object());
    EXPECT_TRUE(sig.at("residual").is_object());
    EXPECT_FALSE(sig.at("model").get<std::string>().empty());
    EXPECT_FALSE(sig.at("dataset").get<std::string>().empty());

    const fs::path specs = dir_ / "specs.json";
    {
        std::ofstream s(specs);
        s << R"([{"drop_features": ["humidity"]}, {"drop_trend_kernels": [24]}])" << "\n";
    }
    ASSERT_EQ(run_cli("perturb --specs " + specs.string(), &out), 0) << out;
    const json perturbation = artifact("perturbation.json");
    EXPECT_EQ(perturbation.at("kind"), "perturbation");
    ASSERT_EQ(perturbation.at("rows").size(), 2u);
    for (const auto& row : perturbation.at("rows")) {
        EXPECT_FALSE(row.at("failed").get<bool>());
        EXPECT_EQ(row.at("test_windows"), perturbation.at("test_windows"));
    }

    // Every artifact of the run carries the same config hash and seed.
    const std::string expected_hash = profile.at("config_hash").get<std::string>();
    ASSERT_EQ(expected_hash.size(), 16u);
    for (const char* name : {"profile.json", "kernels.json", "checkpoint.json",
                             "training_log.json", "metrics.json", "significance.json",
                             "perturbation.json"}) {
        const json j = artifact(name);
        EXPECT_EQ(j.at("config_hash").get<std::string>(), expected_hash) << name;
        EXPECT_EQ(j.at("seed").get<int>(), 1) << name;
    }
}

TEST_F(CliFixture, TrainingIsReproducibleByteForByte) {
    auto cfg = default_config();
    cfg["train"]["epochs"] = 1;
    cfg["kernels"] = json{{"periods", json::array({12, 24})}};
    write_config(cfg);

    std::string out;
    ASSERT_EQ(run_cli("train", &out), 0) << out;
    const std::string first_ckpt = read_file(out_dir_ / "checkpoint.json");
    const std::string first_log = read_file(out_dir_ / "training_log.json");
    ASSERT_EQ(run_cli("train", &out), 0) << out;
    EXPECT_EQ(loadlens::hash_string(read_file(out_dir_ / "checkpoint.json")),
              loadlens::hash_string(first_ckpt));
    EXPECT_EQ(read_file(out_dir_ / "training_log.json"), first_log);
}

TEST_F(CliFixture, SetOverridesReachTheRun) {
    auto cfg = default_config();
    cfg["kernels"] = json{{"periods", json::array({12, 24})}};
    write_config(cfg);

    std::string out;
    ASSERT_EQ(run_cli("train --set train.epochs=1 --set 'model.ablation={\"raw_load\":true}'",
                      &out),
              0)
        << out;
    EXPECT_EQ(artifact("training_log.json").at("epochs").size(), 1u);
    EXPECT_TRUE(
        artifact("checkpoint.json").at("config").at("ablation").at("raw_load").get<bool>());

    // Overrides change the config hash.
    ASSERT_EQ(run_cli("analyze", &out), 0) << out;
    const std::string base_hash = artifact("profile.json").at("config_hash").get<std::string>();
    ASSERT_EQ(run_cli("analyze --set seed=7", &out), 0) << out;
    const json reseeded = artifact("profile.json");
    EXPECT_NE(reseeded.at("config_hash").get<std::string>(), base_hash);
    EXPECT_EQ(reseeded.at("seed").get<int>(), 7);
}

TEST_F(CliFixture, ValidationFailuresExitTwo) {
    std::string out;
    // Lookforward beyond the training split cannot be profiled.
    EXPECT_EQ(run_cli("analyze --set similarity.lookforward=10000", &out), 2) << out;
    EXPECT_NE(out.find("error"), std::string::npos);

    // Split ratios that do not sum to one are a config error.
    EXPECT_EQ(run_cli("analyze --set split.train=0.5", &out), 2) << out;

    // Auto kernels without a prior analyze step cannot train.
    EXPECT_EQ(run_cli("train", &out), 2) << out;
    EXPECT_NE(out.find("analyze"), std::string::npos);

    // Malformed --set assignment.
    EXPECT_EQ(run_cli("analyze --set nonsense", &out), 2) << out;

    // Perturbation spec naming an unknown feature.
    auto cfg = default_config();
    cfg["kernels"] = json{{"periods", json::array({12, 24})}};
    cfg["train"]["epochs"] = 1;
    write_config(cfg);
    const fs::path specs = dir_ / "bad_specs.json";
    {
        std::ofstream s(specs);
        s << R"([{"drop_features": ["wind"]}])" << "\n";
    }
    EXPECT_EQ(run_cli("perturb --specs " + specs.string(), &out), 2) << out;
}

TEST_F(CliFixture, RuntimeFailuresExitThree) {
    std::string out;
    // Evaluating a checkpoint path that does not exist is a runtime failure.
    EXPECT_EQ(run_cli("evaluate --checkpoint " + (dir_ / "missing.json").string(), &out), 3)
        << out;
    EXPECT_NE(out.find("checkpoint"), std::string::npos);
    EXPECT_EQ(run_cli("explain --checkpoint " + (dir_ / "missing.json").string(), &out), 3) << out;
}

TEST_F(CliFixture, BadInvocationsAreRejected) {
    const fs::path capture = dir_ / "cli_output.txt";
    // Missing subcommand and missing config file are both parse errors.
    int rc = std::system((std::string(LOADLENS_BIN) + " >" + capture.string() + " 2>&1").c_str());
    EXPECT_NE(WEXITSTATUS(rc), 0);
    rc = std::system((std::string(LOADLENS_BIN) + " analyze -c " + (dir_ / "nope.json").string() +
                      " >" + capture.string() + " 2>&1")
                         .c_str());
    EXPECT_NE(WEXITSTATUS(rc), 0);
}

TEST_F(CliFixture, ImageSidecarsOnDemand) {
    auto cfg = default_config();
    cfg["kernels"] = json{{"periods", json::array({12, 24})}};
    cfg["emit_images"] = true;
    write_config(cfg);
    std::string out;
    ASSERT_EQ(run_cli("analyze", &out), 0) << out;
    EXPECT_TRUE(fs::exists(out_dir_ / "profile.json.ppm"));
}

} // namespace
