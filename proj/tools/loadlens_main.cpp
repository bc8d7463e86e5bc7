#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loadlens/loadlens.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "Run config JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides,
                    "Override a config key, e.g. --set train.epochs=5 (repeatable)");
}

int run(int argc, char** argv) {
    CLI::App app{"loadlens — interpretable multi-scale short-term load forecasting"};
    app.require_subcommand(1);

    CommonArgs analyze_args, train_args, evaluate_args, explain_args, perturb_args;
    std::string evaluate_ckpt, explain_ckpt, perturb_specs;

    CLI::App* analyze = app.add_subcommand(
        "analyze", "Profile lag similarity and recommend decomposition kernels");
    add_common(analyze, analyze_args);

    CLI::App* train = app.add_subcommand("train", "Train a forecaster and write a checkpoint");
    add_common(train, train_args);

    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
    add_common(evaluate, evaluate_args);
    evaluate->add_option("--checkpoint", evaluate_ckpt,
                         "Checkpoint path (default: <output_dir>/checkpoint.json)");

    CLI::App* explain =
        app.add_subcommand("explain", "Extract significance scores from a checkpoint");
    add_common(explain, explain_args);
    explain->add_option("--checkpoint", explain_ckpt,
                        "Checkpoint path (default: <output_dir>/checkpoint.json)");

    CLI::App* perturb =
        app.add_subcommand("perturb", "Run the perturbation-ablation harness");
    add_common(perturb, perturb_args);
    perturb->add_option("--specs", perturb_specs, "Perturbation specs JSON file")
        ->required()
        ->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    auto default_ckpt = [](const loadlens::RunConfig& cfg) {
        return loadlens::detail::artifact_path(cfg, "checkpoint.json");
    };

    if (analyze->parsed()) {
        auto cfg = loadlens::load_run_config(analyze_args.config_path, analyze_args.overrides);
        auto result = loadlens::cmd_analyze(cfg);
        std::printf("wrote %s\n", result.profile_path.c_str());
        std::printf("wrote %s\n", result.kernels_path.c_str());
        std::printf("periods:");
        for (int p : result.periods) std::printf(" %d", p);
        std::printf("\nkernel sizes:");
        for (int k : result.kernel_sizes) std::printf(" %d", k);
        std::printf("\n");
    } else if (train->parsed()) {
        auto cfg = loadlens::load_run_config(train_args.config_path, train_args.overrides);
        auto result = loadlens::cmd_train(cfg);
        std::printf("wrote %s\n", result.checkpoint_path.c_str());
        std::printf("wrote %s\n", result.log_path.c_str());
        std::printf("best epoch %d, best val mse %.6f\n", result.log.best_epoch,
                    result.log.best_val_mse);
    } else if (evaluate->parsed()) {
        auto cfg = loadlens::load_run_config(evaluate_args.config_path, evaluate_args.overrides);
        if (evaluate_ckpt.empty()) evaluate_ckpt = default_ckpt(cfg);
        auto result = loadlens::cmd_evaluate(cfg, evaluate_ckpt);
        std::printf("wrote %s\n", result.metrics_path.c_str());
        std::printf("standardized mse %.6f mae %.6f rmse %.6f\n", result.standardized.mse,
                    result.standardized.mae, result.standardized.rmse);
        std::printf("persistence mse %.6f\n", result.persistence_mse);
    } else if (explain->parsed()) {
        auto cfg = loadlens::load_run_config(explain_args.config_path, explain_args.overrides);
        if (explain_ckpt.empty()) explain_ckpt = default_ckpt(cfg);
        auto result = loadlens::cmd_explain(cfg, explain_ckpt);
        std::printf("wrote %s\n", result.significance_path.c_str());
        for (const auto& [name, score] : result.report.feature_scores)
            std::printf("feature %-16s % .6f\n", name.c_str(), score);
    } else if (perturb->parsed()) {
        auto cfg = loadlens::load_run_config(perturb_args.config_path, perturb_args.overrides);
        auto result = loadlens::cmd_perturb(cfg, perturb_specs);
        std::printf("wrote %s\n", result.report_path.c_str());
        std::printf("baseline mse %.6f\n", result.report.baseline.mse);
        for (const auto& row : result.report.rows) {
            if (row.failed)
                std::printf("%-32s FAILED: %s\n", row.spec.effective_label().c_str(),
                            row.error.c_str());
            else
                std::printf("%-32s mse %.6f (delta %+.6f)\n", row.spec.effective_label().c_str(),
                            row.metrics.mse, row.delta_mse);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const loadlens::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const loadlens::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
