// Command-line front end: run experiments and produce reports from a store.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tabal/tabal.hpp"

namespace fs = std::filesystem;

namespace {

void write_report(const fs::path& path, const std::string& csv) {
    tabal::write_file_atomic(path, csv);
    std::cout << csv;
    std::cerr << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pool-based active learning benchmark harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::size_t jobs = 0;
    std::string out_dir;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run (or resume) an experiment grid");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--jobs", jobs, "Parallel workers (overrides config)");
    run->add_option("--out", out_dir, "Output store directory (overrides config)");
    run->add_flag("--quiet", quiet, "Suppress per-run progress");

    std::string store_dir;
    std::string metric = "aulc";
    auto* summarize = app.add_subcommand("summarize", "Mean +- std per dataset and strategy");
    summarize->add_option("--store", store_dir, "Result store directory")->required()->check(CLI::ExistingDirectory);
    summarize->add_option("--metric", metric, "aulc | final_kappa | final_auc")
        ->check(CLI::IsMember({"aulc", "final_kappa", "final_auc"}));

    std::string method_a, method_b;
    double level = 0.05;
    auto* significance = app.add_subcommand("significance", "Paired Wilcoxon + BH on per-seed AULC");
    significance->add_option("--store", store_dir, "Result store directory")->required()->check(CLI::ExistingDirectory);
    significance->add_option("--a", method_a, "Strategy A")->required();
    significance->add_option("--b", method_b, "Strategy B")->required();
    significance->add_option("--level", level, "Significance level for adjusted p-values");

    auto* curves = app.add_subcommand("curves", "Seed-averaged learning curves as CSV");
    curves->add_option("--store", store_dir, "Result store directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = tabal::load_config(config_path);
            if (jobs > 0) cfg.jobs = jobs;
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            tabal::ProgressFn progress;
            if (!quiet) progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
            const auto report = tabal::run_experiment(cfg, progress);
            std::cerr << report.total << " runs: " << report.ran << " executed, " << report.skipped
                      << " already complete, " << report.failures.size() << " failed\n";
            for (const auto& f : report.failures) std::cerr << "  failed: " << f << "\n";
            return report.ok() ? 0 : 1;
        }
        const tabal::ResultStore store(store_dir);
        const auto records = store.load_all();
        if (*summarize) {
            const auto rows = tabal::summarize(records, tabal::parse_metric(metric));
            write_report(store.dir() / ("summary_" + metric + ".csv"), tabal::summary_csv(rows));
        } else if (*significance) {
            const auto rows = tabal::significance_report(records, method_a, method_b, level);
            write_report(store.dir() / ("significance_" + tabal::sanitize(method_a) + "_vs_" +
                                        tabal::sanitize(method_b) + ".csv"),
                         tabal::significance_csv(rows));
        } else if (*curves) {
            for (const auto& p : tabal::emit_learning_curves(records, store.dir() / "curves")) {
                std::cout << p.string() << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
