#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "test_support.hpp"

using namespace tabal;
using tabal::testing::TempDir;
using tabal::testing::two_gaussians_csv;
using tabal::testing::write_text;
using nlohmann::json;

namespace {

RunRecord synthetic(const std::string& ds, const std::string& strat, std::size_t seed, std::vector<double> kappa,
                    std::size_t budget = 22) {
    RunRecord r;
    r.dataset = ds;
    r.strategy = strat;
    r.seed_index = seed;
    r.batch_size = 10;
    r.budget = budget;
    for (std::size_t t = 0; t < kappa.size(); ++t) r.rounds.push_back({2 + 10 * t, kappa[t], 0.5 + kappa[t] / 2, 0.0, 0});
    return r;
}

json small_config(const TempDir& dir, std::size_t n = 120) {
    write_text(dir / "blobs.csv", two_gaussians_csv(n, 5.0, 3));
    return {{"datasets", {{{"path", "blobs.csv"}}}},
            {"strategies", {"margin", "random"}},
            {"seeds", {0, 1}},
            {"budget", 20},
            {"output_dir", (dir / "store").string()}};
}

std::string strip_timings(const std::vector<RunRecord>& records) {
    std::string out;
    for (auto r : records) {
        for (auto& x : r.rounds) x.seconds = 0.0;
        out += to_json(r).dump() + "\n";
    }
    return out;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TABAL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, ParsesKeysAndResolvesPaths) {
    const json j = {{"datasets", {{{"name", "iris"}, {"path", "data/iris.csv"}, {"meta", "data/iris.meta.json"}},
                                  {{"path", "/abs/wine.csv"}}}},
                    {"strategies", {"margin", {{"strategy", "proxy-hybrid"}, {"name", "px"}, {"alpha", 0.1}}}},
                    {"predictor", {{"kind", "external"}, {"tcp", "localhost:7000"}, {"timeout", 12}}},
                    {"seeds", {3, 4}},
                    {"batch_sizes", {5, 20}},
                    {"budget", 60},
                    {"master_seed", 99},
                    {"jobs", 3}};
    const auto cfg = parse_config(j, "/base");
    ASSERT_EQ(cfg.datasets.size(), 2u);
    EXPECT_EQ(cfg.datasets[0].name, "iris");
    EXPECT_EQ(cfg.datasets[0].path, "/base/data/iris.csv");
    EXPECT_EQ(*cfg.datasets[0].meta_path, "/base/data/iris.meta.json");
    EXPECT_EQ(cfg.datasets[1].name, "wine");
    EXPECT_EQ(cfg.datasets[1].path, "/abs/wine.csv");
    EXPECT_EQ(cfg.strategies[1].name, "px");
    EXPECT_EQ(cfg.strategies[1].acquisition.strategy, Strategy::proxy_hybrid);
    EXPECT_EQ(cfg.strategies[1].acquisition.alpha, 0.1);
    EXPECT_EQ(cfg.predictor.kind, PredictorSpec::Kind::external);
    EXPECT_EQ(cfg.predictor.external.host, "localhost");
    EXPECT_EQ(cfg.predictor.external.port, 7000);
    EXPECT_EQ(cfg.predictor.external.timeout_seconds, 12.0);
    EXPECT_EQ(cfg.seeds, (std::vector<std::size_t>{3, 4}));
    EXPECT_EQ(cfg.batch_sizes, (std::vector<std::size_t>{5, 20}));
    EXPECT_EQ(cfg.loop.budget, 60u);
    EXPECT_EQ(cfg.master_seed, 99u);
    EXPECT_EQ(cfg.jobs, 3u);
}

TEST(Config, Defaults) {
    const auto cfg = parse_config({{"datasets", {{{"path", "a.csv"}}}}, {"strategies", {"coreset"}}});
    EXPECT_EQ(cfg.seeds.size(), 10u);
    EXPECT_EQ(cfg.batch_sizes, std::vector<std::size_t>{10});
    EXPECT_EQ(cfg.loop.budget, 100u);
    EXPECT_EQ(cfg.predictor.kind, PredictorSpec::Kind::neighbor);
    EXPECT_EQ(cfg.test_fraction, 0.3);
}

TEST(Config, RejectsInvalid) {
    const json base = {{"datasets", {{{"path", "a.csv"}}}}, {"strategies", {"margin"}}};
    auto j = base;
    j["seeds"] = {1, 1};
    EXPECT_THROW(parse_config(j), DataError);
    j = base;
    j["strategies"] = {"margin", "margin"};
    EXPECT_THROW(parse_config(j), DataError);
    j = base;
    j["strategies"] = {"badge"};
    EXPECT_THROW(parse_config(j), InvalidArgument);
    j = base;
    j.erase("datasets");
    EXPECT_THROW(parse_config(j), DataError);
    j = base;
    j["predictor"] = {{"kind", "external"}};
    EXPECT_THROW(parse_config(j), DataError);
    j = base;
    j["predictor"] = {{"kind", "forest"}};
    EXPECT_THROW(parse_config(j), DataError);
}

TEST(Config, HashIgnoresSchedulingOnly) {
    const json base = {{"datasets", {{{"path", "a.csv"}}}}, {"strategies", {"margin"}}};
    auto a = parse_config(base);
    auto b = a;
    b.jobs = 8;
    b.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.loop.budget = 50;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Seeds, SplitAndInitArePairedAcrossStrategies) {
    const auto m = derive_seeds(7, "iris", "margin", 10, 3);
    const auto r = derive_seeds(7, "iris", "random", 20, 3);
    EXPECT_EQ(m.split, r.split);
    EXPECT_EQ(m.loop.init, r.loop.init);
    EXPECT_NE(m.loop.acquisition, r.loop.acquisition);
    EXPECT_NE(m.split, derive_seeds(7, "iris", "margin", 10, 4).split);
    EXPECT_NE(m.split, derive_seeds(8, "iris", "margin", 10, 3).split);
    EXPECT_NE(m.split, m.loop.init);
}

TEST(Store, RecordFileNames) {
    EXPECT_EQ(record_filename({"my data/1", "proxy_hybrid", 15, 2}), "my_data_1__proxy_hybrid__B15__s2.json");
}

TEST(RunExperiment, GridCardinalityAndResume) {
    TempDir dir("grid");
    const auto cfg = parse_config(small_config(dir), dir.path());
    const auto first = run_experiment(cfg);
    EXPECT_TRUE(first.ok());
    EXPECT_EQ(first.total, 4u);
    EXPECT_EQ(first.ran, 4u);
    ResultStore store(cfg.output_dir);
    const auto records = store.load_all();
    ASSERT_EQ(records.size(), 4u);
    EXPECT_TRUE(std::filesystem::exists(store.manifest_path()));

    const auto again = run_experiment(cfg);
    EXPECT_EQ(again.ran, 0u);
    EXPECT_EQ(again.skipped, 4u);

    // Interrupt simulation: drop one record and a truncated one, then resume.
    std::filesystem::remove(store.records_dir() / record_filename(key_of(records[1])));
    write_text(store.records_dir() / record_filename(key_of(records[2])), "{\"record_ver");
    const auto resumed = run_experiment(cfg);
    EXPECT_EQ(resumed.ran, 2u);
    EXPECT_EQ(strip_timings(store.load_all()), strip_timings(records));
}

TEST(RunExperiment, RefusesStoreFromDifferentConfig) {
    TempDir dir("mismatch");
    auto cfg = parse_config(small_config(dir), dir.path());
    run_experiment(cfg);
    cfg.loop.budget = 30;
    EXPECT_THROW(run_experiment(cfg), DataError);
}

TEST(RunExperiment, RecordsFailuresWithoutStopping) {
    TempDir dir("fail");
    auto j = small_config(dir);
    j["datasets"].push_back({{"path", "missing.csv"}});
    const auto cfg = parse_config(j, dir.path());
    const auto report = run_experiment(cfg);
    EXPECT_FALSE(report.ok());
    EXPECT_EQ(report.failures.size(), 4u);
    EXPECT_EQ(report.ran, 4u);
}

TEST(RunExperiment, ExternalPredictorErrorsMarkRunsIncomplete) {
    TempDir dir("extfail");
    auto j = small_config(dir);
    j["predictor"] = {{"kind", "external"}, {"command", {MOCK_SERVER_PATH, "--mode", "error"}}};
    const auto cfg = parse_config(j, dir.path());
    const auto report = run_experiment(cfg);
    EXPECT_EQ(report.failures.size(), 4u);
    const auto records = ResultStore(cfg.output_dir).load_all();
    ASSERT_EQ(records.size(), 4u);
    for (const auto& r : records) EXPECT_FALSE(r.complete);
    // Incomplete records are retried on resume.
    EXPECT_EQ(run_experiment(cfg).ran, 4u);
}

TEST(Summary, ArithmeticAndBestFlag) {
    const std::vector<RunRecord> recs{
        synthetic("d1", "margin", 0, {0.5, 0.5, 0.5}),  synthetic("d1", "margin", 1, {0.7, 0.7, 0.7}),
        synthetic("d1", "random", 0, {0.2, 0.2, 0.2}),  synthetic("d2", "margin", 0, {0.9, 0.9, 0.9}),
    };
    const auto rows = summarize(recs, Metric::aulc);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].strategy, "margin");
    EXPECT_NEAR(*rows[0].mean, 0.6, 1e-12);
    EXPECT_NEAR(*rows[0].std, std::sqrt(0.02), 1e-12);
    EXPECT_TRUE(rows[0].best);
    EXPECT_EQ(*rows[1].std, 0.0);
    EXPECT_FALSE(rows[1].best);
    EXPECT_FALSE(rows[3].mean.has_value());
    EXPECT_EQ(rows[3].n_seeds, 0u);
    EXPECT_EQ(summary_csv(rows),
              "dataset,strategy,batch_size,n_seeds,mean,std,best\n"
              "d1,margin,10,2,0.6,0.141421,1\n"
              "d1,random,10,1,0.2,0,0\n"
              "d2,margin,10,1,0.9,0,1\n"
              "d2,random,10,0,,,0\n");
    EXPECT_EQ(summary_csv(summarize(recs, Metric::final_kappa)), summary_csv(rows));
}

TEST(Summary, FinalMetricsAndIncompleteRuns) {
    auto a = synthetic("d", "m", 0, {0.1, 0.4, 0.8});
    auto b = synthetic("d", "m", 1, {0.1, 0.4, 0.6});
    auto c = synthetic("d", "m", 2, {0.9});
    c.complete = false;
    const auto rows = summarize({a, b, c}, Metric::final_kappa);
    EXPECT_NEAR(*rows[0].mean, 0.7, 1e-12);
    EXPECT_EQ(rows[0].n_seeds, 2u);
    EXPECT_NEAR(*summarize({a}, Metric::final_auc)[0].mean, 0.9, 1e-12);
    EXPECT_THROW(summarize({}, Metric::aulc), InvalidArgument);
}

TEST(Significance, SelfComparisonIsNeverSignificant) {
    std::vector<RunRecord> recs;
    for (std::size_t s = 0; s < 10; ++s) {
        recs.push_back(synthetic("d", "x", s, {0.1, 0.2 + 0.01 * s, 0.5}));
        recs.push_back(synthetic("d", "y", s, {0.1, 0.2 + 0.01 * s, 0.5}));
    }
    const auto rows = significance_report(recs, "x", "y");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].p_raw, 1.0);
    EXPECT_EQ(rows[0].verdict, Verdict::none);
}

TEST(Significance, DominanceOnAllSeeds) {
    std::vector<RunRecord> recs;
    for (std::size_t s = 0; s < 10; ++s) {
        recs.push_back(synthetic("d", "x", s, {0.1, 0.5 + 0.01 * s, 0.9}));
        recs.push_back(synthetic("d", "y", s, {0.1, 0.4, 0.8 - 0.005 * s}));
    }
    const auto rows = significance_report(recs, "x", "y");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].n_pairs, 10u);
    EXPECT_NEAR(rows[0].p_adj, 0.00195, 1e-5);
    EXPECT_EQ(rows[0].verdict, Verdict::higher);
    EXPECT_GT(rows[0].delta_aulc, 0.0);
    EXPECT_EQ(significance_report(recs, "y", "x")[0].verdict, Verdict::lower);
}

TEST(Significance, SixWinsAmongTwentyDatasets) {
    std::vector<RunRecord> recs;
    Rng rng(5);
    for (int d = 0; d < 20; ++d) {
        const std::string name = "d" + std::to_string(100 + d);
        for (std::size_t s = 0; s < 10; ++s) {
            const double shift = d < 6 ? 0.05 + 0.001 * static_cast<double>(s) : 0.02 * (uniform_real(rng) - 0.5);
            recs.push_back(synthetic(name, "x", s, {0.3, 0.5 + shift, 0.7}));
            recs.push_back(synthetic(name, "y", s, {0.3, 0.5, 0.7}));
        }
    }
    const auto rows = significance_report(recs, "x", "y");
    ASSERT_EQ(rows.size(), 20u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(rows[i].p_adj, 0.00651, 1e-5);
        EXPECT_EQ(rows[i].verdict, Verdict::higher);
    }
}

TEST(Significance, SeedMismatchIsAnError) {
    std::vector<RunRecord> recs{synthetic("d", "x", 0, {0.1, 0.2}), synthetic("d", "x", 1, {0.1, 0.2}),
                                synthetic("d", "y", 0, {0.1, 0.3})};
    EXPECT_THROW(significance_report(recs, "x", "y"), DataError);
    EXPECT_THROW(significance_report(recs, "x", "z"), DataError);
}

TEST(Curves, MeanAndNormalInterval) {
    const auto a = synthetic("d", "m", 0, {0.4, 0.4, 0.4});
    const auto b = synthetic("d", "m", 1, {0.6, 0.6, 0.6});
    const auto rows = aggregate_curve({&a, &b});
    ASSERT_EQ(rows.size(), 3u);
    const double half = 1.96 * std::sqrt(0.02) / std::sqrt(2.0);
    EXPECT_NEAR(rows[1].kappa_mean, 0.5, 1e-12);
    EXPECT_NEAR(rows[1].kappa_ci_low, 0.5 - half, 1e-12);
    EXPECT_NEAR(rows[1].kappa_ci_high, 0.5 + half, 1e-12);
    EXPECT_EQ(rows[2].n_labeled, 22u);
    const auto same = aggregate_curve({&a, &a});
    EXPECT_EQ(same[0].kappa_ci_low, same[0].kappa_ci_high);
}

TEST(Curves, OneFilePerGroupWithInitialRow) {
    TempDir dir("curves");
    const std::vector<RunRecord> recs{synthetic("d", "m", 0, {0.1, 0.2, 0.3}), synthetic("d", "m", 1, {0.2, 0.2, 0.4}),
                                      synthetic("d", "r", 0, {0.1, 0.1, 0.1})};
    const auto paths = emit_learning_curves(recs, dir.path());
    ASSERT_EQ(paths.size(), 2u);
    EXPECT_EQ(paths[0].filename(), "d__m__B10.csv");
    const auto text = read_file(paths[0].string());
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);  // header + 2 batches + initial
    EXPECT_EQ(text.substr(0, text.find('\n')), "step,n_labeled,kappa_mean,kappa_ci_low,kappa_ci_high,auc_mean");
}

TEST(Formatting, SixSignificantDigits) {
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(1.0 / 3.0), "0.333333");
    EXPECT_EQ(format_number(0.0), "0");
    EXPECT_EQ(format_number(-0.0), "0");
    EXPECT_EQ(format_number(2.0 / 1024.0), "0.00195312");
    EXPECT_EQ(format_number(std::nullopt), "");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
}

TEST(Cli, EndToEnd) {
    TempDir dir("cli");
    write_text(dir / "config.json", small_config(dir).dump());
    const auto store = (dir / "store").string();
    EXPECT_EQ(run_cli("run --config " + (dir / "config.json").string() + " --quiet"), 0);
    EXPECT_EQ(run_cli("summarize --store " + store + " --metric aulc"), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "store" / "summary_aulc.csv"));
    EXPECT_EQ(run_cli("significance --store " + store + " --a margin --b random"), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "store" / "significance_margin_vs_random.csv"));
    EXPECT_EQ(run_cli("curves --store " + store), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "store" / "curves" / "blobs__margin__B10.csv"));
    EXPECT_EQ(run_cli("significance --store " + store + " --a margin --b coreset"), 2);
    EXPECT_NE(run_cli("summarize --store " + store + " --metric accuracy"), 0);
}
