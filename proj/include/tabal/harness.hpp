#pragma once

// Experiment orchestration: config parsing, the run grid, a resumable on-disk
// result store, and the summary / significance / learning-curve reports.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "acquisition.hpp"
#include "data.hpp"
#include "external.hpp"
#include "loop.hpp"
#include "metrics.hpp"
#include "predictor.hpp"
#include "stats.hpp"

namespace tabal {

inline constexpr const char* kEngineVersion = "tabal 1.0.0";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DatasetSpec {
    std::string name;
    std::string path;
    std::optional<std::string> meta_path;
};

struct StrategySpec {
    std::string name;  // label used in the store and reports
    AcquisitionConfig acquisition;
};

struct PredictorSpec {
    enum class Kind { neighbor, linear, external } kind = Kind::neighbor;
    NeighborConfig neighbor;
    LinearConfig linear;
    ExternalEndpoint external;
};

struct ExperimentConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<StrategySpec> strategies;
    PredictorSpec predictor;
    std::vector<std::size_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<std::size_t> batch_sizes{10};
    LoopConfig loop;
    std::uint64_t master_seed = 0;
    double test_fraction = 0.3;
    std::size_t subsample_cap = 10000;
    std::string output_dir = "results";
    std::size_t jobs = 1;

    void validate() const {
        if (datasets.empty()) throw DataError("config: no datasets");
        if (strategies.empty()) throw DataError("config: no strategies");
        if (seeds.empty()) throw DataError("config: no seeds");
        if (batch_sizes.empty()) throw DataError("config: no batch sizes");
        if (std::set<std::size_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
            throw DataError("config: seeds must be distinct");
        }
        std::set<std::string> names;
        for (const auto& s : strategies) {
            if (!names.insert(s.name).second) throw DataError("config: duplicate strategy name " + s.name);
            s.acquisition.validate();
        }
        names.clear();
        for (const auto& d : datasets) {
            if (!names.insert(d.name).second) throw DataError("config: duplicate dataset name " + d.name);
        }
        for (auto b : batch_sizes) {
            if (b < 1) throw DataError("config: batch sizes must be >= 1");
        }
    }
};

inline PredictorSpec parse_predictor_spec(const nlohmann::json& j) {
    PredictorSpec p;
    const auto kind = j.value("kind", std::string{"neighbor"});
    if (kind == "neighbor") {
        p.kind = PredictorSpec::Kind::neighbor;
        p.neighbor.k_max = j.value("k_max", p.neighbor.k_max);
        p.neighbor.delta = j.value("delta", p.neighbor.delta);
        p.neighbor.smoothing = j.value("smoothing", p.neighbor.smoothing);
    } else if (kind == "linear") {
        p.kind = PredictorSpec::Kind::linear;
        p.linear.reg = j.value("reg", p.linear.reg);
        p.linear.max_iter = j.value("max_iter", p.linear.max_iter);
        p.linear.tol = j.value("tol", p.linear.tol);
    } else if (kind == "external") {
        p.kind = PredictorSpec::Kind::external;
        p.external.timeout_seconds = j.value("timeout", p.external.timeout_seconds);
        if (j.contains("command")) {
            p.external.command = j.at("command").get<std::vector<std::string>>();
        } else if (j.contains("tcp")) {
            const auto addr = j.at("tcp").get<std::string>();
            const auto colon = addr.rfind(':');
            if (colon == std::string::npos) throw DataError("config: tcp endpoint must be host:port");
            p.external.host = addr.substr(0, colon);
            p.external.port = static_cast<std::uint16_t>(std::stoul(addr.substr(colon + 1)));
        } else {
            throw DataError("config: external predictor needs 'command' or 'tcp'");
        }
    } else {
        throw DataError("config: unknown predictor kind '" + kind + "'");
    }
    return p;
}

inline StrategySpec parse_strategy_spec(const nlohmann::json& j) {
    StrategySpec s;
    if (j.is_string()) {
        s.acquisition.strategy = parse_strategy(j.get<std::string>());
        s.name = std::string(to_string(s.acquisition.strategy));
        return s;
    }
    auto& a = s.acquisition;
    a.strategy = parse_strategy(j.at("strategy").get<std::string>());
    s.name = j.value("name", std::string(to_string(a.strategy)));
    a.alpha = j.value("alpha", a.alpha);
    a.n_min = j.value("n_min", a.n_min);
    a.n_max_proxy = j.value("n_max_proxy", a.n_max_proxy);
    a.epsilon = j.value("epsilon", a.epsilon);
    a.kmeans.max_iter = j.value("kmeans_max_iter", a.kmeans.max_iter);
    a.kmeans.tol = j.value("kmeans_tol", a.kmeans.tol);
    a.kmeans.restarts = j.value("kmeans_restarts", a.kmeans.restarts);
    a.proxy.reg = j.value("proxy_reg", a.proxy.reg);
    return s;
}

/// Parses a config object. Relative dataset paths resolve against `base_dir`.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig cfg;
    try {
        auto resolve = [&](const std::string& p) {
            const std::filesystem::path path(p);
            return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
        };
        for (const auto& d : j.at("datasets")) {
            DatasetSpec spec;
            spec.path = resolve(d.at("path").get<std::string>());
            spec.name = d.value("name", std::filesystem::path(spec.path).stem().string());
            if (d.contains("meta") && !d.at("meta").is_null()) spec.meta_path = resolve(d.at("meta").get<std::string>());
            cfg.datasets.push_back(std::move(spec));
        }
        for (const auto& s : j.at("strategies")) cfg.strategies.push_back(parse_strategy_spec(s));
        if (j.contains("predictor")) cfg.predictor = parse_predictor_spec(j.at("predictor"));
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::size_t>>();
        if (j.contains("batch_sizes")) cfg.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
        cfg.loop.budget = j.value("budget", cfg.loop.budget);
        cfg.loop.stop_fraction = j.value("stop_fraction", cfg.loop.stop_fraction);
        cfg.master_seed = j.value("master_seed", cfg.master_seed);
        cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
        cfg.subsample_cap = j.value("subsample_cap", cfg.subsample_cap);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        cfg.jobs = j.value("jobs", cfg.jobs);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config " + path + ": " + e.what());
    }
    return parse_config(j, std::filesystem::path(path).parent_path());
}

/// Canonical JSON of everything that affects results (not output_dir or jobs).
inline nlohmann::json canonical_config(const ExperimentConfig& cfg) {
    auto datasets = nlohmann::json::array();
    for (const auto& d : cfg.datasets) {
        datasets.push_back({{"name", d.name}, {"path", d.path}, {"meta", d.meta_path ? *d.meta_path : ""}});
    }
    auto strategies = nlohmann::json::array();
    for (const auto& s : cfg.strategies) {
        const auto& a = s.acquisition;
        strategies.push_back({{"name", s.name},
                              {"strategy", to_string(a.strategy)},
                              {"alpha", a.alpha},
                              {"n_min", a.n_min},
                              {"n_max_proxy", a.n_max_proxy},
                              {"epsilon", a.epsilon},
                              {"kmeans_max_iter", a.kmeans.max_iter},
                              {"kmeans_tol", a.kmeans.tol},
                              {"kmeans_restarts", a.kmeans.restarts},
                              {"proxy_reg", a.proxy.reg}});
    }
    nlohmann::json pred;
    switch (cfg.predictor.kind) {
        case PredictorSpec::Kind::neighbor:
            pred = {{"kind", "neighbor"},
                    {"k_max", cfg.predictor.neighbor.k_max},
                    {"delta", cfg.predictor.neighbor.delta},
                    {"smoothing", cfg.predictor.neighbor.smoothing}};
            break;
        case PredictorSpec::Kind::linear:
            pred = {{"kind", "linear"},
                    {"reg", cfg.predictor.linear.reg},
                    {"max_iter", cfg.predictor.linear.max_iter},
                    {"tol", cfg.predictor.linear.tol}};
            break;
        case PredictorSpec::Kind::external:
            pred = {{"kind", "external"},
                    {"command", cfg.predictor.external.command},
                    {"host", cfg.predictor.external.host},
                    {"port", cfg.predictor.external.port}};
            break;
    }
    return {{"datasets", datasets},
            {"strategies", strategies},
            {"predictor", pred},
            {"seeds", cfg.seeds},
            {"batch_sizes", cfg.batch_sizes},
            {"budget", cfg.loop.budget},
            {"stop_fraction", cfg.loop.stop_fraction},
            {"master_seed", cfg.master_seed},
            {"test_fraction", cfg.test_fraction},
            {"subsample_cap", cfg.subsample_cap}};
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return hash64(std::string_view(canonical_config(cfg).dump()));
}

inline std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec) {
    switch (spec.kind) {
        case PredictorSpec::Kind::neighbor: return std::make_unique<NeighborPredictor>(spec.neighbor);
        case PredictorSpec::Kind::linear: return std::make_unique<LinearPredictor>(spec.linear);
        case PredictorSpec::Kind::external: return std::make_unique<ExternalPredictor>(spec.external);
    }
    throw InvalidArgument("unknown predictor kind");
}

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// Split and L_0 depend only on (dataset, seed index), so every strategy and
/// batch size sees the same split and initial context for a given seed.
struct RunSeeds {
    std::uint64_t subsample = 0;
    std::uint64_t split = 0;
    LoopSeeds loop;
};

inline RunSeeds derive_seeds(std::uint64_t master, std::string_view dataset, std::string_view strategy,
                             std::size_t batch_size, std::size_t seed_index) {
    RunSeeds s;
    s.subsample = hash64(master, std::string_view("subsample"), dataset);
    s.split = hash64(master, std::string_view("split"), dataset, std::uint64_t{seed_index});
    s.loop.init = hash64(master, std::string_view("init"), dataset, std::uint64_t{seed_index});
    s.loop.acquisition =
        hash64(master, std::string_view("acquisition"), dataset, strategy, std::uint64_t{batch_size}, std::uint64_t{seed_index});
    return s;
}

// ---------------------------------------------------------------------------
// Result store
// ---------------------------------------------------------------------------

struct RunKey {
    std::string dataset;
    std::string strategy;
    std::size_t batch_size = 0;
    std::size_t seed_index = 0;

    auto operator<=>(const RunKey&) const = default;
};

inline RunKey key_of(const RunRecord& r) { return {r.dataset, r.strategy, r.batch_size, r.seed_index}; }

inline std::string sanitize(std::string_view s) {
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

inline std::string record_filename(const RunKey& k) {
    return sanitize(k.dataset) + "__" + sanitize(k.strategy) + "__B" + std::to_string(k.batch_size) + "__s" +
           std::to_string(k.seed_index) + ".json";
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::ostringstream tmp_name;
    tmp_name << path.string() << ".tmp." << std::this_thread::get_id();
    const std::filesystem::path tmp(tmp_name.str());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << contents;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// One JSON file per run under <dir>/records plus <dir>/manifest.json.
class ResultStore {
public:
    explicit ResultStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path records_dir() const { return dir_ / "records"; }
    std::filesystem::path manifest_path() const { return dir_ / "manifest.json"; }

    /// Creates the manifest, or checks that an existing one was written for the same config.
    void open_for(const ExperimentConfig& cfg) {
        std::filesystem::create_directories(records_dir());
        const auto hash = config_hash(cfg);
        if (std::filesystem::exists(manifest_path())) {
            const auto m = nlohmann::json::parse(read_file(manifest_path().string()));
            if (m.at("config_hash").get<std::uint64_t>() != hash) {
                throw DataError("store " + dir_.string() + " was produced by a different config");
            }
            return;
        }
        const nlohmann::json manifest{{"config_hash", hash},
                                      {"engine_version", kEngineVersion},
                                      {"record_version", kRecordVersion},
                                      {"config", canonical_config(cfg)}};
        write_file_atomic(manifest_path(), manifest.dump(2) + "\n");
    }

    std::optional<RunRecord> find(const RunKey& key) const {
        const auto path = records_dir() / record_filename(key);
        if (!std::filesystem::exists(path)) return std::nullopt;
        try {
            return run_record_from_json(nlohmann::json::parse(read_file(path.string())));
        } catch (const std::exception&) {
            return std::nullopt;  // truncated or corrupt: treat as absent
        }
    }

    void put(const RunRecord& rec) {
        std::lock_guard lock(mutex_);
        write_file_atomic(records_dir() / record_filename(key_of(rec)), to_json(rec).dump(1) + "\n");
    }

    /// All records, sorted by key.
    std::vector<RunRecord> load_all() const {
        std::vector<RunRecord> out;
        if (!std::filesystem::exists(records_dir())) throw DataError("no records under " + dir_.string());
        for (const auto& entry : std::filesystem::directory_iterator(records_dir())) {
            if (entry.path().extension() != ".json") continue;
            out.push_back(run_record_from_json(nlohmann::json::parse(read_file(entry.path().string()))));
        }
        std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) { return key_of(a) < key_of(b); });
        return out;
    }

private:
    std::filesystem::path dir_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct ExperimentReport {
    std::size_t total = 0;
    std::size_t ran = 0;
    std::size_t skipped = 0;
    std::vector<std::string> failures;

    bool ok() const { return failures.empty(); }
};

using ProgressFn = std::function<void(const std::string&)>;

/// Loads, caps and class-compacts one dataset.
inline Dataset prepare_dataset(const DatasetSpec& spec, const ExperimentConfig& cfg) {
    auto ds = load_dataset(spec.path, spec.meta_path, spec.name);
    ds.name = spec.name;
    const auto seeds = derive_seeds(cfg.master_seed, spec.name, "", 0, 0);
    return compact_classes(subsample(ds, std::max(cfg.subsample_cap, ds.num_classes()), seeds.subsample));
}

/// Runs one grid cell end to end on an already prepared dataset.
inline RunRecord run_one(const Dataset& ds, const StrategySpec& strategy, std::size_t batch_size,
                         std::size_t seed_index, const ExperimentConfig& cfg, Predictor& predictor) {
    const auto seeds = derive_seeds(cfg.master_seed, ds.name, strategy.name, batch_size, seed_index);
    const auto split = stratified_split(ds, cfg.test_fraction, seeds.split);
    auto acq = strategy.acquisition;
    acq.batch_size = batch_size;
    auto rec = run_active_loop(ds, split, predictor, cfg.loop, acq, seeds.loop);
    rec.strategy = strategy.name;
    rec.seed_index = seed_index;
    return rec;
}

/// Runs every (dataset, strategy, batch size, seed) cell not already complete in
/// the store, on `cfg.jobs` workers. Each worker owns its own predictor.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
    cfg.validate();
    ResultStore store(cfg.output_dir);
    store.open_for(cfg);

    ExperimentReport report;
    std::vector<Dataset> datasets;
    std::vector<std::optional<std::string>> load_errors;
    for (const auto& spec : cfg.datasets) {
        try {
            datasets.push_back(prepare_dataset(spec, cfg));
            load_errors.emplace_back();
        } catch (const std::exception& e) {
            datasets.emplace_back();
            load_errors.emplace_back(e.what());
        }
    }

    struct Task {
        std::size_t dataset;
        std::size_t strategy;
        std::size_t batch_size;
        std::size_t seed_index;
    };
    std::vector<Task> tasks;
    for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
        for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
            for (auto b : cfg.batch_sizes) {
                for (auto seed : cfg.seeds) {
                    ++report.total;
                    const RunKey key{cfg.datasets[d].name, cfg.strategies[s].name, b, seed};
                    if (load_errors[d]) {
                        report.failures.push_back(record_filename(key) + ": " + *load_errors[d]);
                        continue;
                    }
                    if (const auto existing = store.find(key); existing && existing->complete) {
                        ++report.skipped;
                        continue;
                    }
                    tasks.push_back({d, s, b, seed});
                }
            }
        }
    }

    std::mutex report_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        std::unique_ptr<Predictor> predictor;
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto& t = tasks[i];
            const auto& spec = cfg.strategies[t.strategy];
            const RunKey key{cfg.datasets[t.dataset].name, spec.name, t.batch_size, t.seed_index};
            std::optional<std::string> failure;
            try {
                if (!predictor) predictor = make_predictor(cfg.predictor);
                auto rec = run_one(datasets[t.dataset], spec, t.batch_size, t.seed_index, cfg, *predictor);
                if (!rec.complete) {
                    failure = rec.error;
                    predictor.reset();  // reconnect external predictors after a failure
                }
                store.put(rec);
            } catch (const std::exception& e) {
                failure = e.what();
                predictor.reset();
            }
            std::lock_guard lock(report_mutex);
            ++report.ran;
            if (failure) report.failures.push_back(record_filename(key) + ": " + *failure);
            if (progress) progress(record_filename(key) + (failure ? " FAILED: " + *failure : " done"));
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.jobs, tasks.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    std::sort(report.failures.begin(), report.failures.end());
    return report;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Six significant digits, locale independent; empty for nullopt.
inline std::string format_number(std::optional<double> v) {
    if (!v) return {};
    if (*v == 0.0) return "0";
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), *v, std::chars_format::general, 6);
    return std::string(buf.data(), res.ptr);
}

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

enum class Metric { aulc, final_kappa, final_auc };

inline Metric parse_metric(std::string_view s) {
    if (s == "aulc") return Metric::aulc;
    if (s == "final_kappa") return Metric::final_kappa;
    if (s == "final_auc") return Metric::final_auc;
    throw InvalidArgument("unknown metric '" + std::string(s) + "'");
}

/// The metric for one complete run; nullopt when undefined (e.g. AUC on a
/// single-class test set or a run too short for AULC).
inline std::optional<double> run_metric(const RunRecord& r, Metric m) {
    if (!r.complete || r.rounds.empty()) return std::nullopt;
    switch (m) {
        case Metric::aulc:
            if (r.rounds.size() < 2 || r.rounds.front().n >= r.budget) return std::nullopt;
            return aulc_norm(r.kappa_curve(), r.budget);
        case Metric::final_kappa: return r.rounds.back().kappa;
        case Metric::final_auc: return r.rounds.back().auc;
    }
    return std::nullopt;
}

struct SummaryRow {
    std::string dataset;
    std::string strategy;
    std::size_t batch_size = 0;
    std::size_t n_seeds = 0;
    std::optional<double> mean;
    std::optional<double> std;
    bool best = false;
};

/// Mean and sample std over seeds for every (dataset, strategy, batch size)
/// seen in `records`. Cells without values stay empty.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, Metric metric) {
    if (records.empty()) throw InvalidArgument("empty result store");
    std::set<std::string> datasets, strategies;
    std::set<std::size_t> batches;
    std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> values;
    for (const auto& r : records) {
        datasets.insert(r.dataset);
        strategies.insert(r.strategy);
        batches.insert(r.batch_size);
        if (const auto v = run_metric(r, metric)) values[{r.dataset, r.strategy, r.batch_size}].push_back(*v);
    }
    std::vector<SummaryRow> rows;
    for (const auto& d : datasets) {
        for (auto b : batches) {
            const std::size_t first = rows.size();
            for (const auto& s : strategies) {
                SummaryRow row{d, s, b, 0, std::nullopt, std::nullopt, false};
                if (const auto it = values.find({d, s, b}); it != values.end()) {
                    row.n_seeds = it->second.size();
                    row.mean = mean(it->second);
                    row.std = sample_std(it->second);
                }
                rows.push_back(std::move(row));
            }
            std::optional<std::size_t> best;
            for (std::size_t i = first; i < rows.size(); ++i) {
                if (rows[i].mean && (!best || *rows[i].mean > *rows[*best].mean)) best = i;
            }
            if (best) rows[*best].best = true;
        }
    }
    return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "dataset,strategy,batch_size,n_seeds,mean,std,best\n";
    for (const auto& r : rows) {
        out += csv_field(r.dataset) + "," + csv_field(r.strategy) + "," + std::to_string(r.batch_size) + "," +
               std::to_string(r.n_seeds) + "," + format_number(r.mean) + "," + format_number(r.std) + "," +
               (r.best ? "1" : "0") + "\n";
    }
    return out;
}

struct SignificanceRow {
    std::string dataset;
    std::size_t batch_size = 0;
    std::size_t n_pairs = 0;
    double delta_aulc = 0.0;
    double p_raw = 1.0;
    double p_adj = 1.0;
    Verdict verdict = Verdict::none;
};

/// Per dataset: paired per-seed AULC differences (a - b), Wilcoxon signed-rank,
/// then BH across datasets within each batch size.
inline std::vector<SignificanceRow> significance_report(const std::vector<RunRecord>& records, const std::string& a,
                                                        const std::string& b, double level = 0.05) {
    using Cell = std::map<std::size_t, double>;  // seed -> AULC
    std::map<std::pair<std::string, std::size_t>, std::pair<Cell, Cell>> grid;
    std::set<std::pair<std::string, std::size_t>> seen_a, seen_b;
    for (const auto& r : records) {
        if (r.strategy != a && r.strategy != b) continue;
        const std::pair<std::string, std::size_t> key{r.dataset, r.batch_size};
        (r.strategy == a ? seen_a : seen_b).insert(key);
        const auto v = run_metric(r, Metric::aulc);
        if (!v) continue;
        auto& cell = grid[key];
        if (r.strategy == a) cell.first[r.seed_index] = *v;
        if (r.strategy == b) cell.second[r.seed_index] = *v;
    }
    if (seen_a.empty()) throw DataError("no records for strategy " + a);
    if (seen_b.empty()) throw DataError("no records for strategy " + b);

    std::vector<SignificanceRow> rows;
    for (const auto& [key, cells] : grid) {
        if (!seen_a.count(key) || !seen_b.count(key)) continue;
        const auto& [ca, cb] = cells;
        std::vector<double> va, vb;
        for (const auto& [seed, v] : ca) {
            const auto it = cb.find(seed);
            if (it == cb.end()) {
                throw DataError("seed mismatch for " + key.first + " B=" + std::to_string(key.second));
            }
            va.push_back(v);
            vb.push_back(it->second);
        }
        if (ca.size() != cb.size()) throw DataError("seed mismatch for " + key.first + " B=" + std::to_string(key.second));
        if (va.empty()) continue;
        SignificanceRow row;
        row.dataset = key.first;
        row.batch_size = key.second;
        row.n_pairs = va.size();
        std::vector<double> diff(va.size());
        for (std::size_t i = 0; i < va.size(); ++i) diff[i] = va[i] - vb[i];
        row.delta_aulc = mean(diff);
        row.p_raw = wilcoxon_signed_rank(va, vb).p_value;
        rows.push_back(std::move(row));
    }
    std::set<std::size_t> batches;
    for (const auto& r : rows) batches.insert(r.batch_size);
    for (auto bs : batches) {
        std::vector<std::size_t> idx;
        std::vector<double> p;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].batch_size == bs) {
                idx.push_back(i);
                p.push_back(rows[i].p_raw);
            }
        }
        const auto adj = bh_adjust(p);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            rows[idx[k]].p_adj = adj[k];
            rows[idx[k]].verdict = verdict(rows[idx[k]].delta_aulc, adj[k], level);
        }
    }
    std::sort(rows.begin(), rows.end(), [](const SignificanceRow& x, const SignificanceRow& y) {
        return std::tie(x.batch_size, x.dataset) < std::tie(y.batch_size, y.dataset);
    });
    return rows;
}

inline std::string significance_csv(const std::vector<SignificanceRow>& rows) {
    std::string out = "dataset,batch_size,n_pairs,delta_aulc,p_raw,p_adj,verdict\n";
    for (const auto& r : rows) {
        out += csv_field(r.dataset) + "," + std::to_string(r.batch_size) + "," + std::to_string(r.n_pairs) + "," +
               format_number(r.delta_aulc) + "," + format_number(r.p_raw) + "," + format_number(r.p_adj) + "," +
               std::string(to_string(r.verdict)) + "\n";
    }
    return out;
}

struct CurveRow {
    std::size_t step = 0;
    std::size_t n_labeled = 0;
    double kappa_mean = 0.0;
    double kappa_ci_low = 0.0;
    double kappa_ci_high = 0.0;
    std::optional<double> auc_mean;
};

/// Seed-averaged learning curve with a normal-approximation 95% interval
/// (mean +- 1.96 sd / sqrt(seeds)). Steps run up to the shortest seed's curve.
inline std::vector<CurveRow> aggregate_curve(const std::vector<const RunRecord*>& runs) {
    std::vector<CurveRow> rows;
    if (runs.empty()) return rows;
    std::size_t steps = runs.front()->rounds.size();
    for (const auto* r : runs) steps = std::min(steps, r->rounds.size());
    for (std::size_t t = 0; t < steps; ++t) {
        std::vector<double> kappa, auc;
        for (const auto* r : runs) {
            kappa.push_back(r->rounds[t].kappa);
            if (r->rounds[t].auc) auc.push_back(*r->rounds[t].auc);
        }
        CurveRow row;
        row.step = t;
        row.n_labeled = runs.front()->rounds[t].n;
        row.kappa_mean = mean(kappa);
        const double half = 1.96 * sample_std(kappa) / std::sqrt(static_cast<double>(kappa.size()));
        row.kappa_ci_low = row.kappa_mean - half;
        row.kappa_ci_high = row.kappa_mean + half;
        if (!auc.empty()) row.auc_mean = mean(auc);
        rows.push_back(row);
    }
    return rows;
}

inline std::string curve_csv(const std::vector<CurveRow>& rows) {
    std::string out = "step,n_labeled,kappa_mean,kappa_ci_low,kappa_ci_high,auc_mean\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + std::to_string(r.n_labeled) + "," + format_number(r.kappa_mean) + "," +
               format_number(r.kappa_ci_low) + "," + format_number(r.kappa_ci_high) + "," + format_number(r.auc_mean) +
               "\n";
    }
    return out;
}

/// Writes one curve CSV per (dataset, strategy, batch size) into `out_dir`;
/// returns the written paths in key order.
inline std::vector<std::filesystem::path> emit_learning_curves(const std::vector<RunRecord>& records,
                                                               const std::filesystem::path& out_dir) {
    std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        if (r.complete) groups[{r.dataset, r.strategy, r.batch_size}].push_back(&r);
    }
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    for (const auto& [key, runs] : groups) {
        const auto& [d, s, b] = key;
        const auto path = out_dir / (sanitize(d) + "__" + sanitize(s) + "__B" + std::to_string(b) + ".csv");
        write_file_atomic(path, curve_csv(aggregate_curve(runs)));
        written.push_back(path);
    }
    return written;
}

}  // namespace tabal
