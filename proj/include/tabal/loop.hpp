#pragma once

// Pool-based batch active learning: one labeled instance per class to start,
// then select -> reveal label -> update until the budget or pool runs out.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "acquisition.hpp"
#include "data.hpp"
#include "metrics.hpp"
#include "predictor.hpp"
#include "preprocess.hpp"
#include "rng.hpp"

namespace tabal {

inline constexpr int kRecordVersion = 1;

struct LoopConfig {
    std::size_t budget = 100;  // N_max
    double stop_fraction = 0.5;
    bool evaluate_at_init = true;
};

/// Independent seed streams: `init` picks L_0, `acquisition` drives random
/// selection and k-means seeding.
struct LoopSeeds {
    std::uint64_t init = 0;
    std::uint64_t acquisition = 0;
};

struct RoundRecord {
    std::size_t n = 0;
    double kappa = 0.0;
    std::optional<double> auc;
    double seconds = 0.0;
    std::uint64_t evaluations = 0;  // pool rows scored by the main predictor for acquisition

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct RunRecord {
    std::string dataset;
    std::string strategy;
    std::size_t seed_index = 0;
    std::uint64_t split_seed = 0;
    LoopSeeds seeds;
    std::size_t batch_size = 0;
    std::size_t budget = 0;
    bool complete = true;
    std::string error;
    std::vector<RoundRecord> rounds;
    std::vector<std::size_t> labeled_rows;  // dataset row ids in the order they were labeled

    LearningCurve kappa_curve() const {
        LearningCurve c;
        for (const auto& r : rounds) c.push_back({r.n, r.kappa});
        return c;
    }
};

inline nlohmann::json to_json(const RunRecord& r) {
    auto rounds = nlohmann::json::array();
    for (const auto& x : r.rounds) {
        rounds.push_back({{"n", x.n},
                          {"kappa", x.kappa},
                          {"auc", x.auc ? nlohmann::json(*x.auc) : nlohmann::json(nullptr)},
                          {"seconds", x.seconds},
                          {"evaluations", x.evaluations}});
    }
    return {{"record_version", kRecordVersion},
            {"dataset", r.dataset},
            {"strategy", r.strategy},
            {"seed_index", r.seed_index},
            {"split_seed", r.split_seed},
            {"init_seed", r.seeds.init},
            {"acquisition_seed", r.seeds.acquisition},
            {"batch_size", r.batch_size},
            {"budget", r.budget},
            {"complete", r.complete},
            {"error", r.error},
            {"rounds", std::move(rounds)},
            {"labeled_rows", r.labeled_rows}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    if (j.at("record_version").get<int>() != kRecordVersion) throw DataError("unsupported record_version");
    RunRecord r;
    r.dataset = j.at("dataset").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.seed_index = j.at("seed_index").get<std::size_t>();
    r.split_seed = j.at("split_seed").get<std::uint64_t>();
    r.seeds = {j.at("init_seed").get<std::uint64_t>(), j.at("acquisition_seed").get<std::uint64_t>()};
    r.batch_size = j.at("batch_size").get<std::size_t>();
    r.budget = j.at("budget").get<std::size_t>();
    r.complete = j.at("complete").get<bool>();
    r.error = j.value("error", std::string{});
    for (const auto& x : j.at("rounds")) {
        RoundRecord rr;
        rr.n = x.at("n").get<std::size_t>();
        rr.kappa = x.at("kappa").get<double>();
        if (!x.at("auc").is_null()) rr.auc = x.at("auc").get<double>();
        rr.seconds = x.value("seconds", 0.0);
        rr.evaluations = x.value("evaluations", std::uint64_t{0});
        r.rounds.push_back(rr);
    }
    r.labeled_rows = j.value("labeled_rows", std::vector<std::size_t>{});
    return r;
}

/// One uniformly chosen pool row per class, in class order.
inline std::vector<std::size_t> init_context(std::span<const std::size_t> pool_indices,
                                             std::span<const std::size_t> labels, std::size_t K, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(K);
    for (auto row : pool_indices) by_class.at(labels[row]).push_back(row);
    Rng rng(seed);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < K; ++c) {
        if (by_class[c].empty()) throw DataError("class " + std::to_string(c) + " has no instance in the pool");
        out.push_back(by_class[c][uniform_index(rng, by_class[c].size())]);
    }
    return out;
}

/// Labeled context, unlabeled pool and test set in z-space, with the
/// bookkeeping the loop needs. Positions index into `pool_z`.
class ActiveLearningState {
public:
    ActiveLearningState(const Dataset& ds, const SplitResult& split, std::uint64_t init_seed)
        : ds_(&ds), split_(&split) {
        const auto model = fit_preprocessor(ds, split.pool_indices);
        pool_z_ = transform(model, ds, split.pool_indices);
        test_z_ = transform(model, ds, split.test_indices);
        for (auto row : split.test_indices) test_y_.push_back(ds.labels[row]);

        std::unordered_map<std::size_t, std::size_t> position;
        for (std::size_t i = 0; i < split.pool_indices.size(); ++i) position[split.pool_indices[i]] = i;
        std::vector<bool> labeled(split.pool_indices.size(), false);
        for (auto row : init_context(split.pool_indices, ds.labels, ds.num_classes(), init_seed)) {
            labeled[position.at(row)] = true;
            add_labeled(position.at(row));
        }
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            if (!labeled[i]) unlabeled_.push_back(i);
        }
        initial_unlabeled_ = unlabeled_.size();
    }

    std::size_t num_classes() const { return ds_->num_classes(); }
    std::size_t labeled_count() const { return labeled_.size(); }
    std::size_t unlabeled_count() const { return unlabeled_.size(); }
    std::size_t initial_unlabeled() const { return initial_unlabeled_; }
    const Matrix& context_x() const { return context_x_; }
    const std::vector<std::size_t>& context_y() const { return context_y_; }
    const Matrix& test_x() const { return test_z_; }
    const std::vector<std::size_t>& test_y() const { return test_y_; }

    Matrix unlabeled_x() const { return pool_z_.select_rows(unlabeled_); }

    /// Dataset row ids of the labeled context, in labeling order.
    std::vector<std::size_t> labeled_rows() const {
        std::vector<std::size_t> rows;
        for (auto p : labeled_) rows.push_back(split_->pool_indices[p]);
        return rows;
    }

    /// Reveals the labels of the given unlabeled positions and moves them into L.
    void reveal(const QueryBatch& batch) {
        std::vector<bool> take(unlabeled_.size(), false);
        for (auto q : batch) {
            if (q >= unlabeled_.size() || take[q]) throw Error("acquisition returned an invalid or duplicate index");
            take[q] = true;
        }
        for (auto q : batch) add_labeled(unlabeled_[q]);
        std::vector<std::size_t> rest;
        rest.reserve(unlabeled_.size() - batch.size());
        for (std::size_t i = 0; i < unlabeled_.size(); ++i) {
            if (!take[i]) rest.push_back(unlabeled_[i]);
        }
        unlabeled_ = std::move(rest);
    }

private:
    void add_labeled(std::size_t pos) {
        labeled_.push_back(pos);
        context_x_.append_row(pool_z_.row(pos));
        context_y_.push_back(ds_->labels[split_->pool_indices[pos]]);
    }

    const Dataset* ds_;
    const SplitResult* split_;
    Matrix pool_z_;
    Matrix test_z_;
    std::vector<std::size_t> test_y_;
    std::vector<std::size_t> labeled_;
    std::vector<std::size_t> unlabeled_;
    Matrix context_x_;
    std::vector<std::size_t> context_y_;
    std::size_t initial_unlabeled_ = 0;
};

/// Selects one batch of `b` positions from the current pool with the configured rule.
inline QueryBatch acquire(const ActiveLearningState& st, Predictor& predictor, std::size_t b,
                          const AcquisitionConfig& cfg) {
    const std::size_t K = st.num_classes();
    switch (cfg.strategy) {
        case Strategy::margin: {
            const auto P = predictor.predict_proba(st.context_x(), st.context_y(), st.unlabeled_x(), K);
            return select_margin(P, b);
        }
        case Strategy::hybrid: {
            const auto pool = st.unlabeled_x();
            const auto P = predictor.predict_proba(st.context_x(), st.context_y(), pool, K);
            return select_hybrid(P, pool, b, cfg);
        }
        case Strategy::proxy_hybrid:
            return select_proxy_hybrid(st.context_x(), st.context_y(), st.unlabeled_x(), predictor, K, b, cfg);
        case Strategy::coreset:
            return select_coreset(st.unlabeled_x(), st.context_x(), b);
        case Strategy::random:
            return select_random(st.unlabeled_count(), b, cfg.seed);
    }
    throw InvalidArgument("unknown strategy");
}

inline RoundRecord evaluate(const ActiveLearningState& st, Predictor& predictor) {
    const auto P = predictor.predict_proba(st.context_x(), st.context_y(), st.test_x(), st.num_classes());
    std::vector<std::size_t> pred(P.rows());
    for (std::size_t i = 0; i < P.rows(); ++i) pred[i] = argmax(P.row(i));
    RoundRecord r;
    r.n = st.labeled_count();
    r.kappa = cohen_kappa(st.test_y(), pred);
    r.auc = roc_auc_ovr_macro(st.test_y(), P);
    return r;
}

/// Runs the full protocol. Data problems (e.g. a class absent from the pool)
/// throw; predictor or acquisition failures end the run early with
/// `complete == false` and the rounds finished so far.
inline RunRecord run_active_loop(const Dataset& ds, const SplitResult& split, Predictor& predictor,
                                 const LoopConfig& loop_cfg, AcquisitionConfig acq_cfg, const LoopSeeds& seeds) {
    acq_cfg.validate();
    if (loop_cfg.budget < ds.num_classes()) throw InvalidArgument("budget must be at least the class count");

    RunRecord rec;
    rec.dataset = ds.name;
    rec.strategy = std::string(to_string(acq_cfg.strategy));
    rec.split_seed = split.seed;
    rec.seeds = seeds;
    rec.batch_size = acq_cfg.batch_size;
    rec.budget = loop_cfg.budget;

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto st = std::make_unique<ActiveLearningState>(ds, split, seeds.init);
    try {
        if (loop_cfg.evaluate_at_init) {
            auto r = evaluate(*st, predictor);
            r.seconds = std::chrono::duration<double>(clock::now() - t0).count();
            rec.rounds.push_back(r);
        }
        CountingPredictor counted(predictor);
        const double stop_after = loop_cfg.stop_fraction * static_cast<double>(st->initial_unlabeled());
        std::size_t queried = 0;
        for (std::uint64_t round = 1; st->labeled_count() < loop_cfg.budget && st->unlabeled_count() > 0 &&
                                      static_cast<double>(queried) < stop_after;
             ++round) {
            const auto start = clock::now();
            const std::size_t b = std::min(acq_cfg.batch_size, loop_cfg.budget - st->labeled_count());
            auto cfg = acq_cfg;
            cfg.seed = hash64(seeds.acquisition, round);
            counted.reset();
            const auto batch = acquire(*st, counted, b, cfg);
            if (batch.size() != std::min(b, st->unlabeled_count())) throw Error("acquisition returned a short batch");
            st->reveal(batch);
            queried += batch.size();
            auto r = evaluate(*st, predictor);
            r.evaluations = counted.rows_scored();
            r.seconds = std::chrono::duration<double>(clock::now() - start).count();
            rec.rounds.push_back(r);
        }
    } catch (const std::exception& e) {
        rec.complete = false;
        rec.error = e.what();
    }
    rec.labeled_rows = st->labeled_rows();
    return rec;
}

}  // namespace tabal
