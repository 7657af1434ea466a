#pragma once

// Batch acquisition rules over an unlabeled pool. Batches hold positions into
// the current pool (0..|U|-1); every score tie goes to the smaller position.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "kmeans.hpp"
#include "matrix.hpp"
#include "predictor.hpp"
#include "rng.hpp"

namespace tabal {

enum class Strategy { margin, hybrid, proxy_hybrid, coreset, random };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::margin: return "margin";
        case Strategy::hybrid: return "hybrid";
        case Strategy::proxy_hybrid: return "proxy_hybrid";
        case Strategy::coreset: return "coreset";
        case Strategy::random: return "random";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view s) {
    for (auto v : {Strategy::margin, Strategy::hybrid, Strategy::proxy_hybrid, Strategy::coreset, Strategy::random}) {
        if (to_string(v) == s) return v;
    }
    if (s == "proxy-hybrid") return Strategy::proxy_hybrid;
    throw InvalidArgument("unknown strategy '" + std::string(s) + "'");
}

struct AcquisitionConfig {
    Strategy strategy = Strategy::margin;
    std::size_t batch_size = 10;
    double alpha = 0.05;          // proxy filter ratio
    std::size_t n_min = 200;      // proxy shortlist clamps
    std::size_t n_max_proxy = 2000;
    double epsilon = 1e-12;       // entropy stabilizer
    KMeansConfig kmeans;
    LinearConfig proxy;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in (0, 1]");
        if (n_min > n_max_proxy) throw InvalidArgument("n_min must not exceed n_max_proxy");
        if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
    }
};

using ScoreVector = std::vector<double>;
using QueryBatch = std::vector<std::size_t>;

/// p_(1) - p_(2) per row.
inline ScoreVector margin_scores(const ProbabilityMatrix& P) {
    if (P.cols() < 2) throw InvalidArgument("margin needs K >= 2");
    ScoreVector s(P.rows());
    for (std::size_t i = 0; i < P.rows(); ++i) {
        double first = -1.0, second = -1.0;
        for (double v : P.row(i)) {
            if (v > first) {
                second = first;
                first = v;
            } else if (v > second) {
                second = v;
            }
        }
        s[i] = first - second;
    }
    return s;
}

/// -sum_k p_k log(p_k + eps), natural log.
inline ScoreVector entropy_scores(const ProbabilityMatrix& P, double epsilon = 1e-12) {
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
    ScoreVector s(P.rows());
    for (std::size_t i = 0; i < P.rows(); ++i) {
        double h = 0.0;
        for (double p : P.row(i)) h -= p * std::log(p + epsilon);
        s[i] = h;
    }
    return s;
}

/// Positions of the `k` smallest scores, ascending by (score, position).
inline std::vector<std::size_t> smallest_k(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
    });
    idx.resize(k);
    return idx;
}

/// Positions of the `k` largest scores, descending by score, then ascending position.
inline std::vector<std::size_t> largest_k(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    });
    idx.resize(k);
    return idx;
}

inline QueryBatch select_margin(const ProbabilityMatrix& P, std::size_t B) {
    return smallest_k(margin_scores(P), B);
}

inline std::size_t candidate_count_hybrid(std::size_t pool_size, std::size_t B) {
    if (pool_size < 1) throw InvalidArgument("empty pool");
    return std::min(pool_size, std::max(2 * B, pool_size / 2));
}

inline std::size_t compute_n_proxy(std::size_t pool_size, double alpha, std::size_t n_min, std::size_t n_max_proxy) {
    if (pool_size < 1) throw InvalidArgument("empty pool");
    const auto scaled = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(pool_size)));
    return std::min(pool_size, std::max(n_min, std::min(n_max_proxy, scaled)));
}

/// For each centroid in order, the closest candidate row not claimed by an
/// earlier centroid (ties to the smaller row).
inline std::vector<std::size_t> nearest_unique(const Matrix& points, const Matrix& centroids) {
    std::vector<bool> taken(points.rows(), false);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < centroids.rows() && out.size() < points.rows(); ++c) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (taken[i]) continue;
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        taken[best_i] = true;
        out.push_back(best_i);
    }
    return out;
}

/// Diversity step shared by hybrid and proxy-hybrid: k-means with
/// k = min(B, |candidates|) on the candidates (taken in ascending pool order),
/// then the nearest unclaimed candidate to each centroid.
inline QueryBatch diverse_select(std::vector<std::size_t> candidates, const Matrix& pool_features, std::size_t B,
                                 const AcquisitionConfig& cfg) {
    if (candidates.empty()) return {};
    std::sort(candidates.begin(), candidates.end());
    const Matrix X = pool_features.select_rows(candidates);
    const std::size_t k = std::min(B, candidates.size());
    const auto km = kmeans(X, k, cfg.kmeans, cfg.seed);
    QueryBatch out;
    for (auto local : nearest_unique(X, km.centroids)) out.push_back(candidates[local]);
    return out;
}

inline QueryBatch select_hybrid(const ProbabilityMatrix& P, const Matrix& pool_features, std::size_t B,
                                const AcquisitionConfig& cfg) {
    if (P.rows() != pool_features.rows()) throw InvalidArgument("probabilities and pool features differ in length");
    const auto H = entropy_scores(P, cfg.epsilon);
    return diverse_select(largest_k(H, candidate_count_hybrid(P.rows(), B)), pool_features, B, cfg);
}

/// Proxy-screened hybrid: only the proxy shortlist is sent to `predictor`.
inline QueryBatch select_proxy_hybrid(const Matrix& context_x, std::span<const std::size_t> context_y,
                                      const Matrix& pool_features, Predictor& predictor, std::size_t K, std::size_t B,
                                      const AcquisitionConfig& cfg) {
    if (context_x.rows() == 0) throw InvalidArgument("proxy-hybrid needs a non-empty context");
    if (pool_features.rows() == 0) return {};
    const auto proxy = fit_linear(context_x, context_y, K, cfg.proxy);
    const auto proxy_entropy = entropy_scores(proxy.predict_proba(pool_features), cfg.epsilon);
    const auto n_proxy = compute_n_proxy(pool_features.rows(), cfg.alpha, cfg.n_min, cfg.n_max_proxy);
    const auto shortlist = largest_k(proxy_entropy, n_proxy);

    const auto P = predictor.predict_proba(context_x, context_y, pool_features.select_rows(shortlist), K);
    const auto H = entropy_scores(P, cfg.epsilon);
    // Rank the shortlist by main-model entropy; ties resolve to the smaller pool position.
    std::vector<std::size_t> order(shortlist.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return H[a] > H[b] || (H[a] == H[b] && shortlist[a] < shortlist[b]);
    });
    const std::size_t n_div = std::min(3 * B, shortlist.size());
    std::vector<std::size_t> finalists;
    for (std::size_t i = 0; i < n_div; ++i) finalists.push_back(shortlist[order[i]]);
    return diverse_select(std::move(finalists), pool_features, B, cfg);
}

/// Nearest-center distance per pool point, maintained incrementally.
class CoresetState {
public:
    CoresetState(const Matrix& pool_features, const Matrix& labeled_features) : pool_(&pool_features) {
        if (labeled_features.rows() == 0) throw InvalidArgument("coreset needs a non-empty labeled set");
        d_min_.assign(pool_features.rows(), std::numeric_limits<double>::infinity());
        for (std::size_t u = 0; u < pool_features.rows(); ++u) {
            for (std::size_t l = 0; l < labeled_features.rows(); ++l) {
                d_min_[u] = std::min(d_min_[u], distance(pool_features.row(u), labeled_features.row(l)));
            }
        }
        selected_.assign(pool_features.rows(), false);
    }

    const std::vector<double>& d_min() const { return d_min_; }

    /// Unselected position with the largest D_min (smaller position on ties).
    std::optional<std::size_t> farthest() const {
        std::optional<std::size_t> best;
        for (std::size_t u = 0; u < d_min_.size(); ++u) {
            if (selected_[u]) continue;
            if (!best || d_min_[u] > d_min_[*best]) best = u;
        }
        return best;
    }

    void add_center(std::size_t q) {
        selected_[q] = true;
        const auto center = pool_->row(q);
        for (std::size_t u = 0; u < d_min_.size(); ++u) {
            d_min_[u] = std::min(d_min_[u], distance(pool_->row(u), center));
        }
    }

private:
    const Matrix* pool_;
    std::vector<double> d_min_;
    std::vector<bool> selected_;
};

inline QueryBatch select_coreset(const Matrix& pool_features, const Matrix& labeled_features, std::size_t B) {
    CoresetState state(pool_features, labeled_features);
    QueryBatch out;
    while (out.size() < B) {
        const auto q = state.farthest();
        if (!q) break;
        state.add_center(*q);
        out.push_back(*q);
    }
    return out;
}

inline QueryBatch select_random(std::size_t pool_size, std::size_t B, std::uint64_t seed) {
    Rng rng(seed);
    return sample_without_replacement(rng, pool_size, B);
}

}  // namespace tabal
