#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace tabal {

/// Cohen's kappa. When chance agreement is 1 the result is 1 for perfect
/// agreement and 0 otherwise.
inline double cohen_kappa(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size()) throw InvalidArgument("kappa needs equal, non-empty inputs");
    std::size_t K = 0;
    for (auto v : y_true) K = std::max(K, v + 1);
    for (auto v : y_pred) K = std::max(K, v + 1);
    std::vector<double> row(K, 0.0), col(K, 0.0);
    double agree = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        row[y_true[i]] += 1.0;
        col[y_pred[i]] += 1.0;
        if (y_true[i] == y_pred[i]) agree += 1.0;
    }
    const double n = static_cast<double>(y_true.size());
    const double po = agree / n;
    double pe = 0.0;
    for (std::size_t c = 0; c < K; ++c) pe += (row[c] / n) * (col[c] / n);
    if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

/// Average ranks (1-based) with ties sharing the mean rank.
inline std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
        i = j + 1;
    }
    return ranks;
}

/// ROC AUC of `scores` for the indicator (y == positive) via the Mann-Whitney
/// statistic, ties counting 1/2. nullopt when either side is empty.
inline std::optional<double> roc_auc_binary(std::span<const std::size_t> y, std::size_t positive,
                                            std::span<const double> scores) {
    const auto ranks = average_ranks(scores);
    double n_pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (y[i] == positive) {
            n_pos += 1.0;
            rank_sum += ranks[i];
        }
    }
    const double n_neg = static_cast<double>(ranks.size()) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

/// One-vs-rest macro ROC AUC over the classes present in y_true; nullopt when
/// only one class is present.
inline std::optional<double> roc_auc_ovr_macro(std::span<const std::size_t> y_true, const Matrix& P) {
    if (y_true.size() != P.rows()) throw InvalidArgument("labels and probabilities differ in length");
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<double> col(y_true.size());
    for (std::size_t c = 0; c < P.cols(); ++c) {
        for (std::size_t i = 0; i < y_true.size(); ++i) col[i] = P(i, c);
        if (const auto auc = roc_auc_binary(y_true, c, col)) {
            sum += *auc;
            ++used;
        }
    }
    if (used == 0) return std::nullopt;
    return sum / static_cast<double>(used);
}

struct CurvePoint {
    std::size_t n = 0;
    double y = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

/// Trapezoidal area under the curve divided by (N_max - n_0). Curves that stop
/// before N_max keep the same denominator.
inline double aulc_norm(const LearningCurve& curve, std::size_t n_max) {
    if (curve.size() < 2) throw InvalidArgument("AULC needs at least two curve points");
    if (curve.front().n >= n_max) throw InvalidArgument("AULC needs n_0 < N_max");
    // Accumulated relative to y_0 so a constant curve comes out exact.
    const double base = curve.front().y;
    double excess = 0.0;
    for (std::size_t t = 1; t < curve.size(); ++t) {
        if (curve[t].n <= curve[t - 1].n) throw InvalidArgument("curve sizes must strictly increase");
        const double mid = 0.5 * (curve[t].y + curve[t - 1].y);
        excess += (mid - base) * static_cast<double>(curve[t].n - curve[t - 1].n);
    }
    const auto span = static_cast<double>(n_max - curve.front().n);
    const auto covered = static_cast<double>(curve.back().n - curve.front().n);
    const double base_part = covered == span ? base : base * covered / span;
    return base_part + excess / span;
}

}  // namespace tabal
