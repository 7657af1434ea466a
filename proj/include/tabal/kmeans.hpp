#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace tabal {

struct KMeansConfig {
    std::size_t max_iter = 100;
    double tol = 1e-4;
    std::size_t restarts = 1;
};

struct KMeansResult {
    Matrix centroids;
    std::vector<std::size_t> assignments;
    double inertia = 0.0;
    /// Inertia after each assignment step, first entry from the seeded centroids.
    std::vector<double> inertia_history;
    std::size_t iterations = 0;
};

namespace kmeans_detail {

/// Distance-weighted (k-means++) seeding.
inline Matrix seed_centroids(const Matrix& X, std::size_t k, Rng& rng) {
    const std::size_t n = X.rows();
    Matrix c(k, X.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t pick = static_cast<std::size_t>(uniform_index(rng, n));
    for (std::size_t j = 0; j < k; ++j) {
        std::copy(X.row(pick).begin(), X.row(pick).end(), c.row(j).begin());
        if (j + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(X.row(i), c.row(j)));
            total += d2[i];
        }
        if (total <= 0.0) {
            pick = static_cast<std::size_t>(uniform_index(rng, n));
            continue;
        }
        const double target = uniform_real(rng) * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc > target && d2[i] > 0.0) {
                pick = i;
                break;
            }
        }
        while (d2[pick] <= 0.0 && pick > 0) --pick;
    }
    return c;
}

/// Nearest centroid for every row (ties to the smaller centroid index); returns inertia.
inline double assign(const Matrix& X, const Matrix& c, std::vector<std::size_t>& a) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c.rows(); ++j) {
            const double d = squared_distance(X.row(i), c.row(j));
            if (d < best) {
                best = d;
                a[i] = j;
            }
        }
        inertia += best;
    }
    return inertia;
}

inline KMeansResult lloyd(const Matrix& X, std::size_t k, const KMeansConfig& cfg, Rng& rng) {
    const std::size_t n = X.rows();
    const std::size_t d = X.cols();
    KMeansResult r;
    r.centroids = seed_centroids(X, k, rng);
    r.assignments.assign(n, 0);
    r.inertia = assign(X, r.centroids, r.assignments);
    r.inertia_history.push_back(r.inertia);

    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        Matrix next(k, d);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = next.row(r.assignments[i]);
            auto x = X.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] += x[j];
            ++count[r.assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) continue;
            for (auto& v : next.row(c)) v /= static_cast<double>(count[c]);
        }
        // Empty clusters take the point farthest from its own centroid.
        std::vector<bool> used(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] != 0) continue;
            double far = -1.0;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (used[i]) continue;
                const double dist = squared_distance(X.row(i), next.row(r.assignments[i]));
                if (dist > far) {
                    far = dist;
                    far_i = i;
                }
            }
            used[far_i] = true;
            std::copy(X.row(far_i).begin(), X.row(far_i).end(), next.row(c).begin());
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, distance(r.centroids.row(c), next.row(c)));
        r.centroids = std::move(next);
        r.inertia = assign(X, r.centroids, r.assignments);
        r.inertia_history.push_back(r.inertia);
        r.iterations = it + 1;
        if (shift < cfg.tol) break;
    }
    return r;
}

}  // namespace kmeans_detail

/// Lloyd's algorithm with k-means++ seeding; deterministic in `seed`. With
/// restarts > 1 the lowest-inertia run wins (first on ties).
inline KMeansResult kmeans(const Matrix& X, std::size_t k, const KMeansConfig& cfg, std::uint64_t seed) {
    if (k < 1 || k > X.rows()) throw InvalidArgument("k-means needs 1 <= k <= rows");
    Rng rng(seed);
    KMeansResult best;
    for (std::size_t r = 0; r < std::max<std::size_t>(cfg.restarts, 1); ++r) {
        auto run = kmeans_detail::lloyd(X, k, cfg, rng);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

}  // namespace tabal
