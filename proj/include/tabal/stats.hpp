#pragma once

// Paired significance testing across seeds and multiplicity correction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "metrics.hpp"

namespace tabal {

struct WilcoxonResult {
    double statistic = 0.0;  // min(W+, W-)
    double p_value = 1.0;    // two-sided
    std::size_t n = 0;       // non-zero differences
    bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactMax = 12;

/// Fraction of the 2^n sign assignments over `ranks` whose min(W+, W-) is at
/// most `w`. Ranks may be tied (averaged).
inline double wilcoxon_exact_p(std::span<const double> ranks, double w) {
    const std::size_t n = ranks.size();
    if (n > 24) throw InvalidArgument("exact Wilcoxon enumeration limited to n <= 24");
    const double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
    std::uint64_t hits = 0;
    const std::uint64_t patterns = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double plus = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::uint64_t{1} << i)) plus += ranks[i];
        }
        if (std::min(plus, total - plus) <= w + 1e-9) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(patterns);
}

/// Normal approximation with tie and continuity corrections.
inline double wilcoxon_normal_p(std::span<const double> ranks, double w) {
    const auto n = static_cast<double>(ranks.size());
    const double mean = n * (n + 1.0) / 4.0;
    double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    std::vector<double> sorted(ranks.begin(), ranks.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i);
        var -= (t * t * t - t) / 48.0;
        i = j;
    }
    if (var <= 0.0) return 1.0;
    const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
    return std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
}

/// Paired two-sided signed-rank test on a - b. Zero differences are dropped;
/// exact enumeration for n <= 12, normal approximation above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("Wilcoxon needs paired samples of equal length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (const double diff = a[i] - b[i]; diff != 0.0) d.push_back(diff);
    }
    WilcoxonResult r;
    r.n = d.size();
    if (d.empty()) return r;

    std::vector<double> mag(d.size());
    std::transform(d.begin(), d.end(), mag.begin(), [](double v) { return std::abs(v); });
    const auto ranks = average_ranks(mag);
    double plus = 0.0, minus = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? plus : minus) += ranks[i];
    r.statistic = std::min(plus, minus);
    r.exact = d.size() <= kWilcoxonExactMax;
    r.p_value = r.exact ? wilcoxon_exact_p(ranks, r.statistic) : wilcoxon_normal_p(ranks, r.statistic);
    return r;
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
inline std::vector<double> bh_adjust(std::span<const double> p) {
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("p-values must lie in [0, 1]");
    }
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> out(m);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const double q = p[order[k]] * static_cast<double>(m) / static_cast<double>(k + 1);
        running = std::min(running, q);
        out[order[k]] = std::max(p[order[k]], std::min(running, 1.0));
    }
    return out;
}

enum class Verdict { higher, lower, none };

inline std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::higher: return "higher";
        case Verdict::lower: return "lower";
        case Verdict::none: return "none";
    }
    return "none";
}

inline Verdict verdict(double delta, double p_adj, double level = 0.05) {
    if (!(p_adj < level) || delta == 0.0) return Verdict::none;
    return delta > 0.0 ? Verdict::higher : Verdict::lower;
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace tabal
