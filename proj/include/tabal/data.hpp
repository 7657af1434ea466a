#pragma once

// Tabular dataset ingestion: CSV + optional JSON metadata sidecar, column kind
// inference, row capping and stratified pool/test splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace tabal {

/// A raw cell: a token, or nullopt for a missing value.
using Cell = std::optional<std::string>;

enum class ColumnKind { categorical, numerical };
enum class KindSource { metadata, inferred };

inline const char* to_string(ColumnKind k) {
    return k == ColumnKind::categorical ? "categorical" : "numerical";
}

struct ColumnMeta {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    KindSource source = KindSource::inferred;

    friend bool operator==(const ColumnMeta&, const ColumnMeta&) = default;
};

/// Feature columns plus a separate label vector. `class_names` fixes the class
/// order every probability matrix uses.
struct Dataset {
    std::string name;
    std::vector<ColumnMeta> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return rows.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    std::size_t num_features() const { return columns.size(); }
};

struct SplitResult {
    std::vector<std::size_t> pool_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
};

inline constexpr std::string_view kMissingCategory = "<missing>";

inline bool is_missing_token(std::string_view s) {
    return s.empty() || s == "NA" || s == "?";
}

/// Parses a whole token as a finite double. Leading/trailing blanks are not allowed.
inline std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// RFC 4180 parser. Quoted fields may contain commas, doubled quotes and
/// line breaks. Unquoted fields are trimmed of surrounding blanks.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool was_quoted = false;
    bool any = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(was_quoted ? field : detail::trim(field));
        field.clear();
        was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = record.size() == 1 && record.front().empty() && !any;
        if (!blank) records.push_back(std::move(record));
        record.clear();
        any = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!detail::trim(field).empty()) {
                    throw DataError("malformed CSV: stray quote on line " + std::to_string(line));
                }
                field.clear();
                in_quotes = true;
                was_quoted = true;
                any = true;
                break;
            case ',':
                end_field();
                any = true;
                break;
            case '\n':
                end_record();
                ++line;
                break;
            case '\r':
                break;
            default:
                if (was_quoted && c != ' ' && c != '\t') {
                    throw DataError("malformed CSV: text after closing quote on line " + std::to_string(line));
                }
                field.push_back(c);
                any = true;
        }
    }
    if (in_quotes) throw DataError("malformed CSV: unterminated quoted field");
    if (any || !field.empty()) end_record();
    return records;
}

/// Resolves the kind of every column whose source is `inferred`: categorical iff
/// some value is non-numeric, or all values are integers with < 20 distinct
/// values. Columns fixed by metadata are left alone.
inline Dataset infer_column_kinds(Dataset ds) {
    for (std::size_t c = 0; c < ds.columns.size(); ++c) {
        auto& col = ds.columns[c];
        if (col.source != KindSource::inferred) continue;
        std::set<double> uniques;
        bool numeric = true;
        bool integral = true;
        bool seen = false;
        for (const auto& row : ds.rows) {
            const auto& cell = row[c];
            if (!cell) continue;
            seen = true;
            const auto v = parse_number(*cell);
            if (!v) {
                numeric = false;
                break;
            }
            if (*v != std::floor(*v)) integral = false;
            if (uniques.size() < 20) uniques.insert(*v);
        }
        if (!seen || !numeric) {
            col.kind = ColumnKind::categorical;
        } else {
            col.kind = (integral && uniques.size() < 20) ? ColumnKind::categorical : ColumnKind::numerical;
        }
    }
    return ds;
}

/// Column-kind overrides and label column name read from a metadata sidecar.
struct DatasetMeta {
    std::optional<std::string> label_column;
    std::map<std::string, ColumnKind> kinds;
};

inline DatasetMeta parse_meta(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("metadata sidecar must be a JSON object");
    DatasetMeta meta;
    for (const auto& [key, value] : j.items()) {
        if (key == "label_column") {
            if (!value.is_string()) throw DataError("label_column must be a string");
            meta.label_column = value.get<std::string>();
            continue;
        }
        if (!value.is_object() || !value.contains("kind")) continue;
        const auto kind = value.at("kind").get<std::string>();
        if (kind == "categorical") {
            meta.kinds[key] = ColumnKind::categorical;
        } else if (kind == "numerical") {
            meta.kinds[key] = ColumnKind::numerical;
        } else {
            throw DataError("unknown column kind '" + kind + "' for column " + key);
        }
    }
    return meta;
}

/// Builds a Dataset from a parsed table (header + records). The label column
/// defaults to the last one.
inline Dataset make_dataset(std::string name, const std::vector<std::vector<std::string>>& table,
                            const DatasetMeta& meta = {}) {
    if (table.empty()) throw DataError("CSV has no header");
    const auto& header = table.front();
    if (header.size() < 2) throw DataError("CSV needs at least one feature and a label column");

    std::size_t label_col = header.size() - 1;
    if (meta.label_column) {
        const auto it = std::find(header.begin(), header.end(), *meta.label_column);
        if (it == header.end()) throw DataError("label column '" + *meta.label_column + "' not in header");
        label_col = static_cast<std::size_t>(it - header.begin());
    }

    Dataset ds;
    ds.name = std::move(name);
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == label_col) continue;
        ColumnMeta col{header[c], ColumnKind::numerical, KindSource::inferred};
        if (const auto it = meta.kinds.find(header[c]); it != meta.kinds.end()) {
            col.kind = it->second;
            col.source = KindSource::metadata;
        }
        ds.columns.push_back(std::move(col));
    }

    std::vector<std::string> raw_labels;
    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& rec = table[r];
        if (rec.size() != header.size()) {
            throw DataError("malformed CSV: record " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        if (is_missing_token(rec[label_col])) throw DataError("empty label on record " + std::to_string(r));
        std::vector<Cell> row;
        row.reserve(header.size() - 1);
        for (std::size_t c = 0; c < rec.size(); ++c) {
            if (c == label_col) continue;
            row.push_back(is_missing_token(rec[c]) ? Cell{} : Cell{rec[c]});
        }
        ds.rows.push_back(std::move(row));
        raw_labels.push_back(rec[label_col]);
    }

    std::set<std::string> names(raw_labels.begin(), raw_labels.end());
    if (names.size() < 2) throw DataError("dataset needs at least 2 classes");
    ds.class_names.assign(names.begin(), names.end());
    ds.labels.reserve(raw_labels.size());
    for (const auto& l : raw_labels) {
        ds.labels.push_back(static_cast<std::size_t>(
            std::lower_bound(ds.class_names.begin(), ds.class_names.end(), l) - ds.class_names.begin()));
    }
    return infer_column_kinds(std::move(ds));
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Dataset load_dataset(const std::string& path, const std::optional<std::string>& meta_path = std::nullopt,
                            std::string name = {}) {
    DatasetMeta meta;
    if (meta_path) {
        try {
            meta = parse_meta(nlohmann::json::parse(read_file(*meta_path)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad metadata sidecar " + *meta_path + ": " + e.what());
        }
    }
    if (name.empty()) {
        const auto slash = path.find_last_of('/');
        name = path.substr(slash == std::string::npos ? 0 : slash + 1);
        if (const auto dot = name.rfind('.'); dot != std::string::npos && dot > 0) name.resize(dot);
    }
    return make_dataset(std::move(name), parse_csv(read_file(path)), meta);
}

/// Row indices kept by `subsample`, ascending.
inline std::vector<std::size_t> subsample_indices(std::size_t rows, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> idx;
    if (rows <= cap) {
        idx.resize(rows);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return idx;
    }
    Rng rng(seed);
    idx = sample_without_replacement(rng, rows, cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.name = ds.name;
    out.columns = ds.columns;
    out.class_names = ds.class_names;
    out.rows.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (auto i : idx) {
        out.rows.push_back(ds.rows[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

/// Uniform, order-preserving cap on the number of rows.
inline Dataset subsample(const Dataset& ds, std::size_t cap = 10000, std::uint64_t seed = 0) {
    if (cap < ds.num_classes()) throw InvalidArgument("subsample cap is smaller than the class count");
    if (ds.size() <= cap) return ds;
    return subset(ds, subsample_indices(ds.size(), cap, seed));
}

/// Number of test rows per class. The total is round-half-up(f*N), apportioned
/// by largest remainder (ties to the smaller class index), then clamped per class
/// to [1, n_c - 1].
inline std::vector<std::size_t> stratified_test_counts(const std::vector<std::size_t>& class_sizes,
                                                       double test_fraction) {
    std::size_t total = 0;
    for (auto n : class_sizes) total += n;
    const auto target = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(total) + 0.5 + 1e-9));

    std::vector<std::size_t> counts(class_sizes.size());
    std::vector<double> remainder(class_sizes.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        const double exact = test_fraction * static_cast<double>(class_sizes[c]);
        counts[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[c] = exact - static_cast<double>(counts[c]);
        assigned += counts[c];
    }
    std::vector<std::size_t> order(class_sizes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
    for (std::size_t k = 0; assigned < target && k < order.size(); ++k, ++assigned) ++counts[order[k]];

    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        if (class_sizes[c] == 0) continue;
        counts[c] = std::clamp<std::size_t>(counts[c], 1, class_sizes[c] - 1);
    }
    return counts;
}

inline SplitResult stratified_split(const Dataset& ds, double test_fraction = 0.3, std::uint64_t seed = 0) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test_fraction must be in (0, 1)");
    const std::size_t K = ds.num_classes();
    std::vector<std::vector<std::size_t>> by_class(K);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    std::vector<std::size_t> sizes(K);
    for (std::size_t c = 0; c < K; ++c) {
        if (by_class[c].size() == 1) {
            throw DataError("class '" + ds.class_names[c] + "' has a single instance; cannot stratify");
        }
        sizes[c] = by_class[c].size();
    }
    const auto counts = stratified_test_counts(sizes, test_fraction);

    Rng rng(seed);
    SplitResult out;
    out.seed = seed;
    for (std::size_t c = 0; c < K; ++c) {
        auto rows = by_class[c];
        shuffle(rng, rows);
        out.test_indices.insert(out.test_indices.end(), rows.begin(), rows.begin() + static_cast<long>(counts[c]));
        out.pool_indices.insert(out.pool_indices.end(), rows.begin() + static_cast<long>(counts[c]), rows.end());
    }
    std::sort(out.pool_indices.begin(), out.pool_indices.end());
    std::sort(out.test_indices.begin(), out.test_indices.end());
    return out;
}

}  // namespace tabal

namespace tabal {

/// Drops classes with no rows and re-indexes labels, keeping relative order.
inline Dataset compact_classes(Dataset ds) {
    std::vector<std::size_t> counts(ds.num_classes(), 0);
    for (auto l : ds.labels) ++counts[l];
    std::vector<std::size_t> remap(ds.num_classes(), 0);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        remap[c] = names.size();
        if (counts[c] > 0) names.push_back(ds.class_names[c]);
    }
    if (names.size() == ds.class_names.size()) return ds;
    for (auto& l : ds.labels) l = remap[l];
    ds.class_names = std::move(names);
    return ds;
}

}  // namespace tabal
