#pragma once

// The shared feature map z(.): mean-impute + standardize numerical columns,
// mode-impute + ordinal-encode categorical columns. Fitted on pool rows only.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "matrix.hpp"

namespace tabal {

struct NumericStats {
    double mean = 0.0;
    double std = 1.0;
};

struct CategoryCodes {
    std::string mode;
    std::map<std::string, std::size_t> codes;  // lexicographic token -> dense code

    std::size_t code_of(const Cell& cell) const {
        if (cell) {
            if (const auto it = codes.find(*cell); it != codes.end()) return it->second;
        }
        return codes.at(mode);
    }
};

struct PreprocessorColumn {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    NumericStats numeric;
    CategoryCodes categorical;
};

class PreprocessorModel {
public:
    static constexpr double kStdFloor = 1e-12;

    PreprocessorModel() = default;
    explicit PreprocessorModel(std::vector<PreprocessorColumn> columns) : columns_(std::move(columns)) {}

    const std::vector<PreprocessorColumn>& columns() const { return columns_; }
    std::size_t num_features() const { return columns_.size(); }

    std::vector<double> transform_row(std::span<const Cell> row) const {
        if (row.size() != columns_.size()) {
            throw InvalidArgument("row has " + std::to_string(row.size()) + " cells, model expects " +
                                  std::to_string(columns_.size()));
        }
        std::vector<double> out(columns_.size());
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            const auto& col = columns_[c];
            if (col.kind == ColumnKind::numerical) {
                // Non-numeric tokens in a metadata-declared numerical column count as missing.
                const auto v = row[c] ? parse_number(*row[c]) : std::nullopt;
                out[c] = v ? (*v - col.numeric.mean) / col.numeric.std : 0.0;
            } else {
                out[c] = static_cast<double>(col.categorical.code_of(row[c]));
            }
        }
        return out;
    }

    nlohmann::json to_json() const {
        auto cols = nlohmann::json::array();
        for (const auto& c : columns_) {
            nlohmann::json j{{"name", c.name}, {"kind", to_string(c.kind)}};
            if (c.kind == ColumnKind::numerical) {
                j["mean"] = c.numeric.mean;
                j["std"] = c.numeric.std;
            } else {
                j["mode"] = c.categorical.mode;
                j["codes"] = c.categorical.codes;
            }
            cols.push_back(std::move(j));
        }
        return {{"columns", std::move(cols)}};
    }

    static PreprocessorModel from_json(const nlohmann::json& j) {
        std::vector<PreprocessorColumn> cols;
        for (const auto& c : j.at("columns")) {
            PreprocessorColumn col;
            col.name = c.at("name").get<std::string>();
            const auto kind = c.at("kind").get<std::string>();
            col.kind = kind == "numerical" ? ColumnKind::numerical : ColumnKind::categorical;
            if (col.kind == ColumnKind::numerical) {
                col.numeric = {c.at("mean").get<double>(), c.at("std").get<double>()};
            } else {
                col.categorical.mode = c.at("mode").get<std::string>();
                col.categorical.codes = c.at("codes").get<std::map<std::string, std::size_t>>();
            }
            cols.push_back(std::move(col));
        }
        return PreprocessorModel(std::move(cols));
    }

private:
    std::vector<PreprocessorColumn> columns_;
};

inline PreprocessorModel fit_preprocessor(const Dataset& ds, std::span<const std::size_t> pool_indices) {
    if (pool_indices.empty()) throw InvalidArgument("cannot fit preprocessor on an empty pool");
    std::vector<PreprocessorColumn> cols;
    cols.reserve(ds.num_features());
    for (std::size_t c = 0; c < ds.num_features(); ++c) {
        PreprocessorColumn col{ds.columns[c].name, ds.columns[c].kind, {}, {}};
        if (col.kind == ColumnKind::numerical) {
            double sum = 0.0;
            std::size_t n = 0;
            for (auto i : pool_indices) {
                const auto& cell = ds.rows[i][c];
                if (const auto v = cell ? parse_number(*cell) : std::nullopt) {
                    sum += *v;
                    ++n;
                }
            }
            if (n > 0) {
                const double mean = sum / static_cast<double>(n);
                double ss = 0.0;
                for (auto i : pool_indices) {
                    const auto& cell = ds.rows[i][c];
                    if (const auto v = cell ? parse_number(*cell) : std::nullopt) ss += (*v - mean) * (*v - mean);
                }
                const double sd = std::sqrt(ss / static_cast<double>(n));
                col.numeric = {mean, sd < PreprocessorModel::kStdFloor ? 1.0 : sd};
            }
        } else {
            std::map<std::string, std::size_t> counts;
            for (auto i : pool_indices) {
                if (const auto& cell = ds.rows[i][c]) ++counts[*cell];
            }
            if (counts.empty()) counts[std::string(kMissingCategory)] = 0;
            col.categorical.mode = counts.begin()->first;
            std::size_t best = counts.begin()->second;
            std::size_t code = 0;
            // map iteration is lexicographic, so strict > keeps the smallest token on ties
            for (const auto& [token, count] : counts) {
                if (count > best) {
                    best = count;
                    col.categorical.mode = token;
                }
                col.categorical.codes[token] = code++;
            }
        }
        cols.push_back(std::move(col));
    }
    return PreprocessorModel(std::move(cols));
}

inline Matrix transform(const PreprocessorModel& model, std::span<const std::vector<Cell>> rows) {
    Matrix out(rows.size(), model.num_features());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto z = model.transform_row(rows[r]);
        std::copy(z.begin(), z.end(), out.row(r).begin());
    }
    return out;
}

/// Transforms the dataset rows at `indices`.
inline Matrix transform(const PreprocessorModel& model, const Dataset& ds, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), model.num_features());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto z = model.transform_row(ds.rows[indices[r]]);
        std::copy(z.begin(), z.end(), out.row(r).begin());
    }
    return out;
}

}  // namespace tabal
