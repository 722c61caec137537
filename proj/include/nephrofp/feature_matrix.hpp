#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "csv.hpp"

// Stay-indexed numeric table with an explicit missingness mask and a binary
// outcome label. On disk: a CSV with stay_id first, the feature columns
// (empty cell = missing), and the label last, plus a JSON manifest carrying
// column kinds, the label column name, and funnel counts.

namespace nephrofp {

enum class ColumnKind { Continuous, Binary };

inline std::string to_string(ColumnKind k) {
    return k == ColumnKind::Binary ? "binary" : "continuous";
}

struct FeatureMatrix {
    std::vector<std::string> stay_ids;
    std::vector<std::string> column_names;
    std::vector<ColumnKind> column_kinds;
    std::vector<double> values;           // row-major, n_rows * n_cols
    std::vector<std::uint8_t> observed;   // 1 = observed
    std::vector<int> labels;

    std::size_t n_rows() const { return stay_ids.size(); }
    std::size_t n_cols() const { return column_names.size(); }

    double& at(std::size_t r, std::size_t c) { return values[r * n_cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * n_cols() + c]; }
    bool is_observed(std::size_t r, std::size_t c) const { return observed[r * n_cols() + c] != 0; }
    void set(std::size_t r, std::size_t c, double v) {
        values[r * n_cols() + c] = v;
        observed[r * n_cols() + c] = 1;
    }
    void set_missing(std::size_t r, std::size_t c) {
        values[r * n_cols() + c] = 0.0;
        observed[r * n_cols() + c] = 0;
    }

    double missing_fraction(std::size_t c) const {
        if (n_rows() == 0) return 0.0;
        std::size_t miss = 0;
        for (std::size_t r = 0; r < n_rows(); ++r) miss += is_observed(r, c) ? 0 : 1;
        return static_cast<double>(miss) / static_cast<double>(n_rows());
    }

    static FeatureMatrix empty(std::vector<std::string> columns, std::vector<ColumnKind> kinds) {
        FeatureMatrix m;
        m.column_names = std::move(columns);
        m.column_kinds = std::move(kinds);
        return m;
    }

    // Masked cells carry no value; whatever the caller passed is zeroed so
    // mask and values stay congruent.
    void add_row(std::string stay_id, const std::vector<double>& row,
                 const std::vector<std::uint8_t>& mask, int label) {
        stay_ids.push_back(std::move(stay_id));
        for (std::size_t c = 0; c < row.size(); ++c) {
            values.push_back(mask[c] ? row[c] : 0.0);
            observed.push_back(mask[c] ? 1 : 0);
        }
        labels.push_back(label);
    }
};

inline const std::string kLabelColumn = "aki_label";

inline void write_feature_csv(const FeatureMatrix& m, const std::string& path) {
    std::vector<std::string> header{"stay_id"};
    header.insert(header.end(), m.column_names.begin(), m.column_names.end());
    header.push_back(kLabelColumn);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(m.n_rows());
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        std::vector<std::string> row;
        row.reserve(m.n_cols() + 2);
        row.push_back(m.stay_ids[r]);
        for (std::size_t c = 0; c < m.n_cols(); ++c) {
            row.push_back(m.is_observed(r, c) ? csv::format_double(m.at(r, c)) : std::string{});
        }
        row.push_back(std::to_string(m.labels[r]));
        rows.push_back(std::move(row));
    }
    csv::write_file(path, header, rows);
}

inline FeatureMatrix read_feature_csv(const std::string& path,
                                      const std::vector<ColumnKind>* kinds = nullptr) {
    auto t = csv::read_file(path);
    if (t.header.size() < 2 || t.header.front() != "stay_id" || t.header.back() != kLabelColumn) {
        throw csv::CsvError(path + ": expected stay_id ... " + kLabelColumn + " layout");
    }
    FeatureMatrix m;
    m.column_names.assign(t.header.begin() + 1, t.header.end() - 1);
    if (kinds != nullptr) {
        if (kinds->size() != m.column_names.size()) {
            throw csv::CsvError(path + ": manifest kinds do not match column count");
        }
        m.column_kinds = *kinds;
    } else {
        m.column_kinds.assign(m.column_names.size(), ColumnKind::Continuous);
    }
    const std::size_t d = m.column_names.size();
    for (const auto& row : t.rows) {
        m.stay_ids.push_back(row.front());
        for (std::size_t c = 0; c < d; ++c) {
            const std::string& cell = row[c + 1];
            if (cell.empty()) {
                m.values.push_back(0.0);
                m.observed.push_back(0);
            } else {
                m.values.push_back(csv::parse_double(cell));
                m.observed.push_back(1);
            }
        }
        m.labels.push_back(static_cast<int>(csv::parse_long(row.back())));
    }
    return m;
}

inline nlohmann::json columns_manifest(const FeatureMatrix& m) {
    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
        cols.push_back({{"name", m.column_names[c]}, {"kind", to_string(m.column_kinds[c])}});
    }
    return cols;
}

inline std::vector<ColumnKind> kinds_from_manifest(const nlohmann::json& manifest) {
    std::vector<ColumnKind> kinds;
    for (const auto& col : manifest.at("columns")) {
        kinds.push_back(col.at("kind") == "binary" ? ColumnKind::Binary : ColumnKind::Continuous);
    }
    return kinds;
}

}  // namespace nephrofp
