#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "feature_matrix.hpp"
#include "linalg.hpp"

// Missing-data handling: drop columns whose missing fraction exceeds the
// threshold, then fill the rest by chained equations. The chained sweep here
// is deterministic predictive-mean imputation (single imputation, no
// posterior noise draw): per cycle, columns are visited in ascending missing
// fraction and each is regressed on all other columns over the rows where it
// is observed (ridge linear regression for continuous targets, ridge
// logistic regression via IRLS for binary targets), and its missing cells
// are overwritten with the model predictions.

namespace nephrofp::impute {

struct AllColumnsDropped : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ImputeConfig {
    double drop_threshold = 0.20;
    int cycles = 10;
    double ridge_lambda = 1e-3;
    std::uint64_t seed = 0;  // kept for interface parity; the sweep draws no random numbers

    void validate() const {
        if (!(drop_threshold > 0.0 && drop_threshold < 1.0)) {
            throw std::invalid_argument("drop_threshold must lie in (0, 1)");
        }
        if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
        if (ridge_lambda < 0.0) throw std::invalid_argument("ridge_lambda must be >= 0");
    }
};

struct DroppedColumn {
    std::string name;
    double missing_fraction;
};

struct ImputedMatrix {
    FeatureMatrix values;                    // complete, no missing cells
    std::vector<std::uint8_t> provenance;    // per cell: 0 = observed, 1 = imputed
    std::vector<DroppedColumn> dropped_columns;
    std::vector<std::string> singular_log;   // columns that fell back to mean fill
};

/// Removes columns whose missing fraction is strictly greater than the
/// threshold ("over" reads as a strict inequality).
inline std::pair<FeatureMatrix, std::vector<DroppedColumn>> drop_high_missing(
    const FeatureMatrix& m, const ImputeConfig& cfg) {
    cfg.validate();
    if (m.n_rows() == 0) throw std::invalid_argument("matrix has no rows");
    std::vector<std::size_t> keep;
    std::vector<DroppedColumn> dropped;
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
        const double frac = m.missing_fraction(c);
        if (frac > cfg.drop_threshold) {
            dropped.push_back({m.column_names[c], frac});
        } else {
            keep.push_back(c);
        }
    }
    if (keep.empty()) {
        throw AllColumnsDropped("every feature column exceeds the missingness threshold");
    }
    FeatureMatrix out;
    out.stay_ids = m.stay_ids;
    out.labels = m.labels;
    for (auto c : keep) {
        out.column_names.push_back(m.column_names[c]);
        out.column_kinds.push_back(m.column_kinds[c]);
    }
    out.values.resize(m.n_rows() * keep.size());
    out.observed.resize(m.n_rows() * keep.size());
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        for (std::size_t k = 0; k < keep.size(); ++k) {
            out.values[r * keep.size() + k] = m.at(r, keep[k]);
            out.observed[r * keep.size() + k] = m.is_observed(r, keep[k]) ? 1 : 0;
        }
    }
    return {std::move(out), std::move(dropped)};
}

namespace detail {

// Ridge fit of y on predictors (standardized internally, intercept
// unpenalized). Returns false on a singular system.
inline bool ridge_fit(const std::vector<double>& x, std::size_t n, std::size_t d,
                      const std::vector<double>& y, double lambda,
                      std::vector<double>& coef, double& intercept) {
    std::vector<double> mean(d, 0.0), sd(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i * d + j];
        mean[j] = s / static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = x[i * d + j] - mean[j];
            v += c * c;
        }
        sd[j] = v > 0.0 ? std::sqrt(v / static_cast<double>(n)) : 1.0;
    }
    double ymean = 0.0;
    for (std::size_t i = 0; i < n; ++i) ymean += y[i];
    ymean /= static_cast<double>(n);

    std::vector<double> gram(d * d, 0.0), rhs(d, 0.0);
    std::vector<double> z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) z[j] = (x[i * d + j] - mean[j]) / sd[j];
        const double yc = y[i] - ymean;
        for (std::size_t j = 0; j < d; ++j) {
            rhs[j] += z[j] * yc;
            for (std::size_t k = j; k < d; ++k) gram[j * d + k] += z[j] * z[k];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) gram[j * d + k] = gram[k * d + j];
        gram[j * d + j] += lambda * static_cast<double>(n);
    }
    if (!linalg::cholesky_solve(gram, rhs, d)) return false;

    coef.assign(d, 0.0);
    intercept = ymean;
    for (std::size_t j = 0; j < d; ++j) {
        coef[j] = rhs[j] / sd[j];
        intercept -= coef[j] * mean[j];
    }
    return true;
}

// Ridge-regularized logistic regression by IRLS, at most `max_iter`
// reweighted solves.
inline bool logistic_fit(const std::vector<double>& x, std::size_t n, std::size_t d,
                         const std::vector<double>& y, double lambda, int max_iter,
                         std::vector<double>& coef, double& intercept) {
    std::vector<double> mean(d, 0.0), sd(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i * d + j];
        mean[j] = s / static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = x[i * d + j] - mean[j];
            v += c * c;
        }
        sd[j] = v > 0.0 ? std::sqrt(v / static_cast<double>(n)) : 1.0;
    }
    std::vector<double> beta(d + 1, 0.0);  // [intercept, coefs on standardized scale]
    std::vector<double> row(d + 1);        // augmented design [1, z]
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<double> gram((d + 1) * (d + 1), 0.0), rhs(d + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            row[0] = 1.0;
            for (std::size_t j = 0; j < d; ++j) row[j + 1] = (x[i * d + j] - mean[j]) / sd[j];
            double eta = beta[0];
            for (std::size_t j = 0; j < d; ++j) eta += beta[j + 1] * row[j + 1];
            eta = std::clamp(eta, -30.0, 30.0);
            const double p = 1.0 / (1.0 + std::exp(-eta));
            const double w = std::max(p * (1.0 - p), 1e-6);
            const double work = eta + (y[i] - p) / w;
            for (std::size_t a = 0; a < d + 1; ++a) {
                rhs[a] += w * row[a] * work;
                for (std::size_t b = a; b < d + 1; ++b) gram[a * (d + 1) + b] += w * row[a] * row[b];
            }
        }
        for (std::size_t a = 0; a < d + 1; ++a) {
            for (std::size_t b = 0; b < a; ++b) gram[a * (d + 1) + b] = gram[b * (d + 1) + a];
            if (a > 0) gram[a * (d + 1) + a] += lambda * static_cast<double>(n);
        }
        std::vector<double> next = rhs;
        if (!linalg::cholesky_solve(gram, next, d + 1)) return false;
        double delta = 0.0;
        for (std::size_t a = 0; a < d + 1; ++a) delta = std::max(delta, std::abs(next[a] - beta[a]));
        beta = std::move(next);
        if (delta < 1e-8) break;
    }
    coef.assign(d, 0.0);
    intercept = beta[0];
    for (std::size_t j = 0; j < d; ++j) {
        coef[j] = beta[j + 1] / sd[j];
        intercept -= coef[j] * mean[j];
    }
    return true;
}

}  // namespace detail

/// Chained-equation fill. Preconditions: every column has at least two
/// observed values and every row at least one.
inline ImputedMatrix mice(const FeatureMatrix& input, const ImputeConfig& cfg) {
    cfg.validate();
    const std::size_t n = input.n_rows();
    const std::size_t d = input.n_cols();
    if (n == 0 || d == 0) throw std::invalid_argument("empty matrix");
    for (std::size_t c = 0; c < d; ++c) {
        std::size_t obs = 0;
        for (std::size_t r = 0; r < n; ++r) obs += input.is_observed(r, c) ? 1 : 0;
        if (obs < 2) {
            throw std::invalid_argument("column " + input.column_names[c] +
                                        " has fewer than two observed values");
        }
    }
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t obs = 0;
        for (std::size_t c = 0; c < d; ++c) obs += input.is_observed(r, c) ? 1 : 0;
        if (obs == 0) throw std::invalid_argument("row " + std::to_string(r) + " fully missing");
    }

    ImputedMatrix out;
    out.values = input;
    out.provenance.assign(n * d, 0);
    FeatureMatrix& m = out.values;

    // Initialize: column mean for continuous, observed mode for binary
    // (ties toward 0).
    std::vector<double> init(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        if (input.column_kinds[c] == ColumnKind::Binary) {
            std::size_t ones = 0, obs = 0;
            for (std::size_t r = 0; r < n; ++r) {
                if (!input.is_observed(r, c)) continue;
                ++obs;
                if (input.at(r, c) != 0.0) ++ones;
            }
            init[c] = (2 * ones > obs) ? 1.0 : 0.0;
        } else {
            double s = 0.0;
            std::size_t obs = 0;
            for (std::size_t r = 0; r < n; ++r) {
                if (!input.is_observed(r, c)) continue;
                s += input.at(r, c);
                ++obs;
            }
            init[c] = s / static_cast<double>(obs);
        }
    }
    std::vector<std::vector<std::size_t>> missing_rows(d);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            if (!input.is_observed(r, c)) {
                missing_rows[c].push_back(r);
                m.values[r * d + c] = init[c];
                out.provenance[r * d + c] = 1;
            }
        }
    }

    // Visit order: ascending missing fraction, ties by column index.
    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < d; ++c) {
        if (!missing_rows[c].empty()) order.push_back(c);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return missing_rows[a].size() < missing_rows[b].size();
    });
    if (order.empty()) return out;

    std::vector<double> x, y, coef;
    for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
        for (std::size_t target : order) {
            const std::size_t dp = d - 1;
            std::vector<std::size_t> predictors;
            predictors.reserve(dp);
            for (std::size_t c = 0; c < d; ++c) {
                if (c != target) predictors.push_back(c);
            }
            std::vector<std::size_t> fit_rows;
            fit_rows.reserve(n - missing_rows[target].size());
            for (std::size_t r = 0; r < n; ++r) {
                if (input.is_observed(r, target)) fit_rows.push_back(r);
            }
            x.assign(fit_rows.size() * dp, 0.0);
            y.assign(fit_rows.size(), 0.0);
            for (std::size_t i = 0; i < fit_rows.size(); ++i) {
                const std::size_t r = fit_rows[i];
                for (std::size_t j = 0; j < dp; ++j) x[i * dp + j] = m.at(r, predictors[j]);
                y[i] = m.at(r, target);
            }
            double intercept = 0.0;
            bool ok;
            const bool binary = input.column_kinds[target] == ColumnKind::Binary;
            if (binary) {
                ok = detail::logistic_fit(x, fit_rows.size(), dp, y, cfg.ridge_lambda, 25, coef,
                                          intercept);
            } else {
                ok = detail::ridge_fit(x, fit_rows.size(), dp, y, cfg.ridge_lambda, coef,
                                       intercept);
            }
            if (!ok) {
                out.singular_log.push_back(input.column_names[target] + " (cycle " +
                                           std::to_string(cycle) + ")");
                for (std::size_t r : missing_rows[target]) m.values[r * d + target] = init[target];
                continue;
            }
            for (std::size_t r : missing_rows[target]) {
                double pred = intercept;
                for (std::size_t j = 0; j < dp; ++j) pred += coef[j] * m.at(r, predictors[j]);
                if (binary) {
                    const double p = 1.0 / (1.0 + std::exp(-std::clamp(pred, -30.0, 30.0)));
                    m.values[r * d + target] = p >= 0.5 ? 1.0 : 0.0;
                } else {
                    m.values[r * d + target] = pred;
                }
            }
        }
    }
    for (std::size_t i = 0; i < n * d; ++i) m.observed[i] = 1;
    return out;
}

inline void write_provenance_csv(const ImputedMatrix& im, const std::string& path) {
    std::vector<std::string> header{"stay_id"};
    header.insert(header.end(), im.values.column_names.begin(), im.values.column_names.end());
    std::vector<std::vector<std::string>> rows;
    const std::size_t d = im.values.n_cols();
    for (std::size_t r = 0; r < im.values.n_rows(); ++r) {
        std::vector<std::string> row{im.values.stay_ids[r]};
        for (std::size_t c = 0; c < d; ++c) {
            row.push_back(im.provenance[r * d + c] ? "1" : "0");
        }
        rows.push_back(std::move(row));
    }
    csv::write_file(path, header, rows);
}

}  // namespace nephrofp::impute
