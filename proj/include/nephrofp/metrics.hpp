#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Binary-classification metrics: AUROC (rank-based Mann-Whitney), AUPRC
// (average precision with tied scores grouped into one step), and F1 at a
// decision threshold.

namespace nephrofp::metrics {

struct SingleClass : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NoPositives : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EvalReport {
    double auroc = 0.0;
    double auprc = 0.0;
    double f1 = 0.0;
    double threshold = 0.5;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

/// P(score_pos > score_neg) + 0.5 P(tie), computed from average ranks.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) (y ? ++n_pos : ++n_neg);
    if (n_pos == 0 || n_neg == 0) throw SingleClass("auroc needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Average precision: sum over descending-score threshold steps of
/// (delta recall) * precision, tied scores grouped.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("size mismatch");
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y ? 1 : 0;
    if (n_pos == 0) throw NoPositives("auprc needs at least one positive");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) tp += 1.0;
            else fp += 1.0;
        }
        const double recall = tp / static_cast<double>(n_pos);
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

/// F1 with predictions = (score >= threshold); 0 when precision+recall = 0.
inline double f1(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) throw std::invalid_argument("size mismatch");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i]) tp += 1;
        else if (pred && !labels[i]) fp += 1;
        else if (!pred && labels[i]) fn += 1;
    }
    const double denom = 2 * tp + fp + fn;
    if (denom == 0.0) return 0.0;
    return 2 * tp / denom;
}

inline EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                           double threshold = 0.5) {
    EvalReport r;
    r.threshold = threshold;
    for (int y : labels) (y ? ++r.n_pos : ++r.n_neg);
    r.auroc = auroc(scores, labels);
    r.auprc = auprc(scores, labels);
    r.f1 = f1(scores, labels, threshold);
    return r;
}

inline std::string to_kv_text(const EvalReport& r) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    std::string out;
    out += "auroc=" + fmt(r.auroc) + "\n";
    out += "auprc=" + fmt(r.auprc) + "\n";
    out += "f1=" + fmt(r.f1) + "\n";
    out += "threshold=" + fmt(r.threshold) + "\n";
    out += "n_pos=" + std::to_string(r.n_pos) + "\n";
    out += "n_neg=" + std::to_string(r.n_neg) + "\n";
    return out;
}

}  // namespace nephrofp::metrics
