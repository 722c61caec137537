#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hash.hpp"
#include "rng.hpp"

// Tree-ensemble classifiers over complete numeric matrices: a gradient
// boosted learner (binary logistic loss, second-order histogram splits,
// leaf value -G/(H+lambda) with lambda fixed at 1.0) and a random forest
// (bootstrap bagging, per-split feature subsets, exact Gini splits).

namespace nephrofp::model {

struct DegenerateLabels : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct FormatVersionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Dataset {
    std::vector<double> x;  // row-major, n_rows * n_cols
    std::vector<int> y;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::string> column_names;

    double at(std::size_t r, std::size_t c) const { return x[r * n_cols + c]; }
};

struct GbdtParams {
    int n_trees = 200;
    double learning_rate = 0.1;
    int max_depth = 6;
    int min_samples_leaf = 20;
    int n_bins = 256;
    double subsample = 1.0;
    bool balance_classes = false;  // positive weight = negatives/positives when on
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
            throw std::invalid_argument("learning_rate must lie in (0, 1]");
        }
        if (n_bins < 2) throw std::invalid_argument("n_bins must be >= 2");
        if (!(subsample > 0.0 && subsample <= 1.0)) {
            throw std::invalid_argument("subsample must lie in (0, 1]");
        }
    }
};

struct RfParams {
    int n_trees = 100;
    int max_depth = 32;
    int min_samples_leaf = 20;
    int mtry = 0;  // 0 = ceil(sqrt(d))
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;          // -1 = leaf
    double threshold = 0.0;    // go left when value < threshold
    int left = -1;
    int right = -1;
    double leaf = 0.0;
    double gain = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;
};

enum class ModelKind : std::uint8_t { Gbdt = 0, RandomForest = 1 };

struct EnsembleModel {
    ModelKind kind = ModelKind::Gbdt;
    double base_score = 0.0;  // log-odds prior (gbdt)
    std::size_t n_features = 0;
    std::vector<Tree> trees;
    GbdtParams gbdt_params;
    RfParams rf_params;
};

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Per-feature bin thresholds. Features with no more distinct values than
// max_bins get one threshold midway between each pair of consecutive
// distinct values, which makes histogram splits coincide with exact greedy
// splits; wider features fall back to quantile cuts.
struct BinMap {
    std::vector<std::vector<double>> thresholds;

    static BinMap build(const Dataset& data, int max_bins) {
        BinMap bm;
        bm.thresholds.resize(data.n_cols);
        std::vector<double> vals(data.n_rows);
        for (std::size_t f = 0; f < data.n_cols; ++f) {
            for (std::size_t r = 0; r < data.n_rows; ++r) vals[r] = data.at(r, f);
            std::sort(vals.begin(), vals.end());
            std::vector<double> distinct;
            for (double v : vals) {
                if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
            }
            auto& thr = bm.thresholds[f];
            if (distinct.size() <= 1) continue;  // constant feature: no usable split
            if (static_cast<int>(distinct.size()) <= max_bins) {
                for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
                    thr.push_back(0.5 * (distinct[i] + distinct[i + 1]));
                }
            } else {
                for (int k = 1; k < max_bins; ++k) {
                    const std::size_t pos = k * data.n_rows / max_bins;
                    const double t = 0.5 * (vals[pos - 1] + vals[pos]);
                    if (thr.empty() || t > thr.back()) thr.push_back(t);
                }
            }
        }
        return bm;
    }

    std::uint16_t bin(std::size_t f, double v) const {
        const auto& thr = thresholds[f];
        return static_cast<std::uint16_t>(
            std::upper_bound(thr.begin(), thr.end(), v) - thr.begin());
    }

    std::size_t bin_count(std::size_t f) const { return thresholds[f].size() + 1; }
};

struct HistogramCell {
    double g = 0.0;
    double h = 0.0;
    std::uint32_t count = 0;
};

constexpr double kLeafLambda = 1.0;

inline double leaf_objective(double g, double h) { return g * g / (h + kLeafLambda); }

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    int bin = -1;
    bool valid = false;
};

}  // namespace detail

/// Gradient boosted trees on binary logistic loss. `loss_trace`, when given,
/// receives the training log-loss after each round.
inline EnsembleModel train_gbdt(const Dataset& data, const GbdtParams& params,
                                std::vector<double>* loss_trace = nullptr) {
    params.validate();
    const std::size_t n = data.n_rows;
    const std::size_t d = data.n_cols;
    if (n == 0) throw std::invalid_argument("empty dataset");
    std::size_t n_pos = 0;
    for (int y : data.y) n_pos += y ? 1 : 0;
    if (n_pos == 0 || n_pos == n) throw DegenerateLabels("training labels contain one class");

    EnsembleModel model;
    model.kind = ModelKind::Gbdt;
    model.n_features = d;
    model.gbdt_params = params;
    const double pos_rate = static_cast<double>(n_pos) / static_cast<double>(n);
    model.base_score = std::log(pos_rate / (1.0 - pos_rate));

    const auto bins = detail::BinMap::build(data, params.n_bins);
    // Column-major bin codes so histogram builds stream contiguously.
    std::vector<std::uint16_t> codes(n * d);
    std::vector<std::size_t> active;  // features with at least one threshold
    for (std::size_t f = 0; f < d; ++f) {
        if (bins.thresholds[f].empty()) continue;
        active.push_back(f);
        for (std::size_t r = 0; r < n; ++r) codes[f * n + r] = bins.bin(f, data.at(r, f));
    }

    const double w_pos = params.balance_classes
                             ? static_cast<double>(n - n_pos) / static_cast<double>(n_pos)
                             : 1.0;

    std::vector<double> score(n, model.base_score);
    std::vector<double> grad(n), hess(n);
    std::vector<std::uint32_t> rows(n);
    Rng rng(params.seed);

    struct BuildNode {
        int id;
        std::size_t begin, end;
        double g, h;
        int depth;
    };

    for (int round = 0; round < params.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = detail::sigmoid(score[i]);
            const double w = data.y[i] ? w_pos : 1.0;
            grad[i] = w * (p - static_cast<double>(data.y[i]));
            hess[i] = w * p * (1.0 - p);
        }

        std::iota(rows.begin(), rows.end(), 0u);
        std::size_t n_used = n;
        if (params.subsample < 1.0) {
            n_used = std::max<std::size_t>(1, static_cast<std::size_t>(params.subsample *
                                                                       static_cast<double>(n)));
            for (std::size_t i = 0; i < n_used; ++i) {
                const std::size_t j = i + rng.below(n - i);
                std::swap(rows[i], rows[j]);
            }
            std::sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_used));
        }

        Tree tree;
        tree.nodes.push_back({});
        double g0 = 0.0, h0 = 0.0;
        for (std::size_t i = 0; i < n_used; ++i) {
            g0 += grad[rows[i]];
            h0 += hess[rows[i]];
        }
        std::vector<BuildNode> frontier{{0, 0, n_used, g0, h0, 0}};

        while (!frontier.empty()) {
            std::vector<BuildNode> next;
            for (const auto& node : frontier) {
                const std::size_t count = node.end - node.begin;
                detail::SplitChoice best;
                if (node.depth < params.max_depth &&
                    count >= 2 * static_cast<std::size_t>(params.min_samples_leaf)) {
                    const double parent_obj = detail::leaf_objective(node.g, node.h);
                    for (std::size_t f : active) {
                        const std::size_t nb = bins.bin_count(f);
                        std::vector<detail::HistogramCell> hist(nb);
                        const std::uint16_t* col = &codes[f * n];
                        for (std::size_t i = node.begin; i < node.end; ++i) {
                            const std::uint32_t r = rows[i];
                            auto& cell = hist[col[r]];
                            cell.g += grad[r];
                            cell.h += hess[r];
                            ++cell.count;
                        }
                        double gl = 0.0, hl = 0.0;
                        std::uint32_t cl = 0;
                        for (std::size_t b = 0; b + 1 < nb; ++b) {
                            gl += hist[b].g;
                            hl += hist[b].h;
                            cl += hist[b].count;
                            const std::uint32_t cr = static_cast<std::uint32_t>(count) - cl;
                            if (cl < static_cast<std::uint32_t>(params.min_samples_leaf)) continue;
                            if (cr < static_cast<std::uint32_t>(params.min_samples_leaf)) break;
                            const double gain = 0.5 * (detail::leaf_objective(gl, hl) +
                                                       detail::leaf_objective(node.g - gl,
                                                                              node.h - hl) -
                                                       parent_obj);
                            // First (feature, bin) wins near-ties, scan order fixed.
                            if (gain > 0.0 && (!best.valid || gain > best.gain + 1e-12)) {
                                best = {gain, static_cast<int>(f), static_cast<int>(b), true};
                            }
                        }
                    }
                }
                if (!best.valid) {
                    tree.nodes[node.id].leaf = -node.g / (node.h + detail::kLeafLambda);
                    continue;
                }
                const std::uint16_t* col = &codes[static_cast<std::size_t>(best.feature) * n];
                auto mid = std::stable_partition(
                    rows.begin() + static_cast<std::ptrdiff_t>(node.begin),
                    rows.begin() + static_cast<std::ptrdiff_t>(node.end),
                    [&](std::uint32_t r) { return col[r] <= best.bin; });
                const std::size_t split_at =
                    static_cast<std::size_t>(mid - rows.begin());
                double gl = 0.0, hl = 0.0;
                for (std::size_t i = node.begin; i < split_at; ++i) {
                    gl += grad[rows[i]];
                    hl += hess[rows[i]];
                }
                const int left_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                TreeNode& tn = tree.nodes[node.id];
                tn.feature = best.feature;
                tn.threshold = bins.thresholds[best.feature][best.bin];
                tn.gain = best.gain;
                tn.left = left_id;
                tn.right = left_id + 1;
                next.push_back({tree.nodes[node.id].left, node.begin, split_at, gl, hl,
                                node.depth + 1});
                next.push_back({tree.nodes[node.id].right, split_at, node.end, node.g - gl,
                                node.h - hl, node.depth + 1});
            }
            frontier = std::move(next);
        }

        // Score update by traversal covers rows left out by subsampling too.
        for (std::size_t r = 0; r < n; ++r) {
            int cur = 0;
            while (tree.nodes[cur].feature >= 0) {
                const auto& tn = tree.nodes[cur];
                cur = data.at(r, static_cast<std::size_t>(tn.feature)) < tn.threshold ? tn.left
                                                                                      : tn.right;
            }
            score[r] += params.learning_rate * tree.nodes[cur].leaf;
        }
        model.trees.push_back(std::move(tree));

        if (loss_trace != nullptr) {
            double loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double p = detail::sigmoid(score[i]);
                loss -= data.y[i] ? std::log(std::max(p, 1e-15))
                                  : std::log(std::max(1.0 - p, 1e-15));
            }
            loss_trace->push_back(loss / static_cast<double>(n));
        }
    }
    return model;
}

namespace detail {

struct RfBuilder {
    const Dataset& data;
    const RfParams& params;
    Rng& rng;
    Tree& tree;
    int mtry;

    // rows may contain duplicates (bootstrap draws).
    int build(std::vector<std::uint32_t>& rows, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        std::size_t pos = 0;
        for (auto r : rows) pos += data.y[r] ? 1 : 0;
        const double frac = static_cast<double>(pos) / static_cast<double>(rows.size());
        const bool pure = pos == 0 || pos == rows.size();
        if (pure || depth >= params.max_depth ||
            rows.size() < 2 * static_cast<std::size_t>(params.min_samples_leaf)) {
            tree.nodes[id].leaf = frac;
            return id;
        }

        std::vector<std::size_t> candidates(data.n_cols);
        std::iota(candidates.begin(), candidates.end(), 0u);
        for (int i = 0; i < mtry; ++i) {
            const std::size_t j = i + rng.below(candidates.size() - static_cast<std::size_t>(i));
            std::swap(candidates[static_cast<std::size_t>(i)], candidates[j]);
        }
        candidates.resize(static_cast<std::size_t>(mtry));
        std::sort(candidates.begin(), candidates.end());

        const double parent_gini =
            1.0 - frac * frac - (1.0 - frac) * (1.0 - frac);
        double best_gain = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> vals;
        vals.reserve(rows.size());
        for (std::size_t f : candidates) {
            vals.clear();
            for (auto r : rows) vals.push_back({data.at(r, f), data.y[r]});
            std::sort(vals.begin(), vals.end());
            std::size_t left_n = 0, left_pos = 0;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                ++left_n;
                left_pos += vals[i].second ? 1 : 0;
                if (vals[i].first == vals[i + 1].first) continue;
                const std::size_t right_n = vals.size() - left_n;
                if (left_n < static_cast<std::size_t>(params.min_samples_leaf) ||
                    right_n < static_cast<std::size_t>(params.min_samples_leaf)) {
                    continue;
                }
                const double pl = static_cast<double>(left_pos) / static_cast<double>(left_n);
                const double pr = static_cast<double>(pos - left_pos) /
                                  static_cast<double>(right_n);
                const double gini_l = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl);
                const double gini_r = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr);
                const double wl = static_cast<double>(left_n) / static_cast<double>(vals.size());
                const double gain = parent_gini - wl * gini_l - (1.0 - wl) * gini_r;
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        if (best_feature < 0) {
            tree.nodes[id].leaf = frac;
            return id;
        }
        std::vector<std::uint32_t> left, right;
        for (auto r : rows) {
            (data.at(r, static_cast<std::size_t>(best_feature)) < best_threshold ? left : right)
                .push_back(r);
        }
        tree.nodes[id].feature = best_feature;
        tree.nodes[id].threshold = best_threshold;
        tree.nodes[id].gain = best_gain;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        tree.nodes[id].left = l;
        tree.nodes[id].right = r;
        return id;
    }
};

}  // namespace detail

/// Bagged forest with per-split feature subsets of size ceil(sqrt(d)) by
/// default and exact Gini splits; prediction averages leaf class
/// frequencies.
inline EnsembleModel train_random_forest(const Dataset& data, const RfParams& params) {
    const std::size_t n = data.n_rows;
    if (n == 0) throw std::invalid_argument("empty dataset");
    std::size_t n_pos = 0;
    for (int y : data.y) n_pos += y ? 1 : 0;
    if (n_pos == 0 || n_pos == n) throw DegenerateLabels("training labels contain one class");

    EnsembleModel model;
    model.kind = ModelKind::RandomForest;
    model.n_features = data.n_cols;
    model.rf_params = params;
    model.base_score = 0.0;

    const int mtry = params.mtry > 0
                         ? std::min<int>(params.mtry, static_cast<int>(data.n_cols))
                         : static_cast<int>(
                               std::ceil(std::sqrt(static_cast<double>(data.n_cols))));

    for (int t = 0; t < params.n_trees; ++t) {
        Rng rng(mix64(params.seed, static_cast<std::uint64_t>(t) + 1));
        std::vector<std::uint32_t> rows(n);
        if (params.bootstrap) {
            for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(rng.below(n));
        } else {
            std::iota(rows.begin(), rows.end(), 0u);
        }
        Tree tree;
        detail::RfBuilder builder{data, params, rng, tree, mtry};
        builder.build(rows, 0);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

inline double predict_row(const EnsembleModel& model, const double* row) {
    if (model.kind == ModelKind::Gbdt) {
        double s = model.base_score;
        for (const auto& tree : model.trees) {
            int cur = 0;
            while (tree.nodes[cur].feature >= 0) {
                const auto& tn = tree.nodes[cur];
                cur = row[tn.feature] < tn.threshold ? tn.left : tn.right;
            }
            s += model.gbdt_params.learning_rate * tree.nodes[cur].leaf;
        }
        return detail::sigmoid(s);
    }
    double acc = 0.0;
    for (const auto& tree : model.trees) {
        int cur = 0;
        while (tree.nodes[cur].feature >= 0) {
            const auto& tn = tree.nodes[cur];
            cur = row[tn.feature] < tn.threshold ? tn.left : tn.right;
        }
        acc += tree.nodes[cur].leaf;
    }
    const double p = model.trees.empty() ? 0.5 : acc / static_cast<double>(model.trees.size());
    return std::clamp(p, 1e-6, 1.0 - 1e-6);
}

inline std::vector<double> predict_proba(const EnsembleModel& model, const double* x,
                                         std::size_t n_rows, std::size_t n_cols) {
    if (n_cols != model.n_features) {
        throw ShapeMismatch("model expects " + std::to_string(model.n_features) +
                            " features, got " + std::to_string(n_cols));
    }
    std::vector<double> out(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) out[r] = predict_row(model, &x[r * n_cols]);
    return out;
}

inline std::vector<double> predict_proba(const EnsembleModel& model, const Dataset& data) {
    return predict_proba(model, data.x.data(), data.n_rows, data.n_cols);
}

// ---- serialization ---------------------------------------------------------
//
// Little-endian layout:
//   magic "NFPM" | u32 version=1 | u8 kind | f64 base_score | u64 n_features
//   gbdt params: u32 n_trees, f64 learning_rate, i32 max_depth,
//                i32 min_samples_leaf, i32 n_bins, f64 subsample,
//                u8 balance_classes, u64 seed
//   rf params:   u32 n_trees, i32 max_depth, i32 min_samples_leaf, i32 mtry,
//                u8 bootstrap, u64 seed
//   u32 tree count, then per tree: u32 node count, then per node:
//   i32 feature, f64 threshold, i32 left, i32 right, f64 leaf, f64 gain

namespace detail {

struct ByteWriter {
    std::vector<std::uint8_t> out;
    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
};

struct ByteReader {
    std::span<const std::uint8_t> in;
    std::size_t pos = 0;
    void need(std::size_t k) {
        if (pos + k > in.size()) throw FormatVersionMismatch("model file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return in[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos++]) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const EnsembleModel& model) {
    detail::ByteWriter w;
    w.u8('N');
    w.u8('F');
    w.u8('P');
    w.u8('M');
    w.u32(1);
    w.u8(static_cast<std::uint8_t>(model.kind));
    w.f64(model.base_score);
    w.u64(model.n_features);
    w.u32(static_cast<std::uint32_t>(model.gbdt_params.n_trees));
    w.f64(model.gbdt_params.learning_rate);
    w.i32(model.gbdt_params.max_depth);
    w.i32(model.gbdt_params.min_samples_leaf);
    w.i32(model.gbdt_params.n_bins);
    w.f64(model.gbdt_params.subsample);
    w.u8(model.gbdt_params.balance_classes ? 1 : 0);
    w.u64(model.gbdt_params.seed);
    w.u32(static_cast<std::uint32_t>(model.rf_params.n_trees));
    w.i32(model.rf_params.max_depth);
    w.i32(model.rf_params.min_samples_leaf);
    w.i32(model.rf_params.mtry);
    w.u8(model.rf_params.bootstrap ? 1 : 0);
    w.u64(model.rf_params.seed);
    w.u32(static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) {
        w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& tn : tree.nodes) {
            w.i32(tn.feature);
            w.f64(tn.threshold);
            w.i32(tn.left);
            w.i32(tn.right);
            w.f64(tn.leaf);
            w.f64(tn.gain);
        }
    }
    return std::move(w.out);
}

inline EnsembleModel deserialize(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r{bytes};
    const char magic[4] = {static_cast<char>(r.u8()), static_cast<char>(r.u8()),
                           static_cast<char>(r.u8()), static_cast<char>(r.u8())};
    if (std::memcmp(magic, "NFPM", 4) != 0) {
        throw FormatVersionMismatch("bad magic bytes in model file");
    }
    const std::uint32_t version = r.u32();
    if (version != 1) {
        throw FormatVersionMismatch("unsupported model format version " +
                                    std::to_string(version));
    }
    EnsembleModel m;
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw FormatVersionMismatch("unknown model kind");
    m.kind = static_cast<ModelKind>(kind);
    m.base_score = r.f64();
    m.n_features = r.u64();
    m.gbdt_params.n_trees = static_cast<int>(r.u32());
    m.gbdt_params.learning_rate = r.f64();
    m.gbdt_params.max_depth = r.i32();
    m.gbdt_params.min_samples_leaf = r.i32();
    m.gbdt_params.n_bins = r.i32();
    m.gbdt_params.subsample = r.f64();
    m.gbdt_params.balance_classes = r.u8() != 0;
    m.gbdt_params.seed = r.u64();
    m.rf_params.n_trees = static_cast<int>(r.u32());
    m.rf_params.max_depth = r.i32();
    m.rf_params.min_samples_leaf = r.i32();
    m.rf_params.mtry = r.i32();
    m.rf_params.bootstrap = r.u8() != 0;
    m.rf_params.seed = r.u64();
    const std::uint32_t n_trees = r.u32();
    m.trees.resize(n_trees);
    for (auto& tree : m.trees) {
        const std::uint32_t n_nodes = r.u32();
        tree.nodes.resize(n_nodes);
        for (auto& tn : tree.nodes) {
            tn.feature = r.i32();
            tn.threshold = r.f64();
            tn.left = r.i32();
            tn.right = r.i32();
            tn.leaf = r.f64();
            tn.gain = r.f64();
        }
    }
    if (r.pos != bytes.size()) throw FormatVersionMismatch("trailing bytes in model file");
    return m;
}

}  // namespace nephrofp::model
