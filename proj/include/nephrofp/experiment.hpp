#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohort.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "feature_matrix.hpp"
#include "fingerprint.hpp"
#include "hash.hpp"
#include "impute.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "resolver.hpp"
#include "resolver_http.hpp"
#include "rng.hpp"

// End-to-end experiment runner: cohort -> resolution -> fingerprints ->
// imputation -> one stratified split -> two models trained on identical rows
// with identical hyperparameters (cohort features only vs cohort features
// plus fingerprint columns) -> paired evaluation. Also the stage-wise entry
// points behind the CLI subcommands; stage outputs round-trip losslessly so
// composing stages reproduces the in-memory pipeline bit for bit.

namespace nephrofp::experiment {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Learner { Gbdt, RandomForest };
enum class FpAggregation { Or, SumClipped };

struct ExperimentConfig {
    std::string data_dir;     // EHR CSV bundle
    std::string schema_path;  // feature schema JSON

    cohort::KdigoConfig kdigo;

    // Resolver: fixture mode (hermetic) or live HTTP.
    bool use_http = false;
    std::string compound_fixture;
    std::string ndc_fixture;
    std::string cache_path;  // optional persistent cache
    resolver::HttpConfig http;
    double rate_limit_per_sec = 5.0;
    int parallelism = 1;
    int retry_attempts = 3;
    int retry_backoff_ms = 500;

    int fp_radius = 2;
    std::uint32_t fp_width = 1024;
    FpAggregation fp_aggregation = FpAggregation::Or;
    int fp_sum_clip = 3;  // cap for the sum-clipped aggregation

    impute::ImputeConfig impute_cfg;

    Learner learner = Learner::Gbdt;
    model::GbdtParams gbdt;
    model::RfParams rf;

    double train_fraction = 0.8;
    bool stratified = true;
    std::uint64_t split_seed = 42;
    double f1_threshold = 0.5;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            throw ConfigError("train_fraction must lie in (0, 1)");
        }
        if (data_dir.empty()) throw ConfigError("data_dir is required");
        if (schema_path.empty()) throw ConfigError("schema_path is required");
        if (!use_http && compound_fixture.empty()) {
            throw ConfigError("fixture mode needs resolver.compound_fixture");
        }
    }
};

/// Builds an ExperimentConfig from the INI sections documented in the README.
inline ExperimentConfig config_from_file(const config::Config& c) {
    ExperimentConfig cfg;
    cfg.data_dir = c.get("data.dir");
    cfg.schema_path = c.get("data.schema", "config/feature_schema.json");

    cfg.kdigo.scr_abs_increase = c.get_double("kdigo.scr_abs_increase", cfg.kdigo.scr_abs_increase);
    cfg.kdigo.scr_rel_increase = c.get_double("kdigo.scr_rel_increase", cfg.kdigo.scr_rel_increase);
    cfg.kdigo.urine_rate_threshold =
        c.get_double("kdigo.urine_rate_threshold", cfg.kdigo.urine_rate_threshold);
    cfg.kdigo.urine_sustained_hours = static_cast<int>(
        c.get_long("kdigo.urine_sustained_hours", cfg.kdigo.urine_sustained_hours));
    cfg.kdigo.label_window_hours =
        static_cast<int>(c.get_long("kdigo.label_window_hours", cfg.kdigo.label_window_hours));

    const std::string mode = c.get("resolver.mode", "fixture");
    if (mode == "http") {
        cfg.use_http = true;
    } else if (mode != "fixture") {
        throw ConfigError("resolver.mode must be fixture or http, got " + mode);
    }
    cfg.compound_fixture = c.get("resolver.compound_fixture");
    cfg.ndc_fixture = c.get("resolver.ndc_fixture");
    cfg.cache_path = c.get("resolver.cache");
    cfg.http.compound_base_url = c.get("resolver.compound_url", cfg.http.compound_base_url);
    cfg.http.ndc_base_url = c.get("resolver.ndc_url", cfg.http.ndc_base_url);
    cfg.rate_limit_per_sec = c.get_double("resolver.rate_limit_per_sec", cfg.rate_limit_per_sec);
    cfg.parallelism = static_cast<int>(c.get_long("resolver.parallelism", cfg.parallelism));
    cfg.retry_attempts = static_cast<int>(c.get_long("resolver.retry_attempts", cfg.retry_attempts));
    cfg.retry_backoff_ms =
        static_cast<int>(c.get_long("resolver.retry_backoff_ms", cfg.retry_backoff_ms));

    cfg.fp_radius = static_cast<int>(c.get_long("fingerprint.radius", cfg.fp_radius));
    cfg.fp_width = static_cast<std::uint32_t>(c.get_long("fingerprint.width", cfg.fp_width));
    const std::string agg = c.get("fingerprint.aggregation", "or");
    if (agg == "or") cfg.fp_aggregation = FpAggregation::Or;
    else if (agg == "sum-clipped") cfg.fp_aggregation = FpAggregation::SumClipped;
    else throw ConfigError("fingerprint.aggregation must be or | sum-clipped, got " + agg);
    cfg.fp_sum_clip = static_cast<int>(c.get_long("fingerprint.sum_clip", cfg.fp_sum_clip));

    cfg.impute_cfg.drop_threshold =
        c.get_double("impute.drop_threshold", cfg.impute_cfg.drop_threshold);
    cfg.impute_cfg.cycles = static_cast<int>(c.get_long("impute.cycles", cfg.impute_cfg.cycles));
    cfg.impute_cfg.ridge_lambda = c.get_double("impute.ridge_lambda", cfg.impute_cfg.ridge_lambda);
    cfg.impute_cfg.seed =
        static_cast<std::uint64_t>(c.get_long("impute.seed", static_cast<long>(cfg.impute_cfg.seed)));

    const std::string learner = c.get("model.learner", "gbdt");
    if (learner == "gbdt") cfg.learner = Learner::Gbdt;
    else if (learner == "random_forest") cfg.learner = Learner::RandomForest;
    else throw ConfigError("model.learner must be gbdt | random_forest, got " + learner);
    cfg.gbdt.n_trees = static_cast<int>(c.get_long("model.n_trees", cfg.gbdt.n_trees));
    cfg.gbdt.learning_rate = c.get_double("model.learning_rate", cfg.gbdt.learning_rate);
    cfg.gbdt.max_depth = static_cast<int>(c.get_long("model.max_depth", cfg.gbdt.max_depth));
    cfg.gbdt.min_samples_leaf =
        static_cast<int>(c.get_long("model.min_samples_leaf", cfg.gbdt.min_samples_leaf));
    cfg.gbdt.n_bins = static_cast<int>(c.get_long("model.n_bins", cfg.gbdt.n_bins));
    cfg.gbdt.subsample = c.get_double("model.subsample", cfg.gbdt.subsample);
    cfg.gbdt.balance_classes = c.get_bool("model.balance_classes", cfg.gbdt.balance_classes);
    cfg.gbdt.seed = static_cast<std::uint64_t>(c.get_long("model.seed", 0));
    cfg.rf.n_trees = static_cast<int>(c.get_long("model.rf_n_trees", cfg.rf.n_trees));
    cfg.rf.max_depth = static_cast<int>(c.get_long("model.rf_max_depth", cfg.rf.max_depth));
    cfg.rf.min_samples_leaf =
        static_cast<int>(c.get_long("model.rf_min_samples_leaf", cfg.rf.min_samples_leaf));
    cfg.rf.mtry = static_cast<int>(c.get_long("model.rf_mtry", cfg.rf.mtry));
    cfg.rf.bootstrap = c.get_bool("model.rf_bootstrap", cfg.rf.bootstrap);
    cfg.rf.seed = cfg.gbdt.seed;

    cfg.train_fraction = c.get_double("split.train_fraction", cfg.train_fraction);
    cfg.stratified = c.get_bool("split.stratified", cfg.stratified);
    cfg.split_seed = static_cast<std::uint64_t>(c.get_long("split.seed", 42));
    cfg.f1_threshold = c.get_double("evaluate.f1_threshold", cfg.f1_threshold);
    return cfg;
}

struct Funnel {
    std::size_t stays_in = 0;
    std::size_t after_exclusions = 0;
    std::size_t after_rx_filter = 0;
    std::size_t with_resolved_fingerprint = 0;  // stays with >= 1 resolved drug
    cohort::ExclusionReport exclusions;
    std::size_t unresolved_drugs = 0;
    std::size_t resolved_drugs = 0;
};

struct ArmResult {
    metrics::EvalReport eval;
    std::string intermediates_hash;  // shared inputs: imputed matrix + split + params
};

struct ExperimentReport {
    Funnel funnel;
    std::string learner_name;
    ArmResult baseline;
    ArmResult multimodal;
    double delta_auroc = 0.0;
    double delta_auprc = 0.0;
    double delta_f1 = 0.0;
    std::vector<std::string> notes;
};

// ---- shared pipeline steps --------------------------------------------------

struct StaySet {
    std::vector<cohort::StayRecord> stays;
    Funnel funnel;
};

inline StaySet build_cohort(const ExperimentConfig& cfg) {
    auto stays = cohort::load_stays(cfg.data_dir);
    StaySet out;
    out.funnel.stays_in = stays.size();
    auto [included, report] = cohort::apply_exclusions(std::move(stays), cfg.kdigo);
    out.funnel.exclusions = report;
    out.funnel.after_exclusions = included.size();
    auto [with_rx, dropped] = cohort::filter_first_day_prescription(std::move(included));
    out.funnel.after_rx_filter = with_rx.size();
    out.stays = std::move(with_rx);
    return out;
}

// First-day prescriptions per stay, the resolution unit of the pipeline.
inline std::vector<resolver::DrugRecord> first_day_prescriptions(
    const std::vector<cohort::StayRecord>& stays) {
    std::vector<resolver::DrugRecord> records;
    for (const auto& stay : stays) {
        for (const auto& [record, start_hours] : stay.prescriptions) {
            if (start_hours > 0.0 && start_hours < 24.0) records.push_back(record);
        }
    }
    return records;
}

struct ResolverHandles {
    std::unique_ptr<resolver::CompoundDatabase> compounds;
    std::unique_ptr<resolver::NdcRegistry> registry;
};

inline ResolverHandles make_resolver(const ExperimentConfig& cfg) {
    ResolverHandles h;
    if (cfg.use_http) {
        auto http = resolver::HttpConfig::with_env_overrides(cfg.http);
        h.compounds = std::make_unique<resolver::HttpCompoundDatabase>(http);
        h.registry = std::make_unique<resolver::HttpNdcRegistry>(http);
    } else {
        h.compounds = std::make_unique<resolver::FixtureCompoundDatabase>(cfg.compound_fixture);
        if (!cfg.ndc_fixture.empty()) {
            h.registry = std::make_unique<resolver::FixtureNdcRegistry>(cfg.ndc_fixture);
        } else {
            struct EmptyRegistry : resolver::NdcRegistry {
                std::optional<std::string> proprietary_name(const std::string&) override {
                    return std::nullopt;
                }
            };
            h.registry = std::make_unique<EmptyRegistry>();
        }
    }
    return h;
}

inline resolver::BatchOptions batch_options(const ExperimentConfig& cfg) {
    resolver::BatchOptions opts;
    opts.parallelism = cfg.parallelism;
    opts.rate_limit_per_sec = cfg.use_http ? cfg.rate_limit_per_sec : 0.0;
    opts.retry.attempts = cfg.retry_attempts;
    opts.retry.initial_backoff = std::chrono::milliseconds(cfg.retry_backoff_ms);
    return opts;
}

// Per-stay fingerprint columns from resolved first-day drugs. Unresolved
// drugs are removed from the fingerprint set; a stay whose drugs all fail to
// resolve keeps an all-zero fingerprint so experiment symmetry holds.
struct FingerprintBlock {
    std::vector<double> columns;  // row-major, n_stays * width
    std::size_t width = 0;
    std::size_t stays_with_bits = 0;
    std::size_t resolved = 0;
    std::size_t unresolved = 0;
};

inline FingerprintBlock fingerprint_columns(const std::vector<cohort::StayRecord>& stays,
                                            const ExperimentConfig& cfg,
                                            resolver::ResolverCache& cache) {
    auto handles = make_resolver(cfg);
    auto records = first_day_prescriptions(stays);
    auto batch =
        resolver::resolve_batch(records, *handles.compounds, *handles.registry, cache,
                                batch_options(cfg));
    if (!batch.errors.empty()) {
        throw DataError("resolver reported " + std::to_string(batch.errors.size()) +
                        " upstream failures; re-run to resume from the cache");
    }

    std::map<std::string, std::vector<const resolver::Resolution*>> by_stay;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& res = batch.resolutions[i];
        by_stay[records[i].source_stay_id].push_back(&res.value());
    }

    FingerprintBlock block;
    block.width = cfg.fp_width;
    block.columns.assign(stays.size() * cfg.fp_width, 0.0);
    std::map<std::string, fingerprint::Fingerprint> fp_cache;
    for (std::size_t s = 0; s < stays.size(); ++s) {
        auto it = by_stay.find(stays[s].stay_id);
        if (it == by_stay.end()) continue;
        std::vector<int> counts(cfg.fp_width, 0);
        bool any = false;
        for (const auto* res : it->second) {
            if (res->status == resolver::ResolveStatus::Unresolved) {
                ++block.unresolved;
                continue;
            }
            ++block.resolved;
            auto fit = fp_cache.find(res->smiles);
            if (fit == fp_cache.end()) {
                auto mol = molgraph::parse_smiles(res->smiles);
                fit = fp_cache.emplace(res->smiles,
                                       fingerprint::ecfp(mol, cfg.fp_radius, cfg.fp_width))
                          .first;
            }
            any = true;
            for (auto bit : fit->second.set_bits()) ++counts[bit];
        }
        if (!any) continue;
        ++block.stays_with_bits;
        for (std::uint32_t b = 0; b < cfg.fp_width; ++b) {
            const int c = counts[b];
            block.columns[s * cfg.fp_width + b] =
                cfg.fp_aggregation == FpAggregation::Or
                    ? (c > 0 ? 1.0 : 0.0)
                    : static_cast<double>(std::min(c, cfg.fp_sum_clip));
        }
    }
    return block;
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// One stratified split: positives and negatives are shuffled separately
/// with the seed and cut at the train fraction.
inline Split stratified_split(const std::vector<int>& labels, double train_fraction,
                              bool stratified, std::uint64_t seed) {
    Rng rng(mix64(seed, 0x5b1dull));
    Split split;
    auto cut = [&](std::vector<std::size_t>& idx) {
        rng.shuffle(idx);
        const std::size_t n_train =
            static_cast<std::size_t>(train_fraction * static_cast<double>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? split.train : split.test).push_back(idx[i]);
        }
    };
    if (stratified) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
        cut(pos);
        cut(neg);
    } else {
        std::vector<std::size_t> all(labels.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        cut(all);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

namespace detail {

inline std::string hash_shared_intermediates(const FeatureMatrix& imputed, const Split& split,
                                             const ExperimentConfig& cfg) {
    std::string buf;
    for (const auto& id : imputed.stay_ids) {
        buf += id;
        buf += ';';
    }
    for (double v : imputed.values) {
        char tmp[32];
        std::snprintf(tmp, sizeof(tmp), "%.17g,", v);
        buf += tmp;
    }
    for (int y : imputed.labels) buf += static_cast<char>('0' + y);
    for (auto i : split.train) buf += std::to_string(i) + ",";
    buf += "|";
    for (auto i : split.test) buf += std::to_string(i) + ",";
    buf += cfg.learner == Learner::Gbdt ? "gbdt" : "rf";
    buf += std::to_string(cfg.gbdt.n_trees) + "," + std::to_string(cfg.gbdt.learning_rate) + "," +
           std::to_string(cfg.gbdt.max_depth) + "," + std::to_string(cfg.gbdt.min_samples_leaf) +
           "," + std::to_string(cfg.gbdt.n_bins) + "," + std::to_string(cfg.gbdt.seed);
    buf += std::to_string(cfg.rf.n_trees) + "," + std::to_string(cfg.rf.max_depth) + "," +
           std::to_string(cfg.rf.min_samples_leaf) + "," + std::to_string(cfg.rf.seed);
    char out[32];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf)));
    return out;
}

inline model::Dataset assemble(const FeatureMatrix& imputed, const FingerprintBlock* fp,
                               const std::vector<std::size_t>& rows) {
    model::Dataset d;
    d.n_rows = rows.size();
    d.n_cols = imputed.n_cols() + (fp ? fp->width : 0);
    d.column_names = imputed.column_names;
    if (fp) {
        for (std::size_t b = 0; b < fp->width; ++b) {
            char name[16];
            std::snprintf(name, sizeof(name), "fp_%04zu", b);
            d.column_names.push_back(name);
        }
    }
    d.x.reserve(d.n_rows * d.n_cols);
    for (auto r : rows) {
        for (std::size_t c = 0; c < imputed.n_cols(); ++c) d.x.push_back(imputed.at(r, c));
        if (fp) {
            const double* frow = &fp->columns[r * fp->width];
            d.x.insert(d.x.end(), frow, frow + fp->width);
        }
        d.y.push_back(imputed.labels[r]);
    }
    return d;
}

inline model::EnsembleModel train(const ExperimentConfig& cfg, const model::Dataset& data) {
    if (cfg.learner == Learner::Gbdt) return model::train_gbdt(data, cfg.gbdt);
    return model::train_random_forest(data, cfg.rf);
}

}  // namespace detail

/// The paired baseline/multimodal experiment over one bundle.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    auto schema = cohort::FeatureSchema::load(cfg.schema_path);
    StaySet cohort_set = build_cohort(cfg);
    if (cohort_set.stays.empty()) throw DataError("no stays survive the funnel");

    resolver::ResolverCache cache(cfg.cache_path);
    FingerprintBlock fp = fingerprint_columns(cohort_set.stays, cfg, cache);
    cohort_set.funnel.with_resolved_fingerprint = fp.stays_with_bits;
    cohort_set.funnel.resolved_drugs = fp.resolved;
    cohort_set.funnel.unresolved_drugs = fp.unresolved;

    auto features = cohort::build_feature_matrix(cohort_set.stays, schema, cfg.kdigo);
    auto [reduced, dropped] = impute::drop_high_missing(features, cfg.impute_cfg);
    auto imputed = impute::mice(reduced, cfg.impute_cfg);

    const Split split = stratified_split(imputed.values.labels, cfg.train_fraction,
                                         cfg.stratified, cfg.split_seed);
    const std::string shared_hash =
        detail::hash_shared_intermediates(imputed.values, split, cfg);

    ExperimentReport report;
    report.funnel = cohort_set.funnel;
    report.learner_name = cfg.learner == Learner::Gbdt ? "gbdt" : "random_forest";
    report.notes.push_back("fingerprints appended after imputation; never imputed");
    report.notes.push_back(
        "label window ambiguity: onset-after-window stays excluded AND label window = " +
        std::to_string(cfg.kdigo.label_window_hours) + "h");
    for (const auto& d : dropped) {
        report.notes.push_back("dropped column " + d.name + " (missing fraction " +
                               std::to_string(d.missing_fraction) + ")");
    }

    auto evaluate_arm = [&](const FingerprintBlock* block) {
        ArmResult arm;
        auto train_set = detail::assemble(imputed.values, block, split.train);
        auto test_set = detail::assemble(imputed.values, block, split.test);
        auto trained = detail::train(cfg, train_set);
        auto scores = model::predict_proba(trained, test_set);
        arm.eval = metrics::evaluate(scores, test_set.y, cfg.f1_threshold);
        arm.intermediates_hash = shared_hash;
        return arm;
    };
    report.baseline = evaluate_arm(nullptr);
    report.multimodal = evaluate_arm(&fp);
    report.delta_auroc = report.multimodal.eval.auroc - report.baseline.eval.auroc;
    report.delta_auprc = report.multimodal.eval.auprc - report.baseline.eval.auprc;
    report.delta_f1 = report.multimodal.eval.f1 - report.baseline.eval.f1;
    return report;
}

// ---- report rendering -------------------------------------------------------

inline std::string render_report_text(const ExperimentReport& r) {
    char buf[256];
    std::string out;
    out += "nephrofp experiment report\n";
    std::snprintf(buf, sizeof(buf),
                  "funnel: stays=%zu after_exclusions=%zu after_rx_filter=%zu "
                  "stays_with_fingerprint=%zu\n",
                  r.funnel.stays_in, r.funnel.after_exclusions, r.funnel.after_rx_filter,
                  r.funnel.with_resolved_fingerprint);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "exclusions: prior_aki_ckd=%zu under_18=%zu late_onset=%zu "
                  "insufficient_data=%zu\n",
                  r.funnel.exclusions.prior_aki_ckd, r.funnel.exclusions.under_18,
                  r.funnel.exclusions.late_onset, r.funnel.exclusions.insufficient_data);
    out += buf;
    std::snprintf(buf, sizeof(buf), "drugs: resolved=%zu unresolved=%zu\n",
                  r.funnel.resolved_drugs, r.funnel.unresolved_drugs);
    out += buf;
    out += "learner: " + r.learner_name + "\n\n";
    std::snprintf(buf, sizeof(buf), "%-24s %-14s %8s %8s %8s\n", "features", "drug_embedding",
                  "auroc", "auprc", "f1");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-24s %-14s %8.4f %8.4f %8.4f\n", "baseline_cohort", "-",
                  r.baseline.eval.auroc, r.baseline.eval.auprc, r.baseline.eval.f1);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-24s %-14s %8.4f %8.4f %8.4f\n", "multimodal", "ecfp",
                  r.multimodal.eval.auroc, r.multimodal.eval.auprc, r.multimodal.eval.f1);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-24s %-14s %+8.4f %+8.4f %+8.4f\n", "delta", "", r.delta_auroc,
                  r.delta_auprc, r.delta_f1);
    out += buf;
    out += "\nbaseline_intermediates_hash=" + r.baseline.intermediates_hash + "\n";
    out += "multimodal_intermediates_hash=" + r.multimodal.intermediates_hash + "\n";
    for (const auto& n : r.notes) out += "note: " + n + "\n";
    return out;
}

inline nlohmann::json report_to_json(const ExperimentReport& r) {
    auto eval_json = [](const metrics::EvalReport& e) {
        return nlohmann::json{{"auroc", e.auroc},   {"auprc", e.auprc}, {"f1", e.f1},
                              {"threshold", e.threshold}, {"n_pos", e.n_pos}, {"n_neg", e.n_neg}};
    };
    nlohmann::json j;
    j["funnel"] = {{"stays_in", r.funnel.stays_in},
                   {"after_exclusions", r.funnel.after_exclusions},
                   {"after_rx_filter", r.funnel.after_rx_filter},
                   {"stays_with_fingerprint", r.funnel.with_resolved_fingerprint},
                   {"exclusions",
                    {{"prior_aki_ckd", r.funnel.exclusions.prior_aki_ckd},
                     {"under_18", r.funnel.exclusions.under_18},
                     {"late_onset", r.funnel.exclusions.late_onset},
                     {"insufficient_data", r.funnel.exclusions.insufficient_data}}},
                   {"resolved_drugs", r.funnel.resolved_drugs},
                   {"unresolved_drugs", r.funnel.unresolved_drugs}};
    j["learner"] = r.learner_name;
    j["baseline"] = eval_json(r.baseline.eval);
    j["multimodal"] = eval_json(r.multimodal.eval);
    j["delta"] = {{"auroc", r.delta_auroc}, {"auprc", r.delta_auprc}, {"f1", r.delta_f1}};
    j["baseline_intermediates_hash"] = r.baseline.intermediates_hash;
    j["multimodal_intermediates_hash"] = r.multimodal.intermediates_hash;
    j["notes"] = r.notes;
    return j;
}

// ---- stage-wise entry points (the CLI subcommands) --------------------------

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

/// featurize: bundle -> features.csv + features_manifest.json.
inline void stage_featurize(const ExperimentConfig& cfg, const std::string& out_dir) {
    auto schema = cohort::FeatureSchema::load(cfg.schema_path);
    StaySet set = build_cohort(cfg);
    auto features = cohort::build_feature_matrix(set.stays, schema, cfg.kdigo);
    std::filesystem::create_directories(out_dir);
    write_feature_csv(features, out_dir + "/features.csv");
    nlohmann::json manifest;
    manifest["columns"] = columns_manifest(features);
    manifest["label_column"] = kLabelColumn;
    manifest["funnel"] = {{"stays_in", set.funnel.stays_in},
                          {"after_exclusions", set.funnel.after_exclusions},
                          {"after_rx_filter", set.funnel.after_rx_filter},
                          {"prior_aki_ckd", set.funnel.exclusions.prior_aki_ckd},
                          {"under_18", set.funnel.exclusions.under_18},
                          {"late_onset", set.funnel.exclusions.late_onset},
                          {"insufficient_data", set.funnel.exclusions.insufficient_data}};
    manifest["notes"] = {"exclusion reading: onset-after-window stays excluded and the label "
                         "window spans the same horizon"};
    write_text(out_dir + "/features_manifest.json", manifest.dump(2) + "\n");
}

/// resolve: prescriptions -> resolutions cache file (re-runnable).
inline nlohmann::json stage_resolve(const ExperimentConfig& cfg, const std::string& out_dir) {
    StaySet set = build_cohort(cfg);
    auto records = first_day_prescriptions(set.stays);
    std::filesystem::create_directories(out_dir);
    const std::string cache_path =
        cfg.cache_path.empty() ? out_dir + "/resolutions.tsv" : cfg.cache_path;
    resolver::ResolverCache cache(cache_path);
    auto handles = make_resolver(cfg);
    auto batch = resolver::resolve_batch(records, *handles.compounds, *handles.registry, cache,
                                         batch_options(cfg));
    std::map<std::string, std::size_t> by_status;
    for (const auto& res : batch.resolutions) {
        if (res) ++by_status[resolver::to_string(res->status)];
    }
    nlohmann::json j;
    j["records"] = records.size();
    j["unique_records"] = batch.unique_records;
    j["upstream_calls"] = batch.upstream_calls;
    j["failures"] = batch.errors.size();
    j["cache_file"] = cache_path;
    for (const auto& [k, v] : by_status) j["status"][k] = v;
    return j;
}

/// impute: features.csv -> imputed.csv + provenance.csv + manifest.
inline void stage_impute(const ExperimentConfig& cfg, const std::string& features_dir,
                         const std::string& out_dir) {
    auto manifest_json =
        nlohmann::json::parse(csv::read_whole_file(features_dir + "/features_manifest.json"));
    auto kinds = kinds_from_manifest(manifest_json);
    auto features = read_feature_csv(features_dir + "/features.csv", &kinds);
    auto [reduced, dropped] = impute::drop_high_missing(features, cfg.impute_cfg);
    auto imputed = impute::mice(reduced, cfg.impute_cfg);
    std::filesystem::create_directories(out_dir);
    write_feature_csv(imputed.values, out_dir + "/imputed.csv");
    impute::write_provenance_csv(imputed, out_dir + "/provenance.csv");
    nlohmann::json m;
    m["columns"] = columns_manifest(imputed.values);
    m["label_column"] = kLabelColumn;
    nlohmann::json dropped_json = nlohmann::json::array();
    for (const auto& d : dropped) {
        dropped_json.push_back({{"name", d.name}, {"missing_fraction", d.missing_fraction}});
    }
    m["dropped_columns"] = dropped_json;
    m["singular_fallbacks"] = imputed.singular_log;
    write_text(out_dir + "/imputed_manifest.json", m.dump(2) + "\n");
}

namespace detail {

inline FingerprintBlock fingerprint_block_for_matrix(const ExperimentConfig& cfg,
                                                     const FeatureMatrix& matrix) {
    // Rebuild per-stay fingerprints for the matrix's stay order.
    StaySet set = build_cohort(cfg);
    std::map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < matrix.stay_ids.size(); ++i) order[matrix.stay_ids[i]] = i;
    std::vector<cohort::StayRecord> aligned(matrix.stay_ids.size());
    std::size_t found = 0;
    for (auto& stay : set.stays) {
        auto it = order.find(stay.stay_id);
        if (it != order.end()) {
            aligned[it->second] = std::move(stay);
            ++found;
        }
    }
    if (found != matrix.stay_ids.size()) {
        throw DataError("imputed matrix does not match the bundle's surviving stays");
    }
    resolver::ResolverCache cache(cfg.cache_path);
    return fingerprint_columns(aligned, cfg, cache);
}

}  // namespace detail

/// train: imputed.csv [+ fingerprints] -> model.bin + split.json.
inline void stage_train(const ExperimentConfig& cfg, const std::string& imputed_dir,
                        const std::string& out_dir, bool multimodal) {
    auto manifest_json =
        nlohmann::json::parse(csv::read_whole_file(imputed_dir + "/imputed_manifest.json"));
    auto kinds = kinds_from_manifest(manifest_json);
    auto imputed = read_feature_csv(imputed_dir + "/imputed.csv", &kinds);

    std::optional<FingerprintBlock> fp;
    if (multimodal) fp = detail::fingerprint_block_for_matrix(cfg, imputed);

    const Split split =
        stratified_split(imputed.labels, cfg.train_fraction, cfg.stratified, cfg.split_seed);
    auto train_set = detail::assemble(imputed, fp ? &*fp : nullptr, split.train);
    auto trained = detail::train(cfg, train_set);

    std::filesystem::create_directories(out_dir);
    auto bytes = model::serialize(trained);
    std::ofstream out(out_dir + "/model.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    nlohmann::json sj;
    sj["train"] = split.train;
    sj["test"] = split.test;
    sj["seed"] = cfg.split_seed;
    sj["train_fraction"] = cfg.train_fraction;
    sj["stratified"] = cfg.stratified;
    sj["multimodal"] = multimodal;
    write_text(out_dir + "/split.json", sj.dump(2) + "\n");
}

/// evaluate: model.bin + imputed.csv + split.json -> eval report files.
inline metrics::EvalReport stage_evaluate(const ExperimentConfig& cfg,
                                          const std::string& imputed_dir,
                                          const std::string& model_dir,
                                          const std::string& out_dir) {
    auto manifest_json =
        nlohmann::json::parse(csv::read_whole_file(imputed_dir + "/imputed_manifest.json"));
    auto kinds = kinds_from_manifest(manifest_json);
    auto imputed = read_feature_csv(imputed_dir + "/imputed.csv", &kinds);

    auto split_json = nlohmann::json::parse(csv::read_whole_file(model_dir + "/split.json"));
    Split split;
    split.train = split_json.at("train").get<std::vector<std::size_t>>();
    split.test = split_json.at("test").get<std::vector<std::size_t>>();
    const bool multimodal = split_json.at("multimodal").get<bool>();

    std::optional<FingerprintBlock> fp;
    if (multimodal) fp = detail::fingerprint_block_for_matrix(cfg, imputed);

    const std::string bytes_str = csv::read_whole_file(model_dir + "/model.bin");
    std::vector<std::uint8_t> bytes(bytes_str.begin(), bytes_str.end());
    auto trained = model::deserialize(bytes);

    auto test_set = detail::assemble(imputed, fp ? &*fp : nullptr, split.test);
    auto scores = model::predict_proba(trained, test_set);
    auto eval = metrics::evaluate(scores, test_set.y, cfg.f1_threshold);

    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/eval.txt", metrics::to_kv_text(eval));
    nlohmann::json j{{"auroc", eval.auroc},   {"auprc", eval.auprc},       {"f1", eval.f1},
                     {"threshold", eval.threshold}, {"n_pos", eval.n_pos}, {"n_neg", eval.n_neg}};
    write_text(out_dir + "/eval.json", j.dump(2) + "\n");
    return eval;
}

}  // namespace nephrofp::experiment
