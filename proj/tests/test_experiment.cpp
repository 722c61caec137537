#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nephrofp/experiment.hpp"
#include "nephrofp/synth.hpp"
#include "testutil.hpp"

using namespace nephrofp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "nephrofp_experiment" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Shared small bundle: generated once per process.
const std::string& planted_bundle() {
    static std::string dir = [] {
        auto d = scratch("bundle");
        synth::SynthSpec spec;
        spec.n_stays = 1500;
        spec.seed = 42;
        spec.effect_odds = 3.0;
        auto schema = cohort::FeatureSchema::load(testutil::repo_path("config/feature_schema.json"));
        synth::generate_synthetic(spec, schema, d.string());
        return d.string();
    }();
    return dir;
}

experiment::ExperimentConfig small_config(const std::string& data_dir) {
    experiment::ExperimentConfig cfg;
    cfg.data_dir = data_dir;
    cfg.schema_path = testutil::repo_path("config/feature_schema.json");
    cfg.compound_fixture = data_dir + "/fixtures/compounds.tsv";
    cfg.ndc_fixture = data_dir + "/fixtures/ndc.tsv";
    // Regularized enough that the planted drug signal survives to the test
    // split at this small scale.
    cfg.gbdt.n_trees = 80;
    cfg.gbdt.max_depth = 3;
    cfg.gbdt.min_samples_leaf = 60;
    cfg.gbdt.learning_rate = 0.05;
    cfg.impute_cfg.cycles = 4;
    return cfg;
}

}  // namespace

TEST_CASE("planted signal lifts the multimodal arm") {
    auto cfg = small_config(planted_bundle());
    auto report = experiment::run_experiment(cfg);

    CHECK(report.funnel.stays_in == 1500);
    CHECK(report.funnel.after_exclusions < report.funnel.stays_in);
    CHECK(report.funnel.after_rx_filter < report.funnel.after_exclusions);
    CHECK(report.funnel.with_resolved_fingerprint > 0);
    CHECK(report.funnel.unresolved_drugs > 0);  // the catalog's unresolvable entry

    CHECK(report.baseline.eval.auroc > 0.5);
    CHECK(report.delta_auroc > 0.0);
    CHECK(report.multimodal.eval.auroc > report.baseline.eval.auroc);

    // Experiment symmetry: both arms hash the same shared intermediates.
    CHECK(report.baseline.intermediates_hash == report.multimodal.intermediates_hash);
}

TEST_CASE("reports are byte-identical across reruns") {
    auto cfg = small_config(planted_bundle());
    auto a = experiment::run_experiment(cfg);
    auto b = experiment::run_experiment(cfg);
    CHECK(experiment::render_report_text(a) == experiment::render_report_text(b));
    CHECK(experiment::report_to_json(a).dump() == experiment::report_to_json(b).dump());
}

TEST_CASE("stratified split is deterministic, disjoint and stratified") {
    std::vector<int> labels;
    Rng rng(4);
    for (int i = 0; i < 500; ++i) labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
    auto s1 = experiment::stratified_split(labels, 0.8, true, 42);
    auto s2 = experiment::stratified_split(labels, 0.8, true, 42);
    CHECK(s1.train == s2.train);
    CHECK(s1.test == s2.test);
    CHECK(s1.train.size() + s1.test.size() == labels.size());

    std::set<std::size_t> seen(s1.train.begin(), s1.train.end());
    for (auto i : s1.test) CHECK(seen.insert(i).second);

    auto prevalence = [&](const std::vector<std::size_t>& idx) {
        double p = 0;
        for (auto i : idx) p += labels[i];
        return p / static_cast<double>(idx.size());
    };
    CHECK(prevalence(s1.train) == doctest::Approx(prevalence(s1.test)).epsilon(0.08));

    auto s3 = experiment::stratified_split(labels, 0.8, true, 43);
    CHECK(s1.train != s3.train);
}

TEST_CASE("stage composition reproduces the in-memory experiment") {
    auto cfg = small_config(planted_bundle());
    auto staged = scratch("staged");

    experiment::stage_featurize(cfg, staged.string());
    experiment::stage_impute(cfg, staged.string(), staged.string());

    // Baseline arm.
    auto base_dir = staged / "baseline";
    experiment::stage_train(cfg, staged.string(), base_dir.string(), false);
    auto base_eval = experiment::stage_evaluate(cfg, staged.string(), base_dir.string(),
                                                base_dir.string());
    // Multimodal arm.
    auto multi_dir = staged / "multimodal";
    experiment::stage_train(cfg, staged.string(), multi_dir.string(), true);
    auto multi_eval = experiment::stage_evaluate(cfg, staged.string(), multi_dir.string(),
                                                 multi_dir.string());

    auto report = experiment::run_experiment(cfg);
    CHECK(base_eval.auroc == report.baseline.eval.auroc);    // exact: lossless round-trips
    CHECK(base_eval.auprc == report.baseline.eval.auprc);
    CHECK(base_eval.f1 == report.baseline.eval.f1);
    CHECK(multi_eval.auroc == report.multimodal.eval.auroc);
    CHECK(multi_eval.auprc == report.multimodal.eval.auprc);
    CHECK(multi_eval.f1 == report.multimodal.eval.f1);
}

TEST_CASE("resolve stage is resumable with zero upstream calls") {
    auto cfg = small_config(planted_bundle());
    auto out = scratch("resolve");
    cfg.cache_path = (out / "resolutions.tsv").string();
    auto first = experiment::stage_resolve(cfg, out.string());
    CHECK(first["upstream_calls"].get<std::size_t>() > 0);
    auto second = experiment::stage_resolve(cfg, out.string());
    CHECK(second["upstream_calls"].get<std::size_t>() == 0);
    CHECK(second["failures"].get<std::size_t>() == 0);
}

TEST_CASE("config file drives the experiment") {
    auto dir = scratch("config");
    const std::string path = (dir / "exp.ini").string();
    {
        std::ofstream out(path);
        out << "[data]\n"
            << "dir = " << planted_bundle() << "\n"
            << "schema = " << testutil::repo_path("config/feature_schema.json") << "\n"
            << "[resolver]\n"
            << "mode = fixture\n"
            << "compound_fixture = " << planted_bundle() << "/fixtures/compounds.tsv\n"
            << "ndc_fixture = " << planted_bundle() << "/fixtures/ndc.tsv\n"
            << "[fingerprint]\n"
            << "radius = 2\n"
            << "width = 512\n"
            << "aggregation = or\n"
            << "[model]\n"
            << "learner = gbdt\n"
            << "n_trees = 30  ; keep the unit test quick\n"
            << "max_depth = 4\n"
            << "[split]\n"
            << "train_fraction = 0.75\n"
            << "seed = 9\n";
    }
    auto file_cfg = config::Config::load(path);
    auto cfg = experiment::config_from_file(file_cfg);
    CHECK(cfg.fp_width == 512);
    CHECK(cfg.gbdt.n_trees == 30);
    CHECK(cfg.train_fraction == 0.75);
    CHECK(cfg.split_seed == 9);
    auto report = experiment::run_experiment(cfg);
    CHECK(report.baseline.eval.auroc > 0.5);
}

TEST_CASE("config errors are reported") {
    auto dir = scratch("badconfig");
    const std::string path = (dir / "bad.ini").string();
    {
        std::ofstream out(path);
        out << "[model]\nlearner = catboost\n";
    }
    auto file_cfg = config::Config::load(path);
    CHECK_THROWS_AS(experiment::config_from_file(file_cfg), experiment::ConfigError);

    experiment::ExperimentConfig cfg;
    cfg.train_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), experiment::ConfigError);

    CHECK_THROWS_AS(config::Config::load((dir / "missing.ini").string()), config::ConfigError);
    {
        std::ofstream out(path);
        out << "key_without_section_or_equals\n";
    }
    CHECK_THROWS_AS(config::Config::load(path), config::ConfigError);
}

TEST_CASE("sum-clipped aggregation is accepted and bounded") {
    auto cfg = small_config(planted_bundle());
    cfg.fp_aggregation = experiment::FpAggregation::SumClipped;
    cfg.gbdt.n_trees = 10;
    auto report = experiment::run_experiment(cfg);
    CHECK(report.multimodal.eval.auroc > 0.5);
}
