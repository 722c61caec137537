// nephrofp: AKI-prediction pipeline over EHR-shaped CSV bundles.
//
// Subcommands: synth | resolve | featurize | impute | train | evaluate |
// experiment. Each consumes the documented config file; --out selects the
// working directory; --seed overrides the generator/split seed. Exit codes:
// 0 success, 2 configuration error, 3 data or pipeline error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nephrofp/config.hpp"
#include "nephrofp/experiment.hpp"
#include "nephrofp/synth.hpp"

namespace {

using nephrofp::config::Config;

nephrofp::synth::SynthSpec synth_spec_from(const Config& c) {
    nephrofp::synth::SynthSpec spec;
    spec.n_stays = static_cast<std::size_t>(c.get_long("synth.n_stays", 5000));
    spec.prevalence = c.get_double("synth.prevalence", spec.prevalence);
    spec.effect_odds = c.get_double("synth.effect_odds", spec.effect_odds);
    spec.seed = static_cast<std::uint64_t>(c.get_long("synth.seed", 42));
    spec.frac_prior = c.get_double("synth.frac_prior", spec.frac_prior);
    spec.frac_minor = c.get_double("synth.frac_minor", spec.frac_minor);
    spec.frac_late_onset = c.get_double("synth.frac_late_onset", spec.frac_late_onset);
    spec.frac_late_rx = c.get_double("synth.frac_late_rx", spec.frac_late_rx);
    spec.frac_no_label_data = c.get_double("synth.frac_no_label_data", spec.frac_no_label_data);
    // missingness = "signal:rate,signal:rate"
    const std::string miss = c.get("synth.missingness");
    if (!miss.empty()) {
        spec.missingness.clear();
        std::size_t start = 0;
        while (start < miss.size()) {
            auto comma = miss.find(',', start);
            const std::string item = miss.substr(start, comma - start);
            const auto colon = item.find(':');
            if (colon == std::string::npos) {
                throw nephrofp::config::ConfigError("bad synth.missingness entry: " + item);
            }
            spec.missingness[item.substr(0, colon)] = std::stod(item.substr(colon + 1));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return spec;
}

int dispatch(const std::string& command, const std::string& config_path,
             std::optional<long> seed, std::string out_dir) {
    auto file_cfg = Config::load(config_path);
    if (out_dir.empty()) out_dir = file_cfg.get("data.out", "runs/out");

    if (command == "synth") {
        auto spec = synth_spec_from(file_cfg);
        if (seed) spec.seed = static_cast<std::uint64_t>(*seed);
        auto schema = nephrofp::cohort::FeatureSchema::load(
            file_cfg.get("data.schema", "config/feature_schema.json"));
        auto truth = nephrofp::synth::generate_synthetic(spec, schema, out_dir);
        std::cout << "wrote synthetic bundle to " << out_dir << "\n"
                  << "realized prevalence (eligible stays): "
                  << truth["realized_prevalence_eligible"] << "\n";
        return 0;
    }

    auto cfg = nephrofp::experiment::config_from_file(file_cfg);
    if (seed) {
        cfg.split_seed = static_cast<std::uint64_t>(*seed);
        cfg.gbdt.seed = static_cast<std::uint64_t>(*seed);
        cfg.rf.seed = static_cast<std::uint64_t>(*seed);
    }
    cfg.validate();

    if (command == "resolve") {
        auto stats = nephrofp::experiment::stage_resolve(cfg, out_dir);
        std::cout << stats.dump(2) << "\n";
        return 0;
    }
    if (command == "featurize") {
        nephrofp::experiment::stage_featurize(cfg, out_dir);
        std::cout << "wrote " << out_dir << "/features.csv and features_manifest.json\n";
        return 0;
    }
    if (command == "impute") {
        nephrofp::experiment::stage_impute(cfg, out_dir, out_dir);
        std::cout << "wrote " << out_dir << "/imputed.csv, provenance.csv, imputed_manifest.json\n";
        return 0;
    }
    if (command == "train") {
        const bool multimodal = file_cfg.get_bool("model.multimodal", false);
        const std::string model_dir = out_dir + (multimodal ? "/model-multimodal" : "/model-baseline");
        nephrofp::experiment::stage_train(cfg, out_dir, model_dir, multimodal);
        std::cout << "wrote " << model_dir << "/model.bin and split.json\n";
        return 0;
    }
    if (command == "evaluate") {
        const bool multimodal = file_cfg.get_bool("model.multimodal", false);
        const std::string model_dir = out_dir + (multimodal ? "/model-multimodal" : "/model-baseline");
        auto eval = nephrofp::experiment::stage_evaluate(cfg, out_dir, model_dir, model_dir);
        std::cout << nephrofp::metrics::to_kv_text(eval);
        return 0;
    }
    if (command == "experiment") {
        auto report = nephrofp::experiment::run_experiment(cfg);
        const std::string text = nephrofp::experiment::render_report_text(report);
        std::filesystem::create_directories(out_dir);
        nephrofp::experiment::write_text(out_dir + "/report.txt", text);
        nephrofp::experiment::write_text(out_dir + "/report.json",
                                         nephrofp::experiment::report_to_json(report).dump(2) +
                                             "\n");
        std::cout << text;
        return 0;
    }
    throw nephrofp::config::ConfigError("unknown subcommand " + command);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal AKI prediction pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<long> seed;

    for (const auto* name : {"synth", "resolve", "featurize", "impute", "train", "evaluate",
                             "experiment"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "configuration file")->required();
        sub->add_option("--seed", seed, "override the generator/split seed");
        sub->add_option("--out", out_dir, "working directory for stage files");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return dispatch(app.get_subcommands().front()->get_name(), config_path, seed, out_dir);
    } catch (const nephrofp::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nephrofp::experiment::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nephrofp::synth::SpecError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
