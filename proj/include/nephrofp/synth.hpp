#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohort.hpp"
#include "csv.hpp"
#include "rng.hpp"
#include "timeutil.hpp"

// Synthetic EHR bundle generator with a planted drug signal. Stays are
// sampled from a one-factor linear-Gaussian model over the schema's signals;
// the AKI label follows a logistic model over a sparse subset of cohort
// features plus an additive log(effect_odds) term whenever a prescribed drug
// carries the designated nephrotoxic substructure (a sulfonamide group,
// S(=O)(=O)N, shared by all flagged catalog entries so their fingerprints
// overlap on its bits). Labels are realized as creatinine series that the
// cohort labeler recovers exactly: positives get a 0.55 mg/dL rise inside a
// 48h span at an onset inside the label window, negatives stay flat.
//
// The bundle is byte-identical for a fixed spec: fixed base admission time,
// ordered iteration, hand-rolled RNG transforms.

namespace nephrofp::synth {

struct SpecError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct CatalogDrug {
    std::string display_name;   // appears as the free-text, decorated drug name
    std::string generic_name;   // empty when the generic route is unavailable
    std::string ndc;            // empty when no NDC is listed
    std::string smiles;
    bool nephrotoxic = false;
    enum class Route { Generic, Name, Ndc, Unresolvable } route = Route::Generic;
};

inline std::vector<CatalogDrug> default_catalog() {
    using R = CatalogDrug::Route;
    return {
        // Flagged: all carry S(=O)(=O)N.
        {"Nephrotex", "sulfanilazole", "11111111101", "NS(=O)(=O)c1ccc(N)cc1", true, R::Generic},
        {"Renosulf", "", "", "CS(=O)(=O)NC1CCCCC1", true, R::Name},
        {"Glomerin", "", "11111111103", "NS(=O)(=O)c1ccc(Cl)cc1", true, R::Ndc},
        {"Tubulex", "ethasulfamide", "", "CCS(=O)(=O)Nc1ccccc1", true, R::Generic},
        {"Medullin", "", "", "NS(=O)(=O)C1CC1", true, R::Name},
        // Unflagged everyday drugs.
        {"Aspirin", "aspirin", "22222222201", "CC(=O)Oc1ccccc1C(=O)O", false, R::Generic},
        {"Paracet", "acetaminophen", "", "CC(=O)Nc1ccc(O)cc1", false, R::Generic},
        {"Ibuprofen", "", "", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", false, R::Name},
        {"Metformin", "metformin", "", "CN(C)C(=N)NC(=N)N", false, R::Generic},
        {"Cafcit", "", "22222222205", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", false, R::Ndc},
        {"Lidocaine", "lidocaine", "", "CCN(CC)CC(=O)Nc1c(C)cccc1C", false, R::Generic},
        {"Atenolol", "atenolol", "", "CC(C)NCC(O)COc1ccc(CC(N)=O)cc1", false, R::Generic},
        {"Nicotrol", "", "", "CN1CCC[C@H]1c1cccnc1", false, R::Name},
        {"Mysteriol", "", "", "OCC(O)CO", false, R::Unresolvable},
    };
}

inline std::map<std::string, double> default_missingness() {
    return {
        {"spo2", 0.08},     {"lactate", 0.12},  {"albumin", 0.15}, {"ph", 0.10},
        {"pao2", 0.28},     {"paco2", 0.24},    {"bilirubin", 0.10}, {"magnesium", 0.08},
        {"phosphate", 0.08}, {"height_cm", 0.10}, {"bmi", 0.12},   {"calcium", 0.05},
        {"temperature_c", 0.05}, {"gcs", 0.06},
    };
}

struct SynthSpec {
    std::size_t n_stays = 5000;
    double prevalence = 0.25;
    double effect_odds = 3.0;  // 1.0 = null control (no planted drug signal)
    std::uint64_t seed = 42;
    std::vector<CatalogDrug> catalog = default_catalog();
    std::map<std::string, double> missingness = default_missingness();
    // Planted fractions exercising the exclusion funnel.
    double frac_prior = 0.03;
    double frac_minor = 0.03;
    double frac_late_onset = 0.03;
    double frac_late_rx = 0.03;
    double frac_no_label_data = 0.01;

    void validate() const {
        if (n_stays < 10) throw SpecError("n_stays must be at least 10");
        if (!(prevalence > 0.0 && prevalence < 1.0)) {
            throw SpecError("prevalence must lie in (0, 1)");
        }
        if (!(effect_odds > 0.0)) throw SpecError("effect_odds must be positive");
        if (catalog.empty()) throw SpecError("drug catalog is empty");
        bool any_flagged = false;
        for (const auto& d : catalog) any_flagged = any_flagged || d.nephrotoxic;
        if (effect_odds != 1.0 && !any_flagged) {
            throw SpecError("planted-signal mode needs a nephrotoxic catalog entry");
        }
        for (const auto& [sig, rate] : missingness) {
            if (rate < 0.0 || rate >= 1.0) throw SpecError("missingness rate out of range for " + sig);
        }
    }
};

namespace detail {

struct SignalModel {
    double mu, sigma, lo, hi;
};

inline const std::map<std::string, SignalModel>& signal_models() {
    static const std::map<std::string, SignalModel> table = {
        {"heart_rate", {85, 15, 30, 190}},   {"sbp", {120, 20, 60, 230}},
        {"dbp", {65, 12, 30, 140}},          {"mbp", {82, 15, 40, 160}},
        {"resp_rate", {18, 4, 6, 45}},       {"temperature_c", {37.0, 0.6, 34, 41}},
        {"spo2", {96, 2.5, 70, 100}},        {"gcs", {12, 2.5, 3, 15}},
        {"creatinine", {0.9, 0.25, 0.4, 2.2}}, {"bun", {20, 7, 4, 80}},
        {"sodium", {139, 4, 120, 160}},      {"potassium", {4.1, 0.5, 2.5, 7}},
        {"chloride", {103, 5, 85, 125}},     {"bicarbonate", {24, 4, 10, 40}},
        {"glucose", {130, 35, 50, 400}},     {"hematocrit", {33, 5, 18, 55}},
        {"hemoglobin", {11, 1.8, 6, 18}},    {"platelets", {220, 70, 30, 600}},
        {"wbc", {10, 3.5, 2, 40}},           {"lactate", {1.8, 0.9, 0.4, 12}},
        {"ph", {7.38, 0.06, 7.0, 7.6}},      {"pao2", {120, 40, 40, 400}},
        {"paco2", {40, 8, 20, 90}},          {"albumin", {3.2, 0.6, 1.2, 5}},
        {"bilirubin", {0.9, 0.5, 0.1, 12}},  {"calcium", {8.6, 0.7, 6, 12}},
        {"magnesium", {2.0, 0.3, 1.0, 4}},   {"phosphate", {3.5, 0.8, 1, 9}},
    };
    return table;
}

inline SignalModel model_for(const std::string& signal) {
    auto it = signal_models().find(signal);
    if (it != signal_models().end()) return it->second;
    return {50, 10, 0, 100};
}

// Label-model coefficients on z-scored base values. Deliberately small: the
// additive log(effect_odds) drug term has to carry a dominant share of the
// label variance, otherwise the sigmoid noise ceiling caps the separation a
// multimodal model can add over the baseline.
inline const std::vector<std::pair<std::string, double>>& label_coefficients() {
    static const std::vector<std::pair<std::string, double>> coeffs = {
        {"lactate", 0.22}, {"creatinine", 0.18}, {"bun", 0.12},
        {"age_years", 0.12}, {"sbp", -0.12}, {"ventilated", 0.10},
    };
    return coeffs;
}

inline double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// Decorated free-text prescription names, exercising the normalizer.
inline std::string decorate_name(const std::string& base, Rng& rng) {
    static const char* doses[] = {"10mg", "25mg", "50mg", "100mg", "250mg", "500mg"};
    static const char* forms[] = {"Tab", "Cap", "IV", "PO", "Solution"};
    std::string out = base;
    out += ' ';
    out += doses[rng.below(6)];
    if (rng.bernoulli(0.6)) {
        out += ' ';
        out += forms[rng.below(5)];
    }
    return out;
}

}  // namespace detail

struct GeneratedStay {
    std::string stay_id;
    bool eligible = false;  // survives all planted exclusions
    int label = -1;         // only for labeled stays
    bool flagged_drug = false;
};

/// Writes the EHR CSV bundle, offline resolver fixtures, and the
/// ground-truth manifest into out_dir. Returns the manifest.
inline nlohmann::json generate_synthetic(const SynthSpec& spec,
                                         const cohort::FeatureSchema& schema,
                                         const std::string& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/fixtures");

    Rng rng(spec.seed);
    const std::int64_t base_admit = parse_iso8601("2019-01-01T00:00:00");
    auto vitals = schema.signals("vital");
    auto labs_list = schema.signals("lab");

    // Per-stay draws happen in one fixed order so the bundle is reproducible.
    struct StayDraw {
        std::string id;
        std::int64_t admit;
        double age = 0;
        bool male = false, emergency = false, vent = false;
        double weight = 0, height = 0, bmi = 0;
        std::map<std::string, double> base_value;   // signal -> sampled value
        std::set<std::string> missing_signals;
        std::vector<std::size_t> drugs;             // catalog indices
        bool flagged = false;
        enum class Kind { Eligible, Prior, Minor, LateOnset, NoLabelData, LateRx } kind;
        double linear = 0;  // label-model score without intercept/effect
        int label = 0;
        double onset = 0;   // creatinine rise time, when planted
    };

    std::vector<StayDraw> stays(spec.n_stays);
    const auto& coeffs = detail::label_coefficients();

    for (std::size_t i = 0; i < spec.n_stays; ++i) {
        StayDraw& s = stays[i];
        s.id = "synth" + std::to_string(i + 1);
        s.admit = base_admit + static_cast<std::int64_t>(i) * 3600;

        const double kind_roll = rng.uniform();
        if (kind_roll < spec.frac_prior) s.kind = StayDraw::Kind::Prior;
        else if (kind_roll < spec.frac_prior + spec.frac_minor) s.kind = StayDraw::Kind::Minor;
        else if (kind_roll < spec.frac_prior + spec.frac_minor + spec.frac_late_onset)
            s.kind = StayDraw::Kind::LateOnset;
        else if (kind_roll <
                 spec.frac_prior + spec.frac_minor + spec.frac_late_onset + spec.frac_no_label_data)
            s.kind = StayDraw::Kind::NoLabelData;
        else if (kind_roll < spec.frac_prior + spec.frac_minor + spec.frac_late_onset +
                                 spec.frac_no_label_data + spec.frac_late_rx)
            s.kind = StayDraw::Kind::LateRx;
        else s.kind = StayDraw::Kind::Eligible;

        s.age = s.kind == StayDraw::Kind::Minor
                    ? rng.uniform(14.0, 17.5)
                    : detail::clampd(rng.normal(62.0, 15.0), 18.5, 95.0);
        s.male = rng.bernoulli(0.55);
        s.emergency = rng.bernoulli(0.6);
        s.vent = rng.bernoulli(0.3);
        s.weight = rng.uniform(55.0, 110.0);
        s.height = detail::clampd(rng.normal(170.0, 10.0), 145.0, 200.0);
        s.bmi = s.weight / ((s.height / 100.0) * (s.height / 100.0));

        // One-factor correlation: shared severity plus independent noise.
        const double severity = rng.normal();
        auto sample_signal = [&](const std::string& sig) {
            const auto m = detail::model_for(sig);
            const double z = 0.45 * severity + std::sqrt(1.0 - 0.45 * 0.45) * rng.normal();
            return detail::clampd(m.mu + m.sigma * z, m.lo, m.hi);
        };
        for (const auto& v : vitals) s.base_value[v] = sample_signal(v);
        for (const auto& l : labs_list) s.base_value[l] = sample_signal(l);

        for (const auto& [sig, rate] : spec.missingness) {
            if (rng.bernoulli(rate)) s.missing_signals.insert(sig);
        }

        // Drugs: one to three distinct catalog entries, uniform.
        const std::size_t k = 1 + rng.below(3);
        std::vector<std::size_t> pool(spec.catalog.size());
        for (std::size_t j = 0; j < pool.size(); ++j) pool[j] = j;
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t pick = j + rng.below(pool.size() - j);
            std::swap(pool[j], pool[pick]);
        }
        pool.resize(k);
        s.drugs = pool;
        for (auto d : s.drugs) s.flagged = s.flagged || spec.catalog[d].nephrotoxic;

        double linear = 0.0;
        for (const auto& [sig, beta] : coeffs) {
            if (sig == "age_years") {
                linear += beta * (s.age - 62.0) / 15.0;
            } else if (sig == "ventilated") {
                linear += beta * (s.vent ? 1.0 : 0.0);
            } else {
                const auto m = detail::model_for(sig);
                linear += beta * (s.base_value[sig] - m.mu) / m.sigma;
            }
        }
        s.linear = linear;
    }

    // Intercept by bisection so realized prevalence over the surviving cohort
    // (eligible stays) hits the target.
    const double log_effect = std::log(spec.effect_odds);
    std::vector<double> eligible_scores;
    for (const auto& s : stays) {
        if (s.kind == StayDraw::Kind::Eligible) {
            eligible_scores.push_back(s.linear + (s.flagged ? log_effect : 0.0));
        }
    }
    if (eligible_scores.empty()) throw SpecError("no eligible stays; lower the planted fractions");
    auto mean_sigmoid = [&](double c) {
        double acc = 0.0;
        for (double v : eligible_scores) acc += 1.0 / (1.0 + std::exp(-(v + c)));
        return acc / static_cast<double>(eligible_scores.size());
    };
    double lo = -20.0, hi = 20.0;
    for (int iter = 0; iter < 100; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (mean_sigmoid(mid) < spec.prevalence ? lo : hi) = mid;
    }
    const double intercept = 0.5 * (lo + hi);

    // Labels and creatinine onset times.
    std::size_t realized_pos = 0, n_eligible = 0, n_flagged_eligible = 0;
    for (auto& s : stays) {
        const bool labelable = s.kind == StayDraw::Kind::Eligible || s.kind == StayDraw::Kind::LateRx;
        if (labelable) {
            const double p =
                1.0 / (1.0 + std::exp(-(s.linear + intercept + (s.flagged ? log_effect : 0.0))));
            s.label = rng.bernoulli(p) ? 1 : 0;
            if (s.label) s.onset = rng.uniform(30.0, 62.0);
        } else {
            s.label = 0;
            if (s.kind == StayDraw::Kind::LateOnset) {
                s.onset = rng.uniform(76.0, 96.0);  // outside the 72h window
            }
        }
        if (s.kind == StayDraw::Kind::Eligible) {
            ++n_eligible;
            realized_pos += static_cast<std::size_t>(s.label);
            n_flagged_eligible += s.flagged ? 1 : 0;
        }
    }

    // ---- write the bundle -----------------------------------------------

    auto iso = [&](const StayDraw& s, double hours) {
        return format_iso8601(s.admit + static_cast<std::int64_t>(std::llround(hours * 3600.0)));
    };
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };

    std::vector<std::vector<std::string>> stays_rows, demo_rows, chart_rows, lab_rows, out_rows,
        vent_rows, diag_rows, rx_rows;
    for (auto& s : stays) {
        stays_rows.push_back({s.id, "pat" + s.id.substr(5), format_iso8601(s.admit), num(s.age)});

        auto demo_cell = [&](const std::string& sig, double v) {
            return s.missing_signals.count(sig) ? std::string{} : num(v);
        };
        demo_rows.push_back({s.id, s.male ? "1" : "0", demo_cell("weight_kg", s.weight),
                             demo_cell("height_cm", s.height), demo_cell("bmi", s.bmi),
                             s.emergency ? "1" : "0"});

        for (const auto& sig : vitals) {
            if (s.missing_signals.count(sig)) continue;
            const double v = s.base_value[sig];
            const double delta = 0.05 * detail::model_for(sig).sigma + 1e-3;
            chart_rows.push_back({s.id, iso(s, 2.0), sig, num(v - delta)});
            chart_rows.push_back({s.id, iso(s, 8.0), sig, num(v)});
            chart_rows.push_back({s.id, iso(s, 20.0), sig, num(v + delta)});
        }
        for (const auto& sig : labs_list) {
            if (sig == "creatinine") continue;  // handled with the label plant below
            if (s.missing_signals.count(sig)) continue;
            const double v = s.base_value[sig];
            const double delta = 0.05 * detail::model_for(sig).sigma + 1e-3;
            lab_rows.push_back({s.id, iso(s, 4.0), sig, num(v - delta)});
            lab_rows.push_back({s.id, iso(s, 16.0), sig, num(v + delta)});
        }

        // Creatinine: first-day baseline (subject to missingness), then the
        // series that realizes the label.
        const double b = s.base_value.count("creatinine") ? s.base_value["creatinine"] : 0.9;
        if (s.kind != StayDraw::Kind::NoLabelData) {
            if (!s.missing_signals.count("creatinine")) {
                lab_rows.push_back({s.id, iso(s, 4.0), "creatinine", num(b)});
                lab_rows.push_back({s.id, iso(s, 16.0), "creatinine", num(b)});
            }
            if (s.label == 1 || s.kind == StayDraw::Kind::LateOnset) {
                const double rise_at = s.onset;
                const double pre_at = std::max(rise_at - 24.0, 24.5);
                lab_rows.push_back({s.id, iso(s, pre_at), "creatinine", num(b)});
                lab_rows.push_back({s.id, iso(s, rise_at), "creatinine", num(b + 0.55)});
            } else {
                lab_rows.push_back(
                    {s.id, iso(s, 40.0), "creatinine", num(b + rng.uniform(-0.04, 0.04))});
            }
        }

        // Urine: adequate hourly output for the first day keeps the urine
        // criterion quiet; volume scales with weight.
        if (s.kind != StayDraw::Kind::NoLabelData && !s.missing_signals.count("urine")) {
            const double rate = rng.uniform(0.8, 1.5);  // mL/kg/h
            for (int h = 0; h < 24; ++h) {
                out_rows.push_back({s.id, iso(s, h + 0.5), num(rate * s.weight)});
            }
        }

        if (s.vent) vent_rows.push_back({s.id, iso(s, 2.0), iso(s, 30.0)});
        if (s.kind == StayDraw::Kind::Prior) {
            diag_rows.push_back({s.id, rng.bernoulli(0.5) ? "aki" : "ckd", "1"});
        }

        const double rx_base = s.kind == StayDraw::Kind::LateRx ? 26.0 : 0.5;
        const double rx_span = s.kind == StayDraw::Kind::LateRx ? 4.0 : 23.0;
        for (auto d : s.drugs) {
            const auto& drug = spec.catalog[d];
            rx_rows.push_back({s.id, iso(s, rx_base + rng.uniform(0.0, rx_span)),
                               detail::decorate_name(drug.display_name, rng), drug.generic_name,
                               drug.ndc});
        }
    }

    csv::write_file(out_dir + "/stays.csv", {"stay_id", "patient_id", "admit_time", "age_years"},
                    stays_rows);
    csv::write_file(out_dir + "/demographics.csv",
                    {"stay_id", "is_male", "weight_kg", "height_cm", "bmi", "is_emergency"},
                    demo_rows);
    csv::write_file(out_dir + "/chartevents.csv", {"stay_id", "time", "signal", "value"},
                    chart_rows);
    csv::write_file(out_dir + "/labevents.csv", {"stay_id", "time", "signal", "value"}, lab_rows);
    csv::write_file(out_dir + "/outputevents.csv", {"stay_id", "time", "volume_ml"}, out_rows);
    csv::write_file(out_dir + "/ventilation.csv", {"stay_id", "start_time", "end_time"},
                    vent_rows);
    csv::write_file(out_dir + "/diagnoses.csv", {"stay_id", "condition", "prior"}, diag_rows);
    csv::write_file(out_dir + "/prescriptions.csv",
                    {"stay_id", "start_time", "drug_name", "generic_name", "ndc"}, rx_rows);

    // Offline resolver fixtures; fixed timestamps keep the bundle
    // byte-identical.
    {
        std::ofstream compounds(out_dir + "/fixtures/compounds.tsv");
        std::ofstream ndc(out_dir + "/fixtures/ndc.tsv");
        const std::string ts = "2019-01-01T00:00:00";
        for (const auto& d : spec.catalog) {
            using R = CatalogDrug::Route;
            switch (d.route) {
                case R::Generic:
                    compounds << resolver::normalize_name(d.generic_name) << "\thit\t" << d.smiles
                              << '\t' << ts << '\n';
                    break;
                case R::Name:
                    compounds << resolver::normalize_name(d.display_name) << "\thit\t" << d.smiles
                              << '\t' << ts << '\n';
                    break;
                case R::Ndc: {
                    const std::string brand = "brand " + resolver::normalize_name(d.display_name);
                    ndc << "ndc:" << d.ndc << "\tndc-hit\t" << brand << '\t' << ts << '\n';
                    compounds << resolver::normalize_name(brand) << "\thit\t" << d.smiles << '\t'
                              << ts << '\n';
                    break;
                }
                case R::Unresolvable:
                    break;
            }
        }
    }

    nlohmann::json truth;
    truth["seed"] = spec.seed;
    truth["n_stays"] = spec.n_stays;
    truth["prevalence_target"] = spec.prevalence;
    truth["realized_prevalence_eligible"] =
        static_cast<double>(realized_pos) / static_cast<double>(n_eligible);
    truth["effect_odds"] = spec.effect_odds;
    truth["intercept"] = intercept;
    nlohmann::json coeffs_json;
    for (const auto& [sig, beta] : coeffs) coeffs_json[sig] = beta;
    truth["coefficients"] = coeffs_json;
    truth["nephrotoxic_substructure"] = "S(=O)(=O)N";
    nlohmann::json flagged = nlohmann::json::array();
    for (const auto& d : spec.catalog) {
        if (d.nephrotoxic) flagged.push_back(d.display_name);
    }
    truth["flagged_drugs"] = flagged;
    truth["n_eligible"] = n_eligible;
    truth["flagged_fraction_eligible"] =
        static_cast<double>(n_flagged_eligible) / static_cast<double>(n_eligible);
    nlohmann::json planted;
    planted["prior"] = spec.frac_prior;
    planted["minor"] = spec.frac_minor;
    planted["late_onset"] = spec.frac_late_onset;
    planted["no_label_data"] = spec.frac_no_label_data;
    planted["late_rx"] = spec.frac_late_rx;
    truth["planted_fractions"] = planted;

    std::ofstream truth_out(out_dir + "/truth.json");
    truth_out << truth.dump(2) << '\n';
    return truth;
}

}  // namespace nephrofp::synth
