#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "feature_matrix.hpp"
#include "resolver.hpp"
#include "timeutil.hpp"

// EHR-shaped cohort construction: CSV ingestion, exclusion criteria, the
// creatinine/urine outcome label, and first-24h feature extraction against a
// declarative schema.
//
// Input bundle: eight CSV files in one directory, ISO-8601 timestamps,
// header rows mandatory:
//   stays.csv         stay_id,patient_id,admit_time,age_years
//   demographics.csv  stay_id,is_male,weight_kg,height_cm,bmi,is_emergency
//   chartevents.csv   stay_id,time,signal,value
//   labevents.csv     stay_id,time,signal,value
//   outputevents.csv  stay_id,time,volume_ml
//   ventilation.csv   stay_id,start_time,end_time
//   diagnoses.csv     stay_id,condition,prior
//   prescriptions.csv stay_id,start_time,drug_name,generic_name,ndc
// Events stamped before admission are ignored; empty cells mean missing.

namespace nephrofp::cohort {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KdigoConfig {
    double scr_abs_increase = 0.3;      // mg/dL rise within any 48h span
    double scr_rel_increase = 1.5;      // ratio against the first in-stay value
    double urine_rate_threshold = 0.5;  // mL/kg/h
    int urine_sustained_hours = 6;
    int label_window_hours = 72;

    void validate() const {
        if (scr_abs_increase <= 0 || scr_rel_increase <= 0 || urine_rate_threshold <= 0 ||
            urine_sustained_hours <= 0 || label_window_hours <= 0) {
            throw std::invalid_argument("KDIGO thresholds must be positive");
        }
    }
};

struct TimedValue {
    double hours;  // since admission
    double value;
};

struct StayRecord {
    std::string stay_id;
    std::string patient_id;
    std::int64_t admit_epoch = 0;
    double age_years = 0.0;
    bool prior_aki_or_ckd = false;
    std::map<std::string, double> demographics;  // signal -> value (absent = missing)
    std::map<std::string, std::vector<TimedValue>> vitals;
    std::map<std::string, std::vector<TimedValue>> labs;
    std::vector<TimedValue> urine;                        // (hours, volume ml)
    std::vector<std::pair<double, double>> vent_hours;    // [start, end)
    std::vector<std::pair<resolver::DrugRecord, double>> prescriptions;  // (record, start hours)

    double weight_kg() const {
        auto it = demographics.find("weight_kg");
        return it == demographics.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
    }
};

struct AkiLabel {
    int label = 0;
    std::optional<double> onset_hours;  // earliest qualifying time, any horizon
};

/// KDIGO-style label: positive when, within the label window, creatinine
/// rises by >= scr_abs_increase inside any 48h span or reaches
/// >= scr_rel_increase times the first in-stay value, or urine output stays
/// under urine_rate_threshold mL/kg/h for at least the sustained number of
/// hourly buckets. Throws InsufficientData when neither signal is usable.
inline AkiLabel label_aki(const StayRecord& stay, const KdigoConfig& cfg) {
    cfg.validate();
    std::optional<double> onset;

    auto creat_it = stay.labs.find("creatinine");
    const bool has_creatinine = creat_it != stay.labs.end() && !creat_it->second.empty();
    if (has_creatinine) {
        std::vector<TimedValue> series = creat_it->second;
        std::stable_sort(series.begin(), series.end(),
                         [](const TimedValue& a, const TimedValue& b) { return a.hours < b.hours; });
        const double baseline = series.front().value;
        for (std::size_t j = 0; j < series.size() && !onset; ++j) {
            if (baseline > 0 && series[j].value >= cfg.scr_rel_increase * baseline) {
                onset = series[j].hours;
                break;
            }
            for (std::size_t i = 0; i < j; ++i) {
                if (series[j].hours - series[i].hours <= 48.0 &&
                    series[j].value - series[i].value >= cfg.scr_abs_increase) {
                    onset = series[j].hours;
                    break;
                }
            }
        }
    }

    const double weight = stay.weight_kg();
    const bool urine_usable = !stay.urine.empty() && std::isfinite(weight) && weight > 0;
    if (urine_usable) {
        std::vector<TimedValue> events = stay.urine;
        std::stable_sort(events.begin(), events.end(),
                         [](const TimedValue& a, const TimedValue& b) { return a.hours < b.hours; });
        // Hourly buckets from the first to the last recorded output; hours
        // with no record inside that span count as zero output.
        const int first_bucket = static_cast<int>(std::floor(events.front().hours));
        const int last_bucket = static_cast<int>(std::floor(events.back().hours));
        std::vector<double> volume(static_cast<std::size_t>(last_bucket - first_bucket + 1), 0.0);
        for (const auto& e : events) {
            volume[static_cast<std::size_t>(static_cast<int>(std::floor(e.hours)) - first_bucket)] +=
                e.value;
        }
        int run = 0;
        for (std::size_t b = 0; b < volume.size(); ++b) {
            if (volume[b] / weight < cfg.urine_rate_threshold) {
                ++run;
                if (run >= cfg.urine_sustained_hours) {
                    const double t = static_cast<double>(first_bucket + static_cast<int>(b) + 1);
                    if (!onset || t < *onset) onset = t;
                    break;
                }
            } else {
                run = 0;
            }
        }
    }

    if (!has_creatinine && !urine_usable) {
        throw InsufficientData("stay " + stay.stay_id + " has no creatinine and no usable urine");
    }
    AkiLabel out;
    out.onset_hours = onset;
    out.label = onset && *onset <= static_cast<double>(cfg.label_window_hours) ? 1 : 0;
    return out;
}

struct ExclusionReport {
    std::size_t input = 0;
    std::size_t prior_aki_ckd = 0;      // (a)
    std::size_t under_18 = 0;           // (b)
    std::size_t late_onset = 0;         // (c) onset strictly after the label window
    std::size_t insufficient_data = 0;  // unlabelable stays, dropped and counted
    std::size_t included = 0;
};

/// Applies the exclusion criteria in order (a) prior AKI/CKD, (b) age < 18,
/// (c) AKI onset after the label window; each stay counts once at its first
/// failing criterion.
inline std::pair<std::vector<StayRecord>, ExclusionReport> apply_exclusions(
    std::vector<StayRecord> stays, const KdigoConfig& cfg) {
    ExclusionReport report;
    report.input = stays.size();
    std::vector<StayRecord> included;
    included.reserve(stays.size());
    for (auto& stay : stays) {
        if (stay.prior_aki_or_ckd) {
            ++report.prior_aki_ckd;
            continue;
        }
        if (stay.age_years < 18.0) {
            ++report.under_18;
            continue;
        }
        try {
            auto lab = label_aki(stay, cfg);
            if (lab.onset_hours && *lab.onset_hours > static_cast<double>(cfg.label_window_hours)) {
                ++report.late_onset;
                continue;
            }
        } catch (const InsufficientData&) {
            ++report.insufficient_data;
            continue;
        }
        included.push_back(std::move(stay));
    }
    report.included = included.size();
    return {std::move(included), report};
}

// ---- feature schema ---------------------------------------------------------

struct FeatureSchema {
    struct Entry {
        std::string name;
        ColumnKind kind = ColumnKind::Continuous;
        std::string source;  // demographic | vital | lab | urine | ventilation
        std::string signal;  // for demographic/vital/lab
        std::string agg;     // min | mean | max | sum | any
    };
    std::vector<Entry> entries;

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& e : entries) out.push_back(e.name);
        return out;
    }
    std::vector<ColumnKind> kinds() const {
        std::vector<ColumnKind> out;
        for (const auto& e : entries) out.push_back(e.kind);
        return out;
    }
    std::vector<std::string> signals(const std::string& source) const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& e : entries) {
            if (e.source == source && seen.insert(e.signal).second) out.push_back(e.signal);
        }
        return out;
    }

    static FeatureSchema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw SchemaError("cannot open schema " + path);
        nlohmann::json j;
        in >> j;
        FeatureSchema schema;
        std::set<std::string> seen;
        for (const auto& col : j.at("columns")) {
            Entry e;
            e.name = col.at("name").get<std::string>();
            e.kind = col.at("kind") == "binary" ? ColumnKind::Binary : ColumnKind::Continuous;
            e.source = col.at("source").get<std::string>();
            if (col.contains("signal")) e.signal = col.at("signal").get<std::string>();
            if (col.contains("agg")) e.agg = col.at("agg").get<std::string>();
            if (!seen.insert(e.name).second) {
                throw SchemaError("duplicate column name '" + e.name + "' in " + path);
            }
            static const std::set<std::string> sources{"demographic", "vital", "lab", "urine",
                                                       "ventilation"};
            if (!sources.count(e.source)) {
                throw SchemaError("unknown source '" + e.source + "' for column " + e.name);
            }
            schema.entries.push_back(std::move(e));
        }
        if (schema.entries.empty()) throw SchemaError("schema has no columns: " + path);
        return schema;
    }
};

// ---- first-day features -----------------------------------------------------

namespace detail {

constexpr double kWindowHours = 24.0;  // [admit, admit+24h)

inline bool in_window(double hours) { return hours >= 0.0 && hours < kWindowHours; }

struct Aggregates {
    double min = 0, mean = 0, max = 0;
    bool present = false;
};

inline Aggregates aggregate_window(const std::vector<TimedValue>& series) {
    Aggregates a;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& e : series) {
        if (!in_window(e.hours)) continue;
        if (!a.present) {
            a.min = a.max = e.value;
            a.present = true;
        } else {
            a.min = std::min(a.min, e.value);
            a.max = std::max(a.max, e.value);
        }
        sum += e.value;
        ++n;
    }
    if (a.present) a.mean = sum / static_cast<double>(n);
    return a;
}

}  // namespace detail

/// One feature row over the half-open first-day window [admit, admit+24h):
/// vitals aggregate to min/mean/max, labs to max/min, urine sums, ventilation
/// is any overlap, demographics pass through. Unobserved signals mask their
/// cells.
inline std::pair<std::vector<double>, std::vector<std::uint8_t>> extract_first_day_features(
    const StayRecord& stay, const FeatureSchema& schema) {
    std::vector<double> row;
    std::vector<std::uint8_t> mask;
    row.reserve(schema.entries.size());
    mask.reserve(schema.entries.size());

    auto push = [&](double v, bool present) {
        row.push_back(present ? v : 0.0);
        mask.push_back(present ? 1 : 0);
    };

    for (const auto& e : schema.entries) {
        if (e.source == "demographic") {
            auto it = stay.demographics.find(e.signal);
            const bool present = it != stay.demographics.end() && std::isfinite(it->second);
            push(present ? it->second : 0.0, present);
        } else if (e.source == "vital" || e.source == "lab") {
            const auto& table = e.source == "vital" ? stay.vitals : stay.labs;
            auto it = table.find(e.signal);
            if (it == table.end()) {
                push(0.0, false);
                continue;
            }
            auto agg = detail::aggregate_window(it->second);
            if (!agg.present) {
                push(0.0, false);
            } else if (e.agg == "min") {
                push(agg.min, true);
            } else if (e.agg == "mean") {
                push(agg.mean, true);
            } else if (e.agg == "max") {
                push(agg.max, true);
            } else {
                throw SchemaError("unknown aggregation '" + e.agg + "' for " + e.name);
            }
        } else if (e.source == "urine") {
            double sum = 0;
            bool any = false;
            for (const auto& u : stay.urine) {
                if (detail::in_window(u.hours)) {
                    sum += u.value;
                    any = true;
                }
            }
            push(sum, any);
        } else if (e.source == "ventilation") {
            bool vent = false;
            for (const auto& [start, end] : stay.vent_hours) {
                if (start < detail::kWindowHours && end > 0.0) vent = true;
            }
            push(vent ? 1.0 : 0.0, true);  // absence of a record reads as not ventilated
        }
    }
    return {std::move(row), std::move(mask)};
}

/// Keeps stays with at least one prescription started strictly after
/// admission and inside the first day. Returns (kept, dropped count).
inline std::pair<std::vector<StayRecord>, std::size_t> filter_first_day_prescription(
    std::vector<StayRecord> stays) {
    std::vector<StayRecord> kept;
    kept.reserve(stays.size());
    std::size_t dropped = 0;
    for (auto& stay : stays) {
        bool qualifies = false;
        for (const auto& [record, start_hours] : stay.prescriptions) {
            if (start_hours > 0.0 && start_hours < detail::kWindowHours) {
                qualifies = true;
                break;
            }
        }
        if (qualifies) kept.push_back(std::move(stay));
        else ++dropped;
    }
    return {std::move(kept), dropped};
}

/// Assembles the feature matrix plus labels for already-included stays.
inline FeatureMatrix build_feature_matrix(const std::vector<StayRecord>& stays,
                                          const FeatureSchema& schema, const KdigoConfig& cfg) {
    FeatureMatrix m = FeatureMatrix::empty(schema.names(), schema.kinds());
    for (const auto& stay : stays) {
        auto [row, mask] = extract_first_day_features(stay, schema);
        m.add_row(stay.stay_id, row, mask, label_aki(stay, cfg).label);
    }
    return m;
}

// ---- CSV ingestion ----------------------------------------------------------

inline std::vector<StayRecord> load_stays(const std::string& dir) {
    auto stays_t = csv::read_file(dir + "/stays.csv");
    std::map<std::string, std::size_t> index;
    std::vector<StayRecord> stays;
    {
        const auto c_id = stays_t.column("stay_id");
        const auto c_pid = stays_t.column("patient_id");
        const auto c_admit = stays_t.column("admit_time");
        const auto c_age = stays_t.column("age_years");
        for (const auto& r : stays_t.rows) {
            StayRecord s;
            s.stay_id = r[c_id];
            s.patient_id = r[c_pid];
            s.admit_epoch = parse_iso8601(r[c_admit]);
            s.age_years = csv::parse_double(r[c_age]);
            s.demographics["age_years"] = s.age_years;
            index[s.stay_id] = stays.size();
            stays.push_back(std::move(s));
        }
    }
    auto stay_of = [&](const std::string& id) -> StayRecord* {
        auto it = index.find(id);
        return it == index.end() ? nullptr : &stays[it->second];
    };
    auto hours_since_admit = [&](const StayRecord& s, const std::string& iso) {
        return static_cast<double>(parse_iso8601(iso) - s.admit_epoch) / 3600.0;
    };

    {
        auto t = csv::read_file(dir + "/demographics.csv");
        const auto c_id = t.column("stay_id");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            for (std::size_t c = 0; c < t.header.size(); ++c) {
                if (c == c_id || r[c].empty()) continue;
                s->demographics[t.header[c]] = csv::parse_double(r[c]);
            }
        }
    }
    {
        auto t = csv::read_file(dir + "/chartevents.csv");
        const auto c_id = t.column("stay_id"), c_time = t.column("time"),
                   c_sig = t.column("signal"), c_val = t.column("value");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            const double h = hours_since_admit(*s, r[c_time]);
            if (h < 0) continue;
            s->vitals[r[c_sig]].push_back({h, csv::parse_double(r[c_val])});
        }
    }
    {
        auto t = csv::read_file(dir + "/labevents.csv");
        const auto c_id = t.column("stay_id"), c_time = t.column("time"),
                   c_sig = t.column("signal"), c_val = t.column("value");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            const double h = hours_since_admit(*s, r[c_time]);
            if (h < 0) continue;
            s->labs[r[c_sig]].push_back({h, csv::parse_double(r[c_val])});
        }
    }
    {
        auto t = csv::read_file(dir + "/outputevents.csv");
        const auto c_id = t.column("stay_id"), c_time = t.column("time"),
                   c_vol = t.column("volume_ml");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            const double h = hours_since_admit(*s, r[c_time]);
            if (h < 0) continue;
            s->urine.push_back({h, csv::parse_double(r[c_vol])});
        }
    }
    {
        auto t = csv::read_file(dir + "/ventilation.csv");
        const auto c_id = t.column("stay_id"), c_start = t.column("start_time"),
                   c_end = t.column("end_time");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            s->vent_hours.push_back(
                {hours_since_admit(*s, r[c_start]), hours_since_admit(*s, r[c_end])});
        }
    }
    {
        auto t = csv::read_file(dir + "/diagnoses.csv");
        const auto c_id = t.column("stay_id"), c_cond = t.column("condition"),
                   c_prior = t.column("prior");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            if ((r[c_cond] == "aki" || r[c_cond] == "ckd") && r[c_prior] == "1") {
                s->prior_aki_or_ckd = true;
            }
        }
    }
    {
        auto t = csv::read_file(dir + "/prescriptions.csv");
        const auto c_id = t.column("stay_id"), c_start = t.column("start_time"),
                   c_name = t.column("drug_name"), c_gen = t.column("generic_name"),
                   c_ndc = t.column("ndc");
        for (const auto& r : t.rows) {
            auto* s = stay_of(r[c_id]);
            if (!s) continue;
            resolver::DrugRecord rec;
            rec.drug_name = r[c_name];
            rec.generic_name = r[c_gen];
            rec.ndc = r[c_ndc];
            rec.source_stay_id = r[c_id];
            s->prescriptions.push_back({std::move(rec), hours_since_admit(*s, r[c_start])});
        }
    }

    for (auto& s : stays) {
        for (auto& [sig, series] : s.vitals) {
            std::stable_sort(series.begin(), series.end(),
                             [](const TimedValue& a, const TimedValue& b) { return a.hours < b.hours; });
        }
        for (auto& [sig, series] : s.labs) {
            std::stable_sort(series.begin(), series.end(),
                             [](const TimedValue& a, const TimedValue& b) { return a.hours < b.hours; });
        }
        std::stable_sort(s.urine.begin(), s.urine.end(),
                         [](const TimedValue& a, const TimedValue& b) { return a.hours < b.hours; });
    }
    return stays;
}

}  // namespace nephrofp::cohort
