#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "nephrofp/cohort.hpp"
#include "testutil.hpp"

using namespace nephrofp;
using namespace nephrofp::cohort;

namespace {

StayRecord basic_stay(const std::string& id = "t1") {
    StayRecord s;
    s.stay_id = id;
    s.patient_id = "p";
    s.age_years = 50.0;
    s.demographics["age_years"] = 50.0;
    s.demographics["weight_kg"] = 80.0;
    return s;
}

FeatureSchema shipped_schema() {
    return FeatureSchema::load(testutil::repo_path("config/feature_schema.json"));
}

}  // namespace

TEST_CASE("creatinine absolute rise inside a 48h span labels positive") {
    auto s = basic_stay();
    s.labs["creatinine"] = {{0.0, 1.0}, {24.0, 1.4}};
    auto lab = label_aki(s, {});
    CHECK(lab.label == 1);
    CHECK(lab.onset_hours == 24.0);
}

TEST_CASE("flat creatinine and adequate urine label negative") {
    auto s = basic_stay();
    s.labs["creatinine"] = {{0.0, 1.0}, {30.0, 1.0}, {60.0, 1.0}};
    for (int h = 0; h < 72; ++h) s.urine.push_back({h + 0.5, 1.2 * 80.0});  // 1.2 mL/kg/h
    auto lab = label_aki(s, {});
    CHECK(lab.label == 0);
    CHECK_FALSE(lab.onset_hours.has_value());
}

TEST_CASE("creatinine jump after the window yields onset but label 0") {
    auto s = basic_stay();
    s.labs["creatinine"] = {{0.0, 1.0}, {56.0, 1.0}, {80.0, 1.6}};
    auto lab = label_aki(s, {});
    CHECK(lab.label == 0);
    REQUIRE(lab.onset_hours.has_value());
    CHECK(*lab.onset_hours == 80.0);
}

TEST_CASE("relative rise fires without a 0.3 absolute jump") {
    auto s = basic_stay();
    // Baseline 0.4; 0.25 absolute rise stays under 0.3 but exceeds 1.5x.
    s.labs["creatinine"] = {{0.0, 0.4}, {20.0, 0.65}};
    auto lab = label_aki(s, {});
    CHECK(lab.label == 1);
    CHECK(*lab.onset_hours == 20.0);
}

TEST_CASE("sustained low urine output labels positive at the sixth hour") {
    auto s = basic_stay();                        // 80 kg
    for (int h = 0; h < 8; ++h) s.urine.push_back({h + 0.5, 30.0});  // 0.375 mL/kg/h
    auto lab = label_aki(s, {});
    CHECK(lab.label == 1);
    CHECK(*lab.onset_hours == 6.0);

    // A wet hour in the middle resets the run.
    auto s2 = basic_stay();
    for (int h = 0; h < 12; ++h) s2.urine.push_back({h + 0.5, h == 4 ? 60.0 : 30.0});
    auto lab2 = label_aki(s2, {});
    CHECK(lab2.label == 1);
    CHECK(*lab2.onset_hours == 11.0);  // run restarts at bucket 5
}

TEST_CASE("urine criterion needs a usable weight") {
    auto s = basic_stay();
    s.demographics.erase("weight_kg");
    for (int h = 0; h < 8; ++h) s.urine.push_back({h + 0.5, 1.0});
    CHECK_THROWS_AS(label_aki(s, {}), InsufficientData);  // no creatinine either

    s.labs["creatinine"] = {{0.0, 1.0}, {10.0, 1.0}};
    auto lab = label_aki(s, {});  // creatinine alone decides
    CHECK(lab.label == 0);
}

TEST_CASE("no creatinine and no urine raises InsufficientData") {
    auto s = basic_stay();
    CHECK_THROWS_AS(label_aki(s, {}), InsufficientData);
}

TEST_CASE("label determinism") {
    auto s = basic_stay();
    s.labs["creatinine"] = {{0.0, 1.0}, {24.0, 1.4}};
    auto a = label_aki(s, {});
    auto b = label_aki(s, {});
    CHECK(a.label == b.label);
    CHECK(a.onset_hours == b.onset_hours);
}

TEST_CASE("exclusions count each stay once, in order") {
    KdigoConfig cfg;
    std::vector<StayRecord> stays;

    auto prior = basic_stay("prior");
    prior.prior_aki_or_ckd = true;
    prior.age_years = 16.0;  // also under 18; must count under (a) only
    stays.push_back(prior);

    auto minor = basic_stay("minor");
    minor.age_years = 17.9;
    minor.labs["creatinine"] = {{0.0, 1.0}};
    stays.push_back(minor);

    auto late = basic_stay("late");
    late.labs["creatinine"] = {{0.0, 1.0}, {60.0, 1.0}, {80.0, 1.6}};
    stays.push_back(late);

    auto nodata = basic_stay("nodata");
    stays.push_back(nodata);

    auto ok = basic_stay("ok");
    ok.labs["creatinine"] = {{0.0, 1.0}, {24.0, 1.4}};
    stays.push_back(ok);

    auto [included, report] = apply_exclusions(stays, cfg);
    CHECK(report.input == 5);
    CHECK(report.prior_aki_ckd == 1);
    CHECK(report.under_18 == 1);
    CHECK(report.late_onset == 1);
    CHECK(report.insufficient_data == 1);
    CHECK(report.included == 1);
    REQUIRE(included.size() == 1);
    CHECK(included[0].stay_id == "ok");
}

TEST_CASE("shipped schema declares 72 unique columns") {
    auto schema = shipped_schema();
    CHECK(schema.entries.size() == 72);
    std::set<std::string> names;
    for (const auto& e : schema.entries) names.insert(e.name);
    CHECK(names.size() == 72);
    CHECK(schema.signals("vital").size() == 8);
    CHECK(schema.signals("lab").size() == 20);
}

TEST_CASE("duplicate schema columns are rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "nephrofp_schema";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "dup.json").string();
    std::ofstream out(path);
    out << R"({"columns":[
        {"name":"x","kind":"continuous","source":"vital","signal":"hr","agg":"min"},
        {"name":"x","kind":"continuous","source":"vital","signal":"hr","agg":"max"}]})";
    out.close();
    CHECK_THROWS_AS(FeatureSchema::load(path), SchemaError);
}

TEST_CASE("first-day aggregation on the worked heart-rate example") {
    auto schema = shipped_schema();
    auto s = basic_stay();
    s.vitals["heart_rate"] = {{1.0, 60.0}, {5.0, 80.0}, {9.0, 100.0}};
    auto [row, mask] = extract_first_day_features(s, schema);
    auto names = schema.names();
    auto idx = [&](const std::string& n) {
        return std::find(names.begin(), names.end(), n) - names.begin();
    };
    CHECK(row[idx("heart_rate_min")] == 60.0);
    CHECK(row[idx("heart_rate_mean")] == 80.0);
    CHECK(row[idx("heart_rate_max")] == 100.0);
    CHECK(mask[idx("heart_rate_min")] == 1);
    // Unmeasured glucose stays masked.
    CHECK(mask[idx("glucose_max")] == 0);
    CHECK(mask[idx("glucose_min")] == 0);
    // Demographics pass through; ventilation defaults to observed 0.
    CHECK(row[idx("age_years")] == 50.0);
    CHECK(mask[idx("weight_kg")] == 1);
    CHECK(mask[idx("ventilated")] == 1);
    CHECK(row[idx("ventilated")] == 0.0);
}

TEST_CASE("events at or after admit+24h never influence features") {
    auto schema = shipped_schema();
    auto s = basic_stay();
    s.vitals["heart_rate"] = {{2.0, 70.0}, {23.999, 75.0}};
    auto [row_base, mask_base] = extract_first_day_features(s, schema);

    // Sentinels exactly at the boundary and beyond.
    s.vitals["heart_rate"].push_back({24.0, 9999.0});
    s.vitals["heart_rate"].push_back({30.0, -9999.0});
    s.labs["glucose"] = {{24.0, 9999.0}};
    s.urine.push_back({26.0, 9999.0});
    auto [row_sent, mask_sent] = extract_first_day_features(s, schema);
    CHECK(row_base == row_sent);
    CHECK(mask_base == mask_sent);
}

TEST_CASE("prescription filter keeps strictly-inside-first-day starts") {
    std::vector<StayRecord> stays;
    auto a = basic_stay("a");
    a.prescriptions.push_back({{}, 1.0});
    stays.push_back(a);
    auto b = basic_stay("b");
    b.prescriptions.push_back({{}, 25.0});
    stays.push_back(b);
    auto c = basic_stay("c");
    c.prescriptions.push_back({{}, -1.0});  // before admission
    stays.push_back(c);
    auto [kept, dropped] = filter_first_day_prescription(stays);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].stay_id == "a");
    CHECK(dropped == 2);
}

TEST_CASE("ten-stay fixture reproduces the hand-enumerated funnel") {
    auto stays = load_stays(testutil::fixture_path("cohort10"));
    REQUIRE(stays.size() == 10);

    KdigoConfig cfg;
    auto [included, report] = apply_exclusions(stays, cfg);
    CHECK(report.input == 10);
    CHECK(report.prior_aki_ckd == 2);      // s4, s8 (s8 counted here, not under age)
    CHECK(report.under_18 == 1);           // s3
    CHECK(report.late_onset == 1);         // s5
    CHECK(report.insufficient_data == 1);  // s6
    CHECK(report.included == 5);           // s1 s2 s7 s9 s10

    auto [with_rx, dropped_rx] = filter_first_day_prescription(included);
    CHECK(dropped_rx == 2);  // s9 (+25h), s10 (-1h and +30h)
    REQUIRE(with_rx.size() == 3);
    std::set<std::string> ids;
    for (const auto& s : with_rx) ids.insert(s.stay_id);
    CHECK(ids == std::set<std::string>{"s1", "s2", "s7"});

    // Funnel monotonicity.
    CHECK(report.included <= report.input);
    CHECK(with_rx.size() <= included.size());

    auto schema = shipped_schema();
    auto m = build_feature_matrix(with_rx, schema, cfg);
    CHECK(m.n_rows() == 3);
    CHECK(m.n_cols() == 72);

    auto names = schema.names();
    auto idx = [&](const std::string& n) {
        return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
    };
    std::map<std::string, std::size_t> row_of;
    for (std::size_t r = 0; r < m.n_rows(); ++r) row_of[m.stay_ids[r]] = r;

    CHECK(m.labels[row_of["s1"]] == 1);  // creatinine rise at 30h
    CHECK(m.labels[row_of["s2"]] == 0);
    CHECK(m.labels[row_of["s7"]] == 1);  // oliguria

    CHECK(m.at(row_of["s1"], idx("heart_rate_min")) == 60.0);
    CHECK(m.at(row_of["s1"], idx("heart_rate_mean")) == 80.0);
    CHECK(m.at(row_of["s1"], idx("heart_rate_max")) == 100.0);
    CHECK(m.at(row_of["s1"], idx("urine_24h_ml")) == doctest::Approx(24 * 60.0));

    // s2's out-of-window sentinel (999 at +25h) must not leak into hr_max,
    // and its +24h glucose lab stays masked.
    CHECK(m.at(row_of["s2"], idx("heart_rate_max")) == 72.0);
    CHECK_FALSE(m.is_observed(row_of["s2"], idx("glucose_max")));
    // s2 ventilation interval overlaps the first day.
    CHECK(m.at(row_of["s2"], idx("ventilated")) == 1.0);
    CHECK(m.at(row_of["s1"], idx("ventilated")) == 0.0);
    // s2 missing height/bmi demographics are masked.
    CHECK_FALSE(m.is_observed(row_of["s2"], idx("height_cm")));
    CHECK_FALSE(m.is_observed(row_of["s2"], idx("bmi")));

    // s7 first-day urine total.
    CHECK(m.at(row_of["s7"], idx("urine_24h_ml")) == doctest::Approx(8 * 30.0));
}

TEST_CASE("kdigo config validation") {
    KdigoConfig bad;
    bad.label_window_hours = 0;
    auto s = basic_stay();
    s.labs["creatinine"] = {{0.0, 1.0}};
    CHECK_THROWS_AS(label_aki(s, bad), std::invalid_argument);
}
