#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "nephrofp/fingerprint.hpp"
#include "nephrofp/molgraph.hpp"
#include "testutil.hpp"

using namespace nephrofp;
using fingerprint::Fingerprint;

namespace {

Fingerprint fp_of(const std::string& smiles, int radius = 2, std::uint32_t width = 1024) {
    return fingerprint::ecfp(molgraph::parse_smiles(smiles), radius, width);
}

std::string bits_csv(const Fingerprint& fp) {
    std::ostringstream out;
    bool first = true;
    for (auto b : fp.set_bits()) {
        if (!first) out << ',';
        out << b;
        first = false;
    }
    return out.str();
}

Fingerprint from_bits(std::uint32_t width, std::initializer_list<std::uint32_t> bits) {
    auto fp = Fingerprint::zeros(width);
    for (auto b : bits) fp.set(b);
    return fp;
}

}  // namespace

TEST_CASE("initial identifiers hash the atom invariant tuple") {
    auto propane = molgraph::parse_smiles("CCC");
    auto ids = fingerprint::initial_identifiers(propane);
    CHECK(ids[0] == ids[2]);   // identical terminal carbons
    CHECK(ids[0] != ids[1]);

    auto ethanol = molgraph::parse_smiles("CCO");
    auto eids = fingerprint::initial_identifiers(ethanol);
    CHECK(eids[0] != eids[2]);  // C vs O

    // Frozen golden identifiers.
    for (const auto& row : testutil::read_tsv(testutil::fixture_path("atom_id_golden.tsv"))) {
        auto mol = molgraph::parse_smiles(row[0]);
        auto got = fingerprint::initial_identifiers(mol);
        CHECK(got[std::stoul(row[1])] == static_cast<std::uint32_t>(std::stoul(row[2])));
    }
}

TEST_CASE("lone atom folds to exactly one bit at any radius") {
    for (int r : {0, 1, 2, 5}) {
        CHECK(fp_of("C", r).popcount() == 1);
    }
}

TEST_CASE("isomorphism invariance across radii and widths") {
    for (int r : {0, 1, 2}) {
        for (std::uint32_t w : {256u, 1024u}) {
            CHECK(fp_of("CCO", r, w) == fp_of("OCC", r, w));
        }
    }
}

TEST_CASE("permuted pair corpus gives bit-identical fingerprints") {
    auto rows = testutil::read_tsv(testutil::fixture_path("permuted_pairs.tsv"));
    REQUIRE(rows.size() == 50);
    for (const auto& row : rows) {
        INFO("pair ", row[0], " | ", row[1]);
        CHECK(fp_of(row[0]) == fp_of(row[1]));
    }
}

TEST_CASE("set bits accumulate monotonically with radius") {
    auto rows = testutil::read_tsv(testutil::fixture_path("drug_smiles.tsv"));
    for (const auto& row : rows) {
        INFO("molecule ", row[0]);
        auto mol = molgraph::parse_smiles(row[1]);
        Fingerprint prev = fingerprint::ecfp(mol, 0, 1024);
        for (int r = 1; r <= 3; ++r) {
            Fingerprint cur = fingerprint::ecfp(mol, r, 1024);
            for (std::size_t b = 0; b < prev.blocks.size(); ++b) {
                CHECK((prev.blocks[b] & ~cur.blocks[b]) == 0);
            }
            prev = cur;
        }
    }
}

TEST_CASE("golden bit-index fixtures match exactly") {
    auto rows = testutil::read_tsv(testutil::fixture_path("ecfp_golden.tsv"));
    REQUIRE(rows.size() >= 30);
    for (const auto& row : rows) {
        INFO("golden ", row[0], " r=", row[1], " w=", row[2]);
        auto fp = fp_of(row[0], std::stoi(row[1]), std::stoul(row[2]));
        CHECK(bits_csv(fp) == row[3]);
    }
}

TEST_CASE("fold consistency: every set bit comes from a surviving identifier") {
    auto rows = testutil::read_tsv(testutil::fixture_path("drug_smiles.tsv"));
    for (const auto& row : rows) {
        auto mol = molgraph::parse_smiles(row[1]);
        auto features = fingerprint::feature_ids(mol, 2);
        auto fp = fingerprint::ecfp(mol, 2, 1024);
        std::set<std::uint32_t> folded;
        for (const auto& f : features) {
            folded.insert(f.value % 1024);
            CHECK(f.iteration <= 2);
            for (auto b : f.bond_set) {
                CHECK(b >= 0);
                CHECK(b < static_cast<std::int32_t>(mol.bonds.size()));
            }
        }
        auto bits = fp.set_bits();
        CHECK(std::set<std::uint32_t>(bits.begin(), bits.end()) == folded);
        CHECK(fp.popcount() >= 1);
        CHECK(fp.popcount() <= features.size());
    }
}

TEST_CASE("width must be a power of two") {
    auto mol = molgraph::parse_smiles("CCO");
    CHECK_THROWS_AS(fingerprint::ecfp(mol, 2, 1000), fingerprint::InvalidWidth);
    CHECK_THROWS_AS(fingerprint::ecfp(mol, 2, 0), fingerprint::InvalidWidth);
    CHECK_THROWS_AS(fingerprint::ecfp(mol, 2, 1), fingerprint::InvalidWidth);
    CHECK_NOTHROW(fingerprint::ecfp(mol, 2, 2));
}

TEST_CASE("stay aggregation is bitwise OR") {
    auto fp = fp_of("CC(=O)Oc1ccccc1C(=O)O");
    std::vector<Fingerprint> one{fp};
    CHECK(fingerprint::aggregate_stay_fingerprint(one) == fp);

    auto empty = fingerprint::aggregate_stay_fingerprint({});
    CHECK(empty.width == 1024);
    CHECK(empty.popcount() == 0);

    std::vector<Fingerprint> pair{from_bits(4, {0, 1}), from_bits(4, {0, 2})};
    auto merged = fingerprint::aggregate_stay_fingerprint(pair);
    CHECK(bits_csv(merged) == "0,1,2");

    std::vector<Fingerprint> bad{from_bits(4, {0}), from_bits(8, {0})};
    CHECK_THROWS_AS(fingerprint::aggregate_stay_fingerprint(bad), fingerprint::WidthMismatch);
}

TEST_CASE("tanimoto similarity") {
    auto fp = fp_of("c1ccccc1");
    CHECK(fingerprint::tanimoto(fp, fp) == doctest::Approx(1.0));

    auto a = from_bits(4, {2, 3});  // 0b1100
    auto b = from_bits(4, {1, 2});  // 0b0110
    CHECK(fingerprint::tanimoto(a, b) == doctest::Approx(1.0 / 3.0));

    auto c = from_bits(4, {0});
    auto d = from_bits(4, {3});
    CHECK(fingerprint::tanimoto(c, d) == doctest::Approx(0.0));

    auto z1 = Fingerprint::zeros(64);
    auto z2 = Fingerprint::zeros(64);
    CHECK(fingerprint::tanimoto(z1, z2) == doctest::Approx(1.0));

    CHECK_THROWS_AS(fingerprint::tanimoto(a, Fingerprint::zeros(8)),
                    fingerprint::WidthMismatch);
}

TEST_CASE("determinism across repeated computation") {
    auto rows = testutil::read_tsv(testutil::fixture_path("drug_smiles.tsv"));
    for (const auto& row : rows) {
        CHECK(fp_of(row[1]) == fp_of(row[1]));
    }
}
