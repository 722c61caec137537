#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "hash.hpp"
#include "molgraph.hpp"

// Extended-connectivity fingerprints over parsed molecular graphs.
//
// Feature identifiers are 32-bit hashes grown over `radius` neighborhood
// rounds; features covering the same substructure (same bond set, or the
// same lone atom) are deduplicated keeping the earliest round, then folded
// to bit indexes modulo the vector width. The hash is Hash32 and is pinned
// by golden fixtures; bit-compatibility with other toolkits is a non-goal.

namespace nephrofp::fingerprint {

struct InvalidWidth : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct WidthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Fingerprint {
    std::vector<std::uint64_t> blocks;
    std::uint32_t width = 0;
    std::uint32_t radius = 0;

    static Fingerprint zeros(std::uint32_t width, std::uint32_t radius = 0) {
        Fingerprint fp;
        fp.width = width;
        fp.radius = radius;
        fp.blocks.assign((width + 63) / 64, 0);
        return fp;
    }

    bool test(std::uint32_t i) const { return (blocks[i >> 6] >> (i & 63u)) & 1u; }
    void set(std::uint32_t i) { blocks[i >> 6] |= std::uint64_t{1} << (i & 63u); }

    std::size_t popcount() const {
        std::size_t n = 0;
        for (auto b : blocks) n += static_cast<std::size_t>(std::popcount(b));
        return n;
    }

    std::vector<std::uint32_t> set_bits() const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t i = 0; i < width; ++i) {
            if (test(i)) out.push_back(i);
        }
        return out;
    }

    bool operator==(const Fingerprint& other) const {
        return width == other.width && blocks == other.blocks;
    }
};

struct FeatureId {
    std::uint32_t value = 0;
    int iteration = 0;
    std::vector<std::int32_t> bond_set;  // sorted bond indices covered
};

namespace detail {

inline int bond_code(molgraph::BondOrder o) { return static_cast<int>(o); }

inline std::uint32_t hash_initial(int heavy_neighbors, int heavy_valence, int element,
                                  int isotope, int charge, int attached_h, int in_ring) {
    return Hash32{}
        .i32(heavy_neighbors)
        .i32(heavy_valence)
        .i32(element)
        .i32(isotope)
        .i32(charge)
        .i32(attached_h)
        .i32(in_ring)
        .finish();
}

inline std::vector<std::int32_t> merge_sorted(const std::vector<std::int32_t>& a,
                                              const std::vector<std::int32_t>& b) {
    std::vector<std::int32_t> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Round-0 identifier per atom: a hash of (heavy-neighbor count, valence
/// minus attached hydrogens, atomic number, isotope, formal charge,
/// attached-H count, ring membership).
inline std::vector<std::uint32_t> initial_identifiers(const molgraph::Molecule& mol) {
    std::vector<std::uint32_t> ids(mol.atoms.size());
    for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
        int heavy = 0;
        int heavy_valence = 0;
        int h_neighbors = 0;
        for (auto [nbr, eid] : mol.adj[i]) {
            if (mol.atoms[nbr].element > 1) {
                ++heavy;
                heavy_valence += molgraph::detail::bond_valence_contribution(mol.bonds[eid].order);
            } else {
                ++h_neighbors;
            }
        }
        const auto& a = mol.atoms[i];
        ids[i] = detail::hash_initial(heavy, heavy_valence, a.element, a.isotope.value_or(0),
                                      a.formal_charge, mol.implicit_h[i] + h_neighbors,
                                      mol.ring_member[i] ? 1 : 0);
    }
    return ids;
}

/// All surviving feature identifiers for rounds 0..radius, after structural
/// deduplication. Exposed so tests can check fold consistency.
inline std::vector<FeatureId> feature_ids(const molgraph::Molecule& mol, int radius) {
    const std::size_t n = mol.atoms.size();
    std::vector<std::uint32_t> ids = initial_identifiers(mol);
    std::vector<std::vector<std::int32_t>> bond_sets(n);

    // Dedup key: the covered bond set, or a per-atom sentinel for bondless
    // (single-atom) substructures. Keep lowest iteration, then lowest id.
    std::map<std::vector<std::int32_t>, std::pair<int, std::uint32_t>> best;
    std::map<std::vector<std::int32_t>, std::vector<std::int32_t>> key_bonds;
    auto offer = [&](const std::vector<std::int32_t>& bonds, int atom, int iter,
                     std::uint32_t id) {
        std::vector<std::int32_t> key =
            bonds.empty() ? std::vector<std::int32_t>{-(atom + 1)} : bonds;
        auto it = best.find(key);
        if (it == best.end() || std::pair<int, std::uint32_t>{iter, id} < it->second) {
            best[key] = {iter, id};
            key_bonds[key] = bonds;
        }
    };

    for (std::size_t i = 0; i < n; ++i) offer({}, static_cast<int>(i), 0, ids[i]);

    for (int iter = 1; iter <= radius; ++iter) {
        std::vector<std::uint32_t> next_ids(n);
        std::vector<std::vector<std::int32_t>> next_sets(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::pair<int, std::uint32_t>> nbrs;
            nbrs.reserve(mol.adj[i].size());
            std::vector<std::int32_t> covered = bond_sets[i];
            std::vector<std::int32_t> incident;
            for (auto [nbr, eid] : mol.adj[i]) {
                nbrs.push_back({detail::bond_code(mol.bonds[eid].order), ids[nbr]});
                incident.push_back(eid);
                covered = detail::merge_sorted(covered, bond_sets[nbr]);
            }
            std::sort(incident.begin(), incident.end());
            covered = detail::merge_sorted(covered, incident);
            std::sort(nbrs.begin(), nbrs.end());
            Hash32 h;
            h.i32(iter).u32(ids[i]);
            for (const auto& [code, nid] : nbrs) h.i32(code).u32(nid);
            next_ids[i] = h.finish();
            next_sets[i] = std::move(covered);
            offer(next_sets[i], static_cast<int>(i), iter, next_ids[i]);
        }
        ids = std::move(next_ids);
        bond_sets = std::move(next_sets);
    }

    std::vector<FeatureId> out;
    out.reserve(best.size());
    for (const auto& [key, val] : best) {
        out.push_back({val.second, val.first, key_bonds[key]});
    }
    return out;
}

/// ECFP bit vector. Width must be a power of two (>= 2); the default radius
/// of 2 matches the ECFP4 convention.
inline Fingerprint ecfp(const molgraph::Molecule& mol, int radius = 2,
                        std::uint32_t width = 1024) {
    if (width < 2 || (width & (width - 1)) != 0) {
        throw InvalidWidth("fingerprint width must be a power of two >= 2, got " +
                           std::to_string(width));
    }
    if (radius < 0) throw std::invalid_argument("radius must be >= 0");
    Fingerprint fp = Fingerprint::zeros(width, static_cast<std::uint32_t>(radius));
    for (const auto& f : feature_ids(mol, radius)) fp.set(f.value % width);
    return fp;
}

/// Per-stay aggregation over the fingerprints of all resolved drugs:
/// bitwise OR. An empty list yields the all-zero vector of `empty_width`.
inline Fingerprint aggregate_stay_fingerprint(std::span<const Fingerprint> fps,
                                              std::uint32_t empty_width = 1024) {
    if (fps.empty()) return Fingerprint::zeros(empty_width);
    Fingerprint out = fps[0];
    for (std::size_t i = 1; i < fps.size(); ++i) {
        if (fps[i].width != out.width) {
            throw WidthMismatch("cannot aggregate fingerprints of widths " +
                                std::to_string(out.width) + " and " +
                                std::to_string(fps[i].width));
        }
        for (std::size_t b = 0; b < out.blocks.size(); ++b) out.blocks[b] |= fps[i].blocks[b];
    }
    return out;
}

/// Tanimoto similarity |a AND b| / |a OR b|; 1.0 when both vectors are zero.
inline double tanimoto(const Fingerprint& a, const Fingerprint& b) {
    if (a.width != b.width) {
        throw WidthMismatch("tanimoto requires equal widths, got " + std::to_string(a.width) +
                            " and " + std::to_string(b.width));
    }
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        inter += static_cast<std::uint64_t>(std::popcount(a.blocks[i] & b.blocks[i]));
        uni += static_cast<std::uint64_t>(std::popcount(a.blocks[i] | b.blocks[i]));
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace nephrofp::fingerprint
