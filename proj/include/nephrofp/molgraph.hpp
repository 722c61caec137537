#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// SMILES parsing into validated molecular graphs.
//
// Supported grammar subset: organic-subset atoms (B C N O P S F Cl Br I),
// aromatic lowercase (b c n o p s), bracket atoms with isotope / charge /
// explicit hydrogen count, bond symbols - = # : / \, branches, ring closures
// (digits and %nn), and '.'-separated fragments. Stereo markers (/ \ @ @@)
// are accepted and discarded. Multi-fragment input keeps the fragment with
// the most heavy atoms (ties: first in the string). Ring closures may not
// span a '.' boundary.

namespace nephrofp::molgraph {

struct SyntaxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RingClosureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
    int element = 0;                  // atomic number
    int formal_charge = 0;
    std::optional<int> explicit_h;    // set iff the atom came from bracket notation
    std::optional<int> isotope;
    bool aromatic = false;
    int index = 0;
};

struct Bond {
    int a = 0;
    int b = 0;
    BondOrder order = BondOrder::Single;
};

struct Molecule {
    std::vector<Atom> atoms;
    std::vector<Bond> bonds;
    std::vector<int> implicit_h;                          // derived
    std::vector<bool> ring_member;                        // derived
    std::vector<std::vector<std::pair<int, int>>> adj;    // (neighbor atom, bond index)

    std::size_t size() const { return atoms.size(); }
};

namespace detail {

inline const std::array<std::string_view, 119>& element_symbols() {
    static const std::array<std::string_view, 119> table = {
        "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al",
        "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co",
        "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb",
        "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs",
        "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm",
        "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi",
        "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk",
        "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg",
        "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};
    return table;
}

inline int element_number(std::string_view symbol) {
    const auto& table = element_symbols();
    for (std::size_t z = 1; z < table.size(); ++z) {
        if (table[z] == symbol) return static_cast<int>(z);
    }
    return 0;
}

inline int aromatic_element(char lower) {
    switch (lower) {
        case 'b': return 5;
        case 'c': return 6;
        case 'n': return 7;
        case 'o': return 8;
        case 'p': return 15;
        case 's': return 16;
        default: return 0;
    }
}

// Default valence alternatives for the organic subset, ascending.
inline const std::vector<int>& organic_valences(int z) {
    static const std::vector<int> b{3}, c{4}, n{3}, o{2}, p{3, 5}, s{2, 4, 6}, hal{1}, none{};
    switch (z) {
        case 5: return b;
        case 6: return c;
        case 7: return n;
        case 8: return o;
        case 15: return p;
        case 16: return s;
        case 9:
        case 17:
        case 35:
        case 53: return hal;
        default: return none;
    }
}

inline int bond_valence_contribution(BondOrder o) {
    switch (o) {
        case BondOrder::Single: return 1;
        case BondOrder::Double: return 2;
        case BondOrder::Triple: return 3;
        case BondOrder::Aromatic: return 1;
    }
    return 1;
}

// Bridge edges via iterative DFS lowlink; an edge lies on a cycle iff it is
// not a bridge.
inline std::vector<bool> bridge_edges(std::size_t n_atoms, const std::vector<Bond>& bonds) {
    std::vector<std::vector<std::pair<int, int>>> adj(n_atoms);
    for (std::size_t e = 0; e < bonds.size(); ++e) {
        adj[bonds[e].a].push_back({bonds[e].b, static_cast<int>(e)});
        adj[bonds[e].b].push_back({bonds[e].a, static_cast<int>(e)});
    }
    std::vector<bool> is_bridge(bonds.size(), false);
    std::vector<int> disc(n_atoms, -1), low(n_atoms, 0);
    int timer = 0;
    struct Frame {
        int v;
        int parent_edge;
        std::size_t next;
    };
    for (std::size_t root = 0; root < n_atoms; ++root) {
        if (disc[root] != -1) continue;
        std::vector<Frame> stack{{static_cast<int>(root), -1, 0}};
        disc[root] = low[root] = timer++;
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < adj[f.v].size()) {
                auto [to, eid] = adj[f.v][f.next++];
                if (eid == f.parent_edge) continue;
                if (disc[to] == -1) {
                    disc[to] = low[to] = timer++;
                    stack.push_back({to, eid, 0});
                } else {
                    low[f.v] = std::min(low[f.v], disc[to]);
                }
            } else {
                int v = f.v;
                int pe = f.parent_edge;
                stack.pop_back();
                if (!stack.empty()) {
                    int u = stack.back().v;
                    low[u] = std::min(low[u], low[v]);
                    if (low[v] > disc[u]) is_bridge[pe] = true;
                }
            }
        }
    }
    return is_bridge;
}

struct PendingBond {
    bool present = false;
    BondOrder order = BondOrder::Single;
    bool explicit_symbol = false;  // false for default bonds, resolved later
};

struct Parser {
    std::string_view src;
    std::size_t pos = 0;

    struct RawAtom {
        Atom atom;
        int fragment = 0;
    };
    struct RawBond {
        int a;
        int b;
        BondOrder order;
        bool is_default;  // order to be resolved from aromaticity + ring membership
    };
    std::vector<RawAtom> atoms;
    std::vector<RawBond> bonds;
    std::vector<int> branch_stack;
    int prev = -1;
    int fragment = 0;
    bool fragment_has_atoms = false;
    PendingBond pending;
    struct OpenClosure {
        int atom;
        PendingBond bond;
    };
    std::map<int, OpenClosure> open;

    explicit Parser(std::string_view s) : src(s) {}

    [[noreturn]] void fail_syntax(const std::string& msg) const {
        throw SyntaxError(msg + " (at offset " + std::to_string(pos) + ")");
    }

    char peek() const { return pos < src.size() ? src[pos] : '\0'; }

    void add_bond(int a, int b, const PendingBond& pb) {
        if (a == b) throw RingClosureError("ring closure bonds an atom to itself");
        for (const auto& e : bonds) {
            if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) {
                throw RingClosureError("duplicate bond between atoms " + std::to_string(a) +
                                       " and " + std::to_string(b));
            }
        }
        bonds.push_back({a, b, pb.present ? pb.order : BondOrder::Single,
                         !pb.present || !pb.explicit_symbol});
    }

    void add_atom(Atom atom) {
        atom.index = static_cast<int>(atoms.size());
        const int idx = atom.index;
        atoms.push_back({atom, fragment});
        fragment_has_atoms = true;
        if (prev >= 0) {
            add_bond(prev, idx, pending);
        } else if (pending.present) {
            fail_syntax("bond symbol without preceding atom");
        }
        pending = {};
        prev = idx;
    }

    void handle_ring_digit(int number) {
        if (prev < 0) fail_syntax("ring closure before any atom");
        auto it = open.find(number);
        if (it == open.end()) {
            open[number] = {prev, pending};
            pending = {};
            return;
        }
        OpenClosure oc = it->second;
        open.erase(it);
        PendingBond pb;
        if (oc.bond.present && pending.present) {
            if (oc.bond.order != pending.order) {
                throw RingClosureError("conflicting bond orders on ring closure " +
                                       std::to_string(number));
            }
            pb = pending;
        } else if (oc.bond.present) {
            pb = oc.bond;
        } else {
            pb = pending;  // possibly absent -> default
        }
        add_bond(oc.atom, prev, pb);
        pending = {};
    }

    int read_digits(int max_digits) {
        int v = 0;
        int count = 0;
        while (count < max_digits && pos < src.size() && src[pos] >= '0' && src[pos] <= '9') {
            v = v * 10 + (src[pos] - '0');
            ++pos;
            ++count;
        }
        return count == 0 ? -1 : v;
    }

    Atom parse_bracket_atom() {
        ++pos;  // consume '['
        Atom atom;
        int isotope = read_digits(3);
        if (isotope >= 0) atom.isotope = isotope;

        if (pos >= src.size()) fail_syntax("unterminated bracket atom");
        char c = src[pos];
        if (c >= 'A' && c <= 'Z') {
            std::string sym(1, c);
            ++pos;
            if (pos < src.size() && src[pos] >= 'a' && src[pos] <= 'z') {
                std::string two = sym + src[pos];
                if (element_number(two) > 0) {
                    sym = two;
                    ++pos;
                }
            }
            atom.element = element_number(sym);
            if (atom.element == 0) fail_syntax("unknown element '" + sym + "'");
        } else if (aromatic_element(c) > 0) {
            atom.element = aromatic_element(c);
            atom.aromatic = true;
            ++pos;
        } else {
            fail_syntax("expected element symbol in bracket atom");
        }

        int hcount = 0;
        while (pos < src.size() && src[pos] != ']') {
            char t = src[pos];
            if (t == '@') {
                ++pos;
                if (pos < src.size() && src[pos] == '@') ++pos;  // chirality discarded
            } else if (t == 'H') {
                ++pos;
                int n = read_digits(1);
                hcount = n >= 0 ? n : 1;
            } else if (t == '+' || t == '-') {
                int sign = t == '+' ? 1 : -1;
                ++pos;
                int mag = 1;
                if (pos < src.size() && src[pos] == t) {
                    while (pos < src.size() && src[pos] == t) {
                        ++mag;
                        ++pos;
                    }
                } else {
                    int n = read_digits(2);
                    if (n >= 0) mag = n;
                }
                if (mag > 15) fail_syntax("formal charge out of range");
                atom.formal_charge = sign * mag;
            } else if (t == ':') {
                ++pos;
                if (read_digits(4) < 0) fail_syntax("atom class expects digits");
            } else {
                fail_syntax(std::string("unexpected '") + t + "' in bracket atom");
            }
        }
        if (pos >= src.size()) fail_syntax("unterminated bracket atom");
        ++pos;  // consume ']'
        atom.explicit_h = hcount;
        return atom;
    }

    void run() {
        if (src.empty()) fail_syntax("empty SMILES");
        while (pos < src.size()) {
            char c = src[pos];
            if (c == '-' || c == '/' || c == '\\') {
                if (pending.present) fail_syntax("two bond symbols in a row");
                pending = {true, BondOrder::Single, true};
                ++pos;
            } else if (c == '=') {
                if (pending.present) fail_syntax("two bond symbols in a row");
                pending = {true, BondOrder::Double, true};
                ++pos;
            } else if (c == '#') {
                if (pending.present) fail_syntax("two bond symbols in a row");
                pending = {true, BondOrder::Triple, true};
                ++pos;
            } else if (c == ':') {
                if (pending.present) fail_syntax("two bond symbols in a row");
                pending = {true, BondOrder::Aromatic, true};
                ++pos;
            } else if (c == '(') {
                if (prev < 0) fail_syntax("branch before any atom");
                if (pending.present) fail_syntax("bond symbol before branch open");
                branch_stack.push_back(prev);
                ++pos;
            } else if (c == ')') {
                if (branch_stack.empty()) fail_syntax("unmatched ')'");
                if (pending.present) fail_syntax("dangling bond symbol before ')'");
                prev = branch_stack.back();
                branch_stack.pop_back();
                ++pos;
            } else if (c >= '0' && c <= '9') {
                ++pos;
                handle_ring_digit(c - '0');
            } else if (c == '%') {
                ++pos;
                if (pos + 1 >= src.size() || src[pos] < '0' || src[pos] > '9' ||
                    src[pos + 1] < '0' || src[pos + 1] > '9') {
                    fail_syntax("'%' ring closure expects two digits");
                }
                int number = (src[pos] - '0') * 10 + (src[pos + 1] - '0');
                pos += 2;
                handle_ring_digit(number);
            } else if (c == '.') {
                if (!branch_stack.empty()) fail_syntax("'.' inside branch");
                if (pending.present) fail_syntax("bond symbol before '.'");
                if (!open.empty()) {
                    throw RingClosureError("ring closure " + std::to_string(open.begin()->first) +
                                           " left open at fragment boundary");
                }
                if (!fragment_has_atoms) fail_syntax("empty fragment");
                ++fragment;
                fragment_has_atoms = false;
                prev = -1;
                ++pos;
            } else if (c == '[') {
                add_atom(parse_bracket_atom());
            } else if (c >= 'A' && c <= 'Z') {
                std::string sym(1, c);
                if ((c == 'C' || c == 'B') && pos + 1 < src.size() &&
                    (src[pos + 1] == 'l' || src[pos + 1] == 'r')) {
                    std::string two = sym + src[pos + 1];
                    if (two == "Cl" || two == "Br") sym = two;
                }
                static const char* organic[] = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
                bool ok = false;
                for (const char* o : organic) ok = ok || sym == o;
                if (!ok) fail_syntax("element '" + sym + "' requires bracket notation");
                Atom atom;
                atom.element = element_number(sym);
                pos += sym.size();
                add_atom(atom);
            } else if (aromatic_element(c) > 0) {
                Atom atom;
                atom.element = aromatic_element(c);
                atom.aromatic = true;
                ++pos;
                add_atom(atom);
            } else {
                fail_syntax(std::string("unknown token '") + c + "'");
            }
        }
        if (!branch_stack.empty()) fail_syntax("unclosed '('");
        if (pending.present) fail_syntax("dangling bond symbol at end of input");
        if (!open.empty()) {
            throw RingClosureError("unmatched ring closure digit " +
                                   std::to_string(open.begin()->first));
        }
        if (!fragment_has_atoms) fail_syntax("trailing '.' with empty fragment");
        if (atoms.empty()) fail_syntax("no atoms in input");
    }
};

}  // namespace detail

/// Parses a SMILES string into a Molecule. For multi-fragment input the
/// fragment with the most heavy atoms wins (ties: first in the string).
inline Molecule parse_smiles(std::string_view text) {
    detail::Parser p(text);
    p.run();

    // Fragment selection by heavy-atom count.
    std::vector<int> heavy_count;
    for (const auto& ra : p.atoms) {
        if (ra.fragment >= static_cast<int>(heavy_count.size())) {
            heavy_count.resize(ra.fragment + 1, 0);
        }
        if (ra.atom.element > 1) ++heavy_count[ra.fragment];
    }
    int best = 0;
    for (std::size_t f = 1; f < heavy_count.size(); ++f) {
        if (heavy_count[f] > heavy_count[best]) best = static_cast<int>(f);
    }

    Molecule mol;
    std::vector<int> remap(p.atoms.size(), -1);
    for (const auto& ra : p.atoms) {
        if (ra.fragment != best) continue;
        Atom a = ra.atom;
        a.index = static_cast<int>(mol.atoms.size());
        remap[ra.atom.index] = a.index;
        mol.atoms.push_back(a);
    }
    std::vector<bool> bond_default;
    for (const auto& rb : p.bonds) {
        if (remap[rb.a] < 0) continue;
        mol.bonds.push_back({remap[rb.a], remap[rb.b], rb.order});
        bond_default.push_back(rb.is_default);
    }

    // Default-bond resolution: an unmarked bond between two aromatic atoms is
    // aromatic when it lies on a cycle, single otherwise (biphenyl linkage).
    auto is_bridge = detail::bridge_edges(mol.atoms.size(), mol.bonds);
    for (std::size_t e = 0; e < mol.bonds.size(); ++e) {
        if (!bond_default[e]) continue;
        const Atom& a = mol.atoms[mol.bonds[e].a];
        const Atom& b = mol.atoms[mol.bonds[e].b];
        mol.bonds[e].order =
            (a.aromatic && b.aromatic && !is_bridge[e]) ? BondOrder::Aromatic : BondOrder::Single;
    }

    mol.adj.assign(mol.atoms.size(), {});
    for (std::size_t e = 0; e < mol.bonds.size(); ++e) {
        mol.adj[mol.bonds[e].a].push_back({mol.bonds[e].b, static_cast<int>(e)});
        mol.adj[mol.bonds[e].b].push_back({mol.bonds[e].a, static_cast<int>(e)});
    }

    mol.ring_member.assign(mol.atoms.size(), false);
    for (std::size_t e = 0; e < mol.bonds.size(); ++e) {
        if (!is_bridge[e]) {
            mol.ring_member[mol.bonds[e].a] = true;
            mol.ring_member[mol.bonds[e].b] = true;
        }
    }

    // Implicit hydrogens. Bracket atoms take their stated count. Aromatic
    // carbon uses valence 4 against one aromatic-system contribution of 3
    // (ring CH keeps one H); other aromatic atoms default to zero. Aliphatic
    // organic-subset atoms take the smallest default valence that fits.
    mol.implicit_h.assign(mol.atoms.size(), 0);
    for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
        const Atom& a = mol.atoms[i];
        if (a.explicit_h.has_value()) {
            mol.implicit_h[i] = *a.explicit_h;
            continue;
        }
        int arom_bonds = 0;
        int other_sum = 0;
        for (auto [nbr, eid] : mol.adj[i]) {
            (void)nbr;
            if (mol.bonds[eid].order == BondOrder::Aromatic) ++arom_bonds;
            else other_sum += detail::bond_valence_contribution(mol.bonds[eid].order);
        }
        if (a.aromatic) {
            if (a.element == 6) {
                mol.implicit_h[i] = std::max(0, 4 - (arom_bonds + other_sum + 1));
            } else {
                mol.implicit_h[i] = 0;
            }
            continue;
        }
        const auto& valences = detail::organic_valences(a.element);
        if (valences.empty()) {
            mol.implicit_h[i] = 0;  // bracket-only elements never reach here
            continue;
        }
        const int sum = arom_bonds + other_sum;
        int chosen = -1;
        for (int v : valences) {
            if (v >= sum) {
                chosen = v;
                break;
            }
        }
        if (chosen < 0) {
            throw ValenceError("atom " + std::to_string(i) + " (element " +
                               std::to_string(a.element) + ") has " + std::to_string(sum) +
                               " explicit connections, above the maximum supported valence");
        }
        mol.implicit_h[i] = chosen - sum;
    }
    return mol;
}

/// Number of non-hydrogen neighbors of an atom.
inline int heavy_degree(const Molecule& mol, int atom_index) {
    if (atom_index < 0 || atom_index >= static_cast<int>(mol.atoms.size())) {
        throw IndexError("atom index " + std::to_string(atom_index) + " out of range");
    }
    int n = 0;
    for (auto [nbr, eid] : mol.adj[atom_index]) {
        (void)eid;
        if (mol.atoms[nbr].element > 1) ++n;
    }
    return n;
}

}  // namespace nephrofp::molgraph
