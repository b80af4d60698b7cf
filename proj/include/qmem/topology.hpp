#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qmem/errors.hpp"
#include "qmem/jsonutil.hpp"

namespace qmem {

/// Undirected device connectivity. Edges are stored with the smaller
/// index first; self-loops are rejected.
struct CouplingGraph {
    std::size_t qubit_count = 0;
    std::set<std::pair<std::size_t, std::size_t>> edges;

    void add_edge(std::size_t a, std::size_t b) {
        if (a == b) throw std::invalid_argument("CouplingGraph: self-loop");
        if (a >= qubit_count || b >= qubit_count)
            throw std::invalid_argument("CouplingGraph: endpoint out of range");
        edges.emplace(std::min(a, b), std::max(a, b));
    }

    bool has_edge(std::size_t a, std::size_t b) const {
        return edges.count({std::min(a, b), std::max(a, b)}) > 0;
    }

    std::vector<std::vector<std::size_t>> adjacency() const {
        std::vector<std::vector<std::size_t>> adj(qubit_count);
        for (const auto& [a, b] : edges) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        return adj;
    }

    static CouplingGraph line(std::size_t qubit_count) {
        CouplingGraph g{qubit_count, {}};
        for (std::size_t i = 0; i + 1 < qubit_count; ++i) g.add_edge(i, i + 1);
        return g;
    }

    json to_json() const {
        json edge_list = json::array();
        for (const auto& [a, b] : edges) edge_list.push_back({a, b});
        return json{{"qubit_count", qubit_count}, {"edges", edge_list}};
    }

    static CouplingGraph from_json(const json& j) {
        CouplingGraph g{j.at("qubit_count").get<std::size_t>(), {}};
        for (const auto& e : j.at("edges"))
            g.add_edge(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
        return g;
    }

    static CouplingGraph load(const std::filesystem::path& path) {
        return from_json(load_json(path));
    }
    void save(const std::filesystem::path& path) const { spit(path, to_json().dump(2) + "\n"); }
};

/// A terminal qubit group plus the conditional qubits on its path to the
/// partition root. Both sets are kept ascending.
struct Leaf {
    std::vector<std::size_t> qubits;
    std::vector<std::size_t> context;
};

/// Flattened conditional-independence partition: the tree structure never
/// matters at runtime, only which leaves exist, which conditional qubits
/// each leaf is conditioned on, and the pool of conditional qubits.
struct PartitionSpec {
    std::size_t qubit_count = 0;
    std::vector<std::size_t> conditional_qubits;
    std::vector<Leaf> leaves;

    /// Single leaf holding every qubit: the full-joint special case.
    static PartitionSpec trivial(std::size_t qubit_count) {
        PartitionSpec spec{qubit_count, {}, {Leaf{{}, {}}}};
        spec.leaves[0].qubits.resize(qubit_count);
        for (std::size_t i = 0; i < qubit_count; ++i) spec.leaves[0].qubits[i] = i;
        return spec;
    }

    /// Structural invariants only (no connectivity): disjointness, full
    /// coverage, contexts drawn from the conditional pool, ordering.
    std::vector<std::string> structural_errors() const {
        std::vector<std::string> errors;
        std::vector<int> owner(qubit_count, -1);  // -1 free, -2 conditional, >=0 leaf
        auto claim = [&](std::size_t q, int who, const std::string& name) {
            if (q >= qubit_count) {
                errors.push_back(name + ": qubit " + std::to_string(q) + " out of range");
                return;
            }
            if (owner[q] != -1)
                errors.push_back(name + ": qubit " + std::to_string(q) + " already assigned");
            else
                owner[q] = who;
        };
        auto check_ascending = [&](const std::vector<std::size_t>& v, const std::string& name) {
            for (std::size_t i = 1; i < v.size(); ++i)
                if (v[i] <= v[i - 1]) {
                    errors.push_back(name + ": indices must be strictly ascending");
                    break;
                }
        };
        check_ascending(conditional_qubits, "conditional_qubits");
        for (std::size_t q : conditional_qubits) claim(q, -2, "conditional_qubits");
        for (std::size_t li = 0; li < leaves.size(); ++li) {
            const auto& leaf = leaves[li];
            const std::string name = "leaf " + std::to_string(li);
            if (leaf.qubits.empty()) errors.push_back(name + ": no qubits");
            check_ascending(leaf.qubits, name);
            check_ascending(leaf.context, name + " context");
            for (std::size_t q : leaf.qubits) claim(q, static_cast<int>(li), name);
            for (std::size_t q : leaf.context)
                if (!std::binary_search(conditional_qubits.begin(), conditional_qubits.end(), q))
                    errors.push_back(name + ": context qubit " + std::to_string(q) +
                                     " is not a conditional qubit");
        }
        for (std::size_t q = 0; q < qubit_count; ++q)
            if (owner[q] == -1)
                errors.push_back("qubit " + std::to_string(q) +
                                 " is in no leaf and not conditional");
        return errors;
    }

    json to_json() const {
        json leaf_list = json::array();
        for (const auto& leaf : leaves)
            leaf_list.push_back({{"qubits", leaf.qubits}, {"context", leaf.context}});
        return json{{"qubit_count", qubit_count},
                    {"conditional_qubits", conditional_qubits},
                    {"leaves", leaf_list}};
    }

    static PartitionSpec from_json(const json& j) {
        PartitionSpec spec;
        spec.qubit_count = j.at("qubit_count").get<std::size_t>();
        spec.conditional_qubits = j.at("conditional_qubits").get<std::vector<std::size_t>>();
        for (const auto& l : j.at("leaves"))
            spec.leaves.push_back(Leaf{l.at("qubits").get<std::vector<std::size_t>>(),
                                       l.at("context").get<std::vector<std::size_t>>()});
        return spec;
    }

    static PartitionSpec load(const std::filesystem::path& path) {
        return from_json(load_json(path));
    }
    void save(const std::filesystem::path& path) const { spit(path, to_json().dump(2) + "\n"); }
};

/// A leaf that is not separated from the rest of the device by its
/// context, together with a context-avoiding path out of the leaf.
struct PartitionViolation {
    std::size_t leaf_index = 0;
    std::vector<std::size_t> witness_path;  // starts inside the leaf, ends outside leaf+context
};

struct ValidationReport {
    bool valid = false;
    std::vector<std::string> structural_errors;
    std::vector<PartitionViolation> violations;

    std::string to_string() const {
        if (valid) return "partition valid";
        std::string text;
        for (const auto& e : structural_errors) text += e + "\n";
        for (const auto& v : violations) {
            text += "leaf " + std::to_string(v.leaf_index) +
                    " not separated by its context; witness path:";
            for (std::size_t q : v.witness_path) text += " q" + std::to_string(q);
            text += "\n";
        }
        return text;
    }
};

/// Screens each leaf: deleting its context from the graph must disconnect
/// the leaf's qubits from every qubit outside leaf+context. Structural
/// problems are reported without running the connectivity check.
inline ValidationReport validate_partition(const CouplingGraph& graph,
                                           const PartitionSpec& spec) {
    ValidationReport report;
    if (graph.qubit_count != spec.qubit_count) {
        report.structural_errors.push_back("graph and partition qubit counts differ");
        return report;
    }
    report.structural_errors = spec.structural_errors();
    if (!report.structural_errors.empty()) return report;

    const auto adj = graph.adjacency();
    for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
        const Leaf& leaf = spec.leaves[li];
        std::vector<char> blocked(spec.qubit_count, 0);
        std::vector<char> inside(spec.qubit_count, 0);
        for (std::size_t q : leaf.context) blocked[q] = 1;
        for (std::size_t q : leaf.qubits) inside[q] = 1;

        // BFS from the leaf with the context deleted; parents give the witness.
        std::vector<std::ptrdiff_t> parent(spec.qubit_count, -2);
        std::deque<std::size_t> frontier;
        for (std::size_t q : leaf.qubits) {
            parent[q] = -1;
            frontier.push_back(q);
        }
        std::ptrdiff_t escape = -1;
        while (!frontier.empty() && escape < 0) {
            const std::size_t q = frontier.front();
            frontier.pop_front();
            for (std::size_t nb : adj[q]) {
                if (blocked[nb] || parent[nb] != -2) continue;
                parent[nb] = static_cast<std::ptrdiff_t>(q);
                if (!inside[nb]) {
                    escape = static_cast<std::ptrdiff_t>(nb);
                    break;
                }
                frontier.push_back(nb);
            }
        }
        if (escape >= 0) {
            PartitionViolation violation{li, {}};
            for (std::ptrdiff_t q = escape; q >= 0; q = parent[static_cast<std::size_t>(q)])
                violation.witness_path.push_back(static_cast<std::size_t>(q));
            std::reverse(violation.witness_path.begin(), violation.witness_path.end());
            report.violations.push_back(std::move(violation));
        }
    }
    report.valid = report.violations.empty();
    return report;
}

/// Networks a CI model needs: one per (leaf, context basis state) plus one
/// per conditional qubit.
inline std::size_t network_count(const PartitionSpec& spec) {
    std::size_t count = spec.conditional_qubits.size();
    for (const auto& leaf : spec.leaves) count += std::size_t{1} << leaf.context.size();
    return count;
}

}  // namespace qmem
