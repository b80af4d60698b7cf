#include "qmem/topology.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "test_util.hpp"

using namespace qmem;
using qmem::testing::preset;

namespace {

/// Independent separator check: union-find connectivity of the graph with
/// the context deleted.
bool leaf_separated(const CouplingGraph& graph, const Leaf& leaf) {
    std::vector<std::size_t> parent(graph.qubit_count);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<char> blocked(graph.qubit_count, 0);
    for (std::size_t q : leaf.context) blocked[q] = 1;
    for (const auto& [a, b] : graph.edges)
        if (!blocked[a] && !blocked[b]) parent[find(a)] = find(b);

    std::vector<char> inside(graph.qubit_count, 0);
    for (std::size_t q : leaf.qubits) inside[q] = 1;
    for (std::size_t q : leaf.qubits)
        for (std::size_t other = 0; other < graph.qubit_count; ++other)
            if (!inside[other] && !blocked[other] && find(other) == find(q)) return false;
    return true;
}

bool oracle_valid(const CouplingGraph& graph, const PartitionSpec& spec) {
    for (const Leaf& leaf : spec.leaves)
        if (!leaf_separated(graph, leaf)) return false;
    return true;
}

}  // namespace

TEST(topology, published_7q_partition_is_valid) {
    const auto graph = CouplingGraph::load(preset("graph_7q_line.json"));
    const auto spec = PartitionSpec::load(preset("partition_7q.json"));
    const ValidationReport report = validate_partition(graph, spec);
    EXPECT_TRUE(report.valid) << report.to_string();
    EXPECT_TRUE(oracle_valid(graph, spec));
}

TEST(topology, published_13q_partition_is_valid) {
    const auto graph = CouplingGraph::load(preset("graph_13q.json"));
    const auto spec = PartitionSpec::load(preset("partition_13q.json"));
    const ValidationReport report = validate_partition(graph, spec);
    EXPECT_TRUE(report.valid) << report.to_string();
    EXPECT_TRUE(oracle_valid(graph, spec));
}

TEST(topology, trivial_partition_is_valid) {
    const auto graph = CouplingGraph::line(7);
    const ValidationReport report = validate_partition(graph, PartitionSpec::trivial(7));
    EXPECT_TRUE(report.valid);
}

TEST(topology, bad_split_is_rejected_with_witness) {
    const auto graph = CouplingGraph::line(7);
    const PartitionSpec spec{7, {3}, {Leaf{{0, 1}, {3}}, Leaf{{2, 4, 5, 6}, {3}}}};
    EXPECT_FALSE(oracle_valid(graph, spec));

    const ValidationReport report = validate_partition(graph, spec);
    ASSERT_FALSE(report.valid);
    ASSERT_FALSE(report.violations.empty());
    const PartitionViolation& v = report.violations.front();
    EXPECT_EQ(v.leaf_index, 0u);
    const Leaf& leaf = spec.leaves[v.leaf_index];
    ASSERT_GE(v.witness_path.size(), 2u);
    // Path starts inside the leaf, ends outside leaf+context, uses real
    // edges, and never touches the context.
    EXPECT_TRUE(std::count(leaf.qubits.begin(), leaf.qubits.end(), v.witness_path.front()));
    const std::size_t last = v.witness_path.back();
    EXPECT_FALSE(std::count(leaf.qubits.begin(), leaf.qubits.end(), last));
    EXPECT_FALSE(std::count(leaf.context.begin(), leaf.context.end(), last));
    for (std::size_t i = 0; i + 1 < v.witness_path.size(); ++i)
        EXPECT_TRUE(graph.has_edge(v.witness_path[i], v.witness_path[i + 1]));
    for (std::size_t q : v.witness_path)
        EXPECT_FALSE(std::count(leaf.context.begin(), leaf.context.end(), q));
}

TEST(topology, verdict_matches_union_find_oracle_on_line_partitions) {
    const auto graph = CouplingGraph::line(6);
    // Every two-leaf split of a 6-qubit line with one conditional qubit.
    for (std::size_t cond = 1; cond + 1 < 6; ++cond) {
        for (std::size_t boundary = 1; boundary + 1 < 6; ++boundary) {
            if (boundary == cond) continue;
            Leaf left, right;
            for (std::size_t q = 0; q < 6; ++q) {
                if (q == cond) continue;
                (q < boundary ? left : right).qubits.push_back(q);
            }
            if (left.qubits.empty() || right.qubits.empty()) continue;
            left.context = {cond};
            right.context = {cond};
            const PartitionSpec spec{6, {cond}, {left, right}};
            EXPECT_EQ(validate_partition(graph, spec).valid, oracle_valid(graph, spec))
                << "cond=" << cond << " boundary=" << boundary;
        }
    }
}

TEST(topology, structural_errors_come_first) {
    const auto graph = CouplingGraph::line(4);
    {
        // Overlapping leaves.
        const PartitionSpec spec{4, {1}, {Leaf{{0, 2}, {1}}, Leaf{{2, 3}, {1}}}};
        const auto report = validate_partition(graph, spec);
        EXPECT_FALSE(report.valid);
        EXPECT_FALSE(report.structural_errors.empty());
        EXPECT_TRUE(report.violations.empty());
    }
    {
        // Coverage gap.
        const PartitionSpec spec{4, {1}, {Leaf{{0}, {1}}, Leaf{{3}, {1}}}};
        EXPECT_FALSE(validate_partition(graph, spec).structural_errors.empty());
    }
    {
        // Context qubit that is not conditional.
        const PartitionSpec spec{4, {1}, {Leaf{{0}, {2}}, Leaf{{2, 3}, {1}}}};
        EXPECT_FALSE(validate_partition(graph, spec).structural_errors.empty());
    }
    {
        // Empty leaf.
        const PartitionSpec spec{4, {0, 1, 2, 3}, {Leaf{{}, {}}}};
        EXPECT_FALSE(validate_partition(graph, spec).structural_errors.empty());
    }
}

TEST(topology, network_count_examples) {
    EXPECT_EQ(network_count(PartitionSpec::load(preset("partition_13q.json"))), 19u);
    EXPECT_EQ(network_count(PartitionSpec::load(preset("partition_7q.json"))), 5u);
    EXPECT_EQ(network_count(PartitionSpec::trivial(7)), 1u);
}

TEST(topology, graph_json_round_trip) {
    const auto graph = CouplingGraph::load(preset("graph_13q.json"));
    const auto back = CouplingGraph::from_json(graph.to_json());
    EXPECT_EQ(back.qubit_count, graph.qubit_count);
    EXPECT_EQ(back.edges, graph.edges);
}

TEST(topology, partition_json_round_trip) {
    const auto spec = PartitionSpec::load(preset("partition_13q.json"));
    const auto back = PartitionSpec::from_json(spec.to_json());
    EXPECT_EQ(back.qubit_count, spec.qubit_count);
    EXPECT_EQ(back.conditional_qubits, spec.conditional_qubits);
    ASSERT_EQ(back.leaves.size(), spec.leaves.size());
    for (std::size_t i = 0; i < spec.leaves.size(); ++i) {
        EXPECT_EQ(back.leaves[i].qubits, spec.leaves[i].qubits);
        EXPECT_EQ(back.leaves[i].context, spec.leaves[i].context);
    }
}

TEST(topology, graph_rejects_bad_edges) {
    CouplingGraph g{3, {}};
    EXPECT_THROW(g.add_edge(1, 1), std::invalid_argument);
    EXPECT_THROW(g.add_edge(0, 3), std::invalid_argument);
}
