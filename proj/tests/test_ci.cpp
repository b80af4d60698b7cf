#include "qmem/ci.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "test_util.hpp"

using namespace qmem;
using qmem::testing::max_abs_diff;
using qmem::testing::preset;

namespace {

NoiseModel identity_model(std::size_t n) {
    NoiseModel m;
    m.qubit_count = n;
    m.eps01.assign(n, 0.0);
    m.eps10.assign(n, 0.0);
    m.seed = 5;
    return m;
}

NoiseModel mild_model(std::size_t n, double alpha = 0.0) {
    NoiseModel m;
    m.qubit_count = n;
    m.eps01.assign(n, 0.02);
    m.eps10.assign(n, 0.04);
    m.alpha = alpha;
    m.seed = 5;
    return m;
}

PartitionSpec seven_qubit_spec() { return PartitionSpec::load(preset("partition_7q.json")); }

Dataset dataset_7q(std::size_t count, const NoiseModel& m, std::uint64_t seed,
                   std::uint64_t shots = 0) {
    return generate(7, count, shots, m, CouplingGraph::line(7), seed);
}

TrainConfig tiny_config(std::size_t epochs) {
    TrainConfig config;
    config.schedule = {epochs, 16};
    return config;
}

}  // namespace

TEST(ci, extract_pairs_identity_noise_gives_equal_conditionals) {
    const Dataset d = dataset_7q(30, identity_model(7), 7);
    const PartitionSpec spec = seven_qubit_spec();
    for (std::size_t a : {0, 1}) {
        const auto pairs = extract_pairs(d, spec, 0, a, 1e-6);
        EXPECT_EQ(pairs.size(), 30u);
        for (const auto& [noisy, ideal] : pairs)
            EXPECT_LE((noisy - ideal).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(ci, ideal_conditionals_of_product_states_ignore_the_assignment) {
    const Dataset d = dataset_7q(10, mild_model(7), 11);
    const PartitionSpec spec = seven_qubit_spec();
    const auto pairs0 = extract_pairs(d, spec, 0, 0, 1e-6);
    const auto pairs1 = extract_pairs(d, spec, 0, 1, 1e-6);
    ASSERT_EQ(pairs0.size(), pairs1.size());
    for (std::size_t i = 0; i < pairs0.size(); ++i)
        EXPECT_LE((pairs0[i].second - pairs1[i].second).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ci, extracted_pair_matches_brute_force_conditioning) {
    const Dataset d = dataset_7q(3, mild_model(7, 0.05), 13, 4096);
    const PartitionSpec spec = seven_qubit_spec();
    const auto pairs = extract_pairs(d, spec, 1, 1, 1e-9);  // leaf {4,5,6}, q3 = 1
    ASSERT_EQ(pairs.size(), 3u);

    const Sample& sample = d.samples[0];
    double slice[8] = {0};
    double mass = 0.0;
    for (std::size_t b = 0; b < 128; ++b) {
        if (bit_at(b, 3) != 1) continue;
        const std::size_t inside =
            static_cast<std::size_t>(bit_at(b, 4)) | (bit_at(b, 5) << 1) | (bit_at(b, 6) << 2);
        slice[inside] += sample.noisy[b];
        mass += sample.noisy[b];
    }
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(pairs[0].first(k), slice[k] / mass, 1e-13);
}

TEST(ci, low_mass_slices_are_skipped) {
    // Point the context qubit at |0> so the q3 = 1 slice has zero mass.
    Dataset d = dataset_7q(5, identity_model(7), 17);
    for (auto& sample : d.samples) {
        sample.thetas.thetas[3] = 0.0;
        sample.ideal = ideal_dist(sample.thetas);
        sample.noisy = sample.ideal;
    }
    const PartitionSpec spec = seven_qubit_spec();
    std::size_t skipped = 0;
    const auto kept = extract_pairs(d, spec, 0, 1, 1e-6, &skipped);
    EXPECT_TRUE(kept.empty());
    EXPECT_EQ(skipped, 5u);

    try {
        train_ci(d, spec, tiny_config(1), 1);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("assignment 1"), std::string::npos);
    }
}

TEST(ci, slice_coverage_over_a_thousand_uniform_samples) {
    const auto noise = NoiseModel::load(preset("noise_paper_like_7q.json"));
    const auto graph = CouplingGraph::load(preset("graph_7q_line.json"));
    const Dataset d = generate(7, 1000, 32000, noise, graph, 2025);
    const PartitionSpec spec = seven_qubit_spec();
    const double tau = TrainConfig::default_tau_skip(32000);
    for (std::size_t li = 0; li < spec.leaves.size(); ++li)
        for (std::size_t a = 0; a < 2; ++a)
            EXPECT_GE(extract_pairs(d, spec, li, a, tau).size(), 1u);
}

TEST(ci, trivial_partition_reduces_to_a_single_forward_pass) {
    const Dataset d = generate(2, 40, 0, mild_model(2), CouplingGraph::line(2), 19);
    const PartitionSpec trivial = PartitionSpec::trivial(2);
    const CiModel model = train_ci(d, trivial, tiny_config(3), 23);
    ASSERT_EQ(model.network_count(), 1u);

    RngStream rng(29);
    const ProbDist noisy = qmem::testing::random_dist(2, rng);
    const ProbDist via_ci = mitigate_ci(model, noisy);
    const Eigen::VectorXd direct =
        model.leaf_nets.at({0, 0}).net.forward(to_vector(noisy));
    for (std::size_t i = 0; i < via_ci.size(); ++i)
        EXPECT_EQ(via_ci[i], direct(static_cast<Eigen::Index>(i)));  // bit-identical
}

TEST(ci, seven_qubit_model_structure_and_parameter_totals) {
    const Dataset d = dataset_7q(60, mild_model(7), 31);
    const PartitionSpec spec = seven_qubit_spec();
    const CiModel model = train_ci(d, spec, tiny_config(1), 37);
    EXPECT_EQ(model.network_count(), 5u);
    EXPECT_EQ(model.network_count(), network_count(spec));
    EXPECT_EQ(model.trainable_param_count(), 22814u);
    for (const auto& [key, record] : model.leaf_nets) EXPECT_GE(record.pairs_used, 1u);
}

TEST(ci, mitigation_with_identity_maps_reproduces_product_inputs) {
    const PartitionSpec spec = seven_qubit_spec();
    RngStream rng(41);
    const ProbDist input = ideal_dist(sample_angles(7, rng));
    const ProbDist output = ci_infer(
        spec, input,
        [](std::size_t, std::size_t, const ProbDist& conditional) { return conditional; },
        [](std::size_t, const ProbDist& marginal) { return marginal; });
    EXPECT_LE(max_abs_diff(output, input), 1e-9);
}

TEST(ci, mitigated_output_is_normalized) {
    const Dataset d = dataset_7q(40, mild_model(7, 0.1), 43, 2048);
    const PartitionSpec spec = seven_qubit_spec();
    const CiModel model = train_ci(d, spec, tiny_config(2), 47);
    RngStream rng(53);
    for (int trial = 0; trial < 5; ++trial) {
        const ProbDist noisy =
            apply_noise(mild_model(7, 0.1), CouplingGraph::line(7),
                        ideal_dist(sample_angles(7, rng)));
        const ProbDist out = mitigate_ci(model, noisy);
        EXPECT_NEAR(out.sum(), 1.0, 1e-9);
    }
}

TEST(ci, unreachable_context_slices_fall_back_to_uniform_inputs) {
    const Dataset d = dataset_7q(40, identity_model(7), 59);
    const PartitionSpec spec = seven_qubit_spec();
    const CiModel model = train_ci(d, spec, tiny_config(1), 61);

    // q3 pinned to 0: the q3=1 slices of both leaves carry no mass.
    AngleVector angles{{1.0, 1.2, 0.7, 0.0, 2.0, 0.4, 1.6}};
    CiInferenceStats stats;
    const ProbDist out = mitigate_ci(model, ideal_dist(angles), &stats);
    EXPECT_EQ(stats.fallback_events, 2u);
    EXPECT_NEAR(out.sum(), 1.0, 1e-9);
}

TEST(ci, missing_network_raises_incomplete_model) {
    const Dataset d = dataset_7q(20, identity_model(7), 67);
    const PartitionSpec spec = seven_qubit_spec();
    CiModel model = train_ci(d, spec, tiny_config(1), 71);
    model.leaf_nets.erase({1, 0});
    RngStream rng(73);
    EXPECT_THROW(mitigate_ci(model, ideal_dist(sample_angles(7, rng))),
                 IncompleteModelError);
}

TEST(ci, transfer_freezes_early_layers_and_keeps_behavior_at_zero_epochs) {
    const Mlp source = Mlp::init({8, 40, 40, 40, 40, 8}, 79);
    const Mlp target = transfer_net(source, TrainConfig::TransferScope::kLastHiddenAndOutput);
    EXPECT_EQ(target.freeze, (std::vector<bool>{true, true, true, false, false}));
    EXPECT_EQ(target.trainable_param_count(), 1968u);
    const Mlp strict = transfer_net(source, TrainConfig::TransferScope::kOutputOnly);
    EXPECT_EQ(strict.trainable_param_count(), 328u);

    RngStream rng(83);
    const Eigen::VectorXd x = to_vector(qmem::testing::random_dist(3, rng));
    EXPECT_EQ(source.forward(x), target.forward(x));  // copy is exact
}

TEST(ci, citl_structure_totals_and_frozen_layers) {
    const Dataset d = dataset_7q(60, mild_model(7), 89, 1024);
    const PartitionSpec spec = seven_qubit_spec();
    const TrainConfig config = tiny_config(2);
    const CiModel ci = train_ci(d, spec, config, 97);
    const CiModel citl = train_citl(d, spec, {{1, 0}}, config, 97);

    EXPECT_EQ(ci.trainable_param_count(), 22814u);
    EXPECT_EQ(citl.trainable_param_count(), 2 * 5608u + 2 * 1968u + 382u);
    EXPECT_LT(citl.trainable_param_count(), ci.trainable_param_count());

    // Non-target networks train identically in both modes.
    for (std::size_t a : {0, 1}) {
        EXPECT_EQ(citl.leaf_nets.at({0, a}).net.weights[4],
                  ci.leaf_nets.at({0, a}).net.weights[4]);
        EXPECT_FALSE(citl.leaf_nets.at({0, a}).transferred_from.has_value());
    }
    EXPECT_EQ(citl.cond_nets.at(3).net.weights[0], ci.cond_nets.at(3).net.weights[0]);

    // Target networks: frozen layers bit-identical to their sources.
    for (std::size_t a : {0, 1}) {
        const NetRecord& target = citl.leaf_nets.at({1, a});
        const NetRecord& source = citl.leaf_nets.at({0, a});
        ASSERT_TRUE(target.transferred_from.has_value());
        for (std::size_t l = 0; l < 3; ++l) {
            EXPECT_EQ(target.net.weights[l], source.net.weights[l]);
            EXPECT_EQ(target.net.biases[l], source.net.biases[l]);
        }
        EXPECT_NE(target.net.weights[4], source.net.weights[4]);  // fine-tuned
    }
}

TEST(ci, citl_zero_epoch_fine_tuning_behaves_like_the_source) {
    const Dataset d = dataset_7q(30, mild_model(7), 101);
    const PartitionSpec spec = seven_qubit_spec();
    const CiModel citl = train_citl(d, spec, {{1, 0}}, tiny_config(0), 103);
    RngStream rng(107);
    const Eigen::VectorXd x = to_vector(qmem::testing::random_dist(3, rng));
    for (std::size_t a : {0, 1})
        EXPECT_EQ(citl.leaf_nets.at({1, a}).net.forward(x),
                  citl.leaf_nets.at({0, a}).net.forward(x));
}

TEST(ci, transfer_rejects_incompatible_designations) {
    const Dataset d5 = generate(5, 20, 0, identity_model(5), CouplingGraph::line(5), 109);
    // Leaves {0,1} and {3,4}... sizes differ from {3} so transfer must fail.
    const PartitionSpec spec{5, {2}, {Leaf{{0, 1}, {2}}, Leaf{{3, 4}, {2}}}};
    PartitionSpec uneven = spec;
    uneven.leaves[1] = Leaf{{3}, {2}};
    uneven.leaves.push_back(Leaf{{4}, {2}});

    EXPECT_THROW(train_citl(d5, uneven, {{1, 0}}, tiny_config(1), 1), TransferError);
    EXPECT_THROW(train_citl(d5, spec, {{0, 0}}, tiny_config(1), 1), TransferError);
    EXPECT_THROW(train_citl(d5, spec, {{0, 7}}, tiny_config(1), 1), TransferError);
    // A source that is itself a target is rejected.
    EXPECT_THROW(train_citl(d5, spec, {{0, 1}, {1, 0}}, tiny_config(1), 1), TransferError);
}

TEST(ci, two_bit_contexts_index_correctly) {
    // 5-qubit partition with two conditional qubits and 2-bit contexts.
    const PartitionSpec spec{5, {1, 3}, {Leaf{{0}, {1, 3}}, Leaf{{2}, {1, 3}}, Leaf{{4}, {3}}}};
    EXPECT_TRUE(spec.structural_errors().empty());
    EXPECT_EQ(network_count(spec), 4u + 4u + 2u + 2u);

    const Dataset d = generate(5, 80, 0, mild_model(5), CouplingGraph::line(5), 113);
    const CiModel model = train_ci(d, spec, tiny_config(1), 127);
    EXPECT_EQ(model.network_count(), 12u);
    RngStream rng(131);
    const ProbDist noisy =
        apply_noise(mild_model(5), CouplingGraph::line(5), ideal_dist(sample_angles(5, rng)));
    EXPECT_NEAR(mitigate_ci(model, noisy).sum(), 1.0, 1e-9);
}

TEST(ci, training_is_deterministic_across_runs) {
    const Dataset d = dataset_7q(40, mild_model(7), 137, 512);
    const PartitionSpec spec = seven_qubit_spec();
    const CiModel a = train_ci(d, spec, tiny_config(2), 139);
    const CiModel b = train_ci(d, spec, tiny_config(2), 139);
    for (const auto& [key, record] : a.leaf_nets)
        for (std::size_t l = 0; l < record.net.layer_count(); ++l)
            EXPECT_EQ(record.net.weights[l], b.leaf_nets.at(key).net.weights[l]);
}

TEST(ci, model_bundle_round_trip_is_bit_exact) {
    const Dataset d = dataset_7q(20, mild_model(7), 149, 256);
    const PartitionSpec spec = seven_qubit_spec();
    const CiModel model = train_citl(d, spec, {{1, 0}}, tiny_config(1), 151);
    const auto path = std::filesystem::temp_directory_path() / "qmem_test_cimodel.json";
    model.save(path);
    const CiModel back = CiModel::load(path);
    EXPECT_EQ(back.network_count(), model.network_count());
    EXPECT_EQ(back.trainable_param_count(), model.trainable_param_count());
    for (const auto& [key, record] : model.leaf_nets) {
        const NetRecord& loaded = back.leaf_nets.at(key);
        EXPECT_EQ(loaded.transferred_from, record.transferred_from);
        EXPECT_EQ(loaded.fingerprint, record.fingerprint);
        for (std::size_t l = 0; l < record.net.layer_count(); ++l) {
            EXPECT_EQ(loaded.net.weights[l], record.net.weights[l]);
            EXPECT_EQ(loaded.net.freeze, record.net.freeze);
        }
    }
}
