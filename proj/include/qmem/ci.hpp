#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qmem/dataset.hpp"
#include "qmem/mlp.hpp"
#include "qmem/parallel.hpp"
#include "qmem/recombine.hpp"

namespace qmem {

/// Knobs for CI training. tau_skip drops (sample, slice) pairs whose
/// context mass is statistically meaningless; it may not go below the
/// conditioning threshold.
struct TrainConfig {
    TrainSchedule schedule{};        // 300 epochs, batch 16
    double learning_rate = 1e-4;
    double tau_skip = 1e-6;

    /// Which layers stay trainable in a transferred network.
    enum class TransferScope { kLastHiddenAndOutput, kOutputOnly };
    TransferScope transfer_scope = TransferScope::kLastHiddenAndOutput;

    void validate() const {
        if (tau_skip < kTauCond)
            throw std::invalid_argument(
                "TrainConfig: tau_skip must be >= the conditioning threshold");
    }

    /// Raises tau_skip to the smallest nonzero empirical frequency.
    static double default_tau_skip(std::uint64_t shots) {
        return shots == 0 ? 1e-6 : std::max(1e-6, 1.0 / static_cast<double>(shots));
    }

    std::uint64_t fingerprint(std::uint64_t seed, const std::string& label) const {
        std::string text = label + "|" + std::to_string(schedule.epochs) + "|" +
                           std::to_string(schedule.batch_size) + "|" + dtoa17(learning_rate) +
                           "|" + dtoa17(tau_skip) + "|" + std::to_string(seed) + "|" +
                           (transfer_scope == TransferScope::kOutputOnly ? "out" : "lh+out");
        return fnv1a64(text);
    }
};

/// A trained network plus its training provenance.
struct NetRecord {
    Mlp net;
    double train_seconds = 0.0;
    std::size_t pairs_used = 0;
    std::size_t pairs_skipped = 0;
    std::uint64_t fingerprint = 0;
    std::optional<std::string> transferred_from;
};

/// The trained CI mitigator: one network per (leaf, context basis state)
/// and one per conditional qubit, bound to the partition they serve.
struct CiModel {
    PartitionSpec spec;
    std::map<LeafSliceKey, NetRecord> leaf_nets;
    std::map<std::size_t, NetRecord> cond_nets;

    std::size_t network_count() const { return leaf_nets.size() + cond_nets.size(); }

    std::size_t trainable_param_count() const {
        std::size_t count = 0;
        for (const auto& [key, record] : leaf_nets) count += record.net.trainable_param_count();
        for (const auto& [q, record] : cond_nets) count += record.net.trainable_param_count();
        return count;
    }

    void save(const std::filesystem::path& path) const;
    static CiModel load(const std::filesystem::path& path);
};

namespace detail {

inline std::vector<QubitAssignment> context_assignment(const Leaf& leaf,
                                                       std::size_t assignment) {
    std::vector<QubitAssignment> given(leaf.context.size());
    for (std::size_t j = 0; j < leaf.context.size(); ++j)
        given[j] = {leaf.context[j], bit_at(assignment, j)};
    return given;
}

}  // namespace detail

/// Training pairs for one (leaf, context assignment) slice: the noisy and
/// ideal conditionals of each sample, with qubits outside leaf+context
/// marginalized out. A pair is kept only when the assignment carries at
/// least tau_skip mass in both distributions.
inline std::vector<TrainingPair> extract_pairs(const Dataset& dataset,
                                               const PartitionSpec& spec,
                                               std::size_t leaf_index, std::size_t assignment,
                                               double tau_skip,
                                               std::size_t* skipped = nullptr) {
    const Leaf& leaf = spec.leaves.at(leaf_index);
    if (leaf.context.size() < 64 && (assignment >> leaf.context.size()) != 0)
        throw std::invalid_argument("extract_pairs: assignment out of range");
    const auto given = detail::context_assignment(leaf, assignment);

    std::vector<TrainingPair> pairs;
    pairs.reserve(dataset.samples.size());
    std::size_t dropped = 0;
    for (const auto& sample : dataset.samples) {
        const double noisy_mass = assignment_mass(sample.noisy, given);
        const double ideal_mass = assignment_mass(sample.ideal, given);
        if (noisy_mass < tau_skip || ideal_mass < tau_skip) {
            ++dropped;
            continue;
        }
        pairs.emplace_back(to_vector(condition(sample.noisy, leaf.qubits, given)),
                           to_vector(condition(sample.ideal, leaf.qubits, given)));
    }
    if (skipped) *skipped += dropped;
    return pairs;
}

namespace detail {

inline NetRecord train_net_record(Mlp net, const std::vector<TrainingPair>& pairs,
                                  std::size_t skipped, const TrainConfig& config,
                                  std::uint64_t seed, const std::string& label) {
    const auto started = std::chrono::steady_clock::now();
    AdamState opt = AdamState::for_net(net, config.learning_rate);
    RngStream shuffle_rng = RngStream::derive(seed, label + "/shuffle");
    train(net, pairs, opt, config.schedule, shuffle_rng);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    return NetRecord{std::move(net), elapsed.count(), pairs.size(), skipped,
                     config.fingerprint(seed, label), std::nullopt};
}

inline std::vector<TrainingPair> marginal_pairs(const Dataset& dataset, std::size_t qubit) {
    std::vector<TrainingPair> pairs;
    pairs.reserve(dataset.samples.size());
    for (const auto& sample : dataset.samples)
        pairs.emplace_back(to_vector(marginalize(sample.noisy, {qubit})),
                           to_vector(marginalize(sample.ideal, {qubit})));
    return pairs;
}

inline void check_spec_for_training(const Dataset& dataset, const PartitionSpec& spec) {
    const auto structural = spec.structural_errors();
    if (!structural.empty())
        throw TrainingError("partition is structurally invalid: " + structural.front());
    if (dataset.meta.qubit_count != spec.qubit_count)
        throw TrainingError("dataset and partition qubit counts differ");
    if (dataset.samples.empty()) throw TrainingError("dataset is empty");
}

/// From-scratch training of every network except the leaves listed in
/// `excluded_leaves`. Labels depend only on the network's identity, so the
/// same network trains identically whether or not others are excluded.
inline void train_scratch_nets(CiModel& model, const Dataset& dataset,
                               const PartitionSpec& spec, const TrainConfig& config,
                               std::uint64_t seed, unsigned threads,
                               const std::set<std::size_t>& excluded_leaves) {
    struct Task {
        bool is_leaf;
        std::size_t leaf_index;
        std::size_t assignment;
        std::size_t cond_qubit;
    };
    std::vector<Task> tasks;
    for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
        if (excluded_leaves.count(li)) continue;
        for (std::size_t a = 0; a < (std::size_t{1} << spec.leaves[li].context.size()); ++a)
            tasks.push_back({true, li, a, 0});
    }
    for (std::size_t c : spec.conditional_qubits) tasks.push_back({false, 0, 0, c});

    std::vector<std::pair<LeafSliceKey, NetRecord>> leaf_results(tasks.size());
    std::vector<std::pair<std::size_t, NetRecord>> cond_results(tasks.size());
    parallel_for(
        tasks.size(),
        [&](std::size_t ti) {
            const Task& task = tasks[ti];
            if (task.is_leaf) {
                const Leaf& leaf = spec.leaves[task.leaf_index];
                const std::string label = "net/leaf" + std::to_string(task.leaf_index) + "/a" +
                                          std::to_string(task.assignment);
                std::size_t skipped = 0;
                const auto pairs = extract_pairs(dataset, spec, task.leaf_index,
                                                 task.assignment, config.tau_skip, &skipped);
                if (pairs.empty())
                    throw TrainingError("no usable pairs for leaf " +
                                        std::to_string(task.leaf_index) +
                                        ", context assignment " +
                                        std::to_string(task.assignment));
                Mlp net = Mlp::init(Mlp::default_dims(std::size_t{1} << leaf.qubits.size()),
                                    RngStream::derive(seed, label + "/init").next_u64());
                leaf_results[ti] = {LeafSliceKey{task.leaf_index, task.assignment},
                                    train_net_record(std::move(net), pairs, skipped, config,
                                                     seed, label)};
            } else {
                const std::string label = "net/cond" + std::to_string(task.cond_qubit);
                const auto pairs = marginal_pairs(dataset, task.cond_qubit);
                Mlp net = Mlp::init(Mlp::default_dims(2),
                                    RngStream::derive(seed, label + "/init").next_u64());
                cond_results[ti] = {task.cond_qubit,
                                    train_net_record(std::move(net), pairs, 0, config, seed,
                                                     label)};
            }
        },
        threads);
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        if (tasks[ti].is_leaf)
            model.leaf_nets.emplace(leaf_results[ti].first, std::move(leaf_results[ti].second));
        else
            model.cond_nets.emplace(cond_results[ti].first, std::move(cond_results[ti].second));
    }
}

}  // namespace detail

/// Trains the full family of networks for a partition: one per (leaf,
/// context assignment) on conditioned pairs, one per conditional qubit on
/// single-qubit marginals. Every network draws its own derived random
/// streams, so training order (and concurrency) cannot change the result.
inline CiModel train_ci(const Dataset& dataset, const PartitionSpec& spec,
                        const TrainConfig& config, std::uint64_t seed, unsigned threads = 0) {
    config.validate();
    detail::check_spec_for_training(dataset, spec);
    CiModel model{spec, {}, {}};
    detail::train_scratch_nets(model, dataset, spec, config, seed, threads, {});
    return model;
}

struct CiInferenceStats {
    std::uint64_t fallback_events = 0;  // context slices below the conditioning threshold
};

using LeafInference =
    std::function<ProbDist(std::size_t leaf, std::size_t assignment, const ProbDist& input)>;
using CondInference = std::function<ProbDist(std::size_t qubit, const ProbDist& input)>;

/// The CI inference pipeline: condition the noisy joint per (leaf,
/// assignment), push each slice and each conditional-qubit marginal
/// through the supplied maps, and recombine. Context slices carrying less
/// than the conditioning threshold get a uniform stand-in input; their
/// recombination weight is negligible by construction.
inline ProbDist ci_infer(const PartitionSpec& spec, const ProbDist& noisy,
                         const LeafInference& leaf_fn, const CondInference& cond_fn,
                         CiInferenceStats* stats = nullptr) {
    if (noisy.width() != spec.qubit_count)
        throw std::invalid_argument("ci_infer: width mismatch");
    CiFactors factors;
    for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
        const Leaf& leaf = spec.leaves[li];
        for (std::size_t a = 0; a < (std::size_t{1} << leaf.context.size()); ++a) {
            const auto given = detail::context_assignment(leaf, a);
            ProbDist input;
            if (given.empty() || assignment_mass(noisy, given) >= kTauCond) {
                input = condition(noisy, leaf.qubits, given);
            } else {
                input = ProbDist::uniform(leaf.qubits.size());
                if (stats) ++stats->fallback_events;
            }
            factors.leaf_conditionals.emplace(LeafSliceKey{li, a}, leaf_fn(li, a, input));
        }
    }
    for (std::size_t c : spec.conditional_qubits)
        factors.cond_marginals.emplace(c, cond_fn(c, marginalize(noisy, {c})));
    return recombine(spec, factors);
}

/// Mitigation with trained networks. With the trivial partition this is a
/// single forward pass, bit-identical to calling the network directly.
inline ProbDist mitigate_ci(const CiModel& model, const ProbDist& noisy,
                            CiInferenceStats* stats = nullptr) {
    return ci_infer(
        model.spec, noisy,
        [&](std::size_t li, std::size_t a, const ProbDist& input) {
            const auto it = model.leaf_nets.find({li, a});
            if (it == model.leaf_nets.end())
                throw IncompleteModelError("no network for leaf " + std::to_string(li) +
                                           ", context assignment " + std::to_string(a));
            return to_probdist(input.width(), it->second.net.forward(to_vector(input)));
        },
        [&](std::size_t qubit, const ProbDist& input) {
            const auto it = model.cond_nets.find(qubit);
            if (it == model.cond_nets.end())
                throw IncompleteModelError("no network for conditional qubit " +
                                           std::to_string(qubit));
            return to_probdist(1, it->second.net.forward(to_vector(input)));
        },
        stats);
}

/// Copy of a source network set up for fine-tuning: early hidden layers
/// frozen, the last hidden layer and the output layer (or only the output
/// layer, under the stricter scope) left trainable.
inline Mlp transfer_net(const Mlp& source, TrainConfig::TransferScope scope) {
    Mlp target = source;
    const std::size_t layers = target.layer_count();
    if (layers < 2) throw TransferError("transfer: source network too shallow");
    for (std::size_t l = 0; l < layers; ++l) target.freeze[l] = true;
    target.freeze[layers - 1] = false;
    if (scope == TrainConfig::TransferScope::kLastHiddenAndOutput)
        target.freeze[layers - 2] = false;
    return target;
}

/// CI training with transfer learning: leaves designated as targets start
/// from their source leaf's trained network (same context assignment) and
/// fine-tune only the unfrozen layers; everything else trains from
/// scratch.
inline CiModel train_citl(const Dataset& dataset, const PartitionSpec& spec,
                          const std::map<std::size_t, std::size_t>& target_to_source,
                          const TrainConfig& config, std::uint64_t seed,
                          unsigned threads = 0) {
    config.validate();
    detail::check_spec_for_training(dataset, spec);
    std::set<std::size_t> targets;
    for (const auto& [target, source] : target_to_source) {
        if (target >= spec.leaves.size() || source >= spec.leaves.size())
            throw TransferError("transfer: leaf index out of range");
        if (target == source) throw TransferError("transfer: leaf cannot be its own source");
        if (target_to_source.count(source))
            throw TransferError("transfer: source leaf is itself a transfer target");
        const Leaf& t = spec.leaves[target];
        const Leaf& s = spec.leaves[source];
        if (t.qubits.size() != s.qubits.size() || t.context.size() != s.context.size())
            throw TransferError("transfer: leaf " + std::to_string(target) + " and source " +
                                std::to_string(source) + " have incompatible shapes");
        targets.insert(target);
    }

    CiModel model{spec, {}, {}};
    detail::train_scratch_nets(model, dataset, spec, config, seed, threads, targets);

    struct TransferTask {
        std::size_t target;
        std::size_t source;
        std::size_t assignment;
    };
    std::vector<TransferTask> tasks;
    for (const auto& [target, source] : target_to_source)
        for (std::size_t a = 0; a < (std::size_t{1} << spec.leaves[target].context.size()); ++a)
            tasks.push_back({target, source, a});

    std::vector<std::pair<LeafSliceKey, NetRecord>> results(tasks.size());
    parallel_for(
        tasks.size(),
        [&](std::size_t ti) {
            const auto& task = tasks[ti];
            const std::string label = "net/leaf" + std::to_string(task.target) + "/a" +
                                      std::to_string(task.assignment) + "/finetune";
            std::size_t skipped = 0;
            const auto pairs = extract_pairs(dataset, spec, task.target, task.assignment,
                                             config.tau_skip, &skipped);
            if (pairs.empty())
                throw TrainingError("no usable pairs for leaf " + std::to_string(task.target) +
                                    ", context assignment " + std::to_string(task.assignment));
            const Mlp& source_net = model.leaf_nets.at({task.source, task.assignment}).net;
            NetRecord record =
                detail::train_net_record(transfer_net(source_net, config.transfer_scope),
                                         pairs, skipped, config, seed, label);
            record.transferred_from =
                "leaf" + std::to_string(task.source) + "/a" + std::to_string(task.assignment);
            results[ti] = {LeafSliceKey{task.target, task.assignment}, std::move(record)};
        },
        threads);
    for (auto& [key, record] : results) model.leaf_nets.emplace(key, std::move(record));
    return model;
}

inline constexpr int kCiModelFormatVersion = 1;

inline void CiModel::save(const std::filesystem::path& path) const {
    std::string out = "{\"format\":\"qmem-cimodel\",\"version\":" +
                      std::to_string(kCiModelFormatVersion) + ",\"partition\":";
    out += spec.to_json().dump();
    out += ",\"leaf_nets\":[";
    bool first = true;
    for (const auto& [key, record] : leaf_nets) {
        if (!first) out += ',';
        first = false;
        out += "{\"leaf\":" + std::to_string(key.leaf) +
               ",\"assignment\":" + std::to_string(key.assignment) +
               ",\"train_seconds\":" + dtoa17(record.train_seconds) +
               ",\"pairs_used\":" + std::to_string(record.pairs_used) +
               ",\"pairs_skipped\":" + std::to_string(record.pairs_skipped) +
               ",\"fingerprint\":\"" + hex64(record.fingerprint) + "\"";
        if (record.transferred_from)
            out += ",\"transferred_from\":\"" + *record.transferred_from + "\"";
        out += ",\"net\":" + record.net.to_text() + "}";
    }
    out += "],\"cond_nets\":[";
    first = true;
    for (const auto& [qubit, record] : cond_nets) {
        if (!first) out += ',';
        first = false;
        out += "{\"qubit\":" + std::to_string(qubit) +
               ",\"train_seconds\":" + dtoa17(record.train_seconds) +
               ",\"pairs_used\":" + std::to_string(record.pairs_used) +
               ",\"pairs_skipped\":" + std::to_string(record.pairs_skipped) +
               ",\"fingerprint\":\"" + hex64(record.fingerprint) + "\"" +
               ",\"net\":" + record.net.to_text() + "}";
    }
    out += "]}";
    spit(path, out + "\n");
}

inline CiModel CiModel::load(const std::filesystem::path& path) {
    const json j = load_json(path);
    if (j.at("format").get<std::string>() != "qmem-cimodel")
        throw std::invalid_argument("not a qmem CI model bundle");
    if (j.at("version").get<int>() != kCiModelFormatVersion)
        throw std::invalid_argument("unsupported CI model bundle version");
    CiModel model;
    model.spec = PartitionSpec::from_json(j.at("partition"));
    auto read_record = [](const json& r) {
        NetRecord record;
        record.net = Mlp::from_json(r.at("net"));
        record.train_seconds = r.at("train_seconds").get<double>();
        record.pairs_used = r.at("pairs_used").get<std::size_t>();
        record.pairs_skipped = r.at("pairs_skipped").get<std::size_t>();
        record.fingerprint = std::stoull(r.at("fingerprint").get<std::string>(), nullptr, 16);
        if (r.contains("transferred_from"))
            record.transferred_from = r.at("transferred_from").get<std::string>();
        return record;
    };
    for (const auto& r : j.at("leaf_nets"))
        model.leaf_nets.emplace(LeafSliceKey{r.at("leaf").get<std::size_t>(),
                                             r.at("assignment").get<std::size_t>()},
                                read_record(r));
    for (const auto& r : j.at("cond_nets"))
        model.cond_nets.emplace(r.at("qubit").get<std::size_t>(), read_record(r));
    return model;
}

}  // namespace qmem
