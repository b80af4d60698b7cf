#pragma once

#include <cmath>
#include <map>
#include <string>

#include "qmem/probdist.hpp"
#include "qmem/topology.hpp"

namespace qmem {

/// Identifies the network/factor for one leaf under one basis state of its
/// context. `assignment` packs the context bits little-endian: bit j is
/// the value of leaf.context[j].
struct LeafSliceKey {
    std::size_t leaf = 0;
    std::size_t assignment = 0;
    auto operator<=>(const LeafSliceKey&) const = default;
};

/// The factors of a CI-structured joint: one conditional distribution per
/// (leaf, context assignment) and one single-qubit marginal per
/// conditional qubit.
struct CiFactors {
    std::map<LeafSliceKey, ProbDist> leaf_conditionals;
    std::map<std::size_t, ProbDist> cond_marginals;
};

namespace detail {

inline std::size_t read_packed_bits(std::size_t full, const std::vector<std::size_t>& qubits) {
    std::size_t packed = 0;
    for (std::size_t j = 0; j < qubits.size(); ++j)
        packed |= static_cast<std::size_t>(bit_at(full, qubits[j])) << j;
    return packed;
}

}  // namespace detail

/// Joint distribution from CI factors:
///   p(b) = prod over leaves of p(leaf bits | context bits of b)
///        * prod over conditional qubits of p(bit of c in b).
/// Normalized by construction when every factor is normalized; checked to
/// 1e-9 to guard implementation bugs.
inline ProbDist recombine(const PartitionSpec& spec, const CiFactors& factors) {
    for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
        const auto slice_count = std::size_t{1} << spec.leaves[li].context.size();
        for (std::size_t a = 0; a < slice_count; ++a)
            if (!factors.leaf_conditionals.count({li, a}))
                throw IncompleteModelError("missing conditional for leaf " + std::to_string(li) +
                                           ", context assignment " + std::to_string(a));
    }
    for (std::size_t c : spec.conditional_qubits)
        if (!factors.cond_marginals.count(c))
            throw IncompleteModelError("missing marginal for conditional qubit " +
                                       std::to_string(c));

    std::vector<double> joint(std::size_t{1} << spec.qubit_count, 1.0);
    for (std::size_t full = 0; full < joint.size(); ++full) {
        double value = 1.0;
        for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
            const Leaf& leaf = spec.leaves[li];
            const std::size_t a = detail::read_packed_bits(full, leaf.context);
            const ProbDist& factor = factors.leaf_conditionals.at({li, a});
            value *= factor[detail::read_packed_bits(full, leaf.qubits)];
        }
        for (std::size_t c : spec.conditional_qubits)
            value *= factors.cond_marginals.at(c)[static_cast<std::size_t>(bit_at(full, c))];
        joint[full] = value;
    }
    ProbDist result(spec.qubit_count, std::move(joint));
    if (std::abs(result.sum() - 1.0) > kNormTolerance)
        throw std::logic_error("recombine: output not normalized; factor inputs suspect");
    return result;
}

/// Reads the factors of Eq-form p back out of a full joint by conditioning
/// and marginalizing. Exact for CI-structured joints, an approximation
/// otherwise. Throws ZeroMassError when a context assignment carries no
/// mass.
inline CiFactors extract_factors(const PartitionSpec& spec, const ProbDist& joint) {
    CiFactors factors;
    for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
        const Leaf& leaf = spec.leaves[li];
        const auto slice_count = std::size_t{1} << leaf.context.size();
        for (std::size_t a = 0; a < slice_count; ++a) {
            std::vector<QubitAssignment> given(leaf.context.size());
            for (std::size_t j = 0; j < leaf.context.size(); ++j)
                given[j] = {leaf.context[j], bit_at(a, j)};
            factors.leaf_conditionals.emplace(LeafSliceKey{li, a},
                                              condition(joint, leaf.qubits, given));
        }
    }
    for (std::size_t c : spec.conditional_qubits)
        factors.cond_marginals.emplace(c, marginalize(joint, {c}));
    return factors;
}

}  // namespace qmem
