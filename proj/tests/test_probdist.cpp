#include "qmem/probdist.hpp"

#include <gtest/gtest.h>

#include "qmem/recombine.hpp"
#include "test_util.hpp"

using namespace qmem;
using qmem::testing::max_abs_diff;
using qmem::testing::product_dist;
using qmem::testing::random_dist;

TEST(bitstring, index_examples) {
    EXPECT_EQ(index_of(BitString{3, {1, 0, 0}}), 1u);
    EXPECT_EQ(index_of(BitString{3, {0, 0, 0}}), 0u);
    EXPECT_EQ(index_of(BitString{3, {1, 0, 1}}), 5u);
}

TEST(bitstring, round_trip_all_widths_up_to_6) {
    for (std::size_t w = 1; w <= 6; ++w)
        for (std::size_t k = 0; k < (std::size_t{1} << w); ++k)
            EXPECT_EQ(index_of(bits_of(k, w)), k);
}

TEST(bitstring, rejects_bad_input) {
    EXPECT_THROW(index_of(BitString{2, {0, 2}}), std::invalid_argument);
    EXPECT_THROW(index_of(BitString{3, {0, 1}}), std::invalid_argument);
    EXPECT_THROW(bits_of(4, 2), std::invalid_argument);
}

TEST(probdist, constructor_enforces_invariants) {
    EXPECT_NO_THROW(ProbDist(2, {0.1, 0.2, 0.3, 0.4}));
    EXPECT_THROW(ProbDist(2, {0.1, 0.2, 0.3}), std::invalid_argument);
    EXPECT_THROW(ProbDist(2, {-0.1, 0.5, 0.3, 0.3}), std::invalid_argument);
    EXPECT_THROW(ProbDist(2, {0.1, 0.2, 0.3, 0.3}), std::invalid_argument);
    EXPECT_THROW(ProbDist(1, {0.5, std::nan("")}), std::invalid_argument);
}

TEST(probdist, marginalize_examples) {
    const ProbDist p(2, {0.1, 0.2, 0.3, 0.4});
    const ProbDist m = marginalize(p, {0});
    EXPECT_NEAR(m[0], 0.4, 1e-15);
    EXPECT_NEAR(m[1], 0.6, 1e-15);
    EXPECT_EQ(marginalize(p, {0, 1}), p);
}

TEST(probdist, marginalize_matches_enumeration) {
    RngStream rng(7);
    const ProbDist p = random_dist(3, rng);
    const ProbDist m = marginalize(p, {1});
    double expect[2] = {0.0, 0.0};
    for (std::size_t b = 0; b < 8; ++b) expect[bit_at(b, 1)] += p[b];
    EXPECT_NEAR(m[0], expect[0], 1e-15);
    EXPECT_NEAR(m[1], expect[1], 1e-15);
}

TEST(probdist, marginalize_consistency_property) {
    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const ProbDist p = random_dist(4, rng);
        const std::vector<std::size_t> outer = {0, 2, 3};
        const ProbDist via_outer = marginalize(marginalize(p, outer), {0, 2});  // {0,3} in outer
        const ProbDist direct = marginalize(p, {0, 3});
        EXPECT_LE(max_abs_diff(via_outer, direct), 1e-12);
    }
}

TEST(probdist, marginalize_rejects_bad_subsets) {
    const ProbDist p(2, {0.25, 0.25, 0.25, 0.25});
    EXPECT_THROW(marginalize(p, {}), std::invalid_argument);
    EXPECT_THROW(marginalize(p, {2}), std::invalid_argument);
    EXPECT_THROW(marginalize(p, {1, 0}), std::invalid_argument);
    EXPECT_THROW(marginalize(p, {0, 0}), std::invalid_argument);
}

TEST(probdist, condition_example) {
    const ProbDist p(2, {0.1, 0.2, 0.3, 0.4});
    const ProbDist c = condition(p, {0}, {{1, 1}});
    EXPECT_NEAR(c[0], 3.0 / 7.0, 1e-15);
    EXPECT_NEAR(c[1], 4.0 / 7.0, 1e-15);
}

TEST(probdist, condition_on_product_state_is_marginal) {
    const ProbDist p = product_dist({0.3, 0.7, 0.2});
    for (int value : {0, 1}) {
        const ProbDist c = condition(p, {0, 2}, {{1, value}});
        const ProbDist m = marginalize(p, {0, 2});
        EXPECT_LE(max_abs_diff(c, m), 1e-12);
    }
}

TEST(probdist, condition_matches_enumeration) {
    RngStream rng(13);
    const ProbDist p = random_dist(3, rng);
    const ProbDist c = condition(p, {0, 2}, {{1, 0}});
    double mass = 0.0;
    double expect[4] = {0, 0, 0, 0};
    for (std::size_t b = 0; b < 8; ++b) {
        if (bit_at(b, 1) != 0) continue;
        mass += p[b];
        expect[bit_at(b, 0) | (bit_at(b, 2) << 1)] += p[b];
    }
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(c[k], expect[k] / mass, 1e-14);
}

TEST(probdist, condition_zero_mass_raises) {
    const ProbDist p = ProbDist::point_mass(2, 0);  // q1 = 0 almost surely
    try {
        condition(p, {0}, {{1, 1}});
        FAIL() << "expected ZeroMassError";
    } catch (const ZeroMassError& e) {
        EXPECT_LT(e.mass(), kTauCond);
        EXPECT_NE(e.assignment().find("q1=1"), std::string::npos);
    }
}

TEST(probdist, condition_rejects_bad_arguments) {
    const ProbDist p(2, {0.25, 0.25, 0.25, 0.25});
    EXPECT_THROW(condition(p, {0}, {{0, 1}}), std::invalid_argument);  // overlap
    EXPECT_THROW(condition(p, {0}, {{1, 2}}), std::invalid_argument);  // bad value
    EXPECT_THROW(condition(p, {0}, {{5, 0}}), std::invalid_argument);  // out of range
}

TEST(probdist, assignment_mass_sums_slice) {
    const ProbDist p(2, {0.1, 0.2, 0.3, 0.4});
    EXPECT_NEAR(assignment_mass(p, {{1, 1}}), 0.7, 1e-15);
    EXPECT_NEAR(assignment_mass(p, {{0, 0}, {1, 0}}), 0.1, 1e-15);
    EXPECT_NEAR(assignment_mass(p, {}), 1.0, 1e-15);
}

namespace {

PartitionSpec chain3_spec() {
    return PartitionSpec{3, {1}, {Leaf{{0}, {1}}, Leaf{{2}, {1}}}};
}

/// Joint p(q0|q1) p(q2|q1) p(q1) assembled by direct multiplication.
ProbDist build_ci_joint(const CiFactors& factors, const PartitionSpec& spec) {
    std::vector<double> values(std::size_t{1} << spec.qubit_count, 1.0);
    for (std::size_t b = 0; b < values.size(); ++b) {
        double v = 1.0;
        for (std::size_t li = 0; li < spec.leaves.size(); ++li) {
            const Leaf& leaf = spec.leaves[li];
            std::size_t ctx = 0;
            for (std::size_t j = 0; j < leaf.context.size(); ++j)
                ctx |= static_cast<std::size_t>(bit_at(b, leaf.context[j])) << j;
            std::size_t inside = 0;
            for (std::size_t j = 0; j < leaf.qubits.size(); ++j)
                inside |= static_cast<std::size_t>(bit_at(b, leaf.qubits[j])) << j;
            v *= factors.leaf_conditionals.at({li, ctx})[inside];
        }
        for (std::size_t c : spec.conditional_qubits)
            v *= factors.cond_marginals.at(c)[static_cast<std::size_t>(bit_at(b, c))];
        values[b] = v;
    }
    return ProbDist(spec.qubit_count, std::move(values));
}

}  // namespace

TEST(recombine, uniform_factors_give_uniform_joint) {
    const PartitionSpec spec = chain3_spec();
    CiFactors factors;
    factors.leaf_conditionals[{0, 0}] = ProbDist::uniform(1);
    factors.leaf_conditionals[{0, 1}] = ProbDist::uniform(1);
    factors.leaf_conditionals[{1, 0}] = ProbDist::uniform(1);
    factors.leaf_conditionals[{1, 1}] = ProbDist::uniform(1);
    factors.cond_marginals[1] = ProbDist::uniform(1);
    EXPECT_LE(max_abs_diff(recombine(spec, factors), ProbDist::uniform(3)), 1e-15);
}

TEST(recombine, product_state_round_trips) {
    const PartitionSpec spec = chain3_spec();
    const ProbDist p = product_dist({0.3, 0.6, 0.8});
    const ProbDist back = recombine(spec, extract_factors(spec, p));
    EXPECT_LE(max_abs_diff(back, p), 1e-15);
}

TEST(recombine, exact_on_ci_structured_joints) {
    RngStream rng(17);
    const PartitionSpec spec = chain3_spec();
    for (int trial = 0; trial < 50; ++trial) {
        CiFactors factors;
        for (std::size_t li = 0; li < 2; ++li)
            for (std::size_t a = 0; a < 2; ++a)
                factors.leaf_conditionals[{li, a}] = random_dist(1, rng);
        factors.cond_marginals[1] = random_dist(1, rng);

        const ProbDist joint = build_ci_joint(factors, spec);
        EXPECT_LE(max_abs_diff(recombine(spec, factors), joint), 1e-15);
        const ProbDist back = recombine(spec, extract_factors(spec, joint));
        EXPECT_LE(max_abs_diff(back, joint), 1e-12);
    }
}

TEST(recombine, normalized_output_for_random_factors) {
    RngStream rng(19);
    const PartitionSpec spec = chain3_spec();
    CiFactors factors;
    for (std::size_t li = 0; li < 2; ++li)
        for (std::size_t a = 0; a < 2; ++a)
            factors.leaf_conditionals[{li, a}] = random_dist(1, rng);
    factors.cond_marginals[1] = random_dist(1, rng);
    EXPECT_NEAR(recombine(spec, factors).sum(), 1.0, 1e-9);
}

TEST(recombine, missing_factor_raises) {
    const PartitionSpec spec = chain3_spec();
    CiFactors factors;
    factors.leaf_conditionals[{0, 0}] = ProbDist::uniform(1);
    EXPECT_THROW(recombine(spec, factors), IncompleteModelError);
}
