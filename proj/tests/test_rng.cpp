#include "qmem/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qmem;

TEST(rng, same_seed_same_sequence) {
    RngStream a(123), b(123);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(rng, derived_streams_differ_by_label) {
    RngStream a = RngStream::derive(42, "alpha");
    RngStream b = RngStream::derive(42, "beta");
    RngStream a2 = RngStream::derive(42, "alpha");
    bool any_diff = false;
    for (int i = 0; i < 16; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, a2.next_u64());
        if (x != b.next_u64()) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
}

TEST(rng, uniform_bounds_and_mean) {
    RngStream rng(7);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform();
        ASSERT_GE(x, 0.0);
        ASSERT_LT(x, 1.0);
        sum += x;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(rng, normal_moments) {
    RngStream rng(11);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.03);
}

TEST(rng, below_stays_in_range_and_covers) {
    RngStream rng(13);
    int counts[7] = {0};
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
    for (int k = 0; k < 7; ++k) {
        EXPECT_GT(counts[k], 9000);
        EXPECT_LT(counts[k], 11000);
    }
}

TEST(rng, shuffle_is_deterministic_and_a_permutation) {
    std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> b = a;
    RngStream ra(99), rb(99);
    shuffle(a, ra);
    shuffle(b, rb);
    EXPECT_EQ(a, b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(rng, fnv_reference_values) {
    EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cull);
}
