#include <gtest/gtest.h>

#include <set>

#include "bridgelab/rng.hpp"
#include "bridgelab/tensor.hpp"

using namespace bridgelab;

TEST(SeededRng, EqualSeedsGiveBitwiseEqualStreams) {
    SeededRng a(42), b(42);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    SeededRng c(42), d(42);
    Tensor ta = Tensor::randn(Shape{3, 7}, c);
    Tensor tb = Tensor::randn(Shape{3, 7}, d);
    EXPECT_TRUE(ta == tb);
}

TEST(SeededRng, DifferentSeedsDiverge) {
    SeededRng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    EXPECT_EQ(same, 0);
}

TEST(SeededRng, UniformRange) {
    SeededRng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(SeededRng, UniformIntBounds) {
    SeededRng rng(8);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.uniform_int(13), 13u);
}

TEST(SeededRng, NormalMomentsRoughlyStandard) {
    SeededRng rng(9);
    const int n = 40000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.02);
    EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(SeededRng, ForkIsStableAndIndependentOfParentPosition) {
    SeededRng a(100);
    SeededRng child1 = a.fork(5);
    a.next_u64();
    a.next_u64();
    SeededRng child2 = a.fork(5);
    EXPECT_EQ(child1.next_u64(), child2.next_u64());

    SeededRng other = a.fork(6);
    SeededRng base = a.fork(5);
    EXPECT_NE(other.next_u64(), base.next_u64());
}

TEST(SeededRng, SampleWithoutReplacement) {
    SeededRng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = rng.sample_without_replacement(20, 8);
        EXPECT_EQ(s.size(), 8u);
        std::set<std::size_t> uniq(s.begin(), s.end());
        EXPECT_EQ(uniq.size(), 8u);
        for (auto v : s) EXPECT_LT(v, 20u);
    }
}
