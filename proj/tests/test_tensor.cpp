#include <gtest/gtest.h>

#include <cmath>

#include "bridgelab/rng.hpp"
#include "bridgelab/tensor.hpp"

using namespace bridgelab;

TEST(TensorBasics, ShapeAndData) {
    Tensor t(Shape{2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_DOUBLE_EQ(t.at(1, 2), 1.5);
    EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1.0}), ShapeError);
}

TEST(TensorBasics, FiniteGuard) {
    Tensor a = tensor1d({1.0, 2.0});
    Tensor z = tensor1d({0.0, 1.0});
    EXPECT_THROW(div(a, z), NumericError);
    Tensor big = tensor1d({1e308, 1e308});
    EXPECT_THROW(add(big, big), NumericError);
}

TEST(Matmul, IdentityCase) {
    Tensor eye = tensor2d({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    SeededRng rng(11);
    Tensor a = Tensor::randn(Shape{3, 4}, rng);
    EXPECT_TRUE(allclose(matmul(eye, a), a));
}

TEST(Matmul, HandExpansion) {
    Tensor a = tensor2d({{1, 2}, {3, 4}});
    Tensor b = tensor2d({{1}, {1}});
    Tensor c = matmul(a, b);
    EXPECT_TRUE(allclose(c, tensor2d({{3}, {7}})));
}

TEST(Matmul, ZerosAnnihilate) {
    SeededRng rng(12);
    Tensor a = Tensor::randn(Shape{4, 5}, rng);
    Tensor z = Tensor::zeros(Shape{3, 4});
    EXPECT_TRUE(allclose(matmul(z, a), Tensor::zeros(Shape{3, 5})));
}

TEST(Matmul, ShapeMismatch) {
    Tensor a(Shape{2, 3});
    Tensor b(Shape{2, 3});
    EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Conv2d, DirectDefinition) {
    Tensor x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor w(Shape{1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor y = conv2d(x, w, 1, 0);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(y[0], 5.0);
}

TEST(Conv2d, OneByOneIdentityKernel) {
    SeededRng rng(13);
    Tensor x = Tensor::randn(Shape{2, 1, 3, 3}, rng);
    Tensor w = Tensor::ones(Shape{1, 1, 1, 1});
    EXPECT_TRUE(allclose(conv2d(x, w), x));
}

TEST(Conv2d, ZeroKernel) {
    SeededRng rng(14);
    Tensor x = Tensor::randn(Shape{1, 2, 4, 4}, rng);
    Tensor w = Tensor::zeros(Shape{3, 2, 2, 2});
    Tensor y = conv2d(x, w);
    EXPECT_TRUE(allclose(y, Tensor::zeros(y.shape())));
}

TEST(Conv2d, KernelLargerThanPaddedInput) {
    Tensor x(Shape{1, 1, 2, 2});
    Tensor w(Shape{1, 1, 5, 5});
    EXPECT_THROW(conv2d(x, w, 1, 1), ShapeError);
}

TEST(Conv2d, OutputShapeFormulaAcrossRandomShapes) {
    SeededRng rng(15);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t H = 3 + rng.uniform_int(8);
        const std::size_t W = 3 + rng.uniform_int(8);
        const std::size_t kh = 1 + rng.uniform_int(3);
        const std::size_t kw = 1 + rng.uniform_int(3);
        const std::size_t s = 1 + rng.uniform_int(2);
        const std::size_t p = rng.uniform_int(2);
        Tensor x(Shape{1, 2, H, W});
        Tensor w(Shape{3, 2, kh, kw});
        Tensor y = conv2d(x, w, s, p);
        EXPECT_EQ(y.dim(2), (H + 2 * p - kh) / s + 1);
        EXPECT_EQ(y.dim(3), (W + 2 * p - kw) / s + 1);
    }
}

TEST(ReduceMeanVar, ConstantTensorHasZeroVariance) {
    Tensor t(Shape{3, 5}, 2.75);
    auto [mean, var] = reduce_mean_var(t, {0, 1});
    EXPECT_NEAR(mean[0], 2.75, 1e-15);
    EXPECT_LE(var[0], 1e-15);
}

TEST(ReduceMeanVar, HandComputedBiasedEstimator) {
    Tensor t = tensor1d({1, 2, 3, 4});
    auto [mean, var] = reduce_mean_var(t, {0});
    EXPECT_DOUBLE_EQ(mean[0], 2.5);
    EXPECT_DOUBLE_EQ(var[0], 1.25);
}

TEST(ReduceMeanVar, ConcatSymmetry) {
    SeededRng rng(16);
    Tensor x = Tensor::randn(Shape{6}, rng);
    Tensor xx = concat({x, x}, 0);
    auto [m1, v1] = reduce_mean_var(x, {0});
    auto [m2, v2] = reduce_mean_var(xx, {0});
    EXPECT_NEAR(m1[0], m2[0], 1e-12);
    EXPECT_NEAR(v1[0], v2[0], 1e-12);
}

TEST(ReduceMeanVar, EmptyReductionRejected) {
    Tensor t(Shape{2, 2});
    EXPECT_THROW(reduce_mean_var(t, {}), ShapeError);
}

TEST(Softmax, UniformOnZeros) {
    Tensor t = Tensor::zeros(Shape{7});
    Tensor p = softmax(t, 0);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p[i], 1.0 / 7.0, 1e-15);
}

TEST(Softmax, ShiftInvariance) {
    SeededRng rng(17);
    Tensor x = Tensor::randn(Shape{4, 6}, rng);
    Tensor shifted = add_scalar(x, 3.7);
    EXPECT_LE(max_abs_diff(softmax(x, 1), softmax(shifted, 1)), 1e-12);
}

TEST(Softmax, ClosedFormLogs) {
    Tensor x = tensor1d({std::log(1.0), std::log(2.0), std::log(3.0)});
    Tensor p = softmax(x, 0);
    EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-12);
    EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-12);
    EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAcrossRandomShapes) {
    SeededRng rng(18);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t r = 1 + rng.uniform_int(5);
        const std::size_t c = 1 + rng.uniform_int(9);
        Tensor x = Tensor::randn(Shape{r, c}, rng, 5.0);
        Tensor p = softmax(x, 1);
        for (std::size_t i = 0; i < r; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                s += p.at(i, j);
                EXPECT_GE(p.at(i, j), 0.0);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Broadcasting, AddChannelBias) {
    Tensor x(Shape{2, 3, 2, 2}, 1.0);
    Tensor b(Shape{1, 3, 1, 1}, {10, 20, 30});
    Tensor y = add(x, b);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 11.0);
    EXPECT_DOUBLE_EQ(y.at(1, 2, 1, 1), 31.0);
}

TEST(Broadcasting, OuterSum) {
    Tensor col(Shape{3, 1}, {1, 2, 3});
    Tensor row(Shape{1, 2}, {10, 20});
    Tensor y = add(col, row);
    EXPECT_TRUE(allclose(y, tensor2d({{11, 21}, {12, 22}, {13, 23}})));
}

TEST(Broadcasting, IncompatibleShapes) {
    EXPECT_THROW(add(Tensor(Shape{2, 3}), Tensor(Shape{2, 4})), ShapeError);
}

TEST(Broadcasting, ReduceToInvertsBroadcast) {
    SeededRng rng(19);
    Tensor g = Tensor::randn(Shape{2, 3, 2, 2}, rng);
    Tensor r = reduce_to(g, Shape{1, 3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) {
        double expect = 0.0;
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t h = 0; h < 2; ++h)
                for (std::size_t w = 0; w < 2; ++w) expect += g.at(n, c, h, w);
        EXPECT_NEAR(r[c], expect, 1e-12);
    }
}

TEST(ShapeOps, ReshapeConcatSlice) {
    Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = reshape(t, Shape{3, 2});
    EXPECT_DOUBLE_EQ(r.at(2, 1), 6.0);
    EXPECT_THROW(reshape(t, Shape{4, 2}), ShapeError);

    Tensor c = concat({t, t}, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 6}));
    EXPECT_DOUBLE_EQ(c.at(0, 3), 1.0);

    Tensor s = slice(c, 1, 3, 3);
    EXPECT_TRUE(allclose(s, t));
    EXPECT_THROW(slice(c, 1, 4, 3), ShapeError);
}

TEST(Pooling, MaxAndAvg) {
    Tensor x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor mx = pool2d(x, 2, 2, PoolKind::max);
    Tensor av = pool2d(x, 2, 2, PoolKind::avg);
    EXPECT_DOUBLE_EQ(mx[0], 4.0);
    EXPECT_DOUBLE_EQ(av[0], 2.5);
}

TEST(Pooling, MaxTieRoutesToFirstIndex) {
    Tensor x(Shape{1, 1, 2, 2}, {7, 7, 7, 7});
    Tensor g(Shape{1, 1, 1, 1}, {1.0});
    Tensor dx = pool2d_backward(g, x, 2, 2, PoolKind::max);
    EXPECT_DOUBLE_EQ(dx[0], 1.0);
    EXPECT_DOUBLE_EQ(dx[1], 0.0);
    EXPECT_DOUBLE_EQ(dx[2], 0.0);
    EXPECT_DOUBLE_EQ(dx[3], 0.0);
}

TEST(Pooling, OutputShapePureFunctionOfInputShape) {
    SeededRng rng(20);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t H = 2 + rng.uniform_int(8);
        const std::size_t W = 2 + rng.uniform_int(8);
        const std::size_t k = 1 + rng.uniform_int(std::min(H, W));
        const std::size_t s = 1 + rng.uniform_int(2);
        Tensor x(Shape{2, 3, H, W});
        Tensor y = pool2d(x, k, s, PoolKind::avg);
        EXPECT_EQ(y.shape(), (Shape{2, 3, (H - k) / s + 1, (W - k) / s + 1}));
    }
}
