#include <gtest/gtest.h>

#include "synnet/tensor.hpp"

using namespace synnet;

TEST(Shape, ZeroDimensionRejected) {
    EXPECT_THROW(Tensor<float>(Shape4{1, 0, 2, 2}), ShapeError);
    EXPECT_THROW(tensor_new<double>(Shape4{0, 1, 1, 1}, 0.0), ShapeError);
}

TEST(Shape, HugeCountRejected) {
    const std::size_t big = std::size_t{1} << 40;
    EXPECT_THROW(require_valid(Shape4{big, big, 1, 1}), ShapeError);
}

TEST(Tensor, NewFills) {
    const auto z = tensor_new<double>(Shape4{1, 1, 2, 2}, 0.0);
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
    const auto one = tensor_new<double>(Shape4{1, 1, 1, 1}, 3.5);
    EXPECT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], 3.5);
    const auto ones = tensor_new<float>(Shape4{2, 3, 4, 4}, 1.0f);
    EXPECT_EQ(ones.size(), 96u);
    EXPECT_EQ(sum(ones), 96.0);
}

TEST(Tensor, RowMajorIndexing) {
    Tensor<double> t(Shape4{2, 3, 4, 5});
    t(1, 2, 3, 4) = 7.0;
    t(0, 1, 2, 3) = 5.0;
    EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0);
    EXPECT_EQ(t[((0 * 3 + 1) * 4 + 2) * 5 + 3], 5.0);
    EXPECT_EQ(t[t.size() - 1], 7.0);
    EXPECT_THROW(t.at(2, 0, 0, 0), ShapeError);
}

TEST(Tensor, ValueCountMustMatchShape) {
    EXPECT_THROW(Tensor<float>(Shape4{1, 1, 2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, EqualityIsBitwise) {
    Tensor<double> a(Shape4{1, 1, 1, 1}, 0.0), b(Shape4{1, 1, 1, 1}, -0.0);
    EXPECT_FALSE(a == b);
    EXPECT_TRUE(a == a);
}

TEST(Tensor, ElementwiseOpsRequireSameShape) {
    Tensor<float> a(Shape4{1, 1, 2, 2}, 1.f), b(Shape4{1, 1, 2, 3}, 1.f);
    EXPECT_THROW(a += b, ShapeError);
    Tensor<float> c(Shape4{1, 1, 2, 2}, 2.f);
    a += c;
    EXPECT_EQ(a[3], 3.f);
}

TEST(Rng, SameSeedSameTensor) {
    RngStream r1(9), r2(9);
    const auto a = tensor_random<double>(Shape4{2, 2, 3, 3}, r1, 1.0);
    const auto b = tensor_random<double>(Shape4{2, 2, 3, 3}, r2, 1.0);
    EXPECT_TRUE(a == b);
}

TEST(Rng, ScaleBoundsValues) {
    RngStream r(1);
    const auto a = tensor_random<double>(Shape4{4, 4, 8, 8}, r, 0.1);
    EXPECT_LE(max_abs(a), 0.1);
    EXPECT_THROW(tensor_random<double>(Shape4{1, 1, 1, 1}, r, 0.0), ParameterError);
    EXPECT_THROW(tensor_random<double>(Shape4{1, 1, 1, 1}, r, -1.0), ParameterError);
}

TEST(Rng, DifferentSeedsDiffer) {
    RngStream r1(1), r2(2);
    EXPECT_FALSE(tensor_random<double>(Shape4{1, 1, 4, 4}, r1, 1.0) ==
                 tensor_random<double>(Shape4{1, 1, 4, 4}, r2, 1.0));
}

TEST(Rng, UniformIsReproducibleAndCounted) {
    RngStream r(42);
    const double u = r.uniform();
    RngStream again(42);
    EXPECT_EQ(u, again.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_EQ(r.counter(), 1u);
}

TEST(Rng, EngineMatchesStandardReference) {
    std::mt19937_64 ref;
    for (int i = 0; i < 9999; ++i) ref();
    EXPECT_EQ(ref(), 9981545732273789042ull);
    RngStream r(5489);
    std::mt19937_64 same(5489);
    EXPECT_EQ(r.next_u64(), same());
}

TEST(Rng, BelowStaysInRange) {
    RngStream r(3);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}

TEST(Concat, ShapesAndRoundtrip) {
    RngStream r(5);
    const auto a = tensor_random<float>(Shape4{1, 2, 4, 4}, r, 1.0);
    const auto b = tensor_random<float>(Shape4{1, 3, 4, 4}, r, 1.0);
    const auto c = concat_channels(a, b);
    EXPECT_EQ(c.shape(), (Shape4{1, 5, 4, 4}));
    EXPECT_TRUE(slice_channels(c, 0, 2) == a);
    EXPECT_TRUE(slice_channels(c, 2, 5) == b);
}

TEST(Concat, MismatchRejected) {
    Tensor<float> a(Shape4{1, 2, 4, 4}), b(Shape4{1, 2, 4, 5}), d(Shape4{2, 2, 4, 4});
    EXPECT_THROW(concat_channels(a, b), ShapeError);
    EXPECT_THROW(concat_channels(a, d), ShapeError);
}

TEST(Slice, IdentityAndPartition) {
    RngStream r(6);
    const auto x = tensor_random<double>(Shape4{2, 4, 2, 2}, r, 1.0);
    EXPECT_EQ(slice_channels(x, 0, 2).shape(), (Shape4{2, 2, 2, 2}));
    EXPECT_TRUE(slice_channels(x, 0, 4) == x);
    for (std::size_t k = 1; k < 4; ++k) {
        EXPECT_TRUE(concat_channels(slice_channels(x, 0, k), slice_channels(x, k, 4)) == x);
    }
    EXPECT_THROW(slice_channels(x, 2, 5), ShapeError);
    EXPECT_THROW(slice_channels(x, 3, 3), ShapeError);
}

TEST(Batch, StackAndSlice) {
    RngStream r(7);
    std::vector<Tensor<float>> items;
    for (int i = 0; i < 3; ++i) items.push_back(tensor_random<float>(Shape4{1, 2, 3, 3}, r, 1.0));
    const auto s = stack_batch<float>(items);
    EXPECT_EQ(s.shape().n, 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(slice_batch(s, i, i + 1) == items[i]);
}

TEST(Tensor, DotAndCast) {
    Tensor<double> a(Shape4{1, 1, 1, 3}, std::vector<double>{1, 2, 3});
    EXPECT_EQ(dot(a, a), 14.0);
    const auto f = a.cast<float>();
    EXPECT_EQ(f.dtype(), DType::Single);
    EXPECT_EQ(f[2], 3.0f);
}
