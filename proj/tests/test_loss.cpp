#include <gtest/gtest.h>

#include "synnet/loss.hpp"

using namespace synnet;

namespace {

Tensor<double> plane(std::size_t h, std::size_t w, std::vector<double> v) {
    return Tensor<double>(Shape4{1, 1, h, w}, std::move(v));
}

Tensor<double> step_image(std::size_t n) {
    Tensor<double> t(Shape4{1, 1, n, n});
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = n / 2; x < n; ++x) t(0, 0, y, x) = 1.0;
    return t;
}

} // namespace

TEST(L2, UnitExample) {
    const auto p = plane(2, 2, {0, 0, 0, 0});
    const auto t = plane(2, 2, {1, 1, 1, 1});
    const auto r = l2_loss(p, t);
    EXPECT_DOUBLE_EQ(r.value, 1.0);
    for (double g : r.grad.data()) EXPECT_DOUBLE_EQ(g, -0.5);
}

TEST(L2, WeightDoublingDoublesLoss) {
    RngStream rng(1);
    const auto p = tensor_random<double>(Shape4{2, 1, 6, 6}, rng, 1.0);
    const auto t = tensor_random<double>(Shape4{2, 1, 6, 6}, rng, 1.0);
    const WeightMap<double> one(Shape4{2, 1, 6, 6}, 1.0), two(Shape4{2, 1, 6, 6}, 2.0);
    EXPECT_NEAR(l2_loss(p, t, &two).value, 2.0 * l2_loss(p, t, &one).value, 1e-15);
}

TEST(L2, UnitWeightsAreBitwiseUnweighted) {
    RngStream rng(2);
    const auto p = tensor_random<double>(Shape4{3, 1, 5, 7}, rng, 1.0);
    const auto t = tensor_random<double>(Shape4{3, 1, 5, 7}, rng, 1.0);
    const WeightMap<double> ones(Shape4{3, 1, 5, 7}, 1.0);
    const auto a = l2_loss(p, t);
    const auto b = l2_loss(p, t, &ones);
    EXPECT_EQ(a.value, b.value);
    EXPECT_TRUE(a.grad == b.grad);
}

TEST(L2, RejectsBadWeights) {
    const auto p = plane(2, 2, {0, 0, 0, 0});
    WeightMap<double> neg(Shape4{1, 1, 2, 2}, 1.0);
    neg[1] = -1.0;
    EXPECT_THROW(l2_loss(p, p, &neg), ParameterError);
    const WeightMap<double> wrong(Shape4{1, 1, 2, 3}, 1.0);
    EXPECT_THROW(l2_loss(p, p, &wrong), ShapeError);
    EXPECT_THROW(l2_loss(p, plane(1, 4, {0, 0, 0, 0})), ShapeError);
}

TEST(EdgeMap, ConstantTargetGivesUnitWeights) {
    const auto w = edge_weight_map(Tensor<double>(Shape4{1, 1, 8, 8}, 0.3), 4.0);
    for (double v : w.data()) EXPECT_EQ(v, 1.0);
}

TEST(EdgeMap, ZeroBetaGivesUnitWeights) {
    const auto w = edge_weight_map(step_image(8), 0.0);
    for (double v : w.data()) EXPECT_EQ(v, 1.0);
}

TEST(EdgeMap, StepPeaksAtOnePlusBeta) {
    const auto w = edge_weight_map(step_image(8), 4.0);
    EXPECT_DOUBLE_EQ(max_abs(w), 5.0);
    EXPECT_EQ(w(0, 0, 3, 0), 1.0);  // far from the step
    EXPECT_GT(w(0, 0, 3, 4), 1.0);
    EXPECT_THROW(edge_weight_map(step_image(8), -1.0), ParameterError);
}

TEST(Ssim, IdenticalImagesGiveZeroLoss) {
    RngStream rng(3);
    const auto x = tensor_random<double>(Shape4{2, 1, 9, 9}, rng, 1.0);
    for (auto mode : {SsimMode::Local, SsimMode::Global}) {
        SsimConfig cfg;
        cfg.mode = mode;
        const auto r = ssim_loss(x, x, cfg);
        EXPECT_NEAR(r.value, 0.0, 1e-12);
        const auto q = ssim_map(x, x, cfg);
        for (double v : q.data()) EXPECT_NEAR(v, 1.0, 1e-12);
    }
}

TEST(Ssim, GlobalConstantImages) {
    // Zero against one: luminance C1 / (1 + C1), contrast exactly 1.
    SsimConfig cfg;
    cfg.mode = SsimMode::Global;
    const Tensor<double> zero(Shape4{1, 1, 4, 4}, 0.0), one(Shape4{1, 1, 4, 4}, 1.0);
    const double q = 1e-4 / (1.0 + 1e-4);
    EXPECT_NEAR(q, 9.999e-5, 1e-8);
    EXPECT_NEAR(ssim_loss(zero, one, cfg).value, 1.0 - q, 1e-15);
}

TEST(Ssim, LossInUnitRangeForNonNegativeImages) {
    RngStream rng(4);
    auto a = tensor_random<double>(Shape4{1, 1, 10, 10}, rng, 0.5);
    auto b = tensor_random<double>(Shape4{1, 1, 10, 10}, rng, 0.5);
    a += Tensor<double>(a.shape(), 0.5);
    b += Tensor<double>(b.shape(), 0.5);
    const double v = ssim_loss(a, b, SsimConfig{}).value;
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
}

TEST(Ssim, ParameterErrors) {
    const Tensor<double> x(Shape4{1, 1, 5, 5}, 0.5);
    SsimConfig big;
    big.window = 7;
    EXPECT_THROW(ssim_loss(x, x, big), ParameterError);
    SsimConfig even;
    even.window = 4;
    EXPECT_THROW(ssim_loss(x, x, even), ParameterError);
    SsimConfig global = big;
    global.mode = SsimMode::Global;
    EXPECT_NO_THROW(ssim_loss(x, x, global));
    SsimConfig badc;
    badc.window = 3;
    badc.c1 = 0.0;
    EXPECT_THROW(ssim_loss(x, x, badc), ParameterError);
}

TEST(Ssim, RangeScalesConstants) {
    const auto c = SsimConfig::for_range(255.0);
    EXPECT_DOUBLE_EQ(c.c1, 6.5025);
    EXPECT_DOUBLE_EQ(c.c2, 58.5225);
}

TEST(Tv, TwoByTwoExample) {
    const auto x = plane(2, 2, {0, 1, 0, 1});
    const auto r = tv_loss(x, 0.0);
    EXPECT_DOUBLE_EQ(r.value, 1.0);
    EXPECT_DOUBLE_EQ(r.grad[0], -1.0);
    EXPECT_DOUBLE_EQ(r.grad[1], 1.0);
    EXPECT_EQ(r.grad[3], 0.0);
}

TEST(Tv, ConstantShiftInvariance) {
    RngStream rng(5);
    const auto x = tensor_random<double>(Shape4{2, 1, 6, 6}, rng, 1.0);
    auto y = x;
    y += Tensor<double>(x.shape(), 0.37);
    EXPECT_NEAR(tv_loss(x).value, tv_loss(y).value, 1e-12);
    EXPECT_NEAR(tv_loss(Tensor<double>(x.shape(), 0.2), 0.0).value, 0.0, 0.0);
}

TEST(WeightDecay, ConvWeightsOnly) {
    ParamSet<double> ps;
    ps.add("w", ParamKind::ConvWeight, Tensor<double>(Shape4{1, 1, 2, 2}, 1.0));
    ps.add("b", ParamKind::ConvBias, Tensor<double>(Shape4{1, 1, 1, 1}, 5.0));
    ps.add("g", ParamKind::BnGamma, Tensor<double>(Shape4{1, 1, 1, 1}, 3.0));
    const auto [value, grad] = weight_decay(ps);
    EXPECT_EQ(value, 2.0);
    EXPECT_TRUE(grad.get("w") == ps.get("w"));
    EXPECT_EQ(grad.get("b")[0], 0.0);
    EXPECT_EQ(grad.get("g")[0], 0.0);
}

class JointLoss : public ::testing::Test {
protected:
    void SetUp() override {
        RngStream rng(6);
        for (int h = 0; h < 2; ++h) {
            preds.push_back(tensor_random<double>(Shape4{2, 1, 8, 8}, rng, 1.0));
            targets.push_back(tensor_random<double>(Shape4{2, 1, 8, 8}, rng, 1.0));
            maps.push_back(edge_weight_map(targets.back(), 4.0));
        }
        ps.add("w", ParamKind::ConvWeight, tensor_random<double>(Shape4{2, 1, 3, 3}, rng, 1.0));
        cfg.window = 3;
    }
    std::vector<Tensor<double>> preds, targets;
    std::vector<WeightMap<double>> maps;
    ParamSet<double> ps;
    SsimConfig cfg;
};

TEST_F(JointLoss, TotalRecomposesFromTerms) {
    const LossWeights lw;
    const auto r = joint_loss<double>(preds, targets, ps, lw, cfg, maps);
    double l2 = 0, ss = 0, tv = 0;
    for (int h = 0; h < 2; ++h) {
        l2 += l2_loss(preds[h], targets[h], &maps[h]).value / 2;
        ss += ssim_loss(preds[h], targets[h], cfg, &maps[h]).value / 2;
        tv += tv_loss(preds[h]).value / 2;
    }
    EXPECT_NEAR(r.l2, l2, 1e-12);
    EXPECT_NEAR(r.ssim, ss, 1e-12);
    EXPECT_NEAR(r.tv, tv, 1e-12);
    EXPECT_NEAR(r.total, lw.l2 * l2 + lw.ssim * ss + lw.tv * tv + lw.wd * weight_decay(ps).first, 1e-12);
    ASSERT_EQ(r.grads.size(), 2u);
}

TEST_F(JointLoss, ZeroWeightsGiveZero) {
    const LossWeights zero{0.0, 0.0, 0.0, 0.0};
    const auto r = joint_loss<double>(preds, targets, ps, zero, cfg, maps);
    EXPECT_EQ(r.total, 0.0);
    for (const auto& g : r.grads) EXPECT_EQ(max_abs(g), 0.0);
}

TEST_F(JointLoss, ArityAndWeightErrors) {
    std::vector<Tensor<double>> one{preds[0]};
    EXPECT_THROW(joint_loss<double>(one, targets, ps, LossWeights{}, cfg, maps), UsageError);
    EXPECT_THROW(joint_loss<double>(preds, targets, ps, LossWeights{-1.0, 0, 0, 0}, cfg, maps), ParameterError);
}
