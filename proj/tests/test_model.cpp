#include <gtest/gtest.h>

#include "synnet/model.hpp"
#include "synnet/loss.hpp"

using namespace synnet;

namespace {

Topology small(TopologyKind kind) {
    Topology t;
    t.kind = kind;
    t.channels = {4, 6, 6};
    t.head_width = 5;
    return t;
}

std::vector<Tensor<double>> inputs_for(const Topology& t, std::size_t n, std::size_t hw, RngStream& rng) {
    std::vector<Tensor<double>> in;
    for (std::size_t a = 0; a < t.in_arms(); ++a) in.push_back(tensor_random<double>(Shape4{n, 1, hw, hw}, rng, 1.0));
    return in;
}

} // namespace

TEST(Topology, Arity) {
    EXPECT_EQ(small(TopologyKind::Siso).in_arms(), 1u);
    EXPECT_EQ(small(TopologyKind::Miso).in_arms(), 2u);
    EXPECT_EQ(small(TopologyKind::Miso).out_arms(), 1u);
    EXPECT_EQ(small(TopologyKind::Mimo).out_arms(), 2u);
    Topology bad;
    bad.channels = {8, 8};
    EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(Model, DefaultParameterCountByHand) {
    // encoder 1->32, 32->64, 64->64; decoder (128->64), (128->32), (64->64);
    // each 3x3 conv has weights + bias, each batchnorm gamma + beta; head 64->1.
    const std::size_t enc = (32 * 9 + 32 + 64) + (64 * 32 * 9 + 64 + 128) + (64 * 64 * 9 + 64 + 128);
    const std::size_t dec = (64 * 128 * 9 + 64 + 128) + (32 * 128 * 9 + 32 + 64) + (64 * 64 * 9 + 64 + 128);
    const std::size_t expected = enc + dec + 64 + 1;
    EXPECT_EQ(expected, 204065u);
    Topology t;
    RngStream rng(1);
    auto [m, ps] = build_model<float>(t, rng);
    EXPECT_EQ(ps.learnable_count(), expected);
    EXPECT_EQ(learnable_parameter_count(t), expected);
}

TEST(Model, ParameterCountMatchesClosedFormForAllTopologies) {
    for (auto kind : {TopologyKind::Siso, TopologyKind::Miso, TopologyKind::Mimo}) {
        for (auto wiring : {SkipWiring::Both, SkipWiring::Matched}) {
            Topology t;
            t.kind = kind;
            t.mimo_skip = wiring;
            RngStream rng(2);
            auto [m, ps] = build_model<float>(t, rng);
            EXPECT_EQ(ps.learnable_count(), learnable_parameter_count(t)) << to_string(kind);
        }
    }
}

TEST(Model, StableNames) {
    RngStream rng(3);
    auto [m, ps] = build_model<double>(small(TopologyKind::Mimo), rng);
    for (const char* name : {"enc.arm0.block1.conv.weight", "enc.arm1.block3.bn.running_var", "fuse.arm1.conv.weight",
                             "dec.arm0.block1.bn.gamma", "dec.arm1.block3.conv.bias", "head.arm1.conv.weight"}) {
        EXPECT_TRUE(ps.contains(name)) << name;
    }
    EXPECT_EQ(ps.entries().front().name, "enc.arm0.block1.conv.weight");
}

TEST(Model, InitializationContract) {
    RngStream rng(4);
    auto [m, ps] = build_model<double>(small(TopologyKind::Siso), rng);
    const auto& w = ps.get("enc.arm0.block2.conv.weight");
    EXPECT_LE(max_abs(w), std::sqrt(1.0 / (4 * 9)));
    EXPECT_GT(max_abs(w), 0.0);
    EXPECT_EQ(max_abs(ps.get("enc.arm0.block2.conv.bias")), 0.0);
    EXPECT_EQ(sum(ps.get("dec.arm0.block1.bn.gamma")), 5.0);
    EXPECT_EQ(sum(ps.get("dec.arm0.block1.bn.running_var")), 5.0);
}

TEST(Model, PredictionShapes) {
    for (auto kind : {TopologyKind::Siso, TopologyKind::Miso, TopologyKind::Mimo}) {
        Topology t = small(kind);
        RngStream rng(5);
        auto [m, ps] = build_model<double>(t, rng);
        const auto in = inputs_for(t, 1, 64, rng);
        const auto tr = forward<double>(m, ps, in, Mode::Train);
        ASSERT_EQ(tr.predictions.size(), t.out_arms());
        for (const auto& p : tr.predictions) EXPECT_EQ(p.shape(), (Shape4{1, 1, 64, 64}));
        // Each encoder level halves the feature map.
        EXPECT_EQ(tr.encoders[0].skips[0].shape().h, 64u);
        EXPECT_EQ(tr.encoders[0].skips[2].shape().h, 16u);
        EXPECT_EQ(tr.encoders[0].indices[2].pooled.h, 8u);
    }
}

TEST(Model, InputErrors) {
    Topology t = small(TopologyKind::Miso);
    RngStream rng(6);
    auto [m, ps] = build_model<double>(t, rng);
    std::vector<Tensor<double>> one{Tensor<double>(Shape4{1, 1, 16, 16})};
    EXPECT_THROW(forward<double>(m, ps, one, Mode::Train), UsageError);
    std::vector<Tensor<double>> odd{Tensor<double>(Shape4{1, 1, 12, 16}), Tensor<double>(Shape4{1, 1, 12, 16})};
    EXPECT_THROW(forward<double>(m, ps, odd, Mode::Infer), ShapeError);
}

TEST(Model, ZeroNetworkPredictsHeadBias) {
    Topology t = small(TopologyKind::Siso);
    RngStream rng(7);
    auto [m, ps] = build_model<double>(t, rng);
    for (auto& e : ps.entries()) {
        if (e.kind == ParamKind::ConvWeight || e.kind == ParamKind::ConvBias) e.value.fill(0.0);
    }
    ps.get("head.arm0.conv.bias")[0] = 0.375;
    const auto in = inputs_for(t, 2, 16, rng);
    for (Mode mode : {Mode::Train, Mode::Infer}) {
        const auto tr = forward<double>(m, ps, in, mode);
        for (double v : tr.predictions[0].data()) EXPECT_EQ(v, 0.375);
    }
}

TEST(Model, InferIsPerSampleAndTrainIsPure) {
    Topology t = small(TopologyKind::Mimo);
    RngStream rng(8);
    auto [m, ps] = build_model<double>(t, rng);
    const auto in = inputs_for(t, 3, 16, rng);
    const auto batch = predict<double>(m, ps, in);
    std::vector<Tensor<double>> single{slice_batch(in[0], 2, 3), slice_batch(in[1], 2, 3)};
    const auto one = predict<double>(m, ps, single);
    for (std::size_t h = 0; h < 2; ++h) {
        const auto ref = slice_batch(batch[h], 2, 3);
        for (std::size_t j = 0; j < ref.size(); ++j) EXPECT_NEAR(one[h][j], ref[j], 1e-12);
    }
    ParamSet<double> p1 = ps, p2 = ps;
    EXPECT_TRUE(forward<double>(m, p1, in, Mode::Train).predictions[0] ==
                forward<double>(m, p2, in, Mode::Train).predictions[0]);
    EXPECT_TRUE(p1 == p2);
}

TEST(Model, InferKeepsNoTapes) {
    Topology t = small(TopologyKind::Siso);
    RngStream rng(9);
    auto [m, ps] = build_model<double>(t, rng);
    auto tr = forward<double>(m, ps, inputs_for(t, 1, 16, rng), Mode::Infer);
    EXPECT_TRUE(tr.encoders[0].blocks.empty() || tr.encoders[0].blocks[0].conv.input.empty());
    std::vector<Tensor<double>> g{Tensor<double>(tr.predictions[0].shape())};
    EXPECT_THROW(backward<double>(m, ps, tr, g), UsageError);
}

TEST(Model, TraceConsumedOnce) {
    Topology t = small(TopologyKind::Siso);
    RngStream rng(10);
    auto [m, ps] = build_model<double>(t, rng);
    auto tr = forward<double>(m, ps, inputs_for(t, 2, 16, rng), Mode::Train);
    std::vector<Tensor<double>> g{Tensor<double>(tr.predictions[0].shape())};
    const auto grads = backward<double>(m, ps, tr, g);
    for (const auto& e : grads.entries()) EXPECT_EQ(max_abs(e.value), 0.0) << e.name;
    EXPECT_THROW(backward<double>(m, ps, tr, g), UsageError);
}

TEST(Model, MimoHeadOneStillReachesEncoders) {
    Topology t = small(TopologyKind::Mimo);
    RngStream rng(11);
    auto [m, ps] = build_model<double>(t, rng);
    auto tr = forward<double>(m, ps, inputs_for(t, 2, 16, rng), Mode::Train);
    std::vector<Tensor<double>> g{tensor_random<double>(tr.predictions[0].shape(), rng, 1.0),
                                  Tensor<double>(tr.predictions[1].shape())};
    const auto grads = backward<double>(m, ps, tr, g);
    EXPECT_GT(max_abs(grads.get("enc.arm0.block1.conv.weight")), 0.0);
    EXPECT_GT(max_abs(grads.get("enc.arm1.block1.conv.weight")), 0.0);
    EXPECT_EQ(max_abs(grads.get("head.arm1.conv.weight")), 0.0);
}

TEST(Model, FirstEncoderBlockReceivesGradientAtDepthThree) {
    Topology t;
    t.channels = {8, 8, 8};
    t.head_width = 8;
    RngStream rng(12);
    auto [m, ps] = build_model<double>(t, rng);
    auto tr = forward<double>(m, ps, inputs_for(t, 2, 32, rng), Mode::Train);
    const auto target = tensor_random<double>(tr.predictions[0].shape(), rng, 1.0);
    std::vector<Tensor<double>> g{l2_loss(tr.predictions[0], target).grad};
    const auto grads = backward<double>(m, ps, tr, g);
    EXPECT_GT(max_abs(grads.get("enc.arm0.block1.conv.weight")), 0.0);
}

TEST(Model, MatchedSkipWiringNarrowsDecoder) {
    Topology t = small(TopologyKind::Mimo);
    t.mimo_skip = SkipWiring::Matched;
    RngStream rng(13);
    auto [m, ps] = build_model<double>(t, rng);
    EXPECT_EQ(ps.get("dec.arm1.block1.conv.weight").shape().c, 2 * 4u);
    EXPECT_EQ(m.decoders[1].skip_arms, std::vector<std::size_t>{1});
    const auto tr = forward<double>(m, ps, inputs_for(t, 1, 16, rng), Mode::Train);
    EXPECT_EQ(tr.predictions.size(), 2u);
}
