#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synnet/layers.hpp"
#include "synnet/params.hpp"

namespace synnet {

enum class TopologyKind : std::uint8_t { Siso = 0, Miso = 1, Mimo = 2 };

/// How each decoder arm of a MIMO net is fed skip connections.
enum class SkipWiring { Both, Matched };

inline std::string to_string(TopologyKind k) {
    switch (k) {
    case TopologyKind::Siso: return "siso";
    case TopologyKind::Miso: return "miso";
    case TopologyKind::Mimo: return "mimo";
    }
    return "?";
}

struct Topology {
    TopologyKind kind = TopologyKind::Siso;
    std::size_t depth = 3;
    std::vector<std::size_t> channels{32, 64, 64};
    std::size_t head_width = 64;  // channels emitted by the shallowest decoder stage
    std::size_t miso_index_arm = 0;
    SkipWiring mimo_skip = SkipWiring::Both;

    std::size_t in_arms() const noexcept { return kind == TopologyKind::Siso ? 1 : 2; }
    std::size_t out_arms() const noexcept { return kind == TopologyKind::Mimo ? 2 : 1; }
    std::size_t spatial_divisor() const noexcept { return std::size_t{1} << depth; }

    void validate() const {
        if (depth < 1 || depth > 16) throw ParameterError("topology depth must be in [1, 16]");
        if (channels.size() != depth) {
            throw ParameterError("topology has " + std::to_string(channels.size()) + " channel widths for depth " +
                                 std::to_string(depth));
        }
        for (std::size_t c : channels) {
            if (c == 0) throw ParameterError("topology channel width must be positive");
        }
        if (head_width == 0) throw ParameterError("head width must be positive");
        if (miso_index_arm > 1) throw ParameterError("miso_index_arm must be 0 or 1");
    }

    friend bool operator==(const Topology&, const Topology&) = default;
};

struct ConvSlot {
    std::size_t weight = 0;
    std::size_t bias = 0;
};

struct BnSlot {
    std::size_t gamma = 0, beta = 0, mean = 0, var = 0;
};

/// conv3x3 -> batchnorm -> ReLU
struct BlockSlot {
    ConvSlot conv;
    BnSlot bn;
};

struct DecoderArm {
    std::optional<ConvSlot> fuse;      // 1x1 reduction of the concatenated bottlenecks
    std::vector<BlockSlot> blocks;     // indexed by level, 0 = shallowest
    ConvSlot head;
    std::size_t index_arm = 0;         // encoder arm whose pool indices drive unpooling
    std::vector<std::size_t> skip_arms;
};

/// Wiring of a SynNet graph. Parameter tensors live in a separate ParamSet
/// addressed by the slot indices.
struct SynNetModel {
    Topology topology;
    BatchNormOptions bn;
    std::vector<std::vector<BlockSlot>> encoders;  // [arm][level]
    std::vector<DecoderArm> decoders;
};

namespace detail {

template <typename T>
ConvSlot add_conv(ParamSet<T>& ps, const std::string& prefix, std::size_t out_c, std::size_t in_c, std::size_t k,
                  RngStream& rng) {
    const double scale = std::sqrt(1.0 / static_cast<double>(in_c * k * k));
    ConvSlot s;
    s.weight = ps.add(prefix + ".weight", ParamKind::ConvWeight, tensor_random<T>(Shape4{out_c, in_c, k, k}, rng, scale));
    s.bias = ps.add(prefix + ".bias", ParamKind::ConvBias, Tensor<T>(Shape4{1, out_c, 1, 1}));
    return s;
}

template <typename T>
BnSlot add_bn(ParamSet<T>& ps, const std::string& prefix, std::size_t c) {
    const Shape4 s{1, c, 1, 1};
    BnSlot b;
    b.gamma = ps.add(prefix + ".gamma", ParamKind::BnGamma, Tensor<T>(s, T(1)));
    b.beta = ps.add(prefix + ".beta", ParamKind::BnBeta, Tensor<T>(s, T(0)));
    b.mean = ps.add(prefix + ".running_mean", ParamKind::BnRunningMean, Tensor<T>(s, T(0)));
    b.var = ps.add(prefix + ".running_var", ParamKind::BnRunningVar, Tensor<T>(s, T(1)));
    return b;
}

template <typename T>
BlockSlot add_block(ParamSet<T>& ps, const std::string& prefix, std::size_t out_c, std::size_t in_c, RngStream& rng) {
    BlockSlot b;
    b.conv = add_conv(ps, prefix + ".conv", out_c, in_c, 3, rng);
    b.bn = add_bn<T>(ps, prefix + ".bn", out_c);
    return b;
}

} // namespace detail

/// Builds the wiring and a freshly initialized parameter set.
/// Weights are uniform in [-s, s], s = sqrt(1 / fan_in); biases zero;
/// batchnorm gamma 1, beta 0, running statistics (0, 1).
template <typename T>
std::pair<SynNetModel, ParamSet<T>> build_model(const Topology& topo, RngStream& rng, const BatchNormOptions& bn = {}) {
    topo.validate();
    SynNetModel m;
    m.topology = topo;
    m.bn = bn;
    ParamSet<T> ps;
    const std::size_t depth = topo.depth;
    const auto& ch = topo.channels;

    for (std::size_t a = 0; a < topo.in_arms(); ++a) {
        std::vector<BlockSlot> blocks;
        for (std::size_t i = 0; i < depth; ++i) {
            const std::size_t in_c = i == 0 ? 1 : ch[i - 1];
            blocks.push_back(detail::add_block(ps, "enc.arm" + std::to_string(a) + ".block" + std::to_string(i + 1),
                                               ch[i], in_c, rng));
        }
        m.encoders.push_back(std::move(blocks));
    }

    for (std::size_t d = 0; d < topo.out_arms(); ++d) {
        DecoderArm arm;
        const std::string prefix = "dec.arm" + std::to_string(d);
        switch (topo.kind) {
        case TopologyKind::Siso:
            arm.index_arm = 0;
            arm.skip_arms = {0};
            break;
        case TopologyKind::Miso:
            arm.index_arm = topo.miso_index_arm;
            arm.skip_arms = {0, 1};
            break;
        case TopologyKind::Mimo:
            arm.index_arm = d;
            arm.skip_arms = topo.mimo_skip == SkipWiring::Both ? std::vector<std::size_t>{0, 1}
                                                               : std::vector<std::size_t>{d};
            break;
        }
        if (topo.in_arms() == 2) {
            arm.fuse = detail::add_conv(ps, "fuse.arm" + std::to_string(d) + ".conv", ch[depth - 1], 2 * ch[depth - 1],
                                        1, rng);
        }
        arm.blocks.resize(depth);
        for (std::size_t step = 0; step < depth; ++step) {
            const std::size_t i = depth - 1 - step;  // deepest first, matching execution order
            const std::size_t in_c = ch[i] * (1 + arm.skip_arms.size());
            const std::size_t out_c = i == 0 ? topo.head_width : ch[i - 1];
            arm.blocks[i] = detail::add_block(ps, prefix + ".block" + std::to_string(i + 1), out_c, in_c, rng);
        }
        arm.head = detail::add_conv(ps, "head.arm" + std::to_string(d) + ".conv", 1, topo.head_width, 1, rng);
        m.decoders.push_back(std::move(arm));
    }
    return {std::move(m), std::move(ps)};
}

/// Closed-form learnable parameter count, used to cross-check build_model.
inline std::size_t learnable_parameter_count(const Topology& topo) {
    topo.validate();
    auto conv = [](std::size_t out_c, std::size_t in_c, std::size_t k) { return out_c * in_c * k * k + out_c; };
    auto block = [&](std::size_t out_c, std::size_t in_c) { return conv(out_c, in_c, 3) + 2 * out_c; };
    const auto& ch = topo.channels;
    std::size_t total = 0;
    for (std::size_t a = 0; a < topo.in_arms(); ++a) {
        for (std::size_t i = 0; i < topo.depth; ++i) total += block(ch[i], i == 0 ? 1 : ch[i - 1]);
    }
    const std::size_t skips =
        topo.kind == TopologyKind::Siso ? 1 : (topo.kind == TopologyKind::Mimo && topo.mimo_skip == SkipWiring::Matched ? 1 : 2);
    for (std::size_t d = 0; d < topo.out_arms(); ++d) {
        if (topo.in_arms() == 2) total += conv(ch.back(), 2 * ch.back(), 1);
        for (std::size_t i = 0; i < topo.depth; ++i) {
            total += block(i == 0 ? topo.head_width : ch[i - 1], ch[i] * (1 + skips));
        }
        total += conv(1, topo.head_width, 1);
    }
    return total;
}

template <typename T>
struct BlockTrace {
    ConvTape<T> conv;
    BatchNormTape<T> bn;
    ReluTape<T> relu;
};

template <typename T>
struct EncoderTrace {
    std::vector<BlockTrace<T>> blocks;
    std::vector<PoolTape<T>> pools;
    std::vector<PoolIndices> indices;  // kept in infer mode too; unpooling needs them
    std::vector<Tensor<T>> skips;      // pre-pool feature maps
};

template <typename T>
struct DecoderTrace {
    std::optional<ConvTape<T>> fuse;
    std::vector<BlockTrace<T>> blocks;  // by level
    std::vector<UnpoolTape> unpools;    // by level
    ConvTape<T> head;
};

template <typename T>
struct ForwardTrace {
    Mode mode = Mode::Infer;
    bool consumed = false;
    Shape4 input_shape;
    std::vector<EncoderTrace<T>> encoders;
    std::vector<DecoderTrace<T>> decoders;
    std::vector<Tensor<T>> predictions;
};

namespace detail {

template <typename T, typename Params>
Tensor<T> run_block(const BlockSlot& b, Params& ps, const Tensor<T>& x, Mode mode, const BatchNormOptions& opt,
                    BlockTrace<T>* keep) {
    auto [y, ct] = conv2d_forward(x, ps[b.conv.weight], ps[b.conv.bias]);
    Tensor<T> z;
    BatchNormTape<T> bt;
    if (mode == Mode::Train) {
        if constexpr (std::is_const_v<Params>) {
            throw UsageError("train-mode forward needs mutable parameters");
        } else {
            std::tie(z, bt) = batchnorm_forward(y, ps[b.bn.gamma], ps[b.bn.beta], ps[b.bn.mean], ps[b.bn.var], mode, opt);
        }
    } else {
        z = batchnorm_infer(y, ps[b.bn.gamma], ps[b.bn.beta], ps[b.bn.mean], ps[b.bn.var], opt);
    }
    auto [a, rt] = relu_forward(z);
    if (keep) *keep = BlockTrace<T>{std::move(ct), std::move(bt), std::move(rt)};
    return a;
}

template <typename T, typename Params>
ForwardTrace<T> run_forward(const SynNetModel& m, Params& ps, std::span<const Tensor<T>> inputs, Mode mode) {
    const Topology& topo = m.topology;
    if (inputs.size() != topo.in_arms()) {
        throw UsageError("topology " + to_string(topo.kind) + " expects " + std::to_string(topo.in_arms()) +
                         " inputs, got " + std::to_string(inputs.size()));
    }
    const Shape4 s = inputs[0].shape();
    for (const auto& x : inputs) {
        if (x.shape() != s) throw ShapeError("forward: arm inputs differ in shape");
    }
    if (s.c != 1) throw ShapeError("forward: each arm takes a single-channel image, got " + s.str());
    const std::size_t div = topo.spatial_divisor();
    if (s.h % div != 0 || s.w % div != 0) {
        throw ShapeError("forward: input " + s.str() + " not divisible by " + std::to_string(div) + "; pad first");
    }
    const bool keep = mode == Mode::Train;

    ForwardTrace<T> tr;
    tr.mode = mode;
    tr.input_shape = s;
    std::vector<Tensor<T>> bottleneck;
    for (std::size_t a = 0; a < topo.in_arms(); ++a) {
        EncoderTrace<T> et;
        if (keep) et.blocks.resize(topo.depth);
        Tensor<T> x = inputs[a];
        for (std::size_t i = 0; i < topo.depth; ++i) {
            Tensor<T> f = run_block(m.encoders[a][i], ps, x, mode, m.bn, keep ? &et.blocks[i] : nullptr);
            auto pooled = maxpool2x2_forward(f);
            x = std::move(pooled.pooled);
            et.indices.push_back(std::move(pooled.indices));
            if (keep) et.pools.push_back(std::move(pooled.tape));
            et.skips.push_back(std::move(f));
        }
        bottleneck.push_back(std::move(x));
        tr.encoders.push_back(std::move(et));
    }

    for (const DecoderArm& arm : m.decoders) {
        DecoderTrace<T> dt;
        Tensor<T> v;
        if (arm.fuse) {
            auto [fz, ft] = conv2d_forward(concat_channels(bottleneck[0], bottleneck[1]), ps[arm.fuse->weight],
                                           ps[arm.fuse->bias]);
            v = std::move(fz);
            if (keep) dt.fuse = std::move(ft);
        } else {
            v = bottleneck[0];
        }
        if (keep) {
            dt.blocks.resize(topo.depth);
            dt.unpools.resize(topo.depth);
        }
        for (std::size_t step = 0; step < topo.depth; ++step) {
            const std::size_t i = topo.depth - 1 - step;
            auto [u, ut] = unpool2x2_forward(v, tr.encoders[arm.index_arm].indices[i]);
            Tensor<T> cat = std::move(u);
            for (std::size_t a : arm.skip_arms) cat = concat_channels(cat, tr.encoders[a].skips[i]);
            v = run_block(arm.blocks[i], ps, cat, mode, m.bn, keep ? &dt.blocks[i] : nullptr);
            if (keep) dt.unpools[i] = std::move(ut);
        }
        auto [pred, ht] = conv2d_forward(v, ps[arm.head.weight], ps[arm.head.bias]);
        if (keep) dt.head = std::move(ht);
        tr.predictions.push_back(linear_activation(pred));
        tr.decoders.push_back(std::move(dt));
    }
    if (!keep) {
        // infer mode keeps predictions only
        tr.encoders.clear();
        tr.decoders.clear();
    }
    return tr;
}

template <typename T>
void add_conv_grads(ParamSet<T>& g, const ConvSlot& s, const ConvGrads<T>& cg) {
    g[s.weight] += cg.weight;
    g[s.bias] += cg.bias;
}

template <typename T>
Tensor<T> block_backward(const BlockSlot& b, const BlockTrace<T>& bt, const Tensor<T>& grad, ParamSet<T>& g) {
    Tensor<T> gz = relu_backward(bt.relu, grad);
    BatchNormGrads<T> bg = batchnorm_backward(bt.bn, gz);
    g[b.bn.gamma] += bg.gamma;
    g[b.bn.beta] += bg.beta;
    auto [gx, cg] = conv2d_backward(bt.conv, bg.grad_in);
    add_conv_grads(g, b.conv, cg);
    return gx;
}

} // namespace detail

/// Train mode updates batchnorm running statistics in params and records
/// every tape needed by backward(); infer mode keeps no tapes.
template <typename T>
ForwardTrace<T> forward(const SynNetModel& m, ParamSet<T>& params, std::span<const Tensor<T>> inputs, Mode mode) {
    return detail::run_forward<T>(m, params, inputs, mode);
}

template <typename T>
std::vector<Tensor<T>> predict(const SynNetModel& m, const ParamSet<T>& params, std::span<const Tensor<T>> inputs) {
    return detail::run_forward<T>(m, params, inputs, Mode::Infer).predictions;
}

/// Gradients for every ParamSet entry (running statistics stay zero).
/// A trace can be consumed only once.
template <typename T>
ParamSet<T> backward(const SynNetModel& m, const ParamSet<T>& params, ForwardTrace<T>& trace,
                     std::span<const Tensor<T>> grad_predictions) {
    if (trace.mode != Mode::Train) throw UsageError("backward needs a train-mode trace");
    if (trace.consumed) throw UsageError("forward trace already consumed by backward");
    if (grad_predictions.size() != trace.predictions.size()) {
        throw UsageError("backward: expected " + std::to_string(trace.predictions.size()) + " prediction gradients");
    }
    for (std::size_t h = 0; h < grad_predictions.size(); ++h) {
        if (grad_predictions[h].shape() != trace.predictions[h].shape()) {
            throw ShapeError("backward: prediction gradient " + std::to_string(h) + " has shape " +
                             grad_predictions[h].shape().str());
        }
    }
    trace.consumed = true;
    const Topology& topo = m.topology;
    const std::size_t depth = topo.depth;
    ParamSet<T> g = params.zeros_like();

    // Gradient accumulators on encoder outputs.
    std::vector<std::vector<Tensor<T>>> skip_grad(topo.in_arms());
    std::vector<Tensor<T>> bottleneck_grad(topo.in_arms());
    for (std::size_t a = 0; a < topo.in_arms(); ++a) {
        for (std::size_t i = 0; i < depth; ++i) skip_grad[a].emplace_back(trace.encoders[a].skips[i].shape());
        bottleneck_grad[a] = Tensor<T>(trace.encoders[a].indices.back().pooled);
    }

    for (std::size_t d = 0; d < m.decoders.size(); ++d) {
        const DecoderArm& arm = m.decoders[d];
        const DecoderTrace<T>& dt = trace.decoders[d];
        auto [gv, hg] = conv2d_backward(dt.head, linear_activation_backward(grad_predictions[d]));
        detail::add_conv_grads(g, arm.head, hg);
        Tensor<T> grad = std::move(gv);
        for (std::size_t i = 0; i < depth; ++i) {
            Tensor<T> gcat = detail::block_backward(arm.blocks[i], dt.blocks[i], grad, g);
            const std::size_t c = topo.channels[i];
            std::size_t at = c;
            for (std::size_t a : arm.skip_arms) {
                skip_grad[a][i] += slice_channels(gcat, at, at + c);
                at += c;
            }
            grad = unpool2x2_backward(dt.unpools[i], slice_channels(gcat, 0, c));
        }
        if (arm.fuse) {
            auto [gin, fg] = conv2d_backward(*dt.fuse, grad);
            detail::add_conv_grads(g, *arm.fuse, fg);
            const std::size_t c = topo.channels.back();
            bottleneck_grad[0] += slice_channels(gin, 0, c);
            bottleneck_grad[1] += slice_channels(gin, c, 2 * c);
        } else {
            bottleneck_grad[0] += grad;
        }
    }

    for (std::size_t a = 0; a < topo.in_arms(); ++a) {
        const EncoderTrace<T>& et = trace.encoders[a];
        Tensor<T> pooled_grad = std::move(bottleneck_grad[a]);
        for (std::size_t step = 0; step < depth; ++step) {
            const std::size_t i = depth - 1 - step;
            Tensor<T> gf = maxpool2x2_backward(et.pools[i], pooled_grad);
            gf += skip_grad[a][i];
            pooled_grad = detail::block_backward(m.encoders[a][i], et.blocks[i], gf, g);
        }
    }
    return g;
}

} // namespace synnet
