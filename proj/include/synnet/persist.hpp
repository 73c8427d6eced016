#pragma once

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "synnet/model.hpp"
#include "synnet/optim.hpp"

namespace synnet {

// ---------------------------------------------------------------------------
// Run configuration: `key = value` lines, '#' comments
// ---------------------------------------------------------------------------

struct RunConfig {
    Topology topology;
    TrainConfig train;
    BatchNormOptions bn;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class ConfigLine {
public:
    ConfigLine(std::size_t lineno, std::string key, std::string value)
        : lineno_(lineno), key_(std::move(key)), value_(std::move(value)) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("line " + std::to_string(lineno_) + ": " + key_ + ": " + what);
    }

    double real() const {
        double v = 0.0;
        const char* b = value_.data();
        const char* e = b + value_.size();
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e || !std::isfinite(v)) fail("expected a number, got '" + value_ + "'");
        return v;
    }

    std::uint64_t integer() const {
        std::uint64_t v = 0;
        const char* b = value_.data();
        const char* e = b + value_.size();
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e) fail("expected a non-negative integer, got '" + value_ + "'");
        return v;
    }

    bool boolean() const {
        if (value_ == "true" || value_ == "1" || value_ == "yes") return true;
        if (value_ == "false" || value_ == "0" || value_ == "no") return false;
        fail("expected true or false, got '" + value_ + "'");
    }

    std::vector<std::size_t> integers() const {
        std::vector<std::size_t> out;
        for (const auto& item : split_list(value_)) {
            std::size_t v = 0;
            auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
                fail("expected a comma-separated integer list, got '" + value_ + "'");
            }
            out.push_back(v);
        }
        return out;
    }

    std::vector<std::string> modalities() const {
        auto out = split_list(value_);
        for (const auto& m : out) {
            if (!is_modality(m)) fail("unknown modality '" + m + "'");
        }
        return out;
    }

    const std::string& str() const { return value_; }

private:
    std::size_t lineno_;
    std::string key_;
    std::string value_;
};

} // namespace detail

/// Parses `key = value` lines. Unknown keys and malformed values are
/// errors naming the line; absent keys keep their defaults. When the
/// modality lists are absent they default per topology (t1 -> t2 for
/// SISO, t1,t1c -> t2 for MISO, t1,t1c -> t2,flair for MIMO).
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    bool have_inputs = false, have_outputs = false;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const detail::ConfigLine v(lineno, key, detail::trim(line.substr(eq + 1)));
        auto& t = cfg.train;
        auto& topo = cfg.topology;

        if (key == "lambda1") t.lambda.l2 = v.real();
        else if (key == "lambda2") t.lambda.ssim = v.real();
        else if (key == "lambda3") t.lambda.tv = v.real();
        else if (key == "lambda4") t.lambda.wd = v.real();
        else if (key == "lr") t.lr = v.real();
        else if (key == "momentum") t.momentum = v.real();
        else if (key == "batch_size") t.batch_size = v.integer();
        else if (key == "epochs") t.epochs = v.integer();
        else if (key == "seed") t.seed = v.integer();
        else if (key == "edge_beta") t.edge_beta = v.real();
        else if (key == "tv_eps") t.tv_eps = v.real();
        else if (key == "shuffle") t.shuffle = v.boolean();
        else if (key == "augment") t.augment = v.boolean();
        else if (key == "train_fraction") t.train_fraction = v.real();
        else if (key == "ssim_window") t.ssim.window = v.integer();
        else if (key == "ssim_c1") t.ssim.c1 = v.real();
        else if (key == "ssim_c2") t.ssim.c2 = v.real();
        else if (key == "ssim_sigma_eps") t.ssim.sigma_eps = v.real();
        else if (key == "ssim_range") t.ssim.dynamic_range = v.real();
        else if (key == "bn_eps") cfg.bn.eps = v.real();
        else if (key == "bn_momentum") cfg.bn.stat_momentum = v.real();
        else if (key == "depth") topo.depth = v.integer();
        else if (key == "channels") topo.channels = v.integers();
        else if (key == "head_width") topo.head_width = v.integer();
        else if (key == "miso_index_arm") topo.miso_index_arm = v.integer();
        else if (key == "input_modalities") {
            t.input_modalities = v.modalities();
            have_inputs = true;
        } else if (key == "output_modalities") {
            t.output_modalities = v.modalities();
            have_outputs = true;
        } else if (key == "ssim_mode") {
            if (v.str() == "local") t.ssim.mode = SsimMode::Local;
            else if (v.str() == "global") t.ssim.mode = SsimMode::Global;
            else v.fail("expected local or global");
        } else if (key == "loss") {
            if (v.str() == "l2") t.loss = LossKind::L2;
            else if (v.str() == "weighted_l2") t.loss = LossKind::WeightedL2;
            else if (v.str() == "joint") t.loss = LossKind::Joint;
            else v.fail("expected l2, weighted_l2 or joint");
        } else if (key == "topology") {
            if (v.str() == "siso") topo.kind = TopologyKind::Siso;
            else if (v.str() == "miso") topo.kind = TopologyKind::Miso;
            else if (v.str() == "mimo") topo.kind = TopologyKind::Mimo;
            else v.fail("expected siso, miso or mimo");
        } else if (key == "mimo_skip") {
            if (v.str() == "both") topo.mimo_skip = SkipWiring::Both;
            else if (v.str() == "matched") topo.mimo_skip = SkipWiring::Matched;
            else v.fail("expected both or matched");
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (!have_inputs && cfg.topology.in_arms() == 2) cfg.train.input_modalities = {"t1", "t1c"};
    if (!have_outputs && cfg.topology.out_arms() == 2) cfg.train.output_modalities = {"t2", "flair"};
    try {
        cfg.topology.validate();
        cfg.train.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (cfg.train.input_modalities.size() != cfg.topology.in_arms() ||
        cfg.train.output_modalities.size() != cfg.topology.out_arms()) {
        throw ConfigError("topology " + to_string(cfg.topology.kind) + " needs " +
                          std::to_string(cfg.topology.in_arms()) + " input and " +
                          std::to_string(cfg.topology.out_arms()) + " output modalities");
    }
    return cfg;
}

/// Emits every key; parse_config(print_config(c)) == c.
inline std::string print_config(const RunConfig& cfg) {
    const auto& t = cfg.train;
    const auto& topo = cfg.topology;
    auto join = [](const auto& items) {
        std::ostringstream ss;
        for (std::size_t i = 0; i < items.size(); ++i) ss << (i ? "," : "") << items[i];
        return ss.str();
    };
    std::ostringstream o;
    o << "topology = " << to_string(topo.kind) << "\n"
      << "depth = " << topo.depth << "\n"
      << "channels = " << join(topo.channels) << "\n"
      << "head_width = " << topo.head_width << "\n"
      << "miso_index_arm = " << topo.miso_index_arm << "\n"
      << "mimo_skip = " << (topo.mimo_skip == SkipWiring::Both ? "both" : "matched") << "\n"
      << "input_modalities = " << join(t.input_modalities) << "\n"
      << "output_modalities = " << join(t.output_modalities) << "\n"
      << "loss = " << to_string(t.loss) << "\n"
      << "lambda1 = " << detail::fmt_double(t.lambda.l2) << "\n"
      << "lambda2 = " << detail::fmt_double(t.lambda.ssim) << "\n"
      << "lambda3 = " << detail::fmt_double(t.lambda.tv) << "\n"
      << "lambda4 = " << detail::fmt_double(t.lambda.wd) << "\n"
      << "lr = " << detail::fmt_double(t.lr) << "\n"
      << "momentum = " << detail::fmt_double(t.momentum) << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "epochs = " << t.epochs << "\n"
      << "seed = " << t.seed << "\n"
      << "ssim_mode = " << (t.ssim.mode == SsimMode::Local ? "local" : "global") << "\n"
      << "ssim_window = " << t.ssim.window << "\n"
      << "ssim_c1 = " << detail::fmt_double(t.ssim.c1) << "\n"
      << "ssim_c2 = " << detail::fmt_double(t.ssim.c2) << "\n"
      << "ssim_sigma_eps = " << detail::fmt_double(t.ssim.sigma_eps) << "\n"
      << "ssim_range = " << detail::fmt_double(t.ssim.dynamic_range) << "\n"
      << "edge_beta = " << detail::fmt_double(t.edge_beta) << "\n"
      << "tv_eps = " << detail::fmt_double(t.tv_eps) << "\n"
      << "shuffle = " << (t.shuffle ? "true" : "false") << "\n"
      << "augment = " << (t.augment ? "true" : "false") << "\n"
      << "train_fraction = " << detail::fmt_double(t.train_fraction) << "\n"
      << "bn_eps = " << detail::fmt_double(cfg.bn.eps) << "\n"
      << "bn_momentum = " << detail::fmt_double(cfg.bn.stat_momentum) << "\n";
    return o.str();
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// "SYNNETCK" | u32 version | u8 kind | u32 depth | u32 channel[depth]
// | u32 tensor count | { u32 name length, name, u8 dtype, u32 ndim,
// u32 dims[ndim], little-endian scalars } | u32 config length, config text
// ---------------------------------------------------------------------------

inline constexpr char checkpoint_magic[8] = {'S', 'Y', 'N', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t checkpoint_version = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

struct NamedTensor {
    std::string name;
    AnyTensor value;
};

struct Checkpoint {
    std::uint32_t version = checkpoint_version;
    TopologyKind kind = TopologyKind::Siso;
    std::vector<std::uint32_t> channels;  // length = depth
    std::vector<NamedTensor> tensors;
    std::string config_text;

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(const std::string& s) { buf_.append(s); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    template <typename T>
    void scalars(const Tensor<T>& t) {
        for (T v : t.data()) {
            if constexpr (std::is_same_v<T, float>) u32(std::bit_cast<std::uint32_t>(v));
            else u64(std::bit_cast<std::uint64_t>(v));
        }
    }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string buf) : buf_(std::move(buf)) {}

    void need(std::size_t n, const std::string& field) const {
        if (buf_.size() - pos_ < n) {
            throw LoadError("truncated checkpoint reading " + field + " at byte offset " + std::to_string(pos_));
        }
    }
    std::uint8_t u8(const std::string& field) {
        need(1, field);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32(const std::string& field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64(const std::string& field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        return v;
    }
    std::string bytes(std::size_t n, const std::string& field) {
        need(n, field);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str(const std::string& field) { return bytes(u32(field + " length"), field); }
    bool done() const { return pos_ == buf_.size(); }
    std::size_t pos() const { return pos_; }

private:
    std::string buf_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& cp) {
    detail::ByteWriter w;
    w.bytes(std::string(checkpoint_magic, 8));
    w.u32(cp.version);
    w.u8(static_cast<std::uint8_t>(cp.kind));
    w.u32(static_cast<std::uint32_t>(cp.channels.size()));
    for (auto c : cp.channels) w.u32(c);
    w.u32(static_cast<std::uint32_t>(cp.tensors.size()));
    for (const auto& nt : cp.tensors) {
        w.str(nt.name);
        std::visit(
            [&](const auto& t) {
                w.u8(static_cast<std::uint8_t>(t.dtype()));
                const Shape4& s = t.shape();
                w.u32(4);
                for (auto d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
                w.scalars(t);
            },
            nt.value);
    }
    w.str(cp.config_text);
    return w.data();
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
    detail::ByteReader r(std::move(bytes));
    if (r.bytes(8, "magic") != std::string(checkpoint_magic, 8)) throw LoadError("bad magic");
    Checkpoint cp;
    cp.version = r.u32("version");
    if (cp.version != checkpoint_version) throw LoadError("unsupported version " + std::to_string(cp.version));
    const std::uint8_t kind = r.u8("topology kind");
    if (kind > 2) throw LoadError("bad topology kind " + std::to_string(kind));
    cp.kind = static_cast<TopologyKind>(kind);
    const std::uint32_t depth = r.u32("topology depth");
    if (depth == 0 || depth > 16) throw LoadError("bad topology depth " + std::to_string(depth));
    for (std::uint32_t i = 0; i < depth; ++i) cp.channels.push_back(r.u32("channel list"));
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedTensor nt;
        nt.name = r.str("tensor name");
        const std::string field = "tensor '" + nt.name + "'";
        const std::uint8_t dtype = r.u8(field + " dtype");
        if (dtype > 1) throw LoadError(field + ": bad dtype " + std::to_string(dtype));
        const std::uint32_t ndim = r.u32(field + " ndim");
        if (ndim < 1 || ndim > 4) throw LoadError(field + ": unsupported ndim " + std::to_string(ndim));
        std::size_t dims[4] = {1, 1, 1, 1};
        for (std::uint32_t d = 0; d < ndim; ++d) dims[4 - ndim + d] = r.u32(field + " dims");
        const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
        if (!shape.valid()) throw LoadError(field + ": zero dimension");
        const std::size_t width = dtype == 0 ? 4 : 8;
        r.need(shape.count() * width, field + " data");
        if (dtype == 0) {
            std::vector<float> v(shape.count());
            for (float& x : v) x = std::bit_cast<float>(r.u32(field + " data"));
            nt.value = Tensor<float>(shape, std::move(v));
        } else {
            std::vector<double> v(shape.count());
            for (double& x : v) x = std::bit_cast<double>(r.u64(field + " data"));
            nt.value = Tensor<double>(shape, std::move(v));
        }
        cp.tensors.push_back(std::move(nt));
    }
    cp.config_text = r.str("config text");
    if (!r.done()) throw LoadError("trailing bytes after config text at offset " + std::to_string(r.pos()));
    return cp;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::string bytes = serialize_checkpoint(cp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

inline const std::string& velocity_prefix() {
    static const std::string p = "velocity/";
    return p;
}
inline const std::string& optim_state_name() {
    static const std::string p = "optim.state";
    return p;
}

/// Parameters, batchnorm running statistics, optimizer velocity and the
/// (iteration, epoch) counters.
template <typename T>
Checkpoint make_checkpoint(const RunConfig& cfg, const ParamSet<T>& params, const OptimState<T>* state) {
    Checkpoint cp;
    cp.kind = cfg.topology.kind;
    for (auto c : cfg.topology.channels) cp.channels.push_back(static_cast<std::uint32_t>(c));
    for (const auto& e : params.entries()) cp.tensors.push_back({e.name, e.value});
    if (state) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& e = params.entries()[i];
            if (is_learnable(e.kind)) cp.tensors.push_back({velocity_prefix() + e.name, state->velocity[i]});
        }
        Tensor<double> counters(Shape4{1, 1, 1, 2});
        counters[0] = static_cast<double>(state->iteration);
        counters[1] = static_cast<double>(state->epoch);
        cp.tensors.push_back({optim_state_name(), counters});
    }
    cp.config_text = print_config(cfg);
    return cp;
}

template <typename T>
struct RestoredRun {
    RunConfig config;
    SynNetModel model;
    ParamSet<T> params;
    std::optional<OptimState<T>> state;
};

namespace detail {

template <typename T>
const Tensor<T>& tensor_as(const NamedTensor& nt) {
    if (const auto* t = std::get_if<Tensor<T>>(&nt.value)) return *t;
    throw LoadError("tensor '" + nt.name + "' has the wrong precision");
}

} // namespace detail

/// Seeded initialization for a new run; the stream is disjoint from the
/// per-epoch shuffle streams.
template <typename T>
RestoredRun<T> fresh_run(const RunConfig& cfg) {
    RestoredRun<T> run;
    run.config = cfg;
    RngStream rng(init_seed(cfg.train.seed));
    auto [model, params] = build_model<T>(cfg.topology, rng, cfg.bn);
    run.state = OptimState<T>::for_params(params, cfg.train.lr, cfg.train.momentum);
    run.model = std::move(model);
    run.params = std::move(params);
    return run;
}

/// Rebuilds config, model wiring, parameters and (if stored) optimizer state.
template <typename T>
RestoredRun<T> restore_checkpoint(const Checkpoint& cp) {
    RestoredRun<T> run;
    run.config = parse_config(cp.config_text);
    const Topology& topo = run.config.topology;
    std::vector<std::uint32_t> ch(topo.channels.begin(), topo.channels.end());
    if (topo.kind != cp.kind || ch != cp.channels) throw LoadError("topology block disagrees with the config echo");
    RngStream rng(0);
    auto [model, params] = build_model<T>(topo, rng, run.config.bn);
    for (auto& e : params.entries()) {
        const NamedTensor* nt = cp.find(e.name);
        if (!nt) throw LoadError("checkpoint lacks parameter '" + e.name + "'");
        const Tensor<T>& t = detail::tensor_as<T>(*nt);
        if (t.shape() != e.value.shape()) throw LoadError("parameter '" + e.name + "' has shape " + t.shape().str());
        e.value = t;
    }
    if (const NamedTensor* st = cp.find(optim_state_name())) {
        const Tensor<double>& counters = detail::tensor_as<double>(*st);
        if (counters.size() != 2) throw LoadError("malformed optimizer state");
        OptimState<T> s = OptimState<T>::for_params(params, run.config.train.lr, run.config.train.momentum);
        s.iteration = static_cast<std::uint64_t>(counters[0]);
        s.epoch = static_cast<std::uint64_t>(counters[1]);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& e = params.entries()[i];
            if (!is_learnable(e.kind)) continue;
            const NamedTensor* v = cp.find(velocity_prefix() + e.name);
            if (!v) throw LoadError("checkpoint lacks velocity for '" + e.name + "'");
            const Tensor<T>& t = detail::tensor_as<T>(*v);
            if (t.shape() != e.value.shape()) throw LoadError("velocity '" + e.name + "' has wrong shape");
            s.velocity[i] = t;
        }
        run.state = std::move(s);
    }
    run.model = std::move(model);
    run.params = std::move(params);
    return run;
}

} // namespace synnet
