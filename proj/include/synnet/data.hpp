#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "synnet/loss.hpp"
#include "synnet/tensor.hpp"

namespace synnet {

/// Modality names, in the order phantoms emit them.
inline const std::array<std::string, 4>& modality_names() {
    static const std::array<std::string, 4> names{"t1", "t2", "t1c", "flair"};
    return names;
}

inline bool is_modality(const std::string& name) {
    const auto& m = modality_names();
    return std::find(m.begin(), m.end(), name) != m.end();
}

template <typename T>
struct PhantomSample {
    std::string id;
    std::map<std::string, Tensor<T>> modalities;  // each (1, 1, h, w), values in [0, 1]

    const Tensor<T>& at(const std::string& m) const {
        auto it = modalities.find(m);
        if (it == modalities.end()) throw ConfigError("unknown modality '" + m + "'");
        return it->second;
    }
};

namespace detail {

using Plane = std::vector<double>;

inline Plane box3_replicate(const Plane& in, std::size_t H, std::size_t W) {
    Plane out(H * W);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0, static_cast<std::ptrdiff_t>(H) - 1);
                    const auto xx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + dx, 0, static_cast<std::ptrdiff_t>(W) - 1);
                    acc += in[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)];
                }
            }
            out[y * W + x] = acc / 9.0;
        }
    }
    return out;
}

template <typename T>
Tensor<T> plane_tensor(const Plane& p, std::size_t H, std::size_t W) {
    Tensor<T> t(Shape4{1, 1, H, W});
    for (std::size_t j = 0; j < p.size(); ++j) t[j] = static_cast<T>(std::clamp(p[j], 0.0, 1.0));
    return t;
}

} // namespace detail

/// Derives the four modalities from a shared base field B in [0, 1]:
/// t1 = B, t2 = box3(1 - B), t1c = clip(B + 0.5 * edges(B)), flair = sqrt(B).
template <typename T>
PhantomSample<T> phantom_from_base(std::string id, const std::vector<double>& base, std::size_t h, std::size_t w) {
    detail::Plane inv(base.size());
    for (std::size_t j = 0; j < base.size(); ++j) inv[j] = 1.0 - base[j];
    const detail::Plane t2 = detail::box3_replicate(inv, h, w);
    const detail::Plane edges = detail::normalized_edges(base.data(), h, w);
    detail::Plane t1c(base.size()), flair(base.size());
    for (std::size_t j = 0; j < base.size(); ++j) {
        t1c[j] = std::clamp(base[j] + 0.5 * edges[j], 0.0, 1.0);
        flair[j] = std::sqrt(std::max(base[j], 0.0));
    }
    PhantomSample<T> s;
    s.id = std::move(id);
    s.modalities.emplace("t1", detail::plane_tensor<T>(base, h, w));
    s.modalities.emplace("t2", detail::plane_tensor<T>(t2, h, w));
    s.modalities.emplace("t1c", detail::plane_tensor<T>(t1c, h, w));
    s.modalities.emplace("flair", detail::plane_tensor<T>(flair, h, w));
    return s;
}

/// Base field: 5-12 Gaussian blobs plus 1-3 filled ellipses, min-max
/// normalized to [0, 1].
inline std::vector<double> phantom_base(std::uint64_t seed, std::size_t h, std::size_t w) {
    if (h < 16 || w < 16) {
        throw ParameterError("phantom size " + std::to_string(h) + "x" + std::to_string(w) + " below minimum 16x16");
    }
    RngStream rng(seed);
    std::vector<double> b(h * w, 0.0);
    const double H = static_cast<double>(h), W = static_cast<double>(w), side = std::min(H, W);

    const std::size_t blobs = 5 + rng.below(8);
    for (std::size_t k = 0; k < blobs; ++k) {
        const double cy = rng.uniform(0.15, 0.85) * H;
        const double cx = rng.uniform(0.15, 0.85) * W;
        const double sigma = rng.uniform(0.04, 0.15) * side;
        const double amp = rng.uniform(0.3, 1.0);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                b[y * w + x] += amp * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            }
        }
    }
    const std::size_t ellipses = 1 + rng.below(3);
    for (std::size_t k = 0; k < ellipses; ++k) {
        const double cy = rng.uniform(0.2, 0.8) * H;
        const double cx = rng.uniform(0.2, 0.8) * W;
        const double ay = rng.uniform(0.1, 0.3) * H;
        const double ax = rng.uniform(0.1, 0.3) * W;
        const double angle = rng.uniform(0.0, std::numbers::pi);
        const double value = rng.uniform(0.2, 0.6);
        const double ca = std::cos(angle), sa = std::sin(angle);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                const double u = (ca * dx + sa * dy) / ax;
                const double v = (-sa * dx + ca * dy) / ay;
                if (u * u + v * v <= 1.0) b[y * w + x] += value;
            }
        }
    }
    for (double& v : b) v = std::max(v, 0.0);
    const auto [lo, hi] = std::minmax_element(b.begin(), b.end());
    const double mn = *lo, span = *hi - *lo;
    for (double& v : b) v = span > 0.0 ? (v - mn) / span : 0.0;
    return b;
}

template <typename T>
PhantomSample<T> generate_phantom(std::uint64_t seed, std::size_t h, std::size_t w, std::string id = {}) {
    return phantom_from_base<T>(std::move(id), phantom_base(seed, h, w), h, w);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentDraw {
    bool hflip = false;
    bool vflip = false;
    int rot90 = 0;       // counter-clockwise quarter turns, 0..3
    double scale = 1.0;  // 0.9, 1.0 or 1.1

    bool is_identity() const { return !hflip && !vflip && rot90 == 0 && scale == 1.0; }
};

inline AugmentDraw draw_augment(RngStream& rng) {
    static constexpr std::array<double, 3> scales{0.9, 1.0, 1.1};
    AugmentDraw d;
    d.hflip = rng.coin(0.5);
    d.vflip = rng.coin(0.5);
    d.rot90 = static_cast<int>(rng.below(4));
    d.scale = scales[rng.below(3)];
    return d;
}

namespace detail {

struct Image {
    std::size_t h, w;
    Plane px;
};

// Center crop or zero-pad to (h, w).
inline Image fit_center(const Image& in, std::size_t h, std::size_t w) {
    Image out{h, w, Plane(h * w, 0.0)};
    const auto oy = (static_cast<std::ptrdiff_t>(h) - static_cast<std::ptrdiff_t>(in.h)) / 2;
    const auto ox = (static_cast<std::ptrdiff_t>(w) - static_cast<std::ptrdiff_t>(in.w)) / 2;
    for (std::size_t y = 0; y < in.h; ++y) {
        const std::ptrdiff_t ty = static_cast<std::ptrdiff_t>(y) + oy;
        if (ty < 0 || ty >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t x = 0; x < in.w; ++x) {
            const std::ptrdiff_t tx = static_cast<std::ptrdiff_t>(x) + ox;
            if (tx < 0 || tx >= static_cast<std::ptrdiff_t>(w)) continue;
            out.px[static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx)] = in.px[y * in.w + x];
        }
    }
    return out;
}

inline Image rotate90_ccw(const Image& in) {
    Image out{in.w, in.h, Plane(in.px.size())};
    for (std::size_t y = 0; y < in.h; ++y) {
        for (std::size_t x = 0; x < in.w; ++x) out.px[(in.w - 1 - x) * out.w + y] = in.px[y * in.w + x];
    }
    return out;
}

inline Image resize_bilinear(const Image& in, std::size_t h, std::size_t w) {
    Image out{h, w, Plane(h * w)};
    const double sy = static_cast<double>(in.h) / static_cast<double>(h);
    const double sx = static_cast<double>(in.w) / static_cast<double>(w);
    for (std::size_t y = 0; y < h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in.h - 1);
        const double ay = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in.w - 1);
            const double ax = fx - static_cast<double>(x0);
            const double top = (1 - ax) * in.px[y0 * in.w + x0] + ax * in.px[y0 * in.w + x1];
            const double bot = (1 - ax) * in.px[y1 * in.w + x0] + ax * in.px[y1 * in.w + x1];
            out.px[y * w + x] = (1 - ay) * top + ay * bot;
        }
    }
    return out;
}

inline Image transform_image(Image img, const AugmentDraw& d) {
    const std::size_t h = img.h, w = img.w;
    if (d.hflip) {
        for (std::size_t y = 0; y < h; ++y) std::reverse(img.px.begin() + y * w, img.px.begin() + (y + 1) * w);
    }
    if (d.vflip) {
        for (std::size_t y = 0; y < h / 2; ++y) {
            std::swap_ranges(img.px.begin() + y * w, img.px.begin() + (y + 1) * w, img.px.begin() + (h - 1 - y) * w);
        }
    }
    for (int k = 0; k < (d.rot90 % 4 + 4) % 4; ++k) img = rotate90_ccw(img);
    if (img.h != h || img.w != w) img = fit_center(img, h, w);
    if (d.scale != 1.0) {
        const auto nh = static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(h) * d.scale)));
        const auto nw = static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(w) * d.scale)));
        img = fit_center(resize_bilinear(img, nh, nw), h, w);
    }
    return img;
}

} // namespace detail

/// Applies one geometric transform to every modality of the sample.
template <typename T>
PhantomSample<T> apply_augment(const PhantomSample<T>& sample, const AugmentDraw& d) {
    PhantomSample<T> out;
    out.id = sample.id;
    for (const auto& [name, t] : sample.modalities) {
        const Shape4& s = t.shape();
        Tensor<T> res(s);
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < s.c; ++c) {
                detail::Image img{s.h, s.w, detail::Plane(t.plane(n, c), t.plane(n, c) + s.plane())};
                img = detail::transform_image(std::move(img), d);
                T* dst = res.plane(n, c);
                for (std::size_t j = 0; j < s.plane(); ++j) dst[j] = static_cast<T>(std::clamp(img.px[j], 0.0, 1.0));
            }
        }
        out.modalities.emplace(name, std::move(res));
    }
    return out;
}

template <typename T>
PhantomSample<T> augment(const PhantomSample<T>& sample, RngStream& rng) {
    return apply_augment(sample, draw_augment(rng));
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)
// ---------------------------------------------------------------------------

/// Writes a (1, 1, h, w) tensor; values are clamped to [0, 1] and rounded
/// to the nearest of 256 levels.
template <typename T>
void save_pgm(const std::filesystem::path& path, const Tensor<T>& t) {
    const Shape4& s = t.shape();
    if (s.n != 1 || s.c != 1) throw ShapeError("save_pgm expects a (1,1,h,w) tensor, got " + s.str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P5\n" << s.w << " " << s.h << "\n255\n";
    std::string bytes(s.plane(), '\0');
    for (std::size_t j = 0; j < s.plane(); ++j) {
        const double v = std::clamp(static_cast<double>(t[j]), 0.0, 1.0);
        bytes[j] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

namespace detail {

class PgmReader {
public:
    explicit PgmReader(std::string bytes) : buf_(std::move(bytes)) {}

    void skip_space_and_comments() {
        while (pos_ < buf_.size()) {
            const char c = buf_[pos_];
            if (c == '#') {
                while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* field) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < buf_.size() && std::isdigit(static_cast<unsigned char>(buf_[pos_]))) {
            v = v * 10 + static_cast<std::size_t>(buf_[pos_] - '0');
            if (v > 1'000'000'000) fail(start, std::string("implausible ") + field);
            ++pos_;
        }
        if (pos_ == start) fail(start, std::string("expected ") + field);
        return v;
    }

    [[noreturn]] void fail(std::size_t at, const std::string& what) const {
        throw ParseError("pgm: " + what + " at byte offset " + std::to_string(at));
    }

    const std::string& buf() const { return buf_; }
    std::size_t pos_ = 0;

private:
    std::string buf_;
};

} // namespace detail

/// Reads a binary graymap, scaling bytes by 1/255.
template <typename T = float>
Tensor<T> load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    detail::PgmReader r(ss.str());
    const std::string& b = r.buf();
    if (b.size() < 2 || b[0] != 'P' || b[1] != '5') r.fail(0, "bad magic (expected P5)");
    r.pos_ = 2;
    const std::size_t w = r.number("width");
    const std::size_t h = r.number("height");
    const std::size_t maxval_at = r.pos_;
    const std::size_t maxval = r.number("maxval");
    if (w == 0 || h == 0) r.fail(maxval_at, "zero image dimension");
    if (maxval != 255) r.fail(maxval_at, "unsupported maxval " + std::to_string(maxval));
    if (r.pos_ >= b.size() || !std::isspace(static_cast<unsigned char>(b[r.pos_]))) {
        r.fail(r.pos_, "missing whitespace after header");
    }
    ++r.pos_;
    if (b.size() - r.pos_ < w * h) {
        r.fail(b.size(), "truncated payload (" + std::to_string(b.size() - r.pos_) + " of " + std::to_string(w * h) +
                             " bytes)");
    }
    Tensor<T> t(Shape4{1, 1, h, w});
    for (std::size_t j = 0; j < w * h; ++j) {
        t[j] = static_cast<T>(static_cast<double>(static_cast<unsigned char>(b[r.pos_ + j])) / 255.0);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Padding to a multiple of 2^depth
// ---------------------------------------------------------------------------

struct CropRecord {
    std::size_t top = 0, bottom = 0, left = 0, right = 0;
    std::size_t h = 0, w = 0;  // original size
};

/// Symmetric zero padding up to the next multiple of `factor`; the odd
/// pixel goes to the bottom/right.
template <typename T>
std::pair<Tensor<T>, CropRecord> pad_to_multiple(const Tensor<T>& t, std::size_t factor) {
    if (factor == 0) throw ParameterError("pad factor must be positive");
    const Shape4& s = t.shape();
    auto up = [factor](std::size_t v) { return (v + factor - 1) / factor * factor; };
    const std::size_t ph = up(s.h) - s.h, pw = up(s.w) - s.w;
    CropRecord rec{ph / 2, ph - ph / 2, pw / 2, pw - pw / 2, s.h, s.w};
    if (ph == 0 && pw == 0) return {t, rec};
    Tensor<T> out(Shape4{s.n, s.c, s.h + ph, s.w + pw});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < s.h; ++y) {
                std::copy_n(t.plane(n, c) + y * s.w, s.w, out.plane(n, c) + (y + rec.top) * out.shape().w + rec.left);
            }
        }
    }
    return {std::move(out), rec};
}

template <typename T>
Tensor<T> crop_back(const Tensor<T>& t, const CropRecord& rec) {
    const Shape4& s = t.shape();
    if (s.h != rec.h + rec.top + rec.bottom || s.w != rec.w + rec.left + rec.right) {
        throw ShapeError("crop_back: " + s.str() + " does not match the crop record");
    }
    if (s.h == rec.h && s.w == rec.w) return t;
    Tensor<T> out(Shape4{s.n, s.c, rec.h, rec.w});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < rec.h; ++y) {
                std::copy_n(t.plane(n, c) + (y + rec.top) * s.w + rec.left, rec.w, out.plane(n, c) + y * rec.w);
            }
        }
    }
    return out;
}

/// Zero-pads a cropped tensor back to the padded size (adjoint of crop_back).
template <typename T>
Tensor<T> uncrop(const Tensor<T>& t, const CropRecord& rec) {
    const Shape4& s = t.shape();
    if (s.h != rec.h || s.w != rec.w) throw ShapeError("uncrop: " + s.str() + " does not match the crop record");
    if (rec.top + rec.bottom + rec.left + rec.right == 0) return t;
    const std::size_t H = rec.h + rec.top + rec.bottom, W = rec.w + rec.left + rec.right;
    Tensor<T> out(Shape4{s.n, s.c, H, W});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < rec.h; ++y) {
                std::copy_n(t.plane(n, c) + y * rec.w, rec.w, out.plane(n, c) + (y + rec.top) * W + rec.left);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Datasets on disk and mini-batching
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    std::size_t h = 0, w = 0;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::optional<std::uint64_t> seed;  // generator seed, when synthetic
};

template <typename T>
struct Dataset {
    std::vector<PhantomSample<T>> samples;
    std::optional<std::uint64_t> seed;
};

inline std::string sample_id(std::size_t index) {
    std::ostringstream ss;
    ss << "s" << std::setw(4) << std::setfill('0') << index;
    return ss.str();
}

/// Per-sample generator seed derived from the dataset seed.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return RngStream::derive(seed, index); }

template <typename T>
Dataset<T> generate_dataset(std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed) {
    Dataset<T> ds;
    ds.seed = seed;
    for (std::size_t i = 0; i < count; ++i) ds.samples.push_back(generate_phantom<T>(sample_seed(seed, i), h, w, sample_id(i)));
    return ds;
}

/// Writes <root>/<id>/<modality>.pgm for every sample plus manifest.txt.
template <typename T>
DatasetManifest write_dataset(const std::filesystem::path& root, const Dataset<T>& ds) {
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    DatasetManifest man{root, {}, ds.seed};
    std::ofstream mf(root / "manifest.txt");
    if (!mf) throw IoError("cannot write " + (root / "manifest.txt").string());
    if (ds.seed) mf << "seed\t" << *ds.seed << '\n';
    for (const auto& s : ds.samples) {
        const auto dir = root / s.id;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        for (const auto& [name, t] : s.modalities) save_pgm(dir / (name + ".pgm"), t);
        const Shape4& sh = s.modalities.begin()->second.shape();
        mf << s.id << '\t' << sh.h << '\t' << sh.w << '\n';
        man.entries.push_back({s.id, sh.h, sh.w});
    }
    if (!mf) throw IoError("failed writing manifest");
    return man;
}

inline DatasetManifest read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.txt";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    DatasetManifest man{root, {}, std::nullopt};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line.rfind("seed\t", 0) == 0) {
            std::string key, extra;
            std::uint64_t seed = 0;
            if (lineno != 1 || !(ls >> key >> seed) || (ls >> extra)) {
                throw ParseError("manifest line " + std::to_string(lineno) + ": malformed seed line");
            }
            man.seed = seed;
            continue;
        }
        ManifestEntry e;
        std::string extra;
        if (!std::getline(ls, e.id, '\t') || !(ls >> e.h >> e.w) || (ls >> extra)) {
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected id<TAB>h<TAB>w");
        }
        man.entries.push_back(std::move(e));
    }
    if (man.entries.empty()) throw ParseError("manifest " + path.string() + " lists no samples");
    return man;
}

template <typename T>
Dataset<T> load_dataset(const DatasetManifest& man) {
    Dataset<T> ds;
    ds.seed = man.seed;
    for (const auto& e : man.entries) {
        PhantomSample<T> s;
        s.id = e.id;
        for (const auto& m : modality_names()) {
            const auto p = man.root / e.id / (m + ".pgm");
            if (!std::filesystem::exists(p)) continue;
            Tensor<T> t = load_pgm<T>(p);
            if (t.shape().h != e.h || t.shape().w != e.w) {
                throw ParseError(p.string() + ": size " + t.shape().str() + " disagrees with manifest");
            }
            s.modalities.emplace(m, std::move(t));
        }
        if (s.modalities.empty()) throw IoError("sample " + e.id + " has no modality images");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

template <typename T>
Dataset<T> load_dataset(const std::filesystem::path& root) {
    return load_dataset<T>(read_manifest(root));
}

/// First `fraction` of the sample order is the training split.
struct Split {
    std::vector<std::size_t> train, test;
};

inline Split split_indices(std::size_t count, double train_fraction) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ParameterError("train fraction must be in [0, 1]");
    const auto ntrain = static_cast<std::size_t>(std::floor(static_cast<double>(count) * train_fraction + 1e-9));
    Split s;
    for (std::size_t i = 0; i < count; ++i) (i < ntrain ? s.train : s.test).push_back(i);
    return s;
}

template <typename T>
struct Batch {
    std::vector<Tensor<T>> inputs;   // one (B, 1, h, w) tensor per input modality
    std::vector<Tensor<T>> targets;  // one per output modality
    std::vector<std::size_t> samples;
};

struct BatchOptions {
    std::vector<std::string> input_modalities{"t1"};
    std::vector<std::string> output_modalities{"t2"};
    std::size_t batch_size = 32;
    bool shuffle = true;
    bool augment = false;
};

/// Seeded permutation of `indices` cut into consecutive batches; the last
/// batch may be short.
template <typename T>
std::vector<Batch<T>> batches(const Dataset<T>& ds, std::span<const std::size_t> indices, const BatchOptions& opt,
                              std::uint64_t epoch_seed) {
    if (opt.batch_size == 0) throw ParameterError("batch size must be >= 1");
    for (const auto* list : {&opt.input_modalities, &opt.output_modalities}) {
        if (list->empty()) throw ConfigError("no modalities requested");
        for (const auto& m : *list) {
            if (!is_modality(m)) throw ConfigError("unknown modality '" + m + "'");
        }
    }
    std::vector<std::size_t> order(indices.begin(), indices.end());
    RngStream rng(epoch_seed);
    if (opt.shuffle) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::vector<Batch<T>> out;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
        const std::size_t end = std::min(order.size(), start + opt.batch_size);
        Batch<T> b;
        std::vector<std::vector<Tensor<T>>> in(opt.input_modalities.size()), tg(opt.output_modalities.size());
        for (std::size_t k = start; k < end; ++k) {
            const std::size_t idx = order[k];
            if (idx >= ds.samples.size()) throw UsageError("sample index out of range");
            const PhantomSample<T>* s = &ds.samples[idx];
            PhantomSample<T> aug;
            if (opt.augment) {
                RngStream arng(RngStream::derive(epoch_seed, idx));
                aug = augment(*s, arng);
                s = &aug;
            }
            for (std::size_t m = 0; m < in.size(); ++m) in[m].push_back(s->at(opt.input_modalities[m]));
            for (std::size_t m = 0; m < tg.size(); ++m) tg[m].push_back(s->at(opt.output_modalities[m]));
            b.samples.push_back(idx);
        }
        for (auto& v : in) b.inputs.push_back(stack_batch<T>(v));
        for (auto& v : tg) b.targets.push_back(stack_batch<T>(v));
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace synnet
