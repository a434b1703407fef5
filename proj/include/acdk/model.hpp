#pragma once

// Small encoder-decoder disparity network with hand-written backward pass.
//
//   enc1..enc3 : conv3x3 stride 2 + ReLU, channels in -> 8 -> 16 -> 32
//   dec1       : up2, conv3x3 32->16 + ReLU, + enc2
//   dec2       : up2, conv3x3 16->8  + ReLU, + enc1
//   dec3       : up2, conv3x3 8->8   + ReLU
//   head       : conv1x1 8->1 + softplus
//
// Activations are CHW. Parameters of all layers live in one flat vector so
// optimizers and gradient checks can address them uniformly.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "acdk/image.hpp"
#include "acdk/rng.hpp"

namespace acdk {

enum class LayerKind : std::uint32_t { encoder = 0, decoder = 1, head = 2 };

struct LayerSpec {
    std::string name;
    LayerKind kind;
    int in_channels;
    int out_channels;
    int kernel;
    int stride;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
    std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out_channels); }
    bool operator==(const LayerSpec&) const = default;
};

inline constexpr int kEncoderLayers = 3;
inline constexpr int kLayerCount = 7;

inline std::vector<LayerSpec> depthnet_layout(int input_channels) {
    std::vector<LayerSpec> layers{
        {"enc1", LayerKind::encoder, input_channels, 8, 3, 2},
        {"enc2", LayerKind::encoder, 8, 16, 3, 2},
        {"enc3", LayerKind::encoder, 16, 32, 3, 2},
        {"dec1", LayerKind::decoder, 32, 16, 3, 1},
        {"dec2", LayerKind::decoder, 16, 8, 3, 1},
        {"dec3", LayerKind::decoder, 8, 8, 3, 1},
        {"head", LayerKind::head, 8, 1, 1, 1},
    };
    std::size_t offset = 0;
    for (auto& l : layers) {
        l.weight_offset = offset;
        offset += l.weight_count();
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(l.out_channels);
    }
    return layers;
}

template <typename T>
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int channels, int height, int width) : c(channels), h(height), w(width),
        data(static_cast<std::size_t>(channels) * height * width, T(0)) {}

    T* plane(int ch) { return data.data() + static_cast<std::size_t>(ch) * h * w; }
    const T* plane(int ch) const { return data.data() + static_cast<std::size_t>(ch) * h * w; }
};

/// Parameters, gradient buffers, AdamW moments and per-layer freeze flags.
template <typename T>
struct ModelState {
    int input_channels = 3;
    std::uint64_t init_seed = 0;
    std::vector<LayerSpec> layers;
    std::vector<T> params;
    std::vector<T> grads;
    std::vector<T> moment1;
    std::vector<T> moment2;
    long optimizer_steps = 0;
    std::array<bool, kLayerCount> frozen{};
    std::uint64_t version = 0;  // bumped on every parameter update

    ModelState() = default;

    template <typename U>
    explicit ModelState(const ModelState<U>& o)
        : input_channels(o.input_channels), init_seed(o.init_seed), layers(o.layers),
          params(o.params.begin(), o.params.end()), grads(o.grads.begin(), o.grads.end()),
          moment1(o.moment1.begin(), o.moment1.end()), moment2(o.moment2.begin(), o.moment2.end()),
          optimizer_steps(o.optimizer_steps), frozen(o.frozen) {}

    std::span<T> weights(int layer) {
        return {params.data() + layers[layer].weight_offset, layers[layer].weight_count()};
    }
    std::span<const T> weights(int layer) const {
        return {params.data() + layers[layer].weight_offset, layers[layer].weight_count()};
    }
    std::span<const T> bias(int layer) const {
        return {params.data() + layers[layer].bias_offset, static_cast<std::size_t>(layers[layer].out_channels)};
    }

    void zero_grads() { std::fill(grads.begin(), grads.end(), T(0)); }

    void set_encoder_frozen(bool f) {
        for (int i = 0; i < kEncoderLayers; ++i) frozen[i] = f;
    }
    void freeze_all() { frozen.fill(true); }

    /// Layer index owning flat parameter `p`.
    int layer_of(std::size_t p) const {
        for (int i = 0; i < static_cast<int>(layers.size()); ++i)
            if (p < layers[i].bias_offset + static_cast<std::size_t>(layers[i].out_channels)) return i;
        throw InvalidArgument("parameter index out of range");
    }

    std::string describe_param(std::size_t p) const {
        const int l = layer_of(p);
        const LayerSpec& s = layers[l];
        if (p >= s.bias_offset) return s.name + ".bias[" + std::to_string(p - s.bias_offset) + "]";
        return s.name + ".weight[" + std::to_string(p - s.weight_offset) + "]";
    }
};

using DepthNet = ModelState<float>;

/// He-uniform weights, zero biases; each layer draws from its own labeled stream.
template <typename T = float>
ModelState<T> init_model(std::uint64_t seed, int input_channels) {
    if (input_channels != 1 && input_channels != 3) throw InvalidArgument("init_model: input channels must be 1 or 3");
    ModelState<T> m;
    m.input_channels = input_channels;
    m.init_seed = seed;
    m.layers = depthnet_layout(input_channels);
    const std::size_t total = m.layers.back().bias_offset + m.layers.back().out_channels;
    m.params.assign(total, T(0));
    m.grads.assign(total, T(0));
    m.moment1.assign(total, T(0));
    m.moment2.assign(total, T(0));
    const Rng root = Rng(seed).fork("init");
    for (const auto& l : m.layers) {
        Rng r = root.fork(l.name);
        const double limit = std::sqrt(6.0 / (static_cast<double>(l.in_channels) * l.kernel * l.kernel));
        for (std::size_t i = 0; i < l.weight_count(); ++i)
            m.params[l.weight_offset + i] = static_cast<T>(rng_uniform(r, -limit, limit));
    }
    return m;
}

/// Deep copy with every layer frozen.
template <typename T>
ModelState<T> clone_frozen(const ModelState<T>& m) {
    ModelState<T> t = m;
    t.freeze_all();
    t.zero_grads();
    return t;
}

// ---------------------------------------------------------------------------
// Kernels

namespace detail {

template <typename T>
void conv_forward(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int kernel, int stride,
                  Tensor<T>& out) {
    const int pad = kernel / 2;
    for (int oc = 0; oc < out.c; ++oc) {
        T* o = out.plane(oc);
        std::fill(o, o + static_cast<std::size_t>(out.h) * out.w, b[oc]);
        for (int ic = 0; ic < in.c; ++ic) {
            const T* src = in.plane(ic);
            for (int ky = 0; ky < kernel; ++ky) {
                for (int kx = 0; kx < kernel; ++kx) {
                    const T wv = w[((static_cast<std::size_t>(oc) * in.c + ic) * kernel + ky) * kernel + kx];
                    const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                    const int ox_hi = std::min(out.w - 1, (in.w - 1 + pad - kx) / stride);
                    for (int oy = 0; oy < out.h; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= in.h) continue;
                        const T* srow = src + static_cast<std::size_t>(iy) * in.w + (kx - pad);
                        T* orow = o + static_cast<std::size_t>(oy) * out.w;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * srow[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * srow[ox * stride];
                        }
                    }
                }
            }
        }
    }
}

// Accumulates dW, db (when gw is non-empty) and writes dIn (when gin != nullptr).
template <typename T>
void conv_backward(const Tensor<T>& in, std::span<const T> w, int kernel, int stride, const Tensor<T>& gout,
                   std::span<T> gw, std::span<T> gb, Tensor<T>* gin) {
    const int pad = kernel / 2;
    if (gin) std::fill(gin->data.begin(), gin->data.end(), T(0));
    for (int oc = 0; oc < gout.c; ++oc) {
        const T* g = gout.plane(oc);
        if (!gb.empty()) {
            T s = 0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(gout.h) * gout.w; ++i) s += g[i];
            gb[oc] += s;
        }
        for (int ic = 0; ic < in.c; ++ic) {
            const T* src = in.plane(ic);
            T* dst = gin ? gin->plane(ic) : nullptr;
            for (int ky = 0; ky < kernel; ++ky) {
                for (int kx = 0; kx < kernel; ++kx) {
                    const std::size_t widx = ((static_cast<std::size_t>(oc) * in.c + ic) * kernel + ky) * kernel + kx;
                    const T wv = w[widx];
                    const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                    const int ox_hi = std::min(gout.w - 1, (in.w - 1 + pad - kx) / stride);
                    T acc = 0;
                    for (int oy = 0; oy < gout.h; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= in.h) continue;
                        const std::size_t ioff = static_cast<std::size_t>(iy) * in.w + (kx - pad);
                        const T* srow = src + ioff;
                        const T* grow = g + static_cast<std::size_t>(oy) * gout.w;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) acc += grow[ox] * srow[ox];
                            if (dst) {
                                T* drow = dst + ioff;
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) drow[ox] += wv * grow[ox];
                            }
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) acc += grow[ox] * srow[ox * stride];
                            if (dst) {
                                T* drow = dst + ioff;
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) drow[ox * stride] += wv * grow[ox];
                            }
                        }
                    }
                    if (!gw.empty()) gw[widx] += acc;
                }
            }
        }
    }
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& in) {
    Tensor<T> out(in.c, in.h * 2, in.w * 2);
    for (int c = 0; c < in.c; ++c) {
        const T* s = in.plane(c);
        T* d = out.plane(c);
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) d[static_cast<std::size_t>(y) * out.w + x] = s[static_cast<std::size_t>(y / 2) * in.w + x / 2];
    }
    return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& g) {
    Tensor<T> out(g.c, g.h / 2, g.w / 2);
    for (int c = 0; c < g.c; ++c) {
        const T* s = g.plane(c);
        T* d = out.plane(c);
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) d[static_cast<std::size_t>(y / 2) * out.w + x / 2] += s[static_cast<std::size_t>(y) * g.w + x];
    }
    return out;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
    for (T& v : t.data) v = v > T(0) ? v : T(0);
}

// g *= (pre > 0)
template <typename T>
void relu_backward_inplace(const Tensor<T>& pre, Tensor<T>& g) {
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (!(pre.data[i] > T(0))) g.data[i] = T(0);
}

template <typename T>
T softplus(T z) {
    return std::log1p(std::exp(-std::fabs(z))) + std::max(z, T(0));
}

template <typename T>
T sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

}  // namespace detail

/// Activations retained by forward for the matching backward.
template <typename T>
struct ForwardCache {
    const void* owner = nullptr;
    std::uint64_t version = 0;
    Tensor<T> input;
    std::array<Tensor<T>, kLayerCount> conv_in;  // input seen by each conv (after upsampling)
    std::array<Tensor<T>, kLayerCount> pre;      // conv outputs before the nonlinearity
};

template <typename T>
struct ForwardResult {
    DisparityMap disparity;
    ForwardCache<T> cache;
};

template <typename T>
Tensor<T> to_tensor(const ImageBuffer& img) {
    Tensor<T> t(img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                t.plane(c)[static_cast<std::size_t>(y) * img.width + x] = static_cast<T>(img.at(y, x, c));
    return t;
}

template <typename T>
ForwardResult<T> forward(const ModelState<T>& m, const ImageBuffer& img) {
    if (img.channels != m.input_channels)
        throw ShapeMismatch("forward: image has " + std::to_string(img.channels) + " channels, model expects " +
                            std::to_string(m.input_channels));
    if (img.height % 8 != 0 || img.width % 8 != 0)
        throw InvalidArgument("forward: image dimensions must be divisible by 8");

    ForwardResult<T> r;
    auto& cache = r.cache;
    cache.owner = &m;
    cache.version = m.version;
    cache.input = to_tensor<T>(img);

    auto conv = [&](int l, const Tensor<T>& in, int out_h, int out_w) {
        const LayerSpec& s = m.layers[l];
        cache.conv_in[l] = in;
        Tensor<T> out(s.out_channels, out_h, out_w);
        detail::conv_forward(in, m.weights(l), m.bias(l), s.kernel, s.stride, out);
        cache.pre[l] = out;
        return out;
    };

    const int h = img.height, w = img.width;
    Tensor<T> e1 = conv(0, cache.input, h / 2, w / 2);
    detail::relu_inplace(e1);
    Tensor<T> e2 = conv(1, e1, h / 4, w / 4);
    detail::relu_inplace(e2);
    Tensor<T> e3 = conv(2, e2, h / 8, w / 8);
    detail::relu_inplace(e3);

    Tensor<T> d1 = conv(3, detail::upsample2(e3), h / 4, w / 4);
    detail::relu_inplace(d1);
    for (std::size_t i = 0; i < d1.data.size(); ++i) d1.data[i] += e2.data[i];
    Tensor<T> d2 = conv(4, detail::upsample2(d1), h / 2, w / 2);
    detail::relu_inplace(d2);
    for (std::size_t i = 0; i < d2.data.size(); ++i) d2.data[i] += e1.data[i];
    Tensor<T> d3 = conv(5, detail::upsample2(d2), h, w);
    detail::relu_inplace(d3);
    Tensor<T> z = conv(6, d3, h, w);

    r.disparity = DisparityMap(h, w);
    for (std::size_t i = 0; i < z.data.size(); ++i) r.disparity.data[i] = static_cast<double>(detail::softplus(z.data[i]));
    return r;
}

/// Accumulates d(loss)/d(params) into `grads` for every unfrozen layer, given
/// d(loss)/d(disparity). Gradients are not propagated below the lowest
/// unfrozen layer.
template <typename T>
void backward(const ModelState<T>& m, const ForwardCache<T>& cache, const DisparityMap& grad_out, std::span<T> grads) {
    if (cache.owner != &m || cache.version != m.version)
        throw InvalidArgument("backward: cache is stale (parameters changed or different model)");
    const Tensor<T>& z = cache.pre[6];
    if (grad_out.height != z.h || grad_out.width != z.w) throw ShapeMismatch("backward: gradient shape mismatch");
    if (grads.size() != m.params.size()) throw ShapeMismatch("backward: gradient buffer size mismatch");

    // need_input_grad[l]: some layer below l still trains
    std::array<bool, kLayerCount> need_input_grad{};
    bool any_below = false;
    for (int l = 0; l < kLayerCount; ++l) {
        need_input_grad[l] = any_below;
        any_below = any_below || !m.frozen[l];
    }

    auto layer_backward = [&](int l, const Tensor<T>& gpre, Tensor<T>* gin) {
        const LayerSpec& s = m.layers[l];
        std::span<T> gw, gb;
        if (!m.frozen[l]) {
            gw = grads.subspan(s.weight_offset, s.weight_count());
            gb = grads.subspan(s.bias_offset, static_cast<std::size_t>(s.out_channels));
        }
        if (gw.empty() && !gin) return;
        detail::conv_backward(cache.conv_in[l], m.weights(l), s.kernel, s.stride, gpre, gw, gb, gin);
    };

    Tensor<T> gz(1, z.h, z.w);
    for (std::size_t i = 0; i < gz.data.size(); ++i)
        gz.data[i] = static_cast<T>(grad_out.data[i]) * detail::sigmoid(z.data[i]);

    // head -> d3
    Tensor<T> g_d3(m.layers[6].in_channels, z.h, z.w);
    layer_backward(6, gz, need_input_grad[6] ? &g_d3 : nullptr);
    if (!need_input_grad[6]) return;

    // dec3
    detail::relu_backward_inplace(cache.pre[5], g_d3);
    Tensor<T> g_u3(cache.conv_in[5].c, cache.conv_in[5].h, cache.conv_in[5].w);
    layer_backward(5, g_d3, need_input_grad[5] ? &g_u3 : nullptr);
    if (!need_input_grad[5]) return;
    Tensor<T> g_d2 = detail::upsample2_backward(g_u3);

    // dec2 (+ skip enc1)
    Tensor<T> g_e1 = g_d2;
    detail::relu_backward_inplace(cache.pre[4], g_d2);
    Tensor<T> g_u2(cache.conv_in[4].c, cache.conv_in[4].h, cache.conv_in[4].w);
    layer_backward(4, g_d2, need_input_grad[4] ? &g_u2 : nullptr);
    if (!need_input_grad[4]) return;
    Tensor<T> g_d1 = detail::upsample2_backward(g_u2);

    // dec1 (+ skip enc2)
    Tensor<T> g_e2 = g_d1;
    detail::relu_backward_inplace(cache.pre[3], g_d1);
    Tensor<T> g_u1(cache.conv_in[3].c, cache.conv_in[3].h, cache.conv_in[3].w);
    layer_backward(3, g_d1, need_input_grad[3] ? &g_u1 : nullptr);
    if (!need_input_grad[3]) return;
    Tensor<T> g_e3 = detail::upsample2_backward(g_u1);

    // enc3
    detail::relu_backward_inplace(cache.pre[2], g_e3);
    Tensor<T> tmp(cache.conv_in[2].c, cache.conv_in[2].h, cache.conv_in[2].w);
    layer_backward(2, g_e3, need_input_grad[2] ? &tmp : nullptr);
    if (!need_input_grad[2]) return;
    for (std::size_t i = 0; i < g_e2.data.size(); ++i) g_e2.data[i] += tmp.data[i];

    // enc2
    detail::relu_backward_inplace(cache.pre[1], g_e2);
    Tensor<T> tmp1(cache.conv_in[1].c, cache.conv_in[1].h, cache.conv_in[1].w);
    layer_backward(1, g_e2, need_input_grad[1] ? &tmp1 : nullptr);
    if (!need_input_grad[1]) return;
    for (std::size_t i = 0; i < g_e1.data.size(); ++i) g_e1.data[i] += tmp1.data[i];

    // enc1
    detail::relu_backward_inplace(cache.pre[0], g_e1);
    layer_backward(0, g_e1, nullptr);
}

template <typename T>
void backward(ModelState<T>& m, const ForwardCache<T>& cache, const DisparityMap& grad_out) {
    backward(static_cast<const ModelState<T>&>(m), cache, grad_out, std::span<T>(m.grads));
}

// ---------------------------------------------------------------------------
// Checkpoints: "ACDK1", input channels, init seed, layer-shape table,
// freeze flags, then every parameter as little-endian float32.

class CheckpointError : public Error {
public:
    enum class Code { Unreadable, Corrupt, VersionMismatch, Unwritable };
    CheckpointError(Code code, const std::string& msg) : Error(msg), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

inline constexpr std::string_view kCheckpointMagic = "ACDK1";

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}

class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& bytes, std::string path) : b_(bytes), path_(std::move(path)) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    unsigned char u8() {
        need(1);
        return b_[pos_++];
    }
    bool at_end() const { return pos_ == b_.size(); }
    void need(std::size_t n) const {
        if (pos_ + n > b_.size())
            throw CheckpointError(CheckpointError::Code::Corrupt, path_ + ": truncated checkpoint");
    }

private:
    const std::vector<unsigned char>& b_;
    std::string path_;
    std::size_t pos_ = 0;

};

}  // namespace detail

template <typename T>
void save_checkpoint(const ModelState<T>& m, const std::filesystem::path& path) {
    std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_u32(out, static_cast<std::uint32_t>(m.input_channels));
    detail::put_u64(out, m.init_seed);
    detail::put_u32(out, static_cast<std::uint32_t>(m.layers.size()));
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        detail::put_u32(out, static_cast<std::uint32_t>(l.kind));
        detail::put_u32(out, static_cast<std::uint32_t>(l.in_channels));
        detail::put_u32(out, static_cast<std::uint32_t>(l.out_channels));
        detail::put_u32(out, static_cast<std::uint32_t>(l.kernel));
        detail::put_u32(out, static_cast<std::uint32_t>(l.stride));
        out.push_back(m.frozen[i] ? 1 : 0);
    }
    detail::put_u64(out, m.params.size());
    for (T p : m.params) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p)));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(CheckpointError::Code::Unwritable, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError(CheckpointError::Code::Unwritable, "write failed for " + path.string());
}

template <typename T = float>
ModelState<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointError::Code::Unreadable, "cannot open " + path.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    const std::string where = path.string();

    const std::string_view family = kCheckpointMagic.substr(0, 4);
    if (bytes.size() < kCheckpointMagic.size() ||
        !std::equal(family.begin(), family.end(), bytes.begin()))
        throw CheckpointError(CheckpointError::Code::Corrupt, where + ": not an ACDK checkpoint");
    if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
        throw CheckpointError(CheckpointError::Code::VersionMismatch,
                              where + ": checkpoint version '" +
                                  std::string(bytes.begin(), bytes.begin() + kCheckpointMagic.size()) +
                                  "' is not " + std::string(kCheckpointMagic));

    std::vector<unsigned char> body(bytes.begin() + kCheckpointMagic.size(), bytes.end());
    detail::ByteReader r(body, where);
    const int channels = static_cast<int>(r.u32());
    if (channels != 1 && channels != 3) throw CheckpointError(CheckpointError::Code::Corrupt, where + ": bad channel count");
    ModelState<T> m = init_model<T>(0, channels);
    m.init_seed = r.u64();
    const std::uint32_t count = r.u32();
    if (count != m.layers.size()) throw CheckpointError(CheckpointError::Code::Corrupt, where + ": layer count mismatch");
    for (std::size_t i = 0; i < count; ++i) {
        const LayerSpec& l = m.layers[i];
        const std::uint32_t kind = r.u32(), in_c = r.u32(), out_c = r.u32(), k = r.u32(), s = r.u32();
        if (kind != static_cast<std::uint32_t>(l.kind) || in_c != static_cast<std::uint32_t>(l.in_channels) ||
            out_c != static_cast<std::uint32_t>(l.out_channels) || k != static_cast<std::uint32_t>(l.kernel) ||
            s != static_cast<std::uint32_t>(l.stride))
            throw CheckpointError(CheckpointError::Code::Corrupt, where + ": layer " + l.name + " shape mismatch");
        m.frozen[i] = r.u8() != 0;
    }
    const std::uint64_t n = r.u64();
    if (n != m.params.size()) throw CheckpointError(CheckpointError::Code::Corrupt, where + ": parameter count mismatch");
    r.need(n * 4);
    for (std::uint64_t i = 0; i < n; ++i) m.params[i] = static_cast<T>(std::bit_cast<float>(r.u32()));
    if (!r.at_end()) throw CheckpointError(CheckpointError::Code::Corrupt, where + ": trailing bytes");
    for (T p : m.params)
        if (!std::isfinite(static_cast<double>(p)))
            throw CheckpointError(CheckpointError::Code::Corrupt, where + ": non-finite parameter");
    return m;
}

}  // namespace acdk
