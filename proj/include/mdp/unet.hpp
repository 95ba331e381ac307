#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mdp/error.hpp"
#include "mdp/layers.hpp"
#include "mdp/tensor.hpp"

namespace mdp {

/// Three-level U-Net on (residual, distance) input pairs.
///
///   0  conv3  2 -> 16   bias      |  encoder, full resolution
///   1  conv3 16 -> 32   bias      |  (skip 1)
///   2  conv3 32 -> 64             |  then 2x2x2 max pool (skip 2)
///   3  conv3 64 -> 128            |  half resolution, then pool
///   4  conv3 128 -> 128           |  quarter resolution
///   5  up2  128 -> 64             |  decoder 2, concat skip 2
///   6  conv3 128 -> 64  bias
///   7  up2   64 -> 32             |  decoder 1, concat skip 1
///   8  conv3  64 -> 32  bias
///   9  conv1  32 -> 16  bias      |  head
///  10  conv1  16 -> 1   bias      |  linear output
///
/// ReLU follows every layer except 5, 7 and 10.
struct UNetParams {
    std::vector<LayerParams> layers;

    static constexpr int layer_count = 11;

    std::size_t parameter_count() const
    {
        std::size_t c = 0;
        for (const auto& l : layers) {
            c += l.parameter_count();
        }
        return c;
    }

    bool operator==(const UNetParams& o) const
    {
        if (layers.size() != o.layers.size()) {
            return false;
        }
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& a = layers[i];
            const auto& b = o.layers[i];
            if (a.kind != b.kind || a.cout != b.cout || a.cin != b.cin || a.ksize != b.ksize || a.w != b.w ||
                a.b != b.b) {
                return false;
            }
        }
        return true;
    }
};

/// Zero-initialized parameters with the fixed architecture.
inline UNetParams unet_architecture()
{
    using K = LayerKind;
    UNetParams p;
    p.layers = {
        LayerParams::make(K::conv, 2, 16, 3, true),     LayerParams::make(K::conv, 16, 32, 3, true),
        LayerParams::make(K::conv, 32, 64, 3, false),   LayerParams::make(K::conv, 64, 128, 3, false),
        LayerParams::make(K::conv, 128, 128, 3, false), LayerParams::make(K::upconv, 128, 64, 2, false),
        LayerParams::make(K::conv, 128, 64, 3, true),   LayerParams::make(K::upconv, 64, 32, 2, false),
        LayerParams::make(K::conv, 64, 32, 3, true),    LayerParams::make(K::conv, 32, 16, 1, true),
        LayerParams::make(K::conv, 16, 1, 1, true),
    };
    return p;
}

/// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)); the linear output
/// layer uses sqrt(3/fan_in). Biases start at zero.
inline UNetParams init_unet(std::uint64_t seed)
{
    UNetParams p = unet_architecture();
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        LayerParams& L = p.layers[l];
        const double fan_in = L.kind == LayerKind::conv ? static_cast<double>(L.cin) * L.taps() : L.cin;
        const double gain = l + 1 == p.layers.size() ? 3.0 : 6.0;
        const double a = std::sqrt(gain / fan_in);
        std::uniform_real_distribution<double> u(-a, a);
        for (double& w : L.w) {
            w = u(rng);
        }
    }
    return p;
}

/// Activations kept for the backward pass.
struct UNetCache {
    Tensor4 x, a1, e1, a3, e2, a4, a5, a6, c1, a7, c2, a8, a9;
    std::vector<std::size_t> pool1, pool2;
    Shape3 pad1, pad2;
};

namespace detail {

inline void check_unet_input(const UNetParams& p, const Tensor4& x)
{
    require_dims(static_cast<int>(p.layers.size()) == UNetParams::layer_count, "unet: wrong number of layers");
    require_dims(x.c == 2, "unet: expected 2 input channels, got " + std::to_string(x.c));
    if (x.s.n1 < 8 || x.s.n2 < 8 || x.s.n3 < 8) {
        throw DimensionError("unet: spatial size " + x.s.str() + " too small (need >= 8 per axis)");
    }
}

inline Tensor4 conv_relu(const Tensor4& x, const LayerParams& L)
{
    Tensor4 y = conv3d(x, L);
    relu_inplace(y);
    return y;
}

inline Shape3 pad_to(const Shape3& coarse, const Shape3& fine)
{
    return {fine.n1 - 2 * coarse.n1, fine.n2 - 2 * coarse.n2, fine.n3 - 2 * coarse.n3};
}

} // namespace detail

/// Forward pass on a (2, n1, n2, n3) batch; returns (1, n1, n2, n3).
/// When `cache` is non-null the intermediate activations are stored in it.
inline Tensor4 unet_forward(const UNetParams& p, const Tensor4& x, UNetCache* cache = nullptr)
{
    detail::check_unet_input(p, x);
    const auto& L = p.layers;
    UNetCache local;
    UNetCache& c = cache ? *cache : local;
    const bool keep = cache != nullptr;

    c.a1 = detail::conv_relu(x, L[0]);
    c.e1 = detail::conv_relu(c.a1, L[1]);
    c.a3 = detail::conv_relu(c.e1, L[2]);
    c.e2 = maxpool3d(c.a3, c.pool1);
    c.a4 = detail::conv_relu(c.e2, L[3]);
    c.a5 = maxpool3d(c.a4, c.pool2);
    if (!keep) {
        c.a1 = {};
        c.a3 = {};
        c.a4 = {};
    }
    c.a6 = detail::conv_relu(c.a5, L[4]);
    c.pad1 = detail::pad_to(c.a6.s, c.e2.s);
    c.c1 = concat_channels(transposed_conv3d(c.a6, L[5], c.pad1), c.e2);
    if (!keep) {
        c.a5 = {};
        c.a6 = {};
        c.e2 = {};
    }
    c.a7 = detail::conv_relu(c.c1, L[6]);
    c.pad2 = detail::pad_to(c.a7.s, c.e1.s);
    c.c2 = concat_channels(transposed_conv3d(c.a7, L[7], c.pad2), c.e1);
    if (!keep) {
        c.c1 = {};
        c.a7 = {};
        c.e1 = {};
    }
    c.a8 = detail::conv_relu(c.c2, L[8]);
    if (!keep) {
        c.c2 = {};
    }
    c.a9 = detail::conv_relu(c.a8, L[9]);
    Tensor4 y = conv3d(c.a9, L[10]);
    if (keep) {
        c.x = x;
    }
    return y;
}

/// Gradient blocks mirroring UNetParams plus Adam moments.
struct GradStore {
    std::vector<std::vector<double>> gw, gb;
    std::vector<std::vector<double>> mw, mb, vw, vb;
    long step = 0;

    explicit GradStore(const UNetParams& p)
    {
        for (const auto& L : p.layers) {
            gw.emplace_back(L.w.size(), 0.0);
            gb.emplace_back(L.b.size(), 0.0);
        }
        mw = vw = gw;
        mb = vb = gb;
    }

    void zero_grad()
    {
        for (auto& g : gw) {
            std::fill(g.begin(), g.end(), 0.0);
        }
        for (auto& g : gb) {
            std::fill(g.begin(), g.end(), 0.0);
        }
    }

    bool matches(const UNetParams& p) const
    {
        if (gw.size() != p.layers.size()) {
            return false;
        }
        for (std::size_t l = 0; l < gw.size(); ++l) {
            if (gw[l].size() != p.layers[l].w.size() || gb[l].size() != p.layers[l].b.size()) {
                return false;
            }
        }
        return true;
    }
};

/// Accumulates parameter gradients of <dy, unet_forward(x)> into g; returns dL/dx.
inline Tensor4 unet_backward(const UNetParams& p, const UNetCache& c, const Tensor4& dy, GradStore& g)
{
    detail::require_dims(g.matches(p), "unet_backward: gradient store does not match the parameters");
    const auto& L = p.layers;
    auto conv_back = [&](int l, const Tensor4& in, const Tensor4& d) {
        return conv3d_backward(in, L[l], d, g.gw[l], g.gb[l]);
    };

    Tensor4 d = conv_back(10, c.a9, dy);
    d = conv_back(9, c.a8, relu_backward(c.a9, std::move(d)));
    d = conv_back(8, c.c2, relu_backward(c.a8, std::move(d)));
    auto [d_u2, d_e1_skip] = split_channels(d, L[7].cout);
    d = transposed_conv3d_backward(c.a7, L[7], d_u2, g.gw[7]);
    d = conv_back(6, c.c1, relu_backward(c.a7, std::move(d)));
    auto [d_u1, d_e2_skip] = split_channels(d, L[5].cout);
    d = transposed_conv3d_backward(c.a6, L[5], d_u1, g.gw[5]);
    d = conv_back(4, c.a5, relu_backward(c.a6, std::move(d)));
    d = maxpool3d_backward(c.a4, c.pool2, d);
    d = conv_back(3, c.e2, relu_backward(c.a4, std::move(d)));
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.data[i] += d_e2_skip.data[i];
    }
    d = maxpool3d_backward(c.a3, c.pool1, d);
    d = conv_back(2, c.e1, relu_backward(c.a3, std::move(d)));
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.data[i] += d_e1_skip.data[i];
    }
    d = conv_back(1, c.a1, relu_backward(c.e1, std::move(d)));
    return conv_back(0, c.x, relu_backward(c.a1, std::move(d)));
}

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update using the gradients held in g.
inline void adam_step(UNetParams& p, GradStore& g, const AdamOptions& o = {})
{
    detail::require_dims(g.matches(p), "adam_step: gradient store does not match the parameters");
    ++g.step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(g.step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(g.step));
    auto update = [&](std::vector<double>& w, const std::vector<double>& gr, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gr[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gr[i] * gr[i];
            w[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
        }
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        update(p.layers[l].w, g.gw[l], g.mw[l], g.vw[l]);
        update(p.layers[l].b, g.gb[l], g.mb[l], g.vb[l]);
    }
}

} // namespace mdp
