#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdp/error.hpp"
#include "mdp/tensor.hpp"

namespace mdp {

enum class LayerKind : std::uint8_t {
    conv = 0,   ///< odd cubic kernel, stride 1, zero padding ksize/2
    upconv = 1, ///< transposed convolution, kernel 2, stride 2
};

/// Weights of one layer.
///   conv:   w[co][ci][t], t = kx + k*(ky + k*kz), offset q = (kx,ky,kz) - k/2
///   upconv: w[ci][co][t], t = tx + 2*(ty + 2*tz)
struct LayerParams {
    LayerKind kind = LayerKind::conv;
    int cout = 0;
    int cin = 0;
    int ksize = 3;
    std::vector<double> w;
    std::vector<double> b; ///< empty when the layer has no bias

    int taps() const { return ksize * ksize * ksize; }
    bool has_bias() const { return !b.empty(); }
    std::size_t parameter_count() const { return w.size() + b.size(); }

    static LayerParams make(LayerKind kind, int cin, int cout, int ksize, bool bias)
    {
        LayerParams p{kind, cout, cin, ksize, {}, {}};
        p.w.assign(static_cast<std::size_t>(cout) * cin * p.taps(), 0.0);
        if (bias) {
            p.b.assign(cout, 0.0);
        }
        return p;
    }
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;

inline constexpr int gemm_chunk = 128;

/// Column decomposition (sample, i, j, k) for global columns [g0, g0 + P).
struct ChunkIndex {
    std::vector<int> b, i, j, k;

    void fill(const Shape3& s, std::size_t g0, int P)
    {
        b.resize(P);
        i.resize(P);
        j.resize(P);
        k.resize(P);
        const std::size_t N = s.size();
        for (int p = 0; p < P; ++p) {
            const std::size_t g = g0 + p;
            const std::size_t loc = g % N;
            b[p] = static_cast<int>(g / N);
            i[p] = static_cast<int>(loc % s.n1);
            j[p] = static_cast<int>((loc / s.n1) % s.n2);
            k[p] = static_cast<int>(loc / (static_cast<std::size_t>(s.n1) * s.n2));
        }
    }
};

/// Chunks of whole x-lines; global column g belongs to line g / n1.
inline int lines_per_chunk(const Shape3& s)
{
    return std::max(1, gemm_chunk / s.n1);
}

/// col(ci*taps + t, p) = x[ci][b][ (i,j,k)_p - q_t ]  (zero outside), for the
/// columns of lines [l0, l1).
inline void im2col(const Tensor4& x, int ksize, std::size_t l0, std::size_t l1, RowMat& col)
{
    const int r = ksize / 2;
    const int taps = ksize * ksize * ksize;
    const Shape3& s = x.s;
    const std::size_t P = (l1 - l0) * s.n1;
    const std::size_t lines_per_sample = static_cast<std::size_t>(s.n2) * s.n3;
    for (int ci = 0; ci < x.c; ++ci) {
        for (int t = 0; t < taps; ++t) {
            const int qx = t % ksize - r;
            const int qy = (t / ksize) % ksize - r;
            const int qz = t / (ksize * ksize) - r;
            const int lo = std::max(0, qx);
            const int hi = std::min(s.n1, s.n1 + qx);
            double* dst = col.data() + static_cast<std::size_t>(ci * taps + t) * P;
            for (std::size_t l = l0; l < l1; ++l, dst += s.n1) {
                const int b = static_cast<int>(l / lines_per_sample);
                const int jk = static_cast<int>(l % lines_per_sample);
                const int sj = jk % s.n2 - qy;
                const int sk = jk / s.n2 - qz;
                if (sj < 0 || sj >= s.n2 || sk < 0 || sk >= s.n3) {
                    std::fill(dst, dst + s.n1, 0.0);
                    continue;
                }
                const double* src = x.slice(ci, b) + s.n1 * (sj + s.n2 * sk);
                std::fill(dst, dst + lo, 0.0);
                std::copy(src + lo - qx, src + hi - qx, dst + lo);
                std::fill(dst + hi, dst + s.n1, 0.0);
            }
        }
    }
}

inline void col2im_add(const RowMat& dcol, int ksize, std::size_t l0, std::size_t l1, Tensor4& dx)
{
    const int r = ksize / 2;
    const int taps = ksize * ksize * ksize;
    const Shape3& s = dx.s;
    const std::size_t P = (l1 - l0) * s.n1;
    const std::size_t lines_per_sample = static_cast<std::size_t>(s.n2) * s.n3;
    for (int ci = 0; ci < dx.c; ++ci) {
        for (int t = 0; t < taps; ++t) {
            const int qx = t % ksize - r;
            const int qy = (t / ksize) % ksize - r;
            const int qz = t / (ksize * ksize) - r;
            const int lo = std::max(0, qx);
            const int hi = std::min(s.n1, s.n1 + qx);
            const double* src = dcol.data() + static_cast<std::size_t>(ci * taps + t) * P;
            for (std::size_t l = l0; l < l1; ++l, src += s.n1) {
                const int b = static_cast<int>(l / lines_per_sample);
                const int jk = static_cast<int>(l % lines_per_sample);
                const int sj = jk % s.n2 - qy;
                const int sk = jk / s.n2 - qz;
                if (sj < 0 || sj >= s.n2 || sk < 0 || sk >= s.n3) {
                    continue;
                }
                double* dst = dx.slice(ci, b) + s.n1 * (sj + s.n2 * sk);
                for (int i = lo; i < hi; ++i) {
                    dst[i - qx] += src[i];
                }
            }
        }
    }
}

} // namespace detail

/// Same-size 3D convolution Y(p) = sum_q k(q) X(p - q) + bias, zero padded.
inline Tensor4 conv3d(const Tensor4& x, const LayerParams& L)
{
    detail::require_dims(L.kind == LayerKind::conv && L.ksize % 2 == 1, "conv3d: expected an odd-size conv layer");
    detail::require_dims(x.c == L.cin, "conv3d: input has " + std::to_string(x.c) + " channels, layer expects " +
                                           std::to_string(L.cin));
    Tensor4 y(L.cout, x.s, x.batch);
    const std::size_t G = x.columns();
    const int K = L.cin * L.taps();
    const detail::ConstStridedMap W(L.w.data(), L.cout, K, Eigen::OuterStride<>(K));
    if (L.ksize == 1) {
        const detail::ConstStridedMap X(x.data.data(), L.cin, static_cast<Eigen::Index>(G),
                                        Eigen::OuterStride<>(static_cast<Eigen::Index>(G)));
        detail::StridedMap Y(y.data.data(), L.cout, static_cast<Eigen::Index>(G),
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(G)));
        Y.noalias() = W * X;
    }
    else {
        detail::RowMat col;
        const std::size_t lines = G / x.s.n1;
        const std::size_t step = detail::lines_per_chunk(x.s);
        for (std::size_t l0 = 0; l0 < lines; l0 += step) {
            const std::size_t l1 = std::min(lines, l0 + step);
            const std::size_t g0 = l0 * x.s.n1;
            const auto P = static_cast<Eigen::Index>((l1 - l0) * x.s.n1);
            col.resize(K, P);
            detail::im2col(x, L.ksize, l0, l1, col);
            detail::StridedMap Y(y.data.data() + g0, L.cout, P, Eigen::OuterStride<>(static_cast<Eigen::Index>(G)));
            Y.noalias() = W * col;
        }
    }
    if (L.has_bias()) {
        for (int co = 0; co < L.cout; ++co) {
            double* row = y.data.data() + co * G;
            for (std::size_t g = 0; g < G; ++g) {
                row[g] += L.b[co];
            }
        }
    }
    return y;
}

/// Adjoint of conv3d. Accumulates into gw/gb (same layout as L.w/L.b); returns dL/dx.
inline Tensor4 conv3d_backward(const Tensor4& x, const LayerParams& L, const Tensor4& dy, std::vector<double>& gw,
                               std::vector<double>& gb)
{
    detail::require_dims(dy.c == L.cout && dy.s == x.s && dy.batch == x.batch, "conv3d_backward: shape mismatch");
    Tensor4 dx(x.c, x.s, x.batch);
    const std::size_t G = x.columns();
    const int K = L.cin * L.taps();
    const detail::ConstStridedMap W(L.w.data(), L.cout, K, Eigen::OuterStride<>(K));
    detail::StridedMap GW(gw.data(), L.cout, K, Eigen::OuterStride<>(K));
    if (L.ksize == 1) {
        const auto Gs = static_cast<Eigen::Index>(G);
        const detail::ConstStridedMap X(x.data.data(), L.cin, Gs, Eigen::OuterStride<>(Gs));
        const detail::ConstStridedMap DY(dy.data.data(), L.cout, Gs, Eigen::OuterStride<>(Gs));
        detail::StridedMap DX(dx.data.data(), L.cin, Gs, Eigen::OuterStride<>(Gs));
        GW.noalias() += DY * X.transpose();
        DX.noalias() = W.transpose() * DY;
    }
    else {
        detail::RowMat col, dcol;
        const std::size_t lines = G / x.s.n1;
        const std::size_t step = detail::lines_per_chunk(x.s);
        for (std::size_t l0 = 0; l0 < lines; l0 += step) {
            const std::size_t l1 = std::min(lines, l0 + step);
            const std::size_t g0 = l0 * x.s.n1;
            const auto P = static_cast<Eigen::Index>((l1 - l0) * x.s.n1);
            col.resize(K, P);
            detail::im2col(x, L.ksize, l0, l1, col);
            const detail::ConstStridedMap DY(dy.data.data() + g0, L.cout, P,
                                             Eigen::OuterStride<>(static_cast<Eigen::Index>(G)));
            GW.noalias() += DY * col.transpose();
            dcol.noalias() = W.transpose() * DY;
            detail::col2im_add(dcol, L.ksize, l0, l1, dx);
        }
    }
    if (L.has_bias()) {
        for (int co = 0; co < L.cout; ++co) {
            const double* row = dy.data.data() + co * G;
            double s = 0.0;
            for (std::size_t g = 0; g < G; ++g) {
                s += row[g];
            }
            gb[co] += s;
        }
    }
    return dx;
}

/// Output spatial size of a stride-2, kernel-2 transposed convolution.
inline Shape3 upconv_shape(const Shape3& in, const Shape3& output_padding)
{
    return {2 * in.n1 + output_padding.n1, 2 * in.n2 + output_padding.n2, 2 * in.n3 + output_padding.n3};
}

/// out[co][2i+tx, 2j+ty, 2k+tz] = sum_ci w[ci][co][t] in[ci][i,j,k]; padding slabs stay zero.
inline Tensor4 transposed_conv3d(const Tensor4& x, const LayerParams& L, const Shape3& output_padding)
{
    detail::require_dims(L.kind == LayerKind::upconv && L.ksize == 2, "transposed_conv3d: expected an upconv layer");
    detail::require_dims(x.c == L.cin, "transposed_conv3d: channel mismatch");
    const Shape3 os = upconv_shape(x.s, output_padding);
    Tensor4 y(L.cout, os, x.batch);
    const std::size_t G = x.columns();
    const std::size_t No = os.size();
    const int M = L.cout * 8;
    const detail::ConstStridedMap W(L.w.data(), L.cin, M, Eigen::OuterStride<>(M));
    detail::RowMat y8;
    detail::ChunkIndex ix;
    for (std::size_t g0 = 0; g0 < G; g0 += detail::gemm_chunk) {
        const int P = static_cast<int>(std::min<std::size_t>(detail::gemm_chunk, G - g0));
        const detail::ConstStridedMap X(x.data.data() + g0, L.cin, P, Eigen::OuterStride<>(static_cast<Eigen::Index>(G)));
        y8.noalias() = W.transpose() * X;
        ix.fill(x.s, g0, P);
        for (int co = 0; co < L.cout; ++co) {
            for (int t = 0; t < 8; ++t) {
                const int tx = t & 1, ty = (t >> 1) & 1, tz = t >> 2;
                const double* row = y8.data() + static_cast<std::size_t>(co * 8 + t) * P;
                for (int p = 0; p < P; ++p) {
                    const std::size_t o =
                        (2 * ix.i[p] + tx) + os.n1 * ((2 * ix.j[p] + ty) + static_cast<std::size_t>(os.n2) * (2 * ix.k[p] + tz));
                    y.data[(static_cast<std::size_t>(co) * x.batch + ix.b[p]) * No + o] = row[p];
                }
            }
        }
    }
    return y;
}

inline Tensor4 transposed_conv3d_backward(const Tensor4& x, const LayerParams& L, const Tensor4& dy,
                                          std::vector<double>& gw)
{
    detail::require_dims(dy.c == L.cout && dy.batch == x.batch, "transposed_conv3d_backward: shape mismatch");
    Tensor4 dx(x.c, x.s, x.batch);
    const std::size_t G = x.columns();
    const std::size_t No = dy.spatial();
    const Shape3& os = dy.s;
    const int M = L.cout * 8;
    const detail::ConstStridedMap W(L.w.data(), L.cin, M, Eigen::OuterStride<>(M));
    detail::StridedMap GW(gw.data(), L.cin, M, Eigen::OuterStride<>(M));
    detail::RowMat dy8;
    detail::ChunkIndex ix;
    for (std::size_t g0 = 0; g0 < G; g0 += detail::gemm_chunk) {
        const int P = static_cast<int>(std::min<std::size_t>(detail::gemm_chunk, G - g0));
        dy8.resize(M, P);
        ix.fill(x.s, g0, P);
        for (int co = 0; co < L.cout; ++co) {
            for (int t = 0; t < 8; ++t) {
                const int tx = t & 1, ty = (t >> 1) & 1, tz = t >> 2;
                double* row = dy8.data() + static_cast<std::size_t>(co * 8 + t) * P;
                for (int p = 0; p < P; ++p) {
                    const std::size_t o =
                        (2 * ix.i[p] + tx) + os.n1 * ((2 * ix.j[p] + ty) + static_cast<std::size_t>(os.n2) * (2 * ix.k[p] + tz));
                    row[p] = dy.data[(static_cast<std::size_t>(co) * x.batch + ix.b[p]) * No + o];
                }
            }
        }
        const auto Gs = static_cast<Eigen::Index>(G);
        const detail::ConstStridedMap X(x.data.data() + g0, L.cin, P, Eigen::OuterStride<>(Gs));
        detail::StridedMap DX(dx.data.data() + g0, L.cin, P, Eigen::OuterStride<>(Gs));
        GW.noalias() += X * dy8.transpose();
        DX.noalias() = W * dy8;
    }
    return dx;
}

/// 2x2x2 max pooling with stride 2 (floor for odd sizes). argmax holds the
/// flat input position of each output; ties go to the lowest flat index.
inline Tensor4 maxpool3d(const Tensor4& x, std::vector<std::size_t>& argmax)
{
    const Shape3 os{x.s.n1 / 2, x.s.n2 / 2, x.s.n3 / 2};
    detail::require_dims(os.size() > 0, "maxpool3d: input smaller than the window");
    Tensor4 y(x.c, os, x.batch);
    argmax.assign(y.size(), 0);
    const std::size_t Ni = x.spatial();
    const std::size_t No = os.size();
    for (std::size_t cb = 0; cb < static_cast<std::size_t>(x.c) * x.batch; ++cb) {
        const double* in = x.data.data() + cb * Ni;
        for (int k = 0; k < os.n3; ++k) {
            for (int j = 0; j < os.n2; ++j) {
                for (int i = 0; i < os.n1; ++i) {
                    std::size_t best = 0;
                    double bv = 0.0;
                    bool first = true;
                    for (int dz = 0; dz < 2; ++dz) {
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t f =
                                    (2 * i + dx) + x.s.n1 * ((2 * j + dy) + static_cast<std::size_t>(x.s.n2) * (2 * k + dz));
                                if (first || in[f] > bv) {
                                    bv = in[f];
                                    best = f;
                                    first = false;
                                }
                            }
                        }
                    }
                    const std::size_t o = cb * No + i + os.n1 * (j + static_cast<std::size_t>(os.n2) * k);
                    y.data[o] = bv;
                    argmax[o] = cb * Ni + best;
                }
            }
        }
    }
    return y;
}

inline Tensor4 maxpool3d_backward(const Tensor4& x_shape, const std::vector<std::size_t>& argmax, const Tensor4& dy)
{
    Tensor4 dx(x_shape.c, x_shape.s, x_shape.batch);
    for (std::size_t o = 0; o < dy.size(); ++o) {
        dx.data[argmax[o]] += dy.data[o];
    }
    return dx;
}

inline void relu_inplace(Tensor4& x)
{
    for (double& v : x.data) {
        v = v > 0.0 ? v : 0.0;
    }
}

/// dy masked by y > 0, where y is the ReLU output.
inline Tensor4 relu_backward(const Tensor4& y, Tensor4 dy)
{
    for (std::size_t i = 0; i < dy.size(); ++i) {
        if (!(y.data[i] > 0.0)) {
            dy.data[i] = 0.0;
        }
    }
    return dy;
}

/// Channel stacking [a | b].
inline Tensor4 concat_channels(const Tensor4& a, const Tensor4& b)
{
    detail::require_dims(a.s == b.s && a.batch == b.batch,
                         "concat_channels: spatial mismatch " + a.s.str() + " vs " + b.s.str());
    Tensor4 out(a.c + b.c, a.s, a.batch);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

/// Adjoint of concat_channels: the first `ca` channels and the rest.
inline std::pair<Tensor4, Tensor4> split_channels(const Tensor4& x, int ca)
{
    detail::require_dims(ca >= 0 && ca <= x.c, "split_channels: bad split");
    Tensor4 a(ca, x.s, x.batch);
    Tensor4 b(x.c - ca, x.s, x.batch);
    std::copy(x.data.begin(), x.data.begin() + static_cast<std::ptrdiff_t>(a.size()), a.data.begin());
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(a.size()), x.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

} // namespace mdp
