#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "mdp/checkpoint.hpp"
#include "mdp/layers.hpp"
#include "mdp/unet.hpp"

using namespace mdp;

namespace {

Tensor4 random_tensor(int c, Shape3 s, int batch, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor4 t(c, s, batch);
    for (double& v : t.data) {
        v = u(rng);
    }
    return t;
}

void fill_random(std::vector<double>& v, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& x : v) {
        x = u(rng);
    }
}

double inner(const Tensor4& a, const Tensor4& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a.data[i] * b.data[i];
    }
    return s;
}

/// max |analytic - central difference| / max |central difference| over the given indices.
double fd_error(std::vector<double>& param, const std::vector<double>& analytic, const std::function<double()>& loss,
                const std::vector<std::size_t>& idx, double h = 1e-5)
{
    double err = 0.0, scale = 0.0;
    for (std::size_t i : idx) {
        const double keep = param[i];
        param[i] = keep + h;
        const double lp = loss();
        param[i] = keep - h;
        const double lm = loss();
        param[i] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        err = std::max(err, std::abs(fd - analytic[i]));
        scale = std::max(scale, std::abs(fd));
    }
    return err / scale;
}

std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = i;
    }
    return v;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed)
{
    if (n <= count) {
        return all_indices(n);
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> u(0, n - 1);
    std::vector<std::size_t> v(count);
    for (auto& i : v) {
        i = u(rng);
    }
    return v;
}

/// Direct-loop oracle for the same-size convolution.
Tensor4 conv_oracle(const Tensor4& x, const LayerParams& L)
{
    Tensor4 y(L.cout, x.s, x.batch);
    const int r = L.ksize / 2;
    for (int b = 0; b < x.batch; ++b) {
        for (int co = 0; co < L.cout; ++co) {
            for (int k = 0; k < x.s.n3; ++k) {
                for (int j = 0; j < x.s.n2; ++j) {
                    for (int i = 0; i < x.s.n1; ++i) {
                        double acc = L.has_bias() ? L.b[co] : 0.0;
                        for (int ci = 0; ci < L.cin; ++ci) {
                            for (int kz = 0; kz < L.ksize; ++kz) {
                                for (int ky = 0; ky < L.ksize; ++ky) {
                                    for (int kx = 0; kx < L.ksize; ++kx) {
                                        const int si = i - (kx - r), sj = j - (ky - r), sk = k - (kz - r);
                                        if (si < 0 || sj < 0 || sk < 0 || si >= x.s.n1 || sj >= x.s.n2 ||
                                            sk >= x.s.n3) {
                                            continue;
                                        }
                                        const int t = kx + L.ksize * (ky + L.ksize * kz);
                                        acc += L.w[(co * L.cin + ci) * L.taps() + t] * x.at(ci, si, sj, sk, b);
                                    }
                                }
                            }
                        }
                        y.at(co, i, j, k, b) = acc;
                    }
                }
            }
        }
    }
    return y;
}

} // namespace

// ----------------------------------------------------------------- tensors

TEST(Tensor, GridVectorRoundTripIsIdentity)
{
    std::vector<double> v(5 * 5 * 5);
    fill_random(v, 3);
    const Tensor4 t = from_grid_vector(v, 5);
    EXPECT_EQ(t.c, 1);
    EXPECT_EQ(t.at(0, 1, 2, 3), v[1 + 5 * (2 + 5 * 3)]);
    EXPECT_EQ(to_grid_vector(t), v);
    EXPECT_THROW(from_grid_vector(v, 4), DimensionError);
}

TEST(Tensor, StackRejectsHeterogeneousShapes)
{
    EXPECT_THROW(stack_batch({Tensor4(2, 5, 5, 5), Tensor4(2, 6, 6, 6)}), DimensionError);
    const Tensor4 a = random_tensor(2, {4, 5, 6}, 1, 1), b = random_tensor(2, {4, 5, 6}, 1, 2);
    const Tensor4 s = stack_batch({a, b});
    EXPECT_EQ(unstack_sample(s, 0).data, a.data);
    EXPECT_EQ(unstack_sample(s, 1).data, b.data);
}

// -------------------------------------------------------------- convolution

TEST(Conv3d, UnitOneByOneKernelIsIdentity)
{
    LayerParams L = LayerParams::make(LayerKind::conv, 1, 1, 1, true);
    L.w[0] = 1.0;
    const Tensor4 x = random_tensor(1, {5, 5, 5}, 1, 7);
    EXPECT_EQ(conv3d(x, L).data, x.data);
}

TEST(Conv3d, AveragingKernelKeepsConstantInterior)
{
    LayerParams L = LayerParams::make(LayerKind::conv, 1, 1, 3, false);
    std::fill(L.w.begin(), L.w.end(), 1.0 / 27.0);
    Tensor4 x(1, 6, 6, 6);
    std::fill(x.data.begin(), x.data.end(), 2.5);
    const Tensor4 y = conv3d(x, L);
    for (int k = 1; k < 5; ++k) {
        for (int j = 1; j < 5; ++j) {
            for (int i = 1; i < 5; ++i) {
                EXPECT_NEAR(y.at(0, i, j, k), 2.5, 1e-14);
            }
        }
    }
    EXPECT_NEAR(y.at(0, 0, 0, 0), 2.5 * 8.0 / 27.0, 1e-14);
}

TEST(Conv3d, MatchesDirectLoopOracle)
{
    LayerParams L = LayerParams::make(LayerKind::conv, 2, 3, 3, true);
    fill_random(L.w, 11);
    fill_random(L.b, 12);
    // more than one GEMM chunk, non-cubic, batched
    const Tensor4 x = random_tensor(2, {7, 6, 5}, 2, 13);
    const Tensor4 y = conv3d(x, L);
    const Tensor4 ref = conv_oracle(x, L);
    ASSERT_TRUE(y.same_shape(ref));
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_NEAR(y.data[i], ref.data[i], 1e-13);
    }
}

TEST(Conv3d, DeltaInputReproducesKernelAsConvolution)
{
    LayerParams L = LayerParams::make(LayerKind::conv, 1, 1, 3, false);
    fill_random(L.w, 5);
    Tensor4 x(1, 5, 5, 5);
    x.at(0, 2, 2, 2) = 1.0;
    const Tensor4 y = conv3d(x, L);
    // Y(p) = k(p - p0): tap (kx,ky,kz) lands at (2 + kx - 1, ...)
    for (int kz = 0; kz < 3; ++kz) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                EXPECT_EQ(y.at(0, 1 + kx, 1 + ky, 1 + kz), L.w[kx + 3 * (ky + 3 * kz)]);
            }
        }
    }
}

TEST(Conv3d, RejectsChannelMismatch)
{
    const LayerParams L = LayerParams::make(LayerKind::conv, 3, 2, 3, false);
    EXPECT_THROW(conv3d(Tensor4(2, 5, 5, 5), L), DimensionError);
}

TEST(Conv3d, GradientsMatchFiniteDifferences)
{
    for (int ksize : {3, 1}) {
        LayerParams L = LayerParams::make(LayerKind::conv, 2, 3, ksize, true);
        fill_random(L.w, 21);
        fill_random(L.b, 22);
        Tensor4 x = random_tensor(2, {5, 5, 5}, 1, 23);
        const Tensor4 G = random_tensor(3, {5, 5, 5}, 1, 24);
        auto loss = [&] { return inner(G, conv3d(x, L)); };

        std::vector<double> gw(L.w.size(), 0.0), gb(L.b.size(), 0.0);
        const Tensor4 dx = conv3d_backward(x, L, G, gw, gb);
        EXPECT_LT(fd_error(L.w, gw, loss, all_indices(L.w.size())), 1e-6) << "k=" << ksize;
        EXPECT_LT(fd_error(L.b, gb, loss, all_indices(L.b.size())), 1e-6) << "k=" << ksize;
        EXPECT_LT(fd_error(x.data, dx.data, loss, all_indices(x.size())), 1e-6) << "k=" << ksize;
    }
}

// ---------------------------------------------------- transposed convolution

TEST(TransposedConv3d, ShapeContract)
{
    const LayerParams L = LayerParams::make(LayerKind::upconv, 4, 2, 2, false);
    EXPECT_EQ(transposed_conv3d(Tensor4(4, 5, 5, 5), L, {0, 0, 0}).s, (Shape3{10, 10, 10}));
    EXPECT_EQ(transposed_conv3d(Tensor4(4, 10, 10, 10), L, {1, 1, 1}).s, (Shape3{21, 21, 21}));
    EXPECT_EQ(upconv_shape({3, 3, 3}, {1, 0, 1}), (Shape3{7, 6, 7}));
    EXPECT_THROW(transposed_conv3d(Tensor4(3, 5, 5, 5), L, {0, 0, 0}), DimensionError);
}

TEST(TransposedConv3d, MatchesScatterOracle)
{
    LayerParams L = LayerParams::make(LayerKind::upconv, 3, 2, 2, false);
    fill_random(L.w, 31);
    const Tensor4 x = random_tensor(3, {3, 4, 5}, 2, 32);
    const Tensor4 y = transposed_conv3d(x, L, {1, 0, 1});
    Tensor4 ref(2, {7, 8, 11}, 2);
    for (int b = 0; b < 2; ++b) {
        for (int ci = 0; ci < 3; ++ci) {
            for (int co = 0; co < 2; ++co) {
                for (int k = 0; k < 5; ++k) {
                    for (int j = 0; j < 4; ++j) {
                        for (int i = 0; i < 3; ++i) {
                            for (int t = 0; t < 8; ++t) {
                                ref.at(co, 2 * i + (t & 1), 2 * j + ((t >> 1) & 1), 2 * k + (t >> 2), b) +=
                                    L.w[(ci * 2 + co) * 8 + t] * x.at(ci, i, j, k, b);
                            }
                        }
                    }
                }
            }
        }
    }
    ASSERT_TRUE(y.same_shape(ref));
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_NEAR(y.data[i], ref.data[i], 1e-14);
    }
}

TEST(TransposedConv3d, GradientsMatchFiniteDifferences)
{
    LayerParams L = LayerParams::make(LayerKind::upconv, 2, 3, 2, false);
    fill_random(L.w, 41);
    Tensor4 x = random_tensor(2, {5, 5, 5}, 1, 42);
    const Tensor4 G = random_tensor(3, {11, 11, 11}, 1, 43);
    auto loss = [&] { return inner(G, transposed_conv3d(x, L, {1, 1, 1})); };
    std::vector<double> gw(L.w.size(), 0.0);
    const Tensor4 dx = transposed_conv3d_backward(x, L, G, gw);
    EXPECT_LT(fd_error(L.w, gw, loss, all_indices(L.w.size())), 1e-6);
    EXPECT_LT(fd_error(x.data, dx.data, loss, all_indices(x.size())), 1e-6);
}

// -------------------------------------------------------------- max pooling

TEST(MaxPool3d, OddSizesUseFloor)
{
    std::vector<std::size_t> am;
    EXPECT_EQ(maxpool3d(Tensor4(1, 21, 21, 21), am).s, (Shape3{10, 10, 10}));
    EXPECT_EQ(maxpool3d(Tensor4(1, 10, 10, 10), am).s, (Shape3{5, 5, 5}));
}

TEST(MaxPool3d, ConstantInputRoutesGradientToFirstElement)
{
    Tensor4 x(1, 4, 4, 4);
    std::fill(x.data.begin(), x.data.end(), 3.0);
    std::vector<std::size_t> am;
    const Tensor4 y = maxpool3d(x, am);
    for (double v : y.data) {
        EXPECT_EQ(v, 3.0);
    }
    Tensor4 dy(1, 2, 2, 2);
    std::fill(dy.data.begin(), dy.data.end(), 1.0);
    const Tensor4 dx = maxpool3d_backward(x, am, dy);
    for (int k = 0; k < 4; ++k) {
        for (int j = 0; j < 4; ++j) {
            for (int i = 0; i < 4; ++i) {
                const bool first = i % 2 == 0 && j % 2 == 0 && k % 2 == 0;
                EXPECT_EQ(dx.at(0, i, j, k), first ? 1.0 : 0.0);
            }
        }
    }
}

TEST(MaxPool3d, IncreasingInputSelectsLastElement)
{
    Tensor4 x(2, 5, 5, 5);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x.data[i] = static_cast<double>(i);
    }
    std::vector<std::size_t> am;
    const Tensor4 y = maxpool3d(x, am);
    for (int c = 0; c < 2; ++c) {
        for (int k = 0; k < 2; ++k) {
            for (int j = 0; j < 2; ++j) {
                for (int i = 0; i < 2; ++i) {
                    EXPECT_EQ(y.at(c, i, j, k), x.at(c, 2 * i + 1, 2 * j + 1, 2 * k + 1));
                }
            }
        }
    }
}

TEST(MaxPool3d, GradientMatchesFiniteDifferences)
{
    Tensor4 x = random_tensor(2, {5, 6, 5}, 2, 51);
    std::vector<std::size_t> am;
    const Tensor4 G = random_tensor(2, {2, 3, 2}, 2, 52);
    auto loss = [&] {
        std::vector<std::size_t> a;
        return inner(G, maxpool3d(x, a));
    };
    maxpool3d(x, am);
    const Tensor4 dx = maxpool3d_backward(x, am, G);
    EXPECT_LT(fd_error(x.data, dx.data, loss, all_indices(x.size())), 1e-6);
}

// --------------------------------------------------------- concat and relu

TEST(Concat, SkipShapesAndSplitRoundTrip)
{
    const Tensor4 a = random_tensor(64, {10, 10, 10}, 1, 61);
    const Tensor4 b = random_tensor(64, {10, 10, 10}, 1, 62);
    const Tensor4 c = concat_channels(a, b);
    EXPECT_EQ(c.c, 128);
    EXPECT_EQ(c.s, (Shape3{10, 10, 10}));
    EXPECT_EQ(c.at(0, 1, 2, 3), a.at(0, 1, 2, 3));
    EXPECT_EQ(c.at(64, 1, 2, 3), b.at(0, 1, 2, 3));
    const auto [a2, b2] = split_channels(c, 64);
    EXPECT_EQ(a2.data, a.data);
    EXPECT_EQ(b2.data, b.data);
    EXPECT_THROW(concat_channels(a, Tensor4(1, 9, 10, 10)), DimensionError);
}

TEST(Concat, BatchedLayoutKeepsSamplesApart)
{
    const Tensor4 a = random_tensor(2, {3, 3, 3}, 2, 63);
    const Tensor4 b = random_tensor(1, {3, 3, 3}, 2, 64);
    const Tensor4 c = concat_channels(a, b);
    EXPECT_EQ(c.at(2, 1, 1, 1, 1), b.at(0, 1, 1, 1, 1));
    EXPECT_EQ(c.at(1, 0, 2, 1, 1), a.at(1, 0, 2, 1, 1));
}

TEST(Relu, BackwardMasksNonPositiveOutputs)
{
    Tensor4 x(1, 2, 1, 1);
    x.data = {-1.0, 2.0};
    relu_inplace(x);
    EXPECT_EQ(x.data, (std::vector<double>{0.0, 2.0}));
    Tensor4 dy(1, 2, 1, 1);
    dy.data = {5.0, 7.0};
    EXPECT_EQ(relu_backward(x, dy).data, (std::vector<double>{0.0, 7.0}));
}

// ------------------------------------------------------------------- U-Net

TEST(UNet, ParameterCounts)
{
    const UNetParams p = unet_architecture();
    ASSERT_EQ(p.layers.size(), 11u);
    const auto& L = p.layers;
    EXPECT_EQ(L[0].parameter_count() + L[1].parameter_count(), 14736u);
    EXPECT_EQ(L[2].parameter_count(), 55296u);
    EXPECT_EQ(L[3].parameter_count(), 221184u);
    EXPECT_EQ(L[4].parameter_count(), 442368u);
    EXPECT_EQ(L[5].parameter_count() + L[6].parameter_count(), 286784u);
    EXPECT_EQ(L[7].parameter_count() + L[8].parameter_count(), 71712u);
    EXPECT_EQ(L[9].parameter_count() + L[10].parameter_count(), 545u);
    EXPECT_EQ(p.parameter_count(), 1092625u);
    EXPECT_NEAR(static_cast<double>(p.parameter_count()), 1.09e6, 0.05 * 1.09e6);
}

TEST(UNet, OutputMatchesInputResolution)
{
    const UNetParams p = init_unet(1);
    for (int n : {9, 13, 21, 25, 41}) {
        const Tensor4 y = unet_forward(p, random_tensor(2, {n, n, n}, 1, n));
        EXPECT_EQ(y.c, 1);
        EXPECT_EQ(y.s, (Shape3{n, n, n})) << "n=" << n;
    }
    EXPECT_EQ(unet_forward(p, Tensor4(2, 8, 11, 9)).s, (Shape3{8, 11, 9}));
}

TEST(UNet, RejectsSmallOrWrongInputs)
{
    const UNetParams p = init_unet(1);
    EXPECT_THROW(unet_forward(p, Tensor4(2, 7, 7, 7)), DimensionError);
    EXPECT_THROW(unet_forward(p, Tensor4(1, 9, 9, 9)), DimensionError);
}

TEST(UNet, ZeroInputWithZeroBiasesGivesZero)
{
    const UNetParams p = init_unet(2);
    for (const auto& L : p.layers) {
        for (double b : L.b) {
            ASSERT_EQ(b, 0.0);
        }
    }
    for (double v : unet_forward(p, Tensor4(2, 9, 9, 9)).data) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(UNet, DeterministicAndSeeded)
{
    const Tensor4 x = random_tensor(2, {9, 9, 9}, 1, 3);
    EXPECT_EQ(unet_forward(init_unet(5), x).data, unet_forward(init_unet(5), x).data);
    EXPECT_FALSE(init_unet(5) == init_unet(6));
}

TEST(UNet, BatchedForwardMatchesPerSample)
{
    const UNetParams p = init_unet(4);
    const Tensor4 a = random_tensor(2, {9, 10, 9}, 1, 71);
    const Tensor4 b = random_tensor(2, {9, 10, 9}, 1, 72);
    const Tensor4 y = unet_forward(p, stack_batch({a, b}));
    const Tensor4 ya = unet_forward(p, a), yb = unet_forward(p, b);
    for (std::size_t i = 0; i < ya.size(); ++i) {
        EXPECT_NEAR(unstack_sample(y, 0).data[i], ya.data[i], 1e-12);
        EXPECT_NEAR(unstack_sample(y, 1).data[i], yb.data[i], 1e-12);
    }
}

namespace {

/// ReLU masks and pooling choices of one forward pass.
std::vector<std::size_t> activation_pattern(const UNetParams& p, const Tensor4& x)
{
    UNetCache c;
    unet_forward(p, x, &c);
    std::vector<std::size_t> pat;
    for (const Tensor4* t : {&c.a1, &c.e1, &c.a3, &c.a4, &c.a6, &c.a7, &c.a8, &c.a9}) {
        for (double v : t->data) {
            pat.push_back(v > 0.0);
        }
    }
    pat.insert(pat.end(), c.pool1.begin(), c.pool1.end());
    pat.insert(pat.end(), c.pool2.begin(), c.pool2.end());
    return pat;
}

} // namespace

TEST(UNet, GradientsMatchFiniteDifferences)
{
    UNetParams p = init_unet(8);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        fill_random(p.layers[l].b, 100 + l, 0.1);
    }
    Tensor4 x = random_tensor(2, {9, 8, 9}, 2, 81);
    const Tensor4 G = random_tensor(1, {9, 8, 9}, 2, 82);
    const double h = 1e-5;

    UNetCache cache;
    unet_forward(p, x, &cache);
    GradStore g(p);
    const Tensor4 dx = unet_backward(p, cache, G, g);
    const auto pattern = activation_pattern(p, x);

    // The network is piecewise linear; a difference quotient is only an
    // oracle when both probes stay on the current linear piece.
    int checked = 0, skipped = 0;
    auto check = [&](std::vector<double>& param, const std::vector<double>& analytic, std::size_t i,
                     const std::string& what) {
        const double keep = param[i];
        param[i] = keep + h;
        const bool same_p = activation_pattern(p, x) == pattern;
        const double lp = inner(G, unet_forward(p, x));
        param[i] = keep - h;
        const bool same_m = activation_pattern(p, x) == pattern;
        const double lm = inner(G, unet_forward(p, x));
        param[i] = keep;
        if (!same_p || !same_m) {
            ++skipped;
            return;
        }
        ++checked;
        const double fd = (lp - lm) / (2.0 * h);
        EXPECT_LT(std::abs(fd - analytic[i]), 1e-4 * std::max(std::abs(fd), 1e-3)) << what << " index " << i;
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        for (std::size_t i : sample_indices(p.layers[l].w.size(), 8, l)) {
            check(p.layers[l].w, g.gw[l], i, "layer " + std::to_string(l) + " weight");
        }
        for (std::size_t i : sample_indices(p.layers[l].b.size(), 3, l)) {
            check(p.layers[l].b, g.gb[l], i, "layer " + std::to_string(l) + " bias");
        }
    }
    for (std::size_t i : sample_indices(x.size(), 20, 99)) {
        check(x.data, dx.data, i, "input");
    }
    EXPECT_GE(checked, 3 * skipped);
    EXPECT_GE(checked, 60);
}

// -------------------------------------------------------------------- Adam

namespace {

UNetParams scalar_params(double w)
{
    UNetParams p;
    p.layers.push_back(LayerParams{LayerKind::conv, 1, 1, 1, {w}, {}});
    return p;
}

} // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged)
{
    UNetParams p = init_unet(3);
    const UNetParams before = p;
    GradStore g(p);
    adam_step(p, g);
    EXPECT_TRUE(p == before);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    for (double grad : {3.0, -0.02}) {
        UNetParams p = scalar_params(0.5);
        GradStore g(p);
        g.gw[0][0] = grad;
        adam_step(p, g, {1e-3, 0.9, 0.999, 1e-8});
        EXPECT_NEAR(p.layers[0].w[0] - 0.5, -1e-3 * std::copysign(1.0, grad), 1e-9);
    }
}

TEST(Adam, QuadraticMatchesScalarSimulation)
{
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    UNetParams p = scalar_params(1.0);
    GradStore g(p);
    double w = 1.0, m = 0.0, v = 0.0;
    std::vector<double> f;
    for (int t = 1; t <= 10; ++t) {
        const double gr = 2.0 * w;
        m = b1 * m + (1 - b1) * gr;
        v = b2 * v + (1 - b2) * gr * gr;
        w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

        g.gw[0][0] = 2.0 * p.layers[0].w[0];
        adam_step(p, g, {lr, b1, b2, eps});
        EXPECT_NEAR(p.layers[0].w[0], w, 1e-15);
        f.push_back(w * w);
    }
    for (std::size_t i = 2; i < f.size(); ++i) {
        EXPECT_LT(f[i], f[i - 1]);
    }
}

// -------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripIsExactAtStoredPrecision)
{
    const UNetParams p = init_unet(9);
    std::stringstream ss;
    write_checkpoint(ss, p);
    const std::string bytes = ss.str();
    const UNetParams q = read_checkpoint(ss);
    EXPECT_TRUE(q == round_to_checkpoint(p));
    EXPECT_EQ(q.parameter_count(), 1092625u);
    std::stringstream again;
    write_checkpoint(again, q);
    EXPECT_EQ(again.str(), bytes);
    EXPECT_EQ(bytes.size(), 4u + 8u + 11u * 17u + 4u * 1092625u);
}

TEST(Checkpoint, FileRoundTrip)
{
    const auto path = std::filesystem::temp_directory_path() / "mdp_test_ckpt.mdu";
    const UNetParams p = round_to_checkpoint(init_unet(10));
    save_checkpoint(p, path);
    EXPECT_TRUE(load_checkpoint(path) == p);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), Error);
}

TEST(Checkpoint, RejectsCorruptInput)
{
    std::stringstream ss;
    write_checkpoint(ss, init_unet(11));
    const std::string good = ss.str();

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    std::stringstream s1(bad_magic);
    EXPECT_THROW(read_checkpoint(s1), FormatError);

    std::string bad_version = good;
    bad_version[4] = 7;
    std::stringstream s2(bad_version);
    EXPECT_THROW(read_checkpoint(s2), FormatError);

    std::stringstream s3(good.substr(0, good.size() - 3));
    EXPECT_THROW(read_checkpoint(s3), FormatError);

    std::string bad_shape = good;
    bad_shape[12 + 1] = 99; // first layer cout
    std::stringstream s4(bad_shape);
    EXPECT_THROW(read_checkpoint(s4), FormatError);
}
