#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mdp/error.hpp"

namespace mdp {

struct Shape3 {
    int n1 = 0;
    int n2 = 0;
    int n3 = 0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(n1) * n2 * n3; }
    bool operator==(const Shape3&) const = default;

    std::string str() const { return std::to_string(n1) + "x" + std::to_string(n2) + "x" + std::to_string(n3); }
};

/// Channel-major activations: data[(ch * batch + b) * spatial + i + n1 * (j + n2 * k)].
///
/// With batch == 1 this is the (c, n1, n2, n3) layout whose 1-channel
/// flattening coincides with the grid node ordering.
struct Tensor4 {
    int c = 0;
    int batch = 1;
    Shape3 s;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int channels, Shape3 shape, int batch_size = 1)
        : c(channels), batch(batch_size), s(shape), data(static_cast<std::size_t>(channels) * batch_size * shape.size(), 0.0)
    {
    }
    Tensor4(int channels, int n1, int n2, int n3) : Tensor4(channels, Shape3{n1, n2, n3}) {}

    std::size_t spatial() const noexcept { return s.size(); }
    std::size_t columns() const noexcept { return static_cast<std::size_t>(batch) * s.size(); }
    std::size_t size() const noexcept { return data.size(); }

    double* slice(int ch, int b = 0) { return data.data() + (static_cast<std::size_t>(ch) * batch + b) * spatial(); }
    const double* slice(int ch, int b = 0) const
    {
        return data.data() + (static_cast<std::size_t>(ch) * batch + b) * spatial();
    }

    double& at(int ch, int i, int j, int k, int b = 0) { return slice(ch, b)[i + s.n1 * (j + s.n2 * k)]; }
    double at(int ch, int i, int j, int k, int b = 0) const { return slice(ch, b)[i + s.n1 * (j + s.n2 * k)]; }

    bool same_shape(const Tensor4& o) const { return c == o.c && batch == o.batch && s == o.s; }
};

/// 1-channel tensor holding a grid vector of a cubic n^3 grid.
inline Tensor4 from_grid_vector(const std::vector<double>& v, int n)
{
    detail::require_dims(v.size() == static_cast<std::size_t>(n) * n * n, "from_grid_vector: size is not n^3");
    Tensor4 t(1, n, n, n);
    t.data = v;
    return t;
}

inline std::vector<double> to_grid_vector(const Tensor4& t)
{
    detail::require_dims(t.c == 1 && t.batch == 1, "to_grid_vector: expected one channel and one sample");
    return t.data;
}

/// Stack single-sample tensors of equal shape along the batch axis.
inline Tensor4 stack_batch(const std::vector<Tensor4>& xs)
{
    detail::require_dims(!xs.empty(), "stack_batch: empty batch");
    const Tensor4& f = xs.front();
    Tensor4 out(f.c, f.s, static_cast<int>(xs.size()));
    for (std::size_t b = 0; b < xs.size(); ++b) {
        detail::require_dims(xs[b].c == f.c && xs[b].s == f.s && xs[b].batch == 1,
                             "stack_batch: heterogeneous sample shapes");
        for (int ch = 0; ch < f.c; ++ch) {
            std::copy(xs[b].slice(ch), xs[b].slice(ch) + f.spatial(), out.slice(ch, static_cast<int>(b)));
        }
    }
    return out;
}

inline Tensor4 unstack_sample(const Tensor4& x, int b)
{
    Tensor4 out(x.c, x.s);
    for (int ch = 0; ch < x.c; ++ch) {
        std::copy(x.slice(ch, b), x.slice(ch, b) + x.spatial(), out.slice(ch));
    }
    return out;
}

} // namespace mdp
