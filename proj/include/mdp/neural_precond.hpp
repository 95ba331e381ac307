#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdp/geometry.hpp"
#include "mdp/krylov.hpp"
#include "mdp/unet.hpp"

namespace mdp {

/// Damped Jacobi sweeps wrapped around the network correction.
struct SmoothingConfig {
    int maxit = 2;
    double omega = 2.0 / 3.0;
};

namespace detail {

inline Tensor4 network_input(const Vector& unit_r, const DistanceField& d, bool use_distance)
{
    const int n = d.grid.n();
    require_dims(unit_r.size() == d.grid.node_count(),
                 "apply_neural: residual has " + std::to_string(unit_r.size()) + " entries, grid has " +
                     std::to_string(d.grid.node_count()));
    Tensor4 x(2, n, n, n);
    std::copy(unit_r.begin(), unit_r.end(), x.slice(0));
    if (use_distance) {
        std::copy(d.values.begin(), d.values.end(), x.slice(1));
    }
    return x;
}

/// ||r|| U(r / ||r||, d); zero for r = 0.
inline Vector scaled_network_apply(const UNetParams& p, const Vector& r, const DistanceField& d, bool use_distance)
{
    const double nr = norm2(r);
    if (!(nr > 0.0)) {
        return Vector(r.size(), 0.0);
    }
    Tensor4 y = unet_forward(p, network_input((1.0 / nr) * r, d, use_distance));
    return nr * y.data;
}

} // namespace detail

/// z = ||r|| U(r/||r||, d). With smoothing, C and alpha are required:
///   z0 = S_J(C, r, 0), r' = r - C z0, z1 = z0 + alpha^{-1} ||r'|| U(r'/||r'||, d),
///   z  = S_J(C, r, z1).
inline Vector apply_neural(const UNetParams& p, const Vector& r, const DistanceField& d,
                           const std::optional<SmoothingConfig>& smoothing = std::nullopt, const CsrMatrix* C = nullptr,
                           double alpha = 1.0, bool use_distance = true)
{
    if (!smoothing) {
        return detail::scaled_network_apply(p, r, d, use_distance);
    }
    if (C == nullptr || !(alpha > 0.0)) {
        throw std::invalid_argument("apply_neural: smoothing needs the operator and alpha > 0");
    }
    const Vector z0 = jacobi_smooth(*C, r, {}, smoothing->maxit, smoothing->omega);
    const Vector rr = r - spmv(*C, z0);
    Vector z1 = z0;
    axpy(1.0 / alpha, detail::scaled_network_apply(p, rr, d, use_distance), z1);
    return jacobi_smooth(*C, r, z1, smoothing->maxit, smoothing->omega);
}

/// One forward pass over a stacked batch; entry b equals apply_neural(p, r_b, d_b).
inline std::vector<Vector> apply_batched(const UNetParams& p, const std::vector<std::pair<Vector, const DistanceField*>>& items,
                                         bool use_distance = true)
{
    if (items.empty()) {
        return {};
    }
    const StructuredGrid& grid = items.front().second->grid;
    std::vector<Tensor4> inputs;
    std::vector<double> norms;
    for (const auto& [r, d] : items) {
        if (d->grid.n() != grid.n()) {
            throw DimensionError("apply_batched: heterogeneous spatial sizes " + std::to_string(grid.n()) + " and " +
                                 std::to_string(d->grid.n()));
        }
        const double nr = norm2(r);
        norms.push_back(nr);
        inputs.push_back(detail::network_input(nr > 0.0 ? (1.0 / nr) * r : r, *d, use_distance));
    }
    const Tensor4 y = unet_forward(p, stack_batch(inputs));
    std::vector<Vector> out;
    for (std::size_t b = 0; b < items.size(); ++b) {
        const double* s = y.slice(0, static_cast<int>(b));
        Vector z(s, s + y.spatial());
        if (norms[b] > 0.0) {
            scale(z, norms[b]);
        }
        else {
            std::fill(z.begin(), z.end(), 0.0);
        }
        out.push_back(std::move(z));
    }
    return out;
}

/// FGMRES-facing wrapper of apply_neural for one parameter instance.
class NeuralPreconditioner final : public Preconditioner {
public:
    NeuralPreconditioner(std::shared_ptr<const UNetParams> params, DistanceField dfield,
                         std::optional<SmoothingConfig> smoothing = std::nullopt, const CsrMatrix* C = nullptr,
                         double alpha = 1.0, bool use_distance = true)
        : params_(std::move(params)), d_(std::move(dfield)), smoothing_(smoothing), C_(C), alpha_(alpha),
          use_distance_(use_distance)
    {
        if (!params_) {
            throw std::invalid_argument("NeuralPreconditioner: null parameters");
        }
        if (smoothing_ && (C_ == nullptr || !(alpha_ > 0.0))) {
            throw std::invalid_argument("NeuralPreconditioner: smoothing needs the operator and alpha > 0");
        }
    }

    Vector apply(const Vector& r) override { return apply_neural(*params_, r, d_, smoothing_, C_, alpha_, use_distance_); }

    std::string name() const override
    {
        std::string s = "neural";
        if (!use_distance_) {
            s += "-nodist";
        }
        if (smoothing_) {
            s += "+jacobi" + std::to_string(smoothing_->maxit);
        }
        return s;
    }

private:
    std::shared_ptr<const UNetParams> params_;
    DistanceField d_;
    std::optional<SmoothingConfig> smoothing_;
    const CsrMatrix* C_;
    double alpha_;
    bool use_distance_;
};

} // namespace mdp
