#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdp/grid.hpp"
#include "mdp/krylov.hpp"
#include "mdp/sparse.hpp"

namespace mdp {

struct GmgLevel {
    StructuredGrid grid{2};
    CsrMatrix A;
    CsrMatrix P;  ///< prolongation from the next coarser level (empty on the coarsest)
    CsrMatrix R;  ///< P^T
    Vector inv_diag;
};

struct GmgHierarchy {
    std::vector<GmgLevel> levels; ///< finest first
    Eigen::PartialPivLU<Eigen::MatrixXd> coarse_lu;
    double omega = 2.0 / 3.0;
};

/// Coarse size, or 0 when n cannot be halved onto a nested grid of >= 3 points.
inline int coarsened(int n) { return ((n - 1) % 2 == 0 && (n + 1) / 2 >= 3) ? (n + 1) / 2 : 0; }

/// Trilinear interpolation from the (n+1)/2 grid to the n grid.
inline CsrMatrix trilinear_prolongation(int n_fine)
{
    const int nc = (n_fine + 1) / 2;
    const StructuredGrid fine(n_fine);
    const StructuredGrid coarse(nc);
    auto stencil = [](int i) {
        std::vector<std::pair<int, double>> s;
        if (i % 2 == 0) {
            s.emplace_back(i / 2, 1.0);
        }
        else {
            s.emplace_back((i - 1) / 2, 0.5);
            s.emplace_back((i + 1) / 2, 0.5);
        }
        return s;
    };
    TripletBuilder tb(static_cast<int>(fine.node_count()), static_cast<int>(coarse.node_count()));
    for (int k = 0; k < n_fine; ++k) {
        for (int j = 0; j < n_fine; ++j) {
            for (int i = 0; i < n_fine; ++i) {
                for (const auto& [ck, wk] : stencil(k)) {
                    for (const auto& [cj, wj] : stencil(j)) {
                        for (const auto& [ci, wi] : stencil(i)) {
                            tb.add(fine.index(i, j, k), coarse.index(ci, cj, ck), wi * wj * wk);
                        }
                    }
                }
            }
        }
    }
    return tb.build();
}

/// Galerkin hierarchy. max_levels <= 0 coarsens as far as possible.
inline GmgHierarchy gmg_build(const StructuredGrid& grid, const CsrMatrix& A, int max_levels = 0)
{
    detail::require_dims(A.rows == static_cast<int>(grid.node_count()) && A.cols == A.rows,
                         "gmg_build: operator does not match grid");
    if (coarsened(grid.n()) == 0) {
        throw std::invalid_argument("gmg_build: grid size " + std::to_string(grid.n()) + " is not coarsenable");
    }
    GmgHierarchy h;
    h.levels.push_back(GmgLevel{grid, A, {}, {}, {}});
    while (coarsened(h.levels.back().grid.n()) != 0 &&
           (max_levels <= 0 || static_cast<int>(h.levels.size()) < max_levels)) {
        GmgLevel& f = h.levels.back();
        f.P = trilinear_prolongation(f.grid.n());
        f.R = transpose(f.P);
        CsrMatrix Ac = multiply(f.R, multiply(f.A, f.P));
        h.levels.push_back(GmgLevel{StructuredGrid(coarsened(f.grid.n())), std::move(Ac), {}, {}, {}});
    }
    for (auto& l : h.levels) {
        l.inv_diag = l.A.diagonal();
        for (double& d : l.inv_diag) {
            if (d == 0.0) {
                throw NumericalError("gmg_build: zero diagonal");
            }
            d = 1.0 / d;
        }
    }
    h.coarse_lu.compute(to_dense(h.levels.back().A));
    return h;
}

namespace detail {

inline void gmg_jacobi(const GmgLevel& l, const Vector& r, Vector& z, int sweeps, double omega)
{
    Vector az(r.size());
    for (int s = 0; s < sweeps; ++s) {
        spmv(l.A, z.data(), az.data());
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] += omega * l.inv_diag[i] * (r[i] - az[i]);
        }
    }
}

inline Vector gmg_cycle(const GmgHierarchy& h, std::size_t lev, const Vector& r, int n_pre, int n_post)
{
    const GmgLevel& l = h.levels[lev];
    if (lev + 1 == h.levels.size()) {
        const Eigen::Map<const Eigen::VectorXd> rr(r.data(), static_cast<Eigen::Index>(r.size()));
        const Eigen::VectorXd z = h.coarse_lu.solve(rr);
        return Vector(z.data(), z.data() + z.size());
    }
    Vector z(r.size(), 0.0);
    gmg_jacobi(l, r, z, n_pre, h.omega);
    const Vector res = r - spmv(l.A, z);
    const Vector zc = gmg_cycle(h, lev + 1, spmv(l.R, res), n_pre, n_post);
    axpy(1.0, spmv(l.P, zc), z);
    gmg_jacobi(l, r, z, n_post, h.omega);
    return z;
}

} // namespace detail

/// One V-cycle for A z = r from a zero initial guess.
inline Vector gmg_vcycle(const GmgHierarchy& h, const Vector& r, int n_pre = 2, int n_post = 2)
{
    detail::require_dims(r.size() == static_cast<std::size_t>(h.levels.front().A.rows), "gmg_vcycle: size mismatch");
    return detail::gmg_cycle(h, 0, r, n_pre, n_post);
}

/// m V-cycles per application.
class GmgPreconditioner final : public Preconditioner {
public:
    GmgPreconditioner(const StructuredGrid& grid, const CsrMatrix& A, int cycles, int n_pre = 2, int n_post = 2)
        : h_(gmg_build(grid, A)), cycles_(cycles), n_pre_(n_pre), n_post_(n_post)
    {
    }

    Vector apply(const Vector& r) override
    {
        Vector z = gmg_vcycle(h_, r, n_pre_, n_post_);
        for (int c = 1; c < cycles_; ++c) {
            axpy(1.0, gmg_vcycle(h_, r - spmv(h_.levels.front().A, z), n_pre_, n_post_), z);
        }
        return z;
    }

    std::string name() const override { return "gmg(" + std::to_string(cycles_) + ")"; }
    const GmgHierarchy& hierarchy() const noexcept { return h_; }

private:
    GmgHierarchy h_;
    int cycles_;
    int n_pre_;
    int n_post_;
};

} // namespace mdp
