#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mdp/geometry.hpp"
#include "mdp/grid.hpp"
#include "mdp/sparse.hpp"

namespace mdp {

struct PhysicalParams {
    double k_omega = 1e-3;
    double sigma_omega = 1e-3;
    double k_lambda = 100.0;
    double epsilon = 1e-3;

    void validate() const
    {
        if (!(k_omega > 0.0 && sigma_omega > 0.0 && k_lambda > 0.0 && epsilon > 0.0)) {
            throw std::invalid_argument("PhysicalParams: all coefficients must be strictly positive");
        }
    }

    double coupling_weight() const { return 2.0 * std::numbers::pi * epsilon; }
    double cross_section() const { return std::numbers::pi * epsilon * epsilon; }
};

namespace detail {

/// Assembled 1D P1 mass (scaled by h) and stiffness (scaled by 1/h) as
/// tridiagonal (lower, diag, upper) coefficients for node i and neighbour i+d.
inline double mass_1d(int n, int i, int d, double h)
{
    if (d != 0) {
        return h / 6.0;
    }
    return (i == 0 || i == n - 1) ? h / 3.0 : 2.0 * h / 3.0;
}

inline double stiff_1d(int n, int i, int d, double h)
{
    if (d != 0) {
        return -1.0 / h;
    }
    return (i == 0 || i == n - 1) ? 1.0 / h : 2.0 / h;
}

} // namespace detail

/// Q1 stiffness + reaction on the uniform grid, homogeneous Neumann boundary.
///
/// Entries are evaluated as Kronecker sums of the assembled 1D matrices,
/// which coincides with the element-by-element trilinear assembly.
inline CsrMatrix assemble_3d(const StructuredGrid& grid, double k, double sigma)
{
    const int n = grid.n();
    const double h = grid.spacing();
    CsrMatrix A;
    A.rows = A.cols = static_cast<int>(grid.node_count());
    A.row_ptr.assign(A.rows + 1, 0);
    A.col_idx.reserve(static_cast<std::size_t>(A.rows) * 27);
    A.values.reserve(static_cast<std::size_t>(A.rows) * 27);
    for (int kk = 0; kk < n; ++kk) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                for (int dk = -1; dk <= 1; ++dk) {
                    if (kk + dk < 0 || kk + dk >= n) continue;
                    const double mz = detail::mass_1d(n, kk, dk, h);
                    const double sz = detail::stiff_1d(n, kk, dk, h);
                    for (int dj = -1; dj <= 1; ++dj) {
                        if (j + dj < 0 || j + dj >= n) continue;
                        const double my = detail::mass_1d(n, j, dj, h);
                        const double sy = detail::stiff_1d(n, j, dj, h);
                        for (int di = -1; di <= 1; ++di) {
                            if (i + di < 0 || i + di >= n) continue;
                            const double mx = detail::mass_1d(n, i, di, h);
                            const double sx = detail::stiff_1d(n, i, di, h);
                            const double v = k * (sx * my * mz + mx * sy * mz + mx * my * sz) + sigma * mx * my * mz;
                            A.col_idx.push_back(grid.index(i + di, j + dj, kk + dk));
                            A.values.push_back(v);
                        }
                    }
                }
                const int row = grid.index(i, j, kk);
                A.row_ptr[row + 1] = static_cast<int>(A.values.size());
            }
        }
    }
    return A;
}

inline CsrMatrix assemble_3d(const StructuredGrid& grid, const PhysicalParams& params)
{
    params.validate();
    return assemble_3d(grid, params.k_omega, params.sigma_omega);
}

/// Row weights of the trilinear basis at point p (entries with zero weight dropped).
inline std::vector<std::pair<int, double>> trilinear_weights(const StructuredGrid& grid, const Vec3& p)
{
    const int n = grid.n();
    const double h = grid.spacing();
    std::array<int, 3> c{};
    std::array<double, 3> xi{};
    for (int a = 0; a < 3; ++a) {
        if (p[a] < -1e-12 || p[a] > 1.0 + 1e-12) {
            throw std::domain_error("point leaves the unit cube");
        }
        const double s = std::clamp(p[a], 0.0, 1.0) / h;
        c[a] = std::min(static_cast<int>(std::floor(s)), n - 2);
        xi[a] = s - c[a];
    }
    std::vector<std::pair<int, double>> out;
    out.reserve(8);
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? xi[0] : 1.0 - xi[0]) * (dy ? xi[1] : 1.0 - xi[1]) * (dz ? xi[2] : 1.0 - xi[2]);
                if (w != 0.0) {
                    out.emplace_back(grid.index(c[0] + dx, c[1] + dy, c[2] + dz), w);
                }
            }
        }
    }
    return out;
}

/// Quadrature on the graph mesh and the averaged trace of 3D fields there.
struct RestrictionMap {
    CsrMatrix T;        ///< quadrature points x 3D dofs
    CsrMatrix Psi;      ///< quadrature points x 1D dofs (P1 basis values)
    Vector weights;     ///< arc-length quadrature weights
    std::vector<Vec3> points;
    std::vector<int> element; ///< owning 1D element per quadrature point
};

/// Two Gauss points per 1D element. For n_circle > 1 each 3D evaluation is
/// averaged over n_circle points on the radius-epsilon circle normal to the edge.
inline RestrictionMap build_restriction(const StructuredGrid& grid, const GraphMesh1D& mesh, double epsilon,
                                        int n_circle = 1)
{
    if (n_circle < 1) {
        throw std::invalid_argument("build_restriction: n_circle must be >= 1");
    }
    constexpr std::array<double, 2> gauss{0.5 - 0.5 / std::numbers::sqrt3, 0.5 + 0.5 / std::numbers::sqrt3};
    const int nq = static_cast<int>(mesh.elements.size()) * 2;
    TripletBuilder tT(nq, static_cast<int>(grid.node_count()));
    TripletBuilder tP(nq, static_cast<int>(mesh.node_count()));
    RestrictionMap r;
    r.weights.reserve(nq);
    r.points.reserve(nq);
    int q = 0;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& el = mesh.elements[e];
        const Vec3 a = mesh.nodes[el.a];
        const Vec3 b = mesh.nodes[el.b];
        const Vec3 tangent = (1.0 / el.length) * (b - a);
        const Vec3 u = detail::any_orthogonal(tangent);
        const Vec3 w = cross(tangent, u);
        for (double t : gauss) {
            const Vec3 p = a + t * (b - a);
            for (int c = 0; c < n_circle; ++c) {
                Vec3 pc = p;
                if (n_circle > 1) {
                    const double th = 2.0 * std::numbers::pi * c / n_circle;
                    pc = p + epsilon * (std::cos(th) * u + std::sin(th) * w);
                }
                std::vector<std::pair<int, double>> row;
                try {
                    row = trilinear_weights(grid, pc);
                }
                catch (const std::domain_error&) {
                    throw std::domain_error("build_restriction: quadrature point of element " + std::to_string(e) +
                                            " leaves the unit cube");
                }
                for (const auto& [col, val] : row) {
                    tT.add(q, col, val / n_circle);
                }
            }
            tP.add(q, el.a, 1.0 - t);
            tP.add(q, el.b, t);
            r.weights.push_back(0.5 * el.length);
            r.points.push_back(p);
            r.element.push_back(static_cast<int>(e));
            ++q;
        }
    }
    r.T = tT.build();
    r.Psi = tP.build();
    return r;
}

/// Sparse blocks of the mixed-dimensional system after Dirichlet elimination.
///
///   [K00 + w M00    w M01     ] [u0]   [f0]
///   [w M10          K11 + w M11] [u1] = [f1],   w = 2 pi epsilon
///
/// Dirichlet rows/columns of the 1D block are replaced by the identity; the
/// lift of u1 = 1 appears in f1 (1D rows) and f0 (3D rows).
struct CoupledSystem {
    StructuredGrid grid{2};
    GraphMesh1D mesh;
    PhysicalParams params;
    RestrictionMap restriction;
    CsrMatrix K00, K11, M00, M01, M10, M11;
    Vector f0, f1;
    std::vector<char> is_dirichlet;

    int n3d() const { return K00.rows; }
    int n1d() const { return K11.rows; }
    double weight() const { return params.coupling_weight(); }

    /// K11 + w M11
    CsrMatrix block11() const { return add(K11, M11, 1.0, weight()); }

    /// Assembled full operator of size (n3d + n1d).
    CsrMatrix full_operator() const
    {
        const int n0 = n3d();
        const int n1 = n1d();
        const double w = weight();
        TripletBuilder tb(n0 + n1, n0 + n1);
        auto put = [&](const CsrMatrix& B, int r0, int c0, double s) {
            for (int i = 0; i < B.rows; ++i) {
                for (int p = B.row_ptr[i]; p < B.row_ptr[i + 1]; ++p) {
                    tb.add(r0 + i, c0 + B.col_idx[p], s * B.values[p]);
                }
            }
        };
        put(K00, 0, 0, 1.0);
        put(M00, 0, 0, w);
        put(M01, 0, n0, w);
        put(M10, n0, 0, w);
        put(K11, n0, n0, 1.0);
        put(M11, n0, n0, w);
        return tb.build();
    }

    Vector full_rhs() const
    {
        Vector b(f0);
        b.insert(b.end(), f1.begin(), f1.end());
        return b;
    }
};

namespace detail {

/// Drop masked rows and columns; optionally put 1 on masked diagonal entries.
inline CsrMatrix eliminate(const CsrMatrix& A, const std::vector<char>& row_mask, const std::vector<char>& col_mask,
                           bool unit_diagonal)
{
    TripletBuilder tb(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            const int j = A.col_idx[p];
            const bool killed = (!row_mask.empty() && row_mask[i]) || (!col_mask.empty() && col_mask[j]);
            if (!killed) {
                tb.add(i, j, A.values[p]);
            }
        }
        if (unit_diagonal && row_mask[i]) {
            tb.add(i, i, 1.0);
        }
    }
    return tb.build();
}

} // namespace detail

/// 1D stiffness k_lambda * |D| * (u', v') on the graph mesh.
inline CsrMatrix assemble_1d_stiffness(const GraphMesh1D& mesh, double coeff)
{
    const int n = static_cast<int>(mesh.node_count());
    TripletBuilder tb(n, n);
    for (const auto& el : mesh.elements) {
        const double s = coeff / el.length;
        tb.add(el.a, el.a, s);
        tb.add(el.b, el.b, s);
        tb.add(el.a, el.b, -s);
        tb.add(el.b, el.a, -s);
    }
    return tb.build();
}

/// Raw (pre-elimination) coupling blocks (T^T W T, -T^T W Psi, Psi^T W Psi).
inline std::array<CsrMatrix, 3> coupling_blocks(const RestrictionMap& r)
{
    auto weighted = [&](const CsrMatrix& B) {
        CsrMatrix WB = B;
        for (int q = 0; q < WB.rows; ++q) {
            for (int p = WB.row_ptr[q]; p < WB.row_ptr[q + 1]; ++p) {
                WB.values[p] *= r.weights[q];
            }
        }
        return WB;
    };
    const CsrMatrix Tt = transpose(r.T);
    const CsrMatrix Pt = transpose(r.Psi);
    CsrMatrix M00 = multiply(Tt, weighted(r.T));
    CsrMatrix M01 = scaled(multiply(Tt, weighted(r.Psi)), -1.0);
    CsrMatrix M11 = multiply(Pt, weighted(r.Psi));
    return {std::move(M00), std::move(M01), std::move(M11)};
}

/// Builds the graph mesh with h_target = grid spacing and assembles every block.
inline CoupledSystem assemble_coupled_system(const StructuredGrid& grid, const Graph1D& graph,
                                             const PhysicalParams& params, int n_circle = 1)
{
    params.validate();
    if (params.epsilon > grid.spacing()) {
        throw std::invalid_argument("assemble_coupled_system: radius exceeds grid spacing");
    }
    CoupledSystem s;
    s.grid = grid;
    s.params = params;
    s.mesh = refine_graph(graph, grid.spacing());
    s.restriction = build_restriction(grid, s.mesh, params.epsilon, n_circle);
    s.K00 = assemble_3d(grid, params);

    const int n1 = static_cast<int>(s.mesh.node_count());
    s.is_dirichlet.assign(n1, 0);
    for (int d : s.mesh.dirichlet_nodes) {
        s.is_dirichlet[d] = 1;
    }
    const CsrMatrix K11 = assemble_1d_stiffness(s.mesh, params.k_lambda * params.cross_section());
    auto [M00, M01, M11] = coupling_blocks(s.restriction);
    const double w = params.coupling_weight();

    Vector g(n1, 0.0);
    for (int d : s.mesh.dirichlet_nodes) {
        g[d] = 1.0;
    }
    const CsrMatrix A11 = add(K11, M11, 1.0, w);
    const Vector lift1 = spmv(A11, g);
    const Vector lift0 = spmv(M01, g);
    s.f1.assign(n1, 0.0);
    for (int i = 0; i < n1; ++i) {
        s.f1[i] = s.is_dirichlet[i] ? 1.0 : -lift1[i];
    }
    s.f0.assign(s.K00.rows, 0.0);
    for (int i = 0; i < s.K00.rows; ++i) {
        s.f0[i] = -w * lift0[i];
    }

    s.M00 = std::move(M00);
    s.K11 = detail::eliminate(K11, s.is_dirichlet, s.is_dirichlet, true);
    s.M11 = detail::eliminate(M11, s.is_dirichlet, s.is_dirichlet, false);
    s.M01 = detail::eliminate(M01, {}, s.is_dirichlet, false);
    s.M10 = transpose(s.M01);
    return s;
}

/// C = K00 + 2 pi epsilon M00
inline CsrMatrix reduced_operator(const CoupledSystem& s) { return add(s.K00, s.M00, 1.0, s.weight()); }

/// -2 pi epsilon M01 z1
inline Vector reduced_rhs(const CoupledSystem& s, const Vector& z1)
{
    detail::require_dims(z1.size() == static_cast<std::size_t>(s.n1d()),
                         "reduced_rhs: expected " + std::to_string(s.n1d()) + " 1D values, got " +
                             std::to_string(z1.size()));
    Vector out = spmv(s.M01, z1);
    scale(out, -s.weight());
    return out;
}

} // namespace mdp
