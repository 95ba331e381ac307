#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace mdp {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Uniform n x n x n node lattice on the unit cube.
///
/// Node (i, j, k) sits at (i, j, k) * h with h = 1 / (n - 1); its flat index is
/// i + j * n + k * n^2. Every module (assembly, distance fields, network
/// tensors) uses this ordering.
class StructuredGrid {
public:
    explicit StructuredGrid(int n) : n_(n)
    {
        if (n < 2) {
            throw std::invalid_argument("StructuredGrid: need at least 2 points per edge");
        }
    }

    int n() const noexcept { return n_; }
    double spacing() const noexcept { return 1.0 / static_cast<double>(n_ - 1); }
    std::size_t node_count() const noexcept
    {
        return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
    }
    std::size_t cell_count() const noexcept
    {
        const auto c = static_cast<std::size_t>(n_ - 1);
        return c * c * c;
    }

    std::size_t index(int i, int j, int k) const noexcept
    {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(n_) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(n_) * static_cast<std::size_t>(k));
    }

    std::array<int, 3> ijk(std::size_t idx) const noexcept
    {
        const auto n = static_cast<std::size_t>(n_);
        return {static_cast<int>(idx % n), static_cast<int>((idx / n) % n), static_cast<int>(idx / (n * n))};
    }

    Vec3 point(int i, int j, int k) const noexcept
    {
        const double h = spacing();
        return {i * h, j * h, k * h};
    }

    Vec3 point(std::size_t idx) const noexcept
    {
        const auto c = ijk(idx);
        return point(c[0], c[1], c[2]);
    }

    bool operator==(const StructuredGrid&) const = default;

private:
    int n_;
};

} // namespace mdp
