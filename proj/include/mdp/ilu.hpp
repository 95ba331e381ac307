#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mdp/krylov.hpp"
#include "mdp/sparse.hpp"

namespace mdp {

/// Incomplete LU with zero fill. L (unit lower) and U share the storage and
/// sparsity pattern of A.
class Ilu0 {
public:
    explicit Ilu0(const CsrMatrix& A, double pivot_tol = 1e-14) : lu_(A)
    {
        detail::require_dims(A.rows == A.cols, "ilu0: matrix not square");
        const int n = A.rows;
        diag_.assign(n, -1);
        std::vector<int> pos(n, -1);
        for (int i = 0; i < n; ++i) {
            const int rb = lu_.row_ptr[i];
            const int re = lu_.row_ptr[i + 1];
            for (int p = rb; p < re; ++p) {
                pos[lu_.col_idx[p]] = p;
                if (lu_.col_idx[p] == i) {
                    diag_[i] = p;
                }
            }
            if (diag_[i] < 0) {
                throw NumericalError("ilu0: missing diagonal entry in row " + std::to_string(i));
            }
            for (int p = rb; p < re && lu_.col_idx[p] < i; ++p) {
                const int k = lu_.col_idx[p];
                const double lik = lu_.values[p] / lu_.values[diag_[k]];
                lu_.values[p] = lik;
                for (int q = diag_[k] + 1; q < lu_.row_ptr[k + 1]; ++q) {
                    const int j = pos[lu_.col_idx[q]];
                    if (j >= 0) {
                        lu_.values[j] -= lik * lu_.values[q];
                    }
                }
            }
            if (!(std::abs(lu_.values[diag_[i]]) >= pivot_tol)) {
                throw NumericalError("ilu0: near-zero pivot " + std::to_string(lu_.values[diag_[i]]) + " in row " +
                                     std::to_string(i));
            }
            for (int p = rb; p < re; ++p) {
                pos[lu_.col_idx[p]] = -1;
            }
        }
    }

    /// Solve L U z = r.
    Vector solve(const Vector& r) const
    {
        detail::require_dims(r.size() == static_cast<std::size_t>(lu_.rows), "ilu0_apply: size mismatch");
        const int n = lu_.rows;
        Vector z(r);
        for (int i = 0; i < n; ++i) {
            double s = z[i];
            for (int p = lu_.row_ptr[i]; p < diag_[i]; ++p) {
                s -= lu_.values[p] * z[lu_.col_idx[p]];
            }
            z[i] = s;
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = z[i];
            for (int p = diag_[i] + 1; p < lu_.row_ptr[i + 1]; ++p) {
                s -= lu_.values[p] * z[lu_.col_idx[p]];
            }
            z[i] = s / lu_.values[diag_[i]];
        }
        return z;
    }

    /// Unit lower factor as a separate matrix.
    CsrMatrix lower() const
    {
        TripletBuilder tb(lu_.rows, lu_.cols);
        for (int i = 0; i < lu_.rows; ++i) {
            for (int p = lu_.row_ptr[i]; p < diag_[i]; ++p) {
                tb.add(i, lu_.col_idx[p], lu_.values[p]);
            }
            tb.add(i, i, 1.0);
        }
        return tb.build();
    }

    CsrMatrix upper() const
    {
        TripletBuilder tb(lu_.rows, lu_.cols);
        for (int i = 0; i < lu_.rows; ++i) {
            for (int p = diag_[i]; p < lu_.row_ptr[i + 1]; ++p) {
                tb.add(i, lu_.col_idx[p], lu_.values[p]);
            }
        }
        return tb.build();
    }

    const CsrMatrix& factors() const noexcept { return lu_; }

private:
    CsrMatrix lu_;
    std::vector<int> diag_;
};

inline Ilu0 ilu0(const CsrMatrix& A) { return Ilu0(A); }
inline Vector ilu0_apply(const Ilu0& f, const Vector& r) { return f.solve(r); }

class Ilu0Preconditioner final : public Preconditioner {
public:
    explicit Ilu0Preconditioner(const CsrMatrix& A) : f_(A) {}
    Vector apply(const Vector& r) override { return f_.solve(r); }
    std::string name() const override { return "ilu0"; }

private:
    Ilu0 f_;
};

} // namespace mdp
