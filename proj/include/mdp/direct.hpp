#pragma once

#include <string>

#include <Eigen/SparseLU>

#include "mdp/error.hpp"
#include "mdp/krylov.hpp"
#include "mdp/sparse.hpp"

namespace mdp {

/// Sparse LU (Eigen) wrapped for std::vector right-hand sides.
class DirectSolver {
public:
    explicit DirectSolver(const CsrMatrix& A) : n_(A.rows)
    {
        detail::require_dims(A.rows == A.cols, "DirectSolver: matrix not square");
        mat_ = to_eigen(A);
        mat_.makeCompressed();
        lu_.compute(mat_);
        if (lu_.info() != Eigen::Success) {
            throw NumericalError("DirectSolver: factorization failed");
        }
    }

    Vector solve(const Vector& b) const
    {
        detail::require_dims(b.size() == static_cast<std::size_t>(n_), "DirectSolver: size mismatch");
        const Eigen::Map<const Eigen::VectorXd> bb(b.data(), n_);
        const Eigen::VectorXd x = lu_.solve(bb);
        return Vector(x.data(), x.data() + n_);
    }

private:
    int n_;
    Eigen::SparseMatrix<double> mat_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

class DirectPreconditioner final : public Preconditioner {
public:
    explicit DirectPreconditioner(const CsrMatrix& A) : s_(A) {}
    Vector apply(const Vector& r) override { return s_.solve(r); }
    std::string name() const override { return "direct"; }

private:
    DirectSolver s_;
};

} // namespace mdp
