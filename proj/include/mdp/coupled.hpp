#pragma once

#include <memory>
#include <string>

#include "mdp/assembly.hpp"
#include "mdp/direct.hpp"
#include "mdp/ilu.hpp"
#include "mdp/krylov.hpp"
#include "mdp/multigrid.hpp"

namespace mdp {

enum class CoupledPrecond {
    none,  ///< unpreconditioned outer FGMRES
    block, ///< ILU(0) on the 1D block, fixed-step inner FGMRES on C
    exact, ///< direct solves on both diagonal blocks
};

struct CoupledStrategy {
    CoupledPrecond kind = CoupledPrecond::block;
    int inner_steps = 3;
    FgmresOptions outer{20, 1e-15, 2000};
    /// Preconditioner of the inner FGMRES on C; identity when null.
    std::shared_ptr<Preconditioner> inner;
};

struct CoupledSolution {
    Vector u3d;
    Vector u1d;
    SolveReport report;
    double true_relative_residual = 0.0; ///< ||F - A u|| / ||F - A u_initial||
};

/// Block upper-triangular right preconditioner
///   z1 = A11^{-1} r1,   z0 = C^{-1} (r0 - 2 pi eps M01 z1)
/// with approximate inverses chosen by the strategy.
class CoupledBlockPreconditioner final : public Preconditioner {
public:
    CoupledBlockPreconditioner(const CoupledSystem& s, const CoupledStrategy& st)
        : s_(s), st_(st), C_(reduced_operator(s)), A11_(s.block11())
    {
        if (st.kind == CoupledPrecond::exact) {
            c_direct_ = std::make_unique<DirectSolver>(C_);
            a11_direct_ = std::make_unique<DirectSolver>(A11_);
        }
        else {
            a11_ilu_ = std::make_unique<Ilu0>(A11_);
            inner_ = st.inner ? st.inner : std::make_shared<IdentityPreconditioner>();
        }
    }

    Vector apply(const Vector& r) override
    {
        const int n0 = s_.n3d();
        const Vector r0(r.begin(), r.begin() + n0);
        const Vector r1(r.begin() + n0, r.end());
        const Vector z1 = a11_direct_ ? a11_direct_->solve(r1) : a11_ilu_->solve(r1);
        Vector rhs0 = r0;
        axpy(-s_.weight(), spmv(s_.M01, z1), rhs0);
        Vector z0;
        if (c_direct_) {
            z0 = c_direct_->solve(rhs0);
        }
        else {
            SolveReport inner_rep;
            z0 = fgmres(C_, *inner_, rhs0,
                        FgmresOptions{st_.inner_steps, 1e-300, st_.inner_steps, 0.0}, inner_rep);
        }
        z0.insert(z0.end(), z1.begin(), z1.end());
        return z0;
    }

    std::string name() const override { return st_.kind == CoupledPrecond::exact ? "block-exact" : "block"; }

private:
    const CoupledSystem& s_;
    CoupledStrategy st_;
    CsrMatrix C_;
    CsrMatrix A11_;
    std::unique_ptr<DirectSolver> c_direct_, a11_direct_;
    std::unique_ptr<Ilu0> a11_ilu_;
    std::shared_ptr<Preconditioner> inner_;
};

/// Outer FGMRES on the full block system, started from u0 = 0, u1 = Dirichlet data.
inline CoupledSolution solve_coupled(const CoupledSystem& s, const CoupledStrategy& st = {})
{
    const CsrMatrix A = s.full_operator();
    const Vector F = s.full_rhs();
    Vector x0(A.rows, 0.0);
    for (int d : s.mesh.dirichlet_nodes) {
        x0[s.n3d() + d] = 1.0;
    }
    std::unique_ptr<Preconditioner> P;
    if (st.kind == CoupledPrecond::none) {
        P = std::make_unique<IdentityPreconditioner>();
    }
    else {
        P = std::make_unique<CoupledBlockPreconditioner>(s, st);
    }
    CoupledSolution out;
    const Vector x = fgmres(as_operator(A), *P, F, st.outer, x0, out.report);
    out.u3d.assign(x.begin(), x.begin() + s.n3d());
    out.u1d.assign(x.begin() + s.n3d(), x.end());
    out.true_relative_residual = norm2(F - spmv(A, x)) / norm2(F - spmv(A, x0));
    return out;
}

} // namespace mdp
