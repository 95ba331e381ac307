#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mdp/error.hpp"
#include "mdp/sparse.hpp"

namespace mdp {

/// Outcome of one preconditioned solve.
struct SolveReport {
    int iterations = 0;              ///< preconditioner applications
    bool converged = false;
    std::vector<double> residual_history; ///< ||r|| / ||r0||, entry 0 is 1
    double wall_time = 0.0;          ///< seconds
    double time_per_iteration = 0.0; ///< seconds
    int breakdowns = 0;
    int restarts = 0;

    double final_relative_residual() const { return residual_history.back(); }
};

/// z = P(r). Implementations may be nonlinear or change from call to call.
class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual Vector apply(const Vector& r) = 0;
    virtual std::string name() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    Vector apply(const Vector& r) override { return r; }
    std::string name() const override { return "none"; }
};

class FunctionPreconditioner final : public Preconditioner {
public:
    FunctionPreconditioner(std::function<Vector(const Vector&)> f, std::string name = "function")
        : f_(std::move(f)), name_(std::move(name))
    {
    }
    Vector apply(const Vector& r) override { return f_(r); }
    std::string name() const override { return name_; }

private:
    std::function<Vector(const Vector&)> f_;
    std::string name_;
};

using LinearOperator = std::function<Vector(const Vector&)>;

inline LinearOperator as_operator(const CsrMatrix& A)
{
    return [&A](const Vector& x) { return spmv(A, x); };
}

struct FgmresOptions {
    int restart = 20;
    double tol = 1e-6;
    int maxit = 1000;
    double breakdown_tol = 1e-14;
};

/// Flexible GMRES(k) with right preconditioning (Saad 1993).
///
/// Convergence is declared on ||b - A x|| / ||b - A x0|| <= tol, with the
/// true residual recomputed at the end of every cycle. A breakdown ends the
/// cycle early and restarts from the current iterate.
inline Vector fgmres(const LinearOperator& A, Preconditioner& M, const Vector& b, const FgmresOptions& opt,
                     const Vector& x0, SolveReport& report)
{
    if (opt.restart < 1 || !(opt.tol > 0.0)) {
        throw std::invalid_argument("fgmres: restart must be >= 1 and tol > 0");
    }
    detail::require_dims(x0.empty() || x0.size() == b.size(), "fgmres: x0 size differs from b");
    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t n = b.size();
    const int k = opt.restart;

    Vector x = x0.empty() ? Vector(n, 0.0) : x0;
    report = SolveReport{};
    Vector r = x0.empty() ? b : b - A(x);
    double beta = norm2(r);
    const double r0 = beta;
    report.residual_history.push_back(r0 > 0.0 ? 1.0 : 0.0);

    auto finish = [&]() {
        report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        report.time_per_iteration = report.iterations > 0 ? report.wall_time / report.iterations : 0.0;
        return x;
    };
    if (r0 == 0.0) {
        report.converged = true;
        return finish();
    }

    std::vector<Vector> V(k + 1, Vector(n));
    std::vector<Vector> Z(k, Vector(n));
    std::vector<std::vector<double>> H(k + 1, std::vector<double>(k, 0.0));
    std::vector<double> cs(k), sn(k), g(k + 1);

    while (report.iterations < opt.maxit) {
        for (std::size_t i = 0; i < n; ++i) {
            V[0][i] = r[i] / beta;
        }
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        int used = 0;
        bool breakdown = false;
        for (int j = 0; j < k && report.iterations < opt.maxit; ++j) {
            Z[j] = M.apply(V[j]);
            detail::require_dims(Z[j].size() == n, "fgmres: preconditioner returned wrong size");
            ++report.iterations;
            Vector w = A(Z[j]);
            const double wnorm = norm2(w);
            for (int i = 0; i <= j; ++i) {
                H[i][j] = dot(w, V[i]);
                axpy(-H[i][j], V[i], w);
            }
            H[j + 1][j] = norm2(w);
            breakdown = !(H[j + 1][j] > opt.breakdown_tol * wnorm);
            if (!breakdown) {
                for (std::size_t i = 0; i < n; ++i) {
                    V[j + 1][i] = w[i] / H[j + 1][j];
                }
            }
            for (int i = 0; i < j; ++i) {
                const double t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
                H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
                H[i][j] = t;
            }
            const double den = std::hypot(H[j][j], H[j + 1][j]);
            cs[j] = den > 0.0 ? H[j][j] / den : 1.0;
            sn[j] = den > 0.0 ? H[j + 1][j] / den : 0.0;
            H[j][j] = den;
            H[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            report.residual_history.push_back(std::abs(g[j + 1]) / r0);
            if (breakdown) {
                ++report.breakdowns;
            }
            if (std::abs(g[j + 1]) / r0 <= opt.tol || breakdown) {
                break;
            }
        }

        std::vector<double> y(used, 0.0);
        for (int i = used - 1; i >= 0; --i) {
            double s = g[i];
            for (int l = i + 1; l < used; ++l) {
                s -= H[i][l] * y[l];
            }
            y[i] = H[i][i] != 0.0 ? s / H[i][i] : 0.0;
        }
        for (int i = 0; i < used; ++i) {
            axpy(y[i], Z[i], x);
        }
        r = b - A(x);
        beta = norm2(r);
        report.residual_history.back() = beta / r0;
        if (beta / r0 <= opt.tol) {
            report.converged = true;
            break;
        }
        if (beta == 0.0) {
            break;
        }
        ++report.restarts;
    }
    return finish();
}

inline Vector fgmres(const CsrMatrix& A, Preconditioner& M, const Vector& b, const FgmresOptions& opt,
                     SolveReport& report, const Vector& x0 = {})
{
    detail::require_dims(A.rows == A.cols && static_cast<std::size_t>(A.rows) == b.size(),
                         "fgmres: matrix and right-hand side sizes differ");
    return fgmres(as_operator(A), M, b, opt, x0, report);
}

/// x_{m+1} = x_m + omega D^{-1} (r - A x_m), maxit sweeps.
inline Vector jacobi_smooth(const CsrMatrix& A, const Vector& r, const Vector& x0, int maxit, double omega)
{
    detail::require_dims(A.rows == A.cols && r.size() == static_cast<std::size_t>(A.rows), "jacobi_smooth: size mismatch");
    const Vector d = A.diagonal();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) {
            throw NumericalError("jacobi_smooth: zero diagonal entry in row " + std::to_string(i));
        }
    }
    Vector x = x0.empty() ? Vector(r.size(), 0.0) : x0;
    Vector ax(r.size());
    for (int it = 0; it < maxit; ++it) {
        spmv(A, x.data(), ax.data());
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += omega * (r[i] - ax[i]) / d[i];
        }
    }
    return x;
}

} // namespace mdp
