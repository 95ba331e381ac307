#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mdp/assembly.hpp"
#include "mdp/dataset.hpp"
#include "mdp/error.hpp"
#include "mdp/sparse.hpp"
#include "mdp/tensor.hpp"

namespace mdp {

// ---------------------------------------------------------------------------
// Discrete Fourier transform
// ---------------------------------------------------------------------------

/// Unnormalized forward DFT F(k) = sum_n V(n) exp(-2 pi i k.n / N) of an n^3 grid vector.
/// Coefficients use the grid layout (k1 fastest). When centered, every axis
/// is rotated by floor(N/2) so that k = 0 sits at index floor(N/2).
struct SpectrumResult {
    int n = 0;
    bool centered = false;
    std::vector<std::complex<double>> coeffs;

    std::vector<double> magnitude() const
    {
        std::vector<double> m(coeffs.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = std::abs(coeffs[i]);
        }
        return m;
    }

    std::complex<double> at(int i, int j, int k) const
    {
        return coeffs[static_cast<std::size_t>(i) + n * (static_cast<std::size_t>(j) + static_cast<std::size_t>(n) * k)];
    }

    /// Signed frequency stored at array index m along one axis.
    int frequency(int m) const
    {
        if (centered) {
            return m - n / 2;
        }
        return m <= (n - 1) / 2 ? m : m - n;
    }
};

namespace detail {

inline int cube_root_exact(std::size_t size)
{
    int n = static_cast<int>(std::lround(std::cbrt(static_cast<double>(size))));
    while (static_cast<std::size_t>(n) * n * n > size) {
        --n;
    }
    while (static_cast<std::size_t>(n + 1) * (n + 1) * (n + 1) <= size) {
        ++n;
    }
    if (static_cast<std::size_t>(n) * n * n != size || n < 1) {
        throw DimensionError("dft3: " + std::to_string(size) + " entries do not form a cubic grid");
    }
    return n;
}

/// In-place length-n DFT along one axis with the given stride.
inline void dft_axis(std::vector<std::complex<double>>& a, int n, std::size_t stride, std::size_t count_outer,
                     std::size_t outer_stride, std::size_t count_inner, const std::vector<std::complex<double>>& tw)
{
    std::vector<std::complex<double>> line(n), out(n);
    for (std::size_t o = 0; o < count_outer; ++o) {
        for (std::size_t in = 0; in < count_inner; ++in) {
            const std::size_t base = o * outer_stride + in;
            for (int m = 0; m < n; ++m) {
                line[m] = a[base + m * stride];
            }
            for (int k = 0; k < n; ++k) {
                std::complex<double> s = 0.0;
                for (int m = 0; m < n; ++m) {
                    s += line[m] * tw[(static_cast<std::size_t>(k) * m) % n];
                }
                out[k] = s;
            }
            for (int k = 0; k < n; ++k) {
                a[base + k * stride] = out[k];
            }
        }
    }
}

} // namespace detail

/// Separable direct DFT of a cubic grid vector.
inline SpectrumResult dft3(const std::vector<double>& v, bool centered = true)
{
    const int n = detail::cube_root_exact(v.size());
    SpectrumResult res;
    res.n = n;
    res.centered = centered;
    res.coeffs.assign(v.begin(), v.end());
    std::vector<std::complex<double>> tw(n);
    for (int k = 0; k < n; ++k) {
        tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
    }
    const auto N = static_cast<std::size_t>(n);
    detail::dft_axis(res.coeffs, n, 1, N * N, N, 1, tw);     // axis 1
    detail::dft_axis(res.coeffs, n, N, N, N * N, N, tw);     // axis 2
    detail::dft_axis(res.coeffs, n, N * N, 1, 0, N * N, tw); // axis 3
    if (centered) {
        const int sh = n / 2;
        std::vector<std::complex<double>> c(res.coeffs.size());
        for (int k = 0; k < n; ++k) {
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < n; ++i) {
                    const std::size_t dst = ((i + sh) % n) + N * (((j + sh) % n) + N * ((k + sh) % n));
                    c[dst] = res.coeffs[i + N * (j + N * k)];
                }
            }
        }
        res.coeffs = std::move(c);
    }
    return res;
}

/// DFT of one channel of a single-sample tensor with cubic spatial shape.
inline SpectrumResult dft3(const Tensor4& t, int channel = 0, bool centered = true)
{
    if (!(t.s.n1 == t.s.n2 && t.s.n2 == t.s.n3)) {
        throw DimensionError("dft3: non-cubic input " + t.s.str());
    }
    detail::require_dims(channel >= 0 && channel < t.c && t.batch == 1, "dft3: bad channel or batched input");
    return dft3(std::vector<double>(t.slice(channel), t.slice(channel) + t.spatial()), centered);
}

// ---------------------------------------------------------------------------
// Frequency shells
// ---------------------------------------------------------------------------

inline constexpr int shell_count = 4;

/// Shell of a frequency vector: rho = |k| / (N/2) in [0,.25), [.25,.5), [.5,.75), [.75, inf).
inline int shell_of(const SpectrumResult& s, int i, int j, int k)
{
    const double f1 = s.frequency(i), f2 = s.frequency(j), f3 = s.frequency(k);
    const double rho = std::sqrt(f1 * f1 + f2 * f2 + f3 * f3) / (0.5 * s.n);
    return std::min(shell_count - 1, static_cast<int>(rho / 0.25));
}

struct ShellStats {
    std::array<double, shell_count> energy_fraction{}; ///< share of sum |F|^2
    std::array<double, shell_count> mean_magnitude{};  ///< mean |F| over the shell's modes
    std::array<std::size_t, shell_count> modes{};

    /// Coefficient of variation of the shell mean magnitudes.
    double flatness_cv() const
    {
        double m = 0.0;
        for (double v : mean_magnitude) {
            m += v;
        }
        m /= shell_count;
        double var = 0.0;
        for (double v : mean_magnitude) {
            var += (v - m) * (v - m);
        }
        return std::sqrt(var / shell_count) / m;
    }
};

inline ShellStats shell_stats(const SpectrumResult& s)
{
    ShellStats st;
    double total = 0.0;
    std::array<double, shell_count> mag{};
    for (int k = 0; k < s.n; ++k) {
        for (int j = 0; j < s.n; ++j) {
            for (int i = 0; i < s.n; ++i) {
                const int sh = shell_of(s, i, j, k);
                const double a = std::abs(s.at(i, j, k));
                st.energy_fraction[sh] += a * a;
                mag[sh] += a;
                ++st.modes[sh];
                total += a * a;
            }
        }
    }
    for (int sh = 0; sh < shell_count; ++sh) {
        st.energy_fraction[sh] /= total;
        st.mean_magnitude[sh] = st.modes[sh] ? mag[sh] / static_cast<double>(st.modes[sh]) : 0.0;
    }
    return st;
}

/// Shell statistics of a set of vectors: energy fractions and magnitudes averaged over the set.
inline ShellStats shell_stats(const std::vector<Vector>& vs)
{
    detail::require_dims(!vs.empty(), "shell_stats: empty set");
    ShellStats acc;
    for (const Vector& v : vs) {
        const ShellStats s = shell_stats(dft3(v));
        for (int sh = 0; sh < shell_count; ++sh) {
            acc.energy_fraction[sh] += s.energy_fraction[sh] / static_cast<double>(vs.size());
            acc.mean_magnitude[sh] += s.mean_magnitude[sh] / static_cast<double>(vs.size());
            acc.modes[sh] = s.modes[sh];
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Smallest singular triplets
// ---------------------------------------------------------------------------

struct SvdTriplet {
    double sigma = 0.0;
    Vector u; ///< left vector, A v = sigma u
    Vector v; ///< right vector
    bool converged = false;
};

struct SvdTriplets {
    std::vector<SvdTriplet> triplets; ///< ascending sigma
    bool complete = true;             ///< false when some triplet missed the tolerance
    double sigma_max = 0.0;           ///< power-iteration estimate
};

struct SvdOptions {
    double tol = 1e-8;       ///< on ||A^T A v - sigma^2 v|| / sigma_max^2
    int max_iterations = 0;  ///< Lanczos steps per triplet; 0: matrix dimension
    int power_iterations = 200;
    std::uint64_t seed = 17;
};

namespace detail {

inline Vector normal_times(const CsrMatrix& A, const Vector& x) { return spmv_transpose(A, spmv(A, x)); }

/// Two passes of Gram-Schmidt against the union of the given orthonormal sets.
inline void orthogonalize(Vector& w, const std::vector<Vector>& a, const std::vector<Vector>& b = {})
{
    for (int pass = 0; pass < 2; ++pass) {
        for (const Vector& q : a) {
            axpy(-dot(w, q), q, w);
        }
        for (const Vector& q : b) {
            axpy(-dot(w, q), q, w);
        }
    }
}

} // namespace detail

/// The `count` smallest singular triplets of A.
///
/// Lanczos with full reorthogonalization on c I - A^T A, c = 1.01 sigma_max^2,
/// extracting one triplet per run and deflating it from later runs.
inline SvdTriplets smallest_singular_triplets(const CsrMatrix& A, int count, const SvdOptions& opt = {})
{
    if (count < 1 || count > 10) {
        throw std::invalid_argument("smallest_singular_triplets: count must be in [1, 10]");
    }
    const int n = A.cols;
    detail::require_dims(count <= n, "smallest_singular_triplets: count exceeds the matrix dimension");
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    auto random_unit = [&] {
        Vector x(n);
        for (double& v : x) {
            v = nd(rng);
        }
        return normalized(x);
    };

    SvdTriplets out;
    Vector x = random_unit();
    double lmax = 0.0;
    for (int it = 0; it < opt.power_iterations; ++it) {
        Vector y = detail::normal_times(A, x);
        const double ny = norm2(y);
        if (!(ny > 0.0)) {
            break;
        }
        const double prev = lmax;
        lmax = dot(x, y);
        x = (1.0 / ny) * y;
        if (std::abs(lmax - prev) <= 1e-12 * lmax) {
            break;
        }
    }
    out.sigma_max = std::sqrt(std::max(lmax, 0.0));
    if (!(lmax > 0.0)) {
        // A = 0: every vector is singular with sigma = 0
        for (int c = 0; c < count; ++c) {
            Vector e(n, 0.0);
            e[c] = 1.0;
            out.triplets.push_back({0.0, Vector(A.rows, 0.0), e, true});
        }
        return out;
    }
    const double shift = 1.01 * lmax;
    const int budget = opt.max_iterations > 0 ? opt.max_iterations : n;
    std::vector<Vector> found;

    for (int c = 0; c < count; ++c) {
        std::vector<Vector> Q;
        std::vector<double> alpha, beta;
        Vector q = random_unit();
        detail::orthogonalize(q, found);
        q = normalized(q);
        Vector best_v;
        double best_res = std::numeric_limits<double>::infinity();
        const int max_steps = std::min(budget, n - static_cast<int>(found.size()));
        for (int j = 0; j < max_steps; ++j) {
            Q.push_back(q);
            Vector w = shift * q - detail::normal_times(A, q);
            alpha.push_back(dot(w, q));
            detail::orthogonalize(w, Q, found);
            const double b = norm2(w);
            const int m = static_cast<int>(Q.size());
            const bool last = j + 1 == max_steps || !(b > 1e-13 * shift);
            if (m % 10 == 0 || last) {
                Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
                for (int i = 0; i < m; ++i) {
                    T(i, i) = alpha[i];
                    if (i + 1 < m) {
                        T(i, i + 1) = T(i + 1, i) = beta[i];
                    }
                }
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
                const Eigen::VectorXd y = es.eigenvectors().col(m - 1);
                Vector v(n, 0.0);
                for (int i = 0; i < m; ++i) {
                    axpy(y(i), Q[i], v);
                }
                v = normalized(v);
                const Vector av = detail::normal_times(A, v);
                const double theta = dot(v, av);
                Vector r = av;
                axpy(-theta, v, r);
                const double res = norm2(r) / lmax;
                if (res < best_res) {
                    best_res = res;
                    best_v = v;
                }
                if (res <= opt.tol) {
                    break;
                }
            }
            if (last) {
                break;
            }
            beta.push_back(b);
            q = (1.0 / b) * w;
        }
        SvdTriplet t;
        t.v = best_v;
        t.converged = best_res <= opt.tol;
        const Vector av = spmv(A, t.v);
        t.sigma = norm2(av);
        if (t.sigma > 1e-14 * out.sigma_max) {
            t.u = (1.0 / t.sigma) * av;
        }
        else {
            t.u = A.rows == n ? t.v : Vector(A.rows, 0.0);
        }
        out.complete = out.complete && t.converged;
        found.push_back(t.v);
        out.triplets.push_back(std::move(t));
    }
    std::stable_sort(out.triplets.begin(), out.triplets.end(),
                     [](const SvdTriplet& a, const SvdTriplet& b) { return a.sigma < b.sigma; });
    return out;
}

// ---------------------------------------------------------------------------
// Frequency-content report
// ---------------------------------------------------------------------------

/// log10 |F| on the (k2, k3) plane through k1 = 0 of a centered spectrum,
/// averaged in magnitude over the given vectors. Rows are k2, columns k3.
inline std::vector<std::vector<double>> cross_section_log10(const std::vector<Vector>& vs)
{
    detail::require_dims(!vs.empty(), "cross_section_log10: empty set");
    std::vector<std::vector<double>> acc;
    for (const Vector& v : vs) {
        const SpectrumResult s = dft3(v, true);
        if (acc.empty()) {
            acc.assign(s.n, std::vector<double>(s.n, 0.0));
        }
        const int i0 = s.n / 2;
        for (int j = 0; j < s.n; ++j) {
            for (int k = 0; k < s.n; ++k) {
                acc[j][k] += std::abs(s.at(i0, j, k)) / static_cast<double>(vs.size());
            }
        }
    }
    for (auto& row : acc) {
        for (double& v : row) {
            v = std::log10(std::max(v, 1e-300));
        }
    }
    return acc;
}

struct SpectrumColumn {
    std::string name;
    std::vector<Vector> vectors;
    ShellStats stats;
};

struct SpectrumReport {
    std::vector<SpectrumColumn> columns;
    std::vector<std::filesystem::path> files;
};

/// Six columns: near-null vectors of K00, of 2 pi eps M00 and of C, then the
/// normalized physics rhs, the Krylov set and the random set. Columns whose
/// vectors are missing are skipped. CSVs are written when `out_dir` is non-empty.
inline SpectrumReport kernel_spectrum_report(const CoupledSystem& s, const GraphRecord& record,
                                             const std::vector<Vector>& krylov_set,
                                             const std::vector<Vector>& random_set,
                                             const std::filesystem::path& out_dir = {}, int null_count = 3)
{
    SpectrumReport rep;
    auto null_vectors = [&](const CsrMatrix& A) {
        std::vector<Vector> vs;
        for (auto& t : smallest_singular_triplets(A, null_count).triplets) {
            vs.push_back(std::move(t.v));
        }
        return vs;
    };
    rep.columns.push_back({"I_K00_null", null_vectors(s.K00), {}});
    rep.columns.push_back({"II_M00_null", null_vectors(scaled(s.M00, s.weight())), {}});
    rep.columns.push_back({"III_C_null", null_vectors(record.C), {}});
    std::vector<Vector> phys;
    for (const auto& smp : record.samples) {
        if (smp.tag == SampleTag::physics) {
            phys.push_back(smp.v);
        }
    }
    rep.columns.push_back({"IV_rhs", phys, {}});
    rep.columns.push_back({"V_krylov", krylov_set, {}});
    rep.columns.push_back({"VI_random", random_set, {}});
    std::erase_if(rep.columns, [](const SpectrumColumn& c) { return c.vectors.empty(); });
    for (auto& c : rep.columns) {
        c.stats = shell_stats(c.vectors);
    }
    if (out_dir.empty()) {
        return rep;
    }
    std::filesystem::create_directories(out_dir);
    for (const auto& c : rep.columns) {
        const auto path = out_dir / ("spectrum_" + c.name + ".csv");
        std::ofstream os(path);
        for (const auto& row : cross_section_log10(c.vectors)) {
            for (std::size_t k = 0; k < row.size(); ++k) {
                os << (k ? "," : "") << row[k];
            }
            os << '\n';
        }
        rep.files.push_back(path);
    }
    const auto summary = out_dir / "spectrum_shells.csv";
    std::ofstream os(summary);
    os << "column,vectors,energy_0,energy_1,energy_2,energy_3,mean_mag_0,mean_mag_1,mean_mag_2,mean_mag_3,cv\n";
    for (const auto& c : rep.columns) {
        os << c.name << ',' << c.vectors.size();
        for (double e : c.stats.energy_fraction) {
            os << ',' << e;
        }
        for (double m : c.stats.mean_magnitude) {
            os << ',' << m;
        }
        os << ',' << c.stats.flatness_cv() << '\n';
    }
    rep.files.push_back(summary);
    return rep;
}

} // namespace mdp
