#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mdp/error.hpp"

namespace mdp {

using Vector = std::vector<double>;

inline double dot(const Vector& a, const Vector& b)
{
    detail::require_dims(a.size() == b.size(), "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, const Vector& x, Vector& y)
{
    detail::require_dims(x.size() == y.size(), "axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

inline void scale(Vector& x, double alpha)
{
    for (double& v : x) {
        v *= alpha;
    }
}

inline Vector operator-(const Vector& a, const Vector& b)
{
    detail::require_dims(a.size() == b.size(), "vector subtraction: size mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

inline Vector operator+(const Vector& a, const Vector& b)
{
    detail::require_dims(a.size() == b.size(), "vector addition: size mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

inline Vector operator*(double s, const Vector& a)
{
    Vector out(a);
    scale(out, s);
    return out;
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
struct CsrMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ptr{0};
    std::vector<int> col_idx;
    std::vector<double> values;

    std::size_t nnz() const noexcept { return values.size(); }

    /// Entry (i, j), zero when not stored.
    double at(int i, int j) const
    {
        const auto first = col_idx.begin() + row_ptr[i];
        const auto last = col_idx.begin() + row_ptr[i + 1];
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? values[it - col_idx.begin()] : 0.0;
    }

    /// Position of (i, j) in values, or -1.
    int find(int i, int j) const
    {
        const auto first = col_idx.begin() + row_ptr[i];
        const auto last = col_idx.begin() + row_ptr[i + 1];
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? static_cast<int>(it - col_idx.begin()) : -1;
    }

    Vector diagonal() const
    {
        Vector d(std::min(rows, cols), 0.0);
        for (int i = 0; i < static_cast<int>(d.size()); ++i) {
            d[i] = at(i, i);
        }
        return d;
    }

    static CsrMatrix identity(int n)
    {
        CsrMatrix m;
        m.rows = m.cols = n;
        m.row_ptr.resize(n + 1);
        std::iota(m.row_ptr.begin(), m.row_ptr.end(), 0);
        m.col_idx.resize(n);
        std::iota(m.col_idx.begin(), m.col_idx.end(), 0);
        m.values.assign(n, 1.0);
        return m;
    }

    /// Throws DimensionError if the structural invariants do not hold.
    void check() const
    {
        detail::require_dims(rows >= 0 && cols >= 0, "CsrMatrix: negative dims");
        detail::require_dims(row_ptr.size() == static_cast<std::size_t>(rows) + 1, "CsrMatrix: row_ptr length");
        detail::require_dims(row_ptr.front() == 0 && static_cast<std::size_t>(row_ptr.back()) == values.size() &&
                                 col_idx.size() == values.size(),
                             "CsrMatrix: offsets inconsistent with storage");
        for (int i = 0; i < rows; ++i) {
            detail::require_dims(row_ptr[i] <= row_ptr[i + 1], "CsrMatrix: offsets not monotone");
            for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
                detail::require_dims(col_idx[p] >= 0 && col_idx[p] < cols, "CsrMatrix: column out of range");
                if (p > row_ptr[i]) {
                    detail::require_dims(col_idx[p - 1] < col_idx[p], "CsrMatrix: columns not sorted/unique");
                }
            }
        }
    }
};

/// Coordinate accumulator; duplicates are summed on build.
class TripletBuilder {
public:
    TripletBuilder(int rows, int cols) : rows_(rows), cols_(cols) {}

    void add(int i, int j, double v) { entries_.emplace_back(i, j, v); }
    void reserve(std::size_t n) { entries_.reserve(n); }

    CsrMatrix build(bool drop_zeros = false)
    {
        std::stable_sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        CsrMatrix m;
        m.rows = rows_;
        m.cols = cols_;
        m.row_ptr.assign(rows_ + 1, 0);
        for (std::size_t p = 0; p < entries_.size();) {
            const auto [i, j, v0] = entries_[p];
            detail::require_dims(i >= 0 && i < rows_ && j >= 0 && j < cols_, "TripletBuilder: index out of range");
            double v = v0;
            std::size_t q = p + 1;
            while (q < entries_.size() && std::get<0>(entries_[q]) == i && std::get<1>(entries_[q]) == j) {
                v += std::get<2>(entries_[q]);
                ++q;
            }
            if (!(drop_zeros && v == 0.0)) {
                m.col_idx.push_back(j);
                m.values.push_back(v);
                ++m.row_ptr[i + 1];
            }
            p = q;
        }
        for (int i = 0; i < rows_; ++i) {
            m.row_ptr[i + 1] += m.row_ptr[i];
        }
        return m;
    }

private:
    int rows_;
    int cols_;
    std::vector<std::tuple<int, int, double>> entries_;
};

inline void spmv(const CsrMatrix& A, const double* x, double* y)
{
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            s += A.values[p] * x[A.col_idx[p]];
        }
        y[i] = s;
    }
}

inline Vector spmv(const CsrMatrix& A, const Vector& x)
{
    detail::require_dims(x.size() == static_cast<std::size_t>(A.cols),
                         "spmv: matrix has " + std::to_string(A.cols) + " columns, vector has " +
                             std::to_string(x.size()) + " entries");
    Vector y(A.rows);
    spmv(A, x.data(), y.data());
    return y;
}

inline Vector spmv_transpose(const CsrMatrix& A, const Vector& x)
{
    detail::require_dims(x.size() == static_cast<std::size_t>(A.rows), "spmv_transpose: size mismatch");
    Vector y(A.cols, 0.0);
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            y[A.col_idx[p]] += A.values[p] * x[i];
        }
    }
    return y;
}

inline CsrMatrix transpose(const CsrMatrix& A)
{
    CsrMatrix T;
    T.rows = A.cols;
    T.cols = A.rows;
    T.row_ptr.assign(A.cols + 1, 0);
    for (int c : A.col_idx) {
        ++T.row_ptr[c + 1];
    }
    for (int j = 0; j < A.cols; ++j) {
        T.row_ptr[j + 1] += T.row_ptr[j];
    }
    T.col_idx.resize(A.nnz());
    T.values.resize(A.nnz());
    std::vector<int> next(T.row_ptr.begin(), T.row_ptr.end() - 1);
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            const int dst = next[A.col_idx[p]]++;
            T.col_idx[dst] = i;
            T.values[dst] = A.values[p];
        }
    }
    return T;
}

/// alpha*A + beta*B on the union pattern.
inline CsrMatrix add(const CsrMatrix& A, const CsrMatrix& B, double alpha = 1.0, double beta = 1.0)
{
    detail::require_dims(A.rows == B.rows && A.cols == B.cols, "add: shape mismatch");
    CsrMatrix C;
    C.rows = A.rows;
    C.cols = A.cols;
    C.row_ptr.assign(A.rows + 1, 0);
    for (int i = 0; i < A.rows; ++i) {
        int p = A.row_ptr[i];
        int q = B.row_ptr[i];
        const int pe = A.row_ptr[i + 1];
        const int qe = B.row_ptr[i + 1];
        while (p < pe || q < qe) {
            const int ja = p < pe ? A.col_idx[p] : A.cols;
            const int jb = q < qe ? B.col_idx[q] : B.cols;
            if (ja == jb) {
                C.col_idx.push_back(ja);
                C.values.push_back(alpha * A.values[p++] + beta * B.values[q++]);
            }
            else if (ja < jb) {
                C.col_idx.push_back(ja);
                C.values.push_back(alpha * A.values[p++]);
            }
            else {
                C.col_idx.push_back(jb);
                C.values.push_back(beta * B.values[q++]);
            }
        }
        C.row_ptr[i + 1] = static_cast<int>(C.values.size());
    }
    return C;
}

inline CsrMatrix scaled(CsrMatrix A, double s)
{
    for (double& v : A.values) {
        v *= s;
    }
    return A;
}

/// Sparse product A*B (row-by-row accumulation).
inline CsrMatrix multiply(const CsrMatrix& A, const CsrMatrix& B)
{
    detail::require_dims(A.cols == B.rows, "multiply: inner dimension mismatch");
    CsrMatrix C;
    C.rows = A.rows;
    C.cols = B.cols;
    C.row_ptr.assign(A.rows + 1, 0);
    std::vector<double> acc(B.cols, 0.0);
    std::vector<int> marker(B.cols, -1);
    std::vector<int> pattern;
    for (int i = 0; i < A.rows; ++i) {
        pattern.clear();
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            const int k = A.col_idx[p];
            const double a = A.values[p];
            for (int q = B.row_ptr[k]; q < B.row_ptr[k + 1]; ++q) {
                const int j = B.col_idx[q];
                if (marker[j] != i) {
                    marker[j] = i;
                    acc[j] = 0.0;
                    pattern.push_back(j);
                }
                acc[j] += a * B.values[q];
            }
        }
        std::sort(pattern.begin(), pattern.end());
        for (int j : pattern) {
            C.col_idx.push_back(j);
            C.values.push_back(acc[j]);
        }
        C.row_ptr[i + 1] = static_cast<int>(C.values.size());
    }
    return C;
}

inline Eigen::MatrixXd to_dense(const CsrMatrix& A)
{
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            D(i, A.col_idx[p]) = A.values[p];
        }
    }
    return D;
}

inline CsrMatrix from_dense(const Eigen::MatrixXd& D, double drop = 0.0)
{
    TripletBuilder tb(static_cast<int>(D.rows()), static_cast<int>(D.cols()));
    for (int i = 0; i < D.rows(); ++i) {
        for (int j = 0; j < D.cols(); ++j) {
            if (std::abs(D(i, j)) > drop) {
                tb.add(i, j, D(i, j));
            }
        }
    }
    return tb.build();
}

inline Eigen::SparseMatrix<double> to_eigen(const CsrMatrix& A)
{
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(A.nnz());
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            t.emplace_back(i, A.col_idx[p], A.values[p]);
        }
    }
    Eigen::SparseMatrix<double> S(A.rows, A.cols);
    S.setFromTriplets(t.begin(), t.end());
    return S;
}

/// Largest |A_ij - A_ji| relative to the largest |A_ij|.
inline double symmetry_defect(const CsrMatrix& A)
{
    detail::require_dims(A.rows == A.cols, "symmetry_defect: matrix not square");
    double scale_ = 0.0;
    double defect = 0.0;
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            scale_ = std::max(scale_, std::abs(A.values[p]));
            defect = std::max(defect, std::abs(A.values[p] - A.at(A.col_idx[p], i)));
        }
    }
    return scale_ > 0.0 ? defect / scale_ : 0.0;
}

inline void write_matrix_market(std::ostream& os, const CsrMatrix& A)
{
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << A.rows << ' ' << A.cols << ' ' << A.nnz() << '\n';
    os.precision(17);
    for (int i = 0; i < A.rows; ++i) {
        for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            os << i + 1 << ' ' << A.col_idx[p] + 1 << ' ' << A.values[p] << '\n';
        }
    }
}

} // namespace mdp
