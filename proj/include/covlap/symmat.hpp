#pragma once

// Dense symmetric linear algebra: packed symmetric storage, Cholesky,
// log-determinant, SPD inverse, power-iteration spectral norm.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "covlap/error.hpp"

namespace covlap {

using Vector = std::vector<double>;

/// Dense symmetric p x p matrix. Each unordered pair (i,j) owns exactly one
/// slot of a packed lower triangle, so symmetry holds by construction.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(std::size_t dim, double fill = 0.0)
        : dim_(dim), data_(dim * (dim + 1) / 2, fill) {
        if (dim == 0) throw DimensionMismatch("SymMatrix dimension must be >= 1");
    }

    static SymMatrix identity(std::size_t dim) {
        SymMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i) m.set(i, i, 1.0);
        return m;
    }

    static SymMatrix diagonal(std::span<const double> d) {
        SymMatrix m(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m.set(i, i, d[i]);
        return m;
    }

    /// Builds from a row-major square array, reading only the lower triangle.
    static SymMatrix from_rows(std::size_t dim, std::span<const double> rows) {
        if (rows.size() != dim * dim) throw DimensionMismatch("from_rows: need dim*dim values");
        SymMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j <= i; ++j) m.set(i, j, rows[i * dim + j]);
        return m;
    }

    std::size_t dim() const noexcept { return dim_; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[slot(i, j)]; }

    void set(std::size_t i, std::size_t j, double v) noexcept { data_[slot(i, j)] = v; }

    void add(std::size_t i, std::size_t j, double v) noexcept { data_[slot(i, j)] += v; }

    /// Packed storage, row-major lower triangle.
    std::span<const double> packed() const noexcept { return data_; }

    /// Principal submatrix on the given index list (in list order).
    SymMatrix sub(std::span<const std::size_t> idx) const {
        SymMatrix m(idx.size());
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b <= a; ++b) m.set(a, b, (*this)(idx[a], idx[b]));
        return m;
    }

    Vector diag() const {
        Vector d(dim_);
        for (std::size_t i = 0; i < dim_; ++i) d[i] = (*this)(i, i);
        return d;
    }

    /// y = A x
    Vector multiply(std::span<const double> x) const {
        assert(x.size() == dim_);
        Vector y(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i) {
            const double* row = data_.data() + i * (i + 1) / 2;
            double acc = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                acc += row[j] * x[j];
                y[j] += row[j] * x[i];
            }
            y[i] += acc + row[i] * x[i];
        }
        return y;
    }

    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
        check_same(a, b);
        SymMatrix r = a;
        for (std::size_t k = 0; k < r.data_.size(); ++k) r.data_[k] -= b.data_[k];
        return r;
    }

    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
        check_same(a, b);
        SymMatrix r = a;
        for (std::size_t k = 0; k < r.data_.size(); ++k) r.data_[k] += b.data_[k];
        return r;
    }

    friend SymMatrix operator*(double s, const SymMatrix& a) {
        SymMatrix r = a;
        for (double& v : r.data_) v *= s;
        return r;
    }

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    static std::size_t slot(std::size_t i, std::size_t j) noexcept {
        if (i < j) std::swap(i, j);
        return i * (i + 1) / 2 + j;
    }

    static void check_same(const SymMatrix& a, const SymMatrix& b) {
        if (a.dim() != b.dim()) throw DimensionMismatch("SymMatrix arithmetic on different dimensions");
    }

    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// General row-major dense matrix (data matrices, scratch blocks).
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Lower-triangular Cholesky factor L with A = L L^t.
class CholeskyFactor {
public:
    CholeskyFactor() = default;
    CholeskyFactor(std::size_t dim, std::vector<double> packed_lower)
        : dim_(dim), l_(std::move(packed_lower)) {}

    std::size_t dim() const noexcept { return dim_; }

    double operator()(std::size_t i, std::size_t j) const noexcept {
        return j > i ? 0.0 : l_[i * (i + 1) / 2 + j];
    }

    /// Solves L y = b in place.
    void solve_lower(std::span<double> b) const noexcept {
        for (std::size_t i = 0; i < dim_; ++i) {
            const double* row = l_.data() + i * (i + 1) / 2;
            double acc = b[i];
            for (std::size_t k = 0; k < i; ++k) acc -= row[k] * b[k];
            b[i] = acc / row[i];
        }
    }

    /// Solves L^t x = y in place.
    void solve_upper(std::span<double> y) const noexcept {
        for (std::size_t i = dim_; i-- > 0;) {
            double acc = y[i];
            for (std::size_t k = i + 1; k < dim_; ++k) acc -= l_[k * (k + 1) / 2 + i] * y[k];
            y[i] = acc / l_[i * (i + 1) / 2 + i];
        }
    }

    /// Solves A x = b in place.
    void solve(std::span<double> b) const noexcept {
        solve_lower(b);
        solve_upper(b);
    }

    SymMatrix reconstruct() const {
        SymMatrix a(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k <= j; ++k) acc += (*this)(i, k) * (*this)(j, k);
                a.set(i, j, acc);
            }
        return a;
    }

private:
    std::size_t dim_ = 0;
    std::vector<double> l_;
};

inline double max_abs(const SymMatrix& a) noexcept {
    double m = 0.0;
    for (double v : a.packed()) m = std::max(m, std::abs(v));
    return m;
}

/// Cholesky factorization. A pivot d_j <= dim * eps * max|A| (or non-finite)
/// raises NotPositiveDefinite.
inline CholeskyFactor cholesky(const SymMatrix& a) {
    const std::size_t p = a.dim();
    const double threshold =
        static_cast<double>(p) * std::numeric_limits<double>::epsilon() * max_abs(a);
    std::vector<double> l(p * (p + 1) / 2, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double* rowj = l.data() + j * (j + 1) / 2;
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= rowj[k] * rowj[k];
        if (!(d > threshold) || !std::isfinite(d))
            throw NotPositiveDefinite("cholesky: nonpositive pivot at column " + std::to_string(j));
        const double ljj = std::sqrt(d);
        rowj[j] = ljj;
        for (std::size_t i = j + 1; i < p; ++i) {
            double* rowi = l.data() + i * (i + 1) / 2;
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= rowi[k] * rowj[k];
            rowi[j] = s / ljj;
        }
    }
    return CholeskyFactor(p, std::move(l));
}

inline bool is_positive_definite(const SymMatrix& a) {
    try {
        (void)cholesky(a);
        return true;
    } catch (const NotPositiveDefinite&) {
        return false;
    }
}

inline double log_det(const CholeskyFactor& f) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < f.dim(); ++i) s += std::log(f(i, i));
    return 2.0 * s;
}

inline SymMatrix inverse_from_factor(const CholeskyFactor& f) {
    const std::size_t p = f.dim();
    // columns of L^{-1}, stored row-major as linv(i,j) for i >= j
    DenseMatrix linv(p, p, 0.0);
    Vector e(p);
    for (std::size_t j = 0; j < p; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        f.solve_lower(e);
        for (std::size_t i = j; i < p; ++i) linv(i, j) = e[i];
    }
    // A^{-1} = L^{-t} L^{-1}
    SymMatrix inv(p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (std::size_t k = i; k < p; ++k) acc += linv(k, i) * linv(k, j);
            inv.set(i, j, acc);
        }
    return inv;
}

inline SymMatrix inverse_pd(const SymMatrix& a) { return inverse_from_factor(cholesky(a)); }

/// Frobenius norm over all p^2 positions and the max-abs entry.
struct MatrixNorms {
    double frob;
    double max_abs;
};

inline MatrixNorms norms(const SymMatrix& a) noexcept {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = a(i, j);
            sq += (i == j ? 1.0 : 2.0) * v * v;
        }
    return {std::sqrt(sq), max_abs(a)};
}

struct SpectralNormResult {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline SpectralNormResult power_iterate_squared(const SymMatrix& a, Vector x, double tol, int max_iter) {
    auto normalize = [](Vector& v) {
        const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (n > 0.0)
            for (double& c : v) c /= n;
        return n;
    };
    normalize(x);
    SpectralNormResult r;
    double prev = -1.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vector ax = a.multiply(x);
        // Rayleigh quotient of A^2 at unit x is |Ax|^2
        const double mu = std::inner_product(ax.begin(), ax.end(), ax.begin(), 0.0);
        r.value = std::sqrt(mu);
        r.iterations = it;
        if (mu == 0.0 || (prev >= 0.0 && std::abs(mu - prev) <= tol * mu)) {
            r.converged = true;
            return r;
        }
        prev = mu;
        x = a.multiply(ax);
        if (normalize(x) == 0.0) {
            r.converged = true;
            return r;
        }
    }
    return r;
}

}  // namespace detail

/// Largest |eigenvalue| of a symmetric matrix by power iteration on A*A.
///
/// Starts from the normalized all-ones vector. Because that vector can be
/// orthogonal to the dominant eigenspace (e.g. [[1,-1],[-1,1]]), a second run
/// starts from a fixed alternating-sign ramp and the larger estimate wins.
inline SpectralNormResult spectral_norm(const SymMatrix& a, double tol = 1e-12, int max_iter = 20000) {
    const std::size_t p = a.dim();
    auto first = detail::power_iterate_squared(a, Vector(p, 1.0), tol, max_iter);
    if (p == 1) return first;
    Vector alt(p);
    for (std::size_t i = 0; i < p; ++i)
        alt[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + static_cast<double>(i) / static_cast<double>(p));
    auto second = detail::power_iterate_squared(a, std::move(alt), tol, max_iter);
    SpectralNormResult best = second.value > first.value ? second : first;
    best.converged = first.converged && second.converged;
    best.iterations = first.iterations + second.iterations;
    return best;
}

struct EigenRange {
    double min;
    double max;
};

/// Extreme eigenvalues through two shifted spectral norms: with c >= |A|_2
/// (the max absolute row sum), lambda_max = |A + cI|_2 - c and
/// lambda_min = c - |cI - A|_2.
inline EigenRange extreme_eigenvalues(const SymMatrix& a, double tol = 1e-14, int max_iter = 200000) {
    double c = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < a.dim(); ++j) row += std::abs(a(i, j));
        c = std::max(c, row);
    }
    SymMatrix shifted_up = a;
    SymMatrix shifted_down = -1.0 * a;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        shifted_up.add(i, i, c);
        shifted_down.add(i, i, c);
    }
    const double top = spectral_norm(shifted_up, tol, max_iter).value - c;
    const double bottom = c - spectral_norm(shifted_down, tol, max_iter).value;
    return {bottom, top};
}

}  // namespace covlap
