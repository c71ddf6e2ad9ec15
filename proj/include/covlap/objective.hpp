#pragma once

// Prior hyperparameters, the edge-inclusion vector and the penalized
// negative log-likelihood r_Z(Sigma) = log|Sigma| + tr(S Sigma^{-1}) + pen.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "covlap/error.hpp"
#include "covlap/symmat.hpp"

namespace covlap {

struct Hyperparams {
    double q = 0.5;          ///< edge inclusion probability, in (0,1)
    double v = 1.0;          ///< slab standard deviation
    double lambda = 1.0;     ///< diagonal exponential prior, rate lambda/2
    double zero_threshold = 0.001;
    double bcd_tol = 1e-6;
    int bcd_max_iter = 1000;

    /// Defaults for dimension p: q = log(p)/p^2, v = 1, lambda = 1.
    static Hyperparams defaults_for(std::size_t p) {
        Hyperparams h;
        if (p >= 2) {
            const double pd = static_cast<double>(p);
            h.q = std::log(pd) / (pd * pd);
        }
        return h;
    }

    void validate() const {
        if (!(q > 0.0 && q < 1.0)) throw Error("hyperparameter q must lie in (0,1)");
        if (!(v > 0.0)) throw Error("hyperparameter v must be > 0");
        if (!(lambda > 0.0)) throw Error("hyperparameter lambda must be > 0");
        if (!(zero_threshold >= 0.0)) throw Error("zero_threshold must be >= 0");
        if (!(bcd_tol > 0.0)) throw Error("bcd tol must be > 0");
        if (bcd_max_iter < 1) throw Error("bcd max_iter must be >= 1");
    }
};

/// Binary inclusion vector over unordered pairs i<j, canonical order
/// (0,1),(0,2),...,(0,p-1),(1,2),...
class EdgeSet {
public:
    EdgeSet() = default;
    explicit EdgeSet(std::size_t dim) : dim_(dim), bits_(dim * (dim - 1) / 2, 0) {}
    EdgeSet(std::size_t dim, std::vector<std::uint8_t> bits) : dim_(dim), bits_(std::move(bits)) {
        if (bits_.size() != pair_count(dim)) throw DimensionMismatch("EdgeSet: wrong bit count");
        for (auto& b : bits_) b = b ? 1 : 0;
    }

    static EdgeSet full(std::size_t dim) {
        EdgeSet z(dim);
        std::fill(z.bits_.begin(), z.bits_.end(), std::uint8_t{1});
        return z;
    }

    static constexpr std::size_t pair_count(std::size_t dim) noexcept { return dim * (dim - 1) / 2; }

    /// Canonical index of pair (i,j), i != j.
    static std::size_t index(std::size_t dim, std::size_t i, std::size_t j) noexcept {
        if (i > j) std::swap(i, j);
        return i * (2 * dim - i - 1) / 2 + (j - i - 1);
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool operator[](std::size_t k) const noexcept { return bits_[k] != 0; }
    bool has(std::size_t i, std::size_t j) const noexcept { return i != j && bits_[index(dim_, i, j)] != 0; }

    void set(std::size_t k, bool on) noexcept { bits_[k] = on ? 1 : 0; }
    void set(std::size_t i, std::size_t j, bool on) noexcept { bits_[index(dim_, i, j)] = on ? 1 : 0; }
    void flip(std::size_t k) noexcept { bits_[k] ^= 1; }

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    std::string to_string() const {
        std::string s(bits_.size(), '0');
        for (std::size_t k = 0; k < bits_.size(); ++k)
            if (bits_[k]) s[k] = '1';
        return s;
    }

    friend bool operator==(const EdgeSet&, const EdgeSet&) = default;
    friend auto operator<=>(const EdgeSet& a, const EdgeSet& b) { return a.bits_ <=> b.bits_; }

private:
    std::size_t dim_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline void check_dims(const SymMatrix& sigma, const EdgeSet& z) {
    if (sigma.dim() != z.dim())
        throw DimensionMismatch("matrix dimension " + std::to_string(sigma.dim()) +
                                " does not match edge set dimension " + std::to_string(z.dim()));
}

/// (1/(n v^2)) sum_{z_ij=1} sigma_ij^2 + (lambda/n) sum_i sigma_ii, each
/// unordered pair counted once.
inline double penalty(const SymMatrix& sigma, const EdgeSet& z, const Hyperparams& h, double n) {
    check_dims(sigma, z);
    const std::size_t p = sigma.dim();
    double off = 0.0;
    double tr = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        tr += sigma(i, i);
        for (std::size_t j = i + 1; j < p; ++j)
            if (z.has(i, j)) off += sigma(i, j) * sigma(i, j);
    }
    return off / (n * h.v * h.v) + h.lambda / n * tr;
}

inline constexpr double kStructureTolerance = 1e-12;

/// Throws StructureViolation if some entry with z_ij = 0 exceeds 1e-12.
inline void check_structure(const SymMatrix& sigma, const EdgeSet& z) {
    check_dims(sigma, z);
    for (std::size_t i = 0; i < sigma.dim(); ++i)
        for (std::size_t j = i + 1; j < sigma.dim(); ++j)
            if (!z.has(i, j) && std::abs(sigma(i, j)) > kStructureTolerance)
                throw StructureViolation("entry (" + std::to_string(i) + "," + std::to_string(j) +
                                         ") is constrained to zero");
}

/// log|Sigma| + tr(S Sigma^{-1}), no structure or penalty terms.
inline double neg_loglik_core(const SymMatrix& sigma, const SymMatrix& s) {
    if (sigma.dim() != s.dim()) throw DimensionMismatch("Sigma and S dimensions differ");
    const auto f = cholesky(sigma);
    // tr(S Sigma^{-1}) = sum_k e_k^t S Sigma^{-1} e_k, via columns of Sigma^{-1} S
    const std::size_t p = sigma.dim();
    double tr = 0.0;
    Vector col(p);
    for (std::size_t k = 0; k < p; ++k) {
        for (std::size_t i = 0; i < p; ++i) col[i] = s(i, k);
        f.solve(col);
        tr += col[k];
    }
    return log_det(f) + tr;
}

inline double objective_r(const SymMatrix& sigma, const EdgeSet& z, const SymMatrix& s,
                          const Hyperparams& h, double n) {
    check_structure(sigma, z);
    return neg_loglik_core(sigma, s) + penalty(sigma, z, h, n);
}

/// #Z * log(q / ((1-q) sqrt(2 pi) v))
inline double log_edge_factor(const EdgeSet& z, const Hyperparams& h) {
    const double per_edge = std::log(h.q / ((1.0 - h.q) * std::sqrt(2.0 * std::numbers::pi) * h.v));
    return static_cast<double>(z.count()) * per_edge;
}

}  // namespace covlap
