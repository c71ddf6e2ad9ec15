#pragma once

// Random streams, Gaussian sampling and the sample covariance.

#include <cstdint>
#include <random>

#include "covlap/error.hpp"
#include "covlap/symmat.hpp"

namespace covlap {

/// All stochastic components draw from a 64-bit Mersenne Twister.
using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives decorrelated seeds from one user seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream for replication r of a seeded experiment.
constexpr std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t r) noexcept { return seed ^ r; }

/// S = X^t X / n, no centering.
inline SymMatrix sample_cov(const DenseMatrix& x) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (n == 0 || p == 0) throw DimensionMismatch("sample_cov: empty data matrix");
    SymMatrix s(p);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = x.row(r);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j <= i; ++j) s.add(i, j, row[i] * row[j]);
    }
    return (1.0 / static_cast<double>(n)) * s;
}

/// n rows i.i.d. N_p(0, Sigma0): X = G L^t with L = chol(Sigma0).
inline DenseMatrix sample_mvn(std::size_t n, const SymMatrix& sigma0, Rng& rng) {
    const auto l = cholesky(sigma0);
    const std::size_t p = sigma0.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix x(n, p);
    Vector g(p);
    for (std::size_t r = 0; r < n; ++r) {
        for (auto& v : g) v = normal(rng);
        auto row = x.row(r);
        for (std::size_t i = 0; i < p; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k <= i; ++k) acc += l(i, k) * g[k];
            row[i] = acc;
        }
    }
    return x;
}

}  // namespace covlap
