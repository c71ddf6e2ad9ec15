#pragma once

// Laplace approximation of the marginal posterior of a covariance structure:
//
//   log pi*(Z | X) = #Z log(q / ((1-q) sqrt(2 pi) v)) - (n/2) r_Z(Sigma*_Z)
//                    + ((p + #Z)/2) log(4 pi / n) - (1/2) log|H|
//
// where Sigma*_Z is the BCD mode and H the Hessian of r_Z over the free
// coordinates (all diagonal entries, then the included pairs).

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "covlap/bcd.hpp"
#include "covlap/objective.hpp"
#include "covlap/symmat.hpp"

namespace covlap {

/// Free coordinate of a structured covariance: (i,i) or an included (i,j), i<j.
struct Coordinate {
    std::size_t i;
    std::size_t j;
    bool diagonal() const noexcept { return i == j; }
    friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

/// All (i,i) in order, then every (i,j) with z_ij = 1 in canonical pair order.
inline std::vector<Coordinate> free_coordinates(const EdgeSet& z) {
    const std::size_t p = z.dim();
    std::vector<Coordinate> coords;
    coords.reserve(p + z.count());
    for (std::size_t i = 0; i < p; ++i) coords.push_back({i, i});
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j)
            if (z.has(i, j)) coords.push_back({i, j});
    return coords;
}

struct HessianMatrix {
    SymMatrix entries;
    std::vector<Coordinate> index_map;

    std::size_t order() const noexcept { return index_map.size(); }
};

/// Hessian of r_Z at Sigma* over the free coordinates, with Omega = Sigma*^{-1}
/// and U = Omega S Omega.
inline HessianMatrix analytic_hessian(const SymMatrix& sigma_star, const SymMatrix& s, const EdgeSet& z,
                                      double n, double v) {
    check_dims(sigma_star, z);
    if (s.dim() != sigma_star.dim()) throw DimensionMismatch("analytic_hessian: S dimension");
    const std::size_t p = s.dim();
    const SymMatrix w = inverse_pd(sigma_star);

    // U = W S W
    DenseMatrix ws(p, p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            double acc = 0.0;
            for (std::size_t l = 0; l < p; ++l) acc += w(i, l) * s(l, k);
            ws(i, k) = acc;
        }
    SymMatrix u(p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < p; ++k) acc += ws(i, k) * w(k, j);
            u.set(i, j, acc);
        }

    HessianMatrix hm{SymMatrix(p + z.count()), free_coordinates(z)};
    const double slab = 2.0 / (n * v * v);
    const auto& idx = hm.index_map;
    for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            // b <= a and diagonal coordinates come first, so `b` is diagonal
            // whenever `a` is.
            const auto [i, j] = idx[a];
            const auto [l, m] = idx[b];
            double val;
            if (idx[a].diagonal()) {
                val = -w(i, l) * w(i, l) + 2.0 * u(i, l) * w(i, l);
            } else if (idx[b].diagonal()) {
                val = 2.0 * (-w(i, l) * w(j, l) + u(j, l) * w(l, i) + u(l, i) * w(j, l));
            } else {
                val = 2.0 * (-w(i, l) * w(j, m) - w(i, m) * w(j, l) + u(j, l) * w(m, i) + u(j, m) * w(l, i) +
                             u(l, i) * w(j, m) + u(m, i) * w(j, l));
                if (a == b) val += slab;
            }
            hm.entries.set(a, b, val);
        }
    }
    return hm;
}

inline double default_fd_step(const SymMatrix& at) { return 1e-5 * std::max(1.0, max_abs(at)); }

/// Central second differences of f over the free coordinates of Z. Perturbing
/// pair (i,j) moves sigma_ij and sigma_ji together. If a perturbed point
/// raises NotPositiveDefinite the step shrinks by 10x, at most three times.
template <class F>
HessianMatrix fd_hessian_of(F&& f, const SymMatrix& at, const EdgeSet& z, double step) {
    check_dims(at, z);
    if (!(step > 0.0)) throw Error("fd_hessian: step must be > 0");
    const auto coords = free_coordinates(z);
    const std::size_t d = coords.size();
    for (int attempt = 0;; ++attempt) {
        try {
            HessianMatrix hm{SymMatrix(d), coords};
            auto eval = [&](std::size_t a, double da, std::size_t b, double db) {
                SymMatrix x = at;
                x.add(coords[a].i, coords[a].j, da);
                x.add(coords[b].i, coords[b].j, db);
                return static_cast<double>(f(x));
            };
            const double f0 = f(at);
            for (std::size_t a = 0; a < d; ++a) {
                const double fp = eval(a, step, a, 0.0);
                const double fm = eval(a, -step, a, 0.0);
                hm.entries.set(a, a, (fp - 2.0 * f0 + fm) / (step * step));
                for (std::size_t b = 0; b < a; ++b) {
                    const double fpp = eval(a, step, b, step);
                    const double fpm = eval(a, step, b, -step);
                    const double fmp = eval(a, -step, b, step);
                    const double fmm = eval(a, -step, b, -step);
                    hm.entries.set(a, b, (fpp - fpm - fmp + fmm) / (4.0 * step * step));
                }
            }
            return hm;
        } catch (const NotPositiveDefinite&) {
            if (attempt >= 3) throw;
            step *= 0.1;
        }
    }
}

inline HessianMatrix fd_hessian(const SymMatrix& sigma_star, const SymMatrix& s, const EdgeSet& z,
                                const Hyperparams& h, double n, std::optional<double> step = std::nullopt) {
    return fd_hessian_of([&](const SymMatrix& x) { return objective_r(x, z, s, h, n); }, sigma_star, z,
                         step.value_or(default_fd_step(sigma_star)));
}

/// log det of a PD matrix factored after symmetric diagonal equilibration,
/// so the pivot test does not depend on how the coordinates are scaled.
inline double log_det_equilibrated(const SymMatrix& a) {
    const std::size_t d = a.dim();
    Vector inv_sqrt(d);
    double log_scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!(a(i, i) > 0.0) || !std::isfinite(a(i, i)))
            throw NotPositiveDefinite("nonpositive diagonal at " + std::to_string(i));
        inv_sqrt[i] = 1.0 / std::sqrt(a(i, i));
        log_scale += std::log(a(i, i));
    }
    SymMatrix b(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) b.set(i, j, a(i, j) * inv_sqrt[i] * inv_sqrt[j]);
    return log_det(cholesky(b)) + log_scale;
}

struct ModelScore {
    EdgeSet z;
    double log_prob = -std::numeric_limits<double>::infinity();
    SymMatrix sigma_star;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double hessian_logdet = std::numeric_limits<double>::quiet_NaN();
    bool feasible = false;
    int bcd_sweeps = 0;
    bool bcd_converged = false;
    std::string failure;  ///< reason when infeasible
};

/// The terms of the score that depend on the mode, split out so tests can
/// check the prefactor bookkeeping.
inline double assemble_score(const EdgeSet& z, const Hyperparams& h, double n, double objective,
                             double hessian_logdet) {
    const double d = static_cast<double>(z.dim() + z.count());
    return log_edge_factor(z, h) - 0.5 * n * objective + 0.5 * d * std::log(4.0 * std::numbers::pi / n) -
           0.5 * hessian_logdet;
}

/// Unnormalized Laplace log posterior of structure Z. Never throws for
/// numerical infeasibility: such models score -inf with feasible = false.
inline ModelScore log_model_prob(const EdgeSet& z, const SymMatrix& s, const Hyperparams& h, double n) {
    check_dims(s, z);
    ModelScore ms;
    ms.z = z;
    try {
        auto sol = bcd::solve(s, z, h, n);
        ms.bcd_sweeps = sol.sweeps;
        ms.bcd_converged = sol.converged;
        ms.objective = sol.objective;
        ms.sigma_star = std::move(sol.sigma);
        const auto hm = analytic_hessian(ms.sigma_star, s, z, n, h.v);
        ms.hessian_logdet = log_det_equilibrated(hm.entries);
        ms.log_prob = assemble_score(z, h, n, ms.objective, ms.hessian_logdet);
        ms.feasible = std::isfinite(ms.log_prob);
        if (!ms.feasible) {
            ms.log_prob = -std::numeric_limits<double>::infinity();
            ms.failure = "non-finite score";
        }
    } catch (const NotPositiveDefinite& e) {
        ms.failure = e.what();
    } catch (const NonpositiveU& e) {
        ms.failure = e.what();
    }
    return ms;
}

/// Memoized scores keyed by the exact bit pattern of Z. Chain-local and
/// append-only; not synchronized.
class ScoreCache {
public:
    std::optional<ModelScore> lookup(const EdgeSet& z) const {
        auto it = map_.find(key(z));
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    const ModelScore* find(const EdgeSet& z) const {
        auto it = map_.find(key(z));
        return it == map_.end() ? nullptr : &it->second;
    }

    const ModelScore& insert(ModelScore score) {
        auto k = key(score.z);
        return map_.try_emplace(std::move(k), std::move(score)).first->second;
    }

    std::size_t size() const noexcept { return map_.size(); }

private:
    static std::string key(const EdgeSet& z) {
        const auto& b = z.bits();
        return std::string(b.begin(), b.end());
    }

    std::unordered_map<std::string, ModelScore> map_;
};

}  // namespace covlap
