#pragma once

// Block coordinate descent for the conditional posterior mode
//   min_Sigma  log|Sigma| + tr(S Sigma^{-1}) + pen(Sigma, Z)
// over positive definite Sigma with sigma_ij = 0 wherever z_ij = 0.
//
// Each column j is written as beta = sigma_12 (split into free coordinates
// beta_1 and pinned zeros beta_0) and gamma = sigma_22 - beta^t Sigma_11^{-1} beta.
// With Sigma_11 fixed the column subproblem is
//   log g + (b1^t A b1 - 2 b1^t c + s22)/g + b1^t Theta b1 + rho (g + b1^t W b1)
// with A = [W S11 W]_FF, c = [W s12]_F, W = Sigma_11^{-1}, rho = lambda/n.
// gamma is minimized in closed form first, then beta_1 given that gamma.

#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "covlap/objective.hpp"
#include "covlap/symmat.hpp"

namespace covlap::bcd {

inline constexpr double kRhoLimit = 1e-14;

/// Minimizer of log g + u/g + rho g over g > 0.
inline double gamma_hat(double u, double rho) {
    if (!(u > 0.0)) throw NonpositiveU("gamma_hat: u must be > 0", u);
    if (rho < kRhoLimit) return u;
    // (-1 + sqrt(1 + 4 u rho)) / (2 rho), rearranged to avoid cancellation
    return 2.0 * u / (1.0 + std::sqrt(1.0 + 4.0 * u * rho));
}

/// One column of the partitioned problem. Only the free columns of
/// Sigma_11^{-1} are materialized; the rest never enter the update.
struct ColumnPartition {
    std::size_t j = 0;
    std::vector<std::size_t> others;     ///< indices k != j, ascending
    std::vector<std::size_t> free_idx;   ///< global indices k with z_kj = 1
    double s22 = 0.0;
    std::vector<double> quad;            ///< f x f, [W S11 W]_FF, row-major
    std::vector<double> lin;             ///< f, [W s12]_F
    std::vector<double> w_ff;            ///< f x f, [W]_FF, row-major

    std::size_t free_count() const noexcept { return free_idx.size(); }
};

/// Builds the partition for column j. Factorizes Sigma_11 by Cholesky unless
/// column j has no free coordinates.
inline ColumnPartition make_partition(const SymMatrix& sigma, const SymMatrix& s, std::size_t j,
                                      const EdgeSet& z) {
    const std::size_t p = sigma.dim();
    ColumnPartition part;
    part.j = j;
    part.s22 = s(j, j);
    part.others.reserve(p - 1);
    std::vector<std::size_t> free_pos;  // positions within `others`
    for (std::size_t k = 0; k < p; ++k) {
        if (k == j) continue;
        if (z.has(k, j)) {
            free_pos.push_back(part.others.size());
            part.free_idx.push_back(k);
        }
        part.others.push_back(k);
    }
    const std::size_t f = free_pos.size();
    if (f == 0) return part;

    const std::size_t m = part.others.size();
    const auto chol = cholesky(sigma.sub(part.others));

    // wf: m x f block of W, column-major (one column per free coordinate)
    std::vector<double> wf(m * f, 0.0);
    for (std::size_t a = 0; a < f; ++a) {
        std::span<double> col(wf.data() + a * m, m);
        col[free_pos[a]] = 1.0;
        chol.solve(col);
    }

    part.w_ff.assign(f * f, 0.0);
    for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = 0; b < f; ++b) part.w_ff[a * f + b] = wf[b * m + free_pos[a]];

    part.lin.assign(f, 0.0);
    for (std::size_t a = 0; a < f; ++a) {
        double acc = 0.0;
        for (std::size_t r = 0; r < m; ++r) acc += wf[a * m + r] * s(part.others[r], j);
        part.lin[a] = acc;
    }

    // S11 * wf, then wf^t (S11 wf)
    std::vector<double> sw(m * f, 0.0);
    for (std::size_t a = 0; a < f; ++a)
        for (std::size_t r = 0; r < m; ++r) {
            double acc = 0.0;
            const std::size_t gr = part.others[r];
            for (std::size_t c = 0; c < m; ++c) acc += s(gr, part.others[c]) * wf[a * m + c];
            sw[a * m + r] = acc;
        }
    part.quad.assign(f * f, 0.0);
    for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = a; b < f; ++b) {
            double acc = 0.0;
            for (std::size_t r = 0; r < m; ++r) acc += wf[a * m + r] * sw[b * m + r];
            part.quad[a * f + b] = acc;
            part.quad[b * f + a] = acc;
        }
    return part;
}

/// u = b1^t A b1 - 2 b1^t c + s22. Throws NonpositiveU unless u > 0.
inline double compute_u(const ColumnPartition& part, std::span<const double> beta1) {
    const std::size_t f = part.free_count();
    assert(beta1.size() == f);
    double u = part.s22;
    for (std::size_t a = 0; a < f; ++a) {
        u -= 2.0 * beta1[a] * part.lin[a];
        for (std::size_t b = 0; b < f; ++b) u += beta1[a] * part.quad[a * f + b] * beta1[b];
    }
    if (!(u > 0.0))
        throw NonpositiveU("column " + std::to_string(part.j) + ": u = " + std::to_string(u) + " <= 0", u);
    return u;
}

/// Replaces row/column j of sigma in place with the closed-form block update.
inline void column_update_inplace(SymMatrix& sigma, const SymMatrix& s, std::size_t j, const EdgeSet& z,
                                  const Hyperparams& h, double n) {
    const double rho = h.lambda / n;
    const auto part = make_partition(sigma, s, j, z);
    const std::size_t f = part.free_count();

    std::vector<double> beta1(f);
    for (std::size_t a = 0; a < f; ++a) beta1[a] = sigma(part.free_idx[a], j);
    const double gamma = gamma_hat(compute_u(part, beta1), rho);

    double quad_w = 0.0;
    if (f > 0) {
        // (Theta + rho W_FF + A/gamma) beta = c/gamma
        const double theta = 1.0 / (n * h.v * h.v);
        SymMatrix lhs(f);
        for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b <= a; ++b)
                lhs.set(a, b, rho * part.w_ff[a * f + b] + part.quad[a * f + b] / gamma + (a == b ? theta : 0.0));
        std::vector<double> rhs(f);
        for (std::size_t a = 0; a < f; ++a) rhs[a] = part.lin[a] / gamma;
        cholesky(lhs).solve(rhs);
        beta1 = std::move(rhs);
        for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b < f; ++b) quad_w += beta1[a] * part.w_ff[a * f + b] * beta1[b];
        for (std::size_t a = 0; a < f; ++a) sigma.set(part.free_idx[a], j, beta1[a]);
    }
    sigma.set(j, j, gamma + quad_w);
}

namespace detail {

inline std::vector<double> dense(const SymMatrix& a) {
    const std::size_t p = a.dim();
    std::vector<double> out(p * p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j <= i; ++j) out[i * p + j] = out[j * p + i] = a(i, j);
    return out;
}

/// Column update driven by the current inverse W = Sigma^{-1} (dense, p x p).
/// Sigma_11^{-1} is W_11 - w_12 w_12^t / w_22, and W is refreshed by the block
/// inverse of the updated Sigma, so no factorization happens inside the sweep.
inline void column_update_with_inverse(SymMatrix& sigma, std::vector<double>& w, const std::vector<double>& s,
                                       std::size_t j, const EdgeSet& z, const Hyperparams& h, double n) {
    const std::size_t p = sigma.dim();
    const double rho = h.lambda / n;
    const double wjj = w[j * p + j];
    const double* wj = w.data() + j * p;

    std::vector<std::size_t> free_idx;
    for (std::size_t k = 0; k < p; ++k)
        if (k != j && z.has(k, j)) free_idx.push_back(k);
    const std::size_t f = free_idx.size();

    // g: f x p, row a = Sigma_11^{-1} e_{free_idx[a]} with entry j zeroed
    std::vector<double> g(f * p);
    for (std::size_t a = 0; a < f; ++a) {
        const double* wa = w.data() + free_idx[a] * p;
        const double ratio = wj[free_idx[a]] / wjj;
        double* ga = g.data() + a * p;
        for (std::size_t k = 0; k < p; ++k) ga[k] = wa[k] - wj[k] * ratio;
        ga[j] = 0.0;
    }

    ColumnPartition part;
    part.j = j;
    part.s22 = s[j * p + j];
    part.free_idx = free_idx;
    part.w_ff.assign(f * f, 0.0);
    part.lin.assign(f, 0.0);
    part.quad.assign(f * f, 0.0);
    std::vector<double> sg(f * p, 0.0);
    const double* sj = s.data() + j * p;
    for (std::size_t a = 0; a < f; ++a) {
        const double* ga = g.data() + a * p;
        for (std::size_t b = 0; b < f; ++b) part.w_ff[a * f + b] = g[b * p + free_idx[a]];
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k) acc += ga[k] * sj[k];
        part.lin[a] = acc;
        double* sga = sg.data() + a * p;
        for (std::size_t l = 0; l < p; ++l) {
            const double gl = ga[l];
            if (gl == 0.0) continue;
            const double* sl = s.data() + l * p;
            for (std::size_t k = 0; k < p; ++k) sga[k] += sl[k] * gl;
        }
    }
    for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = a; b < f; ++b) {
            double acc = 0.0;
            const double* ga = g.data() + a * p;
            const double* sgb = sg.data() + b * p;
            for (std::size_t k = 0; k < p; ++k) acc += ga[k] * sgb[k];
            part.quad[a * f + b] = acc;
            part.quad[b * f + a] = acc;
        }

    std::vector<double> beta1(f);
    for (std::size_t a = 0; a < f; ++a) beta1[a] = sigma(free_idx[a], j);
    const double gamma = gamma_hat(compute_u(part, beta1), rho);

    double quad_w = 0.0;
    if (f > 0) {
        const double theta = 1.0 / (n * h.v * h.v);
        SymMatrix lhs(f);
        for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b <= a; ++b)
                lhs.set(a, b, rho * part.w_ff[a * f + b] + part.quad[a * f + b] / gamma + (a == b ? theta : 0.0));
        std::vector<double> rhs(f);
        for (std::size_t a = 0; a < f; ++a) rhs[a] = part.lin[a] / gamma;
        cholesky(lhs).solve(rhs);
        beta1 = std::move(rhs);
        for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b < f; ++b) quad_w += beta1[a] * part.w_ff[a * f + b] * beta1[b];
        for (std::size_t a = 0; a < f; ++a) sigma.set(free_idx[a], j, beta1[a]);
    }
    sigma.set(j, j, gamma + quad_w);

    // t = Sigma_11^{-1} beta; W_11 <- Sigma_11^{-1} + t t^t / gamma
    std::vector<double> t(p, 0.0);
    for (std::size_t a = 0; a < f; ++a) {
        const double* ga = g.data() + a * p;
        for (std::size_t k = 0; k < p; ++k) t[k] += ga[k] * beta1[a];
    }
    const std::vector<double> old_wj(wj, wj + p);
    for (std::size_t k = 0; k < p; ++k) {
        if (k == j) continue;
        double* wk = w.data() + k * p;
        const double ck = old_wj[k] / wjj;
        const double tk = t[k] / gamma;
        for (std::size_t l = 0; l < p; ++l) wk[l] += -ck * old_wj[l] + tk * t[l];
        wk[j] = -tk;
    }
    double* wjr = w.data() + j * p;
    for (std::size_t k = 0; k < p; ++k) wjr[k] = -t[k] / gamma;
    wjr[j] = 1.0 / gamma;
}

}  // namespace detail

inline SymMatrix column_update(SymMatrix sigma, const SymMatrix& s, std::size_t j, const EdgeSet& z,
                               const Hyperparams& h, double n) {
    column_update_inplace(sigma, s, j, z, h, n);
    return sigma;
}

/// diag(S) + (lambda/n) I
inline SymMatrix initial_iterate(const SymMatrix& s, const Hyperparams& h, double n) {
    SymMatrix sigma(s.dim());
    for (std::size_t i = 0; i < s.dim(); ++i) sigma.set(i, i, s(i, i) + h.lambda / n);
    return sigma;
}

struct SolveResult {
    SymMatrix sigma;
    int sweeps = 0;
    double objective = 0.0;
    bool converged = false;
    /// Largest per-sweep increase of the objective (0 for monotone descent).
    /// Tracked only with record_trace.
    double max_objective_increase = 0.0;
    std::vector<double> objective_trace;  ///< objective after each sweep, with record_trace
};

struct SolveOptions {
    bool record_trace = false;
    /// Optional starting point; must be PD and respect Z.
    std::optional<SymMatrix> start;
};

/// Cyclic sweeps j = 0..p-1 until the Frobenius change of a sweep falls
/// below h.bcd_tol, or h.bcd_max_iter sweeps have run (converged = false).
inline SolveResult solve(const SymMatrix& s, const EdgeSet& z, const Hyperparams& h, double n,
                         const SolveOptions& opts = {}) {
    check_dims(s, z);
    const std::size_t p = s.dim();
    for (std::size_t i = 0; i < p; ++i)
        if (!(s(i, i) > 0.0)) throw NotPositiveDefinite("S must have a strictly positive diagonal");

    const auto s_dense = detail::dense(s);
    SolveResult res;
    res.sigma = opts.start ? *opts.start : initial_iterate(s, h, n);
    double prev_obj = opts.record_trace ? objective_r(res.sigma, z, s, h, n) : 0.0;
    for (int sweep = 1; sweep <= h.bcd_max_iter; ++sweep) {
        const SymMatrix before = res.sigma;
        auto w = detail::dense(inverse_pd(res.sigma));
        for (std::size_t j = 0; j < p; ++j) {
#ifndef NDEBUG
            const double obj_before = objective_r(res.sigma, z, s, h, n);
#endif
            detail::column_update_with_inverse(res.sigma, w, s_dense, j, z, h, n);
#ifndef NDEBUG
            const double obj_after = objective_r(res.sigma, z, s, h, n);
            assert(obj_after <= obj_before + 1e-9 * (1.0 + std::abs(obj_before)));
#endif
        }
        if (opts.record_trace) {
            const double obj = objective_r(res.sigma, z, s, h, n);
            res.max_objective_increase = std::max(res.max_objective_increase, obj - prev_obj);
            prev_obj = obj;
            res.objective_trace.push_back(obj);
        }
        res.sweeps = sweep;
        if (norms(res.sigma - before).frob < h.bcd_tol) {
            res.converged = true;
            break;
        }
    }
    res.objective = objective_r(res.sigma, z, s, h, n);
    return res;
}

}  // namespace covlap::bcd
