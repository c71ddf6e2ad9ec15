#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "covlap/bcd.hpp"
#include "oracles.hpp"

using namespace covlap;
using covlap::bcd::column_update;
using covlap::bcd::compute_u;
using covlap::bcd::gamma_hat;
using covlap::bcd::make_partition;
using covlap::bcd::solve;

namespace {

Hyperparams prior(double tol = 1e-6) {
    Hyperparams h;
    h.q = 0.5;
    h.bcd_tol = tol;
    return h;
}

SymMatrix m2(double a, double b, double c) {
    const double rows[] = {a, b, b, c};
    return SymMatrix::from_rows(2, rows);
}

double max_abs_diff(const SymMatrix& a, const SymMatrix& b) { return max_abs(a - b); }

/// Schur complement s_jj - s_j,-j S_-j^{-1} s_-j,j.
double schur(const SymMatrix& s, std::size_t j) {
    std::vector<std::size_t> others;
    for (std::size_t k = 0; k < s.dim(); ++k)
        if (k != j) others.push_back(k);
    const Eigen::MatrixXd full = oracle::to_eigen(s);
    Eigen::MatrixXd s11(others.size(), others.size());
    Eigen::VectorXd s12(others.size());
    for (std::size_t a = 0; a < others.size(); ++a) {
        s12(a) = full(others[a], j);
        for (std::size_t b = 0; b < others.size(); ++b) s11(a, b) = full(others[a], others[b]);
    }
    return full(j, j) - s12.dot(s11.ldlt().solve(s12));
}

}  // namespace

TEST(GammaHat, Examples) {
    EXPECT_EQ(gamma_hat(1.0, 0.0), 1.0);
    EXPECT_EQ(gamma_hat(1.0, 1e-15), 1.0);
    EXPECT_NEAR(gamma_hat(2.0, 0.5), std::sqrt(5.0) - 1.0, 1e-15);
    EXPECT_NEAR(gamma_hat(2.0, 0.5), 1.2360680, 1e-7);
}

TEST(GammaHat, Stationarity) {
    for (double u : {0.01, 0.5, 2.0, 40.0})
        for (double rho : {1e-6, 0.01, 0.1, 3.0}) {
            const double g = gamma_hat(u, rho);
            EXPECT_GT(g, 0.0);
            EXPECT_NEAR(1.0 / g - u / (g * g) + rho, 0.0, 1e-12 * (1.0 / g + rho));
        }
}

TEST(GammaHat, NonpositiveU) {
    EXPECT_THROW(gamma_hat(0.0, 0.1), NonpositiveU);
    EXPECT_THROW(gamma_hat(-1.0, 0.1), NonpositiveU);
}

TEST(ComputeU, EmptyBetaGivesS22) {
    std::mt19937_64 rng(1);
    const auto s = oracle::random_pd(4, rng);
    const auto part = make_partition(SymMatrix::identity(4), s, 2, EdgeSet(4));
    EXPECT_EQ(part.free_count(), 0u);
    EXPECT_EQ(compute_u(part, {}), s(2, 2));
}

TEST(ComputeU, SchurComplementAtMinimizer) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto s = oracle::random_pd(4, rng);
        const std::size_t j = t % 4;
        // Sigma with an arbitrary PD Sigma_11 block and beta = Sigma_11 S_11^{-1} s_12
        const auto base = oracle::random_pd(4, rng);
        std::vector<std::size_t> others;
        for (std::size_t k = 0; k < 4; ++k)
            if (k != j) others.push_back(k);
        Eigen::MatrixXd s11(3, 3), b11(3, 3);
        Eigen::VectorXd s12(3);
        for (std::size_t a = 0; a < 3; ++a) {
            s12(a) = s(others[a], j);
            for (std::size_t b = 0; b < 3; ++b) {
                s11(a, b) = s(others[a], others[b]);
                b11(a, b) = base(others[a], others[b]);
            }
        }
        const Eigen::VectorXd beta = b11 * s11.ldlt().solve(s12);
        SymMatrix sigma = base;
        for (std::size_t a = 0; a < 3; ++a) sigma.set(others[a], j, beta(a));
        const auto part = make_partition(sigma, s, j, EdgeSet::full(4));
        std::vector<double> b1(beta.data(), beta.data() + 3);
        EXPECT_NEAR(compute_u(part, b1), schur(s, j), 1e-10);
    }
}

TEST(ComputeU, BoundedBelowBySchurComplement) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 200; ++t) {
        const auto s = oracle::random_pd(4, rng);
        const auto z = oracle::random_edges(4, rng);
        const auto sigma = oracle::random_pd(4, rng);
        const std::size_t j = t % 4;
        const auto part = make_partition(sigma, s, j, z);
        std::vector<double> b1(part.free_count());
        for (double& b : b1) b = nd(rng);
        EXPECT_GE(compute_u(part, b1), schur(s, j) - 1e-12);
    }
}

TEST(ComputeU, ZeroThrows) {
    const auto s = m2(1, 1, 1);
    const auto part = make_partition(SymMatrix::identity(2), s, 1, EdgeSet(2, {1}));
    const double beta[] = {1.0};
    try {
        compute_u(part, beta);
        FAIL() << "expected NonpositiveU";
    } catch (const NonpositiveU& e) {
        EXPECT_NEAR(e.value, 0.0, 1e-15);
    }
}

TEST(ColumnUpdate, DecoupledDiagonal) {
    const auto h = prior();
    const double d[] = {0.5, 2.0, 3.5};
    const auto s = SymMatrix::diagonal(d);
    const double n = 20;
    for (std::size_t j = 0; j < 3; ++j) {
        const auto out = column_update(SymMatrix::identity(3), s, j, EdgeSet(3), h, n);
        EXPECT_NEAR(out(j, j), gamma_hat(d[j], h.lambda / n), 1e-15);
        for (std::size_t k = 0; k < 3; ++k)
            if (k != j) {
                EXPECT_EQ(out(j, k), 0.0);
            }
    }
}

TEST(ColumnUpdate, TwoByTwoAgainstGrid) {
    const auto h = prior(1e-13);
    const EdgeSet z(2, {1});
    const double n = 10;
    for (const auto& s : {SymMatrix::identity(2), m2(1.0, 0.5, 1.2)}) {
        const auto init = bcd::initial_iterate(s, h, n);
        const double before = objective_r(init, z, s, h, n);
        auto sigma = column_update(init, s, 0, z, h, n);
        sigma = column_update(sigma, s, 1, z, h, n);
        EXPECT_LT(objective_r(sigma, z, s, h, n), before);

        // at the converged mode, (sigma_12, sigma_22) minimizes r over a
        // 1e-3 grid with sigma_11 held fixed
        const auto mode = solve(s, z, h, n).sigma;
        const double s11 = mode(0, 0);
        double best = std::numeric_limits<double>::infinity(), arg12 = 0, arg22 = 0;
        for (int a = -1000; a <= 1000; ++a)
            for (int b = 1; b <= 3000; ++b) {
                const double x12 = a * 1e-3, x22 = b * 1e-3;
                if (s11 * x22 <= x12 * x12) continue;
                const double r = objective_r(m2(s11, x12, x22), z, s, h, n);
                if (r < best) {
                    best = r;
                    arg12 = x12;
                    arg22 = x22;
                }
            }
        EXPECT_LE(objective_r(mode, z, s, h, n), best + 1e-12);
        EXPECT_NEAR(mode(0, 1), arg12, 1e-3);
        EXPECT_NEAR(mode(1, 1), arg22, 1e-3);
    }
}

TEST(ColumnUpdate, FixedPointAtMode) {
    const auto h = prior(1e-13);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto s = oracle::random_pd(4, rng);
        const auto z = oracle::random_edges(4, rng);
        const auto mode = solve(s, z, h, 40).sigma;
        for (std::size_t j = 0; j < 4; ++j) EXPECT_LE(max_abs_diff(column_update(mode, s, j, z, h, 40), mode), 1e-8);
    }
}

TEST(Solve, ScalarCase) {
    auto h = prior();
    h.lambda = 1.0;
    const double s[] = {2.0};
    const auto r = solve(SymMatrix::diagonal(s), EdgeSet(1), h, 10);
    EXPECT_NEAR(r.sigma(0, 0), (-1.0 + std::sqrt(1.8)) / 0.2, 1e-12);
    EXPECT_NEAR(r.sigma(0, 0), 1.7082039, 1e-7);
    EXPECT_TRUE(r.converged);
}

TEST(Solve, EmptyStructureSeparates) {
    const auto h = prior();
    const double d[] = {0.3, 1.0, 4.0, 9.0};
    const auto r = solve(SymMatrix::diagonal(d), EdgeSet(4), h, 15);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(r.sigma(i, i), gamma_hat(d[i], h.lambda / 15), 1e-14);
        for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(r.sigma(i, j), 0.0);
    }
}

TEST(Solve, MatchesGenericMinimizer) {
    const auto h = prior(1e-10);
    std::mt19937_64 rng(5);
    const auto s = oracle::random_pd(3, rng);
    const EdgeSet z(3, {1, 0, 1});
    const auto r = solve(s, z, h, 50);
    const auto ref = oracle::minimize_objective(s, z, h, 50);
    EXPECT_LE(max_abs_diff(r.sigma, ref), 1e-4);
    EXPECT_LE(r.objective, objective_r(ref, z, s, h, 50) + 1e-12);
}

TEST(Solve, MonotoneStructuredAndPd) {
    const auto h = prior();
    std::mt19937_64 rng(6);
    for (int t = 0; t < 50; ++t) {
        const std::size_t p = 2 + t % 5;
        const auto s = oracle::random_pd(p, rng, 0.01);
        const auto z = oracle::random_edges(p, rng);
        bcd::SolveOptions opts;
        opts.record_trace = true;
        const auto r = solve(s, z, h, t % 2 ? 20 : 200, opts);
        EXPECT_TRUE(r.converged);
        // round-off only: 1e-12 relative
        const double slack = 1e-12 * std::abs(r.objective);
        EXPECT_LE(r.max_objective_increase, slack);
        for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
            EXPECT_LE(r.objective_trace[k], r.objective_trace[k - 1] + slack);
        EXPECT_TRUE(is_positive_definite(r.sigma));
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j)
                if (!z.has(i, j)) {
                    EXPECT_EQ(r.sigma(i, j), 0.0);
                }
    }
}

TEST(Solve, EveryColumnUpdateKeepsPdAndDescends) {
    const auto h = prior();
    std::mt19937_64 rng(7);
    for (int t = 0; t < 30; ++t) {
        const std::size_t p = 3 + t % 4;
        const auto s = oracle::random_pd(p, rng, 0.01);
        const auto z = oracle::random_edges(p, rng, 0.6);
        const double n = 30;
        auto sigma = bcd::initial_iterate(s, h, n);
        double obj = objective_r(sigma, z, s, h, n);
        for (int sweep = 0; sweep < 5; ++sweep)
            for (std::size_t j = 0; j < p; ++j) {
                sigma = column_update(sigma, s, j, z, h, n);
                ASSERT_TRUE(is_positive_definite(sigma));
                const double next = objective_r(sigma, z, s, h, n);
                EXPECT_LE(next, obj + 1e-12 * std::abs(obj));
                obj = next;
            }
    }
}

TEST(Solve, FixedPointAfterConvergence) {
    const auto h = prior();
    std::mt19937_64 rng(8);
    for (int t = 0; t < 30; ++t) {
        const auto s = oracle::random_pd(5, rng);
        const auto z = oracle::random_edges(5, rng);
        const auto r = solve(s, z, h, 60);
        auto again = r.sigma;
        for (std::size_t j = 0; j < 5; ++j) again = column_update(again, s, j, z, h, 60);
        EXPECT_LT(norms(again - r.sigma).frob, 10 * h.bcd_tol);
    }
}

TEST(Solve, PermutationEquivariance) {
    const auto h = prior(1e-12);
    std::mt19937_64 rng(9);
    std::vector<std::size_t> perm(4);
    for (int t = 0; t < 30; ++t) {
        const auto s = oracle::random_pd(4, rng);
        const auto z = oracle::random_edges(4, rng);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto a = solve(s, z, h, 50).sigma;
        const auto b = solve(oracle::permute(s, perm), oracle::permute(z, perm), h, 50).sigma;
        EXPECT_LE(max_abs_diff(oracle::permute(a, perm), b), 1e-9);
    }
}

TEST(Solve, MaxIterationsFlagged) {
    auto h = prior(1e-14);
    h.bcd_max_iter = 1;
    std::mt19937_64 rng(10);
    const auto s = oracle::random_pd(4, rng);
    const auto r = solve(s, EdgeSet::full(4), h, 30);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.sweeps, 1);
    EXPECT_TRUE(is_positive_definite(r.sigma));
}

TEST(Solve, RejectsNonpositiveDiagonal) {
    EXPECT_THROW(solve(m2(1, 0, 0), EdgeSet(2), prior(), 10), NotPositiveDefinite);
    EXPECT_THROW(solve(SymMatrix::identity(3), EdgeSet(2), prior(), 10), DimensionMismatch);
}

TEST(Solve, OneSweepEqualsSequentialColumnUpdates) {
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t p = 3 + rep % 5;
        const auto s = oracle::random_pd(p, rng);
        const auto z = oracle::random_edges(p, rng, 0.5);
        auto h = prior();
        h.bcd_max_iter = 1;
        const double n = 50.0;
        SymMatrix ref = bcd::initial_iterate(s, h, n);
        for (std::size_t j = 0; j < p; ++j) ref = column_update(ref, s, j, z, h, n);
        EXPECT_LT(max_abs_diff(solve(s, z, h, n).sigma, ref), 1e-10);
    }
}
