#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

#include "covlap/simbench.hpp"
#include "oracles.hpp"

using namespace covlap;

namespace {

SymMatrix truth_for(int model, std::size_t p, std::uint64_t seed = 1) {
    Rng rng(mix_seed(seed));
    return gen_model({model, p, 100, seed}, rng);
}

double cond2(const SymMatrix& a) {
    const auto ev = oracle::eigenvalues(a);
    return ev.maxCoeff() / ev.minCoeff();
}

ChainConfig short_chain() {
    ChainConfig c;
    c.burn_in = 200;
    c.iterations = 800;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(GenModel, Model4Exact) {
    const double rows[] = {1, .5, .25, 0, .5, 1, .5, .25, .25, .5, 1, .5, 0, .25, .5, 1};
    EXPECT_EQ(truth_for(4, 4), SymMatrix::from_rows(4, rows));
}

TEST(GenModel, Model5TwoByTwo) {
    const auto s = truth_for(5, 2);
    EXPECT_NEAR(s(0, 0), 16.0 / 7.0, 1e-14);
    EXPECT_NEAR(s(0, 1), -12.0 / 7.0, 1e-14);
    EXPECT_NEAR(s(1, 1), 16.0 / 7.0, 1e-14);
}

TEST(GenModel, Model5MatchesTridiagonalInverse) {
    for (std::size_t p : {3u, 10u, 40u}) {
        const double r = 0.75, k = 1.0 / (1.0 - r * r);
        SymMatrix tri(p);
        for (std::size_t i = 0; i < p; ++i) {
            tri.set(i, i, (i == 0 || i + 1 == p ? 1.0 : 1.0 + r * r) * k);
            if (i + 1 < p) tri.set(i, i + 1, -r * k);
        }
        EXPECT_LE(max_abs(truth_for(5, p) - tri), 1e-8);
    }
}

TEST(GenModel, Model3ConditionNumber) {
    const auto s = truth_for(3, 50);
    const double c = cond2(s);
    EXPECT_GE(c, 0.9 * 50);
    EXPECT_LE(c, 1.1 * 50);
    EXPECT_EQ(s(0, 1), 0.4);
    EXPECT_EQ(s(0, 2), 0.0);
}

TEST(GenModel, Model1ConditionNumberAndPattern) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::size_t p = 60;
        const auto s = truth_for(1, p, seed);
        EXPECT_NEAR(cond2(s), static_cast<double>(p), 0.1 * p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j) EXPECT_TRUE(s(i, j) == 0.0 || std::abs(s(i, j)) == 1.0);
    }
}

TEST(GenModel, Model2UnitDiagonal) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = truth_for(2, 30, seed);
        for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(s(i, i), 1.0);
        EXPECT_TRUE(is_positive_definite(s));
    }
}

TEST(GenModel, AllModelsPositiveDefinite) {
    for (int m = 1; m <= 5; ++m)
        for (std::size_t p : {2u, 5u, 31u}) {
            if (m == 1 && p == 2) continue;
            EXPECT_TRUE(is_positive_definite(truth_for(m, p))) << m << " " << p;
        }
}

TEST(GenModel, Model1WithoutEdgesCannotBeTargeted) {
    // A draw with no pairs leaves cI, whose condition number is 1 for every c.
    Rng rng(mix_seed(1));
    EXPECT_THROW(gen_model({1, 2, 10, 1}, rng), GenerationFailed);
}

TEST(GenModel, InvalidSpec) {
    Rng rng(1);
    EXPECT_THROW(gen_model({6, 5, 10, 0}, rng), Error);
    EXPECT_THROW(gen_model({3, 1, 10, 0}, rng), Error);
    EXPECT_THROW(gen_model({3, 5, 1, 0}, rng), Error);
}

TEST(SampleMvn, IdentityMoments) {
    Rng rng(2);
    const std::size_t n = 100000;
    const auto x = sample_mvn(n, SymMatrix::identity(3), rng);
    for (std::size_t k = 0; k < 3; ++k) {
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) ss += x(r, k) * x(r, k);
        EXPECT_NEAR(ss / n, 1.0, 5 * std::sqrt(2.0 / n));
    }
}

TEST(SampleMvn, ShapeAndDeterminism) {
    Rng a(3), b(3);
    const auto s = truth_for(4, 5);
    EXPECT_EQ(sample_mvn(1, s, a).rows(), 1u);
    Rng c(4), d(4);
    EXPECT_EQ(sample_mvn(50, s, c), sample_mvn(50, s, d));
    const double bad[] = {1, 2, 2, 1};
    EXPECT_THROW(sample_mvn(5, SymMatrix::from_rows(2, bad), a), NotPositiveDefinite);
}

TEST(SampleCov, Examples) {
    DenseMatrix x(2, 2);
    x(0, 0) = 1;
    x(1, 0) = -1;
    const auto s = sample_cov(x);
    EXPECT_EQ(s(0, 0), 1.0);
    EXPECT_EQ(s(0, 1), 0.0);
    EXPECT_EQ(s(1, 1), 0.0);
    DenseMatrix one(1, 2);
    one(0, 0) = 3;
    one(0, 1) = -2;
    const auto t = sample_cov(one);
    EXPECT_EQ(t(0, 0), 9.0);
    EXPECT_EQ(t(0, 1), -6.0);
    EXPECT_EQ(t(1, 1), 4.0);
}

TEST(SampleCov, PositiveSemidefinite) {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const auto x = sample_mvn(2 + t % 4, truth_for(4, 6), rng);
        EXPECT_GE(oracle::eigenvalues(sample_cov(x)).minCoeff(), -1e-12);
    }
}

TEST(StructureMetrics, Examples) {
    const auto truth = truth_for(4, 5);
    const auto perfect = structure_metrics(truth, truth);
    EXPECT_EQ(perfect.sp, 1.0);
    EXPECT_EQ(perfect.se, 1.0);

    SymMatrix t3 = SymMatrix::identity(3);
    t3.set(0, 1, 0.3);
    SymMatrix e3 = t3;
    e3.set(1, 2, 0.2);
    const auto m = structure_metrics(e3, t3);
    EXPECT_EQ(m.se, 1.0);
    EXPECT_EQ(m.sp, 0.5);

    const auto diag = structure_metrics(SymMatrix::identity(5), truth);
    EXPECT_EQ(diag.se, 0.0);
    EXPECT_EQ(diag.sp, 1.0);

    SymMatrix tiny = SymMatrix::identity(3);
    tiny.set(0, 2, 0.001);
    EXPECT_EQ(structure_metrics(tiny, SymMatrix::identity(3)).sp, 1.0);
    EXPECT_THROW(structure_metrics(SymMatrix::identity(3), SymMatrix::identity(4)), DimensionMismatch);
}

TEST(LossMetrics, Examples) {
    const auto s = truth_for(5, 4);
    const auto zero = loss_metrics(s, s);
    EXPECT_EQ(zero.rmse, 0.0);
    EXPECT_EQ(zero.mnorm, 0.0);
    EXPECT_EQ(zero.norm2, 0.0);
    const auto id = loss_metrics(s + SymMatrix::identity(4), s);
    EXPECT_NEAR(id.rmse, 0.5, 1e-15);
    EXPECT_NEAR(id.mnorm, 1.0, 1e-15);
    EXPECT_NEAR(id.norm2, 1.0, 1e-10);
    EXPECT_THROW(loss_metrics(SymMatrix::identity(3), SymMatrix::identity(4)), DimensionMismatch);
}

TEST(LossMetrics, InequalityChain) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const std::size_t p = 2 + t % 7;
        const auto d = oracle::random_pd(p, rng) - oracle::random_pd(p, rng);
        const auto m = loss_metrics(d, SymMatrix(p));
        const double frob = norms(d).frob;
        EXPECT_NEAR(m.rmse, frob / p, 1e-15);
        EXPECT_LE(m.mnorm, m.norm2 * (1 + 1e-10));
        EXPECT_LE(m.norm2, p * m.mnorm * (1 + 1e-10));
        EXPECT_NEAR(m.norm2, oracle::spectral_norm(d), 1e-6 * m.norm2);
    }
}

TEST(Summarize, MeanAndSampleSd) {
    const auto s = summarize({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.sd, std::sqrt(5.0 / 3.0));
    EXPECT_EQ(summarize({7}).sd, 0.0);
}

TEST(ParseEstimator, Names) {
    EXPECT_EQ(parse_estimator("proposed-mpm"), Estimator::ProposedMpm);
    EXPECT_EQ(parse_estimator("proposed"), Estimator::ProposedMpm);
    EXPECT_EQ(parse_estimator("proposed-map"), Estimator::ProposedMap);
    EXPECT_EQ(parse_estimator("sample-cov"), Estimator::SampleCov);
    EXPECT_THROW(parse_estimator("glasso"), Error);
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
    std::vector<int> hit(37, 0);
    parallel_for(37, 4, [&](std::size_t r) { hit[r] += 1; });
    for (int h : hit) EXPECT_EQ(h, 1);
    std::atomic<int> ran{0};
    EXPECT_THROW(parallel_for(10, 3,
                              [&](std::size_t r) {
                                  ++ran;
                                  if (r == 4) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
    EXPECT_EQ(ran.load(), 10);
}

TEST(RunBenchmark, SingleReplicationHasZeroSd) {
    const auto rep = run_benchmark({3, 6, 60, 9}, 1, Hyperparams::defaults_for(6), short_chain(),
                                   {Estimator::ProposedMpm, Estimator::SampleCov});
    EXPECT_EQ(rep.failures, 0u);
    for (const auto& [est, m] : rep.metrics) {
        EXPECT_EQ(m.count, 1u);
        EXPECT_EQ(m.sp.sd, 0.0);
        EXPECT_EQ(m.rmse.sd, 0.0);
    }
}

TEST(RunBenchmark, SampleCovNeverSparse) {
    const auto rep = run_benchmark({3, 10, 100, 4}, 3, Hyperparams::defaults_for(10), short_chain(),
                                   {Estimator::SampleCov});
    const auto& m = rep.metrics.at(Estimator::SampleCov);
    EXPECT_EQ(m.se.mean, 1.0);
    EXPECT_LE(m.sp.mean, 0.1);
}

TEST(RunBenchmark, DeterministicAcrossJobs) {
    const ModelSpec spec{2, 8, 80, 21};
    const auto h = Hyperparams::defaults_for(8);
    const std::vector<Estimator> ests{Estimator::ProposedMpm, Estimator::ProposedMap, Estimator::SampleCov};
    const auto a = run_benchmark(spec, 4, h, short_chain(), ests, 1);
    const auto b = run_benchmark(spec, 4, h, short_chain(), ests, 4);
    const auto c = run_benchmark(spec, 4, h, short_chain(), ests, 1);
    for (auto est : ests)
        for (const auto* other : {&b, &c}) {
            const auto& x = a.metrics.at(est);
            const auto& y = other->metrics.at(est);
            EXPECT_EQ(x.sp.mean, y.sp.mean);
            EXPECT_EQ(x.se.mean, y.se.mean);
            EXPECT_EQ(x.rmse.mean, y.rmse.mean);
            EXPECT_EQ(x.rmse.sd, y.rmse.sd);
            EXPECT_EQ(x.mnorm.mean, y.mnorm.mean);
            EXPECT_EQ(x.norm2.mean, y.norm2.mean);
        }
}

TEST(RunReplication, FailureIsRecorded) {
    const double bad[] = {1, 2, 2, 1};
    const auto rec = run_replication({3, 2, 20, 1}, SymMatrix::from_rows(2, bad), 0, Hyperparams::defaults_for(2),
                                     short_chain(), {Estimator::SampleCov});
    EXPECT_FALSE(rec.ok);
    EXPECT_FALSE(rec.error.empty());
}

TEST(RunBenchmark, ProposedBeatsSampleCov) {
    const auto rep = run_benchmark({3, 12, 120, 5}, 3, Hyperparams::defaults_for(12), short_chain(),
                                   {Estimator::ProposedMpm, Estimator::SampleCov});
    const auto& prop = rep.metrics.at(Estimator::ProposedMpm);
    const auto& samp = rep.metrics.at(Estimator::SampleCov);
    EXPECT_GT(prop.sp.mean, samp.sp.mean);
    EXPECT_LT(prop.rmse.mean, samp.rmse.mean);
}
