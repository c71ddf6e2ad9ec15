#pragma once

// Synthetic covariance models, evaluation metrics and the replication harness.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "covlap/sampler.hpp"
#include "covlap/stats.hpp"
#include "covlap/symmat.hpp"

namespace covlap {

struct ModelSpec {
    int model_id = 3;
    std::size_t p = 10;
    std::size_t n = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (model_id < 1 || model_id > 5) throw Error("model id must be in 1..5");
        if (p < 2) throw Error("p must be >= 2");
        if (n < 2) throw Error("n must be >= 2");
    }
};

namespace detail {

/// O + cI with c chosen so that (lmax + c)/(lmin + c) = p; nullopt if that
/// c does not give a positive definite matrix.
inline std::optional<SymMatrix> condition_targeted(const SymMatrix& off) {
    const std::size_t p = off.dim();
    const auto range = extreme_eigenvalues(off);
    const double pd = static_cast<double>(p);
    const double c = (range.max - pd * range.min) / (pd - 1.0);
    if (!(c + range.min > 0.0)) return std::nullopt;
    SymMatrix sigma = off;
    for (std::size_t i = 0; i < p; ++i) sigma.set(i, i, c);
    if (!is_positive_definite(sigma)) return std::nullopt;
    return sigma;
}

inline constexpr int kMaxGenerationAttempts = 100;

}  // namespace detail

/// Truth covariance for Models 1-5:
///  1  random +-1 pairs w.p. 0.02, constant diagonal with cond_2 = p
///  2  (B + delta I)/(1 + delta), b_ij = 0.5 Ber(0.2), unit diagonal
///  3  0.4 on the first off-diagonal, constant diagonal with cond_2 = p
///  4  unit diagonal, 0.5 / 0.25 on the first / second off-diagonals
///  5  inverse of the Toeplitz matrix 0.75^|i-j|
inline SymMatrix gen_model(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t p = spec.p;
    switch (spec.model_id) {
        case 1: {
            std::bernoulli_distribution edge(0.02);
            std::bernoulli_distribution sign(0.5);
            for (int attempt = 0; attempt < detail::kMaxGenerationAttempts; ++attempt) {
                SymMatrix off(p);
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t j = i + 1; j < p; ++j)
                        if (edge(rng)) off.set(i, j, sign(rng) ? 1.0 : -1.0);
                if (auto sigma = detail::condition_targeted(off)) return *sigma;
            }
            throw GenerationFailed("model 1: no positive definite draw in 100 attempts");
        }
        case 2: {
            std::bernoulli_distribution edge(0.2);
            SymMatrix b = SymMatrix::identity(p);
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = i + 1; j < p; ++j)
                    if (edge(rng)) b.set(i, j, 0.5);
            const double delta = std::max(-extreme_eigenvalues(b).min, 0.0) + 0.05;
            SymMatrix sigma = b;
            for (std::size_t i = 0; i < p; ++i) sigma.add(i, i, delta);
            sigma = (1.0 / (1.0 + delta)) * sigma;
            for (std::size_t i = 0; i < p; ++i) sigma.set(i, i, 1.0);  // exact unit diagonal
            if (!is_positive_definite(sigma)) throw GenerationFailed("model 2: shifted matrix is not PD");
            return sigma;
        }
        case 3: {
            SymMatrix off(p);
            for (std::size_t i = 0; i + 1 < p; ++i) off.set(i, i + 1, 0.4);
            if (auto sigma = detail::condition_targeted(off)) return *sigma;
            throw GenerationFailed("model 3: condition targeting failed");
        }
        case 4: {
            SymMatrix sigma = SymMatrix::identity(p);
            for (std::size_t i = 0; i + 1 < p; ++i) sigma.set(i, i + 1, 0.5);
            for (std::size_t i = 0; i + 2 < p; ++i) sigma.set(i, i + 2, 0.25);
            return sigma;
        }
        case 5: {
            SymMatrix omega(p);
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j <= i; ++j) omega.set(i, j, std::pow(0.75, static_cast<double>(i - j)));
            return inverse_pd(omega);
        }
        default: throw Error("unknown model id");
    }
}

struct StructureMetrics {
    double sp;  ///< true zero pairs estimated as zero
    double se;  ///< true nonzero pairs estimated as nonzero
};

/// An estimated off-diagonal entry counts as zero when |value| <= threshold.
/// Empty denominators give 1.
inline StructureMetrics structure_metrics(const SymMatrix& hat, const SymMatrix& truth, double threshold = 0.001) {
    if (hat.dim() != truth.dim()) throw DimensionMismatch("structure_metrics: dimensions differ");
    std::size_t zeros = 0, zeros_hit = 0, nonzeros = 0, nonzeros_hit = 0;
    for (std::size_t i = 0; i < hat.dim(); ++i)
        for (std::size_t j = i + 1; j < hat.dim(); ++j) {
            const bool est_nonzero = std::abs(hat(i, j)) > threshold;
            if (truth(i, j) != 0.0) {
                ++nonzeros;
                nonzeros_hit += est_nonzero ? 1 : 0;
            } else {
                ++zeros;
                zeros_hit += est_nonzero ? 0 : 1;
            }
        }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 1.0 : static_cast<double>(a) / static_cast<double>(b); };
    return {ratio(zeros_hit, zeros), ratio(nonzeros_hit, nonzeros)};
}

struct LossMetrics {
    double rmse;   ///< |D|_F / p
    double mnorm;  ///< max |d_ij|
    double norm2;  ///< spectral norm of D
};

inline LossMetrics loss_metrics(const SymMatrix& hat, const SymMatrix& truth) {
    if (hat.dim() != truth.dim()) throw DimensionMismatch("loss_metrics: dimensions differ");
    const SymMatrix d = hat - truth;
    const auto nm = norms(d);
    return {nm.frob / static_cast<double>(d.dim()), nm.max_abs, spectral_norm(d).value};
}

enum class Estimator { ProposedMpm, ProposedMap, SampleCov };

inline const char* to_string(Estimator e) noexcept {
    switch (e) {
        case Estimator::ProposedMpm: return "proposed-mpm";
        case Estimator::ProposedMap: return "proposed-map";
        case Estimator::SampleCov: return "sample-cov";
    }
    return "?";
}

inline Estimator parse_estimator(const std::string& s) {
    if (s == "proposed-mpm" || s == "proposed") return Estimator::ProposedMpm;
    if (s == "proposed-map") return Estimator::ProposedMap;
    if (s == "sample-cov") return Estimator::SampleCov;
    throw Error("unknown estimator '" + s + "'");
}

struct Summary {
    double mean = 0.0;
    double sd = 0.0;
};

/// Mean and sample standard deviation (0 for fewer than two values).
inline Summary summarize(const std::vector<double>& xs) {
    Summary s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

struct MetricSamples {
    std::vector<double> sp, se, rmse, mnorm, norm2;
};

struct MetricReport {
    Summary sp, se, rmse, mnorm, norm2;
    std::size_t count = 0;
};

struct ReplicationRecord {
    bool ok = false;
    std::string error;
    std::map<Estimator, StructureMetrics> structure;
    std::map<Estimator, LossMetrics> loss;
};

struct BenchmarkReport {
    ModelSpec spec;
    std::size_t reps = 0;
    std::vector<Estimator> estimators;
    std::map<Estimator, MetricReport> metrics;
    std::vector<ReplicationRecord> per_rep;
    std::size_t failures = 0;
};

/// Runs one replication: fresh data from stream seed^r, one chain shared by
/// both proposed selectors.
inline ReplicationRecord run_replication(const ModelSpec& spec, const SymMatrix& truth, std::size_t r,
                                         const Hyperparams& h, const ChainConfig& cfg,
                                         const std::vector<Estimator>& estimators) {
    ReplicationRecord rec;
    try {
        Rng rng(replication_seed(spec.seed, r));
        const auto x = sample_mvn(spec.n, truth, rng);
        const auto s = sample_cov(x);
        const double n = static_cast<double>(spec.n);
        std::optional<ChainTrace> trace;
        for (auto est : estimators) {
            SymMatrix hat;
            if (est == Estimator::SampleCov) {
                hat = s;
            } else {
                if (!trace) {
                    ChainConfig c = cfg;
                    c.seed = replication_seed(cfg.seed, r);
                    trace = mh_run(s, h, c, n);
                }
                const Selector sel = est == Estimator::ProposedMpm ? Selector::MPM : Selector::MAP;
                hat = finish_fit(s, n, h, cfg, *trace, sel).sigma_hat;
            }
            rec.structure[est] = structure_metrics(hat, truth, h.zero_threshold);
            rec.loss[est] = loss_metrics(hat, truth);
        }
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

/// Runs fn(r) for r in [0, count) on up to `jobs` threads. Results must be
/// written by index; completion order does not matter. The first exception
/// thrown by any task is rethrown after all workers have joined.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t r = 0; r < count; ++r) fn(r);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t r = next++; r < count; r = next++) {
                try {
                    fn(r);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

using ProgressFn = std::function<void(std::size_t rep, const ReplicationRecord&)>;

/// Fixed truth per (model, p, seed); replication r draws data from seed^r.
inline BenchmarkReport run_benchmark(const ModelSpec& spec, std::size_t reps, const Hyperparams& h,
                                     const ChainConfig& cfg, std::vector<Estimator> estimators, int jobs = 1,
                                     const ProgressFn& progress = {}) {
    spec.validate();
    h.validate();
    cfg.validate();
    if (reps < 1) throw Error("reps must be >= 1");
    if (estimators.empty()) throw Error("no estimators selected");

    Rng truth_rng(mix_seed(spec.seed));
    const SymMatrix truth = gen_model(spec, truth_rng);

    BenchmarkReport report;
    report.spec = spec;
    report.reps = reps;
    report.estimators = estimators;
    report.per_rep.resize(reps);
    std::mutex progress_mu;
    parallel_for(reps, jobs, [&](std::size_t r) {
        report.per_rep[r] = run_replication(spec, truth, r, h, cfg, estimators);
        if (progress) {
            std::lock_guard lock(progress_mu);
            progress(r, report.per_rep[r]);
        }
    });

    for (auto est : estimators) {
        MetricSamples ms;
        for (const auto& rec : report.per_rep) {
            if (!rec.ok) continue;
            ms.sp.push_back(rec.structure.at(est).sp);
            ms.se.push_back(rec.structure.at(est).se);
            ms.rmse.push_back(rec.loss.at(est).rmse);
            ms.mnorm.push_back(rec.loss.at(est).mnorm);
            ms.norm2.push_back(rec.loss.at(est).norm2);
        }
        MetricReport mr{summarize(ms.sp), summarize(ms.se), summarize(ms.rmse), summarize(ms.mnorm),
                        summarize(ms.norm2), ms.sp.size()};
        report.metrics[est] = mr;
    }
    for (const auto& rec : report.per_rep)
        if (!rec.ok) ++report.failures;
    return report;
}

}  // namespace covlap
