#pragma once

// Metropolis-Hastings over edge sets with single-flip proposals, median
// probability / maximum a posteriori selection, and the estimate pipeline.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "covlap/bcd.hpp"
#include "covlap/laplace.hpp"
#include "covlap/objective.hpp"
#include "covlap/stats.hpp"

namespace covlap {

enum class Selector { MPM, MAP };

inline const char* to_string(Selector s) noexcept { return s == Selector::MPM ? "mpm" : "map"; }

enum class InitKind { Empty, Full, Random };

inline const char* to_string(InitKind k) noexcept {
    switch (k) {
        case InitKind::Empty: return "empty";
        case InitKind::Full: return "full";
        case InitKind::Random: return "random";
    }
    return "empty";
}

struct ChainConfig {
    int burn_in = 3000;
    int iterations = 12000;
    std::uint64_t seed = 0;
    Selector selector = Selector::MPM;
    InitKind init = InitKind::Empty;
    /// Inclusion probability of each edge for InitKind::Random.
    double init_q = 0.5;
    bool use_cache = true;

    void validate() const {
        if (burn_in < 0) throw Error("burn_in must be >= 0");
        if (iterations < 1) throw Error("iterations must be >= 1");
        if (init == InitKind::Random && !(init_q >= 0.0 && init_q <= 1.0))
            throw Error("random init probability must lie in [0,1]");
    }
};

struct ChainSample {
    EdgeSet z;
    double log_prob;
    bool accepted;
};

struct ChainTrace {
    std::vector<ChainSample> samples;  ///< post-burn-in only
    double acceptance_rate = 0.0;      ///< over post-burn-in steps
    std::vector<double> inclusion_freq;
    std::size_t distinct_models = 0;
    std::vector<std::string> warnings;
};

/// Flips one pair chosen uniformly. Requires p >= 2. Returns the flipped index.
inline std::size_t propose_index(std::size_t pair_count, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pair_count - 1);
    return pick(rng);
}

inline EdgeSet propose(const EdgeSet& z, Rng& rng) {
    if (z.dim() < 2) throw Error("propose: need p >= 2");
    EdgeSet cand = z;
    cand.flip(propose_index(z.size(), rng));
    return cand;
}

/// Acceptance test of one MH step. Always consumes one uniform so that RNG
/// consumption is independent of the scores.
inline bool mh_accept(double log_curr, double log_cand, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    if (std::isnan(log_cand)) return false;
    const double diff = log_cand - log_curr;
    const double alpha = diff >= 0.0 ? 1.0 : std::exp(diff);
    return u < alpha;
}

namespace detail {

class Scorer {
public:
    Scorer(const SymMatrix& s, const Hyperparams& h, double n, bool cached)
        : s_(s), h_(h), n_(n), cached_(cached) {}

    double log_prob(const EdgeSet& z) {
        if (!cached_) return log_model_prob(z, s_, h_, n_).log_prob;
        if (const auto* hit = cache_.find(z)) return hit->log_prob;
        return cache_.insert(log_model_prob(z, s_, h_, n_)).log_prob;
    }

    std::size_t distinct() const noexcept { return cache_.size(); }

private:
    const SymMatrix& s_;
    const Hyperparams& h_;
    double n_;
    bool cached_;
    ScoreCache cache_;
};

}  // namespace detail

/// Runs burn_in + iterations MH steps from cfg.init; the trace keeps the
/// post-burn-in states. Deterministic given cfg.seed.
inline ChainTrace mh_run(const SymMatrix& s, const Hyperparams& h, const ChainConfig& cfg, double n) {
    cfg.validate();
    const std::size_t p = s.dim();
    const std::size_t pairs = EdgeSet::pair_count(p);
    Rng rng(cfg.seed);
    detail::Scorer scorer(s, h, n, cfg.use_cache);
    ChainTrace trace;

    EdgeSet curr(p);
    if (cfg.init == InitKind::Full) {
        curr = EdgeSet::full(p);
    } else if (cfg.init == InitKind::Random) {
        std::bernoulli_distribution coin(cfg.init_q);
        for (std::size_t k = 0; k < pairs; ++k) curr.set(k, coin(rng));
    }
    double curr_lp = scorer.log_prob(curr);
    if (!std::isfinite(curr_lp)) {
        trace.warnings.push_back("initial structure is infeasible; starting from the empty structure");
        curr = EdgeSet(p);
        curr_lp = scorer.log_prob(curr);
        if (!std::isfinite(curr_lp)) throw InfeasibleModel("empty structure is infeasible for this S");
    }

    const int total = cfg.burn_in + cfg.iterations;
    trace.samples.reserve(static_cast<std::size_t>(cfg.iterations));
    std::vector<std::size_t> counts(pairs, 0);
    std::size_t accepted_post = 0;
    for (int it = 0; it < total; ++it) {
        bool accepted = false;
        if (pairs > 0) {
            const std::size_t k = propose_index(pairs, rng);
            curr.flip(k);
            const double cand_lp = scorer.log_prob(curr);
            accepted = mh_accept(curr_lp, cand_lp, rng);
            if (accepted)
                curr_lp = cand_lp;
            else
                curr.flip(k);
        }
        if (it >= cfg.burn_in) {
            trace.samples.push_back({curr, curr_lp, accepted});
            if (accepted) ++accepted_post;
            for (std::size_t k = 0; k < pairs; ++k)
                if (curr[k]) ++counts[k];
        }
    }
    const double m = static_cast<double>(trace.samples.size());
    trace.acceptance_rate = static_cast<double>(accepted_post) / m;
    trace.inclusion_freq.resize(pairs);
    for (std::size_t k = 0; k < pairs; ++k) trace.inclusion_freq[k] = static_cast<double>(counts[k]) / m;
    trace.distinct_models = scorer.distinct();
    return trace;
}

/// Edges with inclusion frequency strictly above 1/2.
inline EdgeSet select_mpm(const ChainTrace& trace) {
    if (trace.samples.empty()) throw Error("select_mpm: empty trace");
    const std::size_t p = trace.samples.front().z.dim();
    EdgeSet z(p);
    for (std::size_t k = 0; k < trace.inclusion_freq.size(); ++k) z.set(k, trace.inclusion_freq[k] > 0.5);
    return z;
}

/// Highest-scoring visited structure; ties go to fewer edges, then to the
/// lexicographically smaller bit vector.
inline EdgeSet select_map(const ChainTrace& trace) {
    if (trace.samples.empty()) throw Error("select_map: empty trace");
    const ChainSample* best = &trace.samples.front();
    for (const auto& smp : trace.samples) {
        if (smp.log_prob > best->log_prob) {
            best = &smp;
        } else if (smp.log_prob == best->log_prob) {
            const auto cs = smp.z.count();
            const auto cb = best->z.count();
            if (cs < cb || (cs == cb && smp.z < best->z)) best = &smp;
        }
    }
    return best->z;
}

inline EdgeSet select(const ChainTrace& trace, Selector sel) {
    return sel == Selector::MPM ? select_mpm(trace) : select_map(trace);
}

struct FitResult {
    EdgeSet z;
    Selector selector = Selector::MPM;
    SymMatrix sigma_hat;
    double log_model_prob = -std::numeric_limits<double>::infinity();
    double objective = 0.0;
    int bcd_sweeps = 0;
    bool bcd_converged = false;
    /// lambda_max(Sigma_hat - 2S); negative means Sigma_hat < 2S holds.
    double constraint_gap = 0.0;
    double acceptance_rate = 0.0;
    std::vector<double> inclusion_freq;
    std::size_t distinct_models = 0;
    std::vector<std::string> warnings;
    Hyperparams hyper;
    ChainConfig chain;
    std::size_t n = 0;
};

/// Mode of the conditional posterior given a selected structure.
inline FitResult finish_fit(const SymMatrix& s, double n, const Hyperparams& h, const ChainConfig& cfg,
                            const ChainTrace& trace, Selector sel) {
    FitResult fr;
    fr.selector = sel;
    fr.z = select(trace, sel);
    const auto score = log_model_prob(fr.z, s, h, n);
    fr.log_model_prob = score.log_prob;
    const auto sol = bcd::solve(s, fr.z, h, n);
    fr.sigma_hat = sol.sigma;
    fr.objective = sol.objective;
    fr.bcd_sweeps = sol.sweeps;
    fr.bcd_converged = sol.converged;
    fr.constraint_gap = extreme_eigenvalues(fr.sigma_hat - 2.0 * s, 1e-12, 20000).max;
    fr.acceptance_rate = trace.acceptance_rate;
    fr.inclusion_freq = trace.inclusion_freq;
    fr.distinct_models = trace.distinct_models;
    fr.warnings = trace.warnings;
    fr.hyper = h;
    fr.chain = cfg;
    fr.chain.selector = sel;
    fr.n = static_cast<std::size_t>(n);
    return fr;
}

/// Full pipeline from a sample covariance computed on n observations.
inline FitResult estimate_from_cov(const SymMatrix& s, std::size_t n, const Hyperparams& h, const ChainConfig& cfg) {
    h.validate();
    const auto trace = mh_run(s, h, cfg, static_cast<double>(n));
    return finish_fit(s, static_cast<double>(n), h, cfg, trace, cfg.selector);
}

/// S = X^t X / n, MH over structures, selection, then the BCD mode.
inline FitResult estimate(const DenseMatrix& x, const Hyperparams& h, const ChainConfig& cfg) {
    if (x.rows() < 2) throw Error("estimate: need at least two observations");
    return estimate_from_cov(sample_cov(x), x.rows(), h, cfg);
}

}  // namespace covlap
