#pragma once

// Two-class linear discriminant analysis driven by a plug-in covariance
// estimate, plus WDBC ingestion and the split/replicate experiment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "covlap/sampler.hpp"
#include "covlap/simbench.hpp"
#include "covlap/stats.hpp"

namespace covlap {

struct LabeledDataset {
    DenseMatrix features;          ///< n x p
    std::vector<int> labels;       ///< 0 = benign, 1 = malignant

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
    std::size_t count(int label) const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
    }

    LabeledDataset subset(const std::vector<std::size_t>& rows) const {
        LabeledDataset out{DenseMatrix(rows.size(), dim()), {}};
        out.labels.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::copy_n(features.row(rows[r]).begin(), dim(), out.features.row(r).begin());
            out.labels.push_back(labels[rows[r]]);
        }
        return out;
    }
};

/// Parses "id,diagnosis,f1,...,fk" lines, diagnosis M -> 1, B -> 0. Every
/// record must carry the same number of features. Blank lines are skipped.
inline LabeledDataset parse_wdbc(std::istream& in, std::size_t expected_features = 30) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        if (fields.size() != expected_features + 2)
            throw ParseError("expected " + std::to_string(expected_features + 2) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        if (fields[1] == "M")
            labels.push_back(1);
        else if (fields[1] == "B")
            labels.push_back(0);
        else
            throw ParseError("diagnosis must be M or B, got '" + fields[1] + "'", line_no);
        std::vector<double> feats;
        feats.reserve(expected_features);
        for (std::size_t k = 2; k < fields.size(); ++k) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(fields[k], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != fields[k].size() || !std::isfinite(v))
                throw ParseError("bad numeric field '" + fields[k] + "'", line_no);
            feats.push_back(v);
        }
        rows.push_back(std::move(feats));
    }
    if (rows.empty()) throw ParseError("no records", line_no);
    LabeledDataset ds{DenseMatrix(rows.size(), expected_features), std::move(labels)};
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), ds.features.row(r).begin());
    return ds;
}

struct Split {
    LabeledDataset train;
    LabeledDataset test;
};

/// Uniform sampling without replacement within each class: m1 malignant and
/// m0 benign rows go to the training set, the rest to the test set.
inline Split stratified_split(const LabeledDataset& data, std::size_t m1, std::size_t m0, Rng& rng) {
    if (data.count(1) < m1 || data.count(0) < m0)
        throw InsufficientClassCount("requested " + std::to_string(m1) + "/" + std::to_string(m0) +
                                     " training rows but classes have " + std::to_string(data.count(1)) + "/" +
                                     std::to_string(data.count(0)));
    std::vector<std::size_t> train_rows, test_rows;
    for (int label : {1, 0}) {
        std::vector<std::size_t> idx;
        for (std::size_t r = 0; r < data.size(); ++r)
            if (data.labels[r] == label) idx.push_back(r);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t take = label == 1 ? m1 : m0;
        train_rows.insert(train_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        test_rows.insert(test_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {data.subset(train_rows), data.subset(test_rows)};
}

struct LdaOptions {
    Estimator estimator = Estimator::ProposedMpm;
    /// Scale features by their pooled within-class standard deviation before
    /// estimating the covariance; the fitted precision is mapped back.
    bool standardize = false;
};

struct LdaModel {
    Vector mu0, mu1;
    SymMatrix omega_hat;
    double log_pi0 = 0.0;
    double log_pi1 = 0.0;
    std::optional<FitResult> fit;  ///< present for the proposed estimators
};

inline LdaModel fit_lda(const LabeledDataset& train, const Hyperparams& h, const ChainConfig& cfg,
                        const LdaOptions& opts = {}) {
    const std::size_t n = train.size();
    const std::size_t p = train.dim();
    const std::size_t n1 = train.count(1);
    const std::size_t n0 = train.count(0);
    if (n1 == 0 || n0 == 0) throw InsufficientClassCount("both classes must be present in the training set");

    LdaModel model;
    model.mu0.assign(p, 0.0);
    model.mu1.assign(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto& mu = train.labels[r] == 1 ? model.mu1 : model.mu0;
        for (std::size_t k = 0; k < p; ++k) mu[k] += train.features(r, k);
    }
    for (std::size_t k = 0; k < p; ++k) {
        model.mu0[k] /= static_cast<double>(n0);
        model.mu1[k] /= static_cast<double>(n1);
    }
    model.log_pi0 = std::log(static_cast<double>(n0) / static_cast<double>(n));
    model.log_pi1 = std::log(static_cast<double>(n1) / static_cast<double>(n));

    DenseMatrix centered(n, p);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& mu = train.labels[r] == 1 ? model.mu1 : model.mu0;
        for (std::size_t k = 0; k < p; ++k) centered(r, k) = train.features(r, k) - mu[k];
    }
    Vector scale(p, 1.0);
    if (opts.standardize) {
        for (std::size_t k = 0; k < p; ++k) {
            double ss = 0.0;
            for (std::size_t r = 0; r < n; ++r) ss += centered(r, k) * centered(r, k);
            scale[k] = std::sqrt(ss / static_cast<double>(n));
            if (!(scale[k] > 0.0)) throw Error("feature " + std::to_string(k) + " has zero within-class variance");
            for (std::size_t r = 0; r < n; ++r) centered(r, k) /= scale[k];
        }
    }
    const SymMatrix s = sample_cov(centered);

    SymMatrix sigma_hat;
    if (opts.estimator == Estimator::SampleCov) {
        sigma_hat = s;
    } else {
        ChainConfig c = cfg;
        c.selector = opts.estimator == Estimator::ProposedMap ? Selector::MAP : Selector::MPM;
        model.fit = estimate_from_cov(s, n, h, c);
        sigma_hat = model.fit->sigma_hat;
    }
    SymMatrix omega = inverse_pd(sigma_hat);
    if (opts.standardize)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j <= i; ++j) omega.set(i, j, omega(i, j) / (scale[i] * scale[j]));
    model.omega_hat = std::move(omega);
    return model;
}

/// Discriminant scores (class 0, class 1).
inline std::pair<double, double> discriminants(const LdaModel& model, std::span<const double> x) {
    auto score = [&](const Vector& mu, double log_pi) {
        const Vector om = model.omega_hat.multiply(mu);
        double xt = 0.0, mt = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k) {
            xt += x[k] * om[k];
            mt += mu[k] * om[k];
        }
        return xt - 0.5 * mt + log_pi;
    };
    return {score(model.mu0, model.log_pi0), score(model.mu1, model.log_pi1)};
}

/// argmax of the two discriminants; ties go to class 0.
inline int predict(const LdaModel& model, std::span<const double> x) {
    const auto [d0, d1] = discriminants(model, x);
    return d1 > d0 ? 1 : 0;
}

inline double error_rate(const LdaModel& model, const LabeledDataset& test) {
    if (test.size() == 0) throw EmptyTestSet();
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < test.size(); ++r)
        if (predict(model, test.features.row(r)) != test.labels[r]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(test.size());
}

struct LdaExperimentReport {
    std::size_t reps = 0;
    Summary error_rate;
    std::vector<double> per_rep;
};

/// Replication r splits with stream seed^r and seeds its chain with
/// cfg.seed^r. Training counts default to 72 malignant / 119 benign.
inline LdaExperimentReport run_lda_experiment(const LabeledDataset& data, std::size_t reps, std::uint64_t seed,
                                              const Hyperparams& h, const ChainConfig& cfg, const LdaOptions& opts,
                                              int jobs = 1, std::size_t m1 = 72, std::size_t m0 = 119,
                                              const std::function<void(std::size_t, double)>& progress = {}) {
    if (reps < 1) throw Error("reps must be >= 1");
    LdaExperimentReport rep;
    rep.reps = reps;
    rep.per_rep.assign(reps, 0.0);
    std::mutex mu;
    parallel_for(reps, jobs, [&](std::size_t r) {
        Rng rng(replication_seed(seed, r));
        const auto split = stratified_split(data, m1, m0, rng);
        ChainConfig c = cfg;
        c.seed = replication_seed(cfg.seed, r);
        const auto model = fit_lda(split.train, h, c, opts);
        rep.per_rep[r] = error_rate(model, split.test);
        if (progress) {
            std::lock_guard lock(mu);
            progress(r, rep.per_rep[r]);
        }
    });
    rep.error_rate = summarize(rep.per_rep);
    return rep;
}

}  // namespace covlap
