// covlap command-line driver: gen | fit | bench | lda
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "covlap/covlap.hpp"

namespace fs = std::filesystem;
using namespace covlap;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void print_error_json(const std::string& command, const std::string& message) {
    std::cerr << io::json{{"command", command}, {"error", message}}.dump() << '\n';
}

io::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? io::RunConfig{} : io::load_config(path);
}

fs::path sigma_path_for(const fs::path& out) {
    fs::path p = out;
    p.replace_extension(".sigma.csv");
    return p;
}

std::vector<Estimator> parse_estimator_list(const std::string& csv) {
    std::vector<Estimator> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(parse_estimator(item));
        } catch (const Error& e) {
            throw io::ConfigError(e.what());
        }
    }
    if (out.empty()) throw io::ConfigError("--estimators is empty");
    return out;
}

struct GenArgs {
    int model = 0;
    std::size_t p = 0, n = 0;
    std::uint64_t seed = 0;
    std::string out, truth;
};

int cmd_gen(const GenArgs& a) {
    const ModelSpec spec{a.model, a.p, a.n, a.seed};
    spec.validate();
    Rng truth_rng(mix_seed(spec.seed));
    const SymMatrix truth = gen_model(spec, truth_rng);
    Rng data_rng(replication_seed(spec.seed, 0));
    const DenseMatrix x = sample_mvn(spec.n, truth, data_rng);
    io::write_file_atomic(a.out, io::to_csv(x));
    io::write_file_atomic(a.truth, io::to_csv(truth));
    return 0;
}

struct FitArgs {
    std::string data, config, out;
    std::optional<std::uint64_t> seed;
};

int cmd_fit(const FitArgs& a) {
    const auto rc = config_or_default(a.config);
    const DenseMatrix x = io::read_csv_matrix(a.data);
    const Hyperparams h = rc.hyper_for(x.cols());
    h.validate();
    ChainConfig chain = rc.chain_for(h);
    chain.seed = io::resolve_seed(a.seed, rc.chain.seed);
    const FitResult fr = estimate(x, h, chain);
    const fs::path sigma = sigma_path_for(a.out);
    io::write_file_atomic(sigma, io::to_csv(fr.sigma_hat));
    io::write_file_atomic(a.out, io::fit_result_json(fr, sigma.string()).dump(2) + "\n");
    for (const auto& w : fr.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

struct BenchArgs {
    int model = 0;
    std::size_t p = 0, n = 0, reps = 0;
    std::uint64_t seed = 0;
    std::string config, out;
    std::string estimators = "proposed-mpm,proposed-map,sample-cov";
    int jobs = 1;
};

int cmd_bench(const BenchArgs& a) {
    const auto rc = config_or_default(a.config);
    const ModelSpec spec{a.model, a.p, a.n, a.seed};
    const Hyperparams h = rc.hyper_for(a.p);
    ChainConfig chain = rc.chain_for(h);
    chain.seed = io::resolve_seed(a.seed, rc.chain.seed);
    const auto ests = parse_estimator_list(a.estimators);
    const auto report = run_benchmark(spec, a.reps, h, chain, ests, a.jobs,
                                      [](std::size_t r, const ReplicationRecord& rec) {
                                          std::cerr << "rep " << r << (rec.ok ? " ok" : " failed: " + rec.error)
                                                    << '\n';
                                      });
    io::write_file_atomic(a.out, io::benchmark_json(report).dump(2) + "\n");
    if (report.failures == report.reps) {
        std::cerr << "all replications failed\n";
        return kExitRuntime;
    }
    return 0;
}

struct LdaArgs {
    std::string wdbc, config, out;
    std::size_t reps = 10;
    std::uint64_t seed = 0;
    std::string estimator = "proposed-mpm";
    int jobs = 1;
    bool standardize = false;
};

int cmd_lda(const LdaArgs& a) {
    const auto rc = config_or_default(a.config);
    Estimator est;
    try {
        est = parse_estimator(a.estimator);
    } catch (const Error& e) {
        throw io::ConfigError(e.what());
    }
    const auto data = io::read_wdbc(a.wdbc);
    const Hyperparams h = rc.hyper_for(data.dim());
    ChainConfig chain = rc.chain_for(h);
    chain.seed = io::resolve_seed(a.seed, rc.chain.seed);
    const LdaOptions opts{est, a.standardize || rc.standardize};
    const auto report = run_lda_experiment(data, a.reps, a.seed, h, chain, opts, a.jobs, 72, 119,
                                           [](std::size_t r, double err) {
                                               std::cerr << "rep " << r << " error " << err << '\n';
                                           });
    io::write_file_atomic(a.out, io::lda_json(report, est, opts.standardize).dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian sparse covariance estimation with Laplace-approximated structure posteriors", "covlap"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic data set and its true covariance");
    g->add_option("--model", gen.model, "Covariance model 1-5")->required()->check(CLI::Range(1, 5));
    g->add_option("--p", gen.p, "Dimension")->required()->check(CLI::Range(2, 100000));
    g->add_option("--n", gen.n, "Sample size")->required()->check(CLI::Range(2, 100000000));
    g->add_option("--seed", gen.seed, "Random seed")->required();
    g->add_option("--out", gen.out, "Data matrix CSV (n x p)")->required();
    g->add_option("--truth", gen.truth, "True covariance CSV (p x p)")->required();

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Estimate a sparse covariance from a data matrix");
    f->add_option("--data", fit.data, "Data matrix CSV (n x p)")->required()->check(CLI::ExistingFile);
    f->add_option("--config", fit.config, "JSON configuration")->check(CLI::ExistingFile);
    f->add_option("--out", fit.out, "Result JSON; the covariance goes to <out>.sigma.csv")->required();
    f->add_option("--seed", fit.seed, "Chain seed (overrides COVLAP_SEED and config)");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Replicated simulation benchmark");
    b->add_option("--model", bench.model, "Covariance model 1-5")->required()->check(CLI::Range(1, 5));
    b->add_option("--p", bench.p, "Dimension")->required()->check(CLI::Range(2, 100000));
    b->add_option("--n", bench.n, "Sample size")->required()->check(CLI::Range(2, 100000000));
    b->add_option("--reps", bench.reps, "Replications")->required()->check(CLI::Range(1, 1000000));
    b->add_option("--seed", bench.seed, "Seed for the truth, the data and the chains")->required();
    b->add_option("--config", bench.config, "JSON configuration")->check(CLI::ExistingFile);
    b->add_option("--out", bench.out, "Report JSON")->required();
    b->add_option("--estimators", bench.estimators, "Comma list of proposed-mpm, proposed-map, sample-cov");
    b->add_option("--jobs", bench.jobs, "Worker threads")->check(CLI::Range(1, 1024));

    LdaArgs lda;
    auto* l = app.add_subcommand("lda", "Breast cancer LDA classification experiment");
    l->add_option("--wdbc", lda.wdbc, "WDBC CSV (id,diagnosis,f1..f30)")->required()->check(CLI::ExistingFile);
    l->add_option("--reps", lda.reps, "Random splits")->required()->check(CLI::Range(1, 1000000));
    l->add_option("--seed", lda.seed, "Seed for splits and chains")->required();
    l->add_option("--config", lda.config, "JSON configuration")->check(CLI::ExistingFile);
    l->add_option("--out", lda.out, "Report JSON")->required();
    l->add_option("--estimator", lda.estimator, "proposed-mpm, proposed-map or sample-cov");
    l->add_option("--jobs", lda.jobs, "Worker threads")->check(CLI::Range(1, 1024));
    l->add_flag("--standardize", lda.standardize, "Scale features by within-class standard deviation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*g) return cmd_gen(gen);
        if (*f) return cmd_fit(fit);
        if (*b) return cmd_bench(bench);
        if (*l) return cmd_lda(lda);
    } catch (const io::ConfigError& e) {
        print_error_json(command, e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        print_error_json(command, e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
