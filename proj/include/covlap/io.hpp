#pragma once

// Matrix CSV, JSON run configuration and result serialization.
//
// Matrix CSV: one line per row, comma-separated decimal literals, no header,
// '\n' terminated. Values are written in shortest round-trip form.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "covlap/error.hpp"
#include "covlap/lda.hpp"
#include "covlap/sampler.hpp"
#include "covlap/simbench.hpp"
#include "covlap/symmat.hpp"

namespace covlap::io {

using nlohmann::json;

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string to_csv(const DenseMatrix& m) {
    std::string out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

inline std::string to_csv(const SymMatrix& m) {
    DenseMatrix d(m.dim(), m.dim());
    for (std::size_t i = 0; i < m.dim(); ++i)
        for (std::size_t j = 0; j < m.dim(); ++j) d(i, j) = m(i, j);
    return to_csv(d);
}

inline DenseMatrix parse_csv_matrix(std::istream& in) {
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t count = 0;
        std::size_t start = 0;
        while (true) {
            const std::size_t end = line.find(',', start);
            const std::string_view field(line.data() + start, (end == std::string::npos ? line.size() : end) - start);
            double v = 0.0;
            const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
            if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty())
                throw ParseError("bad numeric field '" + std::string(field) + "'", line_no);
            values.push_back(v);
            ++count;
            if (end == std::string::npos) break;
            start = end + 1;
        }
        if (rows == 0)
            cols = count;
        else if (count != cols)
            throw ParseError("expected " + std::to_string(cols) + " columns, got " + std::to_string(count), line_no);
        ++rows;
    }
    if (rows == 0) throw ParseError("empty matrix file", line_no);
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = values[i * cols + j];
    return m;
}

inline DenseMatrix read_csv_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_csv_matrix(in);
}

/// Reads a square CSV matrix that must be symmetric to 1e-12 relative.
inline SymMatrix read_sym_matrix(const std::filesystem::path& path) {
    const auto d = read_csv_matrix(path);
    if (d.rows() != d.cols()) throw DimensionMismatch(path.string() + ": matrix is not square");
    double scale = 0.0;
    for (double v : d.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(d(i, j) - d(j, i)) > 1e-12 * std::max(1.0, scale))
                throw Error(path.string() + ": matrix is not symmetric");
    return SymMatrix::from_rows(d.rows(), d.data());
}

/// Writes via a temporary sibling file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

/// Parsed run configuration. q stays unset until the dimension is known.
struct RunConfig {
    std::optional<double> q;
    double v = 1.0;
    double lambda = 1.0;
    double zero_threshold = 0.001;
    double bcd_tol = 1e-6;
    int bcd_max_iter = 1000;
    ChainConfig chain;
    std::optional<double> init_q;
    bool standardize = false;

    Hyperparams hyper_for(std::size_t p) const {
        Hyperparams h = Hyperparams::defaults_for(p);
        if (q) h.q = *q;
        h.v = v;
        h.lambda = lambda;
        h.zero_threshold = zero_threshold;
        h.bcd_tol = bcd_tol;
        h.bcd_max_iter = bcd_max_iter;
        return h;
    }

    ChainConfig chain_for(const Hyperparams& h) const {
        ChainConfig c = chain;
        c.init_q = init_q.value_or(h.q);
        return c;
    }
};

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    RunConfig rc;
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        detail::reject_unknown(j, {"prior", "chain", "bcd", "zero_threshold", "lda"}, "");
        if (j.contains("prior")) {
            const auto& pr = j.at("prior");
            detail::reject_unknown(pr, {"q", "v", "lambda"}, "prior.");
            if (pr.contains("q")) rc.q = pr.at("q").get<double>();
            detail::read_opt(pr, "v", rc.v);
            detail::read_opt(pr, "lambda", rc.lambda);
        }
        if (j.contains("chain")) {
            const auto& ch = j.at("chain");
            detail::reject_unknown(ch, {"burn_in", "iterations", "seed", "selector", "init", "init_q"}, "chain.");
            detail::read_opt(ch, "burn_in", rc.chain.burn_in);
            detail::read_opt(ch, "iterations", rc.chain.iterations);
            detail::read_opt(ch, "seed", rc.chain.seed);
            if (ch.contains("selector")) {
                const auto s = ch.at("selector").get<std::string>();
                if (s == "mpm")
                    rc.chain.selector = Selector::MPM;
                else if (s == "map")
                    rc.chain.selector = Selector::MAP;
                else
                    throw ConfigError("chain.selector must be \"mpm\" or \"map\"");
            }
            if (ch.contains("init")) {
                const auto s = ch.at("init").get<std::string>();
                if (s == "empty")
                    rc.chain.init = InitKind::Empty;
                else if (s == "full")
                    rc.chain.init = InitKind::Full;
                else if (s == "random")
                    rc.chain.init = InitKind::Random;
                else
                    throw ConfigError("chain.init must be \"empty\", \"full\" or \"random\"");
            }
            if (ch.contains("init_q")) rc.init_q = ch.at("init_q").get<double>();
        }
        if (j.contains("bcd")) {
            const auto& b = j.at("bcd");
            detail::reject_unknown(b, {"tol", "max_iter"}, "bcd.");
            detail::read_opt(b, "tol", rc.bcd_tol);
            detail::read_opt(b, "max_iter", rc.bcd_max_iter);
        }
        detail::read_opt(j, "zero_threshold", rc.zero_threshold);
        if (j.contains("lda")) {
            const auto& l = j.at("lda");
            detail::reject_unknown(l, {"standardize"}, "lda.");
            detail::read_opt(l, "standardize", rc.standardize);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    try {
        Hyperparams h = rc.hyper_for(2);
        h.validate();
        rc.chain.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return rc;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

/// Seed precedence: explicit flag, then COVLAP_SEED, then the config value.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed) {
    if (flag) return *flag;
    if (const char* env = std::getenv("COVLAP_SEED"); env && *env) {
        std::uint64_t v = 0;
        const std::string_view sv(env);
        const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
        if (res.ec != std::errc{} || res.ptr != sv.data() + sv.size())
            throw ConfigError("COVLAP_SEED must be an unsigned integer");
        return v;
    }
    return config_seed;
}

inline json config_json(const Hyperparams& h, const ChainConfig& c) {
    return json{{"prior", {{"q", h.q}, {"v", h.v}, {"lambda", h.lambda}}},
                {"chain",
                 {{"burn_in", c.burn_in},
                  {"iterations", c.iterations},
                  {"seed", c.seed},
                  {"selector", to_string(c.selector)},
                  {"init", to_string(c.init)},
                  {"init_q", c.init_q}}},
                {"bcd", {{"tol", h.bcd_tol}, {"max_iter", h.bcd_max_iter}}},
                {"zero_threshold", h.zero_threshold}};
}

inline json fit_result_json(const FitResult& fr, const std::string& sigma_csv) {
    std::vector<int> bits;
    bits.reserve(fr.z.size());
    for (std::size_t k = 0; k < fr.z.size(); ++k) bits.push_back(fr.z[k] ? 1 : 0);
    json j{{"z", bits},
           {"selector", to_string(fr.selector)},
           {"log_model_prob", fr.log_model_prob},
           {"acceptance_rate", fr.acceptance_rate},
           {"inclusion_freq", fr.inclusion_freq},
           {"sigma_csv", sigma_csv},
           {"config", config_json(fr.hyper, fr.chain)},
           {"p", fr.sigma_hat.dim()},
           {"n", fr.n},
           {"edges", fr.z.count()},
           {"objective", fr.objective},
           {"bcd_sweeps", fr.bcd_sweeps},
           {"bcd_converged", fr.bcd_converged},
           {"constraint_gap", fr.constraint_gap},
           {"distinct_models", fr.distinct_models},
           {"warnings", fr.warnings}};
    return j;
}

inline json summary_json(const Summary& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; }

inline json benchmark_json(const BenchmarkReport& r) {
    json ests = json::object();
    for (const auto& [est, m] : r.metrics)
        ests[to_string(est)] = json{{"sp", summary_json(m.sp)},
                                    {"se", summary_json(m.se)},
                                    {"rmse", summary_json(m.rmse)},
                                    {"mnorm", summary_json(m.mnorm)},
                                    {"2norm", summary_json(m.norm2)},
                                    {"count", m.count}};
    return json{{"model", r.spec.model_id}, {"p", r.spec.p},       {"n", r.spec.n},
                {"reps", r.reps},           {"seed", r.spec.seed}, {"estimators", ests},
                {"failures", r.failures}};
}

inline json lda_json(const LdaExperimentReport& r, Estimator est, bool standardize) {
    return json{{"reps", r.reps},
                {"estimator", to_string(est)},
                {"standardize", standardize},
                {"error_rate", summary_json(r.error_rate)},
                {"per_rep", r.per_rep}};
}

inline LabeledDataset read_wdbc(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_wdbc(in);
}

}  // namespace covlap::io
