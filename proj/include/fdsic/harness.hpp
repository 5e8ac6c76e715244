#pragma once

// Sweep orchestration: configuration, hyperparameter tuning on a held-out
// seed subset, evaluation over the remaining seeds, and CSV emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fdsic/adapt.hpp"
#include "fdsic/baseband.hpp"
#include "fdsic/hwmodel.hpp"
#include "fdsic/metrics.hpp"
#include "fdsic/protocol.hpp"
#include "fdsic/rng.hpp"

namespace fdsic {

/// Samples per parameter-coherence interval, round(0.1 / (1 - beta)).
inline long long oversampling_factor(double beta) {
    check_beta(beta);
    return std::max(1LL, std::llround(0.1 / (1.0 - beta)));
}

// ---------------------------------------------------------------------------
// Configuration

inline std::vector<double> default_grid(Method m) {
    switch (m) {
        case Method::LinearLms: return log_grid(-5, 6, 4);
        case Method::WlmpLms: return log_grid(-9, 6, 4);
        case Method::WlmpRls:
            return {0.9, 0.95, 0.98, 0.985, 0.99, 0.993, 0.995, 0.997, 0.998, 0.999, 0.9995, 0.9999, 1.0};
        case Method::MbnnFtrl: return log_grid(-4, 6, 4);
    }
    return {};
}

/// Ties between equally scoring candidates go to the slower-adapting value.
inline Prefer tie_preference(Method m) { return m == Method::WlmpRls ? Prefer::Larger : Prefer::Smaller; }

struct ExperimentConfig {
    std::vector<double> betas{0.9, 0.99, 0.999, 0.9999, 0.99999};
    int n_seeds = 50;
    int n_tuning_seeds = 10;
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    DatasetOptions data;
    HwDistributionConfig hw;
    OfdmConfig ofdm;
    ProtocolOptions protocol;
    std::map<Method, std::vector<double>> grids;  ///< missing entries use default_grid
    int probe_samples = 16;                        ///< op-count probe length
    std::string out_dir = "results";
    int jobs = 1;

    static ExperimentConfig quick() {
        ExperimentConfig c;
        c.n_seeds = 10;
        c.n_tuning_seeds = 2;
        return c;
    }

    const std::vector<double>& grid(Method m) const {
        static const std::map<Method, std::vector<double>> defaults = [] {
            std::map<Method, std::vector<double>> d;
            for (Method k : kAllMethods) d[k] = default_grid(k);
            return d;
        }();
        const auto it = grids.find(m);
        return it != grids.end() ? it->second : defaults.at(m);
    }

    std::vector<std::uint64_t> tuning_seeds() const {
        std::vector<std::uint64_t> s;
        for (int i = 0; i < n_tuning_seeds; ++i) s.push_back(static_cast<std::uint64_t>(i));
        return s;
    }

    std::vector<std::uint64_t> evaluation_seeds() const {
        std::vector<std::uint64_t> s;
        for (int i = n_tuning_seeds; i < n_seeds; ++i) s.push_back(static_cast<std::uint64_t>(i));
        return s;
    }

    void validate() const {
        if (betas.empty()) throw ConfigError("config: beta_list is empty");
        for (double b : betas) check_beta(b);
        if (methods.empty()) throw ConfigError("config: no methods selected");
        if (n_tuning_seeds < 1) throw ConfigError("config: n_tuning_seeds must be >= 1");
        if (n_tuning_seeds >= n_seeds) throw ConfigError("config: n_tuning_seeds must be < n_seeds");
        if (data.static_len < 1 || data.dynamic_len < 1) throw ConfigError("config: empty period");
        if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
        if (probe_samples < 1) throw ConfigError("config: probe_samples must be >= 1");
        hw.validate();
        ofdm.validate();
        for (const auto& [m, g] : grids)
            if (g.empty()) throw ConfigError(std::string("config: empty grid for ") + to_string(m));
    }
};

namespace detail {

using json = nlohmann::json;

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) ==
            known.end())
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

inline std::vector<double> grid_from_json(const json& g) {
    if (g.is_array()) return g.get<std::vector<double>>();
    reject_unknown(g, {"lo_exp", "decades", "per_decade"}, "grid");
    return log_grid(g.at("lo_exp").get<double>(), g.value("decades", 6), g.value("per_decade", 4));
}

inline const char* to_string(Constellation c) { return c == Constellation::QPSK ? "qpsk" : "qam16"; }

inline Constellation constellation_from_string(const std::string& s) {
    if (s == "qpsk") return Constellation::QPSK;
    if (s == "qam16") return Constellation::QAM16;
    throw ConfigError("config: unknown constellation '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
    using detail::take;
    detail::reject_unknown(j,
                           {"beta_list", "n_seeds", "n_tuning_seeds", "methods", "static_len", "dynamic_len",
                            "noise_db", "hw", "ofdm", "protocol", "grids", "probe_samples", "out_dir", "jobs"},
                           "top level");
    try {
        take(j, "beta_list", c.betas);
        take(j, "n_seeds", c.n_seeds);
        take(j, "n_tuning_seeds", c.n_tuning_seeds);
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& s : j.at("methods")) c.methods.push_back(method_from_string(s.get<std::string>()));
        }
        take(j, "static_len", c.data.static_len);
        take(j, "dynamic_len", c.data.dynamic_len);
        take(j, "noise_db", c.data.noise_db);
        take(j, "probe_samples", c.probe_samples);
        take(j, "out_dir", c.out_dir);
        take(j, "jobs", c.jobs);
        if (j.contains("hw")) {
            const auto& h = j.at("hw");
            detail::reject_unknown(h, {"mean_a_iq", "var_a_iq", "mean_phi_iq", "var_phi_iq", "tap_power_decay_db",
                                       "rice_k_factor", "M", "P"},
                                   "hw");
            take(h, "mean_a_iq", c.hw.mean_a_iq);
            take(h, "var_a_iq", c.hw.var_a_iq);
            take(h, "mean_phi_iq", c.hw.mean_phi_iq);
            take(h, "var_phi_iq", c.hw.var_phi_iq);
            take(h, "tap_power_decay_db", c.hw.tap_power_decay_db);
            take(h, "rice_k_factor", c.hw.rice_k_factor);
            take(h, "M", c.hw.M);
            take(h, "P", c.hw.P);
        }
        if (j.contains("ofdm")) {
            const auto& o = j.at("ofdm");
            detail::reject_unknown(o, {"fft_size", "cp_length", "active_subcarriers", "constellation"}, "ofdm");
            take(o, "fft_size", c.ofdm.fft_size);
            take(o, "cp_length", c.ofdm.cp_length);
            take(o, "active_subcarriers", c.ofdm.active_subcarriers);
            if (o.contains("constellation"))
                c.ofdm.constellation = detail::constellation_from_string(o.at("constellation").get<std::string>());
        }
        if (j.contains("protocol")) {
            const auto& p = j.at("protocol");
            detail::reject_unknown(p, {"mbnn_static_epochs", "ftrl_beta", "ftrl_l1", "ftrl_l2", "rls_delta_scale",
                                       "rls_prime_on_static"},
                                   "protocol");
            take(p, "mbnn_static_epochs", c.protocol.mbnn_static_epochs);
            take(p, "ftrl_beta", c.protocol.ftrl_beta);
            take(p, "ftrl_l1", c.protocol.ftrl_l1);
            take(p, "ftrl_l2", c.protocol.ftrl_l2);
            take(p, "rls_delta_scale", c.protocol.rls_delta_scale);
            take(p, "rls_prime_on_static", c.protocol.rls_prime_on_static);
        }
        if (j.contains("grids")) {
            const auto& g = j.at("grids");
            if (!g.is_object()) throw ConfigError("config: grids must be an object");
            for (auto it = g.begin(); it != g.end(); ++it)
                c.grids[method_from_string(it.key())] = detail::grid_from_json(it.value());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j, std::move(base));
}

/// The settings that influence tuning results, as canonical JSON.
inline nlohmann::json tuning_fingerprint(const ExperimentConfig& c) {
    nlohmann::json j;
    j["n_tuning_seeds"] = c.n_tuning_seeds;
    j["static_len"] = c.data.static_len;
    j["dynamic_len"] = c.data.dynamic_len;
    j["noise_db"] = c.data.noise_db;
    j["hw"] = {{"mean_a_iq", c.hw.mean_a_iq},
               {"var_a_iq", c.hw.var_a_iq},
               {"mean_phi_iq", c.hw.mean_phi_iq},
               {"var_phi_iq", c.hw.var_phi_iq},
               {"tap_power_decay_db", c.hw.tap_power_decay_db},
               {"rice_k_factor", c.hw.rice_k_factor},
               {"M", c.hw.M},
               {"P", c.hw.P}};
    j["ofdm"] = {{"fft_size", c.ofdm.fft_size},
                 {"cp_length", c.ofdm.cp_length},
                 {"active_subcarriers", c.ofdm.active_subcarriers},
                 {"constellation", detail::to_string(c.ofdm.constellation)}};
    j["protocol"] = {{"mbnn_static_epochs", c.protocol.mbnn_static_epochs},
                     {"ftrl_beta", c.protocol.ftrl_beta},
                     {"ftrl_l1", c.protocol.ftrl_l1},
                     {"ftrl_l2", c.protocol.ftrl_l2},
                     {"rls_delta_scale", c.protocol.rls_delta_scale},
                     {"rls_prime_on_static", c.protocol.rls_prime_on_static}};
    for (Method m : kAllMethods) j["grids"][to_string(m)] = c.grid(m);
    return j;
}

inline std::string config_hash(const ExperimentConfig& c) {
    const std::string s = tuning_fingerprint(c).dump();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Output directory: FDSIC_OUT_DIR when set, otherwise the configured one.
inline std::string resolve_out_dir(const ExperimentConfig& c) {
    if (const char* env = std::getenv("FDSIC_OUT_DIR"); env && *env) return env;
    return c.out_dir;
}

// ---------------------------------------------------------------------------
// Worker pool

/// results[i] = fn(i) for i < n, computed by up to `jobs` threads. The
/// result order never depends on scheduling; the first failing index (by
/// position) has its exception rethrown.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int jobs, const std::function<T(std::size_t)>& fn) {
    std::vector<std::optional<T>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-dataset method runner

namespace detail {

inline Dataset make_dataset(const ExperimentConfig& c, std::uint64_t seed, double beta) {
    return generate_dataset(seed, beta, c.hw, c.ofdm, c.data);
}

/// Dynamic-period outcomes of every candidate in `grid` on one dataset,
/// sharing the regressors and static fit across candidates.
inline std::vector<ProtocolOutcome> run_candidates(const Dataset& ds, Method m, const std::vector<double>& grid,
                                                   const ProtocolOptions& opt) {
    std::vector<ProtocolOutcome> out;
    if (m == Method::MbnnFtrl) {
        for (double g : grid) out.push_back(run_mbnn(ds, g, opt));
        return out;
    }
    const RegressorTable rows(ds, canceler_of(m));
    const auto w = static_ls_fit(ds, rows);
    for (double g : grid) out.push_back(run_polynomial(ds, rows, w, m, g, opt));
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tuning

struct TunedEntry {
    Method method;
    double beta;
    std::string config_hash;
    double value;
    double score;  ///< mean dynamic cancellation over tuning seeds
};

class TunedStore {
public:
    std::optional<TunedEntry> find(Method m, double beta, const std::string& hash) const {
        for (const auto& e : entries_)
            if (e.method == m && e.beta == beta && e.config_hash == hash) return e;
        return std::nullopt;
    }

    void put(const TunedEntry& e) {
        for (auto& x : entries_)
            if (x.method == e.method && x.beta == e.beta && x.config_hash == e.config_hash) {
                x = e;
                return;
            }
        entries_.push_back(e);
    }

    const std::vector<TunedEntry>& entries() const { return entries_; }

    static TunedStore load(const std::string& path) {
        TunedStore s;
        std::ifstream in(path);
        if (!in) return s;
        try {
            nlohmann::json j;
            in >> j;
            for (const auto& e : j.at("entries"))
                s.entries_.push_back({method_from_string(e.at("method").get<std::string>()), e.at("beta").get<double>(),
                                      e.at("config_hash").get<std::string>(), e.at("value").get<double>(),
                                      e.value("score", std::numeric_limits<double>::quiet_NaN())});
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("tuned hyperparameter file " + path + ": " + e.what());
        }
        return s;
    }

    void save(const std::string& path) const {
        auto sorted = entries_;
        std::sort(sorted.begin(), sorted.end(), [](const TunedEntry& a, const TunedEntry& b) {
            return std::tie(a.config_hash, a.method, a.beta) < std::tie(b.config_hash, b.method, b.beta);
        });
        nlohmann::json j;
        j["entries"] = nlohmann::json::array();
        for (const auto& e : sorted) {
            nlohmann::json r = {{"method", to_string(e.method)},
                                {"beta", e.beta},
                                {"config_hash", e.config_hash},
                                {"value", e.value}};
            if (std::isfinite(e.score)) r["score"] = e.score;
            j["entries"].push_back(r);
        }
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << j.dump(2) << "\n";
    }

private:
    std::vector<TunedEntry> entries_;
};

inline std::string tuned_path(const std::string& out_dir) { return out_dir + "/tuned.json"; }

/// Selects a hyperparameter for every (method, beta) not already in `store`,
/// using only the tuning seeds. Returns the number of protocol runs made.
inline std::size_t tune(const ExperimentConfig& c, TunedStore& store, bool force = false) {
    const std::string hash = config_hash(c);
    struct Job {
        Method m;
        double beta;
    };
    std::vector<Job> jobs;
    for (double b : c.betas)
        for (Method m : c.methods)
            if (force || !store.find(m, b, hash)) jobs.push_back({m, b});
    if (jobs.empty()) return 0;

    const auto seeds = c.tuning_seeds();
    // One task per (job, seed): dynamic cancellation of every grid candidate.
    const auto scores = parallel_map<std::vector<double>>(jobs.size() * seeds.size(), c.jobs, [&](std::size_t i) {
        const Job& jb = jobs[i / seeds.size()];
        const Dataset ds = detail::make_dataset(c, seeds[i % seeds.size()], jb.beta);
        std::vector<double> v;
        for (const auto& o : detail::run_candidates(ds, jb.m, c.grid(jb.m), c.protocol))
            v.push_back(o.diverged ? -std::numeric_limits<double>::infinity() : o.dynamic_db);
        return v;
    });

    std::size_t runs = 0;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        const auto& grid = c.grid(jobs[k].m);
        // evaluate() replays the precomputed scores so selection and run
        // accounting stay in hyperparam_search.
        auto lookup = [&](std::uint64_t seed, double cand) {
            const auto gi = static_cast<std::size_t>(std::find(grid.begin(), grid.end(), cand) - grid.begin());
            const auto si = static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
            return scores[k * seeds.size() + si][gi];
        };
        char label[96];
        std::snprintf(label, sizeof label, "%s at beta=%.6g", to_string(jobs[k].m), jobs[k].beta);
        const auto r = hyperparam_search(label, grid, seeds, lookup, tie_preference(jobs[k].m));
        runs += r.runs;
        store.put({jobs[k].m, jobs[k].beta, hash, r.best, r.mean_score[r.best_index]});
    }
    return runs;
}

// ---------------------------------------------------------------------------
// Evaluation

struct RunResult {
    Method method;
    double beta;
    long long oversampling;
    std::uint64_t seed;
    double hyperparameter;
    double static_db;
    double dynamic_db;
    double drop_db;
    double flops;
    bool diverged;
};

/// Per-update counts for each method, measured through the counting types.
inline std::map<Method, OpCountReport> measured_counts(const ExperimentConfig& c) {
    std::map<Method, OpCountReport> out;
    for (Method m : kAllMethods) out[m] = count_ops_instrumented(m, c.hw.M, c.hw.P, c.probe_samples).report;
    return out;
}

/// Evaluates every (beta, evaluation seed, method) with the tuned values.
inline std::vector<RunResult> evaluate(const ExperimentConfig& c, const TunedStore& store) {
    const std::string hash = config_hash(c);
    const auto seeds = c.evaluation_seeds();
    const auto counts = measured_counts(c);
    const std::size_t nm = c.methods.size();
    const std::size_t ns = seeds.size();

    std::vector<double> hyper(c.betas.size() * nm);
    for (std::size_t b = 0; b < c.betas.size(); ++b)
        for (std::size_t k = 0; k < nm; ++k) {
            const auto e = store.find(c.methods[k], c.betas[b], hash);
            if (!e) throw ConfigError(std::string("no tuned value for ") + to_string(c.methods[k]));
            hyper[b * nm + k] = e->value;
        }

    // Task index order is (beta, seed, method); rows are later sorted into
    // (beta, method, seed) order.
    auto rows = parallel_map<RunResult>(c.betas.size() * ns * nm, c.jobs, [&](std::size_t i) {
        const std::size_t b = i / (ns * nm);
        const std::size_t s = (i / nm) % ns;
        const std::size_t k = i % nm;
        const double beta = c.betas[b];
        const Method m = c.methods[k];
        const Dataset ds = detail::make_dataset(c, seeds[s], beta);
        const double h = hyper[b * nm + k];
        const ProtocolOutcome o = detail::run_candidates(ds, m, {h}, c.protocol).front();
        const long long os = oversampling_factor(beta);
        return RunResult{m,           beta,         os, seeds[s], h, o.static_db, o.dynamic_db,
                         cancellation_drop(o.static_db, o.dynamic_db), flops_projection(counts.at(m), os),
                         o.diverged};
    });
    std::stable_sort(rows.begin(), rows.end(), [&](const RunResult& a, const RunResult& b) {
        const auto ia = std::find(c.betas.begin(), c.betas.end(), a.beta) - c.betas.begin();
        const auto ib = std::find(c.betas.begin(), c.betas.end(), b.beta) - c.betas.begin();
        const auto ma = std::find(c.methods.begin(), c.methods.end(), a.method) - c.methods.begin();
        const auto mb = std::find(c.methods.begin(), c.methods.end(), b.method) - c.methods.begin();
        return std::tie(ia, ma, a.seed) < std::tie(ib, mb, b.seed);
    });
    return rows;
}

// ---------------------------------------------------------------------------
// CSV emission. All reals use 6 significant digits.

inline std::string fmt6(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline double parse_real(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("malformed number '" + s + "'");
    return v;
}

inline const char* kRunsHeader =
    "method,beta,oversampling,seed,hyperparameter,static_db,dynamic_db,drop_db,flops,diverged";

inline std::string runs_csv(const std::vector<RunResult>& rows) {
    std::string s = std::string(kRunsHeader) + "\n";
    for (const auto& r : rows) {
        s += std::string(to_string(r.method)) + "," + fmt6(r.beta) + "," + std::to_string(r.oversampling) + "," +
             std::to_string(r.seed) + "," + fmt6(r.hyperparameter) + "," + fmt6(r.static_db) + "," +
             fmt6(r.dynamic_db) + "," + fmt6(r.drop_db) + "," + fmt6(r.flops) + "," + (r.diverged ? "1" : "0") +
             "\n";
    }
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    return f;
}

inline std::vector<RunResult> parse_runs_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kRunsHeader) throw ConfigError("runs.csv: unexpected header");
    std::vector<RunResult> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 10) throw ConfigError("runs.csv line " + std::to_string(lineno) + ": expected 10 fields");
        try {
            rows.push_back({method_from_string(f[0]), parse_real(f[1]), std::stoll(f[2]), std::stoull(f[3]),
                            parse_real(f[4]), parse_real(f[5]), parse_real(f[6]), parse_real(f[7]),
                            parse_real(f[8]), f[9] == "1"});
        } catch (const std::logic_error& e) {
            throw ConfigError("runs.csv line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

struct SummaryRow {
    Method method;
    double beta;
    long long oversampling;
    std::size_t n_runs;
    double hyperparameter;
    double mean_static_db;
    double mean_dynamic_db;
    double std_dynamic_db;
    double mean_drop_db;
    double std_drop_db;
    std::size_t diverged_runs;
    double flops;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for a single value, NaN if any is infinite.
inline double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    if (!std::isfinite(mu)) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Groups runs by (method, beta) in first-appearance order.
inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
    std::vector<SummaryRow> out;
    std::vector<std::vector<const RunResult*>> groups;
    for (const auto& r : runs) {
        std::size_t g = 0;
        while (g < out.size() && !(out[g].method == r.method && out[g].beta == r.beta)) ++g;
        if (g == out.size()) {
            out.push_back({r.method, r.beta, r.oversampling, 0, r.hyperparameter, 0, 0, 0, 0, 0, 0, r.flops});
            groups.emplace_back();
        }
        groups[g].push_back(&r);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        std::vector<double> st, dy, dr;
        for (const auto* r : groups[g]) {
            st.push_back(r->static_db);
            dy.push_back(r->dynamic_db);
            dr.push_back(r->drop_db);
            out[g].diverged_runs += r->diverged ? 1 : 0;
        }
        out[g].n_runs = groups[g].size();
        out[g].mean_static_db = detail::mean_of(st);
        out[g].mean_dynamic_db = detail::mean_of(dy);
        out[g].std_dynamic_db = detail::std_of(dy);
        out[g].mean_drop_db = detail::mean_of(dr);
        out[g].std_drop_db = detail::std_of(dr);
    }
    return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string s =
        "method,beta,oversampling,n_runs,hyperparameter,mean_static_db,mean_dynamic_db,std_dynamic_db,"
        "mean_drop_db,std_drop_db,divergence_rate,flops\n";
    for (const auto& r : rows)
        s += std::string(to_string(r.method)) + "," + fmt6(r.beta) + "," + std::to_string(r.oversampling) + "," +
             std::to_string(r.n_runs) + "," + fmt6(r.hyperparameter) + "," + fmt6(r.mean_static_db) + "," +
             fmt6(r.mean_dynamic_db) + "," + fmt6(r.std_dynamic_db) + "," + fmt6(r.mean_drop_db) + "," +
             fmt6(r.std_drop_db) + "," +
             fmt6(static_cast<double>(r.diverged_runs) / static_cast<double>(r.n_runs)) + "," + fmt6(r.flops) +
             "\n";
    return s;
}

inline std::string flops_vs_cancellation_csv(const std::vector<SummaryRow>& rows) {
    std::string s = "method,beta,oversampling,mean_dynamic_db,flops\n";
    for (const auto& r : rows)
        s += std::string(to_string(r.method)) + "," + fmt6(r.beta) + "," + std::to_string(r.oversampling) + "," +
             fmt6(r.mean_dynamic_db) + "," + fmt6(r.flops) + "\n";
    return s;
}

inline std::string complexity_csv(const std::map<Method, OpCountReport>& counts) {
    std::string s = csv_header_op_counts() + "\n";
    for (Method m : kAllMethods) s += csv_row(m, counts.at(m)) + "\n";
    return s;
}

inline constexpr double kComplexityTolerance = 0.20;

/// Counting convention and a field-by-field comparison with the published
/// per-update counts for M = 3, P = 5.
inline std::string complexity_notes(const std::map<Method, OpCountReport>& counts, int M, int P) {
    std::ostringstream o;
    o << "Operation-count convention (real operations per prediction + update)\n"
         "  complex add              2 add\n"
         "  complex mult             3 mult + 5 add\n"
         "  complex / complex        2 complex mult + 2 div\n"
         "  complex x real           2 mult\n"
         "  complex / real           2 div\n"
         "  complex + real           1 add\n"
         "  negation, conj, re/im    free\n"
         "  step sizes, forgetting factors held as complex scalars\n"
         "  WLMP basis functions     precomputed (not counted)\n"
         "  MBNN                     mixer, forward, backprop and FTRL counted\n\n";
    if (M != 3 || P != 5) {
        o << "No published baseline for M=" << M << ", P=" << P << "\n";
        return o.str();
    }
    o << "method       field     measured  published  rel.diff  status\n";
    auto line = [&](Method m, const char* field, std::uint64_t got, std::uint64_t ref, bool exact) {
        const double rel = ref == 0 ? (got == 0 ? 0.0 : 1.0)
                                    : (static_cast<double>(got) - static_cast<double>(ref)) / static_cast<double>(ref);
        const bool ok = exact ? got == ref : std::abs(rel) <= kComplexityTolerance;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-12s %-8s %9llu %10llu %+8.1f%%  %s\n", to_string(m), field,
                      static_cast<unsigned long long>(got), static_cast<unsigned long long>(ref), 100.0 * rel,
                      ok ? "ok" : (exact ? "differs" : "outside tolerance"));
        o << buf;
    };
    for (Method m : kAllMethods) {
        const auto& g = counts.at(m);
        const auto r = reference_counts(m);
        line(m, "n_params", g.n_params, r.n_params, true);
        line(m, "n_add", g.n_add, r.n_add, false);
        line(m, "n_mult", g.n_mult, r.n_mult, false);
        line(m, "n_div", g.n_div, r.n_div, true);
        line(m, "n_sqrt", g.n_sqrt, r.n_sqrt, true);
    }
    o << "\nItemized differences\n"
         "  mbnn-ftrl n_add/n_mult: the derivative of z|z|^(p-1) is formed for every order p,\n"
         "    as (k+1)|z|^(2k) and k f/conj(z); the published table does not itemize this part.\n"
         "  mbnn-ftrl n_div: 9 complex divisions f/conj(z) (one per tap, 2 real each) = 18,\n"
         "    plus 1 per FTRL coordinate = 22; total 40.\n"
         "  wlmp-rls n_div: the gain denominator is complex, so the 36 gain divisions\n"
         "    contribute 2 real divisions each = 72.\n";
    return o.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw std::runtime_error("cannot create output directory " + dir + (ec ? ": " + ec.message() : ""));
}

/// Writes summary.csv and flops_vs_cancellation.csv from runs.csv text.
inline std::vector<SummaryRow> emit_summary(const std::string& out_dir, const std::string& runs_text) {
    const auto rows = summarize(parse_runs_csv(runs_text));
    write_text(out_dir + "/summary.csv", summary_csv(rows));
    write_text(out_dir + "/flops_vs_cancellation.csv", flops_vs_cancellation_csv(rows));
    return rows;
}

inline void emit_complexity(const ExperimentConfig& c, const std::string& out_dir) {
    const auto counts = measured_counts(c);
    write_text(out_dir + "/complexity.csv", complexity_csv(counts));
    write_text(out_dir + "/complexity_notes.txt", complexity_notes(counts, c.hw.M, c.hw.P));
}

struct SweepOutput {
    std::vector<RunResult> runs;
    std::vector<SummaryRow> summary;
    std::size_t tuning_runs = 0;
};

/// Tuning (reusing persisted values), evaluation and emission of all CSVs.
inline SweepOutput run_sweep(const ExperimentConfig& c, const std::string& out_dir) {
    c.validate();
    ensure_dir(out_dir);
    TunedStore store = TunedStore::load(tuned_path(out_dir));
    SweepOutput out;
    out.tuning_runs = tune(c, store);
    store.save(tuned_path(out_dir));
    out.runs = evaluate(c, store);
    const std::string text = runs_csv(out.runs);
    write_text(out_dir + "/runs.csv", text);
    out.summary = emit_summary(out_dir, text);
    emit_complexity(c, out_dir);
    return out;
}

// ---------------------------------------------------------------------------
// FLOPS at matched cancellation

struct CurvePoint {
    double cancellation_db;
    double flops;
};

/// Smallest FLOPS at which a method's curve (points in increasing FLOPS
/// order, joined linearly in cancellation vs log FLOPS) reaches `target`.
inline std::optional<double> flops_at_cancellation(std::vector<CurvePoint> pts, double target) {
    std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.flops < b.flops; });
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!std::isfinite(pts[i].cancellation_db)) continue;
        if (pts[i].cancellation_db >= target) {
            if (i == 0 || !std::isfinite(pts[i - 1].cancellation_db)) return pts[i].flops;
            const auto& a = pts[i - 1];
            const auto& b = pts[i];
            const double t = (target - a.cancellation_db) / (b.cancellation_db - a.cancellation_db);
            return std::exp(std::log(a.flops) + t * (std::log(b.flops) - std::log(a.flops)));
        }
    }
    return std::nullopt;
}

inline std::vector<CurvePoint> curve_of(const std::vector<SummaryRow>& rows, Method m) {
    std::vector<CurvePoint> pts;
    for (const auto& r : rows)
        if (r.method == m) pts.push_back({r.mean_dynamic_db, r.flops});
    return pts;
}

}  // namespace fdsic
