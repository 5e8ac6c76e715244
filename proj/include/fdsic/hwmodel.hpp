#pragma once

// Ground-truth full-duplex transmit chain: IQ-mixer imbalance followed by a
// memory-polynomial power amplifier, with every scalar parameter drifting as
// an AR(1) process. Also generates the static/dynamic datasets.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fdsic/baseband.hpp"
#include "fdsic/numeric.hpp"
#include "fdsic/rng.hpp"

namespace fdsic {

struct MixerParams {
    double a_iq = 1.0;    ///< gain imbalance
    double phi_iq = 0.0;  ///< phase imbalance [rad]

    cplx k1() const { return 0.5 * (1.0 + a_iq * std::exp(cplx(0.0, -phi_iq))); }
    cplx k2() const { return 0.5 * (1.0 - a_iq * std::exp(cplx(0.0, phi_iq))); }
};

inline cplx iq_mix(cplx x, cplx k1, cplx k2) { return k1 * x + k2 * std::conj(x); }
inline cplx iq_mix(cplx x, const MixerParams& m) { return iq_mix(x, m.k1(), m.k2()); }

/// Image-rejection ratio in dB; +infinity for a perfectly balanced mixer.
inline double irr_db(const MixerParams& m) {
    const double k2 = std::norm(m.k2());
    if (k2 == 0.0) return std::numeric_limits<double>::infinity();
    return linear_to_db(std::norm(m.k1()) / k2);
}

/// Number of odd orders 1, 3, ..., P.
inline int n_orders(int P) { return (P + 1) / 2; }

/// Memory-polynomial taps h_p[m], stored in (p, m) lexicographic order.
class PaTaps {
public:
    PaTaps() = default;
    PaTaps(int memory_len, int nonlin_order) : M_(memory_len), P_(nonlin_order) {
        if (memory_len <= 0) throw ConfigError("PaTaps: memory length must be positive");
        if (!is_odd_positive(nonlin_order)) throw ConfigError("PaTaps: P must be odd and positive");
        h_.assign(static_cast<std::size_t>(M_ * n_orders(P_)), cplx{});
    }

    int memory_len() const { return M_; }
    int nonlin_order() const { return P_; }
    std::size_t size() const { return h_.size(); }

    static std::size_t index(int p, int m, int M) { return static_cast<std::size_t>((p - 1) / 2 * M + m); }

    cplx& at(int p, int m) { return h_.at(checked(p, m)); }
    const cplx& at(int p, int m) const { return h_.at(checked(p, m)); }

    std::span<cplx> values() { return h_; }
    std::span<const cplx> values() const { return h_; }

    friend bool operator==(const PaTaps&, const PaTaps&) = default;

private:
    std::size_t checked(int p, int m) const {
        if (!is_odd_positive(p) || p > P_ || m < 0 || m >= M_)
            throw ConfigError("PaTaps: index (p=" + std::to_string(p) + ", m=" + std::to_string(m) +
                              ") out of range");
        return index(p, m, M_);
    }

    int M_ = 0;
    int P_ = 0;
    std::vector<cplx> h_;
};

struct HardwareParams {
    MixerParams mixer;
    PaTaps taps;
};

/// PA output for history[m] = x[n - m], m = 0..M-1.
inline cplx pa_output(std::span<const cplx> history, const HardwareParams& hw) {
    const int M = hw.taps.memory_len();
    const int P = hw.taps.nonlin_order();
    if (static_cast<int>(history.size()) != M)
        throw ConfigError("pa_output: history length " + std::to_string(history.size()) +
                          " != M " + std::to_string(M));
    const cplx k1 = hw.mixer.k1();
    const cplx k2 = hw.mixer.k2();
    const auto h = hw.taps.values();
    cplx y{};
    for (int m = 0; m < M; ++m) {
        const cplx z = iq_mix(history[m], k1, k2);
        const double s = std::norm(z);
        cplx f = z;
        for (int i = 0; i < n_orders(P); ++i) {
            y += h[static_cast<std::size_t>(i * M + m)] * f;
            f *= s;
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// AR(1) drift

struct Ar1Process {
    cplx c{};
    double beta = 0.0;
    double sigma_eps = 0.0;
    cplx state{};
    bool is_real_valued = false;

    cplx stationary_mean() const { return c / (1.0 - beta); }
    double stationary_variance() const { return sigma_eps * sigma_eps / (1.0 - beta * beta); }
};

struct Ar1Coeffs {
    cplx c;
    double sigma_eps;
};

inline void check_beta(double beta) {
    if (!(beta >= 0.0 && beta < 1.0))
        throw ConfigError("AR(1): beta must lie in [0, 1) for a stationary process, got " +
                          std::to_string(beta));
}

/// Offset and innovation std giving the requested stationary mean/variance.
inline Ar1Coeffs ar1_moments_to_coeffs(cplx target_mean, double target_var, double beta) {
    check_beta(beta);
    if (target_var < 0.0) throw ConfigError("AR(1): negative target variance");
    return {target_mean * (1.0 - beta), std::sqrt(target_var * (1.0 - beta * beta))};
}

/// W_t = c + beta W_{t-1} + eps_t.
inline cplx ar1_step(Ar1Process& proc, RngStream& rng) {
    cplx eps{};
    if (proc.sigma_eps > 0.0) {
        if (proc.is_real_valued)
            eps = real_gaussian(rng, 0.0, proc.sigma_eps * proc.sigma_eps);
        else
            eps = complex_gaussian(rng, proc.sigma_eps * proc.sigma_eps);
    }
    proc.state = proc.c + proc.beta * proc.state + eps;
    return proc.state;
}

// ---------------------------------------------------------------------------
// Parameter distributions

struct HwDistributionConfig {
    double mean_a_iq = 1.0;
    double var_a_iq = 0.005;
    double mean_phi_iq = 0.0;
    double var_phi_iq = 0.005;
    double tap_power_decay_db = 20.0;
    double rice_k_factor = 10.0;  ///< LOS-to-scattered power ratio of the m = 0 taps
    int M = 3;
    int P = 5;

    void validate() const {
        if (var_a_iq < 0.0 || var_phi_iq < 0.0) throw ConfigError("hw: negative variance");
        if (!(tap_power_decay_db > 0.0)) throw ConfigError("hw: tap_power_decay_db must be > 0");
        if (!(rice_k_factor >= 0.0)) throw ConfigError("hw: rice_k_factor must be >= 0");
        if (M <= 0) throw ConfigError("hw: M must be positive");
        if (!is_odd_positive(P)) throw ConfigError("hw: P must be odd and positive");
    }

    /// Designed ensemble power E|h_p[m]|^2.
    double tap_power(int p, int m) const {
        return db_to_linear(-tap_power_decay_db * ((p - 1) / 2 + m));
    }

    /// Variance of h_p[m] around its (LOS) mean.
    double tap_variance(int p, int m) const {
        const double pw = tap_power(p, m);
        if (m > 0) return pw;
        if (std::isinf(rice_k_factor)) return 0.0;
        return pw / (rice_k_factor + 1.0);
    }

    /// |E h_p[m]|; zero for the Rayleigh taps.
    double tap_mean_magnitude(int p, int m) const {
        if (m > 0) return 0.0;
        const double pw = tap_power(p, m);
        if (std::isinf(rice_k_factor)) return std::sqrt(pw);
        return std::sqrt(pw * rice_k_factor / (rice_k_factor + 1.0));
    }
};

/// One hardware realization together with the stationary means its
/// parameters drift around (the LOS phase of each m = 0 tap is random).
struct HardwareSample {
    HardwareParams params;
    HardwareParams mean;
};

inline HardwareSample sample_initial_hardware(const HwDistributionConfig& cfg, RngStream& rng) {
    cfg.validate();
    HardwareSample s;
    s.mean.mixer = {cfg.mean_a_iq, cfg.mean_phi_iq};
    s.mean.taps = PaTaps(cfg.M, cfg.P);
    s.params.taps = PaTaps(cfg.M, cfg.P);
    s.params.mixer.a_iq = real_gaussian(rng, cfg.mean_a_iq, cfg.var_a_iq);
    s.params.mixer.phi_iq = real_gaussian(rng, cfg.mean_phi_iq, cfg.var_phi_iq);

    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (int p = 1; p <= cfg.P; p += 2) {
        for (int m = 0; m < cfg.M; ++m) {
            cplx mu{};
            if (m == 0) mu = std::polar(cfg.tap_mean_magnitude(p, m), phase(rng));
            s.mean.taps.at(p, m) = mu;
            s.params.taps.at(p, m) = mu + complex_gaussian(rng, cfg.tap_variance(p, m));
        }
    }
    return s;
}

/// Parameter ids in family order: a_iq, phi_iq, then h{p}_{m} in (p, m) order.
inline std::vector<std::string> parameter_ids(int M, int P) {
    std::vector<std::string> ids{"a_iq", "phi_iq"};
    for (int p = 1; p <= P; p += 2)
        for (int m = 0; m < M; ++m) ids.push_back("h" + std::to_string(p) + "_" + std::to_string(m));
    return ids;
}

/// One AR(1) process per scalar hardware parameter, each with its own stream.
class Ar1Family {
public:
    Ar1Family(const HardwareSample& start, const HwDistributionConfig& cfg, double beta,
              std::uint64_t seed)
        : M_(cfg.M), P_(cfg.P) {
        check_beta(beta);
        const auto ids = parameter_ids(M_, P_);
        auto add = [&](cplx mean, double var, cplx init, bool is_real) {
            const auto [c, sigma] = ar1_moments_to_coeffs(mean, var, beta);
            procs_.push_back({c, beta, sigma, init, is_real});
            streams_.push_back(make_stream(seed, "ar1/" + ids[procs_.size() - 1]));
        };
        add(start.mean.mixer.a_iq, cfg.var_a_iq, start.params.mixer.a_iq, true);
        add(start.mean.mixer.phi_iq, cfg.var_phi_iq, start.params.mixer.phi_iq, true);
        for (int p = 1; p <= P_; p += 2)
            for (int m = 0; m < M_; ++m)
                add(start.mean.taps.at(p, m), cfg.tap_variance(p, m), start.params.taps.at(p, m), false);
    }

    std::size_t size() const { return procs_.size(); }
    const std::vector<Ar1Process>& processes() const { return procs_; }

    void step() {
        for (std::size_t i = 0; i < procs_.size(); ++i) ar1_step(procs_[i], streams_[i]);
    }

    HardwareParams current() const {
        HardwareParams hw;
        hw.mixer = {procs_[0].state.real(), procs_[1].state.real()};
        hw.taps = PaTaps(M_, P_);
        auto h = hw.taps.values();
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = procs_[i + 2].state;
        return hw;
    }

private:
    int M_;
    int P_;
    std::vector<Ar1Process> procs_;
    std::vector<RngStream> streams_;
};

inline Ar1Family build_ar1_family(const HardwareSample& start, const HwDistributionConfig& cfg,
                                  double beta, std::uint64_t seed = 0) {
    return Ar1Family(start, cfg, beta, seed);
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetOptions {
    std::size_t static_len = 10000;
    std::size_t dynamic_len = 10000;
    double noise_db = -40.0;  ///< relative to received power; <= -300 disables noise
    bool record_truth = false;
};

struct Dataset {
    std::uint64_t seed = 0;
    double beta = 0.0;
    std::size_t static_len = 0;
    int M = 0;
    int P = 0;
    std::vector<cplx> x;  ///< transmit samples, both periods
    std::vector<cplx> y;  ///< received samples (noisy targets), both periods
    HardwareParams initial;
    /// truth[k][n]: value of parameter_ids()[k] while sample n was generated.
    std::vector<std::vector<cplx>> truth;

    std::size_t size() const { return x.size(); }
    std::size_t dynamic_len() const { return x.size() - static_len; }

    std::span<const cplx> x_static() const { return std::span(x).first(static_len); }
    std::span<const cplx> y_static() const { return std::span(y).first(static_len); }
    std::span<const cplx> x_dynamic() const { return std::span(x).subspan(static_len); }
    std::span<const cplx> y_dynamic() const { return std::span(y).subspan(static_len); }

    /// history[m] = x[n - m], zero before the first sample.
    void history(std::size_t n, std::span<cplx> out) const {
        for (std::size_t m = 0; m < out.size(); ++m) out[m] = n >= m ? x[n - m] : cplx{};
    }
};

inline Dataset generate_dataset(std::uint64_t seed, double beta, const HwDistributionConfig& cfg,
                                const OfdmConfig& ofdm, const DatasetOptions& opt = {}) {
    check_beta(beta);
    cfg.validate();
    const std::size_t n = opt.static_len + opt.dynamic_len;

    Dataset ds;
    ds.seed = seed;
    ds.beta = beta;
    ds.static_len = opt.static_len;
    ds.M = cfg.M;
    ds.P = cfg.P;

    auto ofdm_rng = make_stream(seed, "ofdm");
    ds.x = generate_ofdm_frame(ofdm, n, ofdm_rng).data();

    auto hw_rng = make_stream(seed, "hardware");
    const HardwareSample start = sample_initial_hardware(cfg, hw_rng);
    ds.initial = start.params;
    Ar1Family family(start, cfg, beta, seed);

    if (opt.record_truth) ds.truth.assign(family.size(), std::vector<cplx>(n));
    auto record = [&](std::size_t i) {
        if (!opt.record_truth) return;
        for (std::size_t k = 0; k < family.size(); ++k) ds.truth[k][i] = family.processes()[k].state;
    };

    std::vector<cplx> clean(n);
    std::vector<cplx> hist(static_cast<std::size_t>(cfg.M));
    HardwareParams hw = start.params;
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= opt.static_len) {
            family.step();
            hw = family.current();
        }
        record(i);
        ds.history(i, hist);
        clean[i] = pa_output(hist, hw);
    }

    auto noise_rng = make_stream(seed, "noise");
    ds.y = add_noise(Frame(std::move(clean)), opt.noise_db, noise_rng).data();
    return ds;
}

// ---------------------------------------------------------------------------
// CSV container
//
//   <stem>.csv        sample_index,period,re_x,im_x,re_y,im_y
//   <stem>_truth.csv  parameter,sample_index,re,im      (only if truth recorded)
//
// Values are written with 17 significant digits so a reload is exact.

inline void write_dataset_csv(const Dataset& ds, const std::string& stem) {
    {
        std::ofstream os(stem + ".csv");
        if (!os) throw std::runtime_error("cannot write " + stem + ".csv");
        os << "sample_index,period,re_x,im_x,re_y,im_y\n";
        char buf[160];
        for (std::size_t n = 0; n < ds.size(); ++n) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%.17g\n", n,
                          n < ds.static_len ? "static" : "dynamic", ds.x[n].real(), ds.x[n].imag(),
                          ds.y[n].real(), ds.y[n].imag());
            os << buf;
        }
    }
    if (ds.truth.empty()) return;
    std::ofstream os(stem + "_truth.csv");
    if (!os) throw std::runtime_error("cannot write " + stem + "_truth.csv");
    os << "parameter,sample_index,re,im\n";
    const auto ids = parameter_ids(ds.M, ds.P);
    char buf[160];
    for (std::size_t k = 0; k < ds.truth.size(); ++k) {
        for (std::size_t n = 0; n < ds.truth[k].size(); ++n) {
            std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g\n", ids[k].c_str(), n,
                          ds.truth[k][n].real(), ds.truth[k][n].imag());
            os << buf;
        }
    }
}

/// Loads the sample table of a dataset written by write_dataset_csv.
inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::string line;
    std::getline(is, line);
    if (line != "sample_index,period,re_x,im_x,re_y,im_y")
        throw std::runtime_error(path + ": unexpected header");
    Dataset ds;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field[6];
        for (auto& f : field) std::getline(ss, f, ',');
        if (std::stoull(field[0]) != ds.x.size()) throw std::runtime_error(path + ": bad sample_index");
        if (field[1] == "static") ++ds.static_len;
        ds.x.emplace_back(std::stod(field[2]), std::stod(field[3]));
        ds.y.emplace_back(std::stod(field[4]), std::stod(field[5]));
    }
    return ds;
}

}  // namespace fdsic
