#pragma once

// Transmit-side baseband signals: OFDM frame generation and the power and
// noise utilities shared by the hardware model and the harness.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fdsic/numeric.hpp"
#include "fdsic/rng.hpp"

namespace fdsic {

/// Complex baseband sample sequence; sample n is x[n].
class Frame {
public:
    Frame() = default;
    explicit Frame(std::vector<cplx> samples) : samples_(std::move(samples)) {}

    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const cplx& operator[](std::size_t n) const { return samples_[n]; }
    cplx& operator[](std::size_t n) { return samples_[n]; }
    std::span<const cplx> samples() const { return samples_; }
    std::vector<cplx>& data() { return samples_; }

    auto begin() const { return samples_.begin(); }
    auto end() const { return samples_.end(); }

    friend bool operator==(const Frame&, const Frame&) = default;

private:
    std::vector<cplx> samples_;
};

enum class Constellation { QPSK, QAM16 };

struct OfdmConfig {
    int fft_size = 64;
    int cp_length = 16;
    int active_subcarriers = 52;
    Constellation constellation = Constellation::QPSK;

    int symbol_length() const { return fft_size + cp_length; }

    void validate() const {
        if (fft_size <= 0) throw ConfigError("ofdm: fft_size must be positive");
        if (cp_length < 0 || cp_length >= fft_size)
            throw ConfigError("ofdm: cp_length must satisfy 0 <= cp_length < fft_size");
        if (active_subcarriers <= 0) throw ConfigError("ofdm: no active subcarriers");
        if (active_subcarriers > fft_size - 1)
            throw ConfigError("ofdm: active_subcarriers must leave the DC bin unused");
    }
};

inline double mean_power(std::span<const cplx> x) {
    if (x.empty()) throw ConfigError("mean_power: empty frame");
    double acc = 0.0;
    for (const auto& s : x) acc += std::norm(s);
    return acc / static_cast<double>(x.size());
}

inline double mean_power(const Frame& f) { return mean_power(f.samples()); }

/// Peak-to-average power ratio in dB.
inline double papr_db(const Frame& f) {
    double peak = 0.0;
    for (const auto& s : f) peak = std::max(peak, std::norm(s));
    return linear_to_db(peak / mean_power(f));
}

namespace detail {

inline cplx draw_symbol(Constellation c, RngStream& rng) {
    std::uniform_int_distribution<int> pick(0, c == Constellation::QPSK ? 3 : 15);
    const int v = pick(rng);
    if (c == Constellation::QPSK) {
        const double a = 1.0 / std::sqrt(2.0);
        return {(v & 1) ? a : -a, (v & 2) ? a : -a};
    }
    // Gray-free square 16-QAM, unit average energy.
    constexpr double levels[4] = {-3.0, -1.0, 1.0, 3.0};
    const double s = 1.0 / std::sqrt(10.0);
    return {levels[v & 3] * s, levels[(v >> 2) & 3] * s};
}

/// Active bins: +1..+ceil(K/2) and -floor(K/2)..-1, never DC.
inline std::vector<int> active_bins(const OfdmConfig& cfg) {
    std::vector<int> bins;
    const int upper = (cfg.active_subcarriers + 1) / 2;
    const int lower = cfg.active_subcarriers / 2;
    for (int k = 1; k <= upper; ++k) bins.push_back(k);
    for (int k = 1; k <= lower; ++k) bins.push_back(cfg.fft_size - k);
    return bins;
}

}  // namespace detail

/// Builds an OFDM transmit frame of exactly n_samples, normalized to unit
/// mean power. Whole symbols are generated and the last one is truncated.
inline Frame generate_ofdm_frame(const OfdmConfig& cfg, std::size_t n_samples, RngStream& rng) {
    cfg.validate();
    const auto sym_len = static_cast<std::size_t>(cfg.symbol_length());
    if (n_samples < sym_len)
        throw ConfigError("generate_ofdm_frame: frame shorter than one OFDM symbol");

    const auto bins = detail::active_bins(cfg);
    const std::size_t n_symbols = (n_samples + sym_len - 1) / sym_len;

    Eigen::FFT<double> fft;
    std::vector<cplx> freq(cfg.fft_size);
    std::vector<cplx> time(cfg.fft_size);
    std::vector<cplx> out;
    out.reserve(n_symbols * sym_len);

    for (std::size_t s = 0; s < n_symbols; ++s) {
        std::fill(freq.begin(), freq.end(), cplx{});
        for (int k : bins) freq[k] = detail::draw_symbol(cfg.constellation, rng);
        fft.inv(time, freq);
        out.insert(out.end(), time.end() - cfg.cp_length, time.end());
        out.insert(out.end(), time.begin(), time.end());
    }
    out.resize(n_samples);

    Frame frame(std::move(out));
    const double scale = 1.0 / std::sqrt(mean_power(frame));
    for (auto& v : frame.data()) v *= scale;
    return frame;
}

/// Noise levels at or below this are treated as no noise at all.
inline constexpr double kNoiseFloorDb = -300.0;

/// Adds circularly-symmetric complex Gaussian noise whose per-sample variance
/// is mean_power(frame) * 10^(relative_power_db / 10).
inline Frame add_noise(const Frame& frame, double relative_power_db, RngStream& rng) {
    const double p = mean_power(frame);
    Frame out = frame;
    if (!(relative_power_db > kNoiseFloorDb)) return out;
    const double var = p * db_to_linear(relative_power_db);
    for (auto& v : out.data()) v += complex_gaussian(rng, var);
    return out;
}

}  // namespace fdsic
