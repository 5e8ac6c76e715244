#pragma once

// Cancellation quality and arithmetic-complexity accounting.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdsic/adapt.hpp"
#include "fdsic/cancelers.hpp"
#include "fdsic/numeric.hpp"
#include "fdsic/op_counter.hpp"
#include "fdsic/rng.hpp"

namespace fdsic {

/// Reported when the residual is numerically zero.
inline constexpr double kCancellationCapDb = 300.0;

/// C = 10 log10(sum |t|^2 / sum |t - y|^2). Non-finite estimates give -inf.
inline double cancellation_db(std::span<const cplx> targets, std::span<const cplx> estimates) {
    if (targets.size() != estimates.size()) throw ConfigError("cancellation_db: length mismatch");
    if (targets.empty()) throw ConfigError("cancellation_db: empty sequences");
    double sig = 0.0;
    double res = 0.0;
    for (std::size_t n = 0; n < targets.size(); ++n) {
        sig += std::norm(targets[n]);
        res += std::norm(targets[n] - estimates[n]);
    }
    if (sig == 0.0) throw ConfigError("cancellation_db: all-zero targets");
    if (!std::isfinite(res)) return -std::numeric_limits<double>::infinity();
    if (res < 1e-30 * sig) return kCancellationCapDb;
    return linear_to_db(sig / res);
}

/// Static minus dynamic cancellation; negative when tracking improved.
inline double cancellation_drop(double static_db, double dynamic_db) { return static_db - dynamic_db; }

// ---------------------------------------------------------------------------
// Methods

enum class Method { LinearLms, WlmpLms, WlmpRls, MbnnFtrl };

inline constexpr Method kAllMethods[] = {Method::LinearLms, Method::WlmpLms, Method::WlmpRls,
                                         Method::MbnnFtrl};

inline const char* to_string(Method m) {
    switch (m) {
        case Method::LinearLms: return "linear-lms";
        case Method::WlmpLms: return "wlmp-lms";
        case Method::WlmpRls: return "wlmp-rls";
        case Method::MbnnFtrl: return "mbnn-ftrl";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    for (Method m : kAllMethods)
        if (s == to_string(m)) return m;
    throw ConfigError("unknown method '" + s + "'");
}

inline CancelerKind canceler_of(Method m) {
    switch (m) {
        case Method::LinearLms: return CancelerKind::Linear;
        case Method::WlmpLms:
        case Method::WlmpRls: return CancelerKind::Wlmp;
        case Method::MbnnFtrl: return CancelerKind::Mbnn;
    }
    return CancelerKind::Linear;
}

// ---------------------------------------------------------------------------
// Operation counts

/// Real-valued operations for one prediction plus one parameter update.
struct OpCountReport {
    std::uint64_t n_params = 0;
    std::uint64_t n_add = 0;
    std::uint64_t n_mult = 0;
    std::uint64_t n_div = 0;
    std::uint64_t n_sqrt = 0;

    friend bool operator==(const OpCountReport&, const OpCountReport&) = default;
};

inline OpCountReport make_report(std::uint64_t params, const RealOps& r) {
    return {params, r.add, r.mult, r.div, r.sqrt};
}

inline std::string csv_header_op_counts() { return "method,n_params,n_add,n_mult,n_div,n_sqrt"; }

inline std::string csv_row(Method m, const OpCountReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%llu,%llu,%llu", to_string(m),
                  static_cast<unsigned long long>(r.n_params), static_cast<unsigned long long>(r.n_add),
                  static_cast<unsigned long long>(r.n_mult), static_cast<unsigned long long>(r.n_div),
                  static_cast<unsigned long long>(r.n_sqrt));
    return buf;
}

/// Published per-update counts for M = 3, P = 5, used as the comparison
/// baseline in complexity reports.
inline OpCountReport reference_counts(Method m) {
    switch (m) {
        case Method::LinearLms: return {6, 47, 21, 0, 0};
        case Method::WlmpLms: return {72, 509, 219, 0, 0};
        case Method::WlmpRls: return {72, 34668, 16092, 72, 0};
        case Method::MbnnFtrl: return {22, 657, 391, 40, 22};
    }
    return {};
}

/// Closed-form counts for the prediction + update code paths in adapt.hpp
/// and cancelers.hpp, under the convention documented in op_counter.hpp.
/// WLMP basis functions are taken as precomputed; the MBNN count includes
/// its mixer stage, backpropagation and the FTRL update.
inline OpCountReport count_ops_analytic(Method method, int M, int P) {
    ComplexOps c;
    RealOps extra;
    const auto params = static_cast<std::uint64_t>(canceler_real_param_count(canceler_of(method), M, P));
    switch (method) {
        case Method::LinearLms:
        case Method::WlmpLms: {
            const std::uint64_t N = method == Method::LinearLms ? static_cast<std::uint64_t>(M)
                                                                 : wlmp_size(M, P);
            // w.phi: N mult, N-1 add; error: 1 add; mu*e: 1 mult; update: N mult, N add.
            c.mult = 2 * N + 1;
            c.add = 2 * N;
            break;
        }
        case Method::WlmpRls: {
            const std::uint64_t N = wlmp_size(M, P);
            // prediction N / N-1, error 1, P phi N^2 / N^2-N, phi^H pi N / N-1,
            // lambda + 1, gain N divs, weights N / N, phi^H P N^2 / N^2-N,
            // P update 2N^2 / N^2.
            c.mult = 4 * N * N + 3 * N;
            c.add = 3 * N * N + N;
            c.div = N;
            break;
        }
        case Method::MbnnFtrl: {
            const std::uint64_t m = static_cast<std::uint64_t>(M);
            const std::uint64_t I = static_cast<std::uint64_t>(n_orders(P));
            const std::uint64_t taps = m * I;
            const std::uint64_t spow = I > 2 ? I - 2 : 0;
            // forward: mixer 2 mult + 1 add, |z|^2 1 mult, powers I-1 mult per
            // lag; output N_t mult, N_t-1 add. error 1 add.
            // backward: -2e 1 mult; per tap 6 mult, 1 div, 1 add; |z|^(2k) powers;
            // per lag I-1 adds for G_z; k1/k2 gradients 2 mult per lag and
            // 2(M-1) adds.
            c.mult = 7 * taps + m * (I + 4) + m * spow + 1;
            c.div = taps;
            c.add = 2 * taps + m * (I + 2) - 2;
            // FTRL: per real coordinate 4 mult, 5 add, 1 div, 1 sqrt.
            extra.mult = 4 * params;
            extra.add = 5 * params;
            extra.div = params;
            extra.sqrt = params;
            break;
        }
    }
    return make_report(params, complex_ops_to_real(c) + extra);
}

struct InstrumentedCount {
    OpCountReport report;          ///< per-sample average
    bool sample_independent = true;  ///< every probe sample had identical counts
    std::size_t samples = 0;
};

namespace detail {

using CC = counted::Complex;
using CR = counted::Real;

inline std::vector<CC> to_counted(std::span<const cplx> v) { return {v.begin(), v.end()}; }

inline OpCountReport tally_report(std::uint64_t params, const counted::Tally& t) {
    return make_report(params, t.to_real());
}

}  // namespace detail

/// Runs the real prediction + update path through the counting types on
/// random probe data and returns per-sample operation counts.
inline InstrumentedCount count_ops_instrumented(Method method, int M, int P, int n_probe_samples,
                                                std::uint64_t seed = 1) {
    using detail::CC;
    using detail::CR;
    if (n_probe_samples < 1) throw ConfigError("count_ops_instrumented: need at least one probe sample");
    auto rng = make_stream(seed, "op-count-probe");
    const auto params = static_cast<std::uint64_t>(canceler_real_param_count(canceler_of(method), M, P));

    std::vector<OpCountReport> per_sample;
    auto draw = [&](std::size_t n) {
        std::vector<cplx> v(n);
        for (auto& x : v) x = complex_gaussian(rng, 1.0);
        return v;
    };

    if (method == Method::LinearLms || method == Method::WlmpLms || method == Method::WlmpRls) {
        const std::size_t N = method == Method::LinearLms ? static_cast<std::size_t>(M) : wlmp_size(M, P);
        auto w = detail::to_counted(draw(N));
        LmsState<CC> lms(1e-3);
        RlsState<CC> rls(N, 0.999, 100.0);
        for (int s = 0; s < n_probe_samples; ++s) {
            const auto hist = draw(static_cast<std::size_t>(M));
            const auto phi_plain = method == Method::LinearLms ? hist : wlmp_basis(hist, M, P);
            const auto phi = detail::to_counted(phi_plain);
            const CC target(complex_gaussian(rng, 1.0));
            counted::Tally t;
            {
                counted::Scope scope(t);
                if (method == Method::WlmpRls)
                    rls_step<CC>(w, phi, target, rls);
                else
                    lms_step<CC>(w, phi, target, lms);
            }
            per_sample.push_back(detail::tally_report(params, t));
        }
    } else {
        MbnnCanceler<CC> net(M, P);
        std::vector<CR> w(net.n_real_params());
        std::vector<double> w0(w.size());
        {
            std::normal_distribution<double> nd(0.0, 0.3);
            for (auto& v : w0) v = nd(rng);
            w0[0] += 1.0;  // k1 near identity
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = CR(w0[i]);
        }
        net.set_real_params(std::span<const CR>(w));
        FtrlState<CR> ftrl(w.size(), {});
        ftrl.start_from(w0);
        MbnnTape<CC> tape;
        std::vector<CR> grad(w.size());
        for (int s = 0; s < n_probe_samples; ++s) {
            const auto hist = detail::to_counted(draw(static_cast<std::size_t>(M)));
            const CC target(complex_gaussian(rng, 1.0));
            counted::Tally t;
            {
                counted::Scope scope(t);
                const CC y = mbnn_forward<CC>(net, hist, tape);
                const CC e = target - y;
                mbnn_backward<CC>(net, tape, e, grad);
                ftrl_step<CR>(w, grad, ftrl);
            }
            net.set_real_params(std::span<const CR>(w));
            per_sample.push_back(detail::tally_report(params, t));
        }
    }

    InstrumentedCount out;
    out.samples = per_sample.size();
    long double add = 0, mult = 0, div = 0, sq = 0;
    for (const auto& r : per_sample) {
        out.sample_independent = out.sample_independent && r == per_sample.front();
        add += r.n_add, mult += r.n_mult, div += r.n_div, sq += r.n_sqrt;
    }
    const long double n = static_cast<long double>(per_sample.size());
    out.report = {params, static_cast<std::uint64_t>(std::llround(add / n)),
                  static_cast<std::uint64_t>(std::llround(mult / n)),
                  static_cast<std::uint64_t>(std::llround(div / n)),
                  static_cast<std::uint64_t>(std::llround(sq / n))};
    return out;
}

/// (adds + mults) per update times the oversampling rate. Divisions and
/// square roots are not included.
inline double flops_projection(const OpCountReport& r, long long oversampling) {
    if (oversampling < 1) throw ConfigError("flops_projection: oversampling must be >= 1");
    return static_cast<double>(r.n_add + r.n_mult) * static_cast<double>(oversampling);
}

}  // namespace fdsic
