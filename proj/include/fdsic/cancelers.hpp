#pragma once

// Self-interference cancelers: linear FIR, widely-linear memory polynomial
// (WLMP) and the model-based neural network (MBNN) obtained by unfolding the
// mixer + PA model. All predictors are templates over the complex scalar so
// they can be run through the operation counter.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdsic/hwmodel.hpp"
#include "fdsic/numeric.hpp"

namespace fdsic {

enum class CancelerKind { Linear, Wlmp, Mbnn };

inline const char* to_string(CancelerKind k) {
    switch (k) {
        case CancelerKind::Linear: return "linear";
        case CancelerKind::Wlmp: return "wlmp";
        case CancelerKind::Mbnn: return "mbnn";
    }
    return "?";
}

inline CancelerKind canceler_kind_from_string(const std::string& s) {
    if (s == "linear") return CancelerKind::Linear;
    if (s == "wlmp") return CancelerKind::Wlmp;
    if (s == "mbnn") return CancelerKind::Mbnn;
    throw ConfigError("unknown canceler kind '" + s + "'");
}

/// Number of complex WLMP weights, M (P+1)(P+3) / 4.
inline std::size_t wlmp_size(int M, int P) {
    return static_cast<std::size_t>(M * (P + 1) * (P + 3) / 4);
}

/// Flat index of g_{p,q}[m]; order is lexicographic in (p, q, m).
inline std::size_t wlmp_index(int p, int q, int m, int M) {
    // Orders below p contribute sum_{p' < p, odd} (p' + 1) M entries.
    const int k = (p - 1) / 2;
    const int before = k * (k + 1) * M;
    return static_cast<std::size_t>(before + q * M + m);
}

/// Real-valued parameter count of each canceler family.
inline int canceler_real_param_count(CancelerKind kind, int M, int P) {
    if (M < 1 || P < 1 || P % 2 == 0)
        throw ConfigError("canceler shape needs M >= 1 and odd P >= 1 (got M=" + std::to_string(M) +
                          ", P=" + std::to_string(P) + ")");
    switch (kind) {
        case CancelerKind::Linear: return 2 * M;
        case CancelerKind::Wlmp: return M * (P + 1) * (P + 3) / 2;
        case CancelerKind::Mbnn: return (P + 1) * M + 4;
    }
    return 0;
}

/// Accumulates sum_i a[i] * b[i] starting from the first product, so an
/// N-term inner product costs N multiplications and N - 1 additions.
template <typename C>
C inner_product(std::span<const C> a, std::span<const C> b) {
    if (a.size() != b.size() || a.empty())
        throw ConfigError("inner_product: length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
    C acc = a[0] * b[0];
    for (std::size_t i = 1; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// ---------------------------------------------------------------------------
// Linear

template <typename C = cplx>
struct LinearCanceler {
    std::vector<C> taps;  ///< h[m], m = 0..M-1

    LinearCanceler() = default;
    explicit LinearCanceler(int M) : taps(static_cast<std::size_t>(M), C(0.0)) {}

    int memory_len() const { return static_cast<int>(taps.size()); }
};

template <typename C>
C linear_predict(const LinearCanceler<C>& c, std::span<const C> history) {
    if (history.size() != c.taps.size())
        throw ConfigError("linear_predict: history length != M");
    return inner_product<C>(c.taps, history);
}

// ---------------------------------------------------------------------------
// WLMP

/// Basis terms x[n-m]^q conj(x[n-m])^(p-q) in wlmp_index order.
inline std::vector<cplx> wlmp_basis(std::span<const cplx> history, int M, int P) {
    if (static_cast<int>(history.size()) != M) throw ConfigError("wlmp_basis: history length != M");
    if (!is_odd_positive(P)) throw ConfigError("wlmp_basis: P must be odd and positive");
    std::vector<cplx> out(wlmp_size(M, P));
    std::vector<cplx> xp(static_cast<std::size_t>(P + 1));
    std::vector<cplx> cp(static_cast<std::size_t>(P + 1));
    for (int m = 0; m < M; ++m) {
        const cplx x = history[m];
        xp[0] = cp[0] = 1.0;
        for (int k = 1; k <= P; ++k) {
            xp[k] = xp[k - 1] * x;
            cp[k] = cp[k - 1] * std::conj(x);
        }
        for (int p = 1; p <= P; p += 2)
            for (int q = 0; q <= p; ++q) out[wlmp_index(p, q, m, M)] = xp[q] * cp[p - q];
    }
    return out;
}

template <typename C = cplx>
struct WlmpCanceler {
    int M = 0;
    int P = 0;
    std::vector<C> weights;  ///< g_{p,q}[m] in wlmp_index order

    WlmpCanceler() = default;
    WlmpCanceler(int memory_len, int nonlin_order)
        : M(memory_len), P(nonlin_order), weights(wlmp_size(memory_len, nonlin_order), C(0.0)) {}
};

template <typename C>
C wlmp_predict(const WlmpCanceler<C>& c, std::span<const C> basis) {
    if (basis.size() != c.weights.size()) throw ConfigError("wlmp_predict: basis length mismatch");
    return inner_product<C>(c.weights, basis);
}

/// WLMP weights reproducing pa_output exactly: the mixer output
/// z = K1 x + K2 conj(x) is expanded binomially in
/// z^(k+1) conj(z)^k, k = (p - 1) / 2.
inline WlmpCanceler<cplx> wlmp_embed_hardware(const HardwareParams& hw) {
    const int M = hw.taps.memory_len();
    const int P = hw.taps.nonlin_order();
    const cplx k1 = hw.mixer.k1();
    const cplx k2 = hw.mixer.k2();

    // Polynomials in (x, conj x) of homogeneous degree d are stored by the
    // power of x: coeff[a] multiplies x^a conj(x)^(d - a).
    auto times = [](const std::vector<cplx>& poly, cplx cx, cplx cconj) {
        std::vector<cplx> out(poly.size() + 1);
        for (std::size_t a = 0; a < poly.size(); ++a) {
            out[a + 1] += poly[a] * cx;
            out[a] += poly[a] * cconj;
        }
        return out;
    };

    WlmpCanceler<cplx> w(M, P);
    std::vector<cplx> poly{1.0};
    for (int p = 1; p <= P; p += 2) {
        // p = 1: z. Each step up in order multiplies by z * conj(z).
        poly = p == 1 ? times(poly, k1, k2)
                      : times(times(poly, k1, k2), std::conj(k2), std::conj(k1));
        for (int m = 0; m < M; ++m) {
            const cplx h = hw.taps.at(p, m);
            for (int q = 0; q <= p; ++q) w.weights[wlmp_index(p, q, m, M)] = h * poly[q];
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Model-based neural network

/// Unfolded mixer + memory polynomial with trainable k1, k2 and taps.
///
/// Real parameter order (also the save format and FTRL coordinate order):
///   re k1, im k1, re k2, im k2, then re/im of each tap h_p[m] in (p, m) order.
template <typename C = cplx>
class MbnnCanceler {
public:
    MbnnCanceler() = default;
    MbnnCanceler(int M, int P)
        : M_(M), P_(P), taps_(static_cast<std::size_t>(M * n_orders(P)), C(0.0)) {
        if (M <= 0 || !is_odd_positive(P)) throw ConfigError("MbnnCanceler: invalid M or P");
    }

    /// Identity mixer, all taps zero: the usual training start.
    static MbnnCanceler identity_start(int M, int P) {
        MbnnCanceler c(M, P);
        c.k1_ = C(1.0);
        return c;
    }

    /// Parameters equal to a hardware model.
    static MbnnCanceler from_hardware(const HardwareParams& hw) {
        MbnnCanceler c(hw.taps.memory_len(), hw.taps.nonlin_order());
        c.k1_ = C(hw.mixer.k1());
        c.k2_ = C(hw.mixer.k2());
        const auto h = hw.taps.values();
        for (std::size_t i = 0; i < h.size(); ++i) c.taps_[i] = C(h[i]);
        return c;
    }

    int memory_len() const { return M_; }
    int nonlin_order() const { return P_; }
    std::size_t n_complex_params() const { return taps_.size() + 2; }
    std::size_t n_real_params() const { return 2 * n_complex_params(); }

    const C& k1() const { return k1_; }
    const C& k2() const { return k2_; }
    const std::vector<C>& taps() const { return taps_; }
    const C& tap(int p, int m) const { return taps_[PaTaps::index(p, m, M_)]; }

    void set_k1(C v) { k1_ = v, ++revision_; }
    void set_k2(C v) { k2_ = v, ++revision_; }
    void set_tap(int p, int m, C v) { taps_[PaTaps::index(p, m, M_)] = v, ++revision_; }

    /// Bumped on every parameter change; tapes record it.
    std::uint64_t revision() const { return revision_; }

    template <typename R>
    void get_real_params(std::span<R> out) const {
        if (out.size() != n_real_params()) throw ConfigError("MbnnCanceler: real vector size");
        out[0] = real(k1_), out[1] = imag(k1_);
        out[2] = real(k2_), out[3] = imag(k2_);
        for (std::size_t i = 0; i < taps_.size(); ++i) {
            out[4 + 2 * i] = real(taps_[i]);
            out[5 + 2 * i] = imag(taps_[i]);
        }
    }

    template <typename R>
    void set_real_params(std::span<const R> in) {
        if (in.size() != n_real_params()) throw ConfigError("MbnnCanceler: real vector size");
        k1_ = C(in[0], in[1]);
        k2_ = C(in[2], in[3]);
        for (std::size_t i = 0; i < taps_.size(); ++i) taps_[i] = C(in[4 + 2 * i], in[5 + 2 * i]);
        ++revision_;
    }

private:
    int M_ = 0;
    int P_ = 0;
    C k1_ = C(0.0);
    C k2_ = C(0.0);
    std::vector<C> taps_;
    std::uint64_t revision_ = 0;
};

/// Forward intermediates kept for backpropagation.
template <typename C>
struct MbnnTape {
    std::uint64_t revision = 0;
    const void* owner = nullptr;
    std::vector<C> x;   ///< input history, per lag
    std::vector<C> z;   ///< mixer output x_IQ, per lag
    std::vector<C> s;   ///< |x_IQ|^2, per lag
    std::vector<C> f;   ///< z |z|^(p-1), (p, m) order
    C prediction = C(0.0);
};

/// Below this magnitude the conj-derivative of |z|^(p-1) is taken as zero.
inline constexpr double kMagnitudeFloor = 1e-30;

template <typename C>
C mbnn_forward(const MbnnCanceler<C>& c, std::span<const C> history, MbnnTape<C>& tape) {
    const int M = c.memory_len();
    const int I = n_orders(c.nonlin_order());
    if (static_cast<int>(history.size()) != M) throw ConfigError("mbnn_forward: history length != M");

    tape.revision = c.revision();
    tape.owner = &c;
    tape.x.assign(history.begin(), history.end());
    tape.z.resize(static_cast<std::size_t>(M));
    tape.s.resize(static_cast<std::size_t>(M));
    tape.f.resize(static_cast<std::size_t>(M * I));

    for (int m = 0; m < M; ++m) {
        const C& x = history[m];
        const C z = c.k1() * x + c.k2() * conj(x);
        const C s = z * conj(z);
        tape.z[m] = z;
        tape.s[m] = s;
        tape.f[m] = z;
        for (int i = 1; i < I; ++i) tape.f[i * M + m] = tape.f[(i - 1) * M + m] * s;
    }
    tape.prediction = inner_product<C>(c.taps(), tape.f);
    return tape.prediction;
}

template <typename C>
std::pair<C, MbnnTape<C>> mbnn_forward(const MbnnCanceler<C>& c, std::span<const C> history) {
    MbnnTape<C> tape;
    const C y = mbnn_forward(c, history, tape);
    return {y, std::move(tape)};
}

/// Gradient of L = |error|^2 for every real parameter, in the canceler's
/// real parameter order. error = target - prediction.
///
/// Complex parameters are handled as real pairs: for each complex w the pair
/// (dL/dRe w, dL/dIm w) is carried as G_w = dL/dRe w + j dL/dIm w. Through a
/// product u = a v this gives G_v = conj(a) G_u, and through the
/// non-holomorphic f(z) = z (z conj z)^k
///   G_z = G_f conj(df/dz) + conj(G_f) df/dconj(z),
///   df/dz = (k + 1) |z|^(2k),   df/dconj(z) = k f / conj(z).
template <typename C>
void mbnn_backward(const MbnnCanceler<C>& c, const MbnnTape<C>& tape, const C& error,
                   std::span<real_t<C>> grad) {
    if (tape.owner != &c || tape.revision != c.revision())
        throw std::logic_error("mbnn_backward: tape does not belong to the current parameters");
    if (grad.size() != c.n_real_params()) throw ConfigError("mbnn_backward: gradient size");

    const int M = c.memory_len();
    const int I = n_orders(c.nonlin_order());
    const auto& h = c.taps();

    const C delta = C(-2.0) * error;  // G at the prediction
    C g_k1 = C(0.0);
    C g_k2 = C(0.0);
    for (int m = 0; m < M; ++m) {
        const C& z = tape.z[m];
        const C& s = tape.s[m];
        const bool silent = std::abs(value_of(z)) < kMagnitudeFloor;
        C s_pow = C(1.0);
        C g_z = C(0.0);
        for (int i = 0; i < I; ++i) {
            const auto idx = static_cast<std::size_t>(i * M + m);
            const double k = static_cast<double>(i);
            if (i == 1) s_pow = s;
            else if (i > 1) s_pow = s_pow * s;

            const C g_h = conj(tape.f[idx]) * delta;
            grad[4 + 2 * idx] = real(g_h);
            grad[5 + 2 * idx] = imag(g_h);

            const C g_f = conj(h[idx]) * delta;
            const C d_holo = C(k + 1.0) * s_pow;
            const C d_conj = silent ? C(0.0) : C(k) * (tape.f[idx] / conj(z));
            const C term = g_f * conj(d_holo) + conj(g_f) * d_conj;
            g_z = i == 0 ? term : g_z + term;
        }
        const C& x = tape.x[m];
        g_k1 = m == 0 ? conj(x) * g_z : g_k1 + conj(x) * g_z;
        g_k2 = m == 0 ? x * g_z : g_k2 + x * g_z;
    }
    grad[0] = real(g_k1), grad[1] = imag(g_k1);
    grad[2] = real(g_k2), grad[3] = imag(g_k2);

    for (const auto& g : grad)
        if (!is_finite(g)) throw std::domain_error("mbnn_backward: non-finite gradient");
}

template <typename C>
std::vector<real_t<C>> mbnn_backward(const MbnnCanceler<C>& c, const MbnnTape<C>& tape,
                                     const C& error) {
    std::vector<real_t<C>> g(c.n_real_params());
    mbnn_backward(c, tape, error, std::span<real_t<C>>(g));
    return g;
}

// ---------------------------------------------------------------------------
// Parameter files
//
//   fdsic-canceler 1
//   kind <linear|wlmp|mbnn>
//   M <int>
//   P <int>
//   n_real <int>
//   <one real value per line, 17 significant digits>
//
// Linear: re/im of h[m]. WLMP: re/im of g in wlmp_index order. MBNN: the
// real parameter order documented on MbnnCanceler.

struct CancelerFile {
    CancelerKind kind = CancelerKind::Linear;
    int M = 0;
    int P = 1;
    std::vector<double> values;
};

inline void write_canceler_file(const std::string& path, const CancelerFile& f) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "fdsic-canceler 1\nkind " << to_string(f.kind) << "\nM " << f.M << "\nP " << f.P
       << "\nn_real " << f.values.size() << "\n";
    char buf[64];
    for (double v : f.values) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        os << buf;
    }
}

inline CancelerFile read_canceler_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    auto expect = [&](const char* key) {
        std::string k;
        is >> k;
        if (k != key) throw std::runtime_error(path + ": expected '" + key + "', found '" + k + "'");
    };
    expect("fdsic-canceler");
    int version = 0;
    is >> version;
    if (version != 1) throw std::runtime_error(path + ": unsupported version");
    CancelerFile f;
    std::string kind;
    std::size_t n = 0;
    expect("kind");
    is >> kind;
    f.kind = canceler_kind_from_string(kind);
    expect("M");
    is >> f.M;
    expect("P");
    is >> f.P;
    expect("n_real");
    is >> n;
    if (n != static_cast<std::size_t>(canceler_real_param_count(f.kind, f.M, f.P)))
        throw std::runtime_error(path + ": parameter count does not match kind/M/P");
    f.values.resize(n);
    for (auto& v : f.values)
        if (!(is >> v)) throw std::runtime_error(path + ": truncated parameter list");
    return f;
}

inline CancelerFile to_file(const LinearCanceler<cplx>& c) {
    CancelerFile f{CancelerKind::Linear, c.memory_len(), 1, {}};
    for (const auto& h : c.taps) f.values.insert(f.values.end(), {h.real(), h.imag()});
    return f;
}

inline CancelerFile to_file(const WlmpCanceler<cplx>& c) {
    CancelerFile f{CancelerKind::Wlmp, c.M, c.P, {}};
    for (const auto& g : c.weights) f.values.insert(f.values.end(), {g.real(), g.imag()});
    return f;
}

inline CancelerFile to_file(const MbnnCanceler<cplx>& c) {
    CancelerFile f{CancelerKind::Mbnn, c.memory_len(), c.nonlin_order(),
                   std::vector<double>(c.n_real_params())};
    c.get_real_params(std::span<double>(f.values));
    return f;
}

namespace detail {
inline std::vector<cplx> pairs_to_complex(const std::vector<double>& v) {
    std::vector<cplx> out(v.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[2 * i], v[2 * i + 1]};
    return out;
}
inline void expect_kind(const CancelerFile& f, CancelerKind k) {
    if (f.kind != k)
        throw std::runtime_error(std::string("canceler file holds '") + to_string(f.kind) +
                                 "', expected '" + to_string(k) + "'");
}
}  // namespace detail

inline LinearCanceler<cplx> linear_from_file(const CancelerFile& f) {
    detail::expect_kind(f, CancelerKind::Linear);
    LinearCanceler<cplx> c;
    c.taps = detail::pairs_to_complex(f.values);
    return c;
}

inline WlmpCanceler<cplx> wlmp_from_file(const CancelerFile& f) {
    detail::expect_kind(f, CancelerKind::Wlmp);
    WlmpCanceler<cplx> c(f.M, f.P);
    c.weights = detail::pairs_to_complex(f.values);
    return c;
}

inline MbnnCanceler<cplx> mbnn_from_file(const CancelerFile& f) {
    detail::expect_kind(f, CancelerKind::Mbnn);
    MbnnCanceler<cplx> c(f.M, f.P);
    c.set_real_params(std::span<const double>(f.values));
    return c;
}

}  // namespace fdsic
