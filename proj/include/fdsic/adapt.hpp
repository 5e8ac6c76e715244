#pragma once

// Parameter fitting and tracking: batch least squares, LMS, exponentially
// weighted RLS, per-coordinate FTRL-proximal, and hyperparameter selection.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdsic/cancelers.hpp"
#include "fdsic/numeric.hpp"

namespace fdsic {

// ---------------------------------------------------------------------------
// Least squares

struct LsResult {
    std::vector<cplx> weights;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

/// argmin_w sum |t - row w|^2 through a complete orthogonal decomposition;
/// a rank-deficient regressor yields the minimum-norm solution.
inline LsResult ls_fit(const Eigen::MatrixXcd& rows, const Eigen::VectorXcd& targets) {
    if (rows.rows() != targets.size()) throw ConfigError("ls_fit: rows and targets differ in length");
    if (rows.rows() < rows.cols()) throw ConfigError("ls_fit: fewer rows than columns");
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(rows);
    const Eigen::VectorXcd w = cod.solve(targets);
    LsResult r;
    r.weights.assign(w.data(), w.data() + w.size());
    r.rank = cod.rank();
    r.rank_deficient = r.rank < rows.cols();
    return r;
}

inline LsResult ls_fit(const std::vector<std::vector<cplx>>& rows, std::span<const cplx> targets) {
    if (rows.empty()) throw ConfigError("ls_fit: no rows");
    Eigen::MatrixXcd A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ConfigError("ls_fit: ragged regressor rows");
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    Eigen::VectorXcd t(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i) t(static_cast<Eigen::Index>(i)) = targets[i];
    return ls_fit(A, t);
}

// ---------------------------------------------------------------------------
// LMS

/// The step size is held in the complex scalar type, so mu * e is one
/// complex multiplication in the op count.
template <typename C = cplx>
struct LmsState {
    C mu;

    explicit LmsState(double step) : mu(step) {
        if (!(step >= 0.0)) throw ConfigError("LMS: step size must be non-negative");
    }
};

/// One LMS iteration. Returns the a-priori prediction w . phi; the weights
/// move by mu e conj(phi) with e = target - prediction.
template <typename C>
C lms_step(std::span<C> weights, std::span<const C> regressor, const C& target, const LmsState<C>& st) {
    if (weights.size() != regressor.size()) throw ConfigError("lms_step: dimension mismatch");
    const C y = inner_product<C>(std::span<const C>(weights), regressor);
    const C e = target - y;
    const C step = st.mu * e;
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += step * conj(regressor[i]);
    return y;
}

// ---------------------------------------------------------------------------
// RLS

/// Exponentially weighted RLS state. The forgetting factor and its inverse
/// are held as complex scalars; see lms_step for the reason.
template <typename C = cplx>
class RlsState {
public:
    RlsState(std::size_t n, double lambda, double delta)
        : n_(n), lambda_(lambda), lambda_inv_(1.0 / lambda), delta_(delta),
          inv_corr_(n * n), pi_(n), psi_(n), gain_(n) {
        if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("RLS: lambda must lie in (0, 1]");
        if (!(delta > 0.0)) throw ConfigError("RLS: delta must be positive");
        reset();
    }

    std::size_t dim() const { return n_; }
    double lambda() const { return value_of(lambda_).real(); }
    double delta() const { return delta_; }

    /// inv_corr = delta * I
    void reset() {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) inv_corr_[i * n_ + j] = C(i == j ? delta_ : 0.0);
    }

    const C& inv_corr(std::size_t i, std::size_t j) const { return inv_corr_[i * n_ + j]; }
    std::span<const C> inv_corr() const { return inv_corr_; }

    std::uint64_t reset_events() const { return reset_events_; }
    std::uint64_t symmetrize_events() const { return symmetrize_events_; }

    /// Largest |P_ij - conj(P_ji)|.
    double hermitian_error() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i; j < n_; ++j)
                worst = std::max(worst, std::abs(value_of(inv_corr_[i * n_ + j]) -
                                                  std::conj(value_of(inv_corr_[j * n_ + i]))));
        return worst;
    }

    static constexpr double kHermitianTol = 1e-9;

private:
    template <typename D>
    friend D rls_step(std::span<D>, std::span<const D>, const D&, RlsState<D>&);

    // Housekeeping outside the counted arithmetic: runs on plain values.
    void maintain() {
        bool finite = true;
        for (const auto& v : inv_corr_) finite = finite && is_finite(value_of(v));
        if (!finite) {
            ++reset_events_;
            reset();
            return;
        }
        if (hermitian_error() <= kHermitianTol) return;
        ++symmetrize_events_;
        for (std::size_t i = 0; i < n_; ++i) {
            inv_corr_[i * n_ + i] = C(value_of(inv_corr_[i * n_ + i]).real());
            for (std::size_t j = i + 1; j < n_; ++j) {
                const cplx avg =
                    0.5 * (value_of(inv_corr_[i * n_ + j]) + std::conj(value_of(inv_corr_[j * n_ + i])));
                inv_corr_[i * n_ + j] = C(avg);
                inv_corr_[j * n_ + i] = C(std::conj(avg));
            }
        }
    }

    std::size_t n_;
    C lambda_;
    C lambda_inv_;
    double delta_;
    std::vector<C> inv_corr_;  // row-major N x N
    std::vector<C> pi_, psi_, gain_;
    std::uint64_t reset_events_ = 0;
    std::uint64_t symmetrize_events_ = 0;
};

/// One RLS iteration, returning the a-priori prediction.
///
///   pi  = P phi
///   k   = pi / (lambda + phi^H pi)
///   w  += conj(k) e             e = target - w . phi
///   P   = (P - k (phi^H P)) / lambda
///
/// P tracks the inverse of sum phi phi^H, which is the conjugate of the
/// normal matrix for predictions y = w . phi; hence conj(k) in the weight
/// update. The gain denominator is computed in
/// complex arithmetic; each element of pi is divided by it, i.e. N complex
/// divisions = 2N real divisions.
template <typename C>
C rls_step(std::span<C> w, std::span<const C> phi, const C& target, RlsState<C>& st) {
    const std::size_t n = st.n_;
    if (w.size() != n || phi.size() != n) throw ConfigError("rls_step: dimension mismatch");
    auto& P = st.inv_corr_;

    const C y = inner_product<C>(std::span<const C>(w), phi);
    const C e = target - y;

    for (std::size_t i = 0; i < n; ++i)
        st.pi_[i] = inner_product<C>(std::span<const C>(P).subspan(i * n, n), phi);

    C quad = conj(phi[0]) * st.pi_[0];
    for (std::size_t i = 1; i < n; ++i) quad += conj(phi[i]) * st.pi_[i];
    const C denom = st.lambda_ + quad;

    for (std::size_t i = 0; i < n; ++i) st.gain_[i] = st.pi_[i] / denom;

    for (std::size_t i = 0; i < n; ++i) w[i] += conj(st.gain_[i]) * e;

    for (std::size_t j = 0; j < n; ++j) {
        C acc = conj(phi[0]) * P[j];
        for (std::size_t i = 1; i < n; ++i) acc += conj(phi[i]) * P[i * n + j];
        st.psi_[j] = acc;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            P[i * n + j] = (P[i * n + j] - st.gain_[i] * st.psi_[j]) * st.lambda_inv_;

    st.maintain();
    return y;
}

// ---------------------------------------------------------------------------
// FTRL-proximal

/// Per-coordinate FTRL-proximal with adaptive learning rates
/// alpha / (beta + sqrt(n_i)).
template <typename R = double>
class FtrlState {
public:
    struct Options {
        double alpha = 0.1;
        double beta = 1.0;
        double l1 = 0.0;
        double l2 = 0.0;
    };

    FtrlState(std::size_t n, Options opt)
        : opt_(opt), alpha_(opt.alpha), inv_alpha_(1.0 / opt.alpha), beta_(opt.beta),
          z_(n, R(0.0)), n_(n, R(0.0)), sqrt_n_(n, R(0.0)) {
        if (!(opt.alpha > 0.0)) throw ConfigError("FTRL: alpha must be positive");
        if (opt.beta < 0.0 || opt.l1 < 0.0 || opt.l2 < 0.0)
            throw ConfigError("FTRL: beta, l1, l2 must be non-negative");
    }

    /// Sets z so that the closed-form weights equal `w` before any update.
    void start_from(std::span<const double> w) {
        if (w.size() != z_.size()) throw ConfigError("FTRL: dimension mismatch");
        const double scale = opt_.beta / opt_.alpha + opt_.l2;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] == 0.0) {
                z_[i] = R(0.0);
                continue;
            }
            if (scale == 0.0) throw ConfigError("FTRL: nonzero start needs beta > 0 or l2 > 0");
            z_[i] = R(-(w[i] * scale + (w[i] > 0 ? opt_.l1 : -opt_.l1)));
        }
    }

    std::size_t dim() const { return z_.size(); }
    const Options& options() const { return opt_; }
    const std::vector<R>& z() const { return z_; }
    const std::vector<R>& n() const { return n_; }

private:
    template <typename S>
    friend void ftrl_step(std::span<S>, std::span<const S>, FtrlState<S>&);

    Options opt_;
    R alpha_, inv_alpha_, beta_;
    std::vector<R> z_, n_, sqrt_n_;
};

/// One FTRL-proximal update per coordinate:
///   sigma = (sqrt(n + g^2) - sqrt(n)) / alpha
///   z    += g - sigma w
///   n    += g^2
///   w     = -z alpha / (beta + sqrt(n))            (l1 = l2 = 0)
/// sqrt(n) is carried between steps, so each coordinate costs one sqrt.
template <typename R>
void ftrl_step(std::span<R> w, std::span<const R> grad, FtrlState<R>& st) {
    using std::abs;
    using std::sqrt;
    if (w.size() != st.z_.size() || grad.size() != st.z_.size())
        throw ConfigError("ftrl_step: dimension mismatch");
    const bool plain = st.opt_.l1 == 0.0 && st.opt_.l2 == 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const R g = grad[i];
        const R n_new = st.n_[i] + g * g;
        const R sq_new = sqrt(n_new);
        const R sigma = (sq_new - st.sqrt_n_[i]) * st.inv_alpha_;
        st.z_[i] += g - sigma * w[i];
        st.n_[i] = n_new;
        st.sqrt_n_[i] = sq_new;
        if (plain) {
            w[i] = -(st.z_[i] * st.alpha_) / (st.beta_ + sq_new);
        } else if (abs(st.z_[i]) <= R(st.opt_.l1)) {
            w[i] = R(0.0);
        } else {
            const R shrink = st.z_[i] > R(0.0) ? st.z_[i] - R(st.opt_.l1) : st.z_[i] + R(st.opt_.l1);
            w[i] = -shrink / ((st.beta_ + sq_new) * st.inv_alpha_ + R(st.opt_.l2));
        }
    }
}

// ---------------------------------------------------------------------------
// Hyperparameter selection

enum class Prefer { Smaller, Larger };

/// 10^(lo_exp + k / per_decade) for k = 0..decades * per_decade.
inline std::vector<double> log_grid(double lo_exp, int decades = 6, int per_decade = 7) {
    std::vector<double> g;
    for (int k = 0; k <= decades * per_decade; ++k)
        g.push_back(std::pow(10.0, lo_exp + static_cast<double>(k) / per_decade));
    return g;
}

struct SearchResult {
    double best = 0.0;
    std::size_t best_index = 0;
    std::vector<double> mean_score;  ///< per candidate, -inf when any run diverged
    std::size_t runs = 0;
};

class SearchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picks the candidate with the highest mean score. Ties go to the more
/// conservative value as given by `prefer`.
inline SearchResult select_hyperparameter(const std::string& label, const std::vector<double>& grid,
                                          const std::vector<double>& mean_score, Prefer prefer) {
    if (grid.empty() || grid.size() != mean_score.size())
        throw ConfigError("select_hyperparameter: grid/score size mismatch");
    SearchResult r;
    r.mean_score = mean_score;
    bool found = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(mean_score[i])) continue;
        const bool better = !found || mean_score[i] > mean_score[r.best_index] ||
                            (mean_score[i] == mean_score[r.best_index] &&
                             (prefer == Prefer::Smaller ? grid[i] < grid[r.best_index]
                                                        : grid[i] > grid[r.best_index]));
        if (better) {
            r.best_index = i;
            found = true;
        }
    }
    if (!found) throw SearchError(label + ": every candidate diverged");
    r.best = grid[r.best_index];
    return r;
}

/// Runs evaluate(seed, candidate) for every pair and selects by mean score.
inline SearchResult hyperparam_search(const std::string& label, const std::vector<double>& grid,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<double(std::uint64_t, double)>& evaluate,
                                      Prefer prefer = Prefer::Smaller) {
    if (grid.empty()) throw ConfigError(label + ": empty hyperparameter grid");
    if (seeds.empty()) throw ConfigError(label + ": no tuning seeds");
    std::vector<double> mean(grid.size(), 0.0);
    std::size_t runs = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double acc = 0.0;
        for (auto s : seeds) {
            const double v = evaluate(s, grid[i]);
            ++runs;
            acc += std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        }
        mean[i] = acc / static_cast<double>(seeds.size());
    }
    auto r = select_hyperparameter(label, grid, mean, prefer);
    r.runs = runs;
    return r;
}

}  // namespace fdsic
