#pragma once

// Static-fit + dynamic-tracking protocol for one (dataset, method,
// hyperparameter) triple.
//
//   linear-lms, wlmp-lms : LS fit on the static period, LMS per dynamic sample
//   wlmp-rls             : LS fit on the static period, RLS per dynamic sample;
//                          the inverse correlation is primed on the static rows
//   mbnn-ftrl            : FTRL for a number of epochs over the static period,
//                          then FTRL per dynamic sample
//
// Dynamic updates predict first and then adapt, so the dynamic cancellation
// is one-step-ahead performance.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fdsic/adapt.hpp"
#include "fdsic/cancelers.hpp"
#include "fdsic/hwmodel.hpp"
#include "fdsic/metrics.hpp"

namespace fdsic {

struct ProtocolOptions {
    int mbnn_static_epochs = 5;
    double ftrl_beta = 1.0;
    double ftrl_l1 = 0.0;
    double ftrl_l2 = 0.0;
    double rls_delta_scale = 100.0;  ///< delta = scale / mean regressor power
    bool rls_prime_on_static = true;
};

struct ProtocolOutcome {
    double static_db = 0.0;
    double dynamic_db = 0.0;
    bool diverged = false;
};

/// Regressor rows for a dataset, shared between runs on it.
class RegressorTable {
public:
    RegressorTable(const Dataset& ds, CancelerKind kind) : cols_(0) {
        const int M = ds.M;
        std::vector<cplx> hist(static_cast<std::size_t>(M));
        cols_ = kind == CancelerKind::Linear ? static_cast<std::size_t>(M) : wlmp_size(M, ds.P);
        data_.resize(ds.size() * cols_);
        for (std::size_t n = 0; n < ds.size(); ++n) {
            ds.history(n, hist);
            if (kind == CancelerKind::Linear) {
                std::copy(hist.begin(), hist.end(), data_.begin() + static_cast<std::ptrdiff_t>(n * cols_));
            } else {
                const auto b = wlmp_basis(hist, M, ds.P);
                std::copy(b.begin(), b.end(), data_.begin() + static_cast<std::ptrdiff_t>(n * cols_));
            }
        }
    }

    std::size_t cols() const { return cols_; }
    std::span<const cplx> row(std::size_t n) const { return std::span(data_).subspan(n * cols_, cols_); }

    /// Rows [begin, end) as a dense matrix.
    Eigen::MatrixXcd block(std::size_t begin, std::size_t end) const {
        Eigen::MatrixXcd A(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(cols_));
        for (std::size_t n = begin; n < end; ++n)
            for (std::size_t j = 0; j < cols_; ++j)
                A(static_cast<Eigen::Index>(n - begin), static_cast<Eigen::Index>(j)) = data_[n * cols_ + j];
        return A;
    }

    double mean_power(std::size_t begin, std::size_t end) const {
        double acc = 0.0;
        for (std::size_t i = begin * cols_; i < end * cols_; ++i) acc += std::norm(data_[i]);
        return acc / static_cast<double>((end - begin) * cols_);
    }

private:
    std::size_t cols_;
    std::vector<cplx> data_;
};

/// LS weights for the static period of a dataset.
inline std::vector<cplx> static_ls_fit(const Dataset& ds, const RegressorTable& rows) {
    const auto A = rows.block(0, ds.static_len);
    Eigen::VectorXcd t(static_cast<Eigen::Index>(ds.static_len));
    for (std::size_t n = 0; n < ds.static_len; ++n) t(static_cast<Eigen::Index>(n)) = ds.y[n];
    return ls_fit(A, t).weights;
}

namespace detail {

inline double static_cancellation(const Dataset& ds, const RegressorTable& rows,
                                  std::span<const cplx> w) {
    std::vector<cplx> est(ds.static_len);
    for (std::size_t n = 0; n < ds.static_len; ++n) est[n] = inner_product<cplx>(w, rows.row(n));
    return cancellation_db(ds.y_static(), est);
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace detail

/// Linear or WLMP canceler, LS static fit followed by LMS or RLS tracking.
inline ProtocolOutcome run_polynomial(const Dataset& ds, const RegressorTable& rows,
                                      std::span<const cplx> ls_weights, Method method,
                                      double hyper, const ProtocolOptions& opt = {}) {
    ProtocolOutcome out;
    std::vector<cplx> w(ls_weights.begin(), ls_weights.end());
    out.static_db = detail::static_cancellation(ds, rows, w);

    const std::size_t n0 = ds.static_len;
    std::vector<cplx> est(ds.dynamic_len());

    auto track = [&](auto&& step) {
        for (std::size_t i = 0; i < est.size(); ++i) {
            est[i] = step(rows.row(n0 + i), ds.y[n0 + i]);
            if (!is_finite(est[i])) {
                out.diverged = true;
                return;
            }
        }
    };

    if (method == Method::WlmpRls) {
        const double delta = opt.rls_delta_scale / rows.mean_power(0, n0);
        RlsState<cplx> rls(rows.cols(), hyper, delta);
        if (opt.rls_prime_on_static) {
            std::vector<cplx> scratch = w;
            for (std::size_t n = 0; n < n0; ++n) rls_step<cplx>(scratch, rows.row(n), ds.y[n], rls);
        }
        track([&](std::span<const cplx> phi, const cplx& t) { return rls_step<cplx>(w, phi, t, rls); });
    } else {
        const LmsState<cplx> lms(hyper);
        track([&](std::span<const cplx> phi, const cplx& t) { return lms_step<cplx>(w, phi, t, lms); });
    }

    out.dynamic_db = out.diverged ? detail::kNegInf : cancellation_db(ds.y_dynamic(), est);
    if (!std::isfinite(out.dynamic_db)) out.diverged = true;
    return out;
}

/// MBNN trained and tracked with FTRL at learning rate `alpha`.
inline ProtocolOutcome run_mbnn(const Dataset& ds, double alpha, const ProtocolOptions& opt = {}) {
    ProtocolOutcome out;
    auto net = MbnnCanceler<cplx>::identity_start(ds.M, ds.P);
    std::vector<double> w(net.n_real_params());
    net.get_real_params(std::span<double>(w));
    FtrlState<double> ftrl(w.size(), {alpha, opt.ftrl_beta, opt.ftrl_l1, opt.ftrl_l2});
    ftrl.start_from(w);

    MbnnTape<cplx> tape;
    std::vector<double> grad(w.size());
    std::vector<cplx> hist(static_cast<std::size_t>(ds.M));

    // Returns the a-priori prediction, or NaN once training has blown up.
    auto train_step = [&](std::size_t n) -> cplx {
        ds.history(n, hist);
        const cplx y = mbnn_forward<cplx>(net, hist, tape);
        if (!is_finite(y)) return y;
        try {
            mbnn_backward<cplx>(net, tape, ds.y[n] - y, grad);
        } catch (const std::domain_error&) {
            return {std::nan(""), 0.0};
        }
        ftrl_step<double>(w, grad, ftrl);
        net.set_real_params(std::span<const double>(w));
        return y;
    };

    for (int epoch = 0; epoch < opt.mbnn_static_epochs && !out.diverged; ++epoch)
        for (std::size_t n = 0; n < ds.static_len; ++n)
            if (!is_finite(train_step(n))) {
                out.diverged = true;
                break;
            }

    if (out.diverged) {
        out.static_db = out.dynamic_db = detail::kNegInf;
        return out;
    }

    std::vector<cplx> est(ds.static_len);
    for (std::size_t n = 0; n < ds.static_len; ++n) {
        ds.history(n, hist);
        est[n] = mbnn_forward<cplx>(net, hist, tape);
    }
    out.static_db = cancellation_db(ds.y_static(), est);

    est.assign(ds.dynamic_len(), cplx{});
    for (std::size_t i = 0; i < est.size(); ++i) {
        est[i] = train_step(ds.static_len + i);
        if (!is_finite(est[i])) {
            out.diverged = true;
            break;
        }
    }
    out.dynamic_db = out.diverged ? detail::kNegInf : cancellation_db(ds.y_dynamic(), est);
    if (!std::isfinite(out.dynamic_db)) out.diverged = true;
    return out;
}

/// Runs one method on a dataset, building whatever regressors it needs.
inline ProtocolOutcome run_method(const Dataset& ds, Method method, double hyper,
                                  const ProtocolOptions& opt = {}) {
    if (method == Method::MbnnFtrl) return run_mbnn(ds, hyper, opt);
    const RegressorTable rows(ds, canceler_of(method));
    const auto w = static_ls_fit(ds, rows);
    return run_polynomial(ds, rows, w, method, hyper, opt);
}

}  // namespace fdsic
