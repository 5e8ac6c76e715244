// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
// usage: fdsic_acceptance <path to fdsic CLI> <work dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fdsic/fdsic.hpp"

using namespace fdsic;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const Verdict& v) {
    std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
}

template <typename... A>
std::string fmt(const char* f, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict c1_param_counts() {
    const int want[] = {6, 72, 72, 22};
    std::string d;
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
        const int got = canceler_real_param_count(canceler_of(kAllMethods[i]), 3, 5);
        ok = ok && got == want[i];
        d += fmt("%s=%d ", to_string(kAllMethods[i]), got);
    }
    return {ok, d};
}

Verdict c2_complexity() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig c;
    const auto counts = measured_counts(c);
    const double secs = seconds_since(t0);
    bool ok = secs < 1.0;
    std::string d = fmt("%.3fs; ", secs);
    for (Method m : kAllMethods) {
        const auto& g = counts.at(m);
        const auto r = reference_counts(m);
        const double ea = double(g.n_add) / r.n_add - 1.0;
        const double em = double(g.n_mult) / r.n_mult - 1.0;
        ok = ok && std::abs(ea) <= kComplexityTolerance && std::abs(em) <= kComplexityTolerance;
        d += fmt("%s add %+.1f%% mult %+.1f%%; ", to_string(m), 100 * ea, 100 * em);
    }
    const auto rls = counts.at(Method::WlmpRls);
    const auto mb = counts.at(Method::MbnnFtrl);
    ok = ok && rls.n_div == 72 && mb.n_sqrt == 22;
    d += fmt("rls div %llu, mbnn sqrt %llu", (unsigned long long)rls.n_div, (unsigned long long)mb.n_sqrt);
    return {ok, d};
}

Verdict c3_subsumption() {
    auto fit = [](double noise_db) {
        DatasetOptions opt;
        opt.noise_db = noise_db;
        opt.dynamic_len = 100;
        const auto ds = generate_dataset(0, 0.99, {}, {}, opt);
        const RegressorTable rows(ds, CancelerKind::Wlmp);
        return detail::static_cancellation(ds, rows, static_ls_fit(ds, rows));
    };
    const double clean = fit(kNoiseFloorDb);
    const double noisy = fit(-40.0);
    return {clean >= 120.0 && std::abs(noisy - 40.0) <= 2.0,
            fmt("noiseless %.1f dB (>= 120), -40 dB noise %.2f dB (40 +- 2)", clean, noisy)};
}

Verdict c4_gradient() {
    auto rng = make_stream(4, "acceptance");
    std::normal_distribution<double> nd(0.0, 0.5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int M = 1 + trial % 4;
        const int P = 1 + 2 * (trial % 4);
        MbnnCanceler<cplx> c(M, P);
        std::vector<double> w(c.n_real_params());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const int order = i < 4 ? 0 : static_cast<int>((i - 4) / 2) / M;
            w[i] = nd(rng) * std::pow(0.3, order);
        }
        w[0] += 1.0;
        c.set_real_params(std::span<const double>(w));
        std::vector<cplx> hist(static_cast<std::size_t>(M));
        for (auto& x : hist) x = complex_gaussian(rng, 1.0);
        const cplx target = complex_gaussian(rng, 1.0);
        MbnnTape<cplx> tape;
        const auto g = mbnn_backward<cplx>(c, tape, target - mbnn_forward<cplx>(c, hist, tape));
        // Reference loss in long double, written out term by term.
        auto loss = [&](const std::vector<double>& p) {
            using L = std::complex<long double>;
            const L k1(p[0], p[1]), k2(p[2], p[3]);
            L y{};
            for (int q = 1; q <= P; q += 2)
                for (int m = 0; m < M; ++m) {
                    const std::size_t i = static_cast<std::size_t>((q - 1) / 2 * M + m);
                    const L x(hist[m].real(), hist[m].imag());
                    const L z = k1 * x + k2 * std::conj(x);
                    y += L(p[4 + 2 * i], p[5 + 2 * i]) * z * std::pow(std::abs(z), static_cast<long double>(q - 1));
                }
            return std::norm(L(target.real(), target.imag()) - y);
        };
        for (std::size_t i = 0; i < w.size(); ++i) {
            auto wp = w, wm = w;
            wp[i] += 1e-6;
            wm[i] -= 1e-6;
            const double fd = static_cast<double>((loss(wp) - loss(wm)) / 2e-6L);
            worst = std::max(worst, std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-3}));
        }
    }
    return {worst < 1e-5, fmt("max relative error %.2e over 100 configurations", worst)};
}

Verdict c5_rls_ls() {
    DatasetOptions opt;
    opt.dynamic_len = 100;
    const auto ds = generate_dataset(5, 0.99, {}, {}, opt);
    const RegressorTable rows(ds, CancelerKind::Wlmp);
    const auto w_ls = static_ls_fit(ds, rows);
    RlsState<cplx> rls(rows.cols(), 1.0, 1e8);
    std::vector<cplx> w(rows.cols());
    for (std::size_t n = 0; n < ds.static_len; ++n) rls_step<cplx>(w, rows.row(n), ds.y[n], rls);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        num += std::norm(w[i] - w_ls[i]);
        den += std::norm(w_ls[i]);
    }
    const double rel = std::sqrt(num / den);
    return {rel < 1e-6, fmt("relative weight error %.2e after %zu samples", rel, ds.static_len)};
}

Verdict c6_ar1() {
    const HwDistributionConfig cfg;
    bool ok = true;
    double worst = 0.0;
    for (double beta : {0.9, 0.99999}) {
        auto rng = make_stream(6, "hardware");
        const auto start = sample_initial_hardware(cfg, rng);
        Ar1Family fam(start, cfg, beta, 6);
        const int n = 1000000;
        std::vector<cplx> sum(fam.size());
        std::vector<double> sq(fam.size());
        for (int i = 0; i < n; ++i) {
            fam.step();
            for (std::size_t k = 0; k < fam.size(); ++k) {
                const auto& p = fam.processes()[k];
                sum[k] += p.state;
                sq[k] += std::norm(p.state - p.stationary_mean());
            }
        }
        const double ess = n * (1 - beta) / (1 + beta);
        const double ess_var = n * (1 - beta * beta) / (1 + beta * beta);
        for (std::size_t k = 0; k < fam.size(); ++k) {
            const auto& p = fam.processes()[k];
            const double var = p.stationary_variance();
            const double comp = p.is_real_valued ? var : var / 2;
            const cplx dm = sum[k] / double(n) - p.stationary_mean();
            const double se_m = std::sqrt(comp / ess);
            const double se_v = var * std::sqrt((p.is_real_valued ? 2.0 : 1.0) / ess_var);
            const double z = std::max({std::abs(dm.real()) / se_m, std::abs(dm.imag()) / se_m,
                                       std::abs(sq[k] / n - var) / se_v});
            worst = std::max(worst, z);
            ok = ok && z <= 3.0;
        }
    }
    return {ok, fmt("largest deviation %.2f standard errors over 11 processes x 2 betas", worst)};
}

Verdict c7_irr() {
    const HwDistributionConfig cfg;
    auto rng = make_stream(7, "acceptance");
    int inside = 0, finite = 0;
    for (int i = 0; i < 100000; ++i) {
        const double r = irr_db({real_gaussian(rng, cfg.mean_a_iq, cfg.var_a_iq),
                                 real_gaussian(rng, cfg.mean_phi_iq, cfg.var_phi_iq)});
        if (!std::isfinite(r)) continue;
        ++finite;
        inside += r >= 20 && r <= 40;
    }
    const double f = double(inside) / finite;
    return {f >= 0.93 && f <= 0.97, fmt("fraction in [20, 40] dB = %.4f", f)};
}

// Summary rows from a finished sweep, keyed by (method, oversampling).
using Table = std::map<std::pair<Method, long long>, SummaryRow>;

Table load_summary(const fs::path& dir) {
    Table t;
    for (const auto& r : summarize(parse_runs_csv(read_text((dir / "runs.csv").string()))))
        t[{r.method, r.oversampling}] = r;
    return t;
}

Verdict c8_trend(const Table& t) {
    double lo = 1e300, hi = -1e300;
    bool gains = true;
    std::string d = "1x:";
    for (Method m : kAllMethods) {
        const double v = t.at({m, 1}).mean_dynamic_db;
        lo = std::min(lo, v), hi = std::max(hi, v);
        d += fmt(" %s %.2f", to_string(m), v);
    }
    const bool band = hi - lo <= 6.0;
    d += fmt(" (band %.2f dB); gain 1x->10000x:", hi - lo);
    Method best = kAllMethods[0];
    for (Method m : kAllMethods) {
        const double g = t.at({m, 10000}).mean_dynamic_db - t.at({m, 1}).mean_dynamic_db;
        gains = gains && g >= 5.0;
        d += fmt(" %s %+.2f", to_string(m), g);
        if (t.at({m, 10000}).mean_dynamic_db > t.at({best, 10000}).mean_dynamic_db) best = m;
    }
    d += fmt("; best at 10000x: %s %.2f dB", to_string(best), t.at({best, 10000}).mean_dynamic_db);
    const bool top = best == Method::WlmpRls;
    d += fmt(" [a %s, b %s, c %s]", band ? "ok" : "no", gains ? "ok" : "no", top ? "ok" : "no");
    return {band && gains && top, d};
}

Verdict c9_drop(const Table& t) {
    const double rls = t.at({Method::WlmpRls, 10000}).mean_drop_db;
    const double lms = t.at({Method::WlmpLms, 10000}).mean_drop_db;
    const double lin = t.at({Method::LinearLms, 10}).mean_drop_db;
    const bool a = rls >= 1.0 && rls <= 5.0;
    const bool b = lms >= 5.0;
    const bool c = std::abs(lin) <= 2.0;
    return {a && b && c,
            fmt("wlmp-rls drop at 10000x %.2f dB (1..5) [%s]; wlmp-lms drop at 10000x %.2f dB (>= 5) [%s]; "
                "linear-lms drop at 10x %.2f dB (|.| <= 2) [%s]",
                rls, a ? "ok" : "no", lms, b ? "ok" : "no", lin, c ? "ok" : "no")};
}

Verdict c10_flops(const Table& t) {
    std::vector<SummaryRow> rows;
    for (const auto& [k, r] : t) rows.push_back(r);
    const auto mb = curve_of(rows, Method::MbnnFtrl);
    const auto rls = curve_of(rows, Method::WlmpRls);
    auto range = [](const std::vector<CurvePoint>& c) {
        double lo = 1e300, hi = -1e300;
        for (const auto& p : c)
            if (std::isfinite(p.cancellation_db)) lo = std::min(lo, p.cancellation_db), hi = std::max(hi, p.cancellation_db);
        return std::pair{lo, hi};
    };
    const auto [a0, a1] = range(mb);
    const auto [b0, b1] = range(rls);
    const double lo = std::max(a0, b0), hi = std::min(a1, b1);
    if (!(hi > lo)) return {false, "no common cancellation range"};
    bool any = false;
    std::string d;
    for (double f : {0.25, 0.375, 0.5, 0.625, 0.75}) {
        const double target = lo + f * (hi - lo);
        const auto fm = flops_at_cancellation(mb, target);
        const auto fr = flops_at_cancellation(rls, target);
        if (!fm || !fr) continue;
        const double ratio = *fr / *fm;
        const bool ok = ratio >= 10.0 && ratio <= 1e4;
        any = any || ok;
        d += fmt("%.1f dB: %.0fx%s; ", target, ratio, ok ? "" : " (out of range)");
    }
    return {any, "wlmp-rls / mbnn-ftrl FLOPS at matched cancellation: " + d};
}

Verdict c11_determinism(const fs::path& a, const fs::path& b, double secs) {
    bool same = true;
    std::string d;
    for (const char* f : {"runs.csv", "summary.csv", "complexity.csv", "flops_vs_cancellation.csv"}) {
        const bool eq = read_text((a / f).string()) == read_text((b / f).string());
        same = same && eq;
        d += fmt("%s %s; ", f, eq ? "identical" : "DIFFERS");
    }
    d += fmt("both runs %.0f s", secs);
    return {same && secs < 600.0, d};
}

bool run_cli(const std::string& cli, const fs::path& out, int jobs) {
    const std::string cmd = "\"" + cli + "\" run --quick --jobs " + std::to_string(jobs) + " --out \"" +
                            out.string() + "\" > \"" + out.string() + ".log\" 2>&1";
    return std::system(cmd.c_str()) == 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s <fdsic cli> <work dir>\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path work = argv[2];
    fs::remove_all(work);
    fs::create_directories(work);

    report(1, c1_param_counts());
    report(2, c2_complexity());
    report(3, c3_subsumption());
    report(4, c4_gradient());
    report(5, c5_rls_ls());
    report(6, c6_ar1());
    report(7, c7_irr());

    const auto t0 = std::chrono::steady_clock::now();
    const bool ok1 = run_cli(cli, work / "jobs1", 1);
    const bool ok4 = ok1 && run_cli(cli, work / "jobs4", 4);
    const double secs = seconds_since(t0);
    if (!ok1 || !ok4) {
        const Verdict v{false, "quick sweep failed; see logs in " + work.string()};
        for (int id = 8; id <= 11; ++id) report(id, v);
    } else {
        const Table t = load_summary(work / "jobs1");
        report(8, c8_trend(t));
        report(9, c9_drop(t));
        report(10, c10_flops(t));
        report(11, c11_determinism(work / "jobs1", work / "jobs4", secs));
    }
    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
