#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fdsic/cancelers.hpp"

using namespace fdsic;

namespace {

std::vector<cplx> random_vec(RngStream& rng, std::size_t n, double var = 1.0) {
    std::vector<cplx> v(n);
    for (auto& x : v) x = complex_gaussian(rng, var);
    return v;
}

HardwareParams random_hw(RngStream& rng, int M, int P) {
    HardwareParams hw;
    hw.mixer = {real_gaussian(rng, 1.0, 0.01), real_gaussian(rng, 0.0, 0.01)};
    hw.taps = PaTaps(M, P);
    for (auto& h : hw.taps.values()) h = complex_gaussian(rng, 0.5);
    return hw;
}

// Direct evaluation of the model from its defining sum, with pow().
cplx mbnn_oracle(cplx k1, cplx k2, const std::vector<cplx>& taps, int M, int P, std::span<const cplx> hist) {
    cplx y{};
    for (int p = 1; p <= P; p += 2)
        for (int m = 0; m < M; ++m) {
            const cplx z = k1 * hist[m] + k2 * std::conj(hist[m]);
            y += taps[static_cast<std::size_t>((p - 1) / 2 * M + m)] * z * std::pow(std::abs(z), p - 1);
        }
    return y;
}

// Squared error of the model evaluated term by term in long double, taking
// the canceler's real parameter vector directly.
long double loss_ld(const std::vector<double>& w, int M, int P, std::span<const cplx> hist, cplx target) {
    using L = std::complex<long double>;
    const L k1(w[0], w[1]), k2(w[2], w[3]);
    L y{};
    for (int p = 1; p <= P; p += 2)
        for (int m = 0; m < M; ++m) {
            const std::size_t i = static_cast<std::size_t>((p - 1) / 2 * M + m);
            const L x(hist[m].real(), hist[m].imag());
            const L z = k1 * x + k2 * std::conj(x);
            y += L(w[4 + 2 * i], w[5 + 2 * i]) * z * std::pow(std::abs(z), static_cast<long double>(p - 1));
        }
    return std::norm(L(target.real(), target.imag()) - y);
}

}  // namespace

TEST(ParamCounts, PublishedValues) {
    EXPECT_EQ(canceler_real_param_count(CancelerKind::Linear, 3, 5), 6);
    EXPECT_EQ(canceler_real_param_count(CancelerKind::Wlmp, 3, 5), 72);
    EXPECT_EQ(canceler_real_param_count(CancelerKind::Mbnn, 3, 5), 22);
}

TEST(ParamCounts, IdentitiesOverShapes) {
    for (int M = 1; M <= 6; ++M)
        for (int P = 1; P <= 9; P += 2) {
            EXPECT_EQ(canceler_real_param_count(CancelerKind::Linear, M, P), 2 * M);
            EXPECT_EQ(canceler_real_param_count(CancelerKind::Wlmp, M, P), M * (P + 1) * (P + 3) / 2);
            EXPECT_EQ(canceler_real_param_count(CancelerKind::Mbnn, M, P), (P + 1) * M + 4);
            EXPECT_EQ(MbnnCanceler<cplx>(M, P).n_real_params(), std::size_t((P + 1) * M + 4));
        }
    EXPECT_THROW(canceler_real_param_count(CancelerKind::Wlmp, 3, 4), ConfigError);
}

TEST(Linear, Examples) {
    auto rng = make_stream(1, "t");
    const auto hist = random_vec(rng, 3);
    LinearCanceler<cplx> c(3);
    EXPECT_EQ(linear_predict<cplx>(c, hist), cplx(0));
    c.taps[0] = 1.0;
    EXPECT_EQ(linear_predict<cplx>(c, hist), hist[0]);
    c.taps = random_vec(rng, 3);
    const cplx want = c.taps[0] * hist[0] + c.taps[1] * hist[1] + c.taps[2] * hist[2];
    EXPECT_LT(std::abs(linear_predict<cplx>(c, hist) - want), 1e-12);
}

TEST(Wlmp, BasisLayout) {
    auto rng = make_stream(2, "t");
    EXPECT_EQ(wlmp_basis(random_vec(rng, 3), 3, 5).size(), 36u);
    const cplx x(0.4, -1.3);
    const auto b = wlmp_basis(std::span(&x, 1), 1, 1);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0], std::conj(x));
    EXPECT_EQ(b[1], x);
    for (const auto& v : wlmp_basis(std::vector<cplx>(3), 3, 5)) EXPECT_EQ(v, cplx(0));
    // Every (p, q, m) maps to the expected monomial.
    const auto hist = random_vec(rng, 3);
    const auto full = wlmp_basis(hist, 3, 5);
    for (int p = 1; p <= 5; p += 2)
        for (int q = 0; q <= p; ++q)
            for (int m = 0; m < 3; ++m) {
                const cplx want = std::pow(hist[m], q) * std::pow(std::conj(hist[m]), p - q);
                EXPECT_LT(std::abs(full[wlmp_index(p, q, m, 3)] - want), 1e-12);
            }
}

TEST(Wlmp, PredictExamples) {
    auto rng = make_stream(3, "t");
    const auto hist = random_vec(rng, 3);
    const auto basis = wlmp_basis(hist, 3, 5);
    WlmpCanceler<cplx> c(3, 5);
    EXPECT_EQ(wlmp_predict<cplx>(c, basis), cplx(0));
    c.weights[wlmp_index(1, 1, 0, 3)] = 1.0;
    EXPECT_EQ(wlmp_predict<cplx>(c, basis), hist[0]);
    c.weights = random_vec(rng, 36);
    cplx want{};
    for (std::size_t i = 0; i < 36; ++i) want += c.weights[i] * basis[i];
    EXPECT_LT(std::abs(wlmp_predict<cplx>(c, basis) - want), 1e-12 * std::abs(want));
}

TEST(Wlmp, EmbeddingOfIdealMixer) {
    auto rng = make_stream(4, "t");
    auto hw = random_hw(rng, 3, 5);
    hw.mixer = {1.0, 0.0};
    const auto w = wlmp_embed_hardware(hw);
    for (int p = 1; p <= 5; p += 2)
        for (int q = 0; q <= p; ++q)
            for (int m = 0; m < 3; ++m) {
                const int k = (p - 1) / 2;
                const cplx want = q == k + 1 ? hw.taps.at(p, m) : cplx(0);
                EXPECT_LT(std::abs(w.weights[wlmp_index(p, q, m, 3)] - want), 1e-15);
            }
    for (auto& h : hw.taps.values()) h = 0.0;
    for (const auto& v : wlmp_embed_hardware(hw).weights) EXPECT_EQ(v, cplx(0));
}

TEST(Wlmp, EmbeddingReproducesHardware) {
    auto rng = make_stream(5, "t");
    for (int trial = 0; trial < 5; ++trial) {
        const auto hw = random_hw(rng, 3, 5);
        const auto w = wlmp_embed_hardware(hw);
        for (int i = 0; i < 200; ++i) {
            const auto hist = random_vec(rng, 3);
            const cplx y = pa_output(hist, hw);
            EXPECT_LT(std::abs(wlmp_predict<cplx>(w, wlmp_basis(hist, 3, 5)) - y), 1e-10 * std::max(1.0, std::abs(y)));
        }
    }
}

TEST(Mbnn, MatchesHardwareAndOracle) {
    auto rng = make_stream(6, "t");
    for (int trial = 0; trial < 100; ++trial) {
        const auto hw = random_hw(rng, 3, 5);
        const auto c = MbnnCanceler<cplx>::from_hardware(hw);
        const auto hist = random_vec(rng, 3);
        MbnnTape<cplx> tape;
        const cplx y = pa_output(hist, hw);
        EXPECT_LT(std::abs(mbnn_forward<cplx>(c, hist, tape) - y), 1e-14 * std::max(1.0, std::abs(y)));
        std::vector<cplx> taps(c.taps().begin(), c.taps().end());
        const cplx want = mbnn_oracle(c.k1(), c.k2(), taps, 3, 5, hist);
        EXPECT_LT(std::abs(tape.prediction - want), 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST(Mbnn, LinearSpecialCase) {
    auto rng = make_stream(7, "t");
    auto c = MbnnCanceler<cplx>::identity_start(3, 5);
    LinearCanceler<cplx> lin(3);
    for (int m = 0; m < 3; ++m) {
        lin.taps[m] = complex_gaussian(rng, 1.0);
        c.set_tap(1, m, lin.taps[m]);
    }
    const auto hist = random_vec(rng, 3);
    EXPECT_LT(std::abs(mbnn_forward<cplx>(c, hist).first - linear_predict<cplx>(lin, hist)), 1e-15);
}

TEST(Mbnn, GradientSimpleCases) {
    auto rng = make_stream(8, "t");
    auto c = MbnnCanceler<cplx>::identity_start(1, 5);
    c.set_tap(1, 0, cplx(0.7, 0.2));
    const cplx x(0.3, -0.8);
    MbnnTape<cplx> tape;
    mbnn_forward<cplx>(c, std::span(&x, 1), tape);
    for (double g : mbnn_backward<cplx>(c, tape, cplx(0))) EXPECT_EQ(g, 0.0);

    const cplx err(0.25, -0.6);
    const auto g = mbnn_backward<cplx>(c, tape, err);
    EXPECT_NEAR(g[4], -2.0 * (std::conj(err) * tape.z[0]).real(), 1e-15);
}

TEST(Mbnn, GradientMatchesCentralDifferences) {
    auto rng = make_stream(9, "t");
    const int shapes[][2] = {{1, 1}, {1, 3}, {2, 5}, {3, 5}, {4, 7}};
    std::normal_distribution<double> nd(0.0, 0.5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int M = shapes[trial % 5][0];
        const int P = shapes[trial % 5][1];
        MbnnCanceler<cplx> c(M, P);
        std::vector<double> w(c.n_real_params());
        for (std::size_t i = 0; i < w.size(); ++i) {
            // Taps shrink with order, as in the hardware model.
            const int order = i < 4 ? 0 : static_cast<int>((i - 4) / 2) / M;
            w[i] = nd(rng) * std::pow(0.3, order);
        }
        w[0] += 1.0;
        c.set_real_params(std::span<const double>(w));
        const auto hist = random_vec(rng, static_cast<std::size_t>(M));
        const cplx target = complex_gaussian(rng, 1.0);
        MbnnTape<cplx> tape;
        const cplx y = mbnn_forward<cplx>(c, hist, tape);
        const auto g = mbnn_backward<cplx>(c, tape, target - y);

        const double h = 1e-6;
        for (std::size_t i = 0; i < w.size(); ++i) {
            auto wp = w, wm = w;
            wp[i] += h;
            wm[i] -= h;
            const double fd =
                static_cast<double>((loss_ld(wp, M, P, hist, target) - loss_ld(wm, M, P, hist, target)) / (2 * h));
            const double rel = std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(Mbnn, StaleTapeAndSilentInput) {
    auto c = MbnnCanceler<cplx>::identity_start(2, 5);
    const std::vector<cplx> hist{cplx(0), cplx(0.5, 0.5)};
    MbnnTape<cplx> tape;
    mbnn_forward<cplx>(c, hist, tape);
    c.set_tap(3, 1, 0.1);
    EXPECT_THROW(mbnn_backward<cplx>(c, tape, cplx(1)), std::logic_error);
    mbnn_forward<cplx>(c, hist, tape);
    for (double g : mbnn_backward<cplx>(c, tape, cplx(1, 1))) EXPECT_TRUE(std::isfinite(g));
}

TEST(CancelerFiles, RoundTrip) {
    auto rng = make_stream(10, "t");
    const auto dir = std::filesystem::temp_directory_path() / "fdsic_canceler_test";
    std::filesystem::create_directories(dir);

    LinearCanceler<cplx> lin(3);
    lin.taps = random_vec(rng, 3);
    write_canceler_file((dir / "l.txt").string(), to_file(lin));
    EXPECT_EQ(linear_from_file(read_canceler_file((dir / "l.txt").string())).taps, lin.taps);

    const auto wl = wlmp_embed_hardware(random_hw(rng, 3, 5));
    write_canceler_file((dir / "w.txt").string(), to_file(wl));
    EXPECT_EQ(wlmp_from_file(read_canceler_file((dir / "w.txt").string())).weights, wl.weights);

    const auto mb = MbnnCanceler<cplx>::from_hardware(random_hw(rng, 3, 5));
    write_canceler_file((dir / "m.txt").string(), to_file(mb));
    const auto back = mbnn_from_file(read_canceler_file((dir / "m.txt").string()));
    EXPECT_EQ(back.k1(), mb.k1());
    EXPECT_EQ(back.k2(), mb.k2());
    EXPECT_EQ(back.taps(), mb.taps());

    EXPECT_THROW(linear_from_file(read_canceler_file((dir / "m.txt").string())), std::runtime_error);
    {
        std::ofstream bad(dir / "bad.txt");
        bad << "not-a-canceler\n";
    }
    EXPECT_ANY_THROW(read_canceler_file((dir / "bad.txt").string()));
    std::filesystem::remove_all(dir);
}
