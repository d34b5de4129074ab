#include <doctest.h>

#include "approx.hpp"

#include "memsd/device.hpp"
#include "memsd/electrostatics.hpp"
#include "memsd/errors.hpp"
#include "memsd/spectral.hpp"
#include "memsd/transient.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

using namespace memsd;
using std::numbers::pi;
using cplx = std::complex<double>;

namespace {

std::vector<double> random_signal(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

std::vector<double> tone(std::size_t n, double dt, double amp, double f, double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * pi * f * dt * static_cast<double>(i) + phase);
    return x;
}

double max_abs(const std::vector<cplx>& v) {
    double m = 0.0;
    for (const auto& z : v) m = std::max(m, std::abs(z));
    return m;
}

}  // namespace

TEST_CASE("fft matches a direct DFT") {
    const std::size_t n = 64;
    const auto re = random_signal(n, 1), im = random_signal(n, 2);
    std::vector<cplx> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = {re[i], im[i]};
    auto y = x;
    fft(y);
    for (std::size_t k = 0; k < n; ++k) {
        long double sr = 0, si = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const long double a = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(j * k % n) / n;
            sr += re[j] * std::cos(a) - im[j] * std::sin(a);
            si += re[j] * std::sin(a) + im[j] * std::cos(a);
        }
        CHECK(std::abs(y[k] - cplx(static_cast<double>(sr), static_cast<double>(si))) < 1e-13 * max_abs(y));
    }
}

TEST_CASE("fft round trip for lengths 2^4 .. 2^16") {
    for (int k = 4; k <= 16; ++k) {
        const std::size_t n = std::size_t{1} << k;
        const auto re = random_signal(n, 10 + k), im = random_signal(n, 100 + k);
        std::vector<cplx> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = {re[i], im[i]};
        auto y = x;
        fft(y);
        fft(y, true);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(y[i] - x[i]));
        CAPTURE(k);
        CHECK(err < 1e-12 * max_abs(x));
    }
    std::vector<cplx> bad(12);
    CHECK_THROWS_AS(fft(bad), ValidationError);
}

TEST_CASE("spectrum operator is linear") {
    const std::size_t n = 3000;
    const double dt = 1e-6, a = 2.5, b = -0.75;
    const auto x = random_signal(n, 7), y = random_signal(n, 8);
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
    for (Window w : {Window::rect, Window::hann}) {
        const auto sx = amplitude_spectrum(x, dt, w), sy = amplitude_spectrum(y, dt, w),
                   sz = amplitude_spectrum(z, dt, w);
        REQUIRE(sz.fft_size == 4096);
        const double scale = max_abs(sz.bins);
        for (std::size_t k = 0; k < sz.size(); ++k)
            CHECK(std::abs(sz.bins[k] - (a * sx.bins[k] + b * sy.bins[k])) < 1e-12 * scale);
    }
}

TEST_CASE("bin-centred tone reports its amplitude") {
    const std::size_t n = 4096;
    const double dt = 1e-7;
    const double df = 1.0 / (n * dt);
    const auto x = tone(n, dt, 1e-9, 300 * df, 0.4);
    const auto rect = amplitude_spectrum(x, dt, Window::rect);
    CHECK(rect.bin_spacing == rel(df).epsilon(1e-15));
    CHECK(std::abs(rect.amplitude[300] / 1e-9 - 1.0) < 1e-9);
    const auto hann = amplitude_spectrum(x, dt, Window::hann);
    CHECK(std::abs(hann.amplitude[300] / 1e-9 - 1.0) < 1e-9);
}

TEST_CASE("Parseval identity with the rectangular window") {
    for (std::size_t n : {16u, 1000u, 4096u, 40000u}) {
        const double dt = 3e-8;
        const auto x = random_signal(n, static_cast<unsigned>(n));
        double e = 0.0;
        for (double v : x) e += v * v * dt;
        const auto s = amplitude_spectrum(x, dt, Window::rect);
        CAPTURE(n);
        CHECK(std::abs(spectral_energy(s) / e - 1.0) < 1e-9);
    }
}

TEST_CASE("two tones off the bin grid through the Hann window") {
    const std::size_t n = 1 << 15;
    const double dt = 1e-7;
    const double df = 1.0 / (n * dt);
    for (double offset : {0.0, 0.17, 0.31, 0.5}) {
        const double f = (1000.0 + offset) * df;
        auto x = tone(n, dt, 1e-9, f);
        const auto y = tone(n, dt, 1e-11, 2 * f, 1.1);
        for (std::size_t i = 0; i < n; ++i) x[i] += y[i];
        const auto s = amplitude_spectrum(x, dt);
        const auto r = purity_report(s, f, 2);
        CAPTURE(offset);
        CHECK(r[0].amplitude == rel(1e-9).epsilon(0.01));
        CHECK(r[1].amplitude == rel(1e-11).epsilon(0.01));
        CHECK(std::abs(r[1].level_db + 40.0) < 0.2);
    }
}

TEST_CASE("amplitude_spectrum argument checks") {
    CHECK_THROWS_AS(amplitude_spectrum(random_signal(15, 1), 1.0), ValidationError);
    auto x = random_signal(64, 1);
    x[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(amplitude_spectrum(x, 1.0), ValidationError);
    x[5] = 0.0;
    CHECK_THROWS_AS(amplitude_spectrum(x, 1.0, Window::hann, 32), ValidationError);
    CHECK_THROWS_AS(amplitude_spectrum(x, 1.0, Window::hann, 100), ValidationError);
    CHECK(amplitude_spectrum(x, 1.0, Window::hann, 256).fft_size == 256);
    CHECK(window_from_name("rect") == Window::rect);
    CHECK_THROWS_AS(window_from_name("hamming"), ValidationError);
}

TEST_CASE("Q and damping ratio conversions") {
    CHECK(quality_factor_from_zeta(0.0125) == rel(40.0).epsilon(1e-4));
    CHECK(std::abs(zeta_from_quality_factor(40.0) - 0.0125) < 1e-4);
    for (double q : {1.0, 1.5, 10.0, 40.0, 1e4}) {
        const double z = zeta_from_quality_factor(q);
        CHECK(z > 0.0);
        CHECK(z <= 1.0 / std::sqrt(2.0) + 1e-15);
        CHECK(quality_factor_from_zeta(z) == rel(q).epsilon(1e-12));
    }
}

TEST_CASE("resonance_fit on the analytic transfer function") {
    const double f1 = 455e3;
    for (double zeta : {0.005, 0.0075, 0.0125, 0.02, 0.035, 0.05}) {
        std::vector<double> f, a;
        for (int i = 0; i <= 8000; ++i) {
            const double fi = f1 * (0.7 + 0.6 * i / 8000.0);
            const double r = fi / f1;
            f.push_back(fi);
            a.push_back(1e-9 / std::hypot(1 - r * r, 2 * zeta * r));
        }
        const auto fit = resonance_fit(f, a);
        CAPTURE(zeta);
        CHECK(fit.peak_frequency == rel(f1).epsilon(0.01));
        CHECK(fit.damping_ratio == rel(zeta).epsilon(0.01));
        CHECK(fit.quality_factor == rel(fit.peak_frequency / fit.bandwidth).epsilon(1e-15));
        CHECK(fit.quality_factor ==
              rel(1.0 / (2 * fit.damping_ratio * std::sqrt(1 - fit.damping_ratio * fit.damping_ratio)))
                  .epsilon(1e-12));
        // the peak of |H| sits at f1 sqrt(1 - 2 zeta^2) with height 1 / (2 zeta sqrt(1 - zeta^2))
        CHECK(fit.peak_frequency == rel(f1 * std::sqrt(1 - 2 * zeta * zeta)).epsilon(1e-6));
        CHECK(fit.peak_amplitude ==
              rel(1e-9 / (2 * zeta * std::sqrt(1 - zeta * zeta))).epsilon(1e-5));
        if (zeta == 0.0125) CHECK(fit.quality_factor == rel(40.0).epsilon(0.02));
    }
}

TEST_CASE("resonance_fit on the spectrum of a decaying oscillation") {
    const double f1 = 1e3, zeta = 0.0125, dt = 1.0 / (64 * f1);
    const std::size_t n = 1 << 16;
    const double wd = 2 * pi * f1 * std::sqrt(1 - zeta * zeta);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = dt * static_cast<double>(i);
        x[i] = std::exp(-zeta * 2 * pi * f1 * t) * std::sin(wd * t);
    }
    const auto fit = resonance_fit(amplitude_spectrum(x, dt, Window::rect));
    CHECK(fit.quality_factor == rel(40.0).epsilon(0.02));
    CHECK(fit.peak_frequency == rel(f1).epsilon(0.005));
}

TEST_CASE("resonance_fit failure modes") {
    std::vector<double> f, rising, narrow, broad;
    for (int i = 1; i <= 200; ++i) {
        const double fi = 0.5 * i;
        f.push_back(fi);
        rising.push_back(fi);
        narrow.push_back(1.0 / std::hypot(1 - std::pow(fi / 50.0, 2), 2 * 0.2 * fi / 50.0));
        broad.push_back(std::exp(-std::pow((fi - 50.0) / 60.0, 2)));
    }
    auto kind_of = [&](const std::vector<double>& a, std::size_t lo, std::size_t hi) {
        try {
            resonance_fit(std::span(f).subspan(lo, hi - lo), std::span(a).subspan(lo, hi - lo));
        } catch (const FitError& e) {
            return static_cast<int>(e.kind());
        }
        return -1;
    };
    CHECK(kind_of(rising, 0, 200) == static_cast<int>(FitError::Kind::half_power_out_of_band));
    const std::vector<double> flat(200, 1.0);
    CHECK(kind_of(flat, 0, 200) == static_cast<int>(FitError::Kind::no_peak));
    const std::vector<double> zeros(200, 0.0);
    CHECK(kind_of(zeros, 0, 200) == static_cast<int>(FitError::Kind::no_peak));
    CHECK(kind_of(narrow, 90, 110) == static_cast<int>(FitError::Kind::half_power_out_of_band));
    CHECK(kind_of(narrow, 0, 200) == -1);
    CHECK(kind_of(broad, 0, 200) == static_cast<int>(FitError::Kind::degenerate_q));
    const std::vector<double> down{3.0, 2.0, 1.0};
    CHECK_THROWS_AS(resonance_fit(down, down), ValidationError);
}

TEST_CASE("purity of a single tone") {
    const std::size_t n = 1 << 14;
    const double dt = 1e-7, f = 64.0 / (n * dt) * 7;
    const auto s = amplitude_spectrum(tone(n, dt, 1e-9, f), dt);
    const auto r = purity_report(s, f, 5);
    REQUIRE(r.size() == 5);
    CHECK(r[0].level_db == 0.0);
    for (std::size_t m = 1; m < r.size(); ++m) CHECK(r[m].level_db <= -100.0);
    CHECK_THROWS_AS(purity_report(s, f, 20), ValidationError);
    CHECK_THROWS_AS(purity_report(s, -1.0, 2), ValidationError);
}

TEST_CASE("doubler response is dominated by twice the drive frequency") {
    for (const char* name : {"beam-455kHz", "beam-1MHz"}) {
        const auto model = build_reduced_model(preset(name));
        const DriveSignal drive{WiringMode::doubler, 10.0, 5.0, model.natural_frequency / 2, std::nullopt};
        const auto tr = doubler_run(model, drive, 64);
        const auto seg = settled_segment(tr, tr.q);
        REQUIRE(seg.size() == 64 * tr.samples_per_period);
        const auto s = amplitude_spectrum(seg, tr.dt);
        const auto r = purity_report(s, drive.input_frequency, 4);
        CAPTURE(name);
        CAPTURE(r[0].level_db);
        CHECK(r[1].level_db == 0.0);
        CHECK(r[0].level_db <= -40.0);

        const auto is = amplitude_spectrum(settled_segment(tr, tr.current), tr.dt);
        CHECK(purity_report(is, drive.input_frequency, 2)[0].level_db <= -40.0);
    }
}

TEST_CASE("resonator response at f1 is dominated by the fundamental") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    DriveSignal drive{WiringMode::resonator, 20.0, 0.1, 1.0, std::nullopt};
    drive.input_frequency = biased_resonance_frequency(model, drive);
    const auto tr = run_to_steady_state(model, drive, {.capture_periods = 64});
    const auto s = amplitude_spectrum(settled_segment(tr, tr.q), tr.dt);
    const auto r = purity_report(s, drive.input_frequency, 3);
    CHECK(r[0].level_db == 0.0);
    CHECK(r[1].level_db < -40.0);
    CHECK(r[2].level_db < -40.0);
}

TEST_CASE("tone_peak corrects scalloping for both windows and padding") {
    const std::size_t n = 5000;
    const double dt = 1e-6;
    for (Window w : {Window::rect, Window::hann}) {
        for (std::size_t pad : {8192u, 32768u}) {
            for (double offset : {0.0, 0.23, 0.5, 0.81}) {
                const double f = (600.0 + offset) / (n * dt);
                const auto s = amplitude_spectrum(tone(n, dt, 2e-9, f, 0.3), dt, w, pad);
                std::size_t k = 1;
                for (std::size_t i = 1; i < s.size(); ++i)
                    if (s.amplitude[i] > s.amplitude[k]) k = i;
                const auto p = tone_peak(s, k);
                CAPTURE(offset);
                CAPTURE(pad);
                CHECK(p.amplitude == rel(2e-9, 2e-3));
                CHECK(std::abs(p.frequency - f) < 2e-3 / (n * dt));
            }
        }
    }
}
