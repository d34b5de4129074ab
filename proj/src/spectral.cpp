#include "memsd/spectral.hpp"

#include "memsd/device.hpp"
#include "memsd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fftw3.h>
#include <numbers>
#include <string>

namespace memsd {

using std::numbers::pi;

namespace {

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft(std::vector<std::complex<double>>& data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) throw ValidationError("fft: size must be a power of two");
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        // fftw planning is not thread-safe; execution is
        std::lock_guard lock(plan_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (auto& x : data) x *= s;
    }
}

std::string_view window_name(Window w) { return w == Window::rect ? "rect" : "hann"; }

Window window_from_name(std::string_view name) {
    if (name == "rect") return Window::rect;
    if (name == "hann") return Window::hann;
    throw ValidationError("unknown window '" + std::string(name) + "' (expected rect or hann)");
}

std::vector<double> window_coefficients(std::size_t n, Window w) {
    std::vector<double> c(n, 1.0);
    if (w == Window::hann)
        for (std::size_t i = 0; i < n; ++i)
            c[i] = 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n)));
    return c;
}

Spectrum amplitude_spectrum(std::span<const double> samples, double dt, Window window, std::size_t pad_to) {
    const std::size_t n = samples.size();
    if (n < 16) throw ValidationError("amplitude_spectrum: need at least 16 samples");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("amplitude_spectrum: dt must be finite and > 0");
    for (double x : samples)
        if (!std::isfinite(x)) throw ValidationError("amplitude_spectrum: non-finite sample");
    const std::size_t size = pad_to ? pad_to : next_power_of_two(n);
    if (!is_power_of_two(size) || size < n)
        throw ValidationError("amplitude_spectrum: pad_to must be a power of two >= the sample count");

    const auto w = window_coefficients(n, window);
    double gain = 0.0;
    std::vector<std::complex<double>> data(size);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = samples[i] * w[i];
        gain += w[i];
    }
    fft(data);

    Spectrum s;
    s.window = window;
    s.sample_count = n;
    s.fft_size = size;
    s.dt = dt;
    s.bin_spacing = 1.0 / (static_cast<double>(size) * dt);
    s.bins.assign(data.begin(), data.begin() + static_cast<long>(size / 2 + 1));
    s.amplitude.resize(s.bins.size());
    for (std::size_t k = 0; k < s.bins.size(); ++k) {
        const double edge = (k == 0 || k == size / 2) ? 1.0 : 2.0;
        s.amplitude[k] = edge * std::abs(s.bins[k]) / gain;
    }
    return s;
}

double spectral_energy(const Spectrum& s) {
    const std::size_t half = s.fft_size / 2;
    double sum = 0.0;
    for (std::size_t k = 0; k <= half; ++k) {
        const double e = std::norm(s.bins[k]);
        sum += (k == 0 || k == half) ? e : 2.0 * e;
    }
    return sum * s.dt / static_cast<double>(s.fft_size);
}

std::span<const double> settled_segment(const Trajectory& tr, const std::vector<double>& series) {
    if (series.size() != tr.size()) throw ValidationError("settled_segment: series length differs from trajectory");
    const std::size_t begin = tr.settling_index;
    std::size_t n = tr.size() - begin;
    if (tr.samples_per_period) n -= n % tr.samples_per_period;
    return std::span(series).subspan(begin, n);
}

namespace {

// Vertex of the parabola through three points of log-amplitude.
void parabolic_peak(const double* x, const double* a, double& f, double& amp) {
    if (!(a[0] > 0.0) || !(a[1] > 0.0) || !(a[2] > 0.0)) return;
    const double y0 = std::log(a[0]), y1 = std::log(a[1]), y2 = std::log(a[2]);
    const double d0 = (y1 - y0) / (x[1] - x[0]);
    const double d1 = (y2 - y1) / (x[2] - x[1]);
    const double c2 = (d1 - d0) / (x[2] - x[0]);
    if (!(c2 < 0.0)) return;
    const double c1 = d0 - c2 * (x[0] + x[1]);
    const double xv = -c1 / (2.0 * c2);
    if (xv < x[0] || xv > x[2]) return;
    f = xv;
    amp = std::exp(y0 + d0 * (xv - x[0]) + c2 * (xv - x[0]) * (xv - x[1]));
}

// DTFT of the window at an offset of nu record bins, normalized to 1 at nu = 0.
double window_response(double nu, std::size_t n, Window w) {
    const double nn = static_cast<double>(n);
    auto dirichlet = [&](double v) {
        const double den = std::sin(pi * v / nn);
        if (std::abs(den) < 1e-300) return std::complex<double>(nn, 0.0);
        return std::polar(std::sin(pi * v) / den, -pi * v * (nn - 1.0) / nn);
    };
    if (w == Window::rect) return std::abs(dirichlet(nu)) / nn;
    const auto d = 0.5 * dirichlet(nu) - 0.25 * dirichlet(nu - 1.0) - 0.25 * dirichlet(nu + 1.0);
    return std::abs(d) / (0.5 * nn);
}

double cross(double x0, double a0, double x1, double a1, double level) {
    return x0 + (level - a0) * (x1 - x0) / (a1 - a0);
}

}  // namespace

ResonanceFit resonance_fit(std::span<const double> frequency, std::span<const double> amplitude) {
    const std::size_t n = frequency.size();
    if (n != amplitude.size()) throw ValidationError("resonance_fit: frequency and amplitude lengths differ");
    if (n < 3) throw FitError(FitError::Kind::no_peak, "resonance_fit: fewer than 3 points");
    for (std::size_t i = 1; i < n; ++i)
        if (!(frequency[i] > frequency[i - 1]))
            throw ValidationError("resonance_fit: frequencies must be strictly increasing");

    const std::size_t k = static_cast<std::size_t>(std::max_element(amplitude.begin(), amplitude.end()) - amplitude.begin());
    if (!(amplitude[k] > 0.0) || !std::isfinite(amplitude[k]))
        throw FitError(FitError::Kind::no_peak, "resonance_fit: no positive peak");
    if (std::all_of(amplitude.begin(), amplitude.end(), [&](double a) { return a == amplitude[k]; }))
        throw FitError(FitError::Kind::no_peak, "resonance_fit: flat response, no peak");
    if (k == 0 || k == n - 1)
        throw FitError(FitError::Kind::half_power_out_of_band,
                       "resonance_fit: maximum lies on the band edge, the resonance is outside the band");

    ResonanceFit fit;
    fit.peak_frequency = frequency[k];
    fit.peak_amplitude = amplitude[k];
    parabolic_peak(&frequency[k - 1], &amplitude[k - 1], fit.peak_frequency, fit.peak_amplitude);
    fit.peak_amplitude = std::max(fit.peak_amplitude, amplitude[k]);

    const double level = fit.peak_amplitude / std::sqrt(2.0);
    std::size_t lo = k;
    while (lo > 0 && amplitude[lo - 1] >= level) --lo;
    std::size_t hi = k;
    while (hi + 1 < n && amplitude[hi + 1] >= level) ++hi;
    if (lo == 0 || hi == n - 1)
        throw FitError(FitError::Kind::half_power_out_of_band,
                       "resonance_fit: half-power crossing outside the band; widen the sweep or lengthen the capture");
    fit.lower_crossing = cross(frequency[lo - 1], amplitude[lo - 1], frequency[lo], amplitude[lo], level);
    fit.upper_crossing = cross(frequency[hi], amplitude[hi], frequency[hi + 1], amplitude[hi + 1], level);
    fit.bandwidth = fit.upper_crossing - fit.lower_crossing;
    if (!(fit.bandwidth > 0.0))
        throw FitError(FitError::Kind::degenerate_q, "resonance_fit: zero bandwidth");
    fit.quality_factor = fit.peak_frequency / fit.bandwidth;
    if (!(fit.quality_factor >= 1.0))
        throw FitError(FitError::Kind::degenerate_q,
                       "resonance_fit: Q = " + std::to_string(fit.quality_factor) + " < 1 has no damping ratio");
    fit.damping_ratio = zeta_from_quality_factor(fit.quality_factor);
    return fit;
}

ResonanceFit resonance_fit(const Spectrum& s) {
    if (s.size() < 4) throw FitError(FitError::Kind::no_peak, "resonance_fit: spectrum too short");
    std::vector<double> f(s.size() - 1);
    for (std::size_t k = 1; k < s.size(); ++k) f[k - 1] = s.frequency(k);
    return resonance_fit(f, std::span(s.amplitude).subspan(1));
}

ResonanceFit resonance_fit(const FrequencyResponse& fr) {
    // in doubler wiring the response sits at 2 f_in
    std::vector<double> f(fr.frequency);
    for (double& x : f) x *= fr.harmonic;
    return resonance_fit(f, fr.amplitude);
}

SpectralPeak tone_peak(const Spectrum& s, std::size_t k) {
    if (k >= s.size()) throw ValidationError("tone_peak: bin out of range");
    SpectralPeak p{s.frequency(k), s.amplitude[k]};
    if (k == 0 || k + 1 >= s.size() || !(s.amplitude[k] > 0.0)) return p;
    const bool up = s.amplitude[k + 1] >= s.amplitude[k - 1];
    const double ratio = (up ? s.amplitude[k + 1] : s.amplitude[k - 1]) / s.amplitude[k];
    if (ratio > 1.0) return p;
    // fft bins -> record bins
    const double r = static_cast<double>(s.sample_count) / static_cast<double>(s.fft_size);
    auto model_ratio = [&](double x) {
        return window_response((1.0 - x) * r, s.sample_count, s.window) /
               window_response(x * r, s.sample_count, s.window);
    };
    double lo = 0.0, hi = 0.5;
    if (model_ratio(lo) >= ratio) hi = 0.0;
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (model_ratio(mid) < ratio ? lo : hi) = mid;
    }
    const double x = 0.5 * (lo + hi);
    p.frequency = s.frequency(k) + (up ? x : -x) * s.bin_spacing;
    p.amplitude = s.amplitude[k] / window_response(x * r, s.sample_count, s.window);
    return p;
}

std::vector<HarmonicComponent> purity_report(const Spectrum& s, double fundamental, int harmonics) {
    if (!(fundamental > 0.0)) throw ValidationError("purity_report: fundamental must be > 0");
    if (harmonics < 1) throw ValidationError("purity_report: need at least one harmonic");
    std::vector<HarmonicComponent> out;
    for (int m = 1; m <= harmonics; ++m) {
        const double f = m * fundamental;
        if (f > s.nyquist())
            throw ValidationError("purity_report: harmonic " + std::to_string(m) + " at " + std::to_string(f) +
                                  " Hz is beyond Nyquist " + std::to_string(s.nyquist()) + " Hz");
        const auto centre = static_cast<long>(std::llround(f / s.bin_spacing));
        const long last = static_cast<long>(s.size()) - 1;
        const long a = std::max(0L, centre - 2), b = std::min(last, centre + 2);
        long k = a;
        for (long i = a; i <= b; ++i)
            if (s.amplitude[static_cast<std::size_t>(i)] > s.amplitude[static_cast<std::size_t>(k)]) k = i;
        const auto ku = static_cast<std::size_t>(k);
        const bool local_max = ku == 0 || ku + 1 >= s.size() ||
                               (s.amplitude[ku] >= s.amplitude[ku - 1] && s.amplitude[ku] >= s.amplitude[ku + 1]);
        const double amp = local_max ? tone_peak(s, ku).amplitude : s.amplitude[ku];
        out.push_back({m, f, amp, 0.0});
    }
    double top = 0.0;
    for (const auto& c : out) top = std::max(top, c.amplitude);
    for (auto& c : out)
        c.level_db = (top > 0.0 && c.amplitude > 0.0) ? std::max(-400.0, 20.0 * std::log10(c.amplitude / top))
                                                         : (top > 0.0 ? -400.0 : 0.0);
    return out;
}

}  // namespace memsd
