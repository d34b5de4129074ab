#pragma once

#include "memsd/transient.hpp"

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace memsd {

/// In-place FFT (FFTW); size must be a power of two. The inverse is scaled by 1/N.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

enum class Window { rect, hann };

std::string_view window_name(Window w);
Window window_from_name(std::string_view name);

/// Periodic window of length n.
std::vector<double> window_coefficients(std::size_t n, Window w);

/// One-sided spectrum (bins 0 .. N/2) of a windowed, zero-padded record.
struct Spectrum {
    double bin_spacing = 0.0;  // 1 / (N dt), Hz
    std::vector<std::complex<double>> bins;
    std::vector<double> amplitude;  // sine amplitude, coherent-gain corrected
    Window window = Window::hann;
    std::size_t sample_count = 0;  // samples before padding
    std::size_t fft_size = 0;      // N
    double dt = 0.0;

    std::size_t size() const { return amplitude.size(); }
    double frequency(std::size_t k) const { return bin_spacing * static_cast<double>(k); }
    double nyquist() const { return 0.5 / dt; }
};

/// pad_to = 0 pads to the next power of two. Throws ValidationError for fewer
/// than 16 samples, non-finite samples, or a pad_to that is not a power of two
/// at least as long as the record.
Spectrum amplitude_spectrum(std::span<const double> samples, double dt, Window window = Window::hann,
                            std::size_t pad_to = 0);

/// dt / N * sum |X_k|^2 over the full two-sided spectrum; equals the energy
/// sum |x_i|^2 dt of the (windowed) record.
double spectral_energy(const Spectrum& s);

/// Post-settling part of `series` truncated to whole drive periods.
std::span<const double> settled_segment(const Trajectory& tr, const std::vector<double>& series);

struct SpectralPeak {
    double frequency = 0.0;
    double amplitude = 0.0;
};

/// Single-tone estimate around local-maximum bin k: the offset is solved from
/// the ratio of bin k to its larger neighbour using the exact window response,
/// and the amplitude is corrected for scalloping. Bins at the ends are returned as is.
SpectralPeak tone_peak(const Spectrum& s, std::size_t k);

struct ResonanceFit {
    double peak_frequency = 0.0;
    double peak_amplitude = 0.0;
    double bandwidth = 0.0;
    double lower_crossing = 0.0;
    double upper_crossing = 0.0;
    double quality_factor = 0.0;
    double damping_ratio = 0.0;
};

/// Peak by 3-point parabola on log amplitude; half-power crossings by linear
/// interpolation in amplitude; Q = f_peak / bandwidth. Throws FitError.
ResonanceFit resonance_fit(std::span<const double> frequency, std::span<const double> amplitude);
/// Ignores the DC bin.
ResonanceFit resonance_fit(const Spectrum& s);
ResonanceFit resonance_fit(const FrequencyResponse& fr);

struct HarmonicComponent {
    int order = 0;
    double frequency = 0.0;  // nominal m f, Hz
    double amplitude = 0.0;
    double level_db = 0.0;  // relative to the largest listed component
};

/// Components at m f for m = 1 .. harmonics, each the largest bin within
/// +-2 bins of m f refined by tone_peak. Throws ValidationError if a harmonic is beyond Nyquist.
std::vector<HarmonicComponent> purity_report(const Spectrum& s, double fundamental, int harmonics);

}  // namespace memsd
