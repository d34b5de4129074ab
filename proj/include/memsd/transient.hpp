#pragma once

#include "memsd/electrostatics.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace memsd {

/// Uniformly sampled single-mode response; sample i is at t = i * dt.
struct Trajectory {
    double dt = 0.0;
    std::vector<double> q;             // modal tip displacement, m
    std::vector<double> q_dot;         // m/s
    std::vector<double> output_capacitance;  // F
    std::vector<double> current;       // motional current i_o, A
    std::vector<double> load_voltage;  // V
    DriveSignal drive;
    /// Samples per drive period (1 / f_in) when the step divides it exactly, else 0.
    std::size_t samples_per_period = 0;
    std::size_t settling_index = 0;
    bool settled = false;

    std::size_t size() const { return q.size(); }
    double time(std::size_t i) const { return dt * static_cast<double>(i); }
};

/// Integration step ceiling 1 / (256 f_max), f_max = max(2 f_in, f_1).
double max_time_step(const ReducedModel& model, const DriveSignal& drive);

/// Number of steps per drive period that respects the step ceiling.
std::size_t default_samples_per_period(const ReducedModel& model, const DriveSignal& drive);

struct InitialState {
    double q = 0.0;
    double q_dot = 0.0;
};

/// Equilibrium under the static part of the drive; q_dot = 0.
InitialState bias_equilibrium(const ReducedModel& model, const DriveSignal& drive);

/// Fixed-step classical RK4 of m q'' + c q' + k q = F_in(t, q) + F_out(q).
/// Starts from `initial` (default: bias_equilibrium). Throws OverclosureError
/// (with the time) if the beam reaches an electrode, ValidationError if dt
/// exceeds max_time_step or duration < 10 / f_1. Settling is detected
/// afterwards on drive-period cycles; an unsettled run is flagged, not fatal.
Trajectory simulate(const ReducedModel& model, const DriveSignal& drive, double duration, double dt,
                    std::optional<InitialState> initial = std::nullopt);

struct SteadyStateOptions {
    std::size_t capture_periods = 8;
    /// 0: default_samples_per_period.
    std::size_t samples_per_period = 0;
    /// 0: 20 Q drive periods.
    std::size_t max_periods = 0;
};

/// Integrates period by period until the cycle RMS settles, then records
/// `capture_periods` more drive periods. The trajectory holds everything from
/// t = 0; the settling index marks the start of the capture.
Trajectory run_to_steady_state(const ReducedModel& model, const DriveSignal& drive,
                               const SteadyStateOptions& options = {});

/// Doubler-wired steady-state run; requires f_in within 5% of f_1 / 2.
Trajectory doubler_run(const ReducedModel& model, const DriveSignal& drive, std::size_t capture_periods);

/// Linearized resonance including electrostatic softening at the bias point, Hz.
double biased_resonance_frequency(const ReducedModel& model, const DriveSignal& drive);

struct FrequencyResponse {
    std::vector<double> frequency;          // drive frequency f_in, Hz
    std::vector<double> amplitude;          // response component amplitude, m
    std::vector<double> phase;              // rad, relative to sin of the response harmonic
    std::vector<double> current_amplitude;  // A
    std::vector<bool> settled;
    /// 1 in resonator wiring (response at f_in), 2 in doubler wiring (at 2 f_in).
    int harmonic = 1;

    std::size_t size() const { return frequency.size(); }
    bool all_settled() const;
};

enum class Spacing { linear, log };

/// Sine amplitude and phase of `samples` at `frequency`, by quadrature inner
/// products over a window holding an integer number of periods.
struct ToneEstimate {
    double amplitude = 0.0;
    double phase = 0.0;
};
ToneEstimate project_tone(std::span<const double> samples, double dt, double t0, double frequency);

/// Steady-state response at each listed drive frequency (strictly increasing).
/// Points are independent and run concurrently. `options` sets the sampling
/// and period cap of every point; each measures over 8 captured periods.
FrequencyResponse frequency_response(const ReducedModel& model, const DriveSignal& drive_template,
                                     std::span<const double> frequencies, const SteadyStateOptions& options = {});

FrequencyResponse frequency_sweep(const ReducedModel& model, const DriveSignal& drive_template, double f_lo,
                                  double f_hi, std::size_t n_points, Spacing spacing = Spacing::linear,
                                  const SteadyStateOptions& options = {});

}  // namespace memsd
