#include "memsd/transient.hpp"

#include "memsd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

namespace memsd {

using std::numbers::pi;

namespace {

constexpr double kStepsPerFastestPeriod = 256.0;
constexpr double kSettleTolerance = 1e-4;
constexpr std::size_t kSettleRun = 8;
constexpr std::size_t kUndampedPeriodCap = 20000;

class Integrator {
public:
    Integrator(const ReducedModel& model, const DriveSignal& drive, double dt)
        : model_(model), drive_(drive), dt_(dt) {
        out_force_scale_ = 0.5 * drive.bias_voltage * drive.bias_voltage;
    }

    // q'' for the current forcing.
    double acceleration(double t, double q, double q_dot) const {
        const double v_in = transducer_voltage(t, drive_).input;
        const double force =
            0.5 * v_in * v_in * model_.input.gradient(q) + out_force_scale_ * model_.output.gradient(q);
        return (force - model_.damping_coefficient * q_dot - model_.stiffness * q) / model_.mass;
    }

    void step(double t, double& q, double& v) const {
        const double h = dt_;
        const double a1 = acceleration(t, q, v);
        const double q2 = q + 0.5 * h * v, v2 = v + 0.5 * h * a1;
        const double a2 = acceleration(t + 0.5 * h, q2, v2);
        const double q3 = q + 0.5 * h * v2, v3 = v + 0.5 * h * a2;
        const double a3 = acceleration(t + 0.5 * h, q3, v3);
        const double q4 = q + h * v3, v4 = v + h * a3;
        const double a4 = acceleration(t + h, q4, v4);
        q += h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
        v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    }

private:
    const ReducedModel& model_;
    const DriveSignal& drive_;
    double dt_;
    double out_force_scale_;
};

void record(Trajectory& tr, const ReducedModel& model, double q, double q_dot) {
    const auto out = model.output.evaluate(q);
    const double i = tr.drive.bias_voltage * out.gradient * q_dot;
    tr.q.push_back(q);
    tr.q_dot.push_back(q_dot);
    tr.output_capacitance.push_back(out.capacitance);
    tr.current.push_back(i);
    tr.load_voltage.push_back(i * model.load_resistance);
}

// Integrates `steps` steps from the last recorded sample, recording each one.
void advance(Trajectory& tr, const ReducedModel& model, const Integrator& integ, std::size_t steps) {
    double q = tr.q.back();
    double v = tr.q_dot.back();
    std::size_t i = tr.size() - 1;
    for (std::size_t s = 0; s < steps; ++s, ++i) {
        const double t = tr.time(i);
        try {
            integ.step(t, q, v);
            record(tr, model, q, v);
        } catch (const OverclosureError& e) {
            throw OverclosureError("beam contacted an electrode at t = " + std::to_string(t) +
                                       " s, q = " + std::to_string(e.displacement()) +
                                       " m (pull-in or excessive drive)",
                                   e.displacement(), t);
        }
    }
}

// RMS of q about its mean over samples [begin, begin + n).
double cycle_ac_rms(const std::vector<double>& q, std::size_t begin, std::size_t n) {
    double mean = 0.0;
    for (std::size_t i = begin; i < begin + n; ++i) mean += q[i];
    mean /= static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = begin; i < begin + n; ++i) sum += (q[i] - mean) * (q[i] - mean);
    return std::sqrt(sum / static_cast<double>(n));
}

struct SettleTracker {
    double floor;
    double previous = -1.0;
    std::size_t run = 0;

    // Feeds one cycle RMS; true once kSettleRun consecutive cycle pairs agree.
    bool feed(double rms) {
        if (previous >= 0.0) {
            const double scale = std::max(previous, floor);
            run = std::abs(rms - previous) < kSettleTolerance * scale ? run + 1 : 0;
        }
        previous = rms;
        return run >= kSettleRun;
    }
};

double settle_floor(const ReducedModel& model) {
    return 1e-12 * std::min(model.input.transducer().electrode.gap, model.output.transducer().electrode.gap);
}

std::size_t exact_period_samples(double dt, double f_in) {
    const double n = 1.0 / (f_in * dt);
    const double r = std::round(n);
    return (r >= 1.0 && std::abs(n - r) < 1e-9 * r) ? static_cast<std::size_t>(r) : 0;
}

}  // namespace

double max_time_step(const ReducedModel& model, const DriveSignal& drive) {
    const double f_max = std::max(2.0 * drive.input_frequency, model.natural_frequency);
    return 1.0 / (kStepsPerFastestPeriod * f_max);
}

std::size_t default_samples_per_period(const ReducedModel& model, const DriveSignal& drive) {
    const double needed = 1.0 / (max_time_step(model, drive) * drive.input_frequency);
    return static_cast<std::size_t>(std::ceil(needed * (1.0 - 1e-12)));
}

InitialState bias_equilibrium(const ReducedModel& model, const DriveSignal& drive) {
    const auto bias = static_bias(drive);
    return {static_equilibrium(model, bias.input, bias.output), 0.0};
}

Trajectory simulate(const ReducedModel& model, const DriveSignal& drive, double duration, double dt,
                    std::optional<InitialState> initial) {
    drive.validate();
    if (!(dt > 0.0)) throw ValidationError("simulate: dt must be > 0");
    if (dt > max_time_step(model, drive) * (1.0 + 1e-12))
        throw ValidationError("simulate: dt exceeds 1 / (256 f_max) = " +
                              std::to_string(max_time_step(model, drive)) + " s");
    if (duration < 10.0 / model.natural_frequency * (1.0 - 1e-12))
        throw ValidationError("simulate: duration must cover at least 10 periods of f_1");

    const InitialState start = initial ? *initial : bias_equilibrium(model, drive);
    Trajectory tr;
    tr.dt = dt;
    tr.drive = drive;
    tr.samples_per_period = exact_period_samples(dt, drive.input_frequency);
    const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
    for (auto* v : {&tr.q, &tr.q_dot, &tr.output_capacitance, &tr.current, &tr.load_voltage})
        v->reserve(steps + 1);
    record(tr, model, start.q, start.q_dot);
    const Integrator integ(model, drive, dt);
    advance(tr, model, integ, steps);

    const std::size_t cycle = tr.samples_per_period
                                  ? tr.samples_per_period
                                  : static_cast<std::size_t>(1.0 / (drive.input_frequency * dt));
    SettleTracker tracker{settle_floor(model)};
    tr.settling_index = tr.size() - 1;
    if (cycle >= 2) {
        for (std::size_t begin = 0; begin + cycle <= tr.size(); begin += cycle) {
            if (tracker.feed(cycle_ac_rms(tr.q, begin, cycle))) {
                tr.settled = true;
                tr.settling_index = std::min(begin + cycle, tr.size() - 1);
                break;
            }
        }
    }
    return tr;
}

Trajectory run_to_steady_state(const ReducedModel& model, const DriveSignal& drive,
                               const SteadyStateOptions& options) {
    drive.validate();
    if (drive.sweep) throw ValidationError("run_to_steady_state requires a sine drive");
    if (options.capture_periods < 1) throw ValidationError("capture_periods must be >= 1");
    const std::size_t per_period =
        options.samples_per_period ? options.samples_per_period : default_samples_per_period(model, drive);
    const double dt = 1.0 / (static_cast<double>(per_period) * drive.input_frequency);
    if (dt > max_time_step(model, drive) * (1.0 + 1e-12))
        throw ValidationError("run_to_steady_state: samples_per_period too small for the step ceiling");

    std::size_t max_periods = options.max_periods;
    if (max_periods == 0) {
        const double q = 1.0 / (2.0 * model.damping_ratio() * std::sqrt(1.0 - std::pow(model.damping_ratio(), 2)));
        max_periods = std::isfinite(q) ? static_cast<std::size_t>(std::ceil(20.0 * q)) : kUndampedPeriodCap;
    }

    Trajectory tr;
    tr.dt = dt;
    tr.drive = drive;
    tr.samples_per_period = per_period;
    const InitialState start = bias_equilibrium(model, drive);
    record(tr, model, start.q, start.q_dot);
    const Integrator integ(model, drive, dt);

    SettleTracker tracker{settle_floor(model)};
    std::size_t periods = 0;
    while (periods < max_periods) {
        const std::size_t begin = tr.size() - 1;
        advance(tr, model, integ, per_period);
        ++periods;
        if (tracker.feed(cycle_ac_rms(tr.q, begin, per_period))) {
            tr.settled = true;
            break;
        }
    }
    tr.settling_index = tr.size() - 1;
    advance(tr, model, integ, per_period * options.capture_periods);
    return tr;
}

Trajectory doubler_run(const ReducedModel& model, const DriveSignal& drive, std::size_t capture_periods) {
    if (drive.mode != WiringMode::doubler) throw ValidationError("doubler_run requires doubler wiring");
    const double half = 0.5 * model.natural_frequency;
    if (std::abs(drive.input_frequency - half) > 0.05 * half)
        throw ValidationError("doubler_run: f_in must lie within 5% of f_1 / 2 = " + std::to_string(half) + " Hz");
    SteadyStateOptions options;
    options.capture_periods = capture_periods;
    return run_to_steady_state(model, drive, options);
}

double biased_resonance_frequency(const ReducedModel& model, const DriveSignal& drive) {
    const auto bias = static_bias(drive);
    const double q = static_equilibrium(model, bias.input, bias.output);
    return std::sqrt(linearized_stiffness(model, bias.input, bias.output, q) / model.mass) / (2.0 * pi);
}

bool FrequencyResponse::all_settled() const {
    return std::all_of(settled.begin(), settled.end(), [](bool s) { return s; });
}

ToneEstimate project_tone(std::span<const double> samples, double dt, double t0, double frequency) {
    if (samples.empty()) throw ValidationError("project_tone: no samples");
    const double w = 2.0 * pi * frequency;
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double t = t0 + dt * static_cast<double>(i);
        s += samples[i] * std::sin(w * t);
        c += samples[i] * std::cos(w * t);
    }
    const double scale = 2.0 / static_cast<double>(samples.size());
    s *= scale;
    c *= scale;
    // x = A sin(wt + phase) -> s = A cos(phase), c = A sin(phase)
    return {std::hypot(s, c), std::atan2(c, s)};
}

namespace {

struct ResponsePoint {
    double amplitude = 0.0;
    double phase = 0.0;
    double current = 0.0;
    bool settled = false;
};

constexpr std::size_t kPhaseCycles = 8;

ResponsePoint response_point(const ReducedModel& model, DriveSignal drive, double f, int harmonic,
                             SteadyStateOptions options) {
    drive.input_frequency = f;
    options.capture_periods = kPhaseCycles;
    const auto tr = run_to_steady_state(model, drive, options);
    const std::size_t n = kPhaseCycles * tr.samples_per_period;
    const std::size_t begin = tr.size() - n;
    const double t0 = tr.time(begin);
    const double f_resp = harmonic * f;
    const auto qt = project_tone(std::span(tr.q).subspan(begin, n), tr.dt, t0, f_resp);
    const auto it = project_tone(std::span(tr.current).subspan(begin, n), tr.dt, t0, f_resp);
    return {qt.amplitude, qt.phase, it.amplitude, tr.settled};
}

}  // namespace

FrequencyResponse frequency_response(const ReducedModel& model, const DriveSignal& drive_template,
                                     std::span<const double> frequencies, const SteadyStateOptions& options) {
    drive_template.validate();
    if (frequencies.empty()) throw ValidationError("frequency_response: no frequencies");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        if (!(frequencies[i] > 0.0)) throw ValidationError("frequency_response: frequencies must be > 0");
        if (i > 0 && !(frequencies[i] > frequencies[i - 1]))
            throw ValidationError("frequency_response: frequencies must be strictly increasing");
    }

    FrequencyResponse fr;
    fr.harmonic = drive_template.mode == WiringMode::doubler ? 2 : 1;
    const std::size_t n = frequencies.size();
    std::vector<ResponsePoint> points(n);

    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n; i += workers)
                points[i] = response_point(model, drive_template, frequencies[i], fr.harmonic, options);
        }));
    }
    for (auto& j : jobs) j.get();

    for (std::size_t i = 0; i < n; ++i) {
        fr.frequency.push_back(frequencies[i]);
        fr.amplitude.push_back(points[i].amplitude);
        fr.phase.push_back(points[i].phase);
        fr.current_amplitude.push_back(points[i].current);
        fr.settled.push_back(points[i].settled);
    }
    return fr;
}

FrequencyResponse frequency_sweep(const ReducedModel& model, const DriveSignal& drive_template, double f_lo,
                                  double f_hi, std::size_t n_points, Spacing spacing,
                                  const SteadyStateOptions& options) {
    if (!(f_lo > 0.0) || !(f_lo < f_hi)) throw ValidationError("frequency_sweep: need 0 < f_lo < f_hi");
    if (n_points < 2) throw ValidationError("frequency_sweep: need n_points >= 2");
    std::vector<double> grid(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n_points - 1);
        grid[i] = spacing == Spacing::linear ? f_lo + (f_hi - f_lo) * u
                                             : f_lo * std::pow(f_hi / f_lo, u);
    }
    grid.back() = f_hi;
    return frequency_response(model, drive_template, grid, options);
}

}  // namespace memsd
