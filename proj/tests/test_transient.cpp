#include <doctest.h>

#include "approx.hpp"

#include "memsd/device.hpp"
#include "memsd/electrostatics.hpp"
#include "memsd/errors.hpp"
#include "memsd/transient.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

using namespace memsd;
using std::numbers::pi;

namespace {

ReducedModel model_with(Damping damping, const char* name = "beam-455kHz") {
    auto d = preset(name);
    d.damping = damping;
    return build_reduced_model(d);
}

DriveSignal quiet(double f_in) { return DriveSignal{WiringMode::resonator, 0.0, 0.0, f_in, std::nullopt}; }

double energy(const ReducedModel& m, double q, double v) { return 0.5 * m.stiffness * q * q + 0.5 * m.mass * v * v; }

}  // namespace

TEST_CASE("step ceiling and default sampling") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    const double f1 = model.natural_frequency;
    const DriveSignal dbl{WiringMode::doubler, 10.0, 5.0, f1 / 2, std::nullopt};
    CHECK(max_time_step(model, dbl) == rel(1.0 / (256 * f1)));
    CHECK(default_samples_per_period(model, dbl) == 512);
    const DriveSignal fast{WiringMode::resonator, 10.0, 5.0, 2 * f1, std::nullopt};
    CHECK(max_time_step(model, fast) == rel(1.0 / (256 * 4 * f1)));
}

TEST_CASE("undamped free oscillation conserves amplitude") {
    const auto model = model_with(Damping::from_zeta(0.0));
    const double f1 = model.natural_frequency;
    const double w = 2 * pi * f1;
    const double dt = 1.0 / (1024 * f1);
    const auto tr = simulate(model, quiet(f1 / 2), 100.0 / f1, dt, InitialState{1e-9, 0.0});
    REQUIRE(tr.size() == 102401);

    const double a0 = std::hypot(tr.q[0], tr.q_dot[0] / w);
    for (std::size_t i = 0; i < tr.size(); i += 97)
        CHECK(std::abs(std::hypot(tr.q[i], tr.q_dot[i] / w) / a0 - 1.0) < 1e-9);

    auto peak_to_peak = [&](std::size_t cycle) {
        const auto b = tr.q.begin() + static_cast<long>(cycle * 1024);
        const auto [lo, hi] = std::minmax_element(b, b + 1024);
        return *hi - *lo;
    };
    CHECK(std::abs(peak_to_peak(99) / peak_to_peak(0) - 1.0) < 1e-9);
}

TEST_CASE("undamped energy drift per cycle at the step ceiling") {
    const auto model = model_with(Damping::from_zeta(0.0));
    const double f1 = model.natural_frequency;
    const auto drive = quiet(f1 / 2);
    const double dt = max_time_step(model, drive);
    const auto tr = simulate(model, drive, 50.0 / f1, dt, InitialState{1e-9, 0.0});
    const double e0 = energy(model, tr.q.front(), tr.q_dot.front());
    const double e1 = energy(model, tr.q.back(), tr.q_dot.back());
    const double per_cycle = std::abs(e1 / e0 - 1.0) / 50.0;
    CHECK(per_cycle < 1e-9);
    // Classical RK4 on an oscillator loses theta^6/72 of the energy per step.
    const double theta = 2 * pi / 256;
    CHECK(per_cycle == rel(256 * std::pow(theta, 6) / 72).epsilon(0.02));
}

TEST_CASE("damped free decay follows exp(-pi f1 t / Q)") {
    const auto model = model_with(Damping::from_q(40.0));
    const double zeta = model.damping_ratio();
    const double fd = model.natural_frequency * std::sqrt(1 - zeta * zeta);
    const double dt = 1.0 / (1024 * fd);
    const auto tr = simulate(model, quiet(model.natural_frequency / 2), 40.5 / fd, dt, InitialState{1e-9, 0.0});
    const double ratio = tr.q[40 * 1024] / tr.q[0];
    CHECK(ratio == rel(std::exp(-pi)).epsilon(0.005));
    CHECK(ratio == rel(std::exp(-2 * pi * zeta * 40 / std::sqrt(1 - zeta * zeta))).epsilon(1e-6));
}

TEST_CASE("resonator steady amplitude at resonance is Q F1 / k") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    DriveSignal drive{WiringMode::resonator, 10.0, 0.01, 0.0, std::nullopt};
    drive.input_frequency = biased_resonance_frequency(model, drive);
    const auto tr = run_to_steady_state(model, drive, {.capture_periods = 8});
    CHECK(tr.settled);
    const std::size_t n = 8 * tr.samples_per_period;
    const auto tone = project_tone(std::span(tr.q).subspan(tr.size() - n, n), tr.dt, tr.time(tr.size() - n),
                                   drive.input_frequency);
    const auto fh = force_harmonics(drive, model.input.gradient(0.0));
    CHECK(tone.amplitude == rel(40.0 * fh.first / model.stiffness).epsilon(0.01));
}

TEST_CASE("RK4 is fourth order on the driven problem") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    const double f1 = model.natural_frequency;
    const DriveSignal drive{WiringMode::resonator, 10.0, 0.05, 0.97 * f1, std::nullopt};
    const double dt = max_time_step(model, drive);
    const double duration = 10000 * dt;
    const auto coarse = simulate(model, drive, duration, dt);
    const auto half = simulate(model, drive, duration, dt / 2);
    const auto ref = simulate(model, drive, duration, dt / 8);
    double e_coarse = 0.0, e_half = 0.0;
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        e_coarse = std::max(e_coarse, std::abs(coarse.q[i] - ref.q[8 * i]));
        e_half = std::max(e_half, std::abs(half.q[2 * i] - ref.q[8 * i]));
    }
    const double ratio = e_coarse / e_half;
    CAPTURE(ratio);
    CAPTURE(e_coarse);
    CAPTURE(e_half);
    CHECK(ratio >= 12.0);
    CHECK(ratio <= 20.0);
}

TEST_CASE("small-signal linearity and determinism") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    DriveSignal drive{WiringMode::resonator, 10.0, 0.02, 0.0, std::nullopt};
    drive.input_frequency = biased_resonance_frequency(model, drive);
    auto amplitude = [&](double vamp) {
        DriveSignal d = drive;
        d.ac_amplitude = vamp;
        const auto tr = run_to_steady_state(model, d, {.capture_periods = 8});
        const std::size_t n = 8 * tr.samples_per_period;
        return project_tone(std::span(tr.q).subspan(tr.size() - n, n), tr.dt, tr.time(tr.size() - n),
                            d.input_frequency)
            .amplitude;
    };
    CHECK(amplitude(0.01) / amplitude(0.02) == rel(0.5).epsilon(0.005));

    const auto a = simulate(model, drive, 30.0 / model.natural_frequency, max_time_step(model, drive));
    const auto b = simulate(model, drive, 30.0 / model.natural_frequency, max_time_step(model, drive));
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.q.data(), b.q.data(), a.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.current.data(), b.current.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("trajectory bookkeeping") {
    const auto model = build_reduced_model(preset("beam-1MHz"));
    const DriveSignal drive{WiringMode::doubler, 10.0, 5.0, model.natural_frequency / 2, std::nullopt};
    const auto tr = doubler_run(model, drive, 16);
    CHECK(tr.settled);
    CHECK(tr.settling_index < tr.size());
    CHECK(tr.size() - 1 - tr.settling_index == 16 * tr.samples_per_period);
    CHECK(tr.q.size() == tr.current.size());
    CHECK(tr.q_dot.size() == tr.load_voltage.size());
    CHECK(tr.output_capacitance.size() == tr.q.size());
    for (std::size_t i = 0; i < tr.size(); i += 1001) {
        CHECK(tr.load_voltage[i] == rel(tr.current[i] * model.load_resistance));
        CHECK(tr.output_capacitance[i] == rel(model.output.capacitance(tr.q[i])));
    }
}

TEST_CASE("doubler run with no AC stays at the bias deflection") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    const DriveSignal drive{WiringMode::doubler, 10.0, 0.0, model.natural_frequency / 2, std::nullopt};
    const auto tr = doubler_run(model, drive, 8);
    const double q_bias = static_equilibrium(model, 0.0, 10.0);
    CHECK(q_bias > 0.0);
    CHECK(tr.q.back() == rel(q_bias).epsilon(1e-12));
    CHECK(std::abs(tr.current.back()) < 1e-20);
}

TEST_CASE("doubler run settles at twice the input frequency") {
    for (const char* name : {"beam-455kHz", "beam-1MHz"}) {
        const auto model = build_reduced_model(preset(name));
        const double f_in = model.natural_frequency / 2;
        const DriveSignal drive{WiringMode::doubler, 10.0, 5.0, f_in, std::nullopt};
        const auto tr = doubler_run(model, drive, 16);
        const std::size_t n = 16 * tr.samples_per_period;
        const auto seg = std::span(tr.q).subspan(tr.size() - n, n);
        const double t0 = tr.time(tr.size() - n);
        const double at_2f = project_tone(seg, tr.dt, t0, 2 * f_in).amplitude;
        const double at_f = project_tone(seg, tr.dt, t0, f_in).amplitude;
        CAPTURE(name);
        CHECK(tr.settled);
        CHECK(at_2f > 1e-10);
        CHECK(at_f < 1e-4 * at_2f);
    }
}

TEST_CASE("transient argument and physics errors") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    const double f1 = model.natural_frequency;
    const DriveSignal drive{WiringMode::doubler, 10.0, 5.0, f1 / 2, std::nullopt};
    CHECK_THROWS_AS(simulate(model, drive, 20.0 / f1, 1.0 / (200 * f1)), ValidationError);
    CHECK_THROWS_AS(simulate(model, drive, 5.0 / f1, max_time_step(model, drive)), ValidationError);

    DriveSignal off = drive;
    off.input_frequency = 0.45 * f1;
    CHECK_THROWS_AS(doubler_run(model, off, 8), ValidationError);
    DriveSignal res = drive;
    res.mode = WiringMode::resonator;
    CHECK_THROWS_AS(doubler_run(model, res, 8), ValidationError);

    const double close = model.closure_displacement();
    try {
        simulate(model, drive, 20.0 / f1, max_time_step(model, drive), InitialState{0.9 * close, 10.0});
        FAIL("expected overclosure");
    } catch (const OverclosureError& e) {
        CHECK(e.time() >= 0.0);
        CHECK(e.displacement() > 0.9 * close);
    }

    const double v_pi = pull_in_voltage(model, BiasedElectrodes::output);
    DriveSignal over = drive;
    over.bias_voltage = v_pi * 1.05;
    CHECK_THROWS_AS(doubler_run(model, over, 8), PullInError);
}

TEST_CASE("project_tone recovers amplitude and phase") {
    const double f = 1e3, dt = 1.0 / (64 * f);
    std::vector<double> x(64 * 5);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 * std::sin(2 * pi * f * i * dt + 0.7) + 0.5;
    const auto tone = project_tone(x, dt, 0.0, f);
    CHECK(tone.amplitude == rel(3.0).epsilon(1e-12));
    CHECK(tone.phase == rel(0.7).epsilon(1e-12));
}

TEST_CASE("resonator frequency sweep peaks at the damped resonance") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    DriveSignal drive{WiringMode::resonator, 10.0, 0.01, 1.0, std::nullopt};
    const double fb = biased_resonance_frequency(model, drive);
    const double zeta = model.damping_ratio();
    const auto fr = frequency_sweep(model, drive, 0.9 * fb, 1.1 * fb, 41);
    REQUIRE(fr.size() == 41);
    CHECK(fr.harmonic == 1);
    CHECK(fr.all_settled());
    const auto peak = std::max_element(fr.amplitude.begin(), fr.amplitude.end()) - fr.amplitude.begin();
    const double step = fr.frequency[1] - fr.frequency[0];
    CHECK(std::abs(fr.frequency[peak] - fb * std::sqrt(1 - 2 * zeta * zeta)) <= step);
    for (std::size_t i = 1; i < fr.size(); ++i) CHECK(fr.frequency[i] > fr.frequency[i - 1]);

    // Off-resonance amplitudes follow the linear transfer function.
    const double f_pk = fb * std::sqrt(1 - 2 * zeta * zeta);
    const std::vector<double> probe{0.5 * fb, f_pk, 2.0 * fb};
    const auto pts = frequency_response(model, drive, probe);
    auto H = [&](double f) {
        const double r = f / fb;
        return 1.0 / std::hypot(1 - r * r, 2 * zeta * r);
    };
    CHECK(pts.amplitude[0] / pts.amplitude[1] == rel(H(probe[0]) / H(f_pk)).epsilon(0.02));
    CHECK(pts.amplitude[2] / pts.amplitude[1] == rel(H(probe[2]) / H(f_pk)).epsilon(0.02));
}

TEST_CASE("doubler sweep peaks when f_in = f1 / 2") {
    const auto model = build_reduced_model(preset("beam-1MHz"));
    DriveSignal drive{WiringMode::doubler, 10.0, 5.0, 1.0, std::nullopt};
    const double fb = biased_resonance_frequency(model, drive);
    const auto fr = frequency_sweep(model, drive, 0.45 * fb, 0.55 * fb, 21);
    CHECK(fr.harmonic == 2);
    const auto peak = std::max_element(fr.amplitude.begin(), fr.amplitude.end()) - fr.amplitude.begin();
    const double step = fr.frequency[1] - fr.frequency[0];
    CHECK(std::abs(fr.frequency[peak] - fb / 2) <= step);
}

TEST_CASE("sweep argument validation") {
    const auto model = build_reduced_model(preset("beam-455kHz"));
    const DriveSignal drive{WiringMode::resonator, 10.0, 0.01, 1.0, std::nullopt};
    CHECK_THROWS_AS(frequency_sweep(model, drive, 5e5, 4e5, 11), ValidationError);
    CHECK_THROWS_AS(frequency_sweep(model, drive, 4e5, 5e5, 1), ValidationError);
    const std::vector<double> bad{4e5, 4e5};
    CHECK_THROWS_AS(frequency_response(model, drive, bad), ValidationError);
    const auto log = frequency_sweep(model, drive, 1e5, 1e6, 3, Spacing::log);
    CHECK(log.frequency[1] == rel(std::sqrt(1e11)));
}
