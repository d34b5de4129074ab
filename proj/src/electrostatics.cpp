#include "memsd/electrostatics.hpp"

#include "memsd/errors.hpp"
#include "memsd/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace memsd {

using std::numbers::pi;

void DriveSignal::validate() const {
    if (!(bias_voltage >= 0.0) || !std::isfinite(bias_voltage))
        throw ValidationError("drive.vdc must be finite and >= 0");
    if (!(ac_amplitude >= 0.0) || !std::isfinite(ac_amplitude))
        throw ValidationError("drive.vamp must be finite and >= 0");
    if (!(input_frequency > 0.0) || !std::isfinite(input_frequency))
        throw ValidationError("drive.fin must be finite and > 0");
    if (sweep) {
        if (!(sweep->f_lo > 0.0) || !(sweep->f_lo < sweep->f_hi))
            throw ValidationError("swept sine requires 0 < f_lo < f_hi");
        if (!(sweep->duration > 0.0)) throw ValidationError("swept sine duration must be > 0");
    }
}

double DriveSignal::ac_voltage(double t) const {
    if (!sweep) return ac_amplitude * std::sin(2.0 * pi * input_frequency * t);
    const double tau = std::fmod(t, sweep->duration);
    const double rate = (sweep->f_hi - sweep->f_lo) / sweep->duration;
    return ac_amplitude * std::sin(2.0 * pi * (sweep->f_lo * tau + 0.5 * rate * tau * tau));
}

TransducerVoltages transducer_voltage(double t, const DriveSignal& drive) {
    const double v = drive.ac_voltage(t);
    const double input = drive.mode == WiringMode::resonator ? drive.bias_voltage - v : v;
    return {input, drive.bias_voltage};
}

TransducerVoltages static_bias(const DriveSignal& drive) {
    return {drive.mode == WiringMode::resonator ? drive.bias_voltage : 0.0, drive.bias_voltage};
}

ShapeFunction rigid_plate_shape() {
    return [](double) { return 1.0; };
}

ShapeFunction cantilever_shape(const ModeShape& mode) {
    return [mode](double x) { return mode(x); };
}

namespace {

constexpr std::size_t kTransducerPoints = 129;
constexpr double kTransducerTolerance = 1e-9;
constexpr double kTransducerCheckDepth = 0.5;

[[noreturn]] void overclosure(double q) {
    throw OverclosureError("beam contacts electrode at modal displacement q = " + std::to_string(q) + " m",
                           q);
}

template <class Integrand>
double transducer_integral(double q, const Transducer& t, const ShapeFunction& shape, Integrand integrand) {
    const double d0 = t.electrode.gap;
    const double scale = t.permittivity * t.width;
    return simpson_checked(
        [&](double x) {
            const double phi = shape(x);
            const double gap = d0 - q * phi;
            if (!(gap > 0.0)) overclosure(q);
            return scale * integrand(phi, gap);
        },
        t.electrode.x_start, t.electrode.x_end, kTransducerPoints, kTransducerTolerance,
        // Floor for integrals that vanish identically (phi == 0 on the span).
        1e-300);
}

}  // namespace

double gap_capacitance(double q, const Transducer& t, const ShapeFunction& shape) {
    return transducer_integral(q, t, shape, [](double, double gap) { return 1.0 / gap; });
}

double capacitance_gradient(double q, const Transducer& t, const ShapeFunction& shape) {
    return transducer_integral(q, t, shape, [](double phi, double gap) { return phi / (gap * gap); });
}

double capacitance_curvature(double q, const Transducer& t, const ShapeFunction& shape) {
    return transducer_integral(q, t, shape,
                               [](double phi, double gap) { return 2.0 * phi * phi / (gap * gap * gap); });
}

double electrostatic_force(double voltage, double q, const Transducer& t, const ShapeFunction& shape) {
    return 0.5 * voltage * voltage * capacitance_gradient(q, t, shape);
}

DiscretizedTransducer::DiscretizedTransducer(const Transducer& t, const ShapeFunction& shape)
    : transducer_(t) {
    if (!(t.width > 0.0) || !(t.permittivity > 0.0))
        throw ValidationError("transducer width and permittivity must be > 0");
    if (!(t.electrode.x_start < t.electrode.x_end) || !(t.electrode.gap > 0.0))
        throw ValidationError("transducer electrode span and gap must be positive");

    auto build = [&](std::size_t points) {
        const std::size_t intervals = points - 1;
        const double a = t.electrode.x_start;
        const double h = t.electrode.span() / static_cast<double>(intervals);
        weight_.assign(points, 0.0);
        phi_.assign(points, 0.0);
        for (std::size_t i = 0; i < points; ++i) {
            const double x = i == intervals ? t.electrode.x_end : a + h * static_cast<double>(i);
            const double simpson = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            weight_[i] = simpson * h / 3.0 * t.permittivity * t.width;
            phi_[i] = shape(x);
        }
    };

    std::size_t points = kTransducerPoints;
    for (;; points = 2 * points - 1) {
        if (points > 65537) throw ConvergenceError("transducer quadrature did not converge");
        // converged both at rest and deep into the gap, where the integrand peaks
        build(2 * points - 1);
        max_phi_ = *std::max_element(phi_.begin(), phi_.end());
        const double deep = max_phi_ > 0.0 ? kTransducerCheckDepth * t.electrode.gap / max_phi_ : 0.0;
        const auto fine_rest = evaluate(0.0), fine_deep = evaluate(deep);
        build(points);
        max_phi_ = *std::max_element(phi_.begin(), phi_.end());
        const auto coarse_rest = evaluate(0.0), coarse_deep = evaluate(deep);
        auto close = [](double a, double b) {
            return std::abs(a - b) <= kTransducerTolerance * std::max(std::abs(a), 1e-300);
        };
        auto agree = [&](const Evaluation& f, const Evaluation& c) {
            return close(f.capacitance, c.capacitance) && close(f.gradient, c.gradient) &&
                   close(f.curvature, c.curvature);
        };
        if (agree(fine_rest, coarse_rest) && agree(fine_deep, coarse_deep)) break;
    }
    max_phi_ = *std::max_element(phi_.begin(), phi_.end());
}

void DiscretizedTransducer::check_clearance(double q) const {
    const double d0 = transducer_.electrode.gap;
    for (const double phi : phi_)
        if (!(d0 - q * phi > 0.0)) overclosure(q);
}

DiscretizedTransducer::Evaluation DiscretizedTransducer::evaluate(double q) const {
    const double d0 = transducer_.electrode.gap;
    Evaluation e;
    for (std::size_t i = 0; i < phi_.size(); ++i) {
        const double phi = phi_[i];
        const double gap = d0 - q * phi;
        if (!(gap > 0.0)) overclosure(q);
        const double inv = 1.0 / gap;
        const double w = weight_[i];
        e.capacitance += w * inv;
        e.gradient += w * phi * inv * inv;
        e.curvature += 2.0 * w * phi * phi * inv * inv * inv;
    }
    return e;
}

double DiscretizedTransducer::capacitance(double q) const { return evaluate(q).capacitance; }

double DiscretizedTransducer::gradient(double q) const {
    const double d0 = transducer_.electrode.gap;
    double sum = 0.0;
    for (std::size_t i = 0; i < phi_.size(); ++i) {
        const double inv = 1.0 / (d0 - q * phi_[i]);
        sum += weight_[i] * phi_[i] * inv * inv;
    }
    if (!std::isfinite(sum) || q * max_phi_ >= d0) check_clearance(q);
    return sum;
}

double DiscretizedTransducer::closure_displacement() const {
    if (!(max_phi_ > 0.0)) return std::numeric_limits<double>::infinity();
    return transducer_.electrode.gap / max_phi_;
}

ForceHarmonics force_harmonics(const DriveSignal& drive, double gradient) {
    drive.validate();
    if (drive.sweep) throw ValidationError("force_harmonics requires a sine drive");
    const double v = drive.ac_amplitude;
    const double vdc = drive.bias_voltage;
    ForceHarmonics h;
    if (drive.mode == WiringMode::resonator) {
        // (V - v sin wt)^2 = V^2 + v^2/2 - 2 V v sin wt - (v^2/2) cos 2wt
        h.voltage_squared_dc = vdc * vdc + 0.5 * v * v;
        h.voltage_squared_first = 2.0 * vdc * v;
    } else {
        h.voltage_squared_dc = 0.5 * v * v;
        h.voltage_squared_first = 0.0;
    }
    h.voltage_squared_second = 0.5 * v * v;
    h.dc = 0.5 * gradient * h.voltage_squared_dc;
    h.first = 0.5 * gradient * h.voltage_squared_first;
    h.second = 0.5 * gradient * h.voltage_squared_second;
    return h;
}

double ReducedModel::damping_ratio() const {
    return damping_coefficient / (2.0 * std::sqrt(stiffness * mass));
}

double ReducedModel::closure_displacement() const {
    return std::min(input.closure_displacement(), output.closure_displacement());
}

ReducedModel build_reduced_model(const DeviceConfig& device, const ShapeFunction& shape, double mass,
                                 double stiffness) {
    device.validate();
    if (!(mass > 0.0) || !(stiffness > 0.0)) throw ValidationError("modal mass and stiffness must be > 0");
    const double zeta = device.damping.damping_ratio();
    const Transducer in{device.input_electrode, device.beam.width, device.material.gap_permittivity};
    const Transducer out{device.output_electrode, device.beam.width, device.material.gap_permittivity};
    return ReducedModel{mass,
                        stiffness,
                        2.0 * zeta * std::sqrt(stiffness * mass),
                        std::sqrt(stiffness / mass) / (2.0 * pi),
                        device.load_resistance,
                        DiscretizedTransducer(in, shape),
                        DiscretizedTransducer(out, shape)};
}

ReducedModel build_reduced_model(const DeviceConfig& device) {
    const auto basis = modal_basis(1, device.beam, device.material);
    return build_reduced_model(device, cantilever_shape(basis.shape), basis.effective_mass,
                               basis.effective_stiffness);
}

MotionalCurrent motional_current(double q, double q_dot, double bias_voltage, const ReducedModel& model) {
    const double i = bias_voltage * model.output.gradient(q) * q_dot;
    return {i, i * model.load_resistance};
}

double linearized_stiffness(const ReducedModel& model, double v_input, double v_output, double q) {
    return model.stiffness - 0.5 * v_input * v_input * model.input.curvature(q) -
           0.5 * v_output * v_output * model.output.curvature(q);
}

namespace {

constexpr int kMaxNewtonIterations = 20000;

}  // namespace

double static_equilibrium(const ReducedModel& model, double v_input, double v_output) {
    if (!(v_input >= 0.0) || !(v_output >= 0.0)) throw ValidationError("static_equilibrium: V must be >= 0");
    const double a_in = 0.5 * v_input * v_input;
    const double a_out = 0.5 * v_output * v_output;
    const double q_close = model.closure_displacement();
    const double gap = std::min(model.input.transducer().electrode.gap, model.output.transducer().electrode.gap);

    // R(q) = k q - F(q) is concave for phi >= 0, so Newton from q = 0 climbs
    // monotonically onto the first (stable) root, or finds R' <= 0 first.
    double q = 0.0;
    for (int it = 0; it < kMaxNewtonIterations; ++it) {
        const auto in = model.input.evaluate(q);
        const auto out = model.output.evaluate(q);
        const double force = a_in * in.gradient + a_out * out.gradient;
        const double residual = model.stiffness * q - force;
        const double slope = model.stiffness - a_in * in.curvature - a_out * out.curvature;
        // Near the fold R is flat and rounding noise stops the steps shrinking,
        // so accept a residual at rounding level.
        if (std::abs(residual) <= 64.0 * std::numeric_limits<double>::epsilon() * (model.stiffness * q + force))
            return q;
        if (!(slope > 0.0))
            throw PullInError("no stable equilibrium: electrostatic softening exceeds stiffness at q = " +
                              std::to_string(q) + " m");
        double step = -residual / slope;
        // Step damping keeps iterates inside the gap.
        while (q + step >= q_close) step *= 0.5;
        q += step;
        if (std::abs(step) <= 1e-13 * gap) return q;
    }
    throw ConvergenceError("static_equilibrium: Newton iteration did not converge");
}

double static_equilibrium(double voltage, const ReducedModel& model, BiasedElectrodes which) {
    const double vin = which == BiasedElectrodes::output ? 0.0 : voltage;
    const double vout = which == BiasedElectrodes::input ? 0.0 : voltage;
    return static_equilibrium(model, vin, vout);
}

double pull_in_voltage(const ReducedModel& model, BiasedElectrodes which) {
    auto stable = [&](double v) {
        try {
            static_equilibrium(v, model, which);
            return true;
        } catch (const PullInError&) {
            return false;
        }
    };
    double lo = 0.0;
    double hi = 100.0;
    while (stable(hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e7) throw ConvergenceError("pull_in_voltage: no pull-in below 10 MV");
    }
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        (stable(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace memsd
