#pragma once

#include "memsd/device.hpp"
#include "memsd/modal.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace memsd {

/// How the bias reaches the input transducer.
///  resonator: bias on the beam, AC on the input electrode -> dV_in = V_dc - v_i.
///  doubler:   bias in series with the AC source, so it cancels -> dV_in = v_i.
/// The output electrode sits at ground through R_L in both cases -> dV_out = V_dc.
enum class WiringMode { resonator, doubler };

/// Linear chirp from f_lo to f_hi, repeating every `duration` seconds.
struct SweptSine {
    double f_lo = 0.0;
    double f_hi = 0.0;
    double duration = 0.0;
};

struct DriveSignal {
    WiringMode mode = WiringMode::resonator;
    double bias_voltage = 0.0;     // V_dc, V
    double ac_amplitude = 0.0;     // v_i peak, V
    double input_frequency = 0.0;  // f_i, Hz
    std::optional<SweptSine> sweep;  // nullopt: pure sine

    void validate() const;
    /// v_i(t).
    double ac_voltage(double t) const;
};

struct TransducerVoltages {
    double input = 0.0;   // beam-to-input-electrode difference
    double output = 0.0;  // beam-to-output-electrode difference
};

TransducerVoltages transducer_voltage(double t, const DriveSignal& drive);

/// Deflection profile used to map the modal coordinate q onto the gap:
/// local deflection = q * shape(x).
using ShapeFunction = std::function<double(double)>;

/// phi == 1: the beam moves as a rigid plate (parallel-plate limit).
ShapeFunction rigid_plate_shape();
ShapeFunction cantilever_shape(const ModeShape& mode);

/// One air-gap transducer: an electrode under a beam of the given width.
struct Transducer {
    Electrode electrode;
    double width = 0.0;         // m
    double permittivity = 0.0;  // F/m

    double area() const { return width * electrode.span(); }
};

/// C(q) = int eps W / (d0 - q phi(x)) dx over the electrode span. Composite
/// Simpson from 129 points, refined until agreement at 1e-9 relative.
/// Throws OverclosureError when q phi(x) >= d0 anywhere on the span.
double gap_capacitance(double q, const Transducer& t, const ShapeFunction& shape);
/// dC/dq = int eps W phi / (d0 - q phi)^2 dx.
double capacitance_gradient(double q, const Transducer& t, const ShapeFunction& shape);
/// d2C/dq2 = int 2 eps W phi^2 / (d0 - q phi)^3 dx.
double capacitance_curvature(double q, const Transducer& t, const ShapeFunction& shape);

/// Generalized modal force 1/2 dV^2 dC/dq; attractive, positive toward the electrode.
double electrostatic_force(double voltage, double q, const Transducer& t, const ShapeFunction& shape);

/// The same integrals on a fixed node set, for use inside time integration.
/// The node count is the smallest of 129, 257, ... whose doubled rule agrees
/// with it to 1e-9 relative at q = 0 and at half the closure displacement.
class DiscretizedTransducer {
public:
    DiscretizedTransducer(const Transducer& t, const ShapeFunction& shape);

    struct Evaluation {
        double capacitance = 0.0;
        double gradient = 0.0;
        double curvature = 0.0;
    };

    Evaluation evaluate(double q) const;
    double capacitance(double q) const;
    double gradient(double q) const;
    double curvature(double q) const { return evaluate(q).curvature; }

    const Transducer& transducer() const { return transducer_; }
    std::size_t node_count() const { return phi_.size(); }
    /// Largest displacement q > 0 that keeps q * phi < d0 on every node.
    double closure_displacement() const;

private:
    void check_clearance(double q) const;

    Transducer transducer_;
    std::vector<double> weight_;  // Simpson weight * eps * W
    std::vector<double> phi_;
    double max_phi_ = 0.0;
};

/// Harmonic content of dV_in(t)^2 for a sine drive, and the force it implies
/// at q = 0 (each voltage-squared term times 1/2 dC/dq).
struct ForceHarmonics {
    double dc = 0.0;      // N
    double first = 0.0;   // amplitude at f_i, N
    double second = 0.0;  // amplitude at 2 f_i, N

    double voltage_squared_dc = 0.0;      // V^2
    double voltage_squared_first = 0.0;   // V^2
    double voltage_squared_second = 0.0;  // V^2
};

/// Closed-form expansion; `gradient` is dC_in/dq at q = 0.
ForceHarmonics force_harmonics(const DriveSignal& drive, double gradient);

/// Single-mode reduced-order model of the device.
struct ReducedModel {
    double mass = 0.0;                 // m_eff, kg
    double stiffness = 0.0;            // k_eff, N/m
    double damping_coefficient = 0.0;  // c = 2 zeta sqrt(k m), N s/m
    double natural_frequency = 0.0;    // unbiased f_1, Hz
    double load_resistance = 0.0;      // ohm
    DiscretizedTransducer input;
    DiscretizedTransducer output;

    double damping_ratio() const;
    /// Smallest closure displacement over both electrodes.
    double closure_displacement() const;
};

/// First-mode model of a device config.
ReducedModel build_reduced_model(const DeviceConfig& device);
/// Model with an arbitrary deflection profile and explicit modal mass and
/// stiffness (used for the rigid-plate limit).
ReducedModel build_reduced_model(const DeviceConfig& device, const ShapeFunction& shape, double mass,
                                 double stiffness);

struct MotionalCurrent {
    double current = 0.0;       // i_o, A
    double load_voltage = 0.0;  // i_o * R_L, V
};

/// i_o = V_dc dC_o/dq dq/dt (exact chain rule, no small-signal expansion).
MotionalCurrent motional_current(double q, double q_dot, double bias_voltage, const ReducedModel& model);

enum class BiasedElectrodes { input, output, both };

/// Stable static deflection with v_input across the input gap and v_output
/// across the output gap: the smallest q >= 0 with k q = F(q) and
/// k - dF/dq > 0. Newton from q = 0. Throws PullInError if none exists.
double static_equilibrium(const ReducedModel& model, double v_input, double v_output);
double static_equilibrium(double voltage, const ReducedModel& model,
                          BiasedElectrodes which = BiasedElectrodes::both);

/// k_eff - 1/2 sum V^2 d2C/dq2 at deflection q.
double linearized_stiffness(const ReducedModel& model, double v_input, double v_output, double q);

/// Bisection on static_equilibrium success, resolved to 1 mV.
double pull_in_voltage(const ReducedModel& model, BiasedElectrodes which = BiasedElectrodes::both);

/// Static bias seen by each transducer for a wiring mode (AC part excluded).
TransducerVoltages static_bias(const DriveSignal& drive);

}  // namespace memsd
