#pragma once

#include <stdexcept>
#include <string>

namespace memsd {

/// Bad input: violated type invariant, malformed config, unknown preset.
/// The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The physics or numerics failed: pull-in, overclosure, non-convergence,
/// an unfittable spectrum. The CLI maps these to exit code 1.
class PhysicsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The beam touched an electrode (q * phi(x) >= d0 somewhere on the span).
class OverclosureError : public PhysicsError {
public:
    OverclosureError(const std::string& what, double q, double time = -1.0)
        : PhysicsError(what), q_(q), time_(time) {}

    double displacement() const noexcept { return q_; }
    /// Simulation time of the event, or negative when not from a transient.
    double time() const noexcept { return time_; }

private:
    double q_;
    double time_;
};

/// No stable static equilibrium exists at the requested voltage.
class PullInError : public PhysicsError {
public:
    using PhysicsError::PhysicsError;
};

/// Iterative method (quadrature refinement, eigensolver, root finder) did
/// not reach its tolerance.
class ConvergenceError : public PhysicsError {
public:
    using PhysicsError::PhysicsError;
};

class FitError : public PhysicsError {
public:
    enum class Kind { no_peak, half_power_out_of_band, degenerate_q };

    FitError(Kind kind, const std::string& what) : PhysicsError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace memsd
