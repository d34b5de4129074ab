#pragma once

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace memsd {

/// Vacuum permittivity, F/m. The gap medium is air, taken as eps0.
inline constexpr double kEpsilon0 = 8.854e-12;

struct Material {
    double youngs_modulus = 0.0;    // Pa
    double density = 0.0;           // kg/m^3
    double gap_permittivity = 0.0;  // F/m

    Material() = default;
    Material(double youngs_modulus, double density, double gap_permittivity);

    void validate() const;
    bool operator==(const Material&) const = default;
};

/// Rectangular cantilever, clamped at x = 0.
struct BeamGeometry {
    double length = 0.0;     // m
    double width = 0.0;      // m
    double thickness = 0.0;  // m

    /// Euler-Bernoulli validity bound on thickness / length.
    static constexpr double kMaxSlenderness = 0.2;

    BeamGeometry() = default;
    BeamGeometry(double length, double width, double thickness);

    void validate() const;
    bool operator==(const BeamGeometry&) const = default;
};

/// Bottom electrode under the beam, spanning [x_start, x_end] from the clamp.
struct Electrode {
    double x_start = 0.0;  // m
    double x_end = 0.0;    // m
    double gap = 0.0;      // static electrode-to-beam spacing d0, m

    Electrode() = default;
    Electrode(double x_start, double x_end, double gap);

    double span() const { return x_end - x_start; }
    void validate(const BeamGeometry& beam) const;
    bool operator==(const Electrode&) const = default;
};

/// Damping is specified either as a quality factor or a damping ratio; the
/// other is derived through Q = 1 / (2 zeta sqrt(1 - zeta^2)).
class Damping {
public:
    enum class Kind { quality_factor, damping_ratio };

    static Damping from_q(double q);
    static Damping from_zeta(double zeta);

    Kind kind() const { return kind_; }
    /// The value as given (Q or zeta).
    double given() const { return value_; }
    /// Infinite for zeta = 0.
    double quality_factor() const;
    double damping_ratio() const;

    bool operator==(const Damping&) const = default;

private:
    Damping(Kind kind, double value) : kind_(kind), value_(value) {}

    Kind kind_ = Kind::quality_factor;
    double value_ = 0.0;
};

double quality_factor_from_zeta(double zeta);
/// Root of Q = 1 / (2 zeta sqrt(1 - zeta^2)) in (0, 1/sqrt(2)]; requires Q >= 1.
double zeta_from_quality_factor(double q);

struct DeviceConfig {
    BeamGeometry beam;
    Material material;
    Electrode input_electrode;
    Electrode output_electrode;
    Damping damping = Damping::from_q(40.0);
    double load_resistance = 0.0;  // ohm

    /// Checks every field invariant plus electrode disjointness.
    void validate() const;
    bool operator==(const DeviceConfig&) const = default;
};

struct SectionProperties {
    double second_moment = 0.0;  // I, m^4
    double area = 0.0;           // A, m^2
};

SectionProperties section_properties(const BeamGeometry& beam);

/// Built-in devices: "beam-1MHz" (L = 51.75 um) and "beam-455kHz" (L = 76.75 um).
DeviceConfig preset(std::string_view name);
std::vector<std::string> preset_names();

DeviceConfig device_from_json(const nlohmann::json& j);
nlohmann::json device_to_json(const DeviceConfig& device);

}  // namespace memsd
