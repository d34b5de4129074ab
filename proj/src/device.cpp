#include "memsd/device.hpp"

#include "memsd/errors.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace memsd {

namespace {

void require_positive(double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw ValidationError(std::string(field) + " must be finite and > 0");
}

}  // namespace

Material::Material(double youngs_modulus_, double density_, double gap_permittivity_)
    : youngs_modulus(youngs_modulus_), density(density_), gap_permittivity(gap_permittivity_) {
    validate();
}

void Material::validate() const {
    require_positive(youngs_modulus, "material.youngs_modulus");
    require_positive(density, "material.density");
    require_positive(gap_permittivity, "material.gap_permittivity");
}

BeamGeometry::BeamGeometry(double length_, double width_, double thickness_)
    : length(length_), width(width_), thickness(thickness_) {
    validate();
}

void BeamGeometry::validate() const {
    require_positive(length, "beam.length");
    require_positive(width, "beam.width");
    require_positive(thickness, "beam.thickness");
    if (!(thickness / length < kMaxSlenderness))
        throw ValidationError("beam.thickness / beam.length must be < 0.2 (slender beam)");
}

Electrode::Electrode(double x_start_, double x_end_, double gap_)
    : x_start(x_start_), x_end(x_end_), gap(gap_) {
    if (!(x_start >= 0.0) || !(x_start < x_end))
        throw ValidationError("electrode requires 0 <= x_start < x_end");
    require_positive(gap, "electrode.gap");
}

void Electrode::validate(const BeamGeometry& beam) const {
    if (!(x_start >= 0.0) || !(x_start < x_end) || !(x_end <= beam.length))
        throw ValidationError("electrode requires 0 <= x_start < x_end <= beam.length");
    require_positive(gap, "electrode.gap");
}

double quality_factor_from_zeta(double zeta) {
    if (zeta == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (2.0 * zeta * std::sqrt(1.0 - zeta * zeta));
}

double zeta_from_quality_factor(double q) {
    if (!(q >= 1.0)) throw ValidationError("quality factor must be >= 1 to map onto a damping ratio");
    if (std::isinf(q)) return 0.0;
    // zeta^2 = (1 - sqrt(1 - 1/Q^2)) / 2, rewritten to avoid cancellation at large Q.
    const double x = 1.0 / (q * q);
    return std::sqrt(x / (2.0 * (1.0 + std::sqrt(1.0 - x))));
}

Damping Damping::from_q(double q) {
    if (!(q >= 1.0) || std::isnan(q)) throw ValidationError("damping.q must be >= 1");
    return Damping(Kind::quality_factor, q);
}

Damping Damping::from_zeta(double zeta) {
    if (!(zeta >= 0.0) || !(zeta <= 1.0 / std::sqrt(2.0)))
        throw ValidationError("damping.zeta must lie in [0, 1/sqrt(2)]");
    return Damping(Kind::damping_ratio, zeta);
}

double Damping::quality_factor() const {
    return kind_ == Kind::quality_factor ? value_ : quality_factor_from_zeta(value_);
}

double Damping::damping_ratio() const {
    return kind_ == Kind::damping_ratio ? value_ : zeta_from_quality_factor(value_);
}

void DeviceConfig::validate() const {
    beam.validate();
    material.validate();
    input_electrode.validate(beam);
    output_electrode.validate(beam);
    const bool disjoint = input_electrode.x_end <= output_electrode.x_start ||
                          output_electrode.x_end <= input_electrode.x_start;
    if (!disjoint) throw ValidationError("input and output electrodes overlap");
    if (!(load_resistance >= 0.0) || !std::isfinite(load_resistance))
        throw ValidationError("load_resistance must be finite and >= 0");
}

SectionProperties section_properties(const BeamGeometry& beam) {
    beam.validate();
    const double w = beam.width;
    const double h = beam.thickness;
    return {w * h * h * h / 12.0, w * h};
}

DeviceConfig preset(std::string_view name) {
    double length = 0.0;
    if (name == "beam-1MHz")
        length = 51.75e-6;
    else if (name == "beam-455kHz")
        length = 76.75e-6;
    else
        throw ValidationError("unknown preset '" + std::string(name) + "'");

    // Polysilicon constants that put the first mode on the 1 MHz / 455 kHz targets.
    DeviceConfig d;
    d.beam = BeamGeometry(length, 10e-6, 2e-6);
    d.material = Material(160e9, 2330.0, kEpsilon0);
    d.input_electrode = Electrode(0.10 * length, 0.50 * length, 2e-6);
    d.output_electrode = Electrode(0.55 * length, 0.95 * length, 2e-6);
    d.damping = Damping::from_q(40.0);
    d.load_resistance = 50.0;
    d.validate();
    return d;
}

std::vector<std::string> preset_names() { return {"beam-1MHz", "beam-455kHz"}; }

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError(std::string(where) + ": expected a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw ValidationError(std::string(where) + ": unknown key '" + key + "'");
}

double number(const json& j, const char* where, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string(where) + "." + key + ": missing");
    if (!it->is_number()) throw ValidationError(std::string(where) + "." + key + ": expected a number");
    return it->get<double>();
}

Electrode electrode_from_json(const json& j, const char* where) {
    check_keys(j, where, {"x_start", "x_end", "gap"});
    Electrode e;
    e.x_start = number(j, where, "x_start");
    e.x_end = number(j, where, "x_end");
    e.gap = number(j, where, "gap");
    return e;
}

}  // namespace

DeviceConfig device_from_json(const json& j) {
    check_keys(j, "device", {"beam", "material", "input_electrode", "output_electrode", "damping",
                             "load_resistance"});
    for (const char* key : {"beam", "material", "input_electrode", "output_electrode", "damping"})
        if (!j.contains(key)) throw ValidationError(std::string("device.") + key + ": missing");

    DeviceConfig d;
    const json& b = j.at("beam");
    check_keys(b, "beam", {"length", "width", "thickness"});
    d.beam.length = number(b, "beam", "length");
    d.beam.width = number(b, "beam", "width");
    d.beam.thickness = number(b, "beam", "thickness");

    const json& m = j.at("material");
    check_keys(m, "material", {"youngs_modulus", "density", "gap_permittivity"});
    d.material.youngs_modulus = number(m, "material", "youngs_modulus");
    d.material.density = number(m, "material", "density");
    d.material.gap_permittivity = number(m, "material", "gap_permittivity");

    d.input_electrode = electrode_from_json(j.at("input_electrode"), "input_electrode");
    d.output_electrode = electrode_from_json(j.at("output_electrode"), "output_electrode");

    const json& damp = j.at("damping");
    check_keys(damp, "damping", {"q", "zeta"});
    if (damp.contains("q") == damp.contains("zeta"))
        throw ValidationError("damping: exactly one of 'q' or 'zeta' is required");
    d.damping = damp.contains("q") ? Damping::from_q(number(damp, "damping", "q"))
                                   : Damping::from_zeta(number(damp, "damping", "zeta"));

    d.load_resistance = number(j, "device", "load_resistance");
    d.validate();
    return d;
}

json device_to_json(const DeviceConfig& d) {
    json damping = json::object();
    if (d.damping.kind() == Damping::Kind::quality_factor)
        damping["q"] = d.damping.given();
    else
        damping["zeta"] = d.damping.given();

    auto electrode = [](const Electrode& e) {
        return json{{"x_start", e.x_start}, {"x_end", e.x_end}, {"gap", e.gap}};
    };
    return json{
        {"beam",
         {{"length", d.beam.length}, {"width", d.beam.width}, {"thickness", d.beam.thickness}}},
        {"material",
         {{"youngs_modulus", d.material.youngs_modulus},
          {"density", d.material.density},
          {"gap_permittivity", d.material.gap_permittivity}}},
        {"input_electrode", electrode(d.input_electrode)},
        {"output_electrode", electrode(d.output_electrode)},
        {"damping", damping},
        {"load_resistance", d.load_resistance},
    };
}

}  // namespace memsd
