#pragma once

#include "memsd/device.hpp"
#include "memsd/io.hpp"
#include "memsd/spectral.hpp"
#include "memsd/transient.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace memsd {

struct SweepSettings {
    std::optional<double> f_lo;  // Hz; default 0.88 f_1
    std::optional<double> f_hi;  // Hz; default 1.10 f_1
    std::size_t points = 101;
    Spacing spacing = Spacing::linear;
    double ac_amplitude = 0.1;  // V, small-signal
    std::size_t max_periods = 0;  // per point; 0: 20 Q drive periods
};

struct AnalysisSettings {
    int fe_elements = 32;
    int mode_count = 3;
    std::size_t mode_shape_points = 201;
    SweepSettings sweep;
    std::size_t fft_size = 1 << 15;
    int harmonics = 4;
    Window window = Window::hann;
    /// Doubler AC amplitudes for the square-law check, V.
    std::vector<double> amplitude_sweep{0.5, 1.0, 2.0, 5.0, 10.0};
};

/// Doubler drive; the sweep protocol reuses the bias in resonator wiring.
struct ScenarioDrive {
    double bias_voltage = 10.0;
    double ac_amplitude = 5.0;
    std::optional<double> input_frequency;  // Hz; default biased f_1 / 2
};

struct Scenario {
    std::string name;
    std::optional<std::string> preset_name;  // set when the device came from a preset
    DeviceConfig device;
    ScenarioDrive drive;
    AnalysisSettings analysis;
    std::optional<std::filesystem::path> output;  // default <out root>/<name>

    void validate() const;
};

Scenario preset_scenario(const std::string& preset_name);

/// Unknown keys are rejected at every level. "device" is a preset name or an
/// inline device object.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
/// Accepts a single scenario object, an array, or {"scenarios": [...]}.
std::vector<Scenario> scenarios_from_json(const nlohmann::json& j);

struct Check {
    std::string criterion;
    bool passed = false;
    double value = 0.0;
    double limit = 0.0;
    std::string detail;
};

nlohmann::json check_to_json(const Check& c);

/// Output of one protocol on one scenario.
struct Fragment {
    nlohmann::json data = nlohmann::json::object();
    std::vector<Check> checks;
    bool degraded = false;
    std::string note;
    double seconds = 0.0;

    bool passed() const;
};

/// Fragment data plus its checks, degraded flag and note.
nlohmann::json fragment_to_json(const Fragment& f);

struct RunContext {
    std::filesystem::path directory;  // per-scenario output directory
    Format format = Format::csv;
};

/// Output directory for a scenario under `root`.
std::filesystem::path scenario_directory(const Scenario& s, const std::filesystem::path& root);

Fragment run_modal(const Scenario& s, const RunContext& ctx);
/// Resonator-wired frequency sweep and half-power fit. Throws FitError with
/// diagnostics when the fit fails.
Fragment run_sweep(const Scenario& s, const RunContext& ctx);
/// Doubler run, output-current spectrum, purity and square-law checks.
/// Pull-in during the run is rethrown as PhysicsError with a safe-amplitude hint.
Fragment run_double(const Scenario& s, const RunContext& ctx);
Fragment run_pullin(const Scenario& s, const RunContext& ctx);

enum class RowStatus { pass, degraded, failed };

struct ScenarioResult {
    std::string name;
    RowStatus status = RowStatus::pass;
    std::string reason;
    nlohmann::json report;  // per-protocol fragments, checks, timings
};

/// All four protocols; a failing protocol marks the row failed without
/// stopping the others.
ScenarioResult run_scenario(const Scenario& s, const RunContext& ctx);

struct ConsolidatedReport {
    std::vector<ScenarioResult> rows;
    nlohmann::json json;
    std::string table;  // human-readable
    bool all_passed() const;
};

/// Runs the scenarios concurrently, each in its own directory under `root`,
/// and writes report.json and report.txt to `root`. Throws ValidationError on
/// an empty list.
ConsolidatedReport run_report(const std::vector<Scenario>& scenarios, const std::filesystem::path& root,
                              Format format = Format::csv);

/// Reference data for the built-in presets: design target and bench
/// measurements that the model does not try to reproduce.
struct PresetReference {
    double design_frequency = 0.0;            // Hz
    double measured_sweep_peak = 0.0;         // Hz
    std::vector<double> measured_die_peaks;  // Hz
};
std::optional<PresetReference> preset_reference(const std::string& preset_name);

}  // namespace memsd
