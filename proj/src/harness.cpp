#include "memsd/harness.hpp"

#include "memsd/electrostatics.hpp"
#include "memsd/errors.hpp"
#include "memsd/modal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>

namespace memsd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kFeTolerance = 1e-3;
constexpr double kDesignTolerance = 5e-3;
constexpr double kQTolerance = 0.02;
constexpr double kZetaTolerance = 1e-4;
constexpr double kPeakTolerance = 5e-3;
constexpr double kPurityFloorDb = -40.0;
constexpr double kSquareLawTolerance = 0.05;
constexpr double kPullInOracleTolerance = 0.01;
constexpr double kSweepLow = 0.88;
constexpr double kSweepHigh = 1.10;
constexpr double kDoublerWindow = 0.05;

// ---- JSON field helpers -------------------------------------------------

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
}

double get_number(const json& j, const std::string& where, const char* key, double fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) throw ValidationError(where + "." + key + ": expected a number");
    return it->get<double>();
}

std::optional<double> get_optional_number(const json& j, const std::string& where, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ValidationError(where + "." + key + ": expected a number");
    return it->get<double>();
}

long long get_integer(const json& j, const std::string& where, const char* key, long long fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_integer()) throw ValidationError(where + "." + key + ": expected an integer");
    return it->get<long long>();
}

std::string get_string(const json& j, const std::string& where, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(where + "." + key + ": missing");
    if (!it->is_string()) throw ValidationError(where + "." + key + ": expected a string");
    return it->get<std::string>();
}

std::string spacing_name(Spacing s) { return s == Spacing::linear ? "linear" : "log"; }

Spacing spacing_from_name(const std::string& where, const std::string& s) {
    if (s == "linear") return Spacing::linear;
    if (s == "log") return Spacing::log;
    throw ValidationError(where + ": expected 'linear' or 'log'");
}

// ---- misc ----------------------------------------------------------------

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Check make_check(std::string criterion, bool passed, double value, double limit, std::string detail = {}) {
    return {std::move(criterion), passed, value, limit, std::move(detail)};
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::string khz(double f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f kHz", f / 1e3);
    return buf;
}

json purity_to_json(const std::vector<HarmonicComponent>& p) {
    json out = json::array();
    for (const auto& c : p)
        out.push_back({{"order", c.order}, {"frequency_hz", c.frequency}, {"amplitude", c.amplitude},
                       {"level_db", c.level_db}});
    return out;
}

json fit_to_json(const ResonanceFit& f) {
    return {{"peak_frequency_hz", f.peak_frequency}, {"peak_amplitude_m", f.peak_amplitude},
            {"bandwidth_hz", f.bandwidth},           {"lower_crossing_hz", f.lower_crossing},
            {"upper_crossing_hz", f.upper_crossing}, {"quality_factor", f.quality_factor},
            {"damping_ratio", f.damping_ratio}};
}

Table spectrum_table(const Spectrum& s) {
    Table t({"f_Hz", "amplitude"});
    for (std::size_t k = 0; k < s.size(); ++k) t.add_row({s.frequency(k), s.amplitude[k]});
    return t;
}

double doubler_input_frequency(const Scenario& s, const ReducedModel& model, const DriveSignal& d) {
    return s.drive.input_frequency ? *s.drive.input_frequency : 0.5 * biased_resonance_frequency(model, d);
}

struct DoublerMeasurement {
    Trajectory trajectory;
    Spectrum current_spectrum;
    Spectrum displacement_spectrum;
    std::vector<HarmonicComponent> purity;
    std::size_t dominant_bin = 0;
    bool dominant_at_double = false;
};

// Pull-in while driving: report voltages that would have been safe.
[[noreturn]] void rethrow_pull_in(const ReducedModel& model, const DriveSignal& drive, const std::exception& e) {
    std::string hint;
    try {
        const double v_out = pull_in_voltage(model, BiasedElectrodes::output);
        const double v_in = pull_in_voltage(model, BiasedElectrodes::input);
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "; keep V_dc below %.3g V (static pull-in through the output gap) and v_amp well below "
                      "%.3g V (static pull-in through the input gap)",
                      v_out, v_in);
        hint = buf;
    } catch (const std::exception&) {
    }
    char head[160];
    std::snprintf(head, sizeof head, "pull-in during doubler run (V_dc = %g V, v_amp = %g V): ", drive.bias_voltage,
                  drive.ac_amplitude);
    throw PhysicsError(head + std::string(e.what()) + hint);
}

DoublerMeasurement measure_doubler(const Scenario& s, const ReducedModel& model, const DriveSignal& drive) {
    const std::size_t per_period = default_samples_per_period(model, drive);
    if (s.analysis.fft_size < per_period)
        throw ValidationError("analysis.fft_size: " + std::to_string(s.analysis.fft_size) +
                              " is shorter than one drive period (" + std::to_string(per_period) + " samples)");
    DoublerMeasurement m;
    try {
        m.trajectory = doubler_run(model, drive, s.analysis.fft_size / per_period);
    } catch (const OverclosureError& e) {
        rethrow_pull_in(model, drive, e);
    } catch (const PullInError& e) {
        rethrow_pull_in(model, drive, e);
    }
    const auto& tr = m.trajectory;
    m.current_spectrum = amplitude_spectrum(settled_segment(tr, tr.current), tr.dt, s.analysis.window,
                                            s.analysis.fft_size);
    m.displacement_spectrum =
        amplitude_spectrum(settled_segment(tr, tr.q), tr.dt, s.analysis.window, s.analysis.fft_size);
    m.purity = purity_report(m.current_spectrum, drive.input_frequency, s.analysis.harmonics);
    const auto& a = m.current_spectrum.amplitude;
    m.dominant_bin = static_cast<std::size_t>(std::max_element(a.begin() + 1, a.end()) - a.begin());
    m.dominant_at_double = std::abs(m.current_spectrum.frequency(m.dominant_bin) - 2.0 * drive.input_frequency) <=
                           m.current_spectrum.bin_spacing;
    return m;
}

// Creates the directory and proves it writable.
void ensure_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path probe = dir / ".write-probe";
    FILE* f = ec ? nullptr : std::fopen(probe.string().c_str(), "wb");
    if (!f) throw ValidationError("output directory " + dir.string() + " is not writable");
    std::fclose(f);
    fs::remove(probe, ec);
}

bool valid_name(const std::string& n) {
    if (n.empty() || n == "." || n == "..") return false;
    return std::all_of(n.begin(), n.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'; });
}

}  // namespace

// ---- scenario ----------------------------------------------------------

void Scenario::validate() const {
    const std::string where = "scenario '" + name + "'";
    if (!valid_name(name)) throw ValidationError(where + ": name must be non-empty and use [A-Za-z0-9._-]");
    try {
        device.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": device: " + e.what());
    }
    if (!(drive.bias_voltage >= 0.0) || !std::isfinite(drive.bias_voltage))
        throw ValidationError(where + ": drive.bias_voltage must be finite and >= 0");
    if (!(drive.ac_amplitude >= 0.0) || !std::isfinite(drive.ac_amplitude))
        throw ValidationError(where + ": drive.ac_amplitude must be finite and >= 0");

    const double f1 = natural_frequency(1, device.beam, device.material);
    if (drive.input_frequency) {
        const double f = *drive.input_frequency;
        if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError(where + ": drive.input_frequency must be > 0");
        if (std::abs(f - 0.5 * f1) > kDoublerWindow * 0.5 * f1)
            throw ValidationError(where + ": drive.input_frequency must lie within 5% of f1/2 = " +
                                  std::to_string(0.5 * f1) + " Hz");
    }

    const auto& a = analysis;
    if (a.fe_elements < 4 || a.fe_elements > 4096)
        throw ValidationError(where + ": analysis.fe_elements must be in [4, 4096]");
    if (a.mode_count < 1 || a.mode_count > 8) throw ValidationError(where + ": analysis.mode_count must be in [1, 8]");
    if (a.fe_elements < a.mode_count + 2)
        throw ValidationError(where + ": analysis.fe_elements must be >= mode_count + 2");
    if (a.mode_shape_points < 2) throw ValidationError(where + ": analysis.mode_shape_points must be >= 2");
    if (a.sweep.points < 3 || a.sweep.points > 10001)
        throw ValidationError(where + ": analysis.sweep.points must be in [3, 10001]");
    const double f_lo = a.sweep.f_lo.value_or(kSweepLow * f1);
    const double f_hi = a.sweep.f_hi.value_or(kSweepHigh * f1);
    if (!(f_lo > 0.0) || !(f_hi > f_lo) || !std::isfinite(f_hi))
        throw ValidationError(where + ": analysis.sweep needs 0 < f_lo < f_hi");
    if (!(a.sweep.ac_amplitude > 0.0) || !std::isfinite(a.sweep.ac_amplitude))
        throw ValidationError(where + ": analysis.sweep.ac_amplitude must be > 0");
    if (!is_power_of_two(a.fft_size) || a.fft_size < 16 || a.fft_size > (std::size_t{1} << 22))
        throw ValidationError(where + ": analysis.fft_size must be a power of two in [16, 2^22]");
    if (a.harmonics < 2 || a.harmonics > 64) throw ValidationError(where + ": analysis.harmonics must be in [2, 64]");
    for (double v : a.amplitude_sweep)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ValidationError(where + ": analysis.amplitude_sweep entries must be > 0");

    // The analysed band has to sit below Nyquist of the step the integrator will use.
    const double f_in = drive.input_frequency.value_or(0.5 * f1);
    const double nyquist_double = 0.5 * 256.0 * std::max(2.0 * f_in, f1);
    if (a.harmonics * f_in >= nyquist_double)
        throw ValidationError(where + ": analysis.harmonics reaches beyond Nyquist of the integration step");
    if (f_hi >= 0.5 * 256.0 * std::max(2.0 * f_hi, f1))
        throw ValidationError(where + ": analysis.sweep band beyond Nyquist of the integration step");
}

Scenario preset_scenario(const std::string& preset_name) {
    Scenario s;
    s.name = preset_name;
    s.preset_name = preset_name;
    s.device = preset(preset_name);
    return s;
}

Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("scenario: expected a JSON object");
    const std::string name = j.contains("name") && j.at("name").is_string() ? j.at("name").get<std::string>() : "?";
    const std::string where = "scenario '" + name + "'";
    check_keys(j, where, {"name", "device", "drive", "analysis", "output"});

    Scenario s;
    s.name = get_string(j, where, "name");
    if (!j.contains("device")) throw ValidationError(where + ".device: missing");
    const json& dev = j.at("device");
    if (dev.is_string()) {
        s.preset_name = dev.get<std::string>();
        try {
            s.device = preset(*s.preset_name);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ".device: " + e.what());
        }
    } else {
        try {
            s.device = device_from_json(dev);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ".device: " + e.what());
        }
    }

    if (j.contains("drive")) {
        const json& d = j.at("drive");
        const std::string w = where + ".drive";
        check_keys(d, w, {"bias_voltage", "ac_amplitude", "input_frequency"});
        s.drive.bias_voltage = get_number(d, w, "bias_voltage", s.drive.bias_voltage);
        s.drive.ac_amplitude = get_number(d, w, "ac_amplitude", s.drive.ac_amplitude);
        s.drive.input_frequency = get_optional_number(d, w, "input_frequency");
    }

    if (j.contains("analysis")) {
        const json& a = j.at("analysis");
        const std::string w = where + ".analysis";
        check_keys(a, w,
                   {"fe_elements", "mode_count", "mode_shape_points", "sweep", "fft_size", "harmonics", "window",
                    "amplitude_sweep"});
        auto& an = s.analysis;
        an.fe_elements = static_cast<int>(get_integer(a, w, "fe_elements", an.fe_elements));
        an.mode_count = static_cast<int>(get_integer(a, w, "mode_count", an.mode_count));
        const auto msp = get_integer(a, w, "mode_shape_points", static_cast<long long>(an.mode_shape_points));
        const auto fft = get_integer(a, w, "fft_size", static_cast<long long>(an.fft_size));
        if (msp < 0 || fft < 0) throw ValidationError(w + ": counts must be non-negative");
        an.mode_shape_points = static_cast<std::size_t>(msp);
        an.fft_size = static_cast<std::size_t>(fft);
        an.harmonics = static_cast<int>(get_integer(a, w, "harmonics", an.harmonics));
        if (a.contains("window")) {
            try {
                an.window = window_from_name(get_string(a, w, "window"));
            } catch (const ValidationError& e) {
                throw ValidationError(w + ".window: " + e.what());
            }
        }
        if (a.contains("amplitude_sweep")) {
            const json& list = a.at("amplitude_sweep");
            if (!list.is_array()) throw ValidationError(w + ".amplitude_sweep: expected an array of numbers");
            an.amplitude_sweep.clear();
            for (const auto& v : list) {
                if (!v.is_number()) throw ValidationError(w + ".amplitude_sweep: expected an array of numbers");
                an.amplitude_sweep.push_back(v.get<double>());
            }
        }
        if (a.contains("sweep")) {
            const json& sw = a.at("sweep");
            const std::string ws = w + ".sweep";
            check_keys(sw, ws, {"f_lo", "f_hi", "points", "spacing", "ac_amplitude", "max_periods"});
            an.sweep.f_lo = get_optional_number(sw, ws, "f_lo");
            an.sweep.f_hi = get_optional_number(sw, ws, "f_hi");
            const auto pts = get_integer(sw, ws, "points", static_cast<long long>(an.sweep.points));
            if (pts < 0) throw ValidationError(ws + ".points: must be positive");
            an.sweep.points = static_cast<std::size_t>(pts);
            if (sw.contains("spacing")) an.sweep.spacing = spacing_from_name(ws + ".spacing", get_string(sw, ws, "spacing"));
            an.sweep.ac_amplitude = get_number(sw, ws, "ac_amplitude", an.sweep.ac_amplitude);
            const auto cap = get_integer(sw, ws, "max_periods", 0);
            if (cap < 0) throw ValidationError(ws + ".max_periods: must be >= 0");
            an.sweep.max_periods = static_cast<std::size_t>(cap);
        }
    }

    if (j.contains("output")) s.output = fs::path(get_string(j, where, "output"));
    s.validate();
    return s;
}

json scenario_to_json(const Scenario& s) {
    json sweep{{"points", s.analysis.sweep.points},
               {"spacing", spacing_name(s.analysis.sweep.spacing)},
               {"ac_amplitude", s.analysis.sweep.ac_amplitude}};
    if (s.analysis.sweep.max_periods) sweep["max_periods"] = s.analysis.sweep.max_periods;
    if (s.analysis.sweep.f_lo) sweep["f_lo"] = *s.analysis.sweep.f_lo;
    if (s.analysis.sweep.f_hi) sweep["f_hi"] = *s.analysis.sweep.f_hi;
    json drive{{"bias_voltage", s.drive.bias_voltage}, {"ac_amplitude", s.drive.ac_amplitude}};
    if (s.drive.input_frequency) drive["input_frequency"] = *s.drive.input_frequency;

    json j{{"name", s.name},
           {"drive", drive},
           {"analysis",
            {{"fe_elements", s.analysis.fe_elements},
             {"mode_count", s.analysis.mode_count},
             {"mode_shape_points", s.analysis.mode_shape_points},
             {"sweep", sweep},
             {"fft_size", s.analysis.fft_size},
             {"harmonics", s.analysis.harmonics},
             {"window", std::string(window_name(s.analysis.window))},
             {"amplitude_sweep", s.analysis.amplitude_sweep}}}};
    if (s.preset_name && s.device == preset(*s.preset_name))
        j["device"] = *s.preset_name;
    else
        j["device"] = device_to_json(s.device);
    if (s.output) j["output"] = s.output->string();
    return j;
}

std::vector<Scenario> scenarios_from_json(const json& j) {
    const json* list = &j;
    if (j.is_object()) {
        if (!j.contains("scenarios")) return {scenario_from_json(j)};
        check_keys(j, "config", {"scenarios"});
        list = &j.at("scenarios");
    }
    if (!list->is_array()) throw ValidationError("config: 'scenarios' must be an array");
    std::vector<Scenario> out;
    std::set<std::string> names;
    for (const auto& item : *list) {
        out.push_back(scenario_from_json(item));
        if (!names.insert(out.back().name).second)
            throw ValidationError("config: duplicate scenario name '" + out.back().name + "'");
    }
    return out;
}

json check_to_json(const Check& c) {
    return {{"criterion", c.criterion}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit},
            {"detail", c.detail}};
}

bool Fragment::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

fs::path scenario_directory(const Scenario& s, const fs::path& root) {
    if (s.output) return s.output->is_absolute() ? *s.output : root / *s.output;
    return root / s.name;
}

std::optional<PresetReference> preset_reference(const std::string& name) {
    if (name == "beam-1MHz") return PresetReference{1.0e6, 960e3, {960e3, 957e3, 959e3}};
    if (name == "beam-455kHz") return PresetReference{455e3, 435e3, {454e3, 454e3, 453e3}};
    return std::nullopt;
}

// ---- protocols -----------------------------------------------------------

Fragment run_modal(const Scenario& s, const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    s.validate();
    ensure_writable(ctx.directory);
    Fragment out;
    const auto& beam = s.device.beam;
    const auto& mat = s.device.material;

    json analytic = json::array();
    const auto betas = cantilever_wavenumbers(s.analysis.mode_count);
    for (int n = 1; n <= s.analysis.mode_count; ++n) {
        analytic.push_back({{"mode", n}, {"wavenumber", betas[static_cast<std::size_t>(n - 1)]},
                            {"frequency_hz", natural_frequency(n, beam, mat)}});
        const ModeShape shape(n, beam.length);
        Table t({"x_m", "phi"});
        const std::size_t m = s.analysis.mode_shape_points;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = i + 1 == m ? beam.length : beam.length * static_cast<double>(i) / static_cast<double>(m - 1);
            t.add_row({x, shape(x)});
        }
        write_table(ctx.directory, "mode_shape_" + std::to_string(n), t, ctx.format);
    }
    const double f1 = natural_frequency(1, beam, mat);

    const auto fe = fem_modal(beam, mat, s.analysis.fe_elements, std::min(s.analysis.mode_count, 3));
    const auto& mode1 = fe.modes.front();
    Table fe_table({"node", "x_m", "deflection", "rotation"});
    for (std::size_t i = 0; i < fe.node_x.size(); ++i)
        fe_table.add_row({static_cast<double>(i), fe.node_x[i], mode1.deflection(i), mode1.rotation(i)});
    write_table(ctx.directory, "fe_mode_1", fe_table, ctx.format);
    json fe_modes = json::array();
    for (std::size_t n = 0; n < fe.modes.size(); ++n)
        fe_modes.push_back({{"mode", n + 1},
                            {"frequency_hz", fe.modes[n].frequency},
                            {"relative_difference", rel_diff(fe.modes[n].frequency, natural_frequency(static_cast<int>(n) + 1, beam, mat))}});
    const double fe_err = rel_diff(mode1.frequency, f1);

    json convergence = json::array();
    double previous = INFINITY;
    bool decreasing = true;
    for (int elements : {4, 8, 16, 32}) {
        const double err = rel_diff(fem_modal(beam, mat, elements, 1).modes.front().frequency, f1);
        convergence.push_back({{"elements", elements}, {"relative_error", err}});
        decreasing = decreasing && err < previous;
        previous = err;
    }

    out.data = {{"analytic", analytic},
                {"fe", {{"elements", s.analysis.fe_elements}, {"modes", fe_modes}}},
                {"fe_f1_relative_difference", fe_err},
                {"fe_convergence", convergence}};
    out.checks.push_back(make_check("fe_f1_within_0.1pct", fe_err <= kFeTolerance, fe_err, kFeTolerance,
                                    std::to_string(s.analysis.fe_elements) + "-element FE vs analytic f1"));
    out.checks.push_back(make_check("fe_error_decreasing_4_8_16_32", decreasing, previous, 0.0,
                                    "relative error strictly decreasing with refinement"));
    if (s.preset_name && s.device == preset(*s.preset_name)) {
        if (const auto ref = preset_reference(*s.preset_name)) {
            const double err = rel_diff(f1, ref->design_frequency);
            out.data["design_frequency_hz"] = ref->design_frequency;
            out.checks.push_back(make_check("analytic_f1_within_0.5pct_of_design", err <= kDesignTolerance, err,
                                            kDesignTolerance, "design target " + khz(ref->design_frequency)));
        }
    }
    out.seconds = seconds_since(t0);
    return out;
}

Fragment run_sweep(const Scenario& s, const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    s.validate();
    ensure_writable(ctx.directory);
    Fragment out;
    const auto model = build_reduced_model(s.device);
    DriveSignal drive{WiringMode::resonator, s.drive.bias_voltage, s.analysis.sweep.ac_amplitude, 1.0, std::nullopt};
    const double f_biased = biased_resonance_frequency(model, drive);
    const double f_lo = s.analysis.sweep.f_lo.value_or(kSweepLow * model.natural_frequency);
    const double f_hi = s.analysis.sweep.f_hi.value_or(kSweepHigh * model.natural_frequency);

    SteadyStateOptions options;
    options.max_periods = s.analysis.sweep.max_periods;
    const auto fr =
        frequency_sweep(model, drive, f_lo, f_hi, s.analysis.sweep.points, s.analysis.sweep.spacing, options);
    Table t({"f_Hz", "amp_m", "phase_rad", "i_amp_A"});
    json unsettled = json::array();
    for (std::size_t i = 0; i < fr.size(); ++i) {
        t.add_row({fr.frequency[i], fr.amplitude[i], fr.phase[i], fr.current_amplitude[i]});
        if (!fr.settled[i]) unsettled.push_back(fr.frequency[i]);
    }
    write_table(ctx.directory, "sweep", t, ctx.format);

    out.data = {{"wiring", "resonator"},
                {"bias_voltage", drive.bias_voltage},
                {"ac_amplitude", drive.ac_amplitude},
                {"f_lo_hz", f_lo},
                {"f_hi_hz", f_hi},
                {"points", fr.size()},
                {"model_f1_hz", model.natural_frequency},
                {"biased_f1_hz", f_biased},
                {"unsettled_points_hz", unsettled}};
    if (!unsettled.empty()) {
        out.degraded = true;
        out.note = std::to_string(unsettled.size()) + " sweep point(s) did not settle";
    }

    ResonanceFit fit;
    try {
        fit = resonance_fit(fr);
    } catch (const FitError& e) {
        const auto peak = std::max_element(fr.amplitude.begin(), fr.amplitude.end()) - fr.amplitude.begin();
        throw FitError(e.kind(), std::string(e.what()) + " [band " + khz(f_lo) + " .. " + khz(f_hi) + ", " +
                                     std::to_string(fr.size()) + " points, largest response at " +
                                     khz(fr.frequency[static_cast<std::size_t>(peak)]) + ", biased f1 " +
                                     khz(f_biased) + "]");
    }
    out.data["fit"] = fit_to_json(fit);

    const double q_dev = s.device.damping.quality_factor();
    const double zeta_dev = s.device.damping.damping_ratio();
    const double q_err = rel_diff(fit.quality_factor, q_dev);
    const double zeta_err = std::abs(fit.damping_ratio - zeta_dev);
    const double peak_err = rel_diff(fit.peak_frequency, f_biased);
    out.checks.push_back(make_check("fitted_q_within_2pct", q_err <= kQTolerance, q_err, kQTolerance,
                                    "configured Q = " + std::to_string(q_dev)));
    out.checks.push_back(make_check("refit_zeta_within_1e-4", zeta_err <= kZetaTolerance, zeta_err, kZetaTolerance,
                                    "configured zeta = " + std::to_string(zeta_dev)));
    out.checks.push_back(make_check("peak_within_0.5pct_of_biased_f1", peak_err <= kPeakTolerance, peak_err,
                                    kPeakTolerance, "biased f1 = " + khz(f_biased)));

    if (s.preset_name && s.device == preset(*s.preset_name))
        if (const auto ref = preset_reference(*s.preset_name))
            out.data["informational"] = {{"measured_sweep_peak_hz", ref->measured_sweep_peak},
                                         {"model_peak_hz", fit.peak_frequency},
                                         {"note", "unmodeled squeeze-film shift; not a pass/fail criterion"}};
    out.seconds = seconds_since(t0);
    return out;
}

Fragment run_double(const Scenario& s, const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    s.validate();
    ensure_writable(ctx.directory);
    Fragment out;
    const auto model = build_reduced_model(s.device);
    DriveSignal drive{WiringMode::doubler, s.drive.bias_voltage, s.drive.ac_amplitude, 1.0, std::nullopt};
    try {
        drive.input_frequency = doubler_input_frequency(s, model, drive);
    } catch (const PullInError& e) {
        rethrow_pull_in(model, drive, e);  // bias alone is past pull-in
    }

    const auto m = measure_doubler(s, model, drive);
    const auto& tr = m.trajectory;

    Table traj({"t_s", "q_m", "qdot_mps", "C_out_F", "i_o_A", "v_load_V"});
    for (std::size_t i = tr.settling_index; i < tr.size(); ++i)
        traj.add_row({tr.time(i), tr.q[i], tr.q_dot[i], tr.output_capacitance[i], tr.current[i], tr.load_voltage[i]});
    write_table(ctx.directory, "trajectory", traj, ctx.format);
    write_table(ctx.directory, "spectrum_current", spectrum_table(m.current_spectrum), ctx.format);
    write_table(ctx.directory, "spectrum_displacement", spectrum_table(m.displacement_spectrum), ctx.format);

    const double fin_level = m.purity.front().level_db;
    out.data = {{"wiring", "doubler"},
                {"bias_voltage", drive.bias_voltage},
                {"ac_amplitude", drive.ac_amplitude},
                {"input_frequency_hz", drive.input_frequency},
                {"model_f1_hz", model.natural_frequency},
                {"dt_s", tr.dt},
                {"samples_per_period", tr.samples_per_period},
                {"settled", tr.settled},
                {"settling_time_s", tr.time(tr.settling_index)},
                {"fft_size", m.current_spectrum.fft_size},
                {"bin_spacing_hz", m.current_spectrum.bin_spacing},
                {"window", std::string(window_name(s.analysis.window))},
                {"dominant_frequency_hz", m.current_spectrum.frequency(m.dominant_bin)},
                {"output_frequency_hz", 2.0 * drive.input_frequency},
                {"purity", purity_to_json(m.purity)}};
    if (!tr.settled) {
        out.degraded = true;
        out.note = "doubler run did not settle within the period cap";
    }
    out.checks.push_back(make_check("dominant_output_at_2fin_within_one_bin", m.dominant_at_double,
                                    m.current_spectrum.frequency(m.dominant_bin), 2.0 * drive.input_frequency,
                                    "output-current spectrum"));
    out.checks.push_back(make_check("fin_component_40dB_down", fin_level <= kPurityFloorDb, fin_level,
                                    kPurityFloorDb, "f_in component relative to the largest harmonic"));

    if (!s.analysis.amplitude_sweep.empty()) {
        const auto& amps = s.analysis.amplitude_sweep;
        std::vector<std::future<DoublerMeasurement>> jobs;
        for (double v : amps) {
            DriveSignal d = drive;
            d.ac_amplitude = v;
            jobs.push_back(std::async(std::launch::async, [&, d] { return measure_doubler(s, model, d); }));
        }
        Table t({"v_amp_V", "i_2f_A", "q_2f_m", "fin_level_dB", "dominant_at_2f"});
        std::vector<double> out_amp;
        bool all_double = true;
        for (std::size_t i = 0; i < amps.size(); ++i) {
            const auto r = jobs[i].get();
            const double i2 = r.purity[1].amplitude;
            const double q2 = tone_peak(r.displacement_spectrum,
                                        static_cast<std::size_t>(std::llround(2.0 * drive.input_frequency /
                                                                              r.displacement_spectrum.bin_spacing)))
                                  .amplitude;
            const bool ok = r.dominant_at_double && r.purity.front().level_db <= kPurityFloorDb;
            all_double = all_double && ok;
            out_amp.push_back(i2);
            t.add_row({amps[i], i2, q2, r.purity.front().level_db, ok ? 1.0 : 0.0});
        }
        write_table(ctx.directory, "amplitude_sweep", t, ctx.format);

        // least-squares fit of i_2f = c v^2
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < amps.size(); ++i) {
            num += out_amp[i] * amps[i] * amps[i];
            den += std::pow(amps[i], 4);
        }
        const double c = num / den;
        double worst = 0.0;
        for (std::size_t i = 0; i < amps.size(); ++i)
            worst = std::max(worst, std::abs(out_amp[i] / (c * amps[i] * amps[i]) - 1.0));
        out.data["amplitude_sweep"] = {{"square_law_coefficient_A_per_V2", c}, {"worst_deviation", worst}};
        out.checks.push_back(make_check("doubling_holds_over_amplitude_sweep", all_double, all_double ? 1.0 : 0.0,
                                        1.0, "dominant at 2 f_in and f_in >= 40 dB down at every v_amp"));
        out.checks.push_back(make_check("output_square_law_within_5pct", worst <= kSquareLawTolerance, worst,
                                        kSquareLawTolerance, "i_2f against c v_amp^2"));
    }

    if (s.preset_name && s.device == preset(*s.preset_name))
        if (const auto ref = preset_reference(*s.preset_name))
            out.data["informational"] = {{"measured_die_peaks_hz", ref->measured_die_peaks},
                                         {"model_output_hz", 2.0 * drive.input_frequency},
                                         {"note", "bench values; not a pass/fail criterion"}};
    out.seconds = seconds_since(t0);
    return out;
}

Fragment run_pullin(const Scenario& s, const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    s.validate();
    ensure_writable(ctx.directory);
    Fragment out;
    const auto model = build_reduced_model(s.device);
    const double v_both = pull_in_voltage(model, BiasedElectrodes::both);
    const double v_in = pull_in_voltage(model, BiasedElectrodes::input);
    const double v_out = pull_in_voltage(model, BiasedElectrodes::output);
    const double vdc = s.drive.bias_voltage;
    const double margin_doubler = vdc > 0.0 ? v_out / vdc : INFINITY;
    const double margin_resonator = vdc > 0.0 ? v_both / vdc : INFINITY;

    // parallel-plate limit of the input transducer against the closed form
    const auto& e = s.device.input_electrode;
    const auto rigid = build_reduced_model(s.device, rigid_plate_shape(), model.mass, model.stiffness);
    const double v_rigid = pull_in_voltage(rigid, BiasedElectrodes::input);
    const double area = s.device.beam.width * e.span();
    const double v_closed =
        std::sqrt(8.0 * model.stiffness * std::pow(e.gap, 3) / (27.0 * s.device.material.gap_permittivity * area));
    const double oracle_err = rel_diff(v_rigid, v_closed);

    out.data = {{"pull_in_voltage_both_v", v_both},
                {"pull_in_voltage_input_v", v_in},
                {"pull_in_voltage_output_v", v_out},
                {"bias_voltage", vdc},
                {"margin_doubler", margin_doubler},
                {"margin_resonator", margin_resonator},
                {"rigid_plate_pull_in_v", v_rigid},
                {"rigid_plate_closed_form_v", v_closed}};
    out.checks.push_back(make_check("bias_below_pull_in", margin_doubler > 1.0 && margin_resonator > 1.0,
                                    std::min(margin_doubler, margin_resonator), 1.0,
                                    "pull-in voltage / V_dc for both wirings"));
    out.checks.push_back(make_check("rigid_plate_pull_in_within_1pct", oracle_err <= kPullInOracleTolerance,
                                    oracle_err, kPullInOracleTolerance, "sqrt(8 k d0^3 / (27 eps A))"));
    out.seconds = seconds_since(t0);
    return out;
}

// ---- report --------------------------------------------------------------

json fragment_to_json(const Fragment& f) {
    json checks = json::array();
    for (const auto& c : f.checks) checks.push_back(check_to_json(c));
    json j = f.data;
    j["checks"] = checks;
    j["degraded"] = f.degraded;
    if (!f.note.empty()) j["note"] = f.note;
    return j;
}

namespace {

const char* status_name(RowStatus s) {
    switch (s) {
        case RowStatus::pass: return "pass";
        case RowStatus::degraded: return "degraded";
        case RowStatus::failed: return "failed";
    }
    return "failed";
}

}  // namespace

ScenarioResult run_scenario(const Scenario& s, const RunContext& ctx) {
    ScenarioResult r;
    r.name = s.name;
    r.report = {{"scenario", scenario_to_json(s)}};
    json timings = json::object();
    std::vector<std::string> failures, degraded;

    using Runner = Fragment (*)(const Scenario&, const RunContext&);
    const std::pair<const char*, Runner> protocols[] = {
        {"modal", run_modal}, {"sweep", run_sweep}, {"double", run_double}, {"pullin", run_pullin}};
    for (const auto& [name, run] : protocols) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Fragment f = run(s, ctx);
            r.report[name] = fragment_to_json(f);
            for (const auto& c : f.checks)
                if (!c.passed) failures.push_back(std::string(name) + ": " + c.criterion);
            if (f.degraded) degraded.push_back(std::string(name) + ": " + f.note);
        } catch (const std::exception& e) {
            r.report[name] = {{"error", e.what()}};
            failures.push_back(std::string(name) + ": " + e.what());
        }
        timings[name] = seconds_since(t0);
    }
    r.report["timings_s"] = timings;

    auto join = [](const std::vector<std::string>& v) {
        std::string out;
        for (const auto& x : v) out += (out.empty() ? "" : "; ") + x;
        return out;
    };
    if (!failures.empty()) {
        r.status = RowStatus::failed;
        failures.insert(failures.end(), degraded.begin(), degraded.end());
        r.reason = join(failures);
    } else if (!degraded.empty()) {
        r.status = RowStatus::degraded;
        r.reason = join(degraded);
    }
    r.report["status"] = status_name(r.status);
    r.report["reason"] = r.reason;
    return r;
}

bool ConsolidatedReport::all_passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const ScenarioResult& r) { return r.status == RowStatus::pass; });
}

ConsolidatedReport run_report(const std::vector<Scenario>& scenarios, const fs::path& root, Format format) {
    if (scenarios.empty()) throw ValidationError("report: empty scenario list");
    std::set<std::string> names;
    for (const auto& s : scenarios) {
        s.validate();
        if (!names.insert(s.name).second) throw ValidationError("report: duplicate scenario name '" + s.name + "'");
    }

    std::vector<std::future<ScenarioResult>> jobs;
    for (const auto& s : scenarios) {
        const RunContext ctx{scenario_directory(s, root), format};
        jobs.push_back(std::async(std::launch::async, [&s, ctx] { return run_scenario(s, ctx); }));
    }
    ConsolidatedReport rep;
    for (auto& j : jobs) rep.rows.push_back(j.get());

    json rows = json::array();
    json details = json::object();
    std::string table;
    char line[512];
    std::snprintf(line, sizeof line, "%-16s %-12s %-12s %-12s %-34s %-9s %-8s %-10s %s\n", "beam", "design f1",
                  "model f1", "biased f1", "measured f1 (informational)", "doubling", "Q fit", "pull-in", "status");
    table += line;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& r = rep.rows[i];
        const auto& rj = r.report;
        const Scenario& s = scenarios[i];
        json row{{"beam", r.name}, {"status", status_name(r.status)}, {"reason", r.reason}};

        std::string design = "-", measured = "-";
        if (s.preset_name && s.device == preset(*s.preset_name))
            if (const auto ref = preset_reference(*s.preset_name)) {
                design = khz(ref->design_frequency);
                char buf[128];
                std::snprintf(buf, sizeof buf, "sweep %.0f; dies %.0f/%.0f/%.0f kHz", ref->measured_sweep_peak / 1e3,
                              ref->measured_die_peaks[0] / 1e3, ref->measured_die_peaks[1] / 1e3,
                              ref->measured_die_peaks[2] / 1e3);
                measured = buf;
                row["design_f1_hz"] = ref->design_frequency;
                row["measured_f1_hz_informational"] = {{"sweep_peak", ref->measured_sweep_peak},
                                                       {"die_peaks", ref->measured_die_peaks}};
            }
        const double f1 = natural_frequency(1, s.device.beam, s.device.material);
        row["model_f1_hz"] = f1;

        std::string biased = "-", doubling = "no", qfit = "-", margin = "-";
        if (rj.contains("sweep") && rj["sweep"].contains("biased_f1_hz")) {
            biased = khz(rj["sweep"]["biased_f1_hz"].get<double>());
            row["biased_f1_hz"] = rj["sweep"]["biased_f1_hz"];
        }
        if (rj.contains("sweep") && rj["sweep"].contains("fit")) {
            const double q = rj["sweep"]["fit"]["quality_factor"].get<double>();
            std::snprintf(line, sizeof line, "%.2f", q);
            qfit = line;
            row["q_fitted"] = q;
        }
        bool doubled = false;
        if (rj.contains("double") && rj["double"].contains("checks")) {
            doubled = true;
            for (const auto& c : rj["double"]["checks"])
                if (c["criterion"] == "dominant_output_at_2fin_within_one_bin" ||
                    c["criterion"] == "fin_component_40dB_down")
                    doubled = doubled && c["passed"].get<bool>();
            doubling = doubled ? "yes" : "no";
        }
        row["doubling_verified"] = doubled;
        if (rj.contains("pullin") && rj["pullin"].contains("margin_doubler")) {
            const double m = std::min(rj["pullin"]["margin_doubler"].get<double>(),
                                      rj["pullin"]["margin_resonator"].get<double>());
            std::snprintf(line, sizeof line, "%.1fx", m);
            margin = line;
            row["pull_in_margin"] = m;
        }
        std::snprintf(line, sizeof line, "%-16s %-12s %-12s %-12s %-34s %-9s %-8s %-10s %s\n", r.name.c_str(),
                      design.c_str(), khz(f1).c_str(), biased.c_str(), measured.c_str(), doubling.c_str(),
                      qfit.c_str(), margin.c_str(), status_name(r.status));
        table += line;
        if (!r.reason.empty()) table += "    " + r.reason + "\n";
        rows.push_back(row);
        details[r.name] = rj;
    }
    table +=
        "measured values are bench references (squeeze-film air damping, not modelled); they are not gated on.\n";

    rep.table = table;
    ensure_writable(root);
    rep.json = {{"table", rows}, {"scenarios", details}, {"all_passed", rep.all_passed()}};
    write_json(root / "report.json", rep.json);
    const fs::path txt = root / "report.txt";
    if (FILE* f = std::fopen(txt.string().c_str(), "wb")) {
        std::fputs(table.c_str(), f);
        std::fclose(f);
    } else {
        throw ValidationError("cannot write " + txt.string());
    }
    return rep;
}

}  // namespace memsd
