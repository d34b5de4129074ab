// memsd: modal, sweep, doubler, pull-in and report runs for cantilever resonator/doubler devices.
#include "memsd/errors.hpp"
#include "memsd/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using namespace memsd;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitPhysics = 1;
constexpr int kExitValidation = 2;

struct Options {
    std::string config;
    std::vector<std::string> presets;
    std::string out;
    std::string format = "csv";
    std::optional<double> vdc, vamp, fin, f_lo, f_hi;
    std::optional<std::size_t> points;
};

void add_common(CLI::App* cmd, Options& o, bool overrides) {
    cmd->add_option("--config", o.config, "scenario JSON (object, array, or {\"scenarios\": [...]})");
    cmd->add_option("--preset", o.presets, "built-in device preset (repeatable)");
    cmd->add_option("--out", o.out, "output root (default $MEMSD_OUT, else ./memsd-out)");
    cmd->add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}));
    if (!overrides) return;
    cmd->add_option("--vdc", o.vdc, "bias voltage V_dc, V");
    cmd->add_option("--vamp", o.vamp, "doubler AC amplitude, V");
    cmd->add_option("--fin", o.fin, "doubler input frequency, Hz");
    cmd->add_option("--f-lo", o.f_lo, "sweep start, Hz");
    cmd->add_option("--f-hi", o.f_hi, "sweep stop, Hz");
    cmd->add_option("--points", o.points, "sweep points");
}

fs::path output_root(const Options& o) {
    if (!o.out.empty()) return o.out;
    if (const char* env = std::getenv("MEMSD_OUT"); env && *env) return env;
    return "memsd-out";
}

std::vector<Scenario> load_scenarios(const Options& o) {
    std::vector<Scenario> out;
    if (!o.config.empty()) out = scenarios_from_json(read_json(o.config));
    for (const auto& p : o.presets) out.push_back(preset_scenario(p));
    if (out.empty()) throw ValidationError("no scenarios: pass --config and/or --preset");
    for (auto& s : out) {
        if (o.vdc) s.drive.bias_voltage = *o.vdc;
        if (o.vamp) s.drive.ac_amplitude = *o.vamp;
        if (o.fin) s.drive.input_frequency = *o.fin;
        if (o.f_lo) s.analysis.sweep.f_lo = *o.f_lo;
        if (o.f_hi) s.analysis.sweep.f_hi = *o.f_hi;
        if (o.points) s.analysis.sweep.points = *o.points;
        s.validate();
    }
    return out;
}

int run_protocol(const std::string& name, Fragment (*run)(const Scenario&, const RunContext&), const Options& o) {
    const auto scenarios = load_scenarios(o);
    const auto root = output_root(o);
    const Format format = format_from_name(o.format);
    bool ok = true;
    for (const auto& s : scenarios) {
        const RunContext ctx{scenario_directory(s, root), format};
        const Fragment f = run(s, ctx);
        auto j = fragment_to_json(f);
        j["scenario"] = scenario_to_json(s);
        write_json(ctx.directory / (name + ".json"), j);
        for (const auto& c : f.checks) {
            std::printf("[%s] %s %s: %s value=%.6g limit=%.6g %s\n", c.passed ? "PASS" : "FAIL", s.name.c_str(),
                        name.c_str(), c.criterion.c_str(), c.value, c.limit, c.detail.c_str());
            ok = ok && c.passed;
        }
        if (f.degraded) std::printf("[WARN] %s %s: %s\n", s.name.c_str(), name.c_str(), f.note.c_str());
        std::printf("%s %s: wrote %s (%.2f s)\n", s.name.c_str(), name.c_str(), ctx.directory.string().c_str(),
                    f.seconds);
    }
    return ok ? kExitPass : kExitPhysics;
}

int run_report_cmd(const Options& o) {
    const auto scenarios = load_scenarios(o);
    const auto root = output_root(o);
    const auto rep = run_report(scenarios, root, format_from_name(o.format));
    std::fputs(rep.table.c_str(), stdout);
    std::printf("wrote %s\n", (root / "report.json").string().c_str());
    const bool failed = std::any_of(rep.rows.begin(), rep.rows.end(),
                                    [](const ScenarioResult& r) { return r.status == RowStatus::failed; });
    return failed ? kExitPhysics : kExitPass;
}

int run_presets_cmd(const Options& o) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& name : preset_names()) {
        auto j = scenario_to_json(preset_scenario(name));
        j["device"] = device_to_json(preset(name));
        list.push_back(j);
    }
    const nlohmann::json doc{{"scenarios", list}};
    if (!o.out.empty() || std::getenv("MEMSD_OUT")) {
        const auto path = output_root(o) / "presets.json";
        write_json(path, doc);
        std::printf("wrote %s\n", path.string().c_str());
    } else {
        std::cout << doc.dump(2) << '\n';
    }
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memsd: electrostatic cantilever resonator and frequency doubler simulator"};
    app.require_subcommand(1);
    Options o;

    auto* modal = app.add_subcommand("modal", "analytic and FE modal analysis");
    auto* sweep = app.add_subcommand("sweep", "resonator-wired frequency sweep with Q fit");
    auto* dbl = app.add_subcommand("double", "doubler run, output spectrum and purity");
    auto* pullin = app.add_subcommand("pullin", "static pull-in voltages and margins");
    auto* report = app.add_subcommand("report", "all protocols, consolidated report");
    auto* presets = app.add_subcommand("presets", "dump the built-in preset scenarios");
    for (auto* c : {modal, sweep, dbl, pullin, report}) add_common(c, o, true);
    presets->add_option("--out", o.out, "write presets.json under this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitValidation;
    }

    try {
        if (*modal) return run_protocol("modal", run_modal, o);
        if (*sweep) return run_protocol("sweep", run_sweep, o);
        if (*dbl) return run_protocol("double", run_double, o);
        if (*pullin) return run_protocol("pullin", run_pullin, o);
        if (*report) return run_report_cmd(o);
        if (*presets) return run_presets_cmd(o);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const PhysicsError& e) {
        std::fprintf(stderr, "physics error: %s\n", e.what());
        return kExitPhysics;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitPhysics;
    }
    return kExitValidation;
}
