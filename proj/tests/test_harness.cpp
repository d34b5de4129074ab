#include <doctest.h>

#include "approx.hpp"

#include "memsd/errors.hpp"
#include "memsd/harness.hpp"
#include "memsd/io.hpp"
#include "memsd/modal.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

using namespace memsd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("memsd-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Small, fast scenario on the 1 MHz beam.
Scenario quick(const std::string& name = "quick") {
    Scenario s = preset_scenario("beam-1MHz");
    s.name = name;
    s.analysis.fft_size = 4096;
    s.analysis.amplitude_sweep.clear();
    const double f1 = natural_frequency(1, s.device.beam, s.device.material);
    s.analysis.sweep.f_lo = 0.96 * f1;
    s.analysis.sweep.f_hi = 1.04 * f1;
    s.analysis.sweep.points = 17;
    return s;
}

int run_cli(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + (env.empty() ? "" : " ") + MEMSD_CLI + std::string(" ") + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json inline_device_json(double thickness) {
    auto d = device_to_json(preset("beam-455kHz"));
    d["beam"]["thickness"] = thickness;
    return d;
}

}  // namespace

TEST_CASE("table I/O round trip is exact") {
    TempDir dir("io");
    Table t({"a", "b"});
    t.add_row({0.1, -1e-300});
    t.add_row({1.0 / 3.0, 6.02214076e23});
    t.add_row({0.0, 5e-324});
    for (Format f : {Format::csv, Format::json}) {
        const auto path = write_table(dir.path, "t", t, f);
        const auto back = read_table(path);
        REQUIRE(back.columns == t.columns);
        REQUIRE(back.rows() == 3);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t r = 0; r < 3; ++r) CHECK(back.data[c][r] == t.data[c][r]);
    }
    CHECK(format_double(0.1) == "0.1");
    std::ofstream(dir.path / "bad.csv") << "a,b\n1,2\n3\n";
    CHECK_THROWS_AS(read_csv(dir.path / "bad.csv"), ValidationError);
    std::ofstream(dir.path / "bad2.csv") << "a\n1x\n";
    CHECK_THROWS_AS(read_csv(dir.path / "bad2.csv"), ValidationError);
    CHECK_THROWS_AS(t.add_row({1.0}), ValidationError);
}

TEST_CASE("scenario JSON round trip and rejection") {
    const Scenario s = quick();
    const auto j = scenario_to_json(s);
    CHECK(j["device"] == "beam-1MHz");
    const Scenario back = scenario_from_json(j);
    CHECK(back.device == s.device);
    CHECK(scenario_to_json(back) == j);

    json bad = j;
    bad["extra"] = 1;
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);
    bad = j;
    bad["analysis"]["sweep"]["step"] = 1;
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);
    bad = j;
    bad["drive"]["phase"] = 0;
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);
    bad = j;
    bad["device"] = "beam-2MHz";
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);
    bad = j;
    bad["analysis"]["fft_size"] = 5000;
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);
    bad = j;
    bad["drive"]["input_frequency"] = 400e3;  // not near f1 / 2
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);
    bad = j;
    bad["name"] = "../escape";
    CHECK_THROWS_AS(scenario_from_json(bad), ValidationError);

    // h / L = 0.3 violates the slenderness bound
    json thick = j;
    thick["device"] = inline_device_json(0.3 * 76.75e-6);
    try {
        scenario_from_json(thick);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("thickness") != std::string::npos);
    }
    json inline_ok = j;
    inline_ok["device"] = inline_device_json(2e-6);
    CHECK(scenario_from_json(inline_ok).device == preset("beam-455kHz"));
    CHECK(scenario_to_json(scenario_from_json(inline_ok))["device"].is_object());

    CHECK(scenarios_from_json(json::array({j})).size() == 1);
    CHECK(scenarios_from_json(json{{"scenarios", json::array({j})}}).size() == 1);
    CHECK_THROWS_AS(scenarios_from_json(json{{"scenarios", json::array({j, j})}}), ValidationError);
    CHECK(scenarios_from_json(json{{"scenarios", json::array()}}).empty());
}

TEST_CASE("empty scenario list is an error") {
    TempDir dir("empty");
    CHECK_THROWS_AS(run_report({}, dir.path), ValidationError);
}

TEST_CASE("modal protocol on both presets") {
    TempDir dir("modal");
    for (const auto& name : preset_names()) {
        const auto s = preset_scenario(name);
        const RunContext ctx{scenario_directory(s, dir.path), Format::csv};
        const auto f = run_modal(s, ctx);
        CHECK(f.passed());
        CHECK(f.checks.size() == 3);
        const double f1 = f.data["analytic"][0]["frequency_hz"].get<double>();
        CHECK(f1 == rel(preset_reference(name)->design_frequency, 5e-3));
        const auto fe = read_table(ctx.directory / "fe_mode_1.csv");
        CHECK(fe.rows() == 33);
        CHECK(fe.column("deflection").back() == rel(1.0, 1e-12));
        CHECK(read_table(ctx.directory / "mode_shape_3.csv").rows() == 201);
    }
}

TEST_CASE("sweep outside the resonance reports the half-power error") {
    TempDir dir("band");
    Scenario s = quick();
    const double f1 = natural_frequency(1, s.device.beam, s.device.material);
    s.analysis.sweep.f_lo = 0.80 * f1;
    s.analysis.sweep.f_hi = 0.90 * f1;
    s.analysis.sweep.points = 5;
    try {
        run_sweep(s, {dir.path, Format::csv});
        FAIL("expected a fit error");
    } catch (const FitError& e) {
        CHECK(e.kind() == FitError::Kind::half_power_out_of_band);
        CHECK(std::string(e.what()).find("biased f1") != std::string::npos);
    }
}

TEST_CASE("unsettled sweep marks the fragment degraded") {
    TempDir dir("unsettled");
    Scenario s = quick();
    s.analysis.sweep.max_periods = 12;
    const auto f = run_sweep(s, {dir.path, Format::csv});
    CHECK(f.degraded);
    CHECK(f.note.find("did not settle") != std::string::npos);
    CHECK(f.data["unsettled_points_hz"].size() == s.analysis.sweep.points);
}

TEST_CASE("doubler protocol output is deterministic and parses back") {
    TempDir dir("det");
    const Scenario s = quick();
    const RunContext a{dir.path / "a", Format::csv}, b{dir.path / "b", Format::csv};
    const auto fa = run_double(s, a);
    const auto fb = run_double(s, b);
    CHECK(fa.passed());
    for (const char* file : {"trajectory.csv", "spectrum_current.csv", "spectrum_displacement.csv"}) {
        CAPTURE(file);
        const auto ta = slurp(a.directory / file);
        CHECK(!ta.empty());
        CHECK(ta == slurp(b.directory / file));
    }
    const auto traj = read_table(a.directory / "trajectory.csv");
    CHECK(traj.columns == std::vector<std::string>{"t_s", "q_m", "qdot_mps", "C_out_F", "i_o_A", "v_load_V"});
    const auto spec = read_table(a.directory / "spectrum_current.csv");
    CHECK(spec.rows() == 4096 / 2 + 1);
    CHECK(spec.columns == std::vector<std::string>{"f_Hz", "amplitude"});

    const RunContext js{dir.path / "json", Format::json};
    run_double(s, js);
    const auto traj_json = read_table(js.directory / "trajectory.json");
    REQUIRE(traj_json.rows() == traj.rows());
    CHECK(traj_json.data == traj.data);
}

TEST_CASE("pull-in protocol and oracle") {
    TempDir dir("pullin");
    const auto f = run_pullin(preset_scenario("beam-455kHz"), {dir.path, Format::csv});
    CHECK(f.passed());
    CHECK(f.data["pull_in_voltage_both_v"].get<double>() < f.data["pull_in_voltage_output_v"].get<double>());

    Scenario hot = preset_scenario("beam-455kHz");
    hot.drive.bias_voltage = 1.2 * f.data["pull_in_voltage_output_v"].get<double>();
    hot.analysis.amplitude_sweep.clear();
    CHECK_FALSE(run_pullin(hot, {dir.path, Format::csv}).passed());
    try {
        run_double(hot, {dir.path, Format::csv});
        FAIL("expected pull-in");
    } catch (const PhysicsError& e) {
        const std::string msg = e.what();
        INFO(msg);
        CHECK(msg.find("keep V_dc below") != std::string::npos);
    }
}

TEST_CASE("report rows degrade or fail without stopping siblings") {
    TempDir dir("report");
    Scenario good = quick("good");
    good.analysis.sweep.points = 25;
    Scenario slow = quick("slow");
    slow.analysis.sweep.max_periods = 12;
    Scenario broken = quick("broken");
    const double f1 = natural_frequency(1, broken.device.beam, broken.device.material);
    broken.analysis.sweep.f_lo = 0.5 * f1;
    broken.analysis.sweep.f_hi = 0.6 * f1;
    broken.analysis.sweep.points = 3;

    const auto rep = run_report({good, slow, broken}, dir.path);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].status == RowStatus::pass);
    CHECK(rep.rows[1].status != RowStatus::pass);
    CHECK(rep.rows[1].reason.find("did not settle") != std::string::npos);
    CHECK(rep.rows[2].status == RowStatus::failed);
    CHECK(rep.rows[2].reason.find("sweep") != std::string::npos);
    CHECK(rep.rows[2].report.contains("double"));
    CHECK_FALSE(rep.all_passed());

    const auto j = read_json(dir.path / "report.json");
    CHECK(j["table"].size() == 3);
    CHECK(j["table"][0]["doubling_verified"] == true);
    CHECK(j["table"][2]["status"] == "failed");
    CHECK(fs::exists(dir.path / "report.txt"));
    CHECK(fs::exists(dir.path / "good" / "sweep.csv"));
}

TEST_CASE("cli exit codes and outputs") {
    TempDir dir("cli");
    const std::string out = dir.path.string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("modal") == 2);
    CHECK(run_cli("modal --preset nope --out " + out) == 2);
    CHECK(run_cli("modal --preset beam-1MHz --format xml --out " + out) == 2);
    CHECK(run_cli("modal --preset beam-1MHz --preset beam-455kHz --out " + out) == 0);
    CHECK(fs::exists(dir.path / "beam-1MHz" / "modal.json"));
    CHECK(read_json(dir.path / "beam-455kHz" / "modal.json")["checks"].size() == 3);

    auto thick = scenario_to_json(quick());
    thick["device"] = inline_device_json(0.3 * 76.75e-6);
    write_json(dir.path / "thick.json", thick);
    CHECK(run_cli("modal --config " + (dir.path / "thick.json").string() + " --out " + out) == 2);
    write_json(dir.path / "empty.json", json{{"scenarios", json::array()}});
    CHECK(run_cli("report --config " + (dir.path / "empty.json").string() + " --out " + out) == 2);
    CHECK(run_cli("pullin --preset beam-455kHz --out " + out) == 0);
    CHECK(run_cli("double --preset beam-455kHz --vdc 500 --out " + out) == 1);
    CHECK(run_cli("sweep --preset beam-1MHz --f-lo 5e5 --f-hi 6e5 --points 3 --out " + out) == 1);

    TempDir env("env");
    CHECK(run_cli("modal --preset beam-1MHz", "MEMSD_OUT=" + env.path.string()) == 0);
    CHECK(fs::exists(env.path / "beam-1MHz" / "mode_shape_1.csv"));

    CHECK(run_cli("presets --out " + out) == 0);
    const auto presets = scenarios_from_json(read_json(dir.path / "presets.json"));
    REQUIRE(presets.size() == 2);
    CHECK(presets[0].device == preset(presets[0].name));
}
