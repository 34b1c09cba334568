#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "mcflab/cli.hpp"
#include "mcflab/errors.hpp"

using namespace mcflab;
using namespace mcflab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mcflab_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

RunConfig config(json doc, const fs::path& out) {
    doc["output_dir"] = out.string();
    return parse_run_config(doc, "");
}

bool throws_config_naming(const json& doc, const std::string& needle) {
    try {
        parse_run_config(doc, "");
    } catch (const ConfigError& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

int call_main(std::vector<std::string> args) {
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return main_entry(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("schema validation names the field") {
    CHECK(throws_config_naming(json::object(), "config.command"));
    CHECK(throws_config_naming(json{{"command", "nope"}, {"output_dir", "x"}}, "config.command"));
    CHECK(throws_config_naming(json{{"command", "spectrum"}}, "config.output_dir"));
    CHECK(throws_config_naming(json{{"command", "spectrum"}, {"output_dir", "x"}, {"bogus", 1}}, "config.bogus"));
    CHECK(throws_config_naming(json{{"command", "spectrum"}, {"output_dir", "x"}, {"seed", -3}}, "config.seed"));
    CHECK_THROWS_AS(parse_run_config(json{{"command", "spectrum"}, {"output_dir", "x"}}, "flow"), ConfigError);
    const RunConfig rc = parse_run_config(json{{"command", "verify"}, {"output_dir", "x"}, {"run_dir", "y"}, {"seed", 9}}, "verify");
    CHECK(rc.seed == 9);
    CHECK(rc.body.at("run_dir") == "y");
    CHECK_FALSE(rc.body.contains("seed"));
}

TEST_CASE("spectrum command") {
    const fs::path out = scratch("spectrum");
    const RunResult r = run(config({{"command", "spectrum"}, {"cone", {{"p", 3}, {"q", 3}}}, {"lambda_cutoff", 3.0}, {"seed", 5}}, out));
    REQUIRE(r.exit_code == exit_ok);
    const std::string csv = slurp(out / "spectrum.csv");
    CHECK(csv.find("3,2,1,-6.000000000000e+00,-2.000000000000e+00,5.000000000000e-01,") != std::string::npos);
    const json m = load(out / "manifest.json");
    CHECK(m.at("seed") == 5);
    CHECK(m.at("library_version") == library_version);
    CHECK(m.at("config").at("lambda_cutoff") == 3.0);
    CHECK(m.at("exit_code") == 0);
    CHECK(m.at("wall_time_s").get<double>() >= 0.0);
    CHECK(r.summary.at("lambda_l").get<double>() == doctest::Approx(0.5));
}

TEST_CASE("check-params on the Simons cone") {
    const fs::path out = scratch("params7");
    const RunResult r = run(config({{"command", "check-params"}, {"n", 7}}, out), 1, false);
    REQUIRE(r.exit_code == exit_ok);
    const json p = load(out / "params.json");
    CHECK_FALSE(p.at("alpha_condition").at("pass").get<bool>());
    CHECK(p.at("alpha_condition").at("margins")[1].get<double>() == doctest::Approx(-1.0 / 7.0 - 1.0 / 3.0).epsilon(1e-12));
    CHECK(slurp(out / "params.csv").find("check,value,bound,margin,pass") == 0);
}

TEST_CASE("errors map to exit codes with the module") {
    const RunResult bad_cone = run(config({{"command", "spectrum"}, {"cone", {{"p", 0}, {"q", 3}}}}, scratch("badcone")));
    CHECK(bad_cone.exit_code == exit_config);
    CHECK(bad_cone.module == "cone");
    const RunResult bad_flow = run(config({{"command", "flow"}, {"flow", {{"dtt", 1}}}}, scratch("badflow")));
    CHECK(bad_flow.exit_code == exit_config);
    CHECK(bad_flow.error.find("dtt") != std::string::npos);
    const fs::path out = scratch("ball");
    const RunResult ball = run(config({{"command", "flow"}, {"flow", {{"s_end", 4.5}}}}, out), 1);
    CHECK(ball.exit_code == exit_admissibility);
    CHECK(ball.module == "flowsim");
    CHECK(load(out / "manifest.json").at("error").at("module") == "flowsim");
    CHECK(load(out / "report.json").contains("failure"));
    const RunResult missing = run(config({{"command", "verify"}, {"run_dir", (out / "nothing").string()}}, scratch("vmiss")));
    CHECK(missing.exit_code == exit_config);
    CHECK(exit_code_for(NumericalError("x")) == exit_numerical);
    CHECK(exit_code_for(DomainError("x")) == exit_numerical);
}

TEST_CASE("flow run is deterministic and verifiable") {
    const json doc = {{"command", "flow"}, {"flow", {{"tune", false}, {"s_end", 4.3}}}, {"seed", 3}};
    const fs::path a = scratch("flow_a");
    const fs::path b = scratch("flow_b");
    REQUIRE(run(config(doc, a), 1).exit_code == exit_ok);
    REQUIRE(run(config(doc, b), 2).exit_code == exit_ok);
    CHECK(slurp(a / "flow.csv") == slurp(b / "flow.csv"));
    CHECK(slurp(a / "final_state.json") == slurp(b / "final_state.json"));
    for (const char* f : {"profile_typeI.svg", "profile_tip.svg", "sup_curvature.svg", "report.json"})
        CHECK(fs::exists(a / f));
    CHECK(load(a / "manifest.json").at("config").at("seed") == 3);

    const fs::path v = scratch("verify");
    const RunResult r = run(config({{"command", "verify"}, {"run_dir", a.string()}}, v));
    REQUIRE(r.exit_code == exit_ok);
    const json rep = load(v / "verify.json");
    CHECK(rep.at("outer_barriers_match_stored").get<bool>());
    CHECK(rep.at("kappa_remeasured").get<double>() == rep.at("kappa_stored").get<double>());
    CHECK(rep.at("overlap_mismatch").get<double>() == rep.at("stored_overlap_mismatch").get<double>());
}

TEST_CASE("sweep") {
    const fs::path root = scratch("sweep");
    const json doc = {{"base", {{"command", "check-params"}}}, {"vary", {{"n", {51, 101, 151, 201}}}}};
    const auto runs = expand_sweep(doc, (root / "w1").string(), 1, false);
    REQUIRE(runs.size() == 4);
    CHECK(fs::path(runs[2].output_dir).filename() == "n_151");
    const SweepResult one = sweep(runs, 1);
    const SweepResult many = sweep(expand_sweep(doc, (root / "w3").string(), 1, false), 3);
    CHECK(one.csv == many.csv);
    for (const char* d : {"n_51", "n_201"})
        CHECK(slurp(root / "w1" / d / "params.csv") == slurp(root / "w3" / d / "params.csv"));
    double prev = -1e300;
    for (const auto& r : one.results) {
        CHECK(r.exit_code == exit_ok);
        const double m = r.summary.at("margin_2").get<double>();
        CHECK(m > prev);
        prev = m;
    }

    const json dup = {{"runs", {{{"command", "spectrum"}, {"output_dir", "a"}}, {{"command", "check-params"}, {"n", 7}, {"output_dir", "./a"}}}}};
    CHECK_THROWS_AS(expand_sweep(dup, (root / "dup").string(), 1, false), ConfigError);
    CHECK_FALSE(fs::exists(root / "dup"));
    std::vector<RunConfig> twice = {runs[0], runs[0]};
    CHECK_THROWS_AS(sweep(twice, 2), ConfigError);

    const json nested = {{"base", {{"command", "flow"}, {"flow", {{"tune", false}}}}}, {"vary", {{"flow.dt", {0.002, 0.004}}}}};
    const auto fl = expand_sweep(nested, root.string(), 7, true);
    REQUIRE(fl.size() == 2);
    CHECK(fl[1].body.at("flow").at("dt") == 0.004);
    CHECK(fl[1].seed == 7);
    CHECK_THROWS_AS(expand_sweep(json{{"vary", {{"n", {1}}}}}, root.string(), 1, false), ConfigError);
}

TEST_CASE("command line") {
    const fs::path dir = scratch("cmdline");
    fs::create_directories(dir);
    std::ofstream(dir / "empty.json") << "{}";
    std::ofstream(dir / "spec.json") << R"({"command": "spectrum"})";
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK(call_main({"mcflab"}) == exit_config);
    CHECK(call_main({"mcflab", "spectrum"}) == exit_config);
    CHECK(call_main({"mcflab", "spectrum", "--config", (dir / "empty.json").string(), "--out", (dir / "e").string()}) == exit_config);
    CHECK(call_main({"mcflab", "spectrum", "--config", (dir / "bad.json").string(), "--out", (dir / "b").string()}) == exit_config);
    CHECK(call_main({"mcflab", "flow", "--config", (dir / "spec.json").string(), "--out", (dir / "m").string()}) == exit_config);
    REQUIRE(call_main({"mcflab", "spectrum", "--config", (dir / "spec.json").string(), "--out", (dir / "ok").string(),
                       "--seed", "11", "--workers", "2"}) == exit_ok);
    const json m = load(dir / "ok" / "manifest.json");
    CHECK(m.at("seed") == 11);
    CHECK(m.at("workers") == 2);
}
