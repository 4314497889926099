#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "kamforge/cli.hpp"
#include "kamforge/config.hpp"

using namespace kamforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path source_dir = KAMFORGE_SOURCE_DIR;
const fs::path configs = source_dir / "configs";

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("kamforge_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int cli(const std::string& args, const std::string& env = "") {
    std::string cmd = env + (env.empty() ? "" : " ") + "\"" + std::string(KAMFORGE_CLI_PATH) + "\" " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

std::string parse_error(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const kam_error& e) {
        EXPECT_EQ(e.kind(), failure::config);
        return e.what();
    }
    ADD_FAILURE() << "no error for:\n" << text;
    return {};
}

// Subset of JSON Schema: type, enum, required, properties, items.
void check_schema(const json& v, const json& s, const std::string& where) {
    if (s.contains("type")) {
        const std::string t = s["type"];
        bool ok = (t == "object" && v.is_object()) || (t == "array" && v.is_array()) || (t == "string" && v.is_string()) ||
                  (t == "boolean" && v.is_boolean()) || (t == "integer" && v.is_number_integer()) || (t == "number" && v.is_number());
        ASSERT_TRUE(ok) << where << " is not " << t;
    }
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found = found || e == v;
        EXPECT_TRUE(found) << where << " = " << v.dump();
    }
    if (s.contains("required"))
        for (const auto& k : s["required"]) EXPECT_TRUE(v.contains(k.get<std::string>())) << where << " lacks " << k;
    if (s.contains("properties"))
        for (const auto& [k, sub] : s["properties"].items())
            if (v.contains(k)) check_schema(v[k], sub, where + "." + k);
    if (s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) check_schema(v[i], s["items"], where + "[" + std::to_string(i) + "]");
}

}  // namespace

TEST(ParseConfig, MinimalConfigGetsDefaults) {
    auto c = parse_config(configs / "minimal.cfg");
    EXPECT_EQ(c.schema_version, 1);
    EXPECT_EQ(c.command, "run");
    EXPECT_EQ(c.problem, "lattice");
    EXPECT_EQ(c.epsilon, 0.0);
    EXPECT_EQ(c.nu_max, 3);
    EXPECT_EQ(c.tau, 4.0);
    EXPECT_EQ(c.policy, "halt");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.lattice.alpha_normal, (std::vector<double>{16, 25, 36}));
    EXPECT_EQ(c.lattice.beta, (std::vector<double>{1}));
    EXPECT_EQ(c.K_ladder, (std::vector<int>{1, 2, 4, 8, 16, 32}));
}

TEST(ParseConfig, ShippedLatticeConfigMatchesGolden) {
    auto c = parse_config(configs / "lattice.cfg");
    std::ostringstream os;
    write_config(os, c);
    EXPECT_EQ(os.str(), slurp(source_dir / "tests" / "golden" / "lattice_cfg.txt"));
}

TEST(ParseConfig, EveryShippedConfigParses) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(configs))
        if (e.path().extension() == ".cfg") {
            EXPECT_NO_THROW(parse_config(e.path())) << e.path();
            ++n;
        }
    EXPECT_GE(n, 6);
}

TEST(ParseConfig, UnknownKeyIsNamed) {
    auto msg = parse_error("schema_version = 1\nepsilon = 0\nepsilom = 1\n");
    EXPECT_NE(msg.find("unknown key 'epsilom'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(ParseConfig, MalformedLineReportsLineNumber) {
    auto msg = parse_error("schema_version = 1\n# comment\n\nepsilon 0.1\n");
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
}

TEST(ParseConfig, InvalidFieldIsNamed) {
    EXPECT_NE(parse_error("schema_version = 1\nepsilon = -1\n").find("'epsilon'"), std::string::npos);
    EXPECT_NE(parse_error("schema_version = 1\nnu_max = -2\n").find("'nu_max'"), std::string::npos);
    EXPECT_NE(parse_error("schema_version = 1\ntau = fast\n").find("'tau'"), std::string::npos);
    EXPECT_NE(parse_error("schema_version = 1\npolicy = maybe\n").find("'policy'"), std::string::npos);
    EXPECT_NE(parse_error("schema_version = 1\nepsilon = 1e-3x\n").find("line 2"), std::string::npos);
}

TEST(ParseConfig, SchemaVersionIsMandatory) {
    EXPECT_NE(parse_error("epsilon = 0\n").find("schema_version"), std::string::npos);
    EXPECT_NE(parse_error("schema_version = 2\n").find("schema_version"), std::string::npos);
}

TEST(ParseConfig, DuplicateKeyIsRejected) {
    EXPECT_NE(parse_error("schema_version = 1\nepsilon = 0\nepsilon = 1\n").find("duplicate key 'epsilon'"), std::string::npos);
}

TEST(ParseConfig, MissingNormalFormFileIsRejected) {
    auto dir = scratch("missing_nf");
    auto p = write_config(dir, "schema_version = 1\nproblem = normal_form\nnormal_form_file = nowhere.nf\n");
    try {
        parse_config(p);
        FAIL();
    } catch (const kam_error& e) {
        EXPECT_NE(std::string(e.what()).find("'normal_form_file'"), std::string::npos);
    }
}

TEST(ParseConfig, LatticeLengthsAreChecked) {
    EXPECT_NE(parse_error("schema_version = 1\nalpha = 1, 2, 3\n").find("lengths"), std::string::npos);
}

TEST(NormalFormFile, ReadsBlocksAndScalesP) {
    auto p = read_normal_form_file(configs / "quartic.nf", 1e-3);
    EXPECT_EQ(p.N.d.n, 2);
    EXPECT_EQ(p.N.d.b, 1);
    EXPECT_EQ(p.N.d.J, 1);
    EXPECT_EQ(p.N.Omega, std::vector<double>{16.5});
    EXPECT_EQ(p.N.g.size(), 2u);
    EXPECT_EQ(p.P.size(), 4u);
    const dims& d = p.N.d;
    EXPECT_DOUBLE_EQ(p.P.coeff(make_mono(d, {1, 0})).real(), 0.5e-3);
    EXPECT_EQ(p.w_sites, std::vector<int>{4});
    EXPECT_EQ(p.z_sites, std::vector<int>{3});
}

TEST(Cli, ZeroEpsilonRunIsTrivial) {
    auto out = scratch("trivial");
    EXPECT_EQ(cli("--config \"" + (configs / "minimal.cfg").string() + "\" --out \"" + out.string() + "\""), exit_code::ok);
    auto rep = json::parse(slurp(out / "report.json"));
    EXPECT_EQ(rep["status"], "trivial");
    EXPECT_EQ(rep["exit_code"], 0);
    EXPECT_TRUE(rep["steps"].empty());
    EXPECT_TRUE(fs::exists(out / "summary.txt"));
    EXPECT_TRUE(fs::exists(out / "steps.csv"));
}

TEST(Cli, ResonantFrequencyExitsWithResonanceCode) {
    auto out = scratch("resonant");
    EXPECT_EQ(cli("--config \"" + (configs / "resonant.cfg").string() + "\" --out \"" + out.string() + "\""), exit_code::resonance);
    auto rep = json::parse(slurp(out / "report.json"));
    EXPECT_EQ(rep["status"], "resonance");
    EXPECT_EQ(rep["exit_code"], 2);
}

TEST(Cli, MissingEquilibriumExitsWithEquilibriumCode) {
    auto out = scratch("no_eq");
    EXPECT_EQ(cli("--config \"" + (configs / "no_equilibrium.cfg").string() + "\" --out \"" + out.string() + "\""),
              exit_code::equilibrium);
}

TEST(Cli, FailedHypothesesExitWithHypothesisCode) {
    auto dir = scratch("hyp");
    fs::copy_file(configs / "quartic.nf", dir / "quartic.nf");
    auto p = write_config(dir, "schema_version = 1\nproblem = normal_form\nnormal_form_file = quartic.nf\nepsilon = 1e-8\n"
                               "nu_max = 1\npolicy = halt\n");
    EXPECT_EQ(cli("--config \"" + p.string() + "\" --out \"" + (dir / "out").string() + "\""), exit_code::hypothesis);
}

TEST(Cli, OversizedPerturbationExitsWithSmallnessCode) {
    auto dir = scratch("small");
    auto p = write_config(dir, "schema_version = 1\nepsilon = 1e-6\npolicy = halt\n");
    EXPECT_EQ(cli("--config \"" + p.string() + "\" --out \"" + (dir / "out").string() + "\""), exit_code::smallness);
    auto rep = json::parse(slurp(dir / "out" / "report.json"));
    EXPECT_EQ(rep["status"], "smallness");
    EXPECT_GT(rep["norm_P0"].get<double>(), rep["bound_P0"].get<double>());
}

TEST(Cli, ConfigErrorsExitWithUsageCode) {
    auto dir = scratch("bad");
    auto p = write_config(dir, "schema_version = 1\nepsilom = 1\n");
    EXPECT_EQ(cli("--config \"" + p.string() + "\""), exit_code::usage);
    EXPECT_EQ(cli("run"), exit_code::usage);
    EXPECT_EQ(cli("--bogus-flag"), exit_code::usage);
    EXPECT_EQ(cli("--config \"" + (dir / "absent.cfg").string() + "\""), exit_code::io);
}

TEST(Cli, UnwritableOutputExitsWithIoCode) {
    auto dir = scratch("io");
    std::ofstream(dir / "blocker") << "x";
    EXPECT_EQ(cli("--config \"" + (configs / "minimal.cfg").string() + "\" --out \"" + (dir / "blocker" / "sub").string() + "\""),
              exit_code::io);
}

TEST(Cli, ExitCodesAreDistinct) {
    std::vector<int> codes;
    for (failure f : {failure::config, failure::resonance, failure::hypothesis, failure::equilibrium, failure::smallness, failure::solver,
                      failure::step_failed, failure::divergence, failure::io, failure::blow_up, failure::strip_exhausted,
                      failure::ill_posed_boundary, failure::unsupported, failure::structural})
        codes.push_back(exit_code_for(f));
    codes.push_back(exit_code::selftest_failed);
    codes.push_back(exit_code::internal);
    auto sorted = codes;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    EXPECT_EQ(exit_code_for(failure::resonance), 2);
    EXPECT_EQ(exit_code_for(failure::hypothesis), 3);
    EXPECT_EQ(exit_code_for(failure::equilibrium), 4);
    EXPECT_EQ(exit_code_for(failure::smallness), 5);
    EXPECT_EQ(exit_code_for(failure::domain), exit_code::usage);
}

TEST(Cli, SelftestPasses) {
    auto out = scratch("selftest");
    EXPECT_EQ(cli("selftest --out \"" + out.string() + "\""), exit_code::ok);
    auto rep = json::parse(slurp(out / "report.json"));
    EXPECT_EQ(rep["status"], "ok");
    for (const auto& c : rep["checks"]) EXPECT_TRUE(c["pass"].get<bool>()) << c.dump();
}

TEST(Cli, MeasureCsvIsReproducible) {
    auto dir = scratch("measure");
    auto p = write_config(dir, "schema_version = 1\ncommand = measure\nxi_samples = 2000\nK_ladder = 1, 2, 4, 8\n");
    const std::string a = (dir / "a").string(), b = (dir / "b").string(), c = (dir / "c").string(), e = (dir / "e").string();
    ASSERT_EQ(cli("--config \"" + p.string() + "\" --seed 7 --out \"" + a + "\""), 0);
    ASSERT_EQ(cli("--config \"" + p.string() + "\" --seed 7 --out \"" + b + "\"", "KAMFORGE_THREADS=1"), 0);
    ASSERT_EQ(cli("--config \"" + p.string() + "\" --seed 8 --out \"" + c + "\""), 0);
    ASSERT_EQ(cli("--config \"" + p.string() + "\" --seed 7 --out \"" + e + "\"", "KAMFORGE_THREADS=3"), 0);
    for (const char* f : {"measure.csv", "shells.csv"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "e" / f)) << f;
    }
    EXPECT_NE(slurp(dir / "a" / "measure.csv"), slurp(dir / "c" / "measure.csv"));
    auto rep = json::parse(slurp(dir / "a" / "report.json"));
    EXPECT_EQ(rep["seed"], 7);
    EXPECT_EQ(rep["fractions"].size(), 3u);
}

TEST(Cli, CounterexampleAndLatticeCsvAreReproducible) {
    auto dir = scratch("repro");
    for (const char* name : {"counterexample.cfg", "integrate.cfg"}) {
        const std::string cfg = (configs / name).string();
        ASSERT_EQ(cli("--quiet --config \"" + cfg + "\" --out \"" + (dir / "a").string() + "\""), 0) << name;
        ASSERT_EQ(cli("--quiet --config \"" + cfg + "\" --out \"" + (dir / "b").string() + "\""), 0) << name;
    }
    EXPECT_EQ(slurp(dir / "a" / "oscillation.csv"), slurp(dir / "b" / "oscillation.csv"));
    EXPECT_EQ(slurp(dir / "a" / "trajectory.csv"), slurp(dir / "b" / "trajectory.csv"));
    EXPECT_EQ(slurp(dir / "a" / "oscillation.csv").substr(0, 24), "epsilon,equilibrium,sign");
}

TEST(Cli, MaxStepsOverridesConfig) {
    auto dir = scratch("max_steps");
    ASSERT_EQ(cli("--config \"" + (configs / "normal_form.cfg").string() + "\" --max-steps 0 --out \"" + dir.string() + "\""), 0);
    auto rep = json::parse(slurp(dir / "report.json"));
    EXPECT_TRUE(rep["steps"].empty());
    EXPECT_EQ(rep["config"]["nu_max"], "0");
}

TEST(Cli, ThreeStepLatticeRunMatchesReportSchema) {
    auto dir = scratch("lattice");
    ASSERT_EQ(cli("--quiet --config \"" + (configs / "lattice.cfg").string() + "\" --out \"" + dir.string() + "\""), 0);
    auto rep = json::parse(slurp(dir / "report.json"));
    auto schema = json::parse(slurp(source_dir / "schemas" / "run_report.schema.json"));
    check_schema(rep, schema, "report");
    EXPECT_EQ(rep["steps"].size(), 3u);
    EXPECT_TRUE(rep.contains("torus"));
    check_schema(rep["torus"], schema["properties"]["torus"], "report.torus");
    std::istringstream csv(slurp(dir / "steps.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 3);
}
