#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "io.hpp"
#include "sccv/errors.hpp"

using namespace sccv;
using namespace sccv::cli;
namespace fs = std::filesystem;

namespace {

const fs::path scenarios = SCCV_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sccv_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

nlohmann::json load(const fs::path& p) {
  std::ifstream f(p);
  return nlohmann::json::parse(f);
}

int run_cli(std::vector<std::string> args, std::string* summary = nullptr) {
  args.insert(args.begin(), "sccv");
  std::ostringstream s;
  const int rc = run(args, s);
  if (summary) *summary = s.str();
  return rc;
}

nlohmann::json s1() { return load(scenarios / "S1.json"); }

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-20) == "-2.4999999999999999e-20");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  nlohmann::ordered_json j{{"a", 0.1}, {"b", nlohmann::ordered_json::array({1, 2.5})}, {"c", INFINITY}};
  CHECK(dump_json(j, 0) == R"({"a":0.10000000000000001,"b":[1,2.5],"c":null})");
}

TEST_CASE("csv round trip is exact") {
  const fs::path dir = scratch("csv");
  CsvTable t;
  t.header = {"t", "x1"};
  t.rows = {{0.0, 1.0 / 3.0}, {0.1, -std::exp(1.0)}};
  write_csv((dir / "a.csv").string(), t);
  const CsvTable r = read_csv((dir / "a.csv").string());
  CHECK(r.header == t.header);
  CHECK(r.rows == t.rows);
  std::ofstream(dir / "bad.csv") << "t,x1\n0,abc\n";
  CHECK_THROWS_AS(read_csv((dir / "bad.csv").string()), Error);
  std::ofstream(dir / "short.csv") << "t,x1\n0\n";
  CHECK_THROWS_AS(read_csv((dir / "short.csv").string()), Error);
}

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(s1());
  CHECK(cfg.domain->dim() == 2);
  CHECK(cfg.N == 1024);
  CHECK(cfg.problem.M == 9.0);
  CHECK(cfg.x0->norm() == 0.0);
  CHECK(!cfg.mfg);

  const RunConfig s4 = load_config((scenarios / "S4.json").string());
  REQUIRE(s4.mfg);
  CHECK(s4.mfg->m0.size() == 8);
  CHECK(s4.mfg->options.alpha == 0.5);

  auto expect_code = [](const nlohmann::json& j, ErrorCode code, const std::string& key) {
    try {
      parse_config(j);
      FAIL("accepted an invalid config");
    } catch (const Error& e) {
      CHECK(e.code() == code);
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  auto j = s1();
  j.erase("domain");
  expect_code(j, ErrorCode::InvalidConfig, "domain");
  j = s1();
  j["domain"]["shape"] = "torus";
  expect_code(j, ErrorCode::InvalidConfig, "domain.shape");
  j = s1();
  j["x0"] = {2.0, 0.0};
  expect_code(j, ErrorCode::InvalidConfig, "x0");
  j = s1();
  j["problem"]["lagrangian"]["potentials"][0]["a"] = {1.0};
  expect_code(j, ErrorCode::InvalidConfig, "potentials[0].a");
  j = s1();
  j["problem"]["mu"] = 0.5;
  expect_code(j, ErrorCode::InvalidProblem, "mu >= 1");
  j = load((scenarios / "S4.json"));
  j["mfg"]["m0"][0]["w"] = 0.5;
  expect_code(j, ErrorCode::InvalidConfig, "mfg.m0");
  j = load((scenarios / "S4.json"));
  j["mfg"]["alpha"] = 1.5;
  expect_code(j, ErrorCode::InvalidConfig, "mfg.alpha");
}

TEST_CASE("solve on S1 writes the trajectory and a passing report") {
  const fs::path out = scratch("solve");
  std::string summary;
  CHECK(run_cli({"solve", "--config", (scenarios / "S1.json").string(), "--out", out.string()}, &summary) == 0);
  CHECK(summary.find("pmp pass") != std::string::npos);
  const CsvTable t = read_csv((out / "trajectory.csv").string());
  CHECK(t.header == std::vector<std::string>{"t", "x1", "x2", "v1", "v2", "d"});
  CHECK(t.rows.size() == 1025);
  CHECK(t.rows.back()[0] == 1.0);
  for (const auto& row : t.rows) CHECK(row[5] <= 1e-6);
  const auto j = load(out / "solve.json");
  CHECK(j["pmp"]["passed"] == true);
  CHECK(j["energy"]["pass"] == true);
  CHECK(j["holder"]["pass"] == true);
}

TEST_CASE("trajectory CSV re-ingests into pmp-check without loss") {
  const fs::path out = scratch("roundtrip");
  const std::string cfg = (scenarios / "S3.json").string();
  REQUIRE(run_cli({"solve", "--config", cfg, "--out", out.string()}) == 0);
  REQUIRE(run_cli({"pmp-check", "--config", cfg, "--out", out.string()}) == 0);
  const auto solved = load(out / "solve.json");
  const auto checked = load(out / "pmp.json");
  CHECK(checked["N"] == 1024);
  CHECK(solved["pmp"] == checked["pmp"]);
  CHECK(solved["extremal"] == checked["extremal"]);
  // Knots read back bit for bit.
  const CsvTable a = read_csv((out / "trajectory.csv").string());
  const CsvTable b = read_csv((out / "extremal.csv").string());
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k)
    for (int c = 0; c < 3; ++c) CHECK(a.rows[k][c] == b.rows[k][c]);
}

TEST_CASE("pmp-check rejects a trajectory that leaves the set") {
  const fs::path out = scratch("leave");
  const std::string cfg = (scenarios / "S1.json").string();
  std::ofstream traj(out / "trajectory.csv");
  traj << "t,x1,x2\n";
  for (int k = 0; k <= 16; ++k) traj << k / 16.0 << "," << 1.5 * k / 16.0 << ",0\n";
  traj.close();
  std::ofstream(out / "solve.json") << R"({"epsilon": 0.25, "delta": 1})";
  CHECK(run_cli({"pmp-check", "--config", cfg, "--out", out.string()}) != 0);
}

TEST_CASE("mu below 1 is a validation failure") {
  const fs::path out = scratch("mu");
  auto j = s1();
  j["problem"]["mu"] = 0.5;
  std::string summary;
  CHECK(run_cli({"solve", "--config", write_config(out, j).string(), "--out", out.string()}, &summary) == 1);
  CHECK(summary.find("mu >= 1 is required") != std::string::npos);
  CHECK(!fs::exists(out / "trajectory.csv"));
}

TEST_CASE("usage errors") {
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"solve"}) == 1);
  CHECK(run_cli({"solve", "--config", "/nonexistent.json"}) == 1);
  CHECK(run_cli({"solve", "--config", (scenarios / "S1.json").string(), "--grid-n", "2"}) == 1);
  const fs::path out = scratch("usage");
  std::ofstream(out / "broken.json") << "{ not json";
  CHECK(run_cli({"solve", "--config", (out / "broken.json").string(), "--out", out.string()}) == 1);
  // S4 has no start point.
  CHECK(run_cli({"solve", "--config", (scenarios / "S4.json").string(), "--out", out.string()}) == 1);
  CHECK(run_cli({"mfg", "--config", (scenarios / "S1.json").string(), "--out", out.string()}) == 1);
}

TEST_CASE("geometry-test and assumptions on the unit ball") {
  const fs::path out = scratch("geometry");
  const std::string cfg = (scenarios / "S1.json").string();
  CHECK(run_cli({"geometry-test", "--config", cfg, "--out", out.string()}) == 0);
  const auto g = load(out / "geometry.json");
  CHECK(g["passed"] == true);
  CHECK(g["samples"] == 10000);
  CHECK(g["subdiff_mismatches"] == 0);
  CHECK(run_cli({"assumptions", "--config", cfg, "--out", out.string()}) == 0);
  CHECK(load(out / "assumptions.json")["passed"] == true);
}

TEST_CASE("value on S2 reports the closed-form constants") {
  const fs::path out = scratch("value");
  auto j = load(scenarios / "S2.json");
  j["value"] = {{"times", 3}, {"per_axis", 6}, {"N", 32}, {"dpp_samples", 4}};
  CHECK(run_cli({"value", "--config", write_config(out, j).string(), "--out", out.string()}) == 0);
  const auto v = load(out / "value.json");
  CHECK(v["lipschitz"]["Lx"].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(v["lipschitz"]["Lt"].get<double>() == doctest::Approx(0.125).epsilon(1e-9));
  CHECK(v["refinement"]["sup_gap"].get<double>() <= 1e-12);
  const CsvTable t = read_csv((out / "value.csv").string());
  CHECK(t.header == std::vector<std::string>{"t", "x1", "x2", "u"});
  // Closed form wherever the free arc x + (1 - t) (0.5, 0) stays in the disk.
  int closed = 0;
  for (const auto& row : t.rows) {
    if (std::hypot(row[1] + 0.5 * (1.0 - row[0]), row[2]) > 1.0) continue;
    CHECK(row[3] == doctest::Approx(-0.5 * row[1] - 0.125 * (1.0 - row[0])).epsilon(1e-9));
    ++closed;
  }
  CHECK(closed > 20);
}

TEST_CASE("mfg outputs and the no-convergence exit code") {
  const fs::path out = scratch("mfg");
  auto j = load(scenarios / "S4.json");
  j["mfg"]["N"] = 32;
  j["mfg"]["value"] = {{"times", 2}, {"per_axis", 4}, {"N", 32}, {"refinement", false}};
  const std::string cfg = write_config(out, j).string();
  CHECK(run_cli({"mfg", "--config", cfg, "--out", out.string()}) == 0);
  const auto m = load(out / "mfg.json");
  CHECK(m["converged"] == true);
  CHECK(m["residual"].get<double>() <= 1e-3);
  CHECK(m["lip_m"].get<double>() <= m["lip_m_bound"].get<double>());
  const CsvTable flow = read_csv((out / "flow.csv").string());
  CHECK(flow.header == std::vector<std::string>{"t", "atom", "x1", "x2", "weight"});
  CHECK(flow.rows.size() == 33 * 8);
  const CsvTable res = read_csv((out / "residuals.csv").string());
  CHECK(static_cast<int>(res.rows.size()) == m["iterations"].get<int>());
  CHECK(fs::exists(out / "mild_value.csv"));

  j["mfg"]["max_iter"] = 2;
  const fs::path out2 = scratch("mfg_fail");
  CHECK(run_cli({"mfg", "--config", write_config(out2, j).string(), "--out", out2.string()}) == 2);
  CHECK(read_csv((out2 / "residuals.csv").string()).rows.size() == 2);
  CHECK(load(out2 / "mfg.json")["converged"] == false);
}

TEST_CASE("repeated runs are byte identical") {
  const std::string cfg = (scenarios / "S2.json").string();
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(run_cli({"solve", "--config", cfg, "--out", a.string(), "--threads", "1"}) == 0);
  REQUIRE(run_cli({"solve", "--config", cfg, "--out", b.string(), "--threads", "4"}) == 0);
  CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
  CHECK(slurp(a / "solve.json") == slurp(b / "solve.json"));
  REQUIRE(run_cli({"geometry-test", "--config", cfg, "--out", a.string(), "--seed", "7"}) == 0);
  REQUIRE(run_cli({"geometry-test", "--config", cfg, "--out", b.string(), "--seed", "7"}) == 0);
  CHECK(slurp(a / "geometry.json") == slurp(b / "geometry.json"));
}
