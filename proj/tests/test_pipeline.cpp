#include "closeness/error.hpp"
#include "closeness/pipeline.hpp"
#include "closeness/trajectory_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace closeness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_henon() {
  return json::parse(R"({
    "run_id": "t", "seed": 5,
    "system": {"kind": "HenonHenon", "n_samples": 600, "n_transient": 100},
    "analysis": {
      "coupling_grid": [0.0, 0.4],
      "n_pairs": 300,
      "heuristics": {"k": 4, "library_sizes": [50, 200], "ccm_replicates": 2, "n_probes": 50},
      "certificate": {"enabled": true, "n_pairs": 500, "assumption1_pairs": 500}
    }
  })");
}

std::string config_error_path(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("closeness_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config defaults follow the system") {
  const auto cfg = parse_config(small_henon());
  CHECK(cfg.embedding.m == 4);
  CHECK(cfg.analysis.maps.size() == 10);
  json rl = small_henon();
  rl["system"]["kind"] = "RosslerLorenz";
  rl["system"]["n_samples"] = 2000;
  rl["analysis"]["heuristics"]["library_sizes"] = {100};
  const auto c2 = parse_config(rl);
  CHECK(c2.embedding.m == 6);
  CHECK(c2.embedding.tau == 8);
  CHECK(c2.embedding.theiler_window == 10);
  CHECK(c2.embedding.x_coordinate == 1);
}

TEST_CASE("config errors name the offending field") {
  json j = small_henon();
  j["system"]["kind"] = "Lorenz96";
  CHECK(config_error_path(j) == "system.kind");
  j = small_henon();
  j["system"]["n_sample"] = 10;
  CHECK(config_error_path(j) == "system.n_sample");
  j = small_henon();
  j["analysis"]["coupling_grid"] = {0.1, -1.0};
  CHECK(config_error_path(j) == "analysis.coupling_grid[1]");
  j = small_henon();
  j["analysis"]["heuristics"]["library_sizes"] = {5000};
  CHECK(config_error_path(j) == "analysis.heuristics.library_sizes[0]");
  j = small_henon();
  j["analysis"]["maps"] = {"PiX", "Pi"};
  CHECK(config_error_path(j) == "analysis.maps[1]");
  j = small_henon();
  j["seed"] = -3;
  CHECK(config_error_path(j) == "seed");
  j = small_henon();
  j["embedding"] = {{"m", 700}};
  CHECK(config_error_path(j) == "embedding.m");
  j = small_henon();
  j.erase("system");
  CHECK(config_error_path(j) == "system");
  j = small_henon();
  j["analysis"]["heuristics"]["ccm_metric"] = "mae";
  CHECK(config_error_path(j) == "analysis.heuristics.ccm_metric");
  j = small_henon();
  j["output"] = {{"format", "xml"}};
  CHECK(config_error_path(j) == "output.format");
}

TEST_CASE("normalised config parses back to itself") {
  const auto cfg = parse_config(small_henon());
  const auto once = config_to_json(cfg);
  const auto twice = config_to_json(parse_config(json::parse(once.dump())));
  CHECK(once.dump() == twice.dump());
}

TEST_CASE("cell seeds are distinct and stable") {
  const auto a = cell_seeds(1, 0), b = cell_seeds(1, 1);
  CHECK(a.ccm != b.ccm);
  CHECK(a.ccm != a.pecora);
  CHECK(a.certificate != a.assumption1);
  CHECK(cell_seeds(1, 0).certificate == a.certificate);
}

TEST_CASE("trajectory cache round-trips exactly") {
  SimulationSpec s;
  s.n_samples = 50;
  const auto t = simulate(s, 0.3, 4).trajectory;
  const auto dir = scratch_dir("cache");
  fs::create_directories(dir);
  write_trajectory_cache(dir / "traj.bin", t);
  const auto back = read_trajectory_cache(dir / "traj.bin");
  CHECK(back.samples == t.samples);
  CHECK(back.n_x == 2);
  CHECK(back.transient_discarded == t.transient_discarded);
  std::ostringstream os;
  write_trajectory_csv(os, t);
  CHECK(os.str().rfind("t,x1,x2,x3,x4\n1001,", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("sweep command writes deterministic tables and a manifest") {
  auto cfg = parse_config(small_henon());
  std::ostringstream log;
  const auto d1 = scratch_dir("sweep1"), d2 = scratch_dir("sweep2");
  cfg.out_dir = d1;
  REQUIRE(run_command("sweep", cfg, log) == 0);
  cfg.out_dir = d2;
  cfg.jobs = 2;
  REQUIRE(run_command("sweep", cfg, log) == 0);
  for (const char* f : {"isometry.csv", "heuristics.csv", "verdicts.json"}) {
    REQUIRE(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  const auto manifest = json::parse(slurp(d1 / "manifest.json"));
  CHECK(manifest["command"] == "sweep");
  CHECK(manifest["cells"].size() == 2);
  const auto iso = slurp(d1 / "isometry.csv");
  CHECK(iso.rfind("run_id,system,C,map,stat,value\n", 0) == 0);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("failed cells make the command exit 1 but keep the others") {
  auto cfg = parse_config(small_henon());
  cfg.analysis.coupling_grid = {0.2, 50.0};
  cfg.analysis.heuristics.enabled = false;
  cfg.analysis.certificate.enabled = false;
  const auto dir = scratch_dir("partial");
  cfg.out_dir = dir;
  std::ostringstream log;
  CHECK(run_command("isometry", cfg, log) == 1);
  const auto iso = slurp(dir / "isometry.csv");
  CHECK(iso.find(",0.2,PiX,") != std::string::npos);
  CHECK(iso.find(",50,") == std::string::npos);
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["cells"][1]["status"] != "ok");
  fs::remove_all(dir);
}

TEST_CASE("unknown subcommand is a runtime failure") {
  const auto cfg = parse_config(small_henon());
  std::ostringstream log;
  CHECK(run_command("plot", cfg, log) != 0);
}
