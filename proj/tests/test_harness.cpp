#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "qf/harness.hpp"

using namespace qf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("qf_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("experiment defaults") {
  auto fig = harness::default_config("fig2");
  CHECK(fig.experiment == "fig2");
  CHECK(fig.trajectories == 200);
  CHECK(fig.measure == sde::Measure::kP);
  CHECK(fig.eta == 0.5);
  CHECK(fig.steps == 4096);
  CHECK(fig.seed == 20260814);

  auto bound = harness::default_config("bound");
  CHECK(bound.trajectories == 1000);
  CHECK(bound.measure == sde::Measure::kPprime);

  auto exact = harness::default_config("exact");
  CHECK(exact.trajectories == 32);
}

TEST_CASE("config json round trip") {
  auto c = harness::default_config("fig3");
  c.eta = 0.7;
  c.seed = 12345;
  c.gains.alpha = 3.5;
  c.output_dir = "elsewhere";
  auto back = harness::config_from_json(harness::config_to_json(c));
  CHECK(back.experiment == "fig3");
  CHECK(back.eta == 0.7);
  CHECK(back.seed == 12345);
  CHECK(back.gains.alpha == 3.5);
  CHECK(back.output_dir == "elsewhere");
  CHECK(back.steps == c.steps);
}

TEST_CASE("config validation collects every issue") {
  json j;
  j["experiment"] = "fig1";
  j["eta"] = 3.0;
  j["steps"] = 0;
  try {
    harness::config_from_json(j);
    FAIL("expected a ConfigError");
  } catch (const harness::ConfigError& e) {
    REQUIRE(e.issues.size() >= 2);
    bool eta_seen = false, steps_seen = false;
    for (const auto& s : e.issues) {
      if (s.find("detector efficiency out of range") != std::string::npos) {
        eta_seen = true;
      }
      if (s.find("steps") != std::string::npos) steps_seen = true;
    }
    CHECK(eta_seen);
    CHECK(steps_seen);
  }
}

TEST_CASE("unknown keys are rejected") {
  json j;
  j["experiment"] = "fig1";
  j["bogus_knob"] = 1;
  CHECK_THROWS_AS(harness::config_from_json(j), harness::ConfigError);

  json g;
  g["experiment"] = "fig1";
  g["gains"]["alpha"] = 2.0;
  g["gains"]["delta"] = 1.0;
  CHECK_THROWS_AS(harness::config_from_json(g), harness::ConfigError);
}

TEST_CASE("fig experiments reject an explicit model") {
  json j;
  j["experiment"] = "fig1";
  j["H"] = core::matrix_to_json(0.5 * core::pauli_z());
  try {
    harness::config_from_json(j);
    FAIL("expected a ConfigError");
  } catch (const harness::ConfigError& e) {
    bool seen = false;
    for (const auto& s : e.issues) {
      if (s.find("fig experiments take") != std::string::npos) seen = true;
    }
    CHECK(seen);
  }
}

TEST_CASE("explicit models flow into the exact experiment") {
  json j;
  j["experiment"] = "exact";
  j["H"] = core::matrix_to_json(0.5 * core::pauli_z());
  j["L"] = core::matrix_to_json(0.25 * core::pauli_z());
  j["eta"] = 0.8;
  auto c = harness::config_from_json(j);
  CHECK(c.explicit_model());
  auto m = c.model();
  CHECK((m.L - 0.25 * core::pauli_z()).norm() < 1e-14);
  CHECK(m.eta == 0.8);
}

TEST_CASE("config file loading") {
  TempDir tmp("cfg");
  fs::path p = tmp.path / "run.json";
  {
    std::ofstream out(p);
    out << R"({"experiment": "fig1", "trajectories": 7, "seed": 99})";
  }
  auto c = harness::load_config(p.string());
  CHECK(c.experiment == "fig1");
  CHECK(c.trajectories == 7);
  CHECK(c.seed == 99);

  CHECK_THROWS_AS(harness::load_config((tmp.path / "absent.json").string()),
                  harness::ConfigError);
  {
    std::ofstream out(tmp.path / "broken.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(harness::load_config((tmp.path / "broken.json").string()),
                  harness::ConfigError);
}

TEST_CASE("cli overrides") {
  auto c = harness::default_config("fig1");
  harness::CliOverrides o;
  o.eta = 0.9;
  o.trajectories = 11;
  o.out = "custom";
  harness::apply_overrides(c, o);
  CHECK(c.eta == 0.9);
  CHECK(c.trajectories == 11);
  CHECK(c.output_dir == "custom");
  CHECK(c.M == 1.0);  // untouched fields keep their values
}

TEST_CASE("double formatting round trips") {
  for (double v : {0.1, 3.141592653589793, 1e300, 2.2250738585072014e-308,
                   -2.5, 0.0}) {
    CHECK(std::stod(harness::format_double(v)) == v);
  }
}

TEST_CASE("atomic csv writing") {
  TempDir tmp("csv");
  fs::path p = tmp.path / "data.csv";
  harness::write_csv_atomic(p, {"a", "b"}, {{1.0, 2.0}, {3.0, 0.25}});
  auto lines = read_lines(p);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a,b");
  CHECK(lines[1] == "1,2");
  CHECK(lines[2] == "3,0.25");
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));

  CHECK_THROWS(harness::write_csv_atomic(p, {"a", "b"}, {{1.0}}));
}

TEST_CASE("trajectory and chart csv output") {
  TempDir tmp("traj");
  sde::ModelSpec m;
  m.H = 0.5 * core::pauli_z();
  m.L = 0.5 * core::pauli_z();
  m.eta = 0.5;
  core::Matrix rho0 = 0.5 * (core::identity(2) - core::pauli_x());
  sde::SdeGrid grid;
  grid.t_final = 0.25;
  grid.n_steps = 16;
  grid.seed = 3;
  auto rec = sde::simulate_filter(m, rho0, grid);

  fs::path p = tmp.path / "traj.csv";
  harness::write_trajectory_csv(p, rec);
  auto lines = read_lines(p);
  REQUIRE(lines.size() == 18);  // header + 17 grid points
  CHECK(lines[0] == "t,dW,dY,Y");

  auto c0 = exact::make_chart(m, rho0);
  auto charts = exact::propagate_exact(c0, m, rec);
  fs::path q = tmp.path / "phi.csv";
  harness::write_phi_csv(q, charts);
  auto phi_lines = read_lines(q);
  REQUIRE(phi_lines.size() == 18);
  CHECK(phi_lines[0].substr(0, 2) == "t,");
}

TEST_CASE("run_experiment writes a manifest and data files") {
  TempDir tmp("run");
  auto cfg = harness::default_config("exact");
  cfg.t_final = 0.5;
  cfg.steps = 64;
  cfg.trajectories = 4;
  cfg.threads = 1;
  cfg.output_dir = (tmp.path / "out").string();

  auto res = harness::run_experiment(cfg);
  CHECK(res.output_dir == fs::path(cfg.output_dir));
  CHECK_FALSE(res.files.empty());
  for (const auto& f : res.files) {
    CHECK(fs::exists(res.output_dir / f));
  }
  CHECK_FALSE(fs::exists(res.output_dir / ".partial"));

  std::ifstream in(res.output_dir / "manifest.json");
  REQUIRE(in.good());
  json manifest = json::parse(in);
  CHECK(manifest["experiment"] == "exact");
  CHECK(manifest["version"] == harness::kVersion);
  CHECK(manifest.contains("config"));
  CHECK(manifest.contains("seed_rule"));
  CHECK(manifest.contains("summary"));
  CHECK(manifest.contains("wall_time_seconds"));
  // the manifest lists the data files; res.files additionally names the
  // manifest itself
  CHECK(manifest["files"].size() + 1 == res.files.size());

  // the recorded config reproduces the run configuration
  auto back = harness::config_from_json(manifest["config"]);
  CHECK(back.seed == cfg.seed);
  CHECK(back.steps == 64);
}

TEST_CASE("invalid configs never reach the filesystem") {
  TempDir tmp("bad");
  auto cfg = harness::default_config("fig1");
  cfg.eta = 7.0;
  cfg.output_dir = (tmp.path / "never").string();
  CHECK_THROWS_AS(harness::run_experiment(cfg), harness::ConfigError);
  CHECK_FALSE(fs::exists(cfg.output_dir));
}
