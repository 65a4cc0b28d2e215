#pragma once

// Experiment configuration and orchestration: JSON configs with collected
// validation errors, CLI overrides, deterministic per-trajectory seeding,
// atomic CSV output with a run manifest, and the figure/bound/exact
// experiment drivers.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qf/core.hpp"
#include "qf/exact.hpp"
#include "qf/filter_sde.hpp"
#include "qf/projection.hpp"
#include "qf/qubit.hpp"

#include "json.hpp"

namespace qf::harness {

using core::Matrix;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSeedRule =
    "trajectory_seed = splitmix64(master_seed xor "
    "(0x9E3779B97F4A7C15 * (trajectory_index + 1)))";

// ---- config ----

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> problems);
  std::vector<std::string> issues;
};

struct ExperimentConfig {
  std::string experiment = "fig1";  // fig1 fig2 fig3 bound exact
  std::string preset = "spin-half-qnd";
  std::optional<Matrix> H;  // explicit model, overrides the preset
  std::optional<Matrix> L;
  std::optional<Matrix> rho0;
  double eta = 0.5;
  double omega_eg = 1.0;
  double M = 1.0;
  qubit::FeedbackGains gains;
  std::vector<Matrix> generators;  // optional; default QND projectors
  double t_final = 5.0;
  long steps = 4096;
  std::uint64_t seed = 20260814;
  int trajectories = 200;
  int threads = 0;
  long record_stride = 8;
  sde::Measure measure = sde::Measure::kP;
  std::string output_dir = "out";

  bool explicit_model() const { return H.has_value() || L.has_value(); }
  qubit::QubitParams qubit_params() const;
  sde::ModelSpec model() const;
  Matrix initial_state() const;
  proj::ExponentialFamily family() const;
};

ExperimentConfig default_config(const std::string& experiment = "fig1");
// parses and validates, collecting every problem before throwing
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);
// throws ConfigError listing every violated invariant
void validate_config(const ExperimentConfig& c);

struct CliOverrides {
  std::optional<double> eta, M, omega, t_final;
  std::optional<long> steps, record_stride;
  std::optional<int> trajectories, threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void apply_overrides(ExperimentConfig& c, const CliOverrides& o);

// ---- output ----

// %.17g, round-trips doubles exactly
std::string format_double(double v);
// writes to a temporary file and renames, so readers never see partial data
void write_csv_atomic(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows);
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);

void write_trajectory_csv(const std::filesystem::path& path,
                          const sde::TrajectoryRecord& rec);
void write_phi_csv(const std::filesystem::path& path,
                   const std::vector<exact::ExactChart>& charts);

// ---- runner ----

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<std::string> files;  // names relative to output_dir
  nlohmann::json summary;
};

// Validates, creates the output directory, drops a .partial marker for the
// duration of the run, writes the experiment CSVs and manifest.json, and
// removes the marker on success. Identical config and seed produce byte
// identical CSVs, parallel or sequential.
RunResult run_experiment(const ExperimentConfig& cfg);

}  // namespace qf::harness
