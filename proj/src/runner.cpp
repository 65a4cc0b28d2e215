#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "qf/error_analysis.hpp"
#include "qf/harness.hpp"
#include "qf/parallel.hpp"

namespace qf::par {

long n_chunks(long n_items) {
  return (n_items + kChunkSize - 1) / kChunkSize;
}

void for_chunks(long n_items, int threads,
                const std::function<void(long, long, long)>& fn) {
  if (n_items <= 0) return;
  long chunks = n_chunks(n_items);
  auto run_chunk = [&](long c) {
    fn(c, c * kChunkSize, std::min(n_items, (c + 1) * kChunkSize));
  };

  if (threads <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    threads = hw > 0 ? static_cast<int>(hw) : 1;
  }
  threads = static_cast<int>(std::min<long>(threads, chunks));
  if (threads <= 1) {
    for (long c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }

  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        long c = next.fetch_add(1);
        if (c >= chunks) return;
        try {
          run_chunk(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(chunks);  // stop handing out work
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace qf::par

namespace qf::harness {

namespace {

namespace fs = std::filesystem;

nlohmann::json repair_to_json(const core::RepairStats& r) {
  return {{"steps", r.steps},
          {"hermiticity_warnings", r.hermiticity_warnings},
          {"positivity_repairs", r.positivity_repairs},
          {"worst_hermiticity", r.worst_hermiticity},
          {"worst_min_eig", r.worst_min_eig},
          {"worst_trace_err", r.worst_trace_err}};
}

void run_figure(const ExperimentConfig& cfg, const sde::SdeGrid& grid,
                const fs::path& dir, RunResult* res, nlohmann::json* summary) {
  qubit::QubitParams p = cfg.qubit_params();
  proj::ExponentialFamily fam = cfg.family();
  qubit::LoopOptions lo;
  lo.feedback = cfg.experiment != "fig1";
  lo.n_traj = cfg.trajectories;
  lo.threads = cfg.threads;
  lo.record_stride = cfg.record_stride;
  qubit::LoopReport rep = qubit::closed_loop_run(p, fam, grid, lo);

  std::vector<std::string> header = {
      "t",           "gap_mean",      "gap_se",      "fidelity_mean",
      "fidelity_se", "v_filter_mean", "v_filter_se", "v_proj_mean",
      "v_proj_se",   "u_mean",        "u_se",        "z_mean",
      "z_se"};
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    rows.push_back({rep.times[i], rep.gap.mean[i], rep.gap.se[i],
                    rep.fidelity.mean[i], rep.fidelity.se[i],
                    rep.v_filter.mean[i], rep.v_filter.se[i],
                    rep.v_proj.mean[i], rep.v_proj.se[i], rep.u.mean[i],
                    rep.u.se[i], rep.z_true.mean[i], rep.z_true.se[i]});
  }
  std::string series_name = cfg.experiment + "_series.csv";
  write_csv_atomic(dir / series_name, header, rows);
  res->files.push_back(series_name);

  // headline sample paths: the gap for fig1/fig2, the fidelity for fig3,
  // plus the true z paths that show the measurement-driven reduction
  const qubit::SeriesStats& headline =
      cfg.experiment == "fig3" ? rep.fidelity : rep.gap;
  const char* headline_name = cfg.experiment == "fig3" ? "fidelity" : "gap";
  std::vector<std::string> phdr = {"t"};
  for (std::size_t k = 0; k < headline.paths.size(); ++k) {
    phdr.push_back(std::string(headline_name) + "_path" + std::to_string(k));
  }
  for (std::size_t k = 0; k < rep.z_true.paths.size(); ++k) {
    phdr.push_back("z_path" + std::to_string(k));
  }
  std::vector<std::vector<double>> prows;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    std::vector<double> row = {rep.times[i]};
    for (const auto& path : headline.paths) row.push_back(path[i]);
    for (const auto& path : rep.z_true.paths) row.push_back(path[i]);
    prows.push_back(std::move(row));
  }
  std::string paths_name = cfg.experiment + "_paths.csv";
  write_csv_atomic(dir / paths_name, phdr, prows);
  res->files.push_back(paths_name);

  std::size_t last = rep.times.size() - 1;
  (*summary)["n_traj"] = rep.n_traj;
  (*summary)["feedback"] = lo.feedback;
  (*summary)["terminal"] = {{"gap_mean", rep.gap.mean[last]},
                            {"fidelity_mean", rep.fidelity.mean[last]},
                            {"v_filter_mean", rep.v_filter.mean[last]},
                            {"v_proj_mean", rep.v_proj.mean[last]},
                            {"z_mean", rep.z_true.mean[last]}};
  (*summary)["frac_abs_z_above_0.99"] = rep.frac_z_reduced;
  (*summary)["truth_filter_gap_max"] = rep.truth_filter_gap_max;
  (*summary)["theta_flagged"] = rep.theta_flagged;
  (*summary)["tikhonov_total"] = rep.tikhonov_total;
  (*summary)["worst_bloch_norm"] = rep.worst_bloch_norm;
  (*summary)["repair"] = repair_to_json(rep.repair);
}

void run_bound(const ExperimentConfig& cfg, const sde::SdeGrid& grid,
               const fs::path& dir, RunResult* res, nlohmann::json* summary) {
  proj::ExponentialFamily fam = cfg.family();
  err::ResidualOptions ro;
  ro.n_traj = cfg.trajectories;
  ro.threads = cfg.threads;
  ro.record_stride = cfg.record_stride;
  err::ResidualReport rep = err::empirical_e_t(fam, cfg.model(), grid, ro);

  std::vector<std::string> header = {"t",          "e_t",     "e_t_se",
                                     "omega_mean", "c1_mean", "c2_mean",
                                     "bound"};
  std::vector<std::vector<double>> rows;
  double worst_margin = rep.bound;
  double max_e = 0.0;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    rows.push_back({rep.times[i], rep.e_t[i], rep.e_t_se[i], rep.omega_mean[i],
                    rep.c1_mean[i], rep.c2_mean[i], rep.bound});
    worst_margin =
        std::min(worst_margin, rep.bound - rep.e_t[i] - 3.0 * rep.e_t_se[i]);
    max_e = std::max(max_e, rep.e_t[i]);
  }
  write_csv_atomic(dir / "bound_curve.csv", header, rows);
  res->files.push_back("bound_curve.csv");

  (*summary)["n_traj"] = rep.n_traj;
  (*summary)["bound"] = rep.bound;
  (*summary)["max_e_t"] = max_e;
  (*summary)["worst_margin_3se"] = worst_margin;
  (*summary)["dominated"] = worst_margin >= 0.0;
}

void run_exact(const ExperimentConfig& cfg, const sde::SdeGrid& grid,
               const fs::path& dir, RunResult* res, nlohmann::json* summary) {
  sde::ModelSpec m = cfg.model();
  Matrix rho0 = cfg.initial_state();

  exact::GapCurve curve = exact::exact_vs_filter(m, rho0, grid);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    rows.push_back({curve.times[i], curve.gap[i]});
  }
  write_csv_atomic(dir / "exact_gap.csv", {"t", "gap"}, rows);
  res->files.push_back("exact_gap.csv");

  int mid = static_cast<int>(
      std::lround(std::log2(static_cast<double>(cfg.steps))));
  int lo = std::max(3, mid - 2);
  int hi = std::min(20, mid + 2);
  exact::RefinementResult ref = exact::refinement_gaps(
      m, rho0, cfg.t_final, lo, hi, cfg.trajectories, cfg.seed);
  rows.clear();
  for (std::size_t i = 0; i < ref.levels.size(); ++i) {
    rows.push_back({static_cast<double>(ref.levels[i]), ref.dts[i],
                    ref.mean_max_gap[i]});
  }
  write_csv_atomic(dir / "exact_refinement.csv",
                   {"level", "dt", "mean_max_gap"}, rows);
  res->files.push_back("exact_refinement.csv");

  sde::SimOptions so;
  so.measure = cfg.measure;
  sde::TrajectoryRecord rec = sde::simulate_filter(m, rho0, grid, so);
  write_trajectory_csv(dir / "exact_record.csv", rec);
  res->files.push_back("exact_record.csv");
  exact::ExactChart c0 = exact::make_chart(m, rho0);
  write_phi_csv(dir / "exact_phi.csv", exact::propagate_exact(c0, m, rec));
  res->files.push_back("exact_phi.csv");

  (*summary)["max_gap"] = curve.max_gap;
  (*summary)["terminal_gap"] = curve.terminal_gap;
  (*summary)["refinement"] = {{"levels", ref.levels},
                              {"dts", ref.dts},
                              {"mean_max_gap", ref.mean_max_gap},
                              {"fitted_order", ref.fitted_order},
                              {"monotone", ref.monotone}};
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  fs::path marker = dir / ".partial";
  write_text_atomic(marker, "run in progress\n");

  auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  res.output_dir = dir;
  nlohmann::json summary;
  sde::SdeGrid grid{cfg.t_final, cfg.steps, cfg.seed};

  if (cfg.experiment == "bound") {
    run_bound(cfg, grid, dir, &res, &summary);
  } else if (cfg.experiment == "exact") {
    run_exact(cfg, grid, dir, &res, &summary);
  } else {
    run_figure(cfg, grid, dir, &res, &summary);
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["experiment"] = cfg.experiment;
  manifest["config"] = config_to_json(cfg);
  manifest["seed_rule"] = kSeedRule;
  manifest["files"] = res.files;
  manifest["summary"] = summary;
  manifest["wall_time_seconds"] = wall;  // volatile across reruns
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  res.files.push_back("manifest.json");

  res.summary = summary;
  fs::remove(marker);
  return res;
}

}  // namespace qf::harness
