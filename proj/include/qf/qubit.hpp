#pragma once

// Spin-1/2 QND measurement experiment: Bloch-coordinate dynamics, the
// fidelity-plus-rotation feedback law evaluated at the projection filter,
// and closed-loop ensemble simulation producing the figure data series.

#include <cstdint>
#include <vector>

#include "qf/core.hpp"
#include "qf/filter_sde.hpp"
#include "qf/projection.hpp"

namespace qf::qubit {

using core::BlochVector;
using core::Matrix;

// ---- parameters ----

struct FeedbackGains {
  double alpha = 7.61;
  double beta = 5.0;
  double gamma = 10.0;
};

struct QubitParams {
  double omega_eg = 1.0;
  double M = 1.0;
  double eta = 0.5;
  FeedbackGains gains;
  BlochVector target{0.0, 0.0, -1.0};

  // H = omega_eg sigma_z / 2, L = sqrt(M) sigma_z / 2
  sde::ModelSpec model() const;
  Matrix target_density() const;
  void validate() const;
};

// ---- dynamics ----

// Euler-Maruyama step of the controlled Bloch equations
//   dx = (-(M/2)x - omega_eg y + u z)dt - sqrt(eta M) x z dW
//   dy = (omega_eg x - (M/2)y)dt       - sqrt(eta M) y z dW
//   dz = -u x dt                       + sqrt(eta M)(1 - z²) dW
// pre_norm (when given) receives the norm before the ball repair
BlochVector bloch_step(const BlochVector& v, const QubitParams& p, double u,
                       double dW, double dt, double* pre_norm = nullptr);

// distance-like part of the feedback law: V(rho) = sqrt(1 - Tr(rho rho_e))
double feedback_V(const Matrix& rho, const QubitParams& p);
// u(rho) = alpha V(rho)^beta - gamma Tr(i[sigma_y, rho] rho_e)
double feedback_u(const Matrix& rho_est, const QubitParams& p);
double feedback_u(const BlochVector& v, const QubitParams& p);

// ---- closed loop ----

struct SeriesStats {
  std::vector<double> mean, se, min, max;
  std::vector<std::vector<double>> paths;  // first few sample paths
};

struct LoopOptions {
  bool feedback = true;
  int n_traj = 200;
  int threads = 0;
  long record_stride = 8;
  int n_sample_paths = 5;
};

struct LoopReport {
  std::vector<double> times;
  SeriesStats gap;       // ||rho_filter - rho_proj||_F
  SeriesStats fidelity;  // Tr(rho_true rho_e)
  SeriesStats v_filter;  // variance of L at the matrix filter
  SeriesStats v_proj;    // variance of L at the projection filter
  SeriesStats u;         // control value (zero when feedback is off)
  SeriesStats z_true;    // true Bloch z coordinate

  double truth_filter_gap_max = 0.0;  // consistency diagnostic
  double frac_z_reduced = 0.0;        // fraction with |z_T| > 0.99
  long theta_flagged = 0;             // trajectories leaving the theta box
  long tikhonov_total = 0;
  core::RepairStats repair;           // matrix-filter repair statistics
  double worst_bloch_norm = 0.0;      // pre-repair, true system
  int n_traj = 0;
};

// Simulates, per trajectory and in lockstep: the true system in Bloch form
// driven by W, the matrix filter and the projection filter driven by the
// shared record Y, with the control held constant across each step and
// evaluated at the normalized projection estimate. Deterministic given
// grid.seed regardless of thread count.
LoopReport closed_loop_run(const QubitParams& p,
                           const proj::ExponentialFamily& fam,
                           const sde::SdeGrid& grid,
                           const LoopOptions& opts = {});

}  // namespace qf::qubit
