#pragma once

// Exact finite-dimensional solution of the QND filtering problem: the
// (theta, gamma, alpha) chart built on the spectral decompositions of the
// shifted operators, its closed-form flow driven by the record, the
// tangent-space identities, and reference comparisons against direct
// Euler-Maruyama integration.

#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "qf/core.hpp"
#include "qf/filter_sde.hpp"

namespace qf::exact {

using core::Matrix;

// ---- chart structure ----

// Fixed data of the chart. The operators are shifted, L' = L - c_L I and
// H' = H - c_H I with c the smallest eigenvalue, and only the nonzero
// shifted eigenvalues are kept, so K < n and D < n and the partial
// derivatives stay linearly independent. The shift leaves the normalized
// dynamics unchanged; the record is compensated through obs_shift_rate.
struct ChartStructure {
  core::SpectralDecomposition L_decomp;  // K nonzero shifted eigenvalues
  core::SpectralDecomposition H_decomp;  // D nonzero shifted eigenvalues
  double L_shift = 0.0;                  // c_L
  double H_shift = 0.0;                  // c_H
  Matrix rho0;
  double eta = 1.0;
  std::vector<std::pair<int, int>> alpha_index;  // (k, j), k <= j, 0-based
  std::vector<bool> alpha_active;  // false when the rho0 block vanishes

  int K() const { return L_decomp.size(); }
  int D() const { return H_decomp.size(); }
  int n_alpha() const { return static_cast<int>(alpha_index.size()); }
  int dim() const { return static_cast<int>(rho0.rows()); }
  int n_params() const { return K() + D() + n_alpha(); }
  // the closed form consumes Y'_t = Y_t - obs_shift_rate * t
  double obs_shift_rate() const { return 2.0 * std::sqrt(eta) * L_shift; }
};

struct ExactChart {
  std::shared_ptr<const ChartStructure> s;
  core::RealVector theta;  // K
  core::RealVector gamma;  // D
  core::RealVector alpha;  // K(K+1)/2
  double t = 0.0;
};

// chart at phi = 0 for a QND model; throws when the model is not QND, the
// projector families do not commute, or rho0 is not a density matrix
ExactChart make_chart(const sde::ModelSpec& m, const Matrix& rho0);

// ---- chart evaluation ----

// rho0 + sum_{k<=j} (P_k rho0 P_j + (1-delta_kj) P_j rho0 P_k)(e^{alpha_kj}-1)
Matrix rho_alpha(const ExactChart& c);
// e^{L_theta/2 + i H_gamma/2} rho_alpha e^{L_theta/2 - i H_gamma/2}
Matrix chart_state(const ExactChart& c);
// partial derivatives of chart_state, ordered theta, gamma, alpha
std::vector<Matrix> chart_partials(const ExactChart& c);
// smallest eigenvalue of the Hilbert-Schmidt Gram matrix of the partials;
// values at or below 1e-10 flag a degenerate parametrization
double gram_min_eigenvalue(const ExactChart& c);

// ---- tangency identities ----

struct TangencyReport {
  double hamiltonian_residual = 0.0;  // i[H',rho] vs 2 sum beta_j d/dgamma_j
  double f_residual = 0.0;            // F(rho) vs alpha/theta combination
  double coupling_residual = 0.0;     // L'rho+rho L' vs 2 sum lambda_k d/dtheta_k
  double gram_min_eig = 0.0;
  bool independent = true;  // gram_min_eig > 1e-10

  bool pass(double tol = 1e-9) const {
    return hamiltonian_residual < tol && f_residual < tol &&
           coupling_residual < tol;
  }
};

// numeric check of the three tangency identities at the chart's phi
TangencyReport tangency_check(const ExactChart& c, const sde::ModelSpec& m);

// ---- closed-form flow ----

// theta_k(t) = -(1+eta) lambda_k² t + 2 sqrt(eta) lambda_k Y'_t,
// gamma_j(t) = -2 beta_j t, alpha_kj(t) = (1-eta) lambda_k lambda_j t,
// where Y_t is the raw cumulative record and Y' its shift compensation
ExactChart at_time(const ExactChart& c0, double t, double Y_t);

// chart at every time of the record
std::vector<ExactChart> propagate_exact(const ExactChart& c0,
                                        const sde::ModelSpec& m,
                                        const sde::TrajectoryRecord& rec);

// ---- reference comparison ----

struct GapCurve {
  std::vector<double> times;
  std::vector<double> gap;  // Frobenius distance of normalized states
  double max_gap = 0.0;
  double terminal_gap = 0.0;
};

// drives the Euler-Maruyama filter and the closed-form chart from one
// (W, Y) stream and compares normalized states per step
GapCurve exact_vs_filter(const sde::ModelSpec& m, const Matrix& rho0,
                         const sde::SdeGrid& grid);

// coupled refinement study: one finest Brownian path per trajectory is
// summed onto coarser grids; reports the mean over trajectories of the
// max-over-time gap at each level (dt = t_final / 2^level)
struct RefinementResult {
  std::vector<int> levels;
  std::vector<double> dts;
  std::vector<double> mean_max_gap;
  // least-squares slope of log(gap) against log(dt)
  double fitted_order = 0.0;
  bool monotone = false;
};

RefinementResult refinement_gaps(const sde::ModelSpec& m, const Matrix& rho0,
                                 double t_final, int level_lo, int level_hi,
                                 int n_traj, std::uint64_t seed);

}  // namespace qf::exact
