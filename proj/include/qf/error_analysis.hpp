#pragma once

// Projection residuals (prediction residual Omega, correction residuals C1
// and C2), their closed forms in the QND projector configuration, the
// analytic bound on the mean total residual norm, the Monte-Carlo residual
// curve under the reference measure, and the exact-equivalence check for
// fully commuting models.

#include <cstdint>
#include <vector>

#include "qf/core.hpp"
#include "qf/filter_sde.hpp"
#include "qf/projection.hpp"

namespace qf::err {

using core::Matrix;
using core::RealVector;

// ---- residuals ----

struct ResidualTriple {
  Matrix omega;  // Hamiltonian field minus its projection
  Matrix c1;     // Stratonovich correction field minus its projection
  Matrix c2;     // diffusion field minus its projection
};

// generic route: each filter vector field minus its tangent projection
ResidualTriple residuals(const proj::ExponentialFamily& fam,
                         const RealVector& theta, const sde::ModelSpec& m);

// hypotheses for the closed forms: QND model and A_i the eigenprojectors
// of L restricted to its nonzero distinct eigenvalues
bool qnd_projector_hypotheses(const proj::ExponentialFamily& fam,
                              const sde::ModelSpec& m, double tol = 1e-8);

// Omega = e^{Delta} X0 e^{Delta}, Delta = sum theta_i A_i / 2,
// X0 = -i[H, rho0]
Matrix omega_closed_form(const proj::ExponentialFamily& fam,
                         const RealVector& theta, const Matrix& x0);
// C1 = (eta-1)/2 sum_{k != l} (lambda_k - lambda_l)² P_k rho_theta P_l over
// the completed projector set (zero-eigenvalue block included)
Matrix c1_closed_form(const proj::ExponentialFamily& fam,
                      const RealVector& theta, const sde::ModelSpec& m);

// ---- analytic bound ----

struct BoundIngredients {
  Matrix X0;              // -i[H, rho0]
  std::vector<Matrix> Y;  // Y_k = (A_k rho0 + rho0 A_k)/2 - A_k rho0 A_k
  double sigma = 0.0;     // (1 - eta) max_k lambda_k²
};

BoundIngredients bound_ingredients(const proj::ExponentialFamily& fam,
                                   const sde::ModelSpec& m);
// sigma sqrt(sum_k Tr(Y_k²) + sum_{j != j'} s_1(Y_j) sum_i s_i(Y_j'))
//   + sqrt(Tr(X0²)), the cross sum over ordered pairs
double bound_rhs(const BoundIngredients& b);

// ---- Monte-Carlo residual curve ----

struct ResidualReport {
  std::vector<double> times;
  std::vector<double> e_t;     // ensemble mean of ||C1 + C2 + Omega||_F
  std::vector<double> e_t_se;
  std::vector<double> omega_mean;
  std::vector<double> c1_mean;
  std::vector<double> c2_mean;
  double bound = 0.0;
  int n_traj = 0;
};

struct ResidualOptions {
  int n_traj = 1000;
  int threads = 0;           // 0 picks hardware concurrency
  long record_stride = 8;
  bool use_generic = false;  // generic projection route instead of closed forms
};

// the record is simulated as a Wiener process (reference measure) and
// theta follows the QND closed form; throws unless the closed-form
// hypotheses hold
ResidualReport empirical_e_t(const proj::ExponentialFamily& fam,
                             const sde::ModelSpec& m, const sde::SdeGrid& grid,
                             const ResidualOptions& opts = {});

// ---- exact equivalence ----

// requires [H,L] = [H,rho0] = [L,rho0] = 0 (throws otherwise); integrates
// the full filter and the projection closed form from one record and
// returns the largest Frobenius gap of normalized states
double equivalence_check(const sde::ModelSpec& m,
                         const proj::ExponentialFamily& fam,
                         const Matrix& rho0, const sde::SdeGrid& grid);

}  // namespace qf::err
