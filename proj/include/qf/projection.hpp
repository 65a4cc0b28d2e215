#pragma once

// Exponential-family projection filter: commuting Hermitian generators,
// quantum Fisher metric, orthogonal projection of filter vector fields,
// the parameter SDE with Stratonovich stepping, the QND closed form, and
// the normalized reduced dynamics.

#include <cstdint>
#include <vector>

#include "qf/core.hpp"
#include "qf/filter_sde.hpp"

namespace qf::proj {

using core::Matrix;
using core::RealMatrix;
using core::RealVector;

// ---- family ----

struct ExponentialFamily {
  std::vector<Matrix> A;  // commuting Hermitian generators
  Matrix rho0;
  double theta_bound = 50.0;      // box |theta_i| <= theta_bound
  bool sum_is_identity = false;   // sum A_i = I, enables neutral recentering
  std::vector<double> qnd_lambda; // eigenvalues when A_i are projectors of L

  int m() const { return static_cast<int>(A.size()); }
  int dim() const { return static_cast<int>(rho0.rows()); }
  // throws on non-Hermitian or non-commuting generators, invalid rho0, or
  // linearly dependent tangent directions at theta = 0
  void validate() const;
};

// family with A_i = P_i over the nonzero distinct eigenvalues of L
ExponentialFamily qnd_family(const sde::ModelSpec& m, const Matrix& rho0);

// ---- chart ----

// e^{sum theta_i A_i / 2} rho0 e^{sum theta_i A_i / 2}
Matrix chart(const ExponentialFamily& fam, const RealVector& theta);
// mixture-representation tangent basis: (A_i rho_theta + rho_theta A_i)/2
std::vector<Matrix> tangent_basis(const ExponentialFamily& fam,
                                  const RealVector& theta);

// ---- metric and projection ----

// G_ij = Tr(rho_theta A_i A_j), symmetric positive definite on the domain
RealMatrix fisher_matrix(const ExponentialFamily& fam,
                         const RealVector& theta);

struct FisherSolveInfo {
  bool tikhonov_used = false;
  double condition = 0.0;
};

// solves G c = q, falling back to G + 1e-12 I when the condition number
// exceeds 1e12 or G is not positive definite
RealVector fisher_solve(const RealMatrix& G, const RealVector& q,
                        FisherSolveInfo* info = nullptr);

// duality pairing q_j = Tr(x A_j); for x given in the mixture
// representation this equals the symmetrized inner product of the
// exponential representations, and it fixes tangent vectors exactly
RealVector pairing(const ExponentialFamily& fam, const Matrix& x);

// tangent coefficients of the orthogonal projection of x at theta
RealVector project(const ExponentialFamily& fam, const RealVector& theta,
                   const Matrix& x, FisherSolveInfo* info = nullptr);
// sum_i c_i (A_i rho_theta + rho_theta A_i)/2
Matrix embed_tangent(const ExponentialFamily& fam, const RealVector& theta,
                     const RealVector& c);
// x minus its projection onto the tangent space at theta
Matrix projection_residual(const ExponentialFamily& fam,
                           const RealVector& theta, const Matrix& x);

// ---- filter coefficients ----

// Hilbert-Schmidt adjoint of the Stratonovich correction F:
// F†(a) = (1-eta) L† a L - (a (eta L + L†) L + L† (L + eta L†) a) / 2,
// the unique operator with Tr(F(rho) a) = Tr(rho F†(a))
Matrix F_adjoint(const sde::ModelSpec& m, const Matrix& a);
// Xi_j = Tr(rho_theta (i[H, A_j] + F†(A_j)))
RealVector drift_xi(const ExponentialFamily& fam, const RealVector& theta,
                    const sde::ModelSpec& m);
// Gamma_j = sqrt(eta) Tr(rho_theta (A_j L + L† A_j))
RealVector diffusion_gamma(const ExponentialFamily& fam,
                           const RealVector& theta, const sde::ModelSpec& m);

// ---- stepping ----

struct ProjState {
  RealVector theta;           // working coordinates
  double theta_offset = 0.0;  // accumulated recentering shift
  bool out_of_bounds = false; // sticky flag, run continues
  long tikhonov_count = 0;

  // physical coordinates: theta + offset in every component
  RealVector raw_theta() const;
};

ProjState make_state(const ExponentialFamily& fam);

// Euler-Heun Stratonovich step of dtheta = G^{-1}(Xi dt + Gamma o dY).
// When the generators resolve the identity and the working coordinates
// drift past +-30, they are recentered by their maximum; this rescales the
// unnormalized state by a constant and is neutral for every normalized
// quantity. Leaving the theta box sets the sticky out_of_bounds flag.
void projection_step(ProjState& st, const ExponentialFamily& fam,
                     const sde::ModelSpec& m, double dY, double dt);

// constant-coefficient closed form for the QND projector family:
// theta_i(t) = -2 eta lambda_i² t + 2 sqrt(eta) lambda_i Y_t
RealVector qnd_theta_closed_form(const ExponentialFamily& fam, double eta,
                                 double t, double Y_t);

// Euler-Maruyama step of the normalized reduced dynamics (QND mode):
// drho = eta (L rho L - {L², rho}/2) dt
//      + sqrt(eta) (L rho + rho L - 2 Tr(L rho) rho) dW^
// with innovation dW^ = dY - 2 sqrt(eta) Tr(L rho) dt
Matrix normalized_projection_step(const Matrix& rho, const sde::ModelSpec& m,
                                  double dY, double dt,
                                  core::RepairStats* stats = nullptr);

}  // namespace qf::proj
