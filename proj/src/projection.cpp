#include "qf/projection.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qf::proj {

namespace {

const core::Complex kI(0.0, 1.0);

constexpr double kRecenterThreshold = 30.0;
constexpr double kGramTol = 1e-10;

Matrix exponent_half(const ExponentialFamily& fam, const RealVector& theta) {
  Matrix acc = Matrix::Zero(fam.dim(), fam.dim());
  for (int i = 0; i < fam.m(); ++i) acc += (0.5 * theta[i]) * fam.A[i];
  return acc;
}

}  // namespace

// ---- family ----

void ExponentialFamily::validate() const {
  if (A.empty()) {
    throw std::invalid_argument("ExponentialFamily: no generators");
  }
  for (const auto& a : A) {
    core::require_hermitian(a, 1e-10, "ExponentialFamily.A");
    if (a.rows() != rho0.rows()) {
      throw std::invalid_argument("ExponentialFamily: dimension mismatch");
    }
  }
  double scale = 1.0;
  for (const auto& a : A) scale = std::max(scale, a.norm());
  for (std::size_t i = 0; i < A.size(); ++i) {
    for (std::size_t j = i + 1; j < A.size(); ++j) {
      if (core::commutator(A[i], A[j]).norm() > 1e-10 * scale) {
        throw std::invalid_argument(
            "ExponentialFamily: generators do not commute");
      }
    }
  }
  if (!core::is_density(rho0)) {
    throw std::invalid_argument("ExponentialFamily: rho0 is not a density");
  }
  if (static_cast<int>(qnd_lambda.size()) != 0 &&
      static_cast<int>(qnd_lambda.size()) != m()) {
    throw std::invalid_argument("ExponentialFamily: qnd_lambda size mismatch");
  }
  if (!(theta_bound > 0.0)) {
    throw std::invalid_argument("ExponentialFamily: theta_bound must be > 0");
  }

  // tangent directions at theta = 0 must be linearly independent
  RealVector zero = RealVector::Zero(m());
  std::vector<Matrix> basis = tangent_basis(*this, zero);
  RealMatrix gram(m(), m());
  for (int i = 0; i < m(); ++i) {
    for (int j = i; j < m(); ++j) {
      double v = (basis[i].adjoint() * basis[j]).trace().real();
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(gram, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= kGramTol) {
    throw std::invalid_argument(
        "ExponentialFamily: tangent directions are linearly dependent at "
        "theta = 0");
  }
}

ExponentialFamily qnd_family(const sde::ModelSpec& m, const Matrix& rho0) {
  sde::require_qnd(m, "qnd_family");
  core::SpectralDecomposition d = core::spectral_decompose(m.L);
  double radius = 1.0;
  for (double ev : d.eigenvalues) radius = std::max(radius, std::abs(ev));

  ExponentialFamily fam;
  fam.rho0 = rho0;
  Matrix sum = Matrix::Zero(m.dim(), m.dim());
  for (int i = 0; i < d.size(); ++i) {
    if (std::abs(d.eigenvalues[i]) <= 1e-8 * radius) continue;
    fam.A.push_back(d.projectors[i]);
    fam.qnd_lambda.push_back(d.eigenvalues[i]);
    sum += d.projectors[i];
  }
  fam.sum_is_identity = (sum - core::identity(m.dim())).norm() < 1e-8;
  fam.validate();
  return fam;
}

// ---- chart ----

Matrix chart(const ExponentialFamily& fam, const RealVector& theta) {
  Matrix e = core::hermitian_exp(exponent_half(fam, theta));
  return e * fam.rho0 * e;
}

std::vector<Matrix> tangent_basis(const ExponentialFamily& fam,
                                  const RealVector& theta) {
  Matrix rho = chart(fam, theta);
  std::vector<Matrix> out;
  out.reserve(fam.m());
  for (int i = 0; i < fam.m(); ++i) {
    out.push_back(0.5 * (fam.A[i] * rho + rho * fam.A[i]));
  }
  return out;
}

// ---- metric and projection ----

RealMatrix fisher_matrix(const ExponentialFamily& fam,
                         const RealVector& theta) {
  Matrix rho = chart(fam, theta);
  RealMatrix g(fam.m(), fam.m());
  for (int i = 0; i < fam.m(); ++i) {
    for (int j = i; j < fam.m(); ++j) {
      double v = (rho * fam.A[i] * fam.A[j]).trace().real();
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

RealVector fisher_solve(const RealMatrix& G, const RealVector& q,
                        FisherSolveInfo* info) {
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(G, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  bool regularize = !(lo > 0.0) || cond > 1e12;

  RealMatrix g = G;
  if (regularize) {
    g += 1e-12 * RealMatrix::Identity(G.rows(), G.cols());
  }
  if (info) {
    info->tikhonov_used = regularize;
    info->condition = cond;
  }
  return g.ldlt().solve(q);
}

RealVector pairing(const ExponentialFamily& fam, const Matrix& x) {
  RealVector q(fam.m());
  for (int j = 0; j < fam.m(); ++j) {
    q[j] = (x * fam.A[j]).trace().real();
  }
  return q;
}

RealVector project(const ExponentialFamily& fam, const RealVector& theta,
                   const Matrix& x, FisherSolveInfo* info) {
  return fisher_solve(fisher_matrix(fam, theta), pairing(fam, x), info);
}

Matrix embed_tangent(const ExponentialFamily& fam, const RealVector& theta,
                     const RealVector& c) {
  std::vector<Matrix> basis = tangent_basis(fam, theta);
  Matrix acc = Matrix::Zero(fam.dim(), fam.dim());
  for (int i = 0; i < fam.m(); ++i) acc += c[i] * basis[i];
  return acc;
}

Matrix projection_residual(const ExponentialFamily& fam,
                           const RealVector& theta, const Matrix& x) {
  return x - embed_tangent(fam, theta, project(fam, theta, x));
}

// ---- filter coefficients ----

Matrix F_adjoint(const sde::ModelSpec& m, const Matrix& a) {
  const Matrix& L = m.L;
  Matrix Ld = L.adjoint();
  return (1.0 - m.eta) * (Ld * a * L) -
         0.5 * (a * (m.eta * L + Ld) * L + Ld * (L + m.eta * Ld) * a);
}

RealVector drift_xi(const ExponentialFamily& fam, const RealVector& theta,
                    const sde::ModelSpec& m) {
  Matrix rho = chart(fam, theta);
  RealVector xi(fam.m());
  for (int j = 0; j < fam.m(); ++j) {
    Matrix field = kI * core::commutator(m.H, fam.A[j]) + F_adjoint(m, fam.A[j]);
    xi[j] = (rho * field).trace().real();
  }
  return xi;
}

RealVector diffusion_gamma(const ExponentialFamily& fam,
                           const RealVector& theta, const sde::ModelSpec& m) {
  Matrix rho = chart(fam, theta);
  RealVector g(fam.m());
  double sqrt_eta = std::sqrt(m.eta);
  for (int j = 0; j < fam.m(); ++j) {
    g[j] = sqrt_eta *
           (rho * (fam.A[j] * m.L + m.L.adjoint() * fam.A[j])).trace().real();
  }
  return g;
}

// ---- stepping ----

RealVector ProjState::raw_theta() const {
  return theta.array() + theta_offset;
}

ProjState make_state(const ExponentialFamily& fam) {
  ProjState st;
  st.theta = RealVector::Zero(fam.m());
  return st;
}

namespace {

// combined parameter increment G^{-1}(Xi dt + Gamma dY) at theta
RealVector step_increment(const ExponentialFamily& fam, const RealVector& theta,
                          const sde::ModelSpec& m, double dY, double dt,
                          FisherSolveInfo* info) {
  RealMatrix g = fisher_matrix(fam, theta);
  RealVector rhs = drift_xi(fam, theta, m) * dt +
                   diffusion_gamma(fam, theta, m) * dY;
  return fisher_solve(g, rhs, info);
}

}  // namespace

void projection_step(ProjState& st, const ExponentialFamily& fam,
                     const sde::ModelSpec& m, double dY, double dt) {
  FisherSolveInfo info0, info1;
  RealVector d0 = step_increment(fam, st.theta, m, dY, dt, &info0);
  RealVector predictor = st.theta + d0;
  RealVector d1 = step_increment(fam, predictor, m, dY, dt, &info1);
  st.theta += 0.5 * (d0 + d1);
  if (info0.tikhonov_used) ++st.tikhonov_count;
  if (info1.tikhonov_used) ++st.tikhonov_count;

  if (fam.sum_is_identity &&
      st.theta.cwiseAbs().maxCoeff() > kRecenterThreshold) {
    // shifting every coordinate rescales the unnormalized state by a
    // constant, which is neutral for all normalized quantities
    double c = st.theta.maxCoeff();
    st.theta.array() -= c;
    st.theta_offset += c;
  }
  if (st.theta.cwiseAbs().maxCoeff() > fam.theta_bound) {
    st.out_of_bounds = true;
  }
}

RealVector qnd_theta_closed_form(const ExponentialFamily& fam, double eta,
                                 double t, double Y_t) {
  if (static_cast<int>(fam.qnd_lambda.size()) != fam.m()) {
    throw std::invalid_argument(
        "qnd_theta_closed_form: family lacks QND eigenvalues");
  }
  RealVector theta(fam.m());
  double sqrt_eta = std::sqrt(eta);
  for (int i = 0; i < fam.m(); ++i) {
    double lam = fam.qnd_lambda[i];
    theta[i] = -2.0 * eta * lam * lam * t + 2.0 * sqrt_eta * lam * Y_t;
  }
  return theta;
}

Matrix normalized_projection_step(const Matrix& rho, const sde::ModelSpec& m,
                                  double dY, double dt,
                                  core::RepairStats* stats) {
  const Matrix& L = m.L;
  double tr_l = core::trace_real(L * rho);
  double sqrt_eta = std::sqrt(m.eta);
  double dw_hat = dY - 2.0 * sqrt_eta * tr_l * dt;
  Matrix ll = L * L;
  Matrix drift = m.eta * (L * rho * L - 0.5 * (ll * rho + rho * ll));
  Matrix diff = sqrt_eta * (L * rho + rho * L - 2.0 * tr_l * rho);
  return core::repair_density(rho + drift * dt + diff * dw_hat, stats, true);
}

}  // namespace qf::proj
