#include "qf/error_analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "qf/parallel.hpp"

namespace qf::err {

namespace {

const core::Complex kI(0.0, 1.0);

// completed projector set: the family plus the zero-eigenvalue block
void completed_projectors(const proj::ExponentialFamily& fam,
                          std::vector<Matrix>* p, std::vector<double>* lam) {
  int n = fam.dim();
  Matrix sum = Matrix::Zero(n, n);
  for (int i = 0; i < fam.m(); ++i) {
    p->push_back(fam.A[i]);
    lam->push_back(fam.qnd_lambda[i]);
    sum += fam.A[i];
  }
  Matrix rest = core::identity(n) - sum;
  if (rest.norm() > 1e-10) {
    p->push_back(rest);
    lam->push_back(0.0);
  }
}

}  // namespace

// ---- residuals ----

ResidualTriple residuals(const proj::ExponentialFamily& fam,
                         const RealVector& theta, const sde::ModelSpec& m) {
  Matrix rho = proj::chart(fam, theta);
  ResidualTriple r;
  r.omega = proj::projection_residual(fam, theta,
                                      -kI * core::commutator(m.H, rho));
  r.c1 = proj::projection_residual(fam, theta, sde::stratonovich_F(rho, m));
  Matrix g = std::sqrt(m.eta) * (m.L * rho + rho * m.L.adjoint());
  r.c2 = proj::projection_residual(fam, theta, g);
  return r;
}

bool qnd_projector_hypotheses(const proj::ExponentialFamily& fam,
                              const sde::ModelSpec& m, double tol) {
  if (!sde::is_qnd(m, tol)) return false;
  if (static_cast<int>(fam.qnd_lambda.size()) != fam.m()) return false;
  double scale = std::max(1.0, m.L.norm());
  Matrix rebuilt = Matrix::Zero(fam.dim(), fam.dim());
  for (int i = 0; i < fam.m(); ++i) {
    const Matrix& a = fam.A[i];
    if ((a * a - a).norm() > tol) return false;
    for (int j = 0; j < fam.m(); ++j) {
      if (j != i && (a * fam.A[j]).norm() > tol) return false;
    }
    if (std::abs(fam.qnd_lambda[i]) <= tol * scale) return false;
    rebuilt += fam.qnd_lambda[i] * a;
  }
  return (rebuilt - m.L).norm() <= tol * scale;
}

Matrix omega_closed_form(const proj::ExponentialFamily& fam,
                         const RealVector& theta, const Matrix& x0) {
  Matrix half = Matrix::Zero(fam.dim(), fam.dim());
  for (int i = 0; i < fam.m(); ++i) half += (0.5 * theta[i]) * fam.A[i];
  Matrix e = core::hermitian_exp(half);
  return e * x0 * e;
}

Matrix c1_closed_form(const proj::ExponentialFamily& fam,
                      const RealVector& theta, const sde::ModelSpec& m) {
  std::vector<Matrix> p;
  std::vector<double> lam;
  completed_projectors(fam, &p, &lam);
  Matrix rho = proj::chart(fam, theta);

  Matrix acc = Matrix::Zero(fam.dim(), fam.dim());
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t l = 0; l < p.size(); ++l) {
      if (k == l) continue;
      double d = lam[k] - lam[l];
      acc += (0.5 * (m.eta - 1.0) * d * d) * (p[k] * rho * p[l]);
    }
  }
  return acc;
}

// ---- analytic bound ----

BoundIngredients bound_ingredients(const proj::ExponentialFamily& fam,
                                   const sde::ModelSpec& m) {
  if (static_cast<int>(fam.qnd_lambda.size()) != fam.m()) {
    throw std::invalid_argument(
        "bound_ingredients: family lacks QND eigenvalues");
  }
  BoundIngredients b;
  b.X0 = -kI * core::commutator(m.H, fam.rho0);
  double max_sq = 0.0;
  for (int k = 0; k < fam.m(); ++k) {
    const Matrix& a = fam.A[k];
    b.Y.push_back(0.5 * (a * fam.rho0 + fam.rho0 * a) - a * fam.rho0 * a);
    max_sq = std::max(max_sq, fam.qnd_lambda[k] * fam.qnd_lambda[k]);
  }
  b.sigma = (1.0 - m.eta) * max_sq;
  return b;
}

double bound_rhs(const BoundIngredients& b) {
  double traces = 0.0;
  std::vector<std::vector<double>> sv;
  sv.reserve(b.Y.size());
  for (const auto& y : b.Y) {
    traces += (y * y).trace().real();
    sv.push_back(core::singular_values(y));
  }
  double cross = 0.0;
  for (std::size_t j = 0; j < b.Y.size(); ++j) {
    for (std::size_t jp = 0; jp < b.Y.size(); ++jp) {
      if (j == jp) continue;
      double s_sum = 0.0;
      for (double s : sv[jp]) s_sum += s;
      cross += sv[j].front() * s_sum;
    }
  }
  double x0_sq = (b.X0 * b.X0).trace().real();
  return b.sigma * std::sqrt(traces + cross) + std::sqrt(std::max(x0_sq, 0.0));
}

// ---- Monte-Carlo residual curve ----

ResidualReport empirical_e_t(const proj::ExponentialFamily& fam,
                             const sde::ModelSpec& m, const sde::SdeGrid& grid,
                             const ResidualOptions& opts) {
  if (!qnd_projector_hypotheses(fam, m)) {
    throw std::invalid_argument(
        "empirical_e_t: family is not the nonzero-eigenvalue projector "
        "configuration of a QND model");
  }
  m.validate();

  const double dt = grid.dt();
  std::vector<long> record_idx;
  for (long k = 0; k <= grid.n_steps; k += opts.record_stride) {
    record_idx.push_back(k);
  }
  if (record_idx.back() != grid.n_steps) record_idx.push_back(grid.n_steps);
  const std::size_t n_rec = record_idx.size();

  BoundIngredients ingredients = bound_ingredients(fam, m);

  // per-chunk accumulators: e, e^2, omega, c1, c2 sums per recorded time
  long chunks = par::n_chunks(opts.n_traj);
  std::vector<std::vector<double>> acc(
      static_cast<std::size_t>(chunks) * 5,
      std::vector<double>(n_rec, 0.0));

  par::for_chunks(opts.n_traj, opts.threads, [&](long chunk, long begin,
                                                 long end) {
    auto* sum_e = &acc[chunk * 5 + 0];
    auto* sum_e2 = &acc[chunk * 5 + 1];
    auto* sum_o = &acc[chunk * 5 + 2];
    auto* sum_c1 = &acc[chunk * 5 + 3];
    auto* sum_c2 = &acc[chunk * 5 + 4];
    for (long traj = begin; traj < end; ++traj) {
      sde::GaussianRng rng(sde::mix_seed(grid.seed, traj));
      double y = 0.0;
      std::size_t next = 0;
      for (long k = 0; k <= grid.n_steps; ++k) {
        if (next < n_rec && record_idx[next] == k) {
          double t = dt * static_cast<double>(k);
          RealVector theta = proj::qnd_theta_closed_form(fam, m.eta, t, y);
          double no, nc1, nc2;
          if (opts.use_generic) {
            ResidualTriple r = residuals(fam, theta, m);
            no = r.omega.norm();
            nc1 = r.c1.norm();
            nc2 = r.c2.norm();
            double e = (r.omega + r.c1 + r.c2).norm();
            (*sum_e)[next] += e;
            (*sum_e2)[next] += e * e;
          } else {
            Matrix omega = omega_closed_form(fam, theta, ingredients.X0);
            Matrix c1 = c1_closed_form(fam, theta, m);
            no = omega.norm();
            nc1 = c1.norm();
            nc2 = 0.0;
            double e = (omega + c1).norm();
            (*sum_e)[next] += e;
            (*sum_e2)[next] += e * e;
          }
          (*sum_o)[next] += no;
          (*sum_c1)[next] += nc1;
          (*sum_c2)[next] += nc2;
          ++next;
        }
        if (k < grid.n_steps) y += rng.increment(dt);  // reference measure
      }
    }
  });

  ResidualReport rep;
  rep.n_traj = opts.n_traj;
  rep.bound = bound_rhs(ingredients);
  rep.times.resize(n_rec);
  rep.e_t.assign(n_rec, 0.0);
  rep.e_t_se.assign(n_rec, 0.0);
  rep.omega_mean.assign(n_rec, 0.0);
  rep.c1_mean.assign(n_rec, 0.0);
  rep.c2_mean.assign(n_rec, 0.0);
  for (std::size_t i = 0; i < n_rec; ++i) {
    rep.times[i] = dt * static_cast<double>(record_idx[i]);
  }
  std::vector<double> sum_e2(n_rec, 0.0);
  for (long c = 0; c < chunks; ++c) {
    for (std::size_t i = 0; i < n_rec; ++i) {
      rep.e_t[i] += acc[c * 5 + 0][i];
      sum_e2[i] += acc[c * 5 + 1][i];
      rep.omega_mean[i] += acc[c * 5 + 2][i];
      rep.c1_mean[i] += acc[c * 5 + 3][i];
      rep.c2_mean[i] += acc[c * 5 + 4][i];
    }
  }
  double n = static_cast<double>(opts.n_traj);
  for (std::size_t i = 0; i < n_rec; ++i) {
    rep.e_t[i] /= n;
    rep.omega_mean[i] /= n;
    rep.c1_mean[i] /= n;
    rep.c2_mean[i] /= n;
    if (opts.n_traj > 1) {
      double var =
          std::max(0.0, (sum_e2[i] - n * rep.e_t[i] * rep.e_t[i]) / (n - 1.0));
      rep.e_t_se[i] = std::sqrt(var / n);
    }
  }
  return rep;
}

// ---- exact equivalence ----

double equivalence_check(const sde::ModelSpec& m,
                         const proj::ExponentialFamily& fam,
                         const Matrix& rho0, const sde::SdeGrid& grid) {
  double scale = std::max({1.0, m.H.norm(), m.L.norm(), rho0.norm()});
  if (core::commutator(m.H, m.L).norm() > 1e-8 * scale ||
      core::commutator(m.H, rho0).norm() > 1e-8 * scale ||
      core::commutator(m.L, rho0).norm() > 1e-8 * scale) {
    throw std::invalid_argument(
        "equivalence_check: requires [H,L] = [H,rho0] = [L,rho0] = 0");
  }
  if (static_cast<int>(fam.qnd_lambda.size()) != fam.m()) {
    throw std::invalid_argument(
        "equivalence_check: family lacks QND eigenvalues");
  }

  sde::SimOptions opts;
  opts.record_states = true;
  sde::TrajectoryRecord rec = sde::simulate_filter(m, rho0, grid, opts);

  double max_gap = 0.0;
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    RealVector theta =
        proj::qnd_theta_closed_form(fam, m.eta, rec.times[i], rec.Y[i]);
    Matrix state = core::normalized(proj::chart(fam, theta));
    max_gap = std::max(max_gap, (state - rec.states[i]).norm());
  }
  return max_gap;
}

}  // namespace qf::err
