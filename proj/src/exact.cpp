#include "qf/exact.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace qf::exact {

namespace {

const core::Complex kI(0.0, 1.0);

// shift a raw decomposition by its smallest eigenvalue and drop the zero
// cluster so the retained eigenvalues are nonzero
core::SpectralDecomposition shift_decomposition(
    const core::SpectralDecomposition& raw, double* shift) {
  core::SpectralDecomposition out;
  if (raw.size() == 0) {
    *shift = 0.0;
    return out;
  }
  *shift = raw.eigenvalues.back();  // descending order: smallest is last
  for (int i = 0; i + 1 < raw.size(); ++i) {
    out.eigenvalues.push_back(raw.eigenvalues[i] - *shift);
    out.projectors.push_back(raw.projectors[i]);
    out.multiplicities.push_back(raw.multiplicities[i]);
  }
  return out;
}

// sum_k theta_k P_k as a Hermitian matrix
Matrix weighted_sum(const core::SpectralDecomposition& d,
                    const core::RealVector& w, int n) {
  Matrix acc = Matrix::Zero(n, n);
  for (int i = 0; i < d.size(); ++i) acc += w[i] * d.projectors[i];
  return acc;
}

Matrix chart_unitary_factor(const ExactChart& c) {
  const auto& s = *c.s;
  int n = s.dim();
  Matrix a = weighted_sum(s.L_decomp, 0.5 * c.theta, n);
  Matrix b = weighted_sum(s.H_decomp, 0.5 * c.gamma, n);
  // [L_theta, H_gamma] = 0, so the exponential factorizes
  return core::hermitian_exp(a) * core::phase_exp(b);
}

Matrix alpha_block(const ChartStructure& s, int k, int j) {
  Matrix b = s.L_decomp.projectors[k] * s.rho0 * s.L_decomp.projectors[j];
  if (k != j) b += s.L_decomp.projectors[j] * s.rho0 * s.L_decomp.projectors[k];
  return b;
}

}  // namespace

// ---- chart construction ----

ExactChart make_chart(const sde::ModelSpec& m, const Matrix& rho0) {
  m.validate();
  sde::require_qnd(m, "make_chart");
  if (!core::is_density(rho0)) {
    throw std::invalid_argument("make_chart: rho0 is not a density matrix");
  }
  if (rho0.rows() != m.dim()) {
    throw std::invalid_argument("make_chart: rho0 dimension mismatch");
  }

  auto s = std::make_shared<ChartStructure>();
  s->rho0 = rho0;
  s->eta = m.eta;
  core::SpectralDecomposition raw_L = core::spectral_decompose(m.L);
  core::SpectralDecomposition raw_H = core::spectral_decompose(m.H);
  s->L_decomp = shift_decomposition(raw_L, &s->L_shift);
  s->H_decomp = shift_decomposition(raw_H, &s->H_shift);

  double scale = std::max(1.0, std::max(m.L.norm(), m.H.norm()));
  for (const auto& p : s->L_decomp.projectors) {
    for (const auto& q : s->H_decomp.projectors) {
      if (core::commutator(p, q).norm() > 1e-8 * scale) {
        throw std::invalid_argument(
            "make_chart: measurement and Hamiltonian projectors do not "
            "commute");
      }
    }
  }

  for (int k = 0; k < s->K(); ++k) {
    for (int j = k; j < s->K(); ++j) {
      s->alpha_index.emplace_back(k, j);
      s->alpha_active.push_back(alpha_block(*s, k, j).norm() > 1e-10);
    }
  }

  ExactChart c;
  c.s = std::move(s);
  c.theta = core::RealVector::Zero(c.s->K());
  c.gamma = core::RealVector::Zero(c.s->D());
  c.alpha = core::RealVector::Zero(c.s->n_alpha());
  c.t = 0.0;
  return c;
}

// ---- chart evaluation ----

Matrix rho_alpha(const ExactChart& c) {
  const auto& s = *c.s;
  Matrix acc = s.rho0;
  for (int a = 0; a < s.n_alpha(); ++a) {
    auto [k, j] = s.alpha_index[a];
    acc += (std::exp(c.alpha[a]) - 1.0) * alpha_block(s, k, j);
  }
  return acc;
}

Matrix chart_state(const ExactChart& c) {
  Matrix u = chart_unitary_factor(c);
  return u * rho_alpha(c) * u.adjoint();
}

std::vector<Matrix> chart_partials(const ExactChart& c) {
  const auto& s = *c.s;
  Matrix rho = chart_state(c);
  Matrix u = chart_unitary_factor(c);

  std::vector<Matrix> out;
  out.reserve(s.n_params());
  for (int k = 0; k < s.K(); ++k) {
    const Matrix& p = s.L_decomp.projectors[k];
    out.push_back(0.5 * (p * rho + rho * p));
  }
  for (int j = 0; j < s.D(); ++j) {
    const Matrix& q = s.H_decomp.projectors[j];
    out.push_back(0.5 * kI * (q * rho - rho * q));
  }
  for (int a = 0; a < s.n_alpha(); ++a) {
    auto [k, j] = s.alpha_index[a];
    Matrix inner = std::exp(c.alpha[a]) * alpha_block(s, k, j);
    out.push_back(u * inner * u.adjoint());
  }
  return out;
}

double gram_min_eigenvalue(const ExactChart& c) {
  const auto& s = *c.s;
  std::vector<Matrix> partials = chart_partials(c);
  std::vector<int> active;
  int n_tg = s.K() + s.D();
  for (int i = 0; i < n_tg; ++i) active.push_back(i);
  for (int a = 0; a < s.n_alpha(); ++a) {
    if (s.alpha_active[a]) active.push_back(n_tg + a);
  }
  if (active.empty()) return 0.0;

  int na = static_cast<int>(active.size());
  core::RealMatrix gram(na, na);
  for (int i = 0; i < na; ++i) {
    for (int j = i; j < na; ++j) {
      double v =
          (partials[active[i]].adjoint() * partials[active[j]]).trace().real();
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<core::RealMatrix> es(gram,
                                                     Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ---- tangency identities ----

TangencyReport tangency_check(const ExactChart& c, const sde::ModelSpec& m) {
  const auto& s = *c.s;
  int n = s.dim();
  Matrix l_shifted = s.L_decomp.size() ? s.L_decomp.reconstruct()
                                       : Matrix::Zero(n, n);
  Matrix h_shifted = s.H_decomp.size() ? s.H_decomp.reconstruct()
                                       : Matrix::Zero(n, n);
  double scale = std::max(1.0, std::max(m.L.norm(), m.H.norm()));
  if ((l_shifted + s.L_shift * core::identity(n) - m.L).norm() >
          1e-8 * scale ||
      (h_shifted + s.H_shift * core::identity(n) - m.H).norm() >
          1e-8 * scale) {
    throw std::invalid_argument("tangency_check: chart does not match model");
  }

  Matrix rho = chart_state(c);
  std::vector<Matrix> partials = chart_partials(c);

  TangencyReport rep;

  // coupling field: L'rho + rho L' = sum_k 2 lambda_k d/dtheta_k
  Matrix lhs = l_shifted * rho + rho * l_shifted;
  Matrix rhs = Matrix::Zero(n, n);
  for (int k = 0; k < s.K(); ++k) {
    rhs += 2.0 * s.L_decomp.eigenvalues[k] * partials[k];
  }
  rep.coupling_residual = (lhs - rhs).norm();

  // Hamiltonian field: i[H',rho] = sum_j 2 beta_j d/dgamma_j
  lhs = kI * core::commutator(h_shifted, rho);
  rhs = Matrix::Zero(n, n);
  for (int j = 0; j < s.D(); ++j) {
    rhs += 2.0 * s.H_decomp.eigenvalues[j] * partials[s.K() + j];
  }
  rep.hamiltonian_residual = (lhs - rhs).norm();

  // Stratonovich correction field of the shifted model:
  // F(rho) = -sum_k (1+eta) lambda_k^2 d/dtheta_k
  //          + sum_{k<=j} (1-eta) lambda_k lambda_j d/dalpha_kj
  sde::ModelSpec shifted{h_shifted, l_shifted, s.eta};
  lhs = sde::stratonovich_F(rho, shifted);
  rhs = Matrix::Zero(n, n);
  for (int k = 0; k < s.K(); ++k) {
    double lam = s.L_decomp.eigenvalues[k];
    rhs += -(1.0 + s.eta) * lam * lam * partials[k];
  }
  for (int a = 0; a < s.n_alpha(); ++a) {
    auto [k, j] = s.alpha_index[a];
    double w =
        (1.0 - s.eta) * s.L_decomp.eigenvalues[k] * s.L_decomp.eigenvalues[j];
    rhs += w * partials[s.K() + s.D() + a];
  }
  rep.f_residual = (lhs - rhs).norm();

  rep.gram_min_eig = gram_min_eigenvalue(c);
  rep.independent = rep.gram_min_eig > 1e-10;
  return rep;
}

// ---- closed-form flow ----

ExactChart at_time(const ExactChart& c0, double t, double Y_t) {
  const auto& s = *c0.s;
  double y_shifted = Y_t - s.obs_shift_rate() * t;
  double sqrt_eta = std::sqrt(s.eta);

  ExactChart c = c0;
  c.t = c0.t + t;
  for (int k = 0; k < s.K(); ++k) {
    double lam = s.L_decomp.eigenvalues[k];
    c.theta[k] += -(1.0 + s.eta) * lam * lam * t +
                  2.0 * sqrt_eta * lam * y_shifted;
  }
  for (int j = 0; j < s.D(); ++j) {
    c.gamma[j] += -2.0 * s.H_decomp.eigenvalues[j] * t;
  }
  for (int a = 0; a < s.n_alpha(); ++a) {
    auto [k, j] = s.alpha_index[a];
    c.alpha[a] += (1.0 - s.eta) * s.L_decomp.eigenvalues[k] *
                  s.L_decomp.eigenvalues[j] * t;
  }
  return c;
}

std::vector<ExactChart> propagate_exact(const ExactChart& c0,
                                        const sde::ModelSpec& m,
                                        const sde::TrajectoryRecord& rec) {
  if (std::abs(m.eta - c0.s->eta) > 1e-12 || m.dim() != c0.s->dim()) {
    throw std::invalid_argument("propagate_exact: chart does not match model");
  }
  if (rec.Y.size() != rec.times.size()) {
    throw std::invalid_argument("propagate_exact: record lacks cumulative Y");
  }
  std::vector<ExactChart> out;
  out.reserve(rec.times.size());
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    out.push_back(at_time(c0, rec.times[i] - c0.t, rec.Y[i]));
  }
  return out;
}

// ---- reference comparison ----

GapCurve exact_vs_filter(const sde::ModelSpec& m, const Matrix& rho0,
                         const sde::SdeGrid& grid) {
  ExactChart c0 = make_chart(m, rho0);
  sde::SimOptions opts;
  opts.record_states = true;
  sde::TrajectoryRecord rec = sde::simulate_filter(m, rho0, grid, opts);

  GapCurve curve;
  curve.times = rec.times;
  curve.gap.reserve(rec.times.size());
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    ExactChart c = at_time(c0, rec.times[i], rec.Y[i]);
    double gap = (core::normalized(chart_state(c)) - rec.states[i]).norm();
    curve.gap.push_back(gap);
    curve.max_gap = std::max(curve.max_gap, gap);
  }
  curve.terminal_gap = curve.gap.back();
  return curve;
}

RefinementResult refinement_gaps(const sde::ModelSpec& m, const Matrix& rho0,
                                 double t_final, int level_lo, int level_hi,
                                 int n_traj, std::uint64_t seed) {
  if (level_lo < 1 || level_hi < level_lo || level_hi > 24) {
    throw std::invalid_argument("refinement_gaps: bad level range");
  }
  ExactChart c0 = make_chart(m, rho0);

  RefinementResult res;
  for (int lv = level_lo; lv <= level_hi; ++lv) {
    res.levels.push_back(lv);
    res.dts.push_back(t_final / std::ldexp(1.0, lv));
    res.mean_max_gap.push_back(0.0);
  }

  long n_fine = 1L << level_hi;
  double dt_fine = t_final / static_cast<double>(n_fine);
  std::vector<double> dw_fine(n_fine);

  for (int traj = 0; traj < n_traj; ++traj) {
    sde::GaussianRng rng(sde::mix_seed(seed, traj));
    for (auto& v : dw_fine) v = rng.increment(dt_fine);

    for (std::size_t li = 0; li < res.levels.size(); ++li) {
      int lv = res.levels[li];
      long n_steps = 1L << lv;
      long block = n_fine / n_steps;
      double dt = res.dts[li];

      // one level: coarse-summed Brownian path, EM filter against the
      // closed form driven by the same record
      Matrix rho = rho0;
      double y = 0.0;
      double max_gap =
          (core::normalized(chart_state(c0)) - core::normalized(rho0)).norm();
      for (long k = 0; k < n_steps; ++k) {
        double dw = 0.0;
        for (long i = k * block; i < (k + 1) * block; ++i) dw += dw_fine[i];
        double dy = dw + sde::observation_rate(m, rho) * dt;
        rho = sde::ito_filter_step(rho, m, dw, dt);
        y += dy;
        ExactChart c =
            at_time(c0, dt * static_cast<double>(k + 1), y);
        double gap = (core::normalized(chart_state(c)) - rho).norm();
        max_gap = std::max(max_gap, gap);
      }
      res.mean_max_gap[li] += max_gap / static_cast<double>(n_traj);
    }
  }

  // least-squares slope of log(gap) on log(dt)
  int n = static_cast<int>(res.levels.size());
  if (n >= 2) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = std::log(res.dts[i]);
      double yv = std::log(std::max(res.mean_max_gap[i], 1e-300));
      sx += x;
      sy += yv;
      sxx += x * x;
      sxy += x * yv;
    }
    res.fitted_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  res.monotone = true;
  for (int i = 0; i + 1 < n; ++i) {
    // levels ascend (dt shrinks), so the gap must shrink too
    if (res.mean_max_gap[i + 1] >= res.mean_max_gap[i]) res.monotone = false;
  }
  return res;
}

}  // namespace qf::exact
