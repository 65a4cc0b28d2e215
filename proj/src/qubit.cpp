#include "qf/qubit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qf/parallel.hpp"

namespace qf::qubit {

namespace {

const core::Complex kI(0.0, 1.0);

// ---- per-chunk accumulation ----

struct Acc {
  std::vector<double> sum, sum2, mn, mx;

  explicit Acc(std::size_t n)
      : sum(n, 0.0),
        sum2(n, 0.0),
        mn(n, std::numeric_limits<double>::infinity()),
        mx(n, -std::numeric_limits<double>::infinity()) {}

  void add(std::size_t i, double v) {
    sum[i] += v;
    sum2[i] += v * v;
    mn[i] = std::min(mn[i], v);
    mx[i] = std::max(mx[i], v);
  }
};

struct ChunkData {
  Acc gap, fid, vf, vp, u, z;
  double truth_gap_max = 0.0;
  double worst_bloch = 0.0;
  long z_reduced = 0;
  long flagged = 0;
  long tikhonov = 0;
  core::RepairStats repair;

  explicit ChunkData(std::size_t n)
      : gap(n), fid(n), vf(n), vp(n), u(n), z(n) {}
};

void finalize_series(const std::vector<ChunkData>& data, long n_traj,
                     Acc ChunkData::*member, SeriesStats* out,
                     std::size_t n_rec) {
  out->mean.assign(n_rec, 0.0);
  out->se.assign(n_rec, 0.0);
  out->min.assign(n_rec, std::numeric_limits<double>::infinity());
  out->max.assign(n_rec, -std::numeric_limits<double>::infinity());
  std::vector<double> sum2(n_rec, 0.0);
  for (const auto& c : data) {
    const Acc& a = c.*member;
    for (std::size_t i = 0; i < n_rec; ++i) {
      out->mean[i] += a.sum[i];
      sum2[i] += a.sum2[i];
      out->min[i] = std::min(out->min[i], a.mn[i]);
      out->max[i] = std::max(out->max[i], a.mx[i]);
    }
  }
  double n = static_cast<double>(n_traj);
  for (std::size_t i = 0; i < n_rec; ++i) {
    out->mean[i] /= n;
    if (n_traj > 1) {
      double var = std::max(
          0.0, (sum2[i] - n * out->mean[i] * out->mean[i]) / (n - 1.0));
      out->se[i] = std::sqrt(var / n);
    }
  }
}

}  // namespace

// ---- parameters ----

sde::ModelSpec QubitParams::model() const {
  sde::ModelSpec m;
  m.H = 0.5 * omega_eg * core::pauli_z();
  m.L = 0.5 * std::sqrt(M) * core::pauli_z();
  m.eta = eta;
  return m;
}

Matrix QubitParams::target_density() const {
  return core::bloch_to_density(target);
}

void QubitParams::validate() const {
  if (!(M > 0.0)) {
    throw std::invalid_argument("QubitParams: M must be > 0");
  }
  if (!(eta > 0.0) || eta > 1.0) {
    throw std::invalid_argument("QubitParams: eta must be in (0, 1]");
  }
  if (!(gains.alpha > 0.0) || !(gains.beta >= 0.0) || !(gains.gamma >= 1.0)) {
    throw std::invalid_argument(
        "QubitParams: gains require alpha > 0, beta >= 0, gamma >= 1");
  }
  if (std::abs(target.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("QubitParams: target must be a pure state");
  }
}

// ---- dynamics ----

BlochVector bloch_step(const BlochVector& v, const QubitParams& p, double u,
                       double dW, double dt, double* pre_norm) {
  double k = std::sqrt(p.eta * p.M);
  BlochVector n;
  n.x = v.x + (-0.5 * p.M * v.x - p.omega_eg * v.y + u * v.z) * dt -
        k * v.x * v.z * dW;
  n.y = v.y + (p.omega_eg * v.x - 0.5 * p.M * v.y) * dt - k * v.y * v.z * dW;
  n.z = v.z - u * v.x * dt + k * (1.0 - v.z * v.z) * dW;
  double norm = n.norm();
  if (pre_norm) *pre_norm = norm;
  if (norm > 1.0) {
    n.x /= norm;
    n.y /= norm;
    n.z /= norm;
  }
  return n;
}

double feedback_V(const Matrix& rho, const QubitParams& p) {
  double overlap = (rho * p.target_density()).trace().real();
  return std::sqrt(std::max(0.0, 1.0 - overlap));
}

double feedback_u(const Matrix& rho_est, const QubitParams& p) {
  double v = feedback_V(rho_est, p);
  double rot = (kI * core::commutator(core::pauli_y(), rho_est) *
                p.target_density())
                   .trace()
                   .real();
  return p.gains.alpha * std::pow(v, p.gains.beta) - p.gains.gamma * rot;
}

double feedback_u(const BlochVector& v, const QubitParams& p) {
  const BlochVector& s = p.target;
  double dot = v.x * s.x + v.y * s.y + v.z * s.z;
  double vv = std::sqrt(std::max(0.0, 0.5 * (1.0 - dot)));
  // Tr(i[sigma_y, rho] rho_e) = x s_z - z s_x
  double rot = v.x * s.z - v.z * s.x;
  return p.gains.alpha * std::pow(vv, p.gains.beta) - p.gains.gamma * rot;
}

// ---- closed loop ----

LoopReport closed_loop_run(const QubitParams& p,
                           const proj::ExponentialFamily& fam,
                           const sde::SdeGrid& grid, const LoopOptions& opts) {
  p.validate();
  fam.validate();
  if (fam.dim() != 2) {
    throw std::invalid_argument("closed_loop_run: requires a qubit family");
  }
  if (opts.n_traj < 1) {
    throw std::invalid_argument("closed_loop_run: n_traj must be >= 1");
  }

  const sde::ModelSpec base = p.model();
  const Matrix rho_e = p.target_density();
  const Matrix half_sy = 0.5 * core::pauli_y();
  const double dt = grid.dt();
  const double k_obs = std::sqrt(p.eta * p.M);
  const core::BlochVector v0 = core::density_to_bloch(fam.rho0);

  std::vector<long> record_idx;
  for (long k = 0; k <= grid.n_steps; k += opts.record_stride) {
    record_idx.push_back(k);
  }
  if (record_idx.back() != grid.n_steps) record_idx.push_back(grid.n_steps);
  const std::size_t n_rec = record_idx.size();

  long chunks = par::n_chunks(opts.n_traj);
  std::vector<ChunkData> data;
  data.reserve(chunks);
  for (long c = 0; c < chunks; ++c) data.emplace_back(n_rec);

  int n_sample = std::min(opts.n_sample_paths, opts.n_traj);
  LoopReport rep;
  auto init_paths = [&](SeriesStats& s) {
    s.paths.assign(n_sample, std::vector<double>(n_rec, 0.0));
  };
  init_paths(rep.gap);
  init_paths(rep.fidelity);
  init_paths(rep.v_filter);
  init_paths(rep.v_proj);
  init_paths(rep.u);
  init_paths(rep.z_true);

  auto simulate_one = [&](long traj, ChunkData& cd) {
    {
      sde::GaussianRng rng(sde::mix_seed(grid.seed, traj));
      core::BlochVector v_true = v0;
      Matrix rho_f = fam.rho0;
      proj::ProjState st = proj::make_state(fam);
      sde::ModelSpec ctrl = base;

      std::size_t next = 0;
      for (long k = 0; k <= grid.n_steps; ++k) {
        Matrix rho_p = core::normalized(proj::chart(fam, st.theta));
        double u = opts.feedback ? feedback_u(rho_p, p) : 0.0;

        if (next < n_rec && record_idx[next] == k) {
          Matrix rho_true = core::bloch_to_density(v_true);
          double gap = (rho_f - rho_p).norm();
          double fid = (rho_true * rho_e).trace().real();
          double vf = sde::qnd_variance(base.L, rho_f);
          double vp = sde::qnd_variance(base.L, rho_p);
          cd.gap.add(next, gap);
          cd.fid.add(next, fid);
          cd.vf.add(next, vf);
          cd.vp.add(next, vp);
          cd.u.add(next, u);
          cd.z.add(next, v_true.z);
          if (traj < n_sample) {
            rep.gap.paths[traj][next] = gap;
            rep.fidelity.paths[traj][next] = fid;
            rep.v_filter.paths[traj][next] = vf;
            rep.v_proj.paths[traj][next] = vp;
            rep.u.paths[traj][next] = u;
            rep.z_true.paths[traj][next] = v_true.z;
          }
          ++next;
        }
        if (k == grid.n_steps) break;

        ctrl.H = base.H + u * half_sy;
        double dW = rng.increment(dt);
        double dY = dW + k_obs * v_true.z * dt;

        double pre_norm = 0.0;
        v_true = bloch_step(v_true, p, u, dW, dt, &pre_norm);
        cd.worst_bloch = std::max(cd.worst_bloch, pre_norm);

        double dW_f = dY - sde::observation_rate(ctrl, rho_f) * dt;
        rho_f = sde::ito_filter_step(rho_f, ctrl, dW_f, dt, &cd.repair);

        proj::projection_step(st, fam, ctrl, dY, dt);

        cd.truth_gap_max = std::max(
            cd.truth_gap_max, (core::bloch_to_density(v_true) - rho_f).norm());
      }

      if (std::abs(v_true.z) > 0.99) ++cd.z_reduced;
      if (st.out_of_bounds) ++cd.flagged;
      cd.tikhonov += st.tikhonov_count;
    }
  };

  par::for_chunks(opts.n_traj, opts.threads,
                  [&](long chunk, long begin, long end) {
                    ChunkData& cd = data[chunk];
                    for (long traj = begin; traj < end; ++traj) {
                      try {
                        simulate_one(traj, cd);
                      } catch (const std::exception& e) {
                        throw std::runtime_error("trajectory " +
                                                 std::to_string(traj) + ": " +
                                                 e.what());
                      }
                    }
                  });

  rep.n_traj = opts.n_traj;
  rep.times.resize(n_rec);
  for (std::size_t i = 0; i < n_rec; ++i) {
    rep.times[i] = dt * static_cast<double>(record_idx[i]);
  }
  finalize_series(data, opts.n_traj, &ChunkData::gap, &rep.gap, n_rec);
  finalize_series(data, opts.n_traj, &ChunkData::fid, &rep.fidelity, n_rec);
  finalize_series(data, opts.n_traj, &ChunkData::vf, &rep.v_filter, n_rec);
  finalize_series(data, opts.n_traj, &ChunkData::vp, &rep.v_proj, n_rec);
  finalize_series(data, opts.n_traj, &ChunkData::u, &rep.u, n_rec);
  finalize_series(data, opts.n_traj, &ChunkData::z, &rep.z_true, n_rec);
  for (const auto& cd : data) {
    rep.truth_filter_gap_max = std::max(rep.truth_filter_gap_max,
                                        cd.truth_gap_max);
    rep.worst_bloch_norm = std::max(rep.worst_bloch_norm, cd.worst_bloch);
    rep.frac_z_reduced += static_cast<double>(cd.z_reduced);
    rep.theta_flagged += cd.flagged;
    rep.tikhonov_total += cd.tikhonov;
    rep.repair.merge(cd.repair);
  }
  rep.frac_z_reduced /= static_cast<double>(opts.n_traj);
  return rep;
}

}  // namespace qf::qubit
