#include "qf/filter_sde.hpp"

#include <cmath>
#include <stdexcept>

namespace qf::sde {

namespace {

const core::Complex kI(0.0, 1.0);

}  // namespace

// ---- model ----

void ModelSpec::validate() const {
  core::require_hermitian(H, 1e-10, "ModelSpec.H");
  if (L.rows() != L.cols() || L.rows() != H.rows()) {
    throw std::invalid_argument("ModelSpec: H and L dimensions must match");
  }
  if (!(eta > 0.0) || eta > 1.0) {
    throw std::invalid_argument("ModelSpec: detector efficiency out of range");
  }
}

bool is_qnd(const ModelSpec& m, double tol) {
  if (!core::is_hermitian(m.L, tol)) return false;
  return core::commutator(m.H, m.L).cwiseAbs().maxCoeff() <= tol;
}

void require_qnd(const ModelSpec& m, const std::string& what) {
  if (!is_qnd(m)) {
    throw std::invalid_argument(what +
                                ": requires a QND model (L = L†, [H,L] = 0)");
  }
}

double qnd_variance(const Matrix& L, const Matrix& rho) {
  double first = core::trace_real(L * rho);
  double second = core::trace_real(L * L * rho);
  return second - first * first;
}

// ---- rng ----

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
}

double GaussianRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite; 53-bit mantissa resolution
  double u1 = 1.0 - static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double GaussianRng::increment(double dt) { return std::sqrt(dt) * normal(); }

// ---- filter fields ----

Matrix lindblad_drift(const ModelSpec& m, const Matrix& rho) {
  Matrix ld = m.L.adjoint() * m.L;
  return -kI * core::commutator(m.H, rho) + m.L * rho * m.L.adjoint() -
         0.5 * (ld * rho + rho * ld);
}

Matrix filter_diffusion(const ModelSpec& m, const Matrix& rho) {
  Matrix lr = m.L * rho + rho * m.L.adjoint();
  return std::sqrt(m.eta) * (lr - lr.trace().real() * rho);
}

double observation_rate(const ModelSpec& m, const Matrix& rho) {
  return std::sqrt(m.eta) * ((m.L + m.L.adjoint()) * rho).trace().real();
}

double observation_increment(const Matrix& rho, const ModelSpec& m, double dW,
                             double dt) {
  return dW + observation_rate(m, rho) * dt;
}

Matrix ito_filter_step(const Matrix& rho, const ModelSpec& m, double dW,
                       double dt, core::RepairStats* stats) {
  Matrix next = rho + lindblad_drift(m, rho) * dt + filter_diffusion(m, rho) * dW;
  return core::repair_density(next, stats, true);
}

// ---- Zakai form ----

Matrix zakai_drift(const ModelSpec& m, const Matrix& rho) {
  return lindblad_drift(m, rho);
}

Matrix zakai_diffusion(const ModelSpec& m, const Matrix& rho) {
  return std::sqrt(m.eta) * (m.L * rho + rho * m.L.adjoint());
}

Matrix zakai_step(const Matrix& rho, const ModelSpec& m, double dY,
                  double dt) {
  return rho + zakai_drift(m, rho) * dt + zakai_diffusion(m, rho) * dY;
}

Matrix stratonovich_F(const Matrix& rho, const ModelSpec& m) {
  const Matrix& L = m.L;
  Matrix Ld = L.adjoint();
  return (1.0 - m.eta) * (L * rho * Ld) -
         0.5 * ((m.eta * L + Ld) * L * rho + rho * Ld * (L + m.eta * Ld));
}

Matrix stratonovich_drift(const ModelSpec& m, const Matrix& rho) {
  return -kI * core::commutator(m.H, rho) + stratonovich_F(rho, m);
}

Matrix heun_zakai_step(const Matrix& rho, const ModelSpec& m, double dY,
                       double dt) {
  Matrix d0 = stratonovich_drift(m, rho);
  Matrix g0 = zakai_diffusion(m, rho);
  Matrix pred = rho + d0 * dt + g0 * dY;
  Matrix d1 = stratonovich_drift(m, pred);
  Matrix g1 = zakai_diffusion(m, pred);
  return rho + 0.5 * (d0 + d1) * dt + 0.5 * (g0 + g1) * dY;
}

// ---- trajectories ----

TrajectoryRecord simulate_filter(const ModelSpec& m, const Matrix& rho0,
                                 const SdeGrid& grid, const SimOptions& opts) {
  m.validate();
  if (!core::is_density(rho0)) {
    throw std::invalid_argument("simulate_filter: rho0 is not a density matrix");
  }
  const double dt = grid.dt();
  GaussianRng rng(grid.seed);

  TrajectoryRecord rec;
  rec.measure_tag = opts.measure;
  rec.times.reserve(grid.n_steps + 1);
  rec.dW.reserve(grid.n_steps);
  rec.dY.reserve(grid.n_steps);
  rec.Y.reserve(grid.n_steps + 1);
  rec.times.push_back(0.0);
  rec.Y.push_back(0.0);

  Matrix rho = rho0;
  if (opts.record_states) rec.states.push_back(rho);

  double y = 0.0;
  for (long k = 0; k < grid.n_steps; ++k) {
    double g = rng.increment(dt);
    double rate = observation_rate(m, rho);
    double dW, dY;
    if (opts.measure == Measure::kP) {
      dW = g;
      dY = dW + rate * dt;
    } else {
      dY = g;
      dW = dY - rate * dt;
    }
    rho = ito_filter_step(rho, m, dW, dt, &rec.repair);
    if (!(rho.norm() < opts.blowup_norm)) {
      throw std::runtime_error("simulate_filter: state blow-up at step " +
                               std::to_string(k));
    }
    y += dY;
    rec.dW.push_back(dW);
    rec.dY.push_back(dY);
    rec.Y.push_back(y);
    rec.times.push_back(dt * static_cast<double>(k + 1));
    if (opts.record_states) rec.states.push_back(rho);
  }
  return rec;
}

double ZakaiRecord::true_trace(long i) const {
  return core::trace_real(states[i]) * std::exp(log_scale[i]);
}

ZakaiRecord simulate_zakai(const ModelSpec& m, const Matrix& rho0,
                           const SdeGrid& grid, const std::vector<double>& dY,
                           bool heun) {
  m.validate();
  if (static_cast<long>(dY.size()) != grid.n_steps) {
    throw std::invalid_argument("simulate_zakai: record length mismatch");
  }
  const double dt = grid.dt();

  ZakaiRecord rec;
  rec.times.push_back(0.0);
  rec.states.push_back(rho0);
  rec.log_scale.push_back(0.0);

  Matrix rho = rho0;
  double log_scale = 0.0;
  for (long k = 0; k < grid.n_steps; ++k) {
    rho = heun ? heun_zakai_step(rho, m, dY[k], dt)
               : zakai_step(rho, m, dY[k], dt);
    rho = core::hermitize(rho);
    double tr = core::trace_real(rho);
    if (!(tr > 0.0) || !std::isfinite(tr)) {
      throw std::runtime_error("simulate_zakai: trace collapsed at step " +
                               std::to_string(k));
    }
    if (tr < 1e-6 || tr > 1e6) {
      rho /= tr;
      log_scale += std::log(tr);
    }
    rec.times.push_back(dt * static_cast<double>(k + 1));
    rec.states.push_back(rho);
    rec.log_scale.push_back(log_scale);
  }
  return rec;
}

std::vector<double> gaussian_increments(const SdeGrid& grid) {
  GaussianRng rng(grid.seed);
  std::vector<double> out(grid.n_steps);
  const double dt = grid.dt();
  for (auto& v : out) v = rng.increment(dt);
  return out;
}

}  // namespace qf::sde
