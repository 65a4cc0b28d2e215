#pragma once

// Ito and Stratonovich propagation of the diffusive quantum filter for a
// single homodyne channel: the normalized filter, the observation process,
// the linear unnormalized (Zakai) form with its Stratonovich drift F, and
// seeded trajectory simulation under the physical measure P or the
// reference measure P' (record driven as a Wiener process).

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qf/core.hpp"

namespace qf::sde {

using core::Matrix;

// ---- model ----

struct ModelSpec {
  Matrix H;          // Hamiltonian, Hermitian
  Matrix L;          // coupling operator, Hermitian in QND mode
  double eta = 1.0;  // detector efficiency in (0, 1]

  int dim() const { return static_cast<int>(H.rows()); }
  // throws when H is not Hermitian, dims mismatch, or eta is outside (0, 1]
  void validate() const;
};

// L = L† and [H, L] = 0 within tol
bool is_qnd(const ModelSpec& m, double tol = 1e-10);
void require_qnd(const ModelSpec& m, const std::string& what);

// variance of the measured observable: Tr(L² rho) - Tr²(L rho)
double qnd_variance(const Matrix& L, const Matrix& rho);

// ---- grid ----

struct SdeGrid {
  double t_final = 1.0;
  long n_steps = 1;
  std::uint64_t seed = 0;

  double dt() const { return t_final / static_cast<double>(n_steps); }
};

// ---- rng ----

std::uint64_t splitmix64(std::uint64_t x);
// per-trajectory stream: splitmix64(master ^ (0x9E3779B97F4A7C15 * (index+1)))
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}
  double normal();              // standard normal, Box-Muller with cached spare
  double increment(double dt);  // sqrt(dt) * normal()

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---- filter fields ----

// -i[H,rho] + L rho L† - (L†L rho + rho L†L)/2
Matrix lindblad_drift(const ModelSpec& m, const Matrix& rho);
// sqrt(eta) (L rho + rho L† - Tr[(L+L†)rho] rho)
Matrix filter_diffusion(const ModelSpec& m, const Matrix& rho);
// sqrt(eta) Tr[(L+L†)rho]
double observation_rate(const ModelSpec& m, const Matrix& rho);
// dY = dW + sqrt(eta) Tr[(L+L†)rho] dt
double observation_increment(const Matrix& rho, const ModelSpec& m, double dW,
                             double dt);

// Euler-Maruyama step of the normalized filter; result is symmetrized and
// positivity-repaired, with pre-repair defects recorded through stats
Matrix ito_filter_step(const Matrix& rho, const ModelSpec& m, double dW,
                       double dt, core::RepairStats* stats = nullptr);

// ---- Zakai (unnormalized) form ----

// linear drift: -i[H,rho] + L rho L† - (L†L rho + rho L†L)/2
Matrix zakai_drift(const ModelSpec& m, const Matrix& rho);
// sqrt(eta) (L rho + rho L†)
Matrix zakai_diffusion(const ModelSpec& m, const Matrix& rho);
// Euler-Maruyama step of the linear equation driven by the record increment
Matrix zakai_step(const Matrix& rho, const ModelSpec& m, double dY, double dt);

// Stratonovich drift correction: F(rho) = (1-eta) L rho L†
//   - ((eta L + L†) L rho + rho L† (L + eta L†)) / 2
Matrix stratonovich_F(const Matrix& rho, const ModelSpec& m);
// -i[H,rho] + F(rho)
Matrix stratonovich_drift(const ModelSpec& m, const Matrix& rho);
// Euler-Heun step of the Stratonovich form driven by the record increment
Matrix heun_zakai_step(const Matrix& rho, const ModelSpec& m, double dY,
                       double dt);

// ---- trajectories ----

enum class Measure { kP, kPprime };

struct TrajectoryRecord {
  std::vector<double> times;   // n_steps + 1
  std::vector<double> dW;      // n_steps
  std::vector<double> dY;      // n_steps
  std::vector<double> Y;       // cumulative record, n_steps + 1, Y[0] = 0
  std::vector<Matrix> states;  // normalized states, n_steps + 1
  Measure measure_tag = Measure::kP;
  core::RepairStats repair;
};

struct SimOptions {
  Measure measure = Measure::kP;
  bool record_states = true;
  double blowup_norm = 1e6;
};

// Ito filter trajectory from rho0. Under P the innovation dW is Gaussian
// and dY = dW + rate dt; under P' the record dY is Gaussian and the filter
// consumes the innovation dW = dY - rate dt. Deterministic given grid.seed.
TrajectoryRecord simulate_filter(const ModelSpec& m, const Matrix& rho0,
                                 const SdeGrid& grid,
                                 const SimOptions& opts = {});

// ---- Zakai trajectories ----

struct ZakaiRecord {
  std::vector<double> times;
  std::vector<Matrix> states;     // rescaled unnormalized states
  std::vector<double> log_scale;  // log of the factor taken out
  // Tr(states[i]) * exp(log_scale[i])
  double true_trace(long i) const;
};

// integrates the linear form driven by the supplied record increments;
// rescales by the trace whenever it leaves [1e-6, 1e6], accumulating the
// log factor so the normalized estimate is unaffected
ZakaiRecord simulate_zakai(const ModelSpec& m, const Matrix& rho0,
                           const SdeGrid& grid, const std::vector<double>& dY,
                           bool heun = false);

// i.i.d. Gaussian(0, dt) increments, one per grid step, from grid.seed
std::vector<double> gaussian_increments(const SdeGrid& grid);

}  // namespace qf::sde
