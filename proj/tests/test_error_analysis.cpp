#include <cmath>
#include <random>

#include "doctest.h"
#include "qf/core.hpp"
#include "qf/error_analysis.hpp"
#include "qf/filter_sde.hpp"
#include "qf/projection.hpp"
#include "test_util.hpp"

using namespace qf;
using core::Matrix;
using core::RealVector;
using sde::ModelSpec;

namespace {

ModelSpec spin_model(double eta = 0.5) {
  ModelSpec m;
  m.H = 0.5 * core::pauli_z();
  m.L = 0.5 * core::pauli_z();
  m.eta = eta;
  return m;
}

Matrix minus_x_state() { return 0.5 * (core::identity(2) - core::pauli_x()); }

proj::ExponentialFamily spin_family() {
  return proj::qnd_family(spin_model(), minus_x_state());
}

}  // namespace

TEST_CASE("closed-form hypotheses detection") {
  auto fam = spin_family();
  CHECK(err::qnd_projector_hypotheses(fam, spin_model()));

  auto broken = fam;
  broken.A[0] = 2.0 * broken.A[0];  // not idempotent
  CHECK_FALSE(err::qnd_projector_hypotheses(broken, spin_model()));

  broken = fam;
  broken.qnd_lambda.clear();
  CHECK_FALSE(err::qnd_projector_hypotheses(broken, spin_model()));

  ModelSpec non_qnd = spin_model();
  non_qnd.L = 0.5 * core::pauli_x();
  CHECK_FALSE(err::qnd_projector_hypotheses(fam, non_qnd));
}

TEST_CASE("residuals of the spin model at time zero") {
  auto fam = spin_family();
  ModelSpec m = spin_model();
  RealVector theta = RealVector::Zero(2);

  auto r = err::residuals(fam, theta, m);
  // X0 = -i[H, rho0] has entries +-i/2 off the diagonal
  Matrix x0 = -std::complex<double>(0, 1) * core::commutator(m.H, fam.rho0);
  CHECK((r.omega - x0).norm() < 1e-12);
  CHECK((r.omega - err::omega_closed_form(fam, theta, x0)).norm() < 1e-12);
  CHECK((r.c1 - err::c1_closed_form(fam, theta, m)).norm() < 1e-12);
  CHECK(r.c2.norm() < 1e-13);

  // C1(0) = [[0, 1/8], [1/8, 0]] here
  CHECK(r.c1(0, 1).real() == doctest::Approx(0.125).epsilon(1e-12));
  double e0 = (r.omega + r.c1 + r.c2).norm();
  CHECK(e0 == doctest::Approx(std::sqrt(17.0 / 32.0)).epsilon(1e-13));
}

TEST_CASE("closed forms match the generic route on random instances") {
  std::mt19937_64 eng(501);
  for (int rep = 0; rep < 10; ++rep) {
    int n = 2 + rep % 4;
    auto inst = testutil::random_qnd(eng, n, false);
    auto fam = proj::qnd_family(inst.model, inst.rho0);
    RealVector theta =
        proj::qnd_theta_closed_form(fam, inst.model.eta, 0.4, 0.3);

    auto r = err::residuals(fam, theta, inst.model);
    Matrix x0 =
        -std::complex<double>(0, 1) * core::commutator(inst.model.H, fam.rho0);
    CHECK((r.omega - err::omega_closed_form(fam, theta, x0)).norm() < 1e-9);
    CHECK((r.c1 - err::c1_closed_form(fam, theta, inst.model)).norm() < 1e-9);
    CHECK(r.c2.norm() < 1e-10);
  }
}

TEST_CASE("completed projector set handles a kernel block") {
  // one eigenvalue of L vanishes, so the family projectors do not resolve
  // the identity and the closed form must append the kernel block
  std::mt19937_64 eng(502);
  Matrix u = testutil::random_unitary(eng, 3);
  ModelSpec m;
  m.L = testutil::conjugated_diagonal(u, {1.5, 0.7, 0.0});
  m.H = testutil::conjugated_diagonal(u, {0.4, -0.9, 1.1});
  m.eta = 0.6;
  Matrix rho0 = testutil::random_density(eng, 3);
  auto fam = proj::qnd_family(m, rho0);
  REQUIRE(fam.m() == 2);  // the zero eigenvalue is dropped
  CHECK_FALSE(fam.sum_is_identity);

  RealVector theta = proj::qnd_theta_closed_form(fam, m.eta, 0.2, -0.1);
  auto r = err::residuals(fam, theta, m);
  CHECK((r.c1 - err::c1_closed_form(fam, theta, m)).norm() < 1e-9);
  CHECK(r.c2.norm() < 1e-10);
}

TEST_CASE("bound ingredients of the spin model") {
  auto fam = spin_family();
  auto b = err::bound_ingredients(fam, spin_model());
  CHECK(b.sigma == doctest::Approx(0.125).epsilon(1e-13));
  REQUIRE(b.Y.size() == 2);
  for (const auto& y : b.Y) {
    CHECK(y(0, 1).real() == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(std::abs(y(0, 0)) < 1e-13);
  }
  CHECK(core::frobenius_norm(b.X0) ==
        doctest::Approx(std::sqrt(0.5)).epsilon(1e-13));
  // sigma sqrt(1/2) + sqrt(1/2) = 9 / (8 sqrt(2))
  CHECK(err::bound_rhs(b) ==
        doctest::Approx(9.0 / (8.0 * std::sqrt(2.0))).epsilon(1e-14));
}

TEST_CASE("residual curve is deterministic for the spin model") {
  // theta_1 + theta_2 = -t/2 independent of the record, so both residual
  // fields scale by e^{-t/4} and e_t = sqrt(17/32) e^{-t/4} exactly
  auto fam = spin_family();
  ModelSpec m = spin_model();
  sde::SdeGrid grid;
  grid.t_final = 1.0;
  grid.n_steps = 256;
  grid.seed = 77;
  err::ResidualOptions opts;
  opts.n_traj = 16;
  opts.threads = 1;
  opts.record_stride = 64;

  auto rep = err::empirical_e_t(fam, m, grid, opts);
  REQUIRE(rep.times.size() == 5);
  CHECK(rep.n_traj == 16);
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    double expected = std::sqrt(17.0 / 32.0) * std::exp(-rep.times[i] / 4.0);
    CHECK(rep.e_t[i] == doctest::Approx(expected).epsilon(1e-10));
    // determinism: any genuine ensemble spread would sit near 1e-2
    CHECK(rep.e_t_se[i] < 1e-7);
    CHECK(rep.c2_mean[i] < 1e-12);
    CHECK(rep.e_t[i] < rep.bound);
  }
  CHECK(rep.bound ==
        doctest::Approx(9.0 / (8.0 * std::sqrt(2.0))).epsilon(1e-13));

  // generic projection route agrees with the closed forms
  opts.use_generic = true;
  auto rep2 = err::empirical_e_t(fam, m, grid, opts);
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    CHECK(rep2.e_t[i] == doctest::Approx(rep.e_t[i]).epsilon(1e-9));
  }
}

TEST_CASE("empirical curve rejects non-projector families") {
  auto fam = spin_family();
  fam.A[0] = 2.0 * fam.A[0];
  sde::SdeGrid grid;
  grid.t_final = 0.1;
  grid.n_steps = 8;
  CHECK_THROWS(err::empirical_e_t(fam, spin_model(), grid));
}

TEST_CASE("fully commuting models collapse onto the family") {
  std::mt19937_64 eng(503);
  auto inst = testutil::random_qnd(eng, 3, true);  // rho0 in the eigenbasis
  auto fam = proj::qnd_family(inst.model, inst.rho0);
  sde::SdeGrid grid;
  grid.t_final = 1.0;
  grid.n_steps = 1 << 11;
  grid.seed = 13;
  double gap = err::equivalence_check(inst.model, fam, inst.rho0, grid);
  CHECK(gap < 20.0 * std::sqrt(grid.dt()));

  // a generic rho0 breaks the commutation hypothesis
  auto bad = testutil::random_qnd(eng, 3, false);
  auto fam2 = proj::qnd_family(bad.model, bad.rho0);
  CHECK_THROWS(err::equivalence_check(bad.model, fam2, bad.rho0, grid));
}
