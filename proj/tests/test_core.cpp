#include <cmath>
#include <random>

#include "doctest.h"
#include "qf/core.hpp"
#include "test_util.hpp"

using namespace qf::core;
using testutil::random_density;
using testutil::random_hermitian;
using testutil::random_matrix;
using testutil::random_unitary;

namespace {
const Complex kI(0.0, 1.0);
}

TEST_CASE("pauli algebra") {
  Matrix x = pauli_x(), y = pauli_y(), z = pauli_z(), id = identity(2);
  CHECK((x * x - id).norm() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK((y * y - id).norm() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK((z * z - id).norm() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK((x * y - kI * z).norm() < 1e-15);
  CHECK((commutator(x, y) - 2.0 * kI * z).norm() < 1e-15);
  CHECK(std::abs(x.trace()) < 1e-15);
  CHECK(is_hermitian(x));
  CHECK(is_hermitian(y));
  CHECK(is_hermitian(z));
}

TEST_CASE("hermiticity checks") {
  std::mt19937_64 eng(101);
  Matrix h = random_hermitian(eng, 4);
  CHECK(hermiticity_defect(h) < 1e-15);
  CHECK(is_hermitian(h));
  CHECK_NOTHROW(require_hermitian(h, 1e-12, "h"));

  Matrix a = random_matrix(eng, 4);
  a(1, 2) += Complex(0.0, 0.5);
  CHECK(hermiticity_defect(a) > 0.1);
  CHECK_FALSE(is_hermitian(a));
  CHECK_THROWS(require_hermitian(a, 1e-12, "a"));
  CHECK(hermiticity_defect(hermitize(a)) < 1e-15);
}

TEST_CASE("commutator identities") {
  std::mt19937_64 eng(102);
  Matrix a = random_matrix(eng, 5), b = random_matrix(eng, 5);
  CHECK((commutator(a, b) + commutator(b, a)).norm() < 1e-12);
  // AB = ([A,B] + {A,B}) / 2
  CHECK((a * b - 0.5 * (commutator(a, b) + anticommutator(a, b))).norm() <
        1e-12);
  CHECK(std::abs(commutator(a, b).trace()) < 1e-12);
}

TEST_CASE("norms and traces") {
  std::mt19937_64 eng(103);
  Matrix a = random_matrix(eng, 4);
  double direct = std::sqrt((a.adjoint() * a).trace().real());
  CHECK(frobenius_norm(a) == doctest::Approx(direct).epsilon(1e-12));
  Matrix h = random_hermitian(eng, 4);
  CHECK(trace_real(h) == doctest::Approx(h.trace().real()).epsilon(1e-14));
  Matrix n = normalized(h + 5.0 * identity(4));
  CHECK(trace_real(n) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("singular values against SVD") {
  std::mt19937_64 eng(104);
  Matrix a = random_matrix(eng, 5);
  auto sv = singular_values(a);
  Eigen::JacobiSVD<Matrix> svd(a);
  REQUIRE(sv.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(sv[i] == doctest::Approx(svd.singularValues()[i]).epsilon(1e-10));
    if (i > 0) CHECK(sv[i] <= sv[i - 1] + 1e-12);
  }
  // rank-deficient: last singular value vanishes
  Matrix r = a;
  r.col(4) = r.col(3);
  auto svr = singular_values(r);
  CHECK(svr.back() < 1e-10);
}

TEST_CASE("spectral decomposition of a known operator") {
  std::mt19937_64 eng(105);
  Matrix u = random_unitary(eng, 4);
  std::vector<double> vals = {2.0, 0.5, -1.0, -1.0};  // one double eigenvalue
  Matrix op = testutil::conjugated_diagonal(u, vals);

  auto d = spectral_decompose(op);
  REQUIRE(d.size() == 3);
  CHECK(d.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(d.eigenvalues[1] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(d.eigenvalues[2] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(d.multiplicities[0] == 1);
  CHECK(d.multiplicities[2] == 2);

  Matrix sum = Matrix::Zero(4, 4);
  for (int k = 0; k < d.size(); ++k) {
    const Matrix& p = d.projectors[k];
    CHECK((p * p - p).norm() < 1e-10);        // idempotent
    CHECK(hermiticity_defect(p) < 1e-12);     // self-adjoint
    for (int l = 0; l < k; ++l) {
      CHECK((p * d.projectors[l]).norm() < 1e-10);  // orthogonal
    }
    sum += p;
  }
  CHECK((sum - identity(4)).norm() < 1e-10);
  CHECK(d.complete());
  CHECK((d.reconstruct() - op).norm() < 1e-10);
}

TEST_CASE("spectral decomposition clusters nearby eigenvalues") {
  Matrix op = Matrix::Zero(3, 3);
  op(0, 0) = 1.0;
  op(1, 1) = 1.0 + 1e-12;
  op(2, 2) = -2.0;
  auto d = spectral_decompose(op);
  REQUIRE(d.size() == 2);
  CHECK(d.multiplicities[0] == 2);
}

TEST_CASE("hermitian exponential against the series") {
  std::mt19937_64 eng(106);
  Matrix h = 0.3 * random_hermitian(eng, 4);
  Matrix series = identity(4), term = identity(4);
  for (int k = 1; k <= 30; ++k) {
    term = term * h / static_cast<double>(k);
    series += term;
  }
  CHECK((hermitian_exp(h) - series).norm() < 1e-12);
  CHECK((hermitian_exp(Matrix::Zero(3, 3)) - identity(3)).norm() < 1e-15);
}

TEST_CASE("phase exponential is unitary") {
  std::mt19937_64 eng(107);
  Matrix h = random_hermitian(eng, 4);
  Matrix u = phase_exp(h);
  CHECK((u * u.adjoint() - identity(4)).norm() < 1e-12);
  // e^{i pi sigma_z} = -I
  CHECK((phase_exp(M_PI * pauli_z()) + identity(2)).norm() < 1e-12);
}

TEST_CASE("bloch round trip") {
  std::mt19937_64 eng(108);
  std::uniform_real_distribution<double> u(-0.57, 0.57);
  for (int rep = 0; rep < 10; ++rep) {
    BlochVector v{u(eng), u(eng), u(eng)};
    Matrix rho = bloch_to_density(v);
    CHECK(trace_real(rho) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(is_positive_semidefinite(rho));
    BlochVector w = density_to_bloch(rho);
    CHECK(w.x == doctest::Approx(v.x).epsilon(1e-12));
    CHECK(w.y == doctest::Approx(v.y).epsilon(1e-12));
    CHECK(w.z == doctest::Approx(v.z).epsilon(1e-12));
  }
  BlochVector mixed = density_to_bloch(0.5 * identity(2));
  CHECK(mixed.norm() < 1e-14);
}

TEST_CASE("density validation") {
  std::mt19937_64 eng(109);
  CHECK(is_density(random_density(eng, 3)));
  CHECK_FALSE(is_density(2.0 * random_density(eng, 3)));  // trace 2
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.2;
  neg(1, 1) = -0.2;
  CHECK_FALSE(is_density(neg));
  CHECK(min_eigenvalue(neg) == doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("repair clips negative eigenvalues") {
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = 1.05;
  bad(1, 1) = -0.05;
  bad(0, 1) = Complex(0.0, 1e-5);  // small skew part too
  RepairStats stats;
  Matrix fixed = repair_density(bad, &stats, true);
  CHECK(is_density(fixed));
  CHECK(trace_real(fixed) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(stats.positivity_repairs == 1);
  CHECK(stats.worst_min_eig == doctest::Approx(-0.05).epsilon(1e-6));
  CHECK(stats.steps == 1);

  RepairStats other;
  other.steps = 2;
  other.worst_min_eig = -0.5;
  other.merge(stats);
  CHECK(other.steps == 3);
  CHECK(other.worst_min_eig == doctest::Approx(-0.5));
}

TEST_CASE("matrix json round trip") {
  std::mt19937_64 eng(110);
  Matrix a = random_matrix(eng, 3);
  Matrix b = matrix_from_json(matrix_to_json(a));
  CHECK((a - b).norm() == 0.0);  // exact: doubles survive the trip
}
