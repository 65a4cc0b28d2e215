#pragma once

// shared random fixtures for the unit tests; every generator takes the
// engine by reference so each test case owns its stream and stays
// deterministic regardless of execution order

#include <numeric>
#include <random>
#include <vector>

#include "qf/core.hpp"
#include "qf/filter_sde.hpp"

namespace testutil {

using qf::core::Complex;
using qf::core::Matrix;

inline Matrix random_matrix(std::mt19937_64& eng, int n) {
  std::normal_distribution<double> g;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = Complex(g(eng), g(eng));
  }
  return a;
}

inline Matrix random_hermitian(std::mt19937_64& eng, int n) {
  Matrix a = random_matrix(eng, n);
  return 0.5 * (a + a.adjoint());
}

inline Matrix random_unitary(std::mt19937_64& eng, int n) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(eng, n));
  return Matrix(qr.householderQ());
}

inline Matrix random_density(std::mt19937_64& eng, int n) {
  Matrix a = random_matrix(eng, n);
  Matrix rho = a * a.adjoint();
  return rho / rho.trace();
}

// distinct values in [-2, 2] with pairwise gaps >= 0.25
inline std::vector<double> distinct_values(std::mt19937_64& eng, int n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v;
  while (static_cast<int>(v.size()) < n) {
    double x = u(eng);
    bool ok = true;
    for (double w : v) ok = ok && std::abs(x - w) >= 0.25;
    if (ok) v.push_back(x);
  }
  return v;
}

inline Matrix conjugated_diagonal(const Matrix& u,
                                  const std::vector<double>& d) {
  Matrix diag = Matrix::Zero(u.rows(), u.cols());
  for (int i = 0; i < u.rows(); ++i) diag(i, i) = d[i];
  Matrix a = u * diag * u.adjoint();
  return 0.5 * (a + a.adjoint());
}

struct QndInstance {
  qf::sde::ModelSpec model;
  Matrix rho0;
};

// QND model ([H, L] = 0, L Hermitian); commuting_rho0 additionally puts
// rho0 in the shared eigenbasis
inline QndInstance random_qnd(std::mt19937_64& eng, int n,
                              bool commuting_rho0) {
  Matrix u = random_unitary(eng, n);
  QndInstance inst;
  inst.model.L = conjugated_diagonal(u, distinct_values(eng, n));
  inst.model.H = conjugated_diagonal(u, distinct_values(eng, n));
  std::uniform_real_distribution<double> ue(0.3, 1.0);
  inst.model.eta = ue(eng);
  if (commuting_rho0) {
    std::uniform_real_distribution<double> up(0.05, 1.0);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) total += (v = up(eng));
    for (auto& v : p) v /= total;
    inst.rho0 = conjugated_diagonal(u, p);
  } else {
    inst.rho0 = random_density(eng, n);
  }
  return inst;
}

// commuting Hermitian generators (not necessarily projectors) sharing a
// random eigenbasis, plus a random density
struct FamilyInstance {
  std::vector<Matrix> A;
  Matrix rho0;
};

inline FamilyInstance random_commuting_family(std::mt19937_64& eng, int n,
                                              int m) {
  Matrix u = random_unitary(eng, n);
  FamilyInstance f;
  for (int i = 0; i < m; ++i) {
    f.A.push_back(conjugated_diagonal(u, distinct_values(eng, n)));
  }
  f.rho0 = random_density(eng, n);
  return f;
}

}  // namespace testutil
