#pragma once

// Dense complex Hermitian linear algebra for small quantum systems:
// state validation, spectral decomposition into distinct-eigenvalue
// projectors, matrix exponentials, Bloch conversions, and singular-value
// utilities. Everything is value-semantic and safe to share across threads.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace qf::core {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kEigTol = 1e-9;
inline constexpr double kTraceTol = 1e-9;
inline constexpr double kClusterTol = 1e-8;
inline constexpr double kProjectorTol = 1e-10;

// ---- constants ----

Matrix pauli_x();
Matrix pauli_y();
Matrix pauli_z();
Matrix identity(int n);

// ---- validation ----

// max entry-wise modulus of A - A†
double hermiticity_defect(const Matrix& a);
bool is_hermitian(const Matrix& a, double tol = kHermitianTol);
void require_hermitian(const Matrix& a, double tol, const std::string& what);
double min_eigenvalue(const Matrix& a);
bool is_positive_semidefinite(const Matrix& a, double tol = kEigTol);
bool is_density(const Matrix& a, double eig_tol = kEigTol,
                double trace_tol = kTraceTol);
Matrix hermitize(const Matrix& a);

// ---- basic operations ----

Matrix commutator(const Matrix& a, const Matrix& b);
Matrix anticommutator(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double trace_real(const Matrix& a);
// trace-normalized copy (caller guarantees nonzero trace)
Matrix normalized(const Matrix& a);
// descending; zeros returned for null directions
std::vector<double> singular_values(const Matrix& a);

// ---- spectral decomposition ----

struct SpectralDecomposition {
  std::vector<double> eigenvalues;  // distinct, descending
  std::vector<Matrix> projectors;
  std::vector<int> multiplicities;

  int size() const { return static_cast<int>(eigenvalues.size()); }
  int dim() const { return projectors.empty() ? 0 : static_cast<int>(projectors[0].rows()); }
  Matrix reconstruct() const;
  // true when the projectors resolve the identity
  bool complete(double tol = kProjectorTol) const;
};

// Groups eigenvalues within cluster_tol (relative to the spectral radius)
// and builds the orthogonal projector of each cluster.
SpectralDecomposition spectral_decompose(const Matrix& op,
                                         double cluster_tol = kClusterTol);

// ---- exponentials ----

// e^A for Hermitian A, via eigendecomposition
Matrix hermitian_exp(const Matrix& a);
// e^{iA} for Hermitian A (skew-Hermitian exponent), unitary result
Matrix phase_exp(const Matrix& a);

// ---- Bloch coordinates ----

struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double norm() const;
};

Matrix bloch_to_density(const BlochVector& v);
BlochVector density_to_bloch(const Matrix& rho);  // dim 2 only

// ---- state repair ----

struct RepairStats {
  long steps = 0;
  long hermiticity_warnings = 0;  // symmetrization correction > 1e-6
  long positivity_repairs = 0;    // eigenvalue below -1e-9 clipped
  double worst_hermiticity = 0.0;
  double worst_min_eig = 0.0;     // most negative eigenvalue seen pre-repair
  double worst_trace_err = 0.0;   // |Tr - 1| pre-repair (normalized states)
  double worst_bloch_norm = 0.0;  // qubit runs only

  void merge(const RepairStats& other);
};

// Symmetrizes, clips eigenvalues below -1e-9 to zero and (optionally)
// renormalizes the trace; pre-repair defects are recorded in stats.
Matrix repair_density(const Matrix& a, RepairStats* stats,
                      bool renormalize_trace);

// ---- JSON (de)serialization ----

// n x n array of [re, im] pairs
nlohmann::json matrix_to_json(const Matrix& a);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace qf::core
