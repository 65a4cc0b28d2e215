#include "qf/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qf::core {

namespace {

const Complex kI(0.0, 1.0);

void require_square(const Matrix& a, const std::string& what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw std::invalid_argument(what + ": matrix must be square and non-empty");
  }
}

}  // namespace

// ---- constants ----

Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Matrix pauli_y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}

Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

Matrix identity(int n) { return Matrix::Identity(n, n); }

// ---- validation ----

double hermiticity_defect(const Matrix& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

bool is_hermitian(const Matrix& a, double tol) {
  return a.rows() == a.cols() && hermiticity_defect(a) <= tol;
}

void require_hermitian(const Matrix& a, double tol, const std::string& what) {
  require_square(a, what);
  double defect = hermiticity_defect(a);
  if (defect > tol) {
    throw std::invalid_argument(what + ": not Hermitian (defect " +
                                std::to_string(defect) + ")");
  }
}

double min_eigenvalue(const Matrix& a) {
  const auto n = a.rows();
  if (n == 2) {
    // closed form for 2x2 Hermitian: (tr/2) - sqrt((a-d)^2/4 + |b|^2)
    double p = 0.5 * std::real(a(0, 0) - a(1, 1));
    double q = std::abs(a(0, 1));
    return 0.5 * std::real(a(0, 0) + a(1, 1)) - std::sqrt(p * p + q * q);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_positive_semidefinite(const Matrix& a, double tol) {
  return is_hermitian(a, 1e-10) && min_eigenvalue(a) >= -tol;
}

bool is_density(const Matrix& a, double eig_tol, double trace_tol) {
  return is_positive_semidefinite(a, eig_tol) &&
         std::abs(trace_real(a) - 1.0) <= trace_tol;
}

Matrix hermitize(const Matrix& a) { return 0.5 * (a + a.adjoint()); }

// ---- basic operations ----

Matrix commutator(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("commutator: dimension mismatch");
  }
  return a * b - b * a;
}

Matrix anticommutator(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("anticommutator: dimension mismatch");
  }
  return a * b + b * a;
}

double frobenius_norm(const Matrix& a) { return a.norm(); }

double trace_real(const Matrix& a) { return a.trace().real(); }

Matrix normalized(const Matrix& a) { return a / a.trace(); }

std::vector<double> singular_values(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  return std::vector<double>(s.data(), s.data() + s.size());
}

// ---- spectral decomposition ----

Matrix SpectralDecomposition::reconstruct() const {
  if (projectors.empty()) return Matrix();
  Matrix sum = Matrix::Zero(dim(), dim());
  for (int k = 0; k < size(); ++k) sum += eigenvalues[k] * projectors[k];
  return sum;
}

bool SpectralDecomposition::complete(double tol) const {
  if (projectors.empty()) return false;
  Matrix sum = Matrix::Zero(dim(), dim());
  for (const auto& p : projectors) sum += p;
  return (sum - identity(dim())).cwiseAbs().maxCoeff() <= tol;
}

SpectralDecomposition spectral_decompose(const Matrix& op, double cluster_tol) {
  require_hermitian(op, 1e-10, "spectral_decompose");
  Eigen::SelfAdjointEigenSolver<Matrix> es(op);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("spectral_decompose: eigensolver failed");
  }
  const auto& vals = es.eigenvalues();  // ascending
  const auto& vecs = es.eigenvectors();
  const int n = static_cast<int>(vals.size());

  double radius = std::max(std::abs(vals(0)), std::abs(vals(n - 1)));
  double gap = cluster_tol * std::max(radius, cluster_tol);

  SpectralDecomposition out;
  int start = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || vals(i) - vals(i - 1) > gap) {
      int mult = i - start;
      Matrix proj = Matrix::Zero(n, n);
      double mean = 0.0;
      for (int k = start; k < i; ++k) {
        proj += vecs.col(k) * vecs.col(k).adjoint();
        mean += vals(k);
      }
      out.eigenvalues.push_back(mean / mult);
      out.projectors.push_back(hermitize(proj));
      out.multiplicities.push_back(mult);
      start = i;
    }
  }
  // descending order, matching the usual lambda_1 >= lambda_2 convention
  std::reverse(out.eigenvalues.begin(), out.eigenvalues.end());
  std::reverse(out.projectors.begin(), out.projectors.end());
  std::reverse(out.multiplicities.begin(), out.multiplicities.end());
  return out;
}

// ---- exponentials ----

Matrix hermitian_exp(const Matrix& a) {
  require_hermitian(a, 1e-10, "hermitian_exp");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  Eigen::VectorXd ev = es.eigenvalues().array().exp();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

Matrix phase_exp(const Matrix& a) {
  require_hermitian(a, 1e-10, "phase_exp");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  Eigen::VectorXcd ev(es.eigenvalues().size());
  for (int k = 0; k < ev.size(); ++k) {
    ev(k) = std::exp(kI * es.eigenvalues()(k));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

// ---- Bloch coordinates ----

double BlochVector::norm() const { return std::sqrt(x * x + y * y + z * z); }

Matrix bloch_to_density(const BlochVector& v) {
  Matrix rho(2, 2);
  rho << Complex(1.0 + v.z, 0.0), Complex(v.x, -v.y),
      Complex(v.x, v.y), Complex(1.0 - v.z, 0.0);
  return 0.5 * rho;
}

BlochVector density_to_bloch(const Matrix& rho) {
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw std::invalid_argument("density_to_bloch: dimension must be 2");
  }
  BlochVector v;
  v.x = 2.0 * rho(1, 0).real();
  v.y = 2.0 * rho(1, 0).imag();
  v.z = (rho(0, 0) - rho(1, 1)).real();
  return v;
}

// ---- state repair ----

void RepairStats::merge(const RepairStats& other) {
  steps += other.steps;
  hermiticity_warnings += other.hermiticity_warnings;
  positivity_repairs += other.positivity_repairs;
  worst_hermiticity = std::max(worst_hermiticity, other.worst_hermiticity);
  worst_min_eig = std::min(worst_min_eig, other.worst_min_eig);
  worst_trace_err = std::max(worst_trace_err, other.worst_trace_err);
  worst_bloch_norm = std::max(worst_bloch_norm, other.worst_bloch_norm);
}

Matrix repair_density(const Matrix& a, RepairStats* stats,
                      bool renormalize_trace) {
  RepairStats local;
  RepairStats& s = stats ? *stats : local;
  s.steps += 1;

  double defect = hermiticity_defect(a);
  s.worst_hermiticity = std::max(s.worst_hermiticity, defect);
  if (defect > 1e-6) s.hermiticity_warnings += 1;
  Matrix rho = hermitize(a);

  if (renormalize_trace) {
    s.worst_trace_err = std::max(s.worst_trace_err,
                                 std::abs(trace_real(rho) - 1.0));
  }

  double lo = min_eigenvalue(rho);
  s.worst_min_eig = std::min(s.worst_min_eig, lo);
  if (lo < -1e-9) {
    s.positivity_repairs += 1;
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    rho = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
  }
  if (renormalize_trace) {
    double tr = trace_real(rho);
    if (tr > 0.0) rho /= tr;
  }
  return rho;
}

// ---- JSON (de)serialization ----

nlohmann::json matrix_to_json(const Matrix& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      row.push_back({a(i, j).real(), a(i, j).imag()});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) {
    throw std::invalid_argument("matrix_from_json: expected non-empty array");
  }
  const auto n = j.size();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != n) {
      throw std::invalid_argument("matrix_from_json: matrix must be square");
    }
    for (std::size_t k = 0; k < n; ++k) {
      const auto& cell = j[i][k];
      if (cell.is_number()) {
        a(i, k) = Complex(cell.get<double>(), 0.0);
      } else if (cell.is_array() && cell.size() == 2) {
        a(i, k) = Complex(cell[0].get<double>(), cell[1].get<double>());
      } else {
        throw std::invalid_argument(
            "matrix_from_json: entries must be numbers or [re, im] pairs");
      }
    }
  }
  return a;
}

}  // namespace qf::core
