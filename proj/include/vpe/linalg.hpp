#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace vpe {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

inline std::size_t dim_of(int num_qubits) {
  return std::size_t{1} << num_qubits;
}

/// Bit position of qubit `q` in a basis index; qubit 0 is the most significant.
inline int bit_of(int num_qubits, int q) { return num_qubits - 1 - q; }

inline bool is_unitary(const Matrix& u, double tol = 1e-12) {
  if (u.rows() != u.cols()) return false;
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_hermitian(const Matrix& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// exp(i * t * h) for Hermitian h via its eigendecomposition.
inline Matrix expi_hermitian(const Matrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  Vector phases = (kI * t * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Real power of a unitary through its Schur form (unitaries are normal, so
/// the triangular factor is diagonal). Eigenphases are taken in (-pi, pi].
inline Matrix unitary_power(const Matrix& u, double exponent) {
  Eigen::ComplexSchur<Matrix> schur(u);
  const Matrix& q = schur.matrixU();
  Vector d(u.rows());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    double phase = std::arg(schur.matrixT()(i, i));
    d(i) = std::polar(1.0, phase * exponent);
  }
  return q * d.asDiagonal() * q.adjoint();
}

/// Operator norm distance used by the oracle comparisons.
inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Distance between two operators modulo a global phase.
inline double phase_insensitive_distance(const Matrix& a, const Matrix& b) {
  cplx overlap = (a.adjoint() * b).trace();
  cplx phase = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : cplx{1.0};
  return max_abs_diff(a * phase, b);
}

}  // namespace vpe
