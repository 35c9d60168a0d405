#pragma once

// Standard gate matrices and constructors.

#include "vpe/qsim.hpp"

#include <cmath>

namespace vpe::gates {

inline Matrix h_matrix() {
  Matrix m(2, 2);
  m << 1, 1, 1, -1;
  return m / std::sqrt(2.0);
}

inline Matrix rx_matrix(double theta) {
  Matrix m(2, 2);
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  m << c, -kI * s, -kI * s, c;
  return m;
}

inline Matrix ry_matrix(double theta) {
  Matrix m(2, 2);
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  m << c, -s, s, c;
  return m;
}

inline Matrix rz_matrix(double theta) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = std::polar(1.0, -theta / 2);
  m(1, 1) = std::polar(1.0, theta / 2);
  return m;
}

/// diag(1, ..., 1, e^{i phi}) on k qubits.
inline Matrix phase_on_all_ones(int k, double phi) {
  const auto d = static_cast<Eigen::Index>(dim_of(k));
  Matrix m = Matrix::Identity(d, d);
  m(d - 1, d - 1) = std::polar(1.0, phi);
  return m;
}

inline Matrix cnot_matrix() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1.0;
  return m;
}

inline Gate H(int q) { return {{q}, h_matrix(), "H"}; }
inline Gate X(int q) { return {{q}, detail::letter_matrix(Pauli::X), "X"}; }
inline Gate Y(int q) { return {{q}, detail::letter_matrix(Pauli::Y), "Y"}; }
inline Gate Z(int q) { return {{q}, detail::letter_matrix(Pauli::Z), "Z"}; }
inline Gate Rx(int q, double theta) { return {{q}, rx_matrix(theta), "Rx"}; }
inline Gate Ry(int q, double theta) { return {{q}, ry_matrix(theta), "Ry"}; }
inline Gate Rz(int q, double theta) { return {{q}, rz_matrix(theta), "Rz"}; }
inline Gate Phase(int q, double phi) { return {{q}, phase_on_all_ones(1, phi), "P"}; }
inline Gate CNOT(int control, int target) { return {{control, target}, cnot_matrix(), "CNOT"}; }
inline Gate CPhase(int a, int b, double phi) { return {{a, b}, phase_on_all_ones(2, phi), "CP"}; }

/// diag(e^{i theta}, e^{-i theta}) = exp(i theta Z).
inline Gate ExpZ(int q, double theta) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = std::polar(1.0, theta);
  m(1, 1) = std::polar(1.0, -theta);
  return {{q}, m, "expZ"};
}

/// Controlled exp(i theta Z) on (control, q).
inline Gate ControlledExpZ(int control, int q, double theta) {
  Matrix m = Matrix::Identity(4, 4);
  m(2, 2) = std::polar(1.0, theta);
  m(3, 3) = std::polar(1.0, -theta);
  return {{control, q}, m, "c-expZ"};
}

/// ISWAP^{exponent}, tagged as a power-of-ISWAP instance.
inline Gate IswapPower(int a, int b, double exponent, int instance = -1) {
  Gate g({a, b}, iswap_power(exponent), "iswap^" + std::to_string(exponent));
  g.iswap_instance = instance;
  g.iswap_exponent = exponent;
  return g;
}

/// Number-conserving two-mode gate built from a 2x2 single-particle block
/// `g` acting on adjacent modes (a, b): |00> -> |00>, |11> -> det(g)|11>, and
/// the one-particle subspace transformed by g with |10> = mode a occupied.
inline Gate SingleParticle(int a, int b, const Matrix& g) {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 1.0;
  m(2, 2) = g(0, 0);
  m(1, 2) = g(1, 0);
  m(2, 1) = g(0, 1);
  m(1, 1) = g(1, 1);
  m(3, 3) = g.determinant();
  return {{a, b}, m, "givens"};
}

}  // namespace vpe::gates
