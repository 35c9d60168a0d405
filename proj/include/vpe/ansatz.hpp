#pragma once

// State-preparation circuits.

#include "vpe/gates.hpp"
#include "vpe/hamiltonian.hpp"
#include "vpe/qsim.hpp"

#include <map>
#include <optional>
#include <vector>

namespace vpe {

/// Real rotation [[c, -s], [s, c]] on the single-particle block of two modes.
inline Matrix givens_block(double theta) {
  Matrix g(2, 2);
  g << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return g;
}

/// Mode pairs (a, a+1) of the brick pattern, layer by layer.
inline std::vector<std::vector<int>> brick_layers(int num_qubits, int layers) {
  std::vector<std::vector<int>> out(layers);
  for (int l = 0; l < layers; ++l)
    for (int a = l % 2; a + 1 < num_qubits; a += 2) out[l].push_back(a);
  return out;
}

inline std::size_t givens_parameter_count(int num_qubits) {
  return static_cast<std::size_t>(num_qubits) * (num_qubits - 1) / 2;
}

/// Single-particle matrix of the Givens network (first layer applied first).
inline Matrix givens_network_matrix(const std::vector<double>& theta, int num_qubits) {
  if (theta.size() != givens_parameter_count(num_qubits))
    throw std::invalid_argument("Givens network on " + std::to_string(num_qubits) + " qubits takes " +
                                std::to_string(givens_parameter_count(num_qubits)) + " angles, got " +
                                std::to_string(theta.size()));
  Matrix u = Matrix::Identity(num_qubits, num_qubits);
  std::size_t k = 0;
  for (const auto& layer : brick_layers(num_qubits, num_qubits))
    for (int a : layer) {
      Matrix g = Matrix::Identity(num_qubits, num_qubits);
      g.block(a, a, 2, 2) = givens_block(theta[k++]);
      u = g * u;
    }
  return u;
}

enum class GivensCompilation { Matchgate, SqrtIswap };

/// ISWAP^{-1/2} (Rz(theta) x Rz(-theta)) ISWAP^{1/2} equals the Givens
/// rotation by `theta`.
inline void push_sqrt_iswap_givens(Circuit& c, int a, int b, double theta, int& instance) {
  c.add_moment({gates::IswapPower(a, b, 0.5, instance++)});
  c.add_moment({gates::Rz(a, theta), gates::Rz(b, -theta)});
  c.add_moment({gates::IswapPower(a, b, -0.5, instance++)});
}

/// Factors a 2x2 unitary as diag(e^{i a1}, e^{i b1}) R(theta) diag(1, e^{i b2}).
struct BlockFactors {
  double a1 = 0, b1 = 0, theta = 0, b2 = 0;
};

inline BlockFactors factor_block(const Matrix& u) {
  BlockFactors f;
  f.theta = std::atan2(std::abs(u(1, 0)), std::abs(u(0, 0)));
  if (std::abs(u(0, 0)) > 1e-12) {
    f.a1 = std::arg(u(0, 0));
    f.b1 = std::abs(u(1, 0)) > 1e-12 ? std::arg(u(1, 0)) : std::arg(u(1, 1));
    f.b2 = std::arg(u(1, 1)) - f.b1;
  } else {
    f.b1 = std::arg(u(1, 0));
    f.a1 = std::arg(-u(0, 1));
  }
  return f;
}

/// Single-particle rotation u compiled to Phase gates and sqrt(ISWAP) Givens
/// rotations. `instance` numbers the ISWAP-power gates for control errors.
inline Circuit single_particle_circuit_sqrt_iswap(const Matrix& u, int total_qubits, int& instance, int offset = 0) {
  const auto dec = decompose_single_particle(u);
  const int n = dec.num_modes;
  Circuit c(total_qubits);
  std::vector<cplx> pending(dec.phases.data(), dec.phases.data() + n);
  auto push_phase_gate = [&](int q, double phi) {
    if (std::abs(std::remainder(phi, 2 * kPi)) > 1e-14) c.push_packed(gates::Phase(q, phi));
  };
  for (auto it = dec.steps.rbegin(); it != dec.steps.rend(); ++it) {
    const int a = it->mode;
    Matrix phase = Matrix::Zero(2, 2);
    phase(0, 0) = pending[a];
    phase(1, 1) = pending[a + 1];
    pending[a] = pending[a + 1] = 1.0;
    const auto f = factor_block(it->block * phase);
    push_phase_gate(offset + a + 1, f.b2);
    push_sqrt_iswap_givens(c, offset + a, offset + a + 1, f.theta, instance);
    push_phase_gate(offset + a, f.a1);
    push_phase_gate(offset + a + 1, f.b1);
  }
  for (int q = 0; q < n; ++q) push_phase_gate(offset + q, std::arg(pending[q]));
  return c;
}

/// Brick network of N(N-1)/2 Givens rotations in depth N.
inline Circuit givens_network(const std::vector<double>& theta, int num_qubits,
                              GivensCompilation compile = GivensCompilation::Matchgate, int offset = 0,
                              int total_qubits = -1) {
  if (theta.size() != givens_parameter_count(num_qubits))
    throw std::invalid_argument("Givens network on " + std::to_string(num_qubits) + " qubits takes " +
                                std::to_string(givens_parameter_count(num_qubits)) + " angles, got " +
                                std::to_string(theta.size()));
  Circuit c(total_qubits < 0 ? num_qubits : total_qubits);
  std::size_t k = 0;
  int instance = 0;
  for (const auto& layer : brick_layers(num_qubits, num_qubits)) {
    if (compile == GivensCompilation::Matchgate) {
      std::vector<Gate> moment;
      for (int a : layer) moment.push_back(gates::SingleParticle(offset + a, offset + a + 1, givens_block(theta[k++])));
      c.add_moment(std::move(moment));
    } else {
      // Gates of one layer act on disjoint pairs, so their three moments run in parallel.
      std::vector<Gate> m0, m1, m2;
      for (int a : layer) {
        Circuit one(c.num_qubits());
        push_sqrt_iswap_givens(one, offset + a, offset + a + 1, theta[k++], instance);
        m0.push_back(one.moments()[0].gates[0]);
        for (const auto& g : one.moments()[1].gates) m1.push_back(g);
        m2.push_back(one.moments()[2].gates[0]);
      }
      c.add_moment(std::move(m0));
      c.add_moment(std::move(m1));
      c.add_moment(std::move(m2));
    }
  }
  return c;
}

/// H on qubit 0 followed by CNOT(j-1, j) for j = 1..N_f-1.
inline Circuit ghz_prep(int num_filled, int num_qubits) {
  if (num_filled < 1 || num_filled > num_qubits) throw std::invalid_argument("ghz_prep needs 1 <= N_f <= N");
  Circuit c(num_qubits);
  c.add_moment({gates::H(0)});
  for (int j = 1; j < num_filled; ++j) c.add_moment({gates::CNOT(j - 1, j)});
  return c;
}

/// The CNOT chain alone; maps |1_0>|0...> to |1...1 0...0> with N_f ones.
inline Circuit cnot_chain(int num_filled, int num_qubits) {
  Circuit c(num_qubits);
  for (int j = 1; j < num_filled; ++j) c.add_moment({gates::CNOT(j - 1, j)});
  return c;
}

/// exp(i theta X_a X_b).
inline Gate xx_rotation(int a, int b, double theta) {
  Matrix m = std::cos(theta) * Matrix::Identity(4, 4);
  Matrix xx = kron(detail::letter_matrix(Pauli::X), detail::letter_matrix(Pauli::X));
  m += kI * std::sin(theta) * xx;
  return {{a, b}, m, "XX"};
}

/// Layers prod_p exp(i theta_{p,Z} sum Z) exp(i theta_{p,X} sum XX) on a
/// periodic ring; theta = (Z_1, X_1, Z_2, X_2, ...). The XX exponential of
/// each layer acts first. No initial-state preparation is included.
inline Circuit vha_circuit(const std::vector<double>& theta, int layers, int num_qubits) {
  if (theta.size() != static_cast<std::size_t>(2 * layers))
    throw std::invalid_argument("VHA with p layers takes 2p angles");
  Circuit c(num_qubits);
  for (int p = 0; p < layers; ++p) {
    const double tz = theta[2 * p], tx = theta[2 * p + 1];
    // bonds in ring order, even positions first; a 2-site ring counts its bond twice
    std::map<std::pair<int, int>, double> angle;
    std::vector<std::pair<int, int>> order;
    for (int start : {0, 1})
      for (int j = start; j < num_qubits; j += 2) {
        const int k = (j + 1) % num_qubits;
        const std::pair<int, int> bond{std::min(j, k), std::max(j, k)};
        if (!angle.contains(bond)) order.push_back(bond);
        angle[bond] += tx;
      }
    Circuit xx(num_qubits);
    for (const auto& bond : order) xx.push_packed(xx_rotation(bond.first, bond.second, angle[bond]));
    c.append(xx);
    std::vector<Gate> zs;
    for (int j = 0; j < num_qubits; ++j) zs.push_back(gates::ExpZ(j, tz));
    c.add_moment(std::move(zs));
  }
  return c;
}

inline Gate fsim_gate(double theta, double phi, int a = 0, int b = 1) {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 1.0;
  m(1, 1) = m(2, 2) = std::cos(theta);
  m(1, 2) = m(2, 1) = kI * std::sin(theta);
  m(3, 3) = std::polar(1.0, phi);
  return {{a, b}, m, "fsim"};
}

inline std::size_t fsw_parameter_count(int layers, int num_qubits) {
  std::size_t gates = 0;
  for (const auto& l : brick_layers(num_qubits, layers)) gates += l.size();
  return 2 * gates;
}

/// Linear network of fsim gates; params are (theta, phi) per gate in layer order.
inline Circuit fsw_network(const std::vector<double>& params, int layers, int num_qubits) {
  if (params.size() != fsw_parameter_count(layers, num_qubits))
    throw std::invalid_argument("fsim network needs " + std::to_string(fsw_parameter_count(layers, num_qubits)) +
                                " parameters, got " + std::to_string(params.size()));
  Circuit c(num_qubits);
  std::size_t k = 0;
  for (const auto& layer : brick_layers(num_qubits, layers)) {
    std::vector<Gate> moment;
    for (int a : layer) {
      moment.push_back(fsim_gate(params[k], params[k + 1], a, a + 1));
      k += 2;
    }
    c.add_moment(std::move(moment));
  }
  return c;
}

/// Whether the circuit commutes with total Z (conserves excitation number).
inline bool conserves_number(const Circuit& c, double tol = 1e-10) {
  PauliSum z(c.num_qubits());
  for (int q = 0; q < c.num_qubits(); ++q) {
    PauliWord w(c.num_qubits(), Pauli::I);
    w[q] = Pauli::Z;
    z.add(w, 1.0);
  }
  const Matrix u = c.unitary(), zm = z.to_matrix();
  return max_abs_diff(u * zm, zm * u) <= tol;
}

/// U_p = ansatz * CNOT chain: U_p|0> is the vacuum image and U_p|1_0> the
/// N_f-particle starting state.
inline Circuit compose_prep_for_control_free(const Circuit& ansatz, int num_filled) {
  if (!conserves_number(ansatz)) throw std::invalid_argument("ansatz breaks number conservation");
  Circuit c = cnot_chain(num_filled, ansatz.num_qubits());
  c.append(ansatz);
  return c;
}

/// Merged form for Givens ansatze: the basis rotation V and the ansatz u
/// combine into one network for V u.
inline Circuit compose_prep_for_control_free(const Matrix& ansatz_u, const std::optional<Matrix>& basis_rotation,
                                             int num_filled) {
  const int n = static_cast<int>(ansatz_u.rows());
  const Matrix m = basis_rotation ? Matrix(*basis_rotation * ansatz_u) : ansatz_u;
  Circuit c = cnot_chain(num_filled, n);
  c.append(single_particle_circuit(m, n));
  return c;
}

/// X on the first N_f qubits.
inline Circuit fill_modes(int num_filled, int num_qubits) {
  Circuit c(num_qubits);
  std::vector<Gate> xs;
  for (int j = 0; j < num_filled; ++j) xs.push_back(gates::X(j));
  if (!xs.empty()) c.add_moment(std::move(xs));
  return c;
}

}  // namespace vpe
