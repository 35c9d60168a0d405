#pragma once

// Channel library and noise-model policies.

#include "vpe/qsim.hpp"

#include <cmath>
#include <set>

namespace vpe {

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

inline KrausChannel depolarizing(double lambda) {
  check_probability(lambda, "depolarizing strength");
  const auto x = detail::letter_matrix(Pauli::X);
  const auto y = detail::letter_matrix(Pauli::Y);
  const auto z = detail::letter_matrix(Pauli::Z);
  const double a = std::sqrt(1.0 - 3.0 * lambda / 4.0), b = std::sqrt(lambda / 4.0);
  return KrausChannel({a * Matrix::Identity(2, 2), b * x, b * y, b * z}, "depolarizing");
}

/// Textbook amplitude damping followed by phase damping.
inline KrausChannel amplitude_phase_damping(double gamma_amp, double gamma_phase) {
  check_probability(gamma_amp, "amplitude damping rate");
  check_probability(gamma_phase, "phase damping rate");
  Matrix a0 = Matrix::Zero(2, 2), a1 = Matrix::Zero(2, 2);
  a0(0, 0) = 1.0;
  a0(1, 1) = std::sqrt(1.0 - gamma_amp);
  a1(0, 1) = std::sqrt(gamma_amp);
  Matrix p0 = Matrix::Zero(2, 2), p1 = Matrix::Zero(2, 2);
  p0(0, 0) = 1.0;
  p0(1, 1) = std::sqrt(1.0 - gamma_phase);
  p1(1, 1) = std::sqrt(gamma_phase);
  std::vector<Matrix> ops;
  for (const Matrix* p : {&p0, &p1})
    for (const Matrix* a : {&a0, &a1}) {
      Matrix k = (*p) * (*a);
      if (k.norm() > 0) ops.push_back(std::move(k));
    }
  return KrausChannel(std::move(ops), "amplitude_phase_damping");
}

inline KrausChannel bit_flip(double p) {
  check_probability(p, "bit-flip probability");
  return KrausChannel({std::sqrt(1 - p) * Matrix::Identity(2, 2), std::sqrt(p) * detail::letter_matrix(Pauli::X)},
                      "bit_flip");
}

enum class NoiseMask { All, SystemOnly, ControlOnly };

/// Restricts `model` according to `mask`; masked-out qubits receive no channel.
inline NoiseModel attach_noise(const Circuit& circuit, const NoiseModel& model, NoiseMask mask,
                               const std::set<int>& control_qubits) {
  for (int q : control_qubits)
    if (q < 0 || q >= circuit.num_qubits())
      throw std::invalid_argument("mask references unknown qubit " + std::to_string(q));
  if (mask == NoiseMask::All) return model;
  auto keep = [&](int q) { return (mask == NoiseMask::ControlOnly) == control_qubits.contains(q); };
  NoiseModel out;
  out.control_error_offsets = model.control_error_offsets;
  for (const auto& [q, ch] : model.per_qubit)
    if (keep(q)) out.per_qubit.emplace(q, ch);
  for (const auto& [q, ch] : model.readout)
    if (keep(q)) out.readout.emplace(q, ch);
  return out;
}

/// ISWAP^{1/2 + x}.
inline Gate control_error_iswap(double x, int q0 = 0, int q1 = 1) {
  if (!(std::abs(x) <= 0.5)) throw std::invalid_argument("control error offset must satisfy |x| <= 1/2");
  Gate g({q0, q1}, iswap_power(0.5 + x), "iswap^(1/2+x)");
  return g;
}

/// Draws one coherent offset, uniform in [-p/pi, p/pi], for every ISWAP-power
/// gate instance in `circuit`; mirrored copies share their instance's draw.
template <class Rng>
void draw_control_errors(NoiseModel& model, const Circuit& circuit, double p, Rng& rng) {
  std::uniform_real_distribution<double> dist(-p / kPi, p / kPi);
  for (const auto& m : circuit.moments())
    for (const auto& g : m.gates)
      if (g.iswap_instance >= 0) {
        if (!model.control_error_offsets.contains(g.iswap_instance))
          model.control_error_offsets[g.iswap_instance] = dist(rng);
      }
}

}  // namespace vpe
