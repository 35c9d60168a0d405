#pragma once

// Dense density-matrix simulation of gate circuits with per-moment noise.

#include "vpe/linalg.hpp"
#include "vpe/pauli.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace vpe {

namespace detail {

struct TargetLayout {
  std::vector<std::size_t> offsets;  // basis-index offset of each local index
  std::size_t mask = 0;
};

inline TargetLayout layout_for(int num_qubits, std::span<const int> targets) {
  const int k = static_cast<int>(targets.size());
  TargetLayout lay;
  lay.offsets.assign(std::size_t{1} << k, 0);
  for (int j = 0; j < k; ++j) lay.mask |= std::size_t{1} << bit_of(num_qubits, targets[j]);
  for (std::size_t a = 0; a < lay.offsets.size(); ++a) {
    std::size_t off = 0;
    for (int j = 0; j < k; ++j)
      if ((a >> (k - 1 - j)) & 1U) off |= std::size_t{1} << bit_of(num_qubits, targets[j]);
    lay.offsets[a] = off;
  }
  return lay;
}

/// m <- U m, with U acting on `targets` of the row index.
inline void apply_left(Matrix& m, int num_qubits, const Matrix& u, std::span<const int> targets) {
  const auto lay = layout_for(num_qubits, targets);
  const auto kdim = lay.offsets.size();
  const auto d = dim_of(num_qubits);
  std::vector<cplx> in(kdim);
  for (Eigen::Index col = 0; col < m.cols(); ++col) {
    for (std::size_t base = 0; base < d; ++base) {
      if (base & lay.mask) continue;
      for (std::size_t a = 0; a < kdim; ++a) in[a] = m(base | lay.offsets[a], col);
      for (std::size_t b = 0; b < kdim; ++b) {
        cplx acc = 0;
        for (std::size_t a = 0; a < kdim; ++a) acc += u(b, a) * in[a];
        m(base | lay.offsets[b], col) = acc;
      }
    }
  }
}

/// m <- m U^dagger, with U acting on `targets` of the column index.
inline void apply_right_adjoint(Matrix& m, int num_qubits, const Matrix& u, std::span<const int> targets) {
  const auto lay = layout_for(num_qubits, targets);
  const auto kdim = lay.offsets.size();
  const auto d = dim_of(num_qubits);
  std::vector<cplx> in(kdim);
  for (Eigen::Index row = 0; row < m.rows(); ++row) {
    for (std::size_t base = 0; base < d; ++base) {
      if (base & lay.mask) continue;
      for (std::size_t a = 0; a < kdim; ++a) in[a] = m(row, base | lay.offsets[a]);
      for (std::size_t b = 0; b < kdim; ++b) {
        cplx acc = 0;
        for (std::size_t a = 0; a < kdim; ++a) acc += in[a] * std::conj(u(b, a));
        m(row, base | lay.offsets[b]) = acc;
      }
    }
  }
}

inline void check_targets(int num_qubits, std::span<const int> targets) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= num_qubits)
      throw std::out_of_range("target qubit " + std::to_string(targets[i]) + " outside register of " +
                              std::to_string(num_qubits));
    for (std::size_t j = 0; j < i; ++j)
      if (targets[i] == targets[j]) throw std::invalid_argument("repeated target qubit " + std::to_string(targets[i]));
  }
}

}  // namespace detail

/// Pure state vector; qubit 0 is the most significant bit of the basis index.
class PureState {
 public:
  PureState(int num_qubits, Vector amplitudes) : num_qubits_(num_qubits), amps_(std::move(amplitudes)) {
    if (static_cast<std::size_t>(amps_.size()) != dim_of(num_qubits_))
      throw std::invalid_argument("amplitude vector length is not 2^num_qubits");
    if (std::abs(amps_.norm() - 1.0) > 1e-12) throw std::invalid_argument("state is not normalized");
  }

  static PureState basis(int num_qubits, std::size_t index) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_of(num_qubits)));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return {num_qubits, std::move(v)};
  }

  int num_qubits() const { return num_qubits_; }
  const Vector& amplitudes() const { return amps_; }

 private:
  int num_qubits_;
  Vector amps_;
};

/// Possibly sub-normalized density operator on `num_qubits` qubits.
class DensityMatrix {
 public:
  DensityMatrix(int num_qubits, Matrix m, bool normalized = true)
      : num_qubits_(num_qubits), rho_(std::move(m)), normalized_(normalized) {
    validate();
  }

  static DensityMatrix zero_state(int num_qubits) {
    const auto d = static_cast<Eigen::Index>(dim_of(num_qubits));
    Matrix m = Matrix::Zero(d, d);
    m(0, 0) = 1.0;
    return {num_qubits, std::move(m)};
  }

  static DensityMatrix from_pure(const PureState& s) {
    return {s.num_qubits(), s.amplitudes() * s.amplitudes().adjoint()};
  }

  static DensityMatrix maximally_mixed(int num_qubits) {
    const auto d = static_cast<Eigen::Index>(dim_of(num_qubits));
    return {num_qubits, Matrix::Identity(d, d) / static_cast<double>(d)};
  }

  int num_qubits() const { return num_qubits_; }
  bool normalized() const { return normalized_; }
  const Matrix& matrix() const { return rho_; }

  /// Mutable buffer for in-place kernels; callers own the invariants.
  Matrix& buffer() { return rho_; }

  double trace() const { return rho_.trace().real(); }
  double purity() const { return (rho_ * rho_).trace().real(); }

  /// Re-checks Hermiticity, positivity and trace bounds at 1e-10.
  void validate() const {
    const auto d = dim_of(num_qubits_);
    if (static_cast<std::size_t>(rho_.rows()) != d || static_cast<std::size_t>(rho_.cols()) != d)
      throw std::invalid_argument("density matrix dimension is not 2^num_qubits");
    if (!is_hermitian(rho_, 1e-10)) throw std::invalid_argument("density matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("density matrix is not positive semidefinite");
    const double tr = trace();
    if (normalized_ && std::abs(tr - 1.0) > 1e-10) throw std::invalid_argument("normalized density matrix has trace != 1");
    if (!normalized_ && (tr < -1e-10 || tr > 1.0 + 1e-10)) throw std::invalid_argument("ensemble trace outside [0, 1]");
  }

 private:
  int num_qubits_;
  Matrix rho_;
  bool normalized_;
};

/// Unitary acting on an ordered list of target qubits. Gates tagged with an
/// ISWAP instance are power-of-ISWAP gates subject to coherent control error.
struct Gate {
  std::vector<int> targets;
  Matrix unitary;
  std::string name;
  int iswap_instance = -1;
  double iswap_exponent = 0.0;
  bool mirrored = false;  // set on copies produced by Circuit::inverse()

  Gate() = default;
  Gate(std::vector<int> t, Matrix u, std::string n = {}) : targets(std::move(t)), unitary(std::move(u)), name(std::move(n)) {
    const auto expected = static_cast<Eigen::Index>(dim_of(static_cast<int>(targets.size())));
    if (unitary.rows() != expected || unitary.cols() != expected)
      throw std::invalid_argument("gate '" + name + "' matrix does not match its target count");
    if (!is_unitary(unitary, 1e-12)) throw std::invalid_argument("gate '" + name + "' is not unitary");
    for (std::size_t i = 0; i < targets.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (targets[i] == targets[j]) throw std::invalid_argument("gate '" + name + "' repeats a target");
  }

  Gate adjoint() const {
    Gate g = *this;
    g.unitary = unitary.adjoint();
    g.iswap_exponent = -iswap_exponent;
    g.mirrored = !mirrored;
    if (!g.name.empty()) g.name += "^dag";
    return g;
  }
};

struct Moment {
  std::vector<Gate> gates;

  Moment() = default;
  explicit Moment(std::vector<Gate> g) : gates(std::move(g)) {
    std::vector<int> used;
    for (const auto& gate : gates)
      for (int q : gate.targets) {
        if (std::find(used.begin(), used.end(), q) != used.end())
          throw std::invalid_argument("qubit " + std::to_string(q) + " used twice in one moment");
        used.push_back(q);
      }
  }

  bool touches(int q) const {
    for (const auto& g : gates)
      if (std::find(g.targets.begin(), g.targets.end(), q) != g.targets.end()) return true;
    return false;
  }
};

class Circuit {
 public:
  explicit Circuit(int num_qubits = 0) : num_qubits_(num_qubits) {}

  int num_qubits() const { return num_qubits_; }
  std::size_t depth() const { return moments_.size(); }
  const std::vector<Moment>& moments() const { return moments_; }

  void add_moment(Moment m) {
    for (const auto& g : m.gates) detail::check_targets(num_qubits_, g.targets);
    moments_.push_back(std::move(m));
  }
  void add_moment(std::vector<Gate> gates) { add_moment(Moment(std::move(gates))); }

  /// Places `g` in the earliest moment after the last one touching its qubits.
  void push_packed(Gate g) {
    detail::check_targets(num_qubits_, g.targets);
    std::size_t slot = 0;
    for (std::size_t i = moments_.size(); i-- > 0;) {
      bool clash = false;
      for (int q : g.targets) clash = clash || moments_[i].touches(q);
      if (clash) {
        slot = i + 1;
        break;
      }
    }
    if (slot == moments_.size()) moments_.emplace_back();
    moments_[slot].gates.push_back(std::move(g));
  }

  Circuit& append(const Circuit& other) {
    if (other.num_qubits_ != num_qubits_) throw std::invalid_argument("appending circuit on a different register");
    moments_.insert(moments_.end(), other.moments_.begin(), other.moments_.end());
    return *this;
  }

  Circuit inverse() const {
    Circuit out(num_qubits_);
    for (auto it = moments_.rbegin(); it != moments_.rend(); ++it) {
      Moment m;
      for (const auto& g : it->gates) m.gates.push_back(g.adjoint());
      out.moments_.push_back(std::move(m));
    }
    return out;
  }

  /// Moves qubit q to `mapping[q]` on a register of `total_qubits`.
  Circuit remapped(int total_qubits, std::span<const int> mapping) const {
    if (static_cast<int>(mapping.size()) != num_qubits_) throw std::invalid_argument("mapping size mismatch");
    Circuit out(total_qubits);
    for (const auto& m : moments_) {
      Moment nm;
      for (auto g : m.gates) {
        for (int& q : g.targets) q = mapping[q];
        nm.gates.push_back(std::move(g));
      }
      out.add_moment(std::move(nm));
    }
    return out;
  }

  Circuit shifted(int total_qubits, int offset) const {
    std::vector<int> map(num_qubits_);
    std::iota(map.begin(), map.end(), offset);
    return remapped(total_qubits, map);
  }

  /// Dense unitary built from Kronecker embeddings; independent of the
  /// index-manipulation kernels used by the simulator.
  Matrix unitary() const {
    const auto d = static_cast<Eigen::Index>(dim_of(num_qubits_));
    Matrix u = Matrix::Identity(d, d);
    for (const auto& m : moments_)
      for (const auto& g : m.gates) u = embed_operator(g.unitary, g.targets, num_qubits_) * u;
    return u;
  }

  /// Full-register matrix of an operator on `targets` (Kronecker + permutation).
  static Matrix embed_operator(const Matrix& op, std::span<const int> targets, int num_qubits) {
    const int k = static_cast<int>(targets.size());
    const auto d = dim_of(num_qubits);
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        bool rest_equal = true;
        std::size_t lr = 0, lc = 0;
        for (int q = 0; q < num_qubits; ++q) {
          const int b = bit_of(num_qubits, q);
          const auto rb = (r >> b) & 1U, cb = (c >> b) & 1U;
          auto pos = std::find(targets.begin(), targets.end(), q);
          if (pos == targets.end()) {
            rest_equal = rest_equal && rb == cb;
          } else {
            const int j = static_cast<int>(pos - targets.begin());
            lr |= rb << (k - 1 - j);
            lc |= cb << (k - 1 - j);
          }
        }
        if (rest_equal) out(r, c) = op(lr, lc);
      }
    return out;
  }

 private:
  int num_qubits_;
  std::vector<Moment> moments_;
};

/// Completely positive map given by Kraus operators on k qubits.
class KrausChannel {
 public:
  explicit KrausChannel(std::vector<Matrix> ops, std::string name = {}) : ops_(std::move(ops)), name_(std::move(name)) {
    if (ops_.empty()) throw std::invalid_argument("channel needs at least one Kraus operator");
    const auto d = ops_.front().rows();
    if (d < 2 || (d & (d - 1)) != 0) throw std::invalid_argument("Kraus operator dimension is not a power of two");
    Matrix sum = Matrix::Zero(d, d);
    for (const auto& k : ops_) {
      if (k.rows() != d || k.cols() != d) throw std::invalid_argument("Kraus operators differ in dimension");
      sum += k.adjoint() * k;
    }
    if (max_abs_diff(sum, Matrix::Identity(d, d)) > 1e-10)
      throw std::invalid_argument("Kraus set is not trace preserving (sum K^dag K != I)");
    num_qubits_ = 0;
    while ((Eigen::Index{1} << num_qubits_) < d) ++num_qubits_;
    // Superoperator S[(a,b),(a',b')] = sum_k K[a,a'] conj(K[b,b']).
    superop_ = Matrix::Zero(d * d, d * d);
    for (const auto& k : ops_)
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b)
          for (Eigen::Index ap = 0; ap < d; ++ap)
            for (Eigen::Index bp = 0; bp < d; ++bp) superop_(a * d + b, ap * d + bp) += k(a, ap) * std::conj(k(b, bp));
  }

  static KrausChannel identity(int num_qubits = 1) {
    const auto d = static_cast<Eigen::Index>(dim_of(num_qubits));
    return KrausChannel({Matrix::Identity(d, d)}, "identity");
  }

  int num_qubits() const { return num_qubits_; }
  const std::vector<Matrix>& operators() const { return ops_; }
  const Matrix& superoperator() const { return superop_; }
  const std::string& name() const { return name_; }

  /// Whether the channel fixes the maximally mixed state.
  bool is_unital(double tol = 1e-12) const {
    const auto d = ops_.front().rows();
    Matrix sum = Matrix::Zero(d, d);
    for (const auto& k : ops_) sum += k * k.adjoint();
    return max_abs_diff(sum, Matrix::Identity(d, d)) <= tol;
  }

  KrausChannel then(const KrausChannel& next) const {
    std::vector<Matrix> ops;
    for (const auto& b : next.ops_)
      for (const auto& a : ops_) ops.push_back(b * a);
    return KrausChannel(std::move(ops), name_ + "*" + next.name_);
  }

 private:
  std::vector<Matrix> ops_;
  std::string name_;
  int num_qubits_ = 0;
  Matrix superop_;
};

/// Noise policy: a channel per qubit after every moment, optional readout
/// channels before measurement, and coherent ISWAP-power offsets keyed by
/// gate instance. A mirrored copy reuses its instance's offset, so it stays
/// the exact inverse of the miscalibrated gate.
struct NoiseModel {
  std::map<int, KrausChannel> per_qubit;
  std::map<int, KrausChannel> readout;
  std::map<int, double> control_error_offsets;

  static NoiseModel uniform(int num_qubits, const KrausChannel& channel) {
    NoiseModel m;
    for (int q = 0; q < num_qubits; ++q) m.per_qubit.emplace(q, channel);
    return m;
  }

  bool empty() const { return per_qubit.empty() && readout.empty() && control_error_offsets.empty(); }
};

namespace detail {

inline void apply_unitary_inplace(Matrix& rho, int n, const Matrix& u, std::span<const int> targets) {
  apply_left(rho, n, u, targets);
  apply_right_adjoint(rho, n, u, targets);
}

inline void apply_superop_1q(Matrix& rho, int n, const Matrix& s, int target) {
  const std::size_t bit = std::size_t{1} << bit_of(n, target);
  const auto d = dim_of(n);
  for (std::size_t r = 0; r < d; ++r) {
    if (r & bit) continue;
    for (std::size_t c = 0; c < d; ++c) {
      if (c & bit) continue;
      const cplx v[4] = {rho(r, c), rho(r, c | bit), rho(r | bit, c), rho(r | bit, c | bit)};
      cplx o[4];
      for (int i = 0; i < 4; ++i) o[i] = s(i, 0) * v[0] + s(i, 1) * v[1] + s(i, 2) * v[2] + s(i, 3) * v[3];
      rho(r, c) = o[0];
      rho(r, c | bit) = o[1];
      rho(r | bit, c) = o[2];
      rho(r | bit, c | bit) = o[3];
    }
  }
}

inline void apply_channel_inplace(Matrix& rho, int n, const KrausChannel& ch, std::span<const int> targets) {
  if (static_cast<int>(targets.size()) != ch.num_qubits())
    throw std::invalid_argument("channel acts on " + std::to_string(ch.num_qubits()) + " qubits but " +
                                std::to_string(targets.size()) + " targets were given");
  check_targets(n, targets);
  if (ch.operators().size() == 1) {
    apply_left(rho, n, ch.operators().front(), targets);
    apply_right_adjoint(rho, n, ch.operators().front(), targets);
    return;
  }
  if (ch.num_qubits() == 1) {
    apply_superop_1q(rho, n, ch.superoperator(), targets[0]);
    return;
  }
  Matrix acc = Matrix::Zero(rho.rows(), rho.cols());
  for (const auto& k : ch.operators()) {
    Matrix term = rho;
    apply_left(term, n, k, targets);
    apply_right_adjoint(term, n, k, targets);
    acc += term;
  }
  rho = std::move(acc);
}

}  // namespace detail

/// ISWAP^{exponent} computed from the eigendecomposition of ISWAP.
inline Matrix iswap_power(double exponent) {
  Matrix u = Matrix::Identity(4, 4);
  // On span{|01>,|10>} ISWAP = i X with eigenvalues +-i on (|01> +- |10>)/sqrt2.
  const cplx plus = std::polar(1.0, kPi / 2 * exponent), minus = std::polar(1.0, -kPi / 2 * exponent);
  u(1, 1) = u(2, 2) = (plus + minus) / 2.0;
  u(1, 2) = u(2, 1) = (plus - minus) / 2.0;
  return u;
}

inline DensityMatrix apply_gate(DensityMatrix state, const Gate& gate) {
  detail::check_targets(state.num_qubits(), gate.targets);
  detail::apply_unitary_inplace(state.buffer(), state.num_qubits(), gate.unitary, gate.targets);
  return state;
}

inline PureState apply_gate(const PureState& state, const Gate& gate) {
  detail::check_targets(state.num_qubits(), gate.targets);
  Matrix v = state.amplitudes();
  detail::apply_left(v, state.num_qubits(), gate.unitary, gate.targets);
  Vector out = v.col(0);
  out.normalize();
  return {state.num_qubits(), std::move(out)};
}

inline DensityMatrix apply_channel(DensityMatrix state, const KrausChannel& channel, std::span<const int> targets) {
  detail::apply_channel_inplace(state.buffer(), state.num_qubits(), channel, targets);
  return state;
}

/// Runs `circuit` moment by moment. With a noise model, each qubit's channel
/// is applied after every moment (idle qubits included) and ISWAP-power gates
/// carrying an offset are replaced by their miscalibrated version. Readout
/// channels are not applied here; see `apply_readout`.
inline void apply_circuit_inplace(Matrix& rho, const Circuit& circuit, const NoiseModel* noise) {
  const int n = circuit.num_qubits();
  for (const auto& m : circuit.moments()) {
    for (const auto& g : m.gates) {
      if (noise != nullptr && g.iswap_instance >= 0) {
        auto it = noise->control_error_offsets.find(g.iswap_instance);
        if (it != noise->control_error_offsets.end()) {
          const double sign = g.iswap_exponent >= 0 ? 1.0 : -1.0;
          detail::apply_unitary_inplace(rho, n, iswap_power(g.iswap_exponent + sign * it->second), g.targets);
          continue;
        }
      }
      detail::apply_unitary_inplace(rho, n, g.unitary, g.targets);
    }
    if (noise == nullptr) continue;
    for (const auto& [q, ch] : noise->per_qubit) {
      if (q >= n) continue;
      const int t[1] = {q};
      detail::apply_channel_inplace(rho, n, ch, t);
    }
  }
}

inline DensityMatrix apply_circuit(DensityMatrix state, const Circuit& circuit, const NoiseModel* noise = nullptr) {
  if (state.num_qubits() != circuit.num_qubits()) throw std::invalid_argument("circuit and state registers differ");
  apply_circuit_inplace(state.buffer(), circuit, noise);
  return state;
}

inline DensityMatrix apply_readout(DensityMatrix state, const NoiseModel& noise) {
  for (const auto& [q, ch] : noise.readout) {
    const int t[1] = {q};
    detail::apply_channel_inplace(state.buffer(), state.num_qubits(), ch, t);
  }
  return state;
}

/// Tr[rho P] for every string of `op`, summed; the imaginary residue must be
/// below 1e-10 and is then discarded.
inline double expectation(const Matrix& rho, int num_qubits, const PauliSum& op) {
  if (op.num_qubits() != num_qubits) throw std::invalid_argument("observable register does not match state");
  const auto d = dim_of(num_qubits);
  cplx total = 0;
  for (const auto& [word, coeff] : op.terms()) {
    if (coeff == cplx{0.0}) continue;
    std::size_t xmask = 0;
    for (int q = 0; q < num_qubits; ++q)
      if (word[q] == Pauli::X || word[q] == Pauli::Y) xmask |= std::size_t{1} << bit_of(num_qubits, q);
    cplx acc = 0;
    for (std::size_t r = 0; r < d; ++r) {
      // P|r> = phase(r) |r ^ xmask>, so Tr[rho P] = sum_r rho(r, r ^ xmask) phase(r)
      cplx phase = 1.0;
      for (int q = 0; q < num_qubits; ++q) {
        const bool bit = (r >> bit_of(num_qubits, q)) & 1U;
        switch (word[q]) {
          case Pauli::I: case Pauli::X: break;
          case Pauli::Y: phase *= bit ? -kI : kI; break;
          case Pauli::Z: if (bit) phase = -phase; break;
        }
      }
      acc += rho(r, r ^ xmask) * phase;
    }
    total += coeff * acc;
  }
  if (std::abs(total.imag()) > 1e-10)
    throw std::domain_error("expectation has imaginary part " + std::to_string(total.imag()) +
                            "; observable or state is not Hermitian");
  return total.real();
}

inline double expectation(const DensityMatrix& state, const PauliSum& op) {
  return expectation(state.matrix(), state.num_qubits(), op);
}

inline DensityMatrix partial_trace(const DensityMatrix& state, std::vector<int> keep) {
  const int n = state.num_qubits();
  if (keep.empty()) throw std::invalid_argument("partial_trace needs at least one kept qubit");
  detail::check_targets(n, keep);
  std::vector<int> traced;
  for (int q = 0; q < n; ++q)
    if (std::find(keep.begin(), keep.end(), q) == keep.end()) traced.push_back(q);
  const int k = static_cast<int>(keep.size());
  const auto kept = detail::layout_for(n, keep);
  const auto rest = detail::layout_for(n, traced);
  const auto dk = static_cast<Eigen::Index>(kept.offsets.size());
  Matrix out = Matrix::Zero(dk, dk);
  for (Eigen::Index a = 0; a < dk; ++a)
    for (Eigen::Index b = 0; b < dk; ++b)
      for (auto e : rest.offsets) out(a, b) += state.matrix()(kept.offsets[a] | e, kept.offsets[b] | e);
  return {k, std::move(out), state.normalized()};
}

using Bitstring = std::vector<std::uint8_t>;

/// Computational-basis outcome probabilities (diagonal of rho), normalized by
/// the trace. Negative entries beyond 1e-10 are rejected.
inline std::vector<double> outcome_probabilities(const DensityMatrix& state) {
  const auto d = dim_of(state.num_qubits());
  std::vector<double> p(d);
  double sum = 0;
  for (std::size_t i = 0; i < d; ++i) {
    p[i] = state.matrix()(i, i).real();
    if (p[i] < -1e-10) throw std::domain_error("negative outcome probability");
    p[i] = std::max(p[i], 0.0);
    sum += p[i];
  }
  if (std::abs(sum - state.trace()) > 1e-8) throw std::domain_error("outcome probabilities do not sum to the trace");
  if (sum <= 0) throw std::domain_error("state has zero trace");
  for (auto& x : p) x /= sum;
  return p;
}

inline Bitstring index_to_bits(std::size_t index, int num_qubits) {
  Bitstring bits(num_qubits);
  for (int q = 0; q < num_qubits; ++q) bits[q] = static_cast<std::uint8_t>((index >> bit_of(num_qubits, q)) & 1U);
  return bits;
}

/// Draws one computational-basis outcome after the given single-qubit basis
/// rotations (qubit -> 2x2 unitary).
template <class Rng>
Bitstring sample_measurement(const DensityMatrix& state, Rng& rng, const std::map<int, Matrix>& rotations = {}) {
  DensityMatrix rotated = state;
  for (const auto& [q, u] : rotations) rotated = apply_gate(std::move(rotated), Gate({q}, u, "prerotation"));
  const auto p = outcome_probabilities(rotated);
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return index_to_bits(dist(rng), state.num_qubits());
}

}  // namespace vpe
