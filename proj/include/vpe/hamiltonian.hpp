#pragma once

// Target operators, fast-forwardable decompositions and their exact
// evolution circuits.

#include "vpe/fermion.hpp"
#include "vpe/gates.hpp"
#include "vpe/pauli.hpp"
#include "vpe/qsim.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace vpe {

inline PauliSum build_tfim(int num_sites, double jz, double jx) {
  if (num_sites < 2) throw std::invalid_argument("TFIM needs at least 2 sites");
  PauliSum h(num_sites);
  for (int j = 0; j < num_sites; ++j) {
    PauliWord z(num_sites, Pauli::I), xx(num_sites, Pauli::I);
    z[j] = Pauli::Z;
    xx[j] = Pauli::X;
    xx[(j + 1) % num_sites] = Pauli::X;
    if (jz != 0) h.add(z, jz);
    if (jx != 0) h.add(xx, jx);
  }
  return h.pruned();
}

// ---------------------------------------------------------------------------
// Single-particle basis rotations as Givens networks.

/// Two-mode rotation on adjacent modes (mode, mode + 1).
struct GivensStep {
  int mode;
  Matrix block;  // 2x2 single-particle block
};

/// u = G_1 G_2 ... G_m diag(phases), with G_k acting on adjacent modes.
struct GivensDecomposition {
  int num_modes = 0;
  std::vector<GivensStep> steps;
  Vector phases;

  Matrix single_particle_matrix() const {
    Matrix u = Matrix::Identity(num_modes, num_modes);
    for (const auto& s : steps) {
      Matrix g = Matrix::Identity(num_modes, num_modes);
      g.block(s.mode, s.mode, 2, 2) = s.block;
      u = u * g;
    }
    return u * phases.asDiagonal();
  }
};

/// Lower-triangular elimination by adjacent-row rotations, column by column
/// from the bottom.
inline GivensDecomposition decompose_single_particle(const Matrix& u) {
  const auto n = u.rows();
  if (u.cols() != n || !is_unitary(u, 1e-9)) throw std::invalid_argument("single-particle matrix must be unitary");
  Matrix r = u;
  std::vector<GivensStep> eliminations;
  for (Eigen::Index c = 0; c + 1 < n; ++c)
    for (Eigen::Index row = n - 1; row > c; --row) {
      const cplx a = r(row - 1, c), b = r(row, c);
      const double rho = std::hypot(std::abs(a), std::abs(b));
      if (std::abs(b) < 1e-15 || rho == 0) continue;
      Matrix w(2, 2);
      w << std::conj(a), std::conj(b), -b, a;
      w /= rho;
      r.middleRows(row - 1, 2) = w * r.middleRows(row - 1, 2);
      eliminations.push_back({static_cast<int>(row - 1), w});
    }
  GivensDecomposition out;
  out.num_modes = static_cast<int>(n);
  // W_m ... W_1 u = D  =>  u = W_1^dag ... W_m^dag D
  for (const auto& e : eliminations) out.steps.push_back({e.mode, e.block.adjoint()});
  out.phases = r.diagonal();
  for (Eigen::Index i = 0; i < n; ++i) out.phases(i) /= std::abs(out.phases(i));
  return out;
}

/// Many-body circuit for the single-particle rotation u on modes
/// offset..offset+n-1 of a `total_qubits` register. The trailing phases are
/// folded into the first rotation touching each mode.
inline Circuit single_particle_circuit(const Matrix& u, int total_qubits, int offset = 0) {
  const auto dec = decompose_single_particle(u);
  const int n = dec.num_modes;
  Circuit c(total_qubits);
  std::vector<cplx> pending(dec.phases.data(), dec.phases.data() + n);
  for (auto it = dec.steps.rbegin(); it != dec.steps.rend(); ++it) {
    const int a = it->mode;
    Matrix phase = Matrix::Zero(2, 2);
    phase(0, 0) = pending[a];
    phase(1, 1) = pending[a + 1];
    pending[a] = pending[a + 1] = 1.0;
    c.push_packed(gates::SingleParticle(offset + a, offset + a + 1, it->block * phase));
  }
  for (int q = 0; q < n; ++q)
    if (std::abs(pending[q] - 1.0) > 1e-15) c.push_packed(gates::Phase(offset + q, std::arg(pending[q])));
  return c;
}

struct QuadraticDiagonalization {
  RealVector energies;            // single-particle energies, ascending
  Matrix orbitals;                // W with t = W diag(energies) W^dag
  GivensDecomposition givens;     // network for W

  /// V = W^dag, so that t = V^dag diag(energies) V.
  Matrix basis_change() const { return orbitals.adjoint(); }
};

inline QuadraticDiagonalization diagonalize_quadratic(const Matrix& t) {
  if (t.rows() != t.cols() || !is_hermitian(t, 1e-10)) throw std::invalid_argument("quadratic matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(t);
  QuadraticDiagonalization out;
  out.energies = es.eigenvalues();
  out.orbitals = es.eigenvectors();
  // A diagonal input keeps the identity basis so no rotations are emitted.
  if ((t - Matrix(t.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-14) {
    const auto n = t.rows();
    out.orbitals = Matrix::Identity(n, n);
    out.energies = t.diagonal().real();
  }
  out.givens = decompose_single_particle(out.orbitals);
  return out;
}

// ---------------------------------------------------------------------------
// Evolution compilers. Every routine emits exp(i * time * op) exactly, on
// system qubits offset..offset+n-1; with a control qubit only the
// phase-bearing gates are controlled.

inline void push_phase(Circuit& c, int q, double phi, std::optional<int> control) {
  if (control) c.push_packed(gates::CPhase(*control, q, phi));
  else c.push_packed(gates::Phase(q, phi));
}

/// exp(i time P) for each string in turn; the strings must commute.
inline void append_pauli_evolution(Circuit& c, const std::vector<PauliString>& strings, double time, int offset,
                                   std::optional<int> control) {
  for (const auto& s : strings) {
    const double theta = s.coefficient * time;
    const auto support = s.support();
    if (support.empty()) {
      if (control) c.push_packed(gates::Phase(*control, theta));
      continue;
    }
    if (support.size() == 2 && s.letters[support[0]] == Pauli::Z && s.letters[support[1]] == Pauli::Z) {
      // Z_a Z_b = 1 - 2 n_a - 2 n_b + 4 n_a n_b, compiled with phases so the
      // circuit never leaves the particle-number sector.
      const int a = support[0] + offset, b = support[1] + offset;
      if (control) {
        c.push_packed(gates::Phase(*control, theta));
        push_phase(c, a, -2 * theta, control);
      } else {
        c.push_packed(gates::ExpZ(a, theta));  // e^{i theta} Phase(-2 theta)
      }
      push_phase(c, b, -2 * theta, control);
      if (control) c.push_packed(Gate({*control, a, b}, gates::phase_on_all_ones(3, 4 * theta), "CCP"));
      else c.push_packed(gates::CPhase(a, b, 4 * theta));
      continue;
    }
    std::vector<Gate> into, outof;
    for (int q : support) {
      const int qq = q + offset;
      if (s.letters[q] == Pauli::X) {
        into.push_back(gates::H(qq));
        outof.push_back(gates::H(qq));
      } else if (s.letters[q] == Pauli::Y) {
        into.push_back(gates::Rx(qq, kPi / 2));
        outof.push_back(gates::Rx(qq, -kPi / 2));
      }
    }
    for (auto& g : into) c.push_packed(g);
    for (std::size_t k = 0; k + 1 < support.size(); ++k)
      c.push_packed(gates::CNOT(support[k] + offset, support[k + 1] + offset));
    const int last = support.back() + offset;
    if (control) c.push_packed(gates::ControlledExpZ(*control, last, theta));
    else c.push_packed(gates::ExpZ(last, theta));
    for (std::size_t k = support.size() - 1; k > 0; --k)
      c.push_packed(gates::CNOT(support[k - 1] + offset, support[k] + offset));
    for (auto& g : outof) c.push_packed(g);
  }
}

/// exp(i time sum_pq t_pq c+_p c_q) = U(W) exp(i time sum eps n) U(W)^dag.
inline void append_free_fermion_evolution(Circuit& c, const QuadraticDiagonalization& diag, double time, int offset,
                                          std::optional<int> control) {
  const int n = static_cast<int>(diag.energies.size());
  c.append(single_particle_circuit(diag.orbitals.adjoint(), c.num_qubits(), offset));
  for (int a = 0; a < n; ++a)
    if (diag.energies(a) != 0) push_phase(c, offset + a, diag.energies(a) * time, control);
  c.append(single_particle_circuit(diag.orbitals, c.num_qubits(), offset));
}

/// exp(i time (sum eps_a n_a)^2) in the rotated basis `basis`.
inline void append_low_rank_factor_evolution(Circuit& c, const Matrix& basis, const RealVector& eigs, double time,
                                             int offset, std::optional<int> control) {
  const int n = static_cast<int>(eigs.size());
  c.append(single_particle_circuit(basis.adjoint(), c.num_qubits(), offset));
  for (int a = 0; a < n; ++a) {
    const double phi = eigs(a) * eigs(a) * time;
    if (phi != 0) push_phase(c, offset + a, phi, control);
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double phi = 2.0 * eigs(a) * eigs(b) * time;
      if (phi == 0) continue;
      if (control) c.push_packed(Gate({*control, offset + a, offset + b}, gates::phase_on_all_ones(3, phi), "CCP"));
      else c.push_packed(gates::CPhase(offset + a, offset + b, phi));
    }
  c.append(single_particle_circuit(basis, c.num_qubits(), offset));
}

struct LowRankFactor {
  Matrix basis;    // orbitals of t^(l)
  RealVector eigs; // t^(l) = basis diag(eigs) basis^dag
};

/// prod_l exp(i t H^(l)) with H^(l) = (sum_pq t^(l)_pq c+_p c_q)^2.
inline Circuit low_rank_evolution(const std::vector<LowRankFactor>& factors, double t, int num_modes) {
  Circuit c(num_modes);
  if (t == 0) return c;
  for (const auto& f : factors) {
    if (f.basis.rows() != num_modes || f.eigs.size() != num_modes) throw std::invalid_argument("factor size mismatch");
    append_low_rank_factor_evolution(c, f.basis, f.eigs, t, 0, std::nullopt);
  }
  return c;
}

/// One-body operator sum_pq t_pq c+_p c_q.
inline FermionOperator quadratic_operator(const Matrix& t) {
  FermionOperator f(static_cast<int>(t.rows()));
  for (Eigen::Index p = 0; p < t.rows(); ++p)
    for (Eigen::Index q = 0; q < t.cols(); ++q)
      if (t(p, q) != cplx{0.0}) f += FermionOperator::hop(f.num_modes(), static_cast<int>(p), static_cast<int>(q), t(p, q));
  return f;
}

inline FermionOperator low_rank_factor_operator(const LowRankFactor& f) {
  const Matrix t = f.basis * f.eigs.cast<cplx>().asDiagonal() * f.basis.adjoint();
  const auto one = quadratic_operator(t);
  return one * one;
}

// ---------------------------------------------------------------------------
// Summands and decompositions.

enum class EvolutionKind { PauliGroup, FreeFermion, LowRankFactor };

namespace detail {

inline std::vector<double> distinct_values(std::vector<double> v, double tol = 1e-8) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > tol) out.push_back(x);
  return out;
}

}  // namespace detail

/// One fast-forwardable term H_s = scale * G_s, where the generator G_s has
/// spectral radius one. Evolution circuits implement exp(i tau G_s).
struct Summand {
  std::string label;
  EvolutionKind kind = EvolutionKind::PauliGroup;
  PauliSum op;
  double scale = 1.0;
  std::vector<PauliString> strings;  // PauliGroup
  QuadraticDiagonalization quadratic; // FreeFermion
  LowRankFactor factor;               // LowRankFactor

  int num_qubits() const { return op.num_qubits(); }

  /// Appends exp(i tau G_s) onto `c` with system qubits shifted by `offset`.
  void append_evolution(Circuit& c, double tau, int offset, std::optional<int> control) const {
    const double time = tau / scale;
    switch (kind) {
      case EvolutionKind::PauliGroup: append_pauli_evolution(c, strings, time, offset, control); break;
      case EvolutionKind::FreeFermion: append_free_fermion_evolution(c, quadratic, time, offset, control); break;
      case EvolutionKind::LowRankFactor:
        append_low_rank_factor_evolution(c, factor.basis, factor.eigs, time, offset, control);
        break;
    }
  }

  Circuit evolution(double tau, int total_qubits, int offset, std::optional<int> control) const {
    Circuit c(total_qubits);
    append_evolution(c, tau, offset, control);
    return c;
  }

  Matrix generator_matrix() const { return op.to_matrix() / scale; }

  bool is_number_conserving() const {
    const Matrix g = generator_matrix();
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        if (std::abs(g(r, c)) > 1e-12 && std::popcount(static_cast<std::uint64_t>(r)) != std::popcount(static_cast<std::uint64_t>(c)))
          return false;
    return true;
  }

  /// Distinct generator eigenvalues, optionally restricted to a particle-number sector.
  std::vector<double> eigenvalues(std::optional<int> sector = std::nullopt) const {
    const Matrix g = generator_matrix();
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      if (!sector || std::popcount(static_cast<std::uint64_t>(i)) == *sector) idx.push_back(i);
    if (sector && !is_number_conserving()) throw std::logic_error("summand '" + label + "' does not conserve number");
    Matrix sub(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b) sub(a, b) = g(idx[a], idx[b]);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sub, Eigen::EigenvaluesOnly);
    return detail::distinct_values({es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()});
  }

  /// Generator eigenvalue of |0...0>, when that state is an eigenstate.
  std::optional<double> vacuum_eigenvalue() const {
    const Matrix g = generator_matrix();
    for (Eigen::Index r = 1; r < g.rows(); ++r)
      if (std::abs(g(r, 0)) > 1e-12) return std::nullopt;
    return g(0, 0).real();
  }
};

namespace detail {

inline double spectral_radius(const PauliSum& op) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(op.to_matrix(), Eigen::EigenvaluesOnly);
  const double r = es.eigenvalues().cwiseAbs().maxCoeff();
  return r > 1e-12 ? r : 1.0;
}

}  // namespace detail

inline Summand make_pauli_summand(std::string label, const PauliSum& op) {
  Summand s;
  s.label = std::move(label);
  s.kind = EvolutionKind::PauliGroup;
  s.op = op.pruned(1e-14);
  if (s.op.max_imag() > 1e-10) throw std::invalid_argument("summand '" + s.label + "' is not Hermitian");
  s.strings = s.op.strings();
  for (std::size_t a = 0; a < s.strings.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (!commutes(s.strings[a].letters, s.strings[b].letters))
        throw std::invalid_argument("summand '" + s.label + "' contains non-commuting strings");
  s.scale = detail::spectral_radius(s.op);
  return s;
}

inline Summand make_free_fermion_summand(std::string label, const Matrix& t) {
  Summand s;
  s.label = std::move(label);
  s.kind = EvolutionKind::FreeFermion;
  s.quadratic = diagonalize_quadratic(t);
  s.op = jordan_wigner(quadratic_operator(t));
  s.scale = detail::spectral_radius(s.op);
  return s;
}

inline Summand make_low_rank_summand(std::string label, const LowRankFactor& f) {
  Summand s;
  s.label = std::move(label);
  s.kind = EvolutionKind::LowRankFactor;
  s.factor = f;
  s.op = jordan_wigner(low_rank_factor_operator(f));
  s.scale = detail::spectral_radius(s.op);
  return s;
}

struct HamiltonianDecomposition {
  int num_qubits = 0;
  double constant = 0.0;
  std::vector<Summand> summands;

  PauliSum total() const {
    PauliSum h(num_qubits);
    h.add(PauliWord(num_qubits, Pauli::I), constant);
    for (const auto& s : summands) h += s.op;
    return h.pruned();
  }
};

/// One summand per Pauli string (identity moved to the constant).
inline HamiltonianDecomposition decompose_pauli(const PauliSum& h) {
  HamiltonianDecomposition d;
  d.num_qubits = h.num_qubits();
  d.constant = h.constant();
  for (const auto& s : h.without_constant().strings()) d.summands.push_back(make_pauli_summand(s.label(), to_sum(s)));
  return d;
}

/// Groups each normal-ordered term with its conjugate; groups acting on the
/// same set of modes are merged while their Pauli images still commute.
inline HamiltonianDecomposition decompose_number_conserving(const FermionOperator& h) {
  if (!h.is_number_conserving()) throw std::invalid_argument("operator does not conserve particle number");
  if (!h.is_hermitian(1e-10)) throw std::invalid_argument("operator is not Hermitian");
  const int n = h.num_modes();
  HamiltonianDecomposition d;
  d.num_qubits = n;
  std::set<LadderString> seen;
  std::map<std::set<int>, std::vector<PauliSum>> groups;
  const auto pruned = h.pruned(1e-14);
  for (const auto& [key, coeff] : pruned.terms()) {
    if (seen.contains(key)) continue;
    auto single = FermionOperator::term(n, key, coeff);
    auto conj = single.adjoint();
    FermionOperator pair = single;
    const LadderString conj_key = conj.terms().begin()->first;
    if (conj_key != key) {
      pair += conj;
      seen.insert(conj_key);
    }
    seen.insert(key);
    PauliSum image = jordan_wigner(pair);
    d.constant += image.constant();
    image = image.without_constant().pruned(1e-14);
    if (image.empty()) continue;
    std::set<int> modes;
    for (const auto& l : key) modes.insert(l.mode);
    auto& bucket = groups[modes];
    bool placed = false;
    for (auto& existing : bucket) {
      auto merged = (existing + image).pruned(1e-14);
      bool ok = true;
      const auto ss = merged.strings();
      for (std::size_t a = 0; a < ss.size() && ok; ++a)
        for (std::size_t b = 0; b < a && ok; ++b) ok = commutes(ss[a].letters, ss[b].letters);
      if (ok) {
        existing = merged;
        placed = true;
        break;
      }
    }
    if (!placed) bucket.push_back(image);
  }
  for (const auto& [modes, sums] : groups)
    for (const auto& s : sums) {
      if (s.empty()) continue;
      std::string label = "modes";
      for (int m : modes) label += " " + std::to_string(m);
      d.summands.push_back(make_pauli_summand(label, s));
    }
  return d;
}

/// The quadratic part as a single free-fermion summand.
inline HamiltonianDecomposition decompose_free_fermion(const FermionOperator& h, std::string label = "one-body") {
  HamiltonianDecomposition d;
  d.num_qubits = h.num_modes();
  for (const auto& [key, c] : h.terms())
    if (!key.empty() && key.size() != 2) throw std::invalid_argument("operator is not quadratic");
  d.constant = h.constant();
  d.summands.push_back(make_free_fermion_summand(std::move(label), h.one_body_matrix()));
  return d;
}

struct LowRankHamiltonian {
  int num_modes = 0;
  double constant = 0.0;
  Matrix one_body;
  std::vector<LowRankFactor> factors;

  FermionOperator to_fermion() const {
    FermionOperator f = FermionOperator::identity(num_modes, constant) + quadratic_operator(one_body);
    for (const auto& l : factors) f += low_rank_factor_operator(l);
    return f.pruned();
  }
};

inline HamiltonianDecomposition decompose_low_rank(const LowRankHamiltonian& h) {
  HamiltonianDecomposition d;
  d.num_qubits = h.num_modes;
  d.constant = h.constant;
  d.summands.push_back(make_free_fermion_summand("H(0)", h.one_body));
  for (std::size_t l = 0; l < h.factors.size(); ++l)
    d.summands.push_back(make_low_rank_summand("H(" + std::to_string(l + 1) + ")", h.factors[l]));
  return d;
}

inline Matrix json_matrix(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw std::runtime_error(what + ": expected a non-empty matrix");
  const auto rows = j.size(), cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw std::runtime_error(what + ": ragged matrix row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline LowRankHamiltonian load_low_rank_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open low-rank factor file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  try {
    LowRankHamiltonian h;
    h.num_modes = j.at("num_modes").get<int>();
    h.constant = j.value("constant", 0.0);
    h.one_body = json_matrix(j.at("one_body"), path + ": one_body");
    if (h.one_body.rows() != h.num_modes || !is_hermitian(h.one_body, 1e-10))
      throw std::runtime_error(path + ": one_body must be a Hermitian num_modes x num_modes matrix");
    for (const auto& f : j.at("factors")) {
      LowRankFactor lf;
      lf.basis = json_matrix(f.at("basis"), path + ": factor basis");
      const auto eigs = f.at("eigs").get<std::vector<double>>();
      lf.eigs = Eigen::Map<const RealVector>(eigs.data(), static_cast<Eigen::Index>(eigs.size()));
      if (lf.basis.rows() != h.num_modes || lf.eigs.size() != h.num_modes || !is_unitary(lf.basis, 1e-8))
        throw std::runtime_error(path + ": factor basis must be a unitary num_modes x num_modes matrix");
      h.factors.push_back(std::move(lf));
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed factor file: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Line-oriented Hamiltonian files.

using LoadedHamiltonian = std::variant<FermionOperator, PauliSum>;

/// Parses either Pauli lines ("X0 X1 0.5") or fermionic lines ("+0 -1 1.0");
/// a line holding only a number is a constant. `#` starts a comment.
inline LoadedHamiltonian parse_hamiltonian(std::istream& in, const std::string& source = "<input>") {
  enum class Form { Unknown, Pauli, Fermion };
  Form form = Form::Unknown;
  struct Line {
    std::vector<std::string> ops;
    double coeff;
    int number;
  };
  std::vector<Line> lines;
  int max_index = -1;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& why) {
      return std::runtime_error(source + ":" + std::to_string(lineno) + ": " + why);
    };
    Line l;
    l.number = lineno;
    try {
      std::size_t used = 0;
      l.coeff = std::stod(tok.back(), &used);
      if (used != tok.back().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw fail("expected a real coefficient at end of line, got '" + tok.back() + "'");
    }
    tok.pop_back();
    for (const auto& t : tok) {
      if (t.size() < 2) throw fail("bad operator token '" + t + "'");
      const char head = t[0];
      const Form f = (head == '+' || head == '-') ? Form::Fermion : Form::Pauli;
      if (f == Form::Pauli && std::string("XYZxyz").find(head) == std::string::npos)
        throw fail("bad operator token '" + t + "'");
      if (form != Form::Unknown && form != f) throw fail("mixes Pauli and fermionic terms");
      form = f;
      int idx;
      try {
        std::size_t used = 0;
        idx = std::stoi(t.substr(1), &used);
        if (used != t.size() - 1 || idx < 0) throw std::invalid_argument("index");
      } catch (const std::exception&) {
        throw fail("bad index in token '" + t + "'");
      }
      max_index = std::max(max_index, idx);
    }
    l.ops = std::move(tok);
    lines.push_back(std::move(l));
  }
  const int n = std::max(max_index + 1, 1);
  if (form == Form::Fermion) {
    FermionOperator f(n);
    for (const auto& l : lines) {
      LadderString ops;
      for (const auto& t : l.ops) ops.push_back({std::stoi(t.substr(1)), t[0] == '+'});
      f.add_product(ops, l.coeff);
    }
    f = f.pruned();
    if (!f.is_hermitian(1e-10)) throw std::runtime_error(source + ": fermionic operator is not Hermitian");
    return f;
  }
  PauliSum p(n);
  for (const auto& l : lines) {
    std::string text;
    for (const auto& t : l.ops) text += t + " ";
    try {
      p.add(PauliString::parse(text, n, l.coeff));
    } catch (const std::exception& e) {
      throw std::runtime_error(source + ":" + std::to_string(l.number) + ": " + e.what());
    }
  }
  return p.pruned();
}

inline LoadedHamiltonian load_hamiltonian_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open Hamiltonian file " + path);
  return parse_hamiltonian(in, path);
}

inline PauliSum qubit_operator(const LoadedHamiltonian& h) {
  if (const auto* f = std::get_if<FermionOperator>(&h)) return jordan_wigner(*f);
  return std::get<PauliSum>(h);
}

}  // namespace vpe
