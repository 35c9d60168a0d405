#pragma once

// Fermionic ladder-operator algebra and the Jordan-Wigner map.

#include "vpe/pauli.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace vpe {

struct Ladder {
  int mode;
  bool dagger;
  auto operator<=>(const Ladder&) const = default;
};

using LadderString = std::vector<Ladder>;

/// Sum of ladder-operator products, kept in normal order: creators first in
/// descending mode order, then annihilators in descending mode order.
class FermionOperator {
 public:
  explicit FermionOperator(int num_modes = 0) : num_modes_(num_modes) {}

  static FermionOperator term(int num_modes, LadderString ops, cplx coeff) {
    FermionOperator f(num_modes);
    f.add_product(ops, coeff);
    return f;
  }

  static FermionOperator identity(int num_modes, cplx coeff = 1.0) { return term(num_modes, {}, coeff); }

  /// c+_p c_q
  static FermionOperator hop(int num_modes, int p, int q, cplx coeff = 1.0) {
    return term(num_modes, {{p, true}, {q, false}}, coeff);
  }

  int num_modes() const { return num_modes_; }
  const std::map<LadderString, cplx>& terms() const { return terms_; }

  /// Adds coeff * (product of `ops` in the given order), normal ordering it.
  void add_product(const LadderString& ops, cplx coeff) {
    for (const auto& l : ops)
      if (l.mode < 0 || l.mode >= num_modes_)
        throw std::out_of_range("fermion mode " + std::to_string(l.mode) + " outside " + std::to_string(num_modes_));
    normal_order_into(ops, coeff);
  }

  FermionOperator& operator+=(const FermionOperator& o) {
    check(o);
    for (const auto& [k, c] : o.terms_) terms_[k] += c;
    return *this;
  }
  friend FermionOperator operator+(FermionOperator a, const FermionOperator& b) { return a += b; }

  FermionOperator operator*(cplx s) const {
    FermionOperator out(num_modes_);
    for (const auto& [k, c] : terms_) out.terms_[k] = c * s;
    return out;
  }

  FermionOperator operator*(const FermionOperator& o) const {
    check(o);
    FermionOperator out(num_modes_);
    for (const auto& [ka, ca] : terms_)
      for (const auto& [kb, cb] : o.terms_) {
        LadderString joined = ka;
        joined.insert(joined.end(), kb.begin(), kb.end());
        out.normal_order_into(joined, ca * cb);
      }
    return out;
  }

  FermionOperator adjoint() const {
    FermionOperator out(num_modes_);
    for (const auto& [k, c] : terms_) {
      LadderString rev(k.rbegin(), k.rend());
      for (auto& l : rev) l.dagger = !l.dagger;
      out.normal_order_into(rev, std::conj(c));
    }
    return out;
  }

  FermionOperator pruned(double tol = 1e-14) const {
    FermionOperator out(num_modes_);
    for (const auto& [k, c] : terms_)
      if (std::abs(c) > tol) out.terms_[k] = c;
    return out;
  }

  bool is_hermitian(double tol = 1e-12) const {
    auto diff = (*this + adjoint() * -1.0).pruned(tol);
    return diff.terms_.empty();
  }

  bool is_number_conserving() const {
    for (const auto& [k, c] : terms_) {
      if (std::abs(c) <= 1e-14) continue;
      int balance = 0;
      for (const auto& l : k) balance += l.dagger ? 1 : -1;
      if (balance != 0) return false;
    }
    return true;
  }

  double constant() const {
    auto it = terms_.find({});
    return it == terms_.end() ? 0.0 : it->second.real();
  }

  /// Single-particle matrix t_pq of the c+_p c_q terms.
  Matrix one_body_matrix() const {
    Matrix t = Matrix::Zero(num_modes_, num_modes_);
    for (const auto& [k, c] : terms_)
      if (k.size() == 2 && k[0].dagger && !k[1].dagger) t(k[0].mode, k[1].mode) += c;
    return t;
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& [k, c] : terms_) {
      if (std::abs(c) <= 1e-14) continue;
      os << c.real();
      if (c.imag() != 0) os << (c.imag() > 0 ? "+" : "") << c.imag() << "i";
      for (const auto& l : k) os << ' ' << (l.dagger ? '+' : '-') << l.mode;
      os << '\n';
    }
    return os.str();
  }

 private:
  void check(const FermionOperator& o) const {
    if (o.num_modes_ != num_modes_) throw std::invalid_argument("fermion operators on different mode counts");
  }

  static bool ordered_before(const Ladder& a, const Ladder& b) {
    if (a.dagger != b.dagger) return a.dagger;
    return a.mode > b.mode;
  }

  // Bubble sort with anticommutation; {c_p, c+_q} = delta_pq spawns a
  // contracted term that is ordered recursively.
  void normal_order_into(LadderString ops, cplx coeff) {
    if (coeff == cplx{0.0}) return;
    for (std::size_t i = 1; i < ops.size(); ++i) {
      for (std::size_t j = i; j > 0; --j) {
        Ladder& left = ops[j - 1];
        Ladder& right = ops[j];
        if (ordered_before(left, right)) break;
        if (left.mode == right.mode && left.dagger == right.dagger) return;  // c c = 0
        if (left.mode == right.mode && !left.dagger && right.dagger) {
          LadderString contracted;
          contracted.insert(contracted.end(), ops.begin(), ops.begin() + static_cast<long>(j) - 1);
          contracted.insert(contracted.end(), ops.begin() + static_cast<long>(j) + 1, ops.end());
          normal_order_into(contracted, coeff);
        }
        std::swap(left, right);
        coeff = -coeff;
      }
    }
    terms_[ops] += coeff;
  }

  int num_modes_;
  std::map<LadderString, cplx> terms_;
};

/// -t sum_j (c+_j c_{j+1} + h.c.); periodic adds the (N-1, 0) bond.
inline FermionOperator build_hopping_chain(int num_sites, double t, bool periodic = true) {
  if (num_sites < 2) throw std::invalid_argument("hopping chain needs at least 2 sites");
  FermionOperator h(num_sites);
  const int bonds = periodic ? num_sites : num_sites - 1;
  for (int j = 0; j < bonds; ++j) {
    const int k = (j + 1) % num_sites;
    h += FermionOperator::hop(num_sites, j, k, -t);
    h += FermionOperator::hop(num_sites, k, j, -t);
  }
  return h.pruned();
}

/// Jordan-Wigner image: c+_p = Z_0..Z_{p-1} (X_p - iY_p)/2, mode p on qubit p.
inline PauliSum jordan_wigner(const FermionOperator& op) {
  const int n = op.num_modes();
  auto ladder_image = [n](const Ladder& l) {
    PauliSum s(n);
    PauliWord wx(n, Pauli::I), wy(n, Pauli::I);
    for (int q = 0; q < l.mode; ++q) wx[q] = wy[q] = Pauli::Z;
    wx[l.mode] = Pauli::X;
    wy[l.mode] = Pauli::Y;
    s.add(wx, 0.5);
    s.add(wy, l.dagger ? -0.5 * kI : 0.5 * kI);
    return s;
  };
  PauliSum out(n);
  for (const auto& [k, c] : op.terms()) {
    if (c == cplx{0.0}) continue;
    PauliSum prod(n);
    prod.add(PauliWord(n, Pauli::I), c);
    for (const auto& l : k) prod = prod * ladder_image(l);
    out += prod;
  }
  return out.pruned(1e-14);
}

}  // namespace vpe
