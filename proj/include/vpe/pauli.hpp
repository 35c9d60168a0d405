#pragma once

#include "vpe/linalg.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace vpe {

/// Single-qubit Pauli letter. The numeric values index the multiplication table.
enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

using PauliWord = std::vector<Pauli>;

namespace detail {

/// sigma_a * sigma_b = phase * sigma_c
inline std::pair<cplx, Pauli> multiply_letters(Pauli a, Pauli b) {
  if (a == Pauli::I) return {1.0, b};
  if (b == Pauli::I) return {1.0, a};
  if (a == b) return {1.0, Pauli::I};
  const int ia = static_cast<int>(a), ib = static_cast<int>(b);
  const int ic = 6 - ia - ib;
  // cyclic X->Y->Z gives +i
  const bool cyclic = (ib - ia + 3) % 3 == 1;
  return {cyclic ? kI : -kI, static_cast<Pauli>(ic)};
}

inline Matrix letter_matrix(Pauli p) {
  Matrix m(2, 2);
  switch (p) {
    case Pauli::I: m << 1, 0, 0, 1; break;
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, -kI, kI, 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline char letter_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

}  // namespace detail

/// Real-coefficient Pauli string over a fixed register.
struct PauliString {
  PauliWord letters;
  double coefficient = 1.0;

  PauliString() = default;
  PauliString(PauliWord w, double c) : letters(std::move(w)), coefficient(c) {}

  /// Parses tokens like "X0 Y2" on `num_qubits` qubits.
  static PauliString parse(const std::string& text, int num_qubits, double coefficient = 1.0) {
    PauliWord w(num_qubits, Pauli::I);
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
      if (tok == "I") continue;
      if (tok.size() < 2) throw std::invalid_argument("bad Pauli token '" + tok + "'");
      Pauli p;
      switch (std::toupper(static_cast<unsigned char>(tok[0]))) {
        case 'X': p = Pauli::X; break;
        case 'Y': p = Pauli::Y; break;
        case 'Z': p = Pauli::Z; break;
        default: throw std::invalid_argument("bad Pauli token '" + tok + "'");
      }
      int q = std::stoi(tok.substr(1));
      if (q < 0 || q >= num_qubits) throw std::out_of_range("Pauli qubit index out of range in '" + tok + "'");
      if (w[q] != Pauli::I) throw std::invalid_argument("qubit repeated in Pauli string '" + text + "'");
      w[q] = p;
    }
    return {std::move(w), coefficient};
  }

  int num_qubits() const { return static_cast<int>(letters.size()); }

  std::vector<int> support() const {
    std::vector<int> s;
    for (int q = 0; q < num_qubits(); ++q)
      if (letters[q] != Pauli::I) s.push_back(q);
    return s;
  }

  std::string label() const {
    std::string out;
    for (int q = 0; q < num_qubits(); ++q) {
      if (letters[q] == Pauli::I) continue;
      if (!out.empty()) out += ' ';
      out += detail::letter_char(letters[q]);
      out += std::to_string(q);
    }
    return out.empty() ? "I" : out;
  }

  Matrix to_matrix() const {
    Matrix m = Matrix::Identity(1, 1);
    for (Pauli p : letters) m = kron(m, detail::letter_matrix(p));
    return coefficient * m;
  }
};

inline bool commutes(const PauliWord& a, const PauliWord& b) {
  int anti = 0;
  for (std::size_t q = 0; q < a.size(); ++q)
    if (a[q] != Pauli::I && b[q] != Pauli::I && a[q] != b[q]) ++anti;
  return anti % 2 == 0;
}

/// Sum of Pauli strings with duplicate words merged. Intermediate sums may
/// carry complex coefficients (e.g. during Jordan-Wigner); `hermitian_part`
/// converts to the real form.
class PauliSum {
 public:
  explicit PauliSum(int num_qubits = 0) : num_qubits_(num_qubits) {}

  int num_qubits() const { return num_qubits_; }

  void add(const PauliWord& w, cplx c) {
    if (static_cast<int>(w.size()) != num_qubits_)
      throw std::invalid_argument("Pauli word size does not match register");
    terms_[w] += c;
  }
  void add(const PauliString& s) { add(s.letters, s.coefficient); }

  PauliSum& operator+=(const PauliSum& o) {
    check_register(o);
    for (const auto& [w, c] : o.terms_) terms_[w] += c;
    return *this;
  }
  friend PauliSum operator+(PauliSum a, const PauliSum& b) { return a += b; }

  PauliSum operator*(cplx s) const {
    PauliSum out(num_qubits_);
    for (const auto& [w, c] : terms_) out.terms_[w] = c * s;
    return out;
  }

  PauliSum operator*(const PauliSum& o) const {
    check_register(o);
    PauliSum out(num_qubits_);
    for (const auto& [wa, ca] : terms_)
      for (const auto& [wb, cb] : o.terms_) {
        PauliWord w(num_qubits_);
        cplx phase = ca * cb;
        for (int q = 0; q < num_qubits_; ++q) {
          auto [ph, p] = detail::multiply_letters(wa[q], wb[q]);
          phase *= ph;
          w[q] = p;
        }
        out.terms_[w] += phase;
      }
    return out;
  }

  /// Drops coefficients below `tol` in magnitude.
  PauliSum pruned(double tol = 1e-14) const {
    PauliSum out(num_qubits_);
    for (const auto& [w, c] : terms_)
      if (std::abs(c) > tol) out.terms_[w] = c;
    return out;
  }

  /// Largest imaginary coefficient magnitude; zero for Hermitian sums.
  double max_imag() const {
    double m = 0;
    for (const auto& [w, c] : terms_) m = std::max(m, std::abs(c.imag()));
    return m;
  }

  std::vector<PauliString> strings(double tol = 1e-14) const {
    std::vector<PauliString> out;
    for (const auto& [w, c] : terms_) {
      if (std::abs(c) <= tol) continue;
      if (std::abs(c.imag()) > 1e-10)
        throw std::logic_error("PauliSum has a non-real coefficient; not Hermitian");
      out.emplace_back(w, c.real());
    }
    return out;
  }

  /// Coefficient of the identity word.
  double constant() const {
    auto it = terms_.find(PauliWord(num_qubits_, Pauli::I));
    return it == terms_.end() ? 0.0 : it->second.real();
  }

  /// Copy without the identity component.
  PauliSum without_constant() const {
    PauliSum out = *this;
    out.terms_.erase(PauliWord(num_qubits_, Pauli::I));
    return out;
  }

  bool empty(double tol = 1e-14) const { return strings(tol).empty(); }
  std::size_t size() const { return terms_.size(); }
  const std::map<PauliWord, cplx>& terms() const { return terms_; }

  Matrix to_matrix() const {
    const auto d = static_cast<Eigen::Index>(dim_of(num_qubits_));
    Matrix m = Matrix::Zero(d, d);
    for (const auto& [w, c] : terms_) {
      if (c == cplx{0.0}) continue;
      PauliString s(w, 1.0);
      m += c * s.to_matrix();
    }
    return m;
  }

  /// Embeds onto a larger register, qubit q mapping to q + offset.
  PauliSum embedded(int total_qubits, int offset) const {
    if (offset < 0 || offset + num_qubits_ > total_qubits) throw std::out_of_range("embedding does not fit register");
    PauliSum out(total_qubits);
    for (const auto& [w, c] : terms_) {
      PauliWord big(total_qubits, Pauli::I);
      for (int q = 0; q < num_qubits_; ++q) big[q + offset] = w[q];
      out.terms_[big] += c;
    }
    return out;
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& s : strings()) os << s.coefficient << " * " << s.label() << "\n";
    return os.str();
  }

 private:
  void check_register(const PauliSum& o) const {
    if (o.num_qubits_ != num_qubits_) throw std::invalid_argument("PauliSum register mismatch");
  }

  int num_qubits_;
  std::map<PauliWord, cplx> terms_;
};

inline PauliSum to_sum(const PauliString& s) {
  PauliSum out(s.num_qubits());
  out.add(s);
  return out;
}

}  // namespace vpe
