#pragma once

#include "vpe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace vpe {

enum class RecordMode { Exact, Sampled };

/// Shot bookkeeping for one grid point. Tallies are signed sums of (-1)^m
/// over verified shots; the estimate divides by total shots, not verified ones.
struct ShotCounters {
  long long tally_x = 0, tally_y = 0;
  long long shots_x = 0, shots_y = 0;
  long long verified_x = 0, verified_y = 0;
};

struct PhaseFunctionRecord {
  std::vector<double> t_grid;
  std::vector<cplx> g;
  long long shots_per_point = 0;
  RecordMode mode = RecordMode::Exact;
  std::vector<ShotCounters> counters;  // empty in exact mode

  std::size_t size() const { return t_grid.size(); }
};

inline PhaseFunctionRecord synthesize_record(const std::vector<double>& t_grid, const std::vector<double>& energies,
                                             const std::vector<double>& amplitudes) {
  if (energies.size() != amplitudes.size()) throw std::invalid_argument("energies and amplitudes differ in length");
  PhaseFunctionRecord r;
  r.t_grid = t_grid;
  for (double t : t_grid) {
    cplx s = 0;
    for (std::size_t j = 0; j < energies.size(); ++j) s += amplitudes[j] * std::polar(1.0, energies[j] * t);
    r.g.push_back(s);
  }
  return r;
}

enum class SpectralMethod { Prony, KnownPhaseFit, SinglePoint };

inline std::string to_string(SpectralMethod m) {
  switch (m) {
    case SpectralMethod::Prony: return "prony";
    case SpectralMethod::KnownPhaseFit: return "known_phase_fit";
    case SpectralMethod::SinglePoint: return "single_point";
  }
  return "?";
}

struct SpectralEstimate {
  std::vector<double> energies;
  std::vector<double> amplitudes;
  SpectralMethod method = SpectralMethod::Prony;
  double residual = 0;
  // Set when prony had to lower the model order because the prediction
  // matrix was rank deficient.
  bool order_reduced = false;
  std::size_t order_used = 0;

  double total_amplitude() const { return std::accumulate(amplitudes.begin(), amplitudes.end(), 0.0); }
};

/// Lawson-Hanson nonnegative least squares: argmin |Ax - b| with x >= 0.
inline RealVector nnls(const RealMatrix& a, const RealVector& b, int max_iter = -1) {
  const Eigen::Index n = a.cols();
  if (a.rows() != b.size()) throw std::invalid_argument("nnls: dimension mismatch");
  if (max_iter < 0) max_iter = static_cast<int>(3 * n + 10);
  RealVector x = RealVector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()) * std::max<Eigen::Index>(a.rows(), n);

  auto solve_passive = [&](RealVector& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    RealMatrix ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
    RealVector zp = ap.completeOrthogonalDecomposition().solve(b);
    z = RealVector::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    RealVector w = a.transpose() * (b - a * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner < max_iter; ++inner) {
      RealVector z;
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && std::abs(x(j)) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0;
        }
    }
  }
  return x;
}

namespace detail {

/// Fits nonnegative amplitudes of e^{iE_j t} to a complex record; returns
/// the residual norm.
inline double fit_amplitudes(const PhaseFunctionRecord& rec, const std::vector<double>& energies,
                             std::vector<double>& amplitudes) {
  const auto m = static_cast<Eigen::Index>(rec.size());
  const auto k = static_cast<Eigen::Index>(energies.size());
  RealMatrix a(2 * m, k);
  RealVector b(2 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    b(i) = rec.g[static_cast<std::size_t>(i)].real();
    b(m + i) = rec.g[static_cast<std::size_t>(i)].imag();
    for (Eigen::Index j = 0; j < k; ++j) {
      const cplx e = std::polar(1.0, energies[static_cast<std::size_t>(j)] * rec.t_grid[static_cast<std::size_t>(i)]);
      a(i, j) = e.real();
      a(m + i, j) = e.imag();
    }
  }
  RealVector x = nnls(a, b);
  amplitudes.assign(x.data(), x.data() + x.size());
  return (a * x - b).norm();
}

inline double uniform_spacing(const std::vector<double>& t) {
  if (t.size() < 2) throw std::invalid_argument("time grid needs at least two points");
  const double dt = t[1] - t[0];
  if (!(dt > 0)) throw std::invalid_argument("time grid must be increasing");
  for (std::size_t k = 1; k < t.size(); ++k)
    if (std::abs(t[k] - t[0] - static_cast<double>(k) * dt) > 1e-9 * std::max(1.0, std::abs(t[k])))
      throw std::invalid_argument("time grid is not uniformly spaced");
  return dt;
}

}  // namespace detail

/// Least-squares linear prediction, companion-matrix roots, then NNLS
/// amplitudes. Roots further than 0.5 from the unit circle are dropped;
/// eigenvalues are arg(z)/dt, so E*dt lies in (-pi, pi].
inline SpectralEstimate prony(const PhaseFunctionRecord& rec, std::size_t order, double rank_tol = 1e-9) {
  if (order == 0) throw std::invalid_argument("prony: model order must be positive");
  if (rec.g.size() != rec.t_grid.size()) throw std::invalid_argument("prony: record size mismatch");
  if (rec.size() < 2 * order)
    throw std::invalid_argument("prony: order " + std::to_string(order) + " needs at least " +
                                std::to_string(2 * order) + " grid points, got " + std::to_string(rec.size()));
  const double dt = detail::uniform_spacing(rec.t_grid);

  SpectralEstimate est;
  est.method = SpectralMethod::Prony;
  std::size_t k = order;
  Vector coeffs;
  for (;; --k) {
    const auto rows = static_cast<Eigen::Index>(rec.size() - k);
    Matrix a(rows, static_cast<Eigen::Index>(k));
    Vector b(rows);
    for (Eigen::Index n = 0; n < rows; ++n) {
      b(n) = rec.g[static_cast<std::size_t>(n) + k];
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(k); ++j)
        a(n, j) = rec.g[static_cast<std::size_t>(n) + k - 1 - static_cast<std::size_t>(j)];
    }
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const bool deficient = s.size() == 0 || s(0) == 0.0 || s(s.size() - 1) < rank_tol * s(0);
    if (deficient && k > 1) {
      est.order_reduced = true;
      continue;
    }
    if (s.size() == 0 || s(0) == 0.0) throw std::domain_error("prony: record carries no signal");
    coeffs = svd.solve(b);
    break;
  }
  est.order_used = k;

  // z^k - a_1 z^{k-1} - ... - a_k
  Matrix companion = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(k); ++j) companion(0, j) = coeffs(j);
  for (Eigen::Index j = 1; j < static_cast<Eigen::Index>(k); ++j) companion(j, j - 1) = 1.0;
  Eigen::ComplexEigenSolver<Matrix> roots(companion, false);
  for (Eigen::Index j = 0; j < roots.eigenvalues().size(); ++j) {
    const cplx z = roots.eigenvalues()(j);
    if (std::abs(std::abs(z) - 1.0) > 0.5) continue;
    est.energies.push_back(std::arg(z) / dt);
  }
  if (est.energies.empty()) throw std::domain_error("prony: no roots near the unit circle");
  est.residual = detail::fit_amplitudes(rec, est.energies, est.amplitudes);
  return est;
}

/// NNLS fit of amplitudes for known eigenvalues. Repeated eigenvalues share
/// one column.
inline SpectralEstimate fit_known_phases(const PhaseFunctionRecord& rec, std::vector<double> eigenvalues,
                                         double merge_tol = 1e-9) {
  if (eigenvalues.empty()) throw std::invalid_argument("fit_known_phases: no eigenvalues supplied");
  std::sort(eigenvalues.begin(), eigenvalues.end());
  std::vector<double> distinct;
  for (double e : eigenvalues)
    if (distinct.empty() || e - distinct.back() > merge_tol) distinct.push_back(e);

  const auto m = static_cast<Eigen::Index>(rec.size());
  const auto k = static_cast<Eigen::Index>(distinct.size());
  RealMatrix a(2 * m, k);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      const cplx e = std::polar(1.0, distinct[static_cast<std::size_t>(j)] * rec.t_grid[static_cast<std::size_t>(i)]);
      a(i, j) = e.real();
      a(m + i, j) = e.imag();
    }
  Eigen::JacobiSVD<RealMatrix> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() < k || s(k - 1) < 1e-9 * s(0))
    throw std::domain_error("fit_known_phases: design matrix is degenerate; the time grid cannot separate " +
                            std::to_string(k) + " eigenvalues");

  SpectralEstimate est;
  est.method = SpectralMethod::KnownPhaseFit;
  est.energies = distinct;
  est.residual = detail::fit_amplitudes(rec, est.energies, est.amplitudes);
  est.order_used = distinct.size();
  return est;
}

/// sum A'_j E_j / sum A'_j.
inline double renormalized_expectation(const SpectralEstimate& est) {
  double num = 0, den = 0;
  for (std::size_t j = 0; j < est.energies.size(); ++j) {
    const double a = std::max(0.0, est.amplitudes[j]);
    num += a * est.energies[j];
    den += a;
  }
  if (den <= 1e-6) throw std::domain_error("signal lost: total amplitude " + std::to_string(den) + " is below 1e-6");
  return num / den;
}

/// Im g(t) / (t |g(0)|), biased at O(t^2).
inline double single_point_estimate(cplx g_t, cplx g_0, double t) {
  if (t == 0.0) throw std::invalid_argument("single_point_estimate: t must be nonzero");
  if (std::abs(g_0) <= 1e-6) throw std::domain_error("signal lost: |g(0)| is below 1e-6");
  return g_t.imag() / (t * std::abs(g_0));
}

/// Divides out the shot-noise bias factor 1 + sqrt(K-2)/sqrt(M).
inline double bias_compensate(double raw, int k_steps, long long shots) {
  if (k_steps < 2) throw std::invalid_argument("bias_compensate: K must be at least 2");
  if (shots <= 0) throw std::invalid_argument("bias_compensate: M must be positive");
  return raw / (1.0 + std::sqrt(static_cast<double>(k_steps - 2)) / std::sqrt(static_cast<double>(shots)));
}

}  // namespace vpe
