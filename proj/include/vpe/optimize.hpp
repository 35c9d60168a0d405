#pragma once

// Derivative-free local minimizers for black-box objectives.

#include "vpe/linalg.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpe {

enum class OptimizerKind { NelderMead, LinearTrustRegion };

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::NelderMead ? "nelder-mead" : "linear-trust-region";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::NelderMead;
  int max_evaluations = 500;
  double initial_step = 0.5;
  double x_tolerance = 1e-7;
  double f_tolerance = 1e-10;
};

struct OptimizationTrace {
  std::vector<std::vector<double>> points;  // every evaluation, in order
  std::vector<double> values;
  std::vector<double> best_point;
  double best_value = std::numeric_limits<double>::infinity();
  bool converged = false;

  int evaluations() const { return static_cast<int>(values.size()); }
};

using Objective = std::function<double(const std::vector<double>&)>;

namespace detail {

class Evaluator {
 public:
  Evaluator(const Objective& f, OptimizationTrace& trace) : f_(f), trace_(trace) {}

  double operator()(const std::vector<double>& x) {
    const double v = f_(x);
    trace_.points.push_back(x);
    trace_.values.push_back(v);
    if (v < trace_.best_value || trace_.best_point.empty()) {
      trace_.best_value = v;
      trace_.best_point = x;
    }
    return v;
  }

 private:
  const Objective& f_;
  OptimizationTrace& trace_;
};

inline std::vector<double> axpy(const std::vector<double>& a, double s, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
  return out;
}

inline std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  return axpy(a, -1.0, b);
}

inline double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

inline OptimizationTrace nelder_mead(const Objective& f, const std::vector<double>& x0, const OptimizerConfig& cfg) {
  OptimizationTrace trace;
  Evaluator eval(f, trace);
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> simplex{x0};
  std::vector<double> fv{eval(x0)};
  auto budget_left = [&] { return trace.evaluations() < cfg.max_evaluations; };
  for (std::size_t i = 0; i < n && budget_left(); ++i) {
    auto x = x0;
    x[i] += cfg.initial_step;
    simplex.push_back(x);
    fv.push_back(eval(x));
  }
  if (simplex.size() < n + 1) return trace;

  std::vector<std::size_t> order(n + 1);
  while (budget_left()) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    double size = 0;
    for (std::size_t i = 0; i <= n; ++i) size = std::max(size, norm(minus(simplex[i], simplex[best])));
    if (size < cfg.x_tolerance && fv[worst] - fv[best] < cfg.f_tolerance) {
      trace.converged = true;
      break;
    }
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);
    const auto dir = minus(centroid, simplex[worst]);
    const auto xr = axpy(centroid, 1.0, dir);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      if (!budget_left()) {
        simplex[worst] = xr, fv[worst] = fr;
        break;
      }
      const auto xe = axpy(centroid, 2.0, dir);
      const double fe = eval(xe);
      if (fe < fr) simplex[worst] = xe, fv[worst] = fe;
      else simplex[worst] = xr, fv[worst] = fr;
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr, fv[worst] = fr;
      continue;
    }
    if (!budget_left()) break;
    const bool outside = fr < fv[worst];
    const auto xc = axpy(centroid, outside ? 0.5 : -0.5, dir);
    const double fc = eval(xc);
    if (fc < std::min(fr, fv[worst])) {
      simplex[worst] = xc, fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n && budget_left(); ++i) {
      if (i == best) continue;
      simplex[i] = axpy(simplex[best], 0.5, minus(simplex[i], simplex[best]));
      fv[i] = eval(simplex[i]);
    }
  }
  return trace;
}

/// Unconstrained linear-model trust region: a linear interpolant over n+1
/// points proposes a step of length rho down its gradient; rho halves when a
/// step fails to improve.
inline OptimizationTrace linear_trust_region(const Objective& f, const std::vector<double>& x0,
                                             const OptimizerConfig& cfg) {
  OptimizationTrace trace;
  Evaluator eval(f, trace);
  const std::size_t n = x0.size();
  auto budget_left = [&] { return trace.evaluations() < cfg.max_evaluations; };
  double rho = cfg.initial_step;
  std::vector<double> xb = x0;
  double fb = eval(x0);
  while (budget_left()) {
    if (rho < cfg.x_tolerance) {
      trace.converged = true;
      break;
    }
    RealVector grad(static_cast<Eigen::Index>(n));
    bool complete = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!budget_left()) {
        complete = false;
        break;
      }
      auto x = xb;
      x[i] += rho;
      grad(static_cast<Eigen::Index>(i)) = (eval(x) - fb) / rho;
    }
    if (!complete || !budget_left()) break;
    const double gn = grad.norm();
    if (gn == 0.0) {
      rho /= 2;
      continue;
    }
    std::vector<double> step(n);
    for (std::size_t i = 0; i < n; ++i) step[i] = -rho * grad(static_cast<Eigen::Index>(i)) / gn;
    const auto xt = axpy(xb, 1.0, step);
    const double ft = eval(xt);
    if (ft < fb - 1e-4 * rho * gn) {
      xb = xt;
      fb = ft;
    } else {
      rho /= 2;
    }
  }
  return trace;
}

}  // namespace detail

/// Minimizes `f` from `x0`. The starting point is always evaluated, so a zero
/// budget returns it unchanged with converged = false.
inline OptimizationTrace minimize(const Objective& f, const std::vector<double>& x0, const OptimizerConfig& cfg = {}) {
  if (cfg.max_evaluations < 0) throw std::invalid_argument("evaluation budget must be non-negative");
  if (cfg.max_evaluations == 0 || x0.empty()) {
    OptimizationTrace trace;
    detail::Evaluator eval(f, trace);
    eval(x0);
    trace.converged = x0.empty();
    return trace;
  }
  return cfg.kind == OptimizerKind::NelderMead ? detail::nelder_mead(f, x0, cfg)
                                               : detail::linear_trust_region(f, x0, cfg);
}

}  // namespace vpe
