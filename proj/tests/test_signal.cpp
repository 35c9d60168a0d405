#include "vpe/signal.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vpe;

namespace {

std::vector<double> grid(int k, double dt, double t0 = 0) {
  std::vector<double> t;
  for (int i = 0; i < k; ++i) t.push_back(t0 + i * dt);
  return t;
}

// Binomial readout of both quadratures, M shots each.
PhaseFunctionRecord sample(const PhaseFunctionRecord& exact, long long shots, std::mt19937_64& rng) {
  PhaseFunctionRecord r = exact;
  r.mode = RecordMode::Sampled;
  r.shots_per_point = shots;
  for (auto& g : r.g) {
    std::binomial_distribution<long long> bx(shots, (1 + g.real()) / 2), by(shots, (1 + g.imag()) / 2);
    g = cplx(2.0 * static_cast<double>(bx(rng)) / static_cast<double>(shots) - 1,
             2.0 * static_cast<double>(by(rng)) / static_cast<double>(shots) - 1);
  }
  return r;
}

double amplitude_at(const SpectralEstimate& est, double e, double tol = 1e-6) {
  double a = 0;
  for (std::size_t j = 0; j < est.energies.size(); ++j)
    if (std::abs(est.energies[j] - e) < tol) a += est.amplitudes[j];
  return a;
}

}  // namespace

TEST(Nnls, MatchesUnconstrainedWhenInterior) {
  RealMatrix a(4, 2);
  a << 1, 0, 0, 1, 1, 1, 2, -1;
  RealVector x_true(2);
  x_true << 0.3, 0.7;
  RealVector x = nnls(a, a * x_true);
  EXPECT_LT((x - x_true).norm(), 1e-12);
}

TEST(Nnls, ClipsNegativeDirection) {
  RealMatrix a = RealMatrix::Identity(2, 2);
  RealVector b(2);
  b << 0.5, -0.3;
  RealVector x = nnls(a, b);
  EXPECT_NEAR(x(0), 0.5, 1e-14);
  EXPECT_EQ(x(1), 0.0);
}

TEST(Prony, SingleExponential) {
  auto rec = synthesize_record(grid(8, 0.5), {0.7}, {1.0});
  auto est = prony(rec, 1);
  ASSERT_EQ(est.energies.size(), 1u);
  EXPECT_NEAR(est.energies[0], 0.7, 1e-8);
  EXPECT_NEAR(est.amplitudes[0], 1.0, 1e-8);
}

TEST(Prony, TwoExponentials) {
  auto rec = synthesize_record(grid(8, kPi / 4), {1.0, -1.0}, {0.6, 0.4});
  auto est = prony(rec, 2);
  EXPECT_NEAR(amplitude_at(est, 1.0, 1e-8), 0.6, 1e-8);
  EXPECT_NEAR(amplitude_at(est, -1.0, 1e-8), 0.4, 1e-8);
}

TEST(Prony, ConstantSignal) {
  auto rec = synthesize_record(grid(6, 0.5), {0.0}, {1.0});
  auto est = prony(rec, 1);
  ASSERT_EQ(est.energies.size(), 1u);
  EXPECT_NEAR(est.energies[0], 0.0, 1e-12);
  EXPECT_NEAR(est.amplitudes[0], 1.0, 1e-12);
}

TEST(Prony, ReducesOrderOnRankDeficiency) {
  auto rec = synthesize_record(grid(8, 0.5), {0.7}, {1.0});
  auto est = prony(rec, 3);
  EXPECT_TRUE(est.order_reduced);
  EXPECT_EQ(est.order_used, 1u);
  EXPECT_NEAR(renormalized_expectation(est), 0.7, 1e-8);
}

TEST(Prony, Preconditions) {
  auto rec = synthesize_record(grid(3, 0.5), {0.7}, {1.0});
  EXPECT_THROW(prony(rec, 2), std::invalid_argument);
  auto bad = synthesize_record({0.0, 0.5, 0.7, 1.5}, {0.7}, {1.0});
  EXPECT_THROW(prony(bad, 1), std::invalid_argument);
}

TEST(Prony, RoundTripUpToFourModes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int modes = 1 + trial % 4;
    std::vector<double> e, a;
    double total = 0;
    for (int j = 0; j < modes; ++j) {
      e.push_back(-2.4 + 1.5 * j + 0.2 * u(rng));
      a.push_back(u(rng));
      total += a.back();
    }
    for (auto& x : a) x /= total;
    auto est = prony(synthesize_record(grid(2 * modes + 4, 0.5), e, a), static_cast<std::size_t>(modes));
    for (int j = 0; j < modes; ++j) EXPECT_NEAR(amplitude_at(est, e[static_cast<std::size_t>(j)]), a[static_cast<std::size_t>(j)], 1e-6);
  }
}

TEST(KnownPhases, Examples) {
  const auto t = grid(4, kPi / 4);
  auto cos_rec = synthesize_record(t, {1.0, -1.0}, {0.5, 0.5});
  auto est = fit_known_phases(cos_rec, {1.0, -1.0});
  EXPECT_NEAR(amplitude_at(est, 1.0), 0.5, 1e-12);
  EXPECT_NEAR(amplitude_at(est, -1.0), 0.5, 1e-12);

  est = fit_known_phases(synthesize_record(t, {1.0}, {1.0}), {1.0, -1.0});
  EXPECT_NEAR(amplitude_at(est, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(amplitude_at(est, -1.0), 0.0, 1e-12);

  est = fit_known_phases(synthesize_record(t, {1.0, -1.0}, {0.45, 0.45}), {1.0, -1.0});
  EXPECT_NEAR(amplitude_at(est, 1.0), 0.45, 1e-12);
  EXPECT_NEAR(amplitude_at(est, -1.0), 0.45, 1e-12);
  EXPECT_NEAR(renormalized_expectation(est), 0.0, 1e-12);
}

TEST(KnownPhases, DegenerateEigenvaluesShareAColumn) {
  auto rec = synthesize_record(grid(4, kPi / 4), {1.0, -1.0}, {0.8, 0.2});
  auto est = fit_known_phases(rec, {1.0, 1.0, 1.0, -1.0});
  EXPECT_EQ(est.energies.size(), 2u);
  EXPECT_NEAR(renormalized_expectation(est), 0.6, 1e-12);
}

TEST(KnownPhases, DegenerateDesignThrows) {
  // A single point at t=0 cannot separate two eigenvalues.
  auto rec = synthesize_record({0.0}, {1.0}, {1.0});
  EXPECT_THROW(fit_known_phases(rec, {1.0, -1.0}), std::domain_error);
}

TEST(KnownPhases, AgreesWithPronyOnExactRecords) {
  auto rec = synthesize_record(grid(6, kPi / 4), {1.0, -1.0}, {0.3, 0.55});
  EXPECT_NEAR(renormalized_expectation(prony(rec, 2)), renormalized_expectation(fit_known_phases(rec, {1, -1})), 1e-6);
}

TEST(Renormalized, Examples) {
  SpectralEstimate est;
  est.energies = {1.0, -1.0};
  est.amplitudes = {0.45, 0.45};
  EXPECT_NEAR(renormalized_expectation(est), 0.0, 1e-15);
  est.amplitudes = {0.6, 0.2};
  EXPECT_NEAR(renormalized_expectation(est), 0.5, 1e-15);
  const double before = renormalized_expectation(est);
  for (auto& a : est.amplitudes) a *= 0.37;
  EXPECT_NEAR(renormalized_expectation(est), before, 1e-12);
}

TEST(Renormalized, ScaleInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    SpectralEstimate est;
    for (int j = 0; j < 4; ++j) {
      est.energies.push_back(4 * u(rng) - 2);
      est.amplitudes.push_back(u(rng));
    }
    const double ref = renormalized_expectation(est);
    const double c = 1e-3 + 10 * u(rng);
    for (auto& a : est.amplitudes) a *= c;
    EXPECT_NEAR(renormalized_expectation(est), ref, 1e-12);
  }
}

TEST(Renormalized, SignalLost) {
  SpectralEstimate est;
  est.energies = {1.0};
  est.amplitudes = {1e-8};
  try {
    renormalized_expectation(est);
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("signal lost"), std::string::npos);
  }
}

TEST(SinglePoint, Examples) {
  const double e = 0.3, t = 0.01;
  const cplx gt = std::polar(1.0, e * t);
  const double est = single_point_estimate(gt, 1.0, t);
  EXPECT_LT(std::abs(est - e), std::pow(std::abs(e), 3) * t * t / 6 * (1 + 1e-6));
  EXPECT_LT(std::abs(est - e), 3e-6);
  EXPECT_LT(est, e);
  EXPECT_EQ(single_point_estimate(1.0, 1.0, t), 0.0);
  EXPECT_NEAR(single_point_estimate(0.9 * gt, 0.9, t), est, 1e-15);
  EXPECT_THROW(single_point_estimate(gt, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(single_point_estimate(gt, 0.0, t), std::domain_error);
}

TEST(BiasCompensate, Limits) {
  EXPECT_NEAR(bias_compensate(0.7, 10, 1LL << 60), 0.7, 1e-8);
  EXPECT_EQ(bias_compensate(0.7, 2, 100), 0.7);
  EXPECT_NEAR(bias_compensate(1.0, 6, 100), 1.0 / 1.2, 1e-15);
  EXPECT_THROW(bias_compensate(1.0, 1, 100), std::invalid_argument);
  EXPECT_THROW(bias_compensate(1.0, 10, 0), std::invalid_argument);
}

TEST(SampledRecords, ErrorScalesAsInverseSqrtShots) {
  std::mt19937_64 rng(5);
  const auto exact = synthesize_record(grid(4, kPi / 4), {1.0, -1.0}, {0.7, 0.3});
  std::vector<double> log_m, log_err;
  for (long long m : {100LL, 1000LL, 10000LL, 100000LL}) {
    std::vector<double> errs;
    for (int trial = 0; trial < 200; ++trial)
      errs.push_back(std::abs(renormalized_expectation(fit_known_phases(sample(exact, m, rng), {1, -1})) - 0.4));
    std::nth_element(errs.begin(), errs.begin() + 100, errs.end());
    log_m.push_back(std::log10(static_cast<double>(m)));
    log_err.push_back(std::log10(errs[100]));
  }
  const double mx = (log_m[0] + log_m[3]) / 2;
  double num = 0, den = 0, my = 0;
  for (double y : log_err) my += y / 4;
  for (int i = 0; i < 4; ++i) {
    num += (log_m[static_cast<std::size_t>(i)] - mx) * (log_err[static_cast<std::size_t>(i)] - my);
    den += (log_m[static_cast<std::size_t>(i)] - mx) * (log_m[static_cast<std::size_t>(i)] - mx);
  }
  EXPECT_NEAR(num / den, -0.5, 0.1);
}
