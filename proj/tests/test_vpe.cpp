#include "vpe/ansatz.hpp"
#include "vpe/noise.hpp"
#include "vpe/vpe.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace vpe;

namespace {

std::vector<double> random_angles(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> grid(int k, double dt = kPi / 4) {
  std::vector<double> t;
  for (int i = 0; i < k; ++i) t.push_back(i * dt);
  return t;
}

Summand hopping_summand() { return decompose_free_fermion(build_hopping_chain(4, 1.0)).summands.at(0); }

Circuit random_givens_state(std::mt19937_64& rng, int filled = 2) {
  Circuit c = fill_modes(filled, 4);
  c.append(givens_network(random_angles(6, rng), 4));
  return c;
}

// sum_j |<E_j|psi>|^2 e^{i E_j t} from a dense eigendecomposition.
cplx dense_phase_function(const Matrix& g, const Vector& psi, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  cplx acc = 0;
  for (Eigen::Index j = 0; j < g.rows(); ++j)
    acc += std::norm(es.eigenvectors().col(j).dot(psi)) * std::polar(1.0, es.eigenvalues()(j) * t);
  return acc;
}

Vector state_of(const Circuit& c) { return c.unitary().col(0); }

Summand pauli_summand(const std::string& s, int n) { return make_pauli_summand(s, to_sum(PauliString::parse(s, n))); }

}  // namespace

TEST(ExactPhaseFunction, Eigenstate) {
  auto z = pauli_summand("Z0", 2);
  auto rec = exact_phase_function(Circuit(2), controlled_evolution(z), grid(5), nullptr, {});
  for (std::size_t k = 0; k < rec.size(); ++k) EXPECT_LT(std::abs(rec.g[k] - std::polar(1.0, rec.t_grid[k])), 1e-12);
  EXPECT_LT(std::abs(rec.g[0] - 1.0), 1e-14);
}

TEST(ExactPhaseFunction, RandomGivensStateMatchesDenseOracle) {
  std::mt19937_64 rng(21);
  const auto s = hopping_summand();
  for (int trial = 0; trial < 5; ++trial) {
    const auto prep = random_givens_state(rng);
    auto rec = exact_phase_function(prep, controlled_evolution(s), grid(8, 0.7), nullptr, {});
    const Vector psi = state_of(prep);
    for (std::size_t k = 0; k < rec.size(); ++k)
      EXPECT_LT(std::abs(rec.g[k] - dense_phase_function(s.generator_matrix(), psi, rec.t_grid[k])), 1e-10);
  }
}

TEST(ExactPhaseFunction, ControlFreeEqualsSingleControl) {
  std::mt19937_64 rng(22);
  const auto s = hopping_summand();
  const auto theta = random_angles(6, rng);
  auto ansatz = givens_network(theta, 4);
  Circuit prep = fill_modes(2, 4);
  prep.append(ansatz);
  VerifiedEstimatorConfig free_cfg;
  free_cfg.protocol = Protocol::ControlFree;
  free_cfg.reference_energy = s.vacuum_eigenvalue().value();
  auto single = exact_phase_function(prep, controlled_evolution(s), grid(6), nullptr, {});
  auto free = exact_phase_function(compose_prep_for_control_free(ansatz, 2), free_evolution(s), grid(6), nullptr,
                                   free_cfg);
  for (std::size_t k = 0; k < single.size(); ++k) EXPECT_LT(std::abs(single.g[k] - free.g[k]), 1e-10);
}

TEST(ExactPhaseFunction, ControlFreeRequiresReference) {
  VerifiedEstimatorConfig cfg;
  cfg.protocol = Protocol::ControlFree;
  const auto s = hopping_summand();
  EXPECT_THROW(exact_phase_function(Circuit(4), free_evolution(s), {0.1}, nullptr, cfg), std::invalid_argument);
}

TEST(ExactPhaseFunction, ProtocolCircuitMismatch) {
  const auto s = hopping_summand();
  EXPECT_THROW(exact_phase_function(Circuit(4), free_evolution(s), {0.1}, nullptr, {}), std::invalid_argument);
}

TEST(SampledVpe, EigenstateConcentrates) {
  std::mt19937_64 rng(23);
  auto z = pauli_summand("Z0", 2);
  const long long m = 10000;
  for (double t : {0.0, 0.6, 2.0}) {
    const cplx g = sampled_vpe_single_control(Circuit(2), controlled_evolution(z), t, m, rng, nullptr);
    EXPECT_LT(std::abs(g - std::polar(1.0, t)), 3 / std::sqrt(double(m)));
  }
}

TEST(SampledVpe, ControlFreeEigenstateConcentrates) {
  std::mt19937_64 rng(24);
  const auto s = hopping_summand();
  // |1100> is not an eigenstate of the hopping chain, so rotate into its orbitals.
  Circuit ansatz = single_particle_circuit(s.quadratic.orbitals, 4);
  auto up = compose_prep_for_control_free(ansatz, 1);
  const double e = s.quadratic.energies(0) / s.scale;
  const long long m = 10000;
  for (double t : {0.0, 0.9}) {
    const cplx g = sampled_vpe_control_free(up, free_evolution(s), t, m, rng, nullptr, 0.0);
    EXPECT_LT(std::abs(g - std::polar(1.0, e * t)), 3 / std::sqrt(double(m)));
  }
  EXPECT_THROW(sampled_vpe_control_free(up, free_evolution(s), 0.1, m, rng, nullptr, std::nullopt),
               std::invalid_argument);
}

TEST(SampledVpe, DepolarizedMeanMatchesExactOracle) {
  std::mt19937_64 rng(25);
  const auto s = hopping_summand();
  const auto prep = random_givens_state(rng);
  const auto noise = NoiseModel::uniform(5, depolarizing(0.01));
  const double t = 0.8;
  const cplx exact = exact_phase_function(prep, controlled_evolution(s), {t}, &noise, {}).g[0];
  const long long m = 1000;
  const int reps = 200;
  cplx mean = 0;
  for (int r = 0; r < reps; ++r) mean += sampled_vpe_single_control(prep, controlled_evolution(s), t, m, rng, &noise);
  mean /= double(reps);
  const double sigma = 1 / std::sqrt(double(m) * reps);
  EXPECT_LT(std::abs(mean.real() - exact.real()), 3 * sigma);
  EXPECT_LT(std::abs(mean.imag() - exact.imag()), 3 * sigma);
  // The noiseless value is damped, not just perturbed.
  const cplx clean = exact_phase_function(prep, controlled_evolution(s), {t}, nullptr, {}).g[0];
  EXPECT_LT(std::abs(exact), std::abs(clean));
}

TEST(SampledVpe, CountersAndPreconditions) {
  std::mt19937_64 rng(26);
  auto z = pauli_summand("Z0", 1);
  ShotCounters c;
  VerifiedEstimatorConfig cfg;
  cfg.basis_flip = cfg.z_quarter = true;
  sampled_vpe_single_control(Circuit(1), controlled_evolution(z), 0.3, 103, rng, nullptr, cfg, &c);
  EXPECT_EQ(c.shots_x, 100);
  EXPECT_EQ(c.shots_y, 100);
  EXPECT_LE(std::abs(c.tally_x), c.verified_x);
  EXPECT_LE(c.verified_x, c.shots_x);
  EXPECT_THROW(sampled_vpe_single_control(Circuit(1), controlled_evolution(z), 0.3, 0, rng, nullptr), std::invalid_argument);
  EXPECT_THROW(sampled_vpe_single_control(Circuit(1), controlled_evolution(z), 0.3, 3, rng, nullptr, cfg), std::invalid_argument);
}

TEST(Compilation, Schedules) {
  EXPECT_EQ(control_noise_compilation({}).size(), 2u);
  VerifiedEstimatorConfig cfg;
  cfg.basis_flip = true;
  EXPECT_EQ(control_noise_compilation(cfg).size(), 4u);
  cfg.z_quarter = true;
  EXPECT_EQ(control_noise_compilation(cfg).size(), 8u);
}

TEST(Compilation, NoiselessEstimatesUnchanged) {
  std::mt19937_64 rng(27);
  const auto s = hopping_summand();
  const auto prep = random_givens_state(rng);
  const auto base = exact_phase_function(prep, controlled_evolution(s), grid(4), nullptr, {});
  for (int flags = 1; flags < 4; ++flags) {
    VerifiedEstimatorConfig cfg;
    cfg.basis_flip = flags & 1;
    cfg.z_quarter = flags & 2;
    auto rec = exact_phase_function(prep, controlled_evolution(s), grid(4), nullptr, cfg);
    for (std::size_t k = 0; k < rec.size(); ++k) EXPECT_LT(std::abs(rec.g[k] - base.g[k]), 1e-12);
  }
}

TEST(Compilation, ReadoutDampingAlgebra) {
  // Damping after the pre-rotation adds lambda * P_verified to each quadrature.
  auto z = pauli_summand("Z0", 1);
  NoiseModel noise;
  noise.readout.emplace(0, amplitude_phase_damping(0.2, 0.0));
  for (double t : {0.3, 1.1, 2.5}) {
    const cplx g = std::polar(1.0, t);
    const cplx plain = exact_phase_function(Circuit(1), controlled_evolution(z), {t}, &noise, {}).g[0];
    EXPECT_LT(std::abs(plain - (0.8 * g + cplx(0.2, 0.2))), 1e-10);
    VerifiedEstimatorConfig cfg;
    cfg.basis_flip = true;
    const cplx flipped = exact_phase_function(Circuit(1), controlled_evolution(z), {t}, &noise, cfg).g[0];
    EXPECT_LT(std::abs(flipped - 0.8 * g), 1e-10);
  }
}

TEST(Compilation, BitFlipAsymmetryRemovedByQuarterTurn) {
  auto z = pauli_summand("Z0", 1);
  NoiseModel noise;
  noise.per_qubit.emplace(0, bit_flip(0.05));
  const double t = 0.7;
  const cplx g = std::polar(1.0, t);
  VerifiedEstimatorConfig cfg;
  const cplx plain = exact_phase_function(Circuit(1), controlled_evolution(z), {t}, &noise, cfg).g[0];
  cfg.z_quarter = true;
  const cplx sym = exact_phase_function(Circuit(1), controlled_evolution(z), {t}, &noise, cfg).g[0];
  // Without the quarter turn the two quadratures decay at different rates;
  // with it the mismatch cancels at first order in p, leaving O(p^2).
  const double before = std::abs(plain.real() / g.real() - plain.imag() / g.imag());
  const double after = std::abs(sym.real() / g.real() - sym.imag() / g.imag());
  EXPECT_GT(before, 0.05);
  EXPECT_LT(after, 2 * 0.05 * 0.05);
  EXPECT_LT(after, 0.1 * before);
}

TEST(ParallelVpe, SingleSummandReducesToSingleControl) {
  std::mt19937_64 rng(28);
  const auto s = hopping_summand();
  const auto prep = random_givens_state(rng);
  auto par = parallel_vpe({s}, prep, grid(5));
  auto single = exact_phase_function(prep, controlled_evolution(s), grid(5), nullptr, {});
  for (std::size_t k = 0; k < single.size(); ++k) EXPECT_LT(std::abs(par[0].g[k] - single.g[k]), 1e-12);
}

TEST(ParallelVpe, RejectsNonCommuting) {
  EXPECT_THROW(parallel_vpe({pauli_summand("X0", 2), pauli_summand("Z0", 2)}, Circuit(2), {0.0}), std::invalid_argument);
}

TEST(ParallelVpe, GhostSpectrum) {
  std::mt19937_64 rng(29);
  const std::vector<std::string> words = {"Z0 Z1", "X0 X1", "Y0 Y1 Z2", "Z3"};
  for (int l : {2, 3}) {
    std::vector<Summand> ss;
    for (int s = 0; s < l; ++s) ss.push_back(pauli_summand(words[static_cast<std::size_t>(s)], 4));
    Circuit prep = givens_network(random_angles(6, rng), 4);
    Circuit front(4);
    front.add_moment({gates::Ry(0, 0.7), gates::Ry(1, -1.3), gates::Ry(2, 0.4), gates::Ry(3, 2.1)});
    front.append(prep);
    const Vector psi = state_of(front);
    const auto recs = parallel_vpe(ss, front, grid(12, 0.37));

    // Joint eigenbasis: the projectors onto sign patterns of the commuting strings.
    const auto d = static_cast<Eigen::Index>(psi.size());
    std::vector<std::vector<int>> patterns;
    std::vector<double> weights;
    for (int mask = 0; mask < (1 << l); ++mask) {
      Matrix proj = Matrix::Identity(d, d);
      std::vector<int> signs;
      for (int s = 0; s < l; ++s) {
        const int sign = (mask >> s) & 1 ? -1 : 1;
        signs.push_back(sign);
        proj = proj * (Matrix::Identity(d, d) + double(sign) * ss[static_cast<std::size_t>(s)].generator_matrix()) / 2.0;
      }
      patterns.push_back(signs);
      weights.push_back((proj * psi).squaredNorm());
    }
    for (int s = 0; s < l; ++s) {
      std::set<int> freqs;
      double weighted = 0;
      for (std::size_t t = 0; t < recs[static_cast<std::size_t>(s)].size(); ++t) {
        const double time = recs[static_cast<std::size_t>(s)].t_grid[t];
        cplx oracle = 0;
        for (std::size_t j = 0; j < patterns.size(); ++j)
          for (std::size_t jp = 0; jp < patterns.size(); ++jp)
            for (int v = 0; v < (1 << l); ++v) {
              int f = patterns[j][static_cast<std::size_t>(s)];
              for (int sp = 0; sp < l; ++sp)
                if (sp != s && ((v >> sp) & 1)) f += patterns[j][static_cast<std::size_t>(sp)] - patterns[jp][static_cast<std::size_t>(sp)];
              const double b = weights[j] * weights[jp] / double(1 << l);
              if (b < 1e-14) continue;
              oracle += b * std::polar(1.0, f * time);
              if (t == 0) {
                freqs.insert(f);
                weighted += b * f;
              }
            }
        EXPECT_LT(std::abs(recs[static_cast<std::size_t>(s)].g[t] - oracle), 1e-10);
      }
      std::set<int> odd;
      for (int f = -2 * l + 1; f <= 2 * l - 1; f += 2) odd.insert(f);
      EXPECT_TRUE(std::includes(odd.begin(), odd.end(), freqs.begin(), freqs.end()));
      const double direct = expectation(DensityMatrix::from_pure(PureState(4, psi)), ss[static_cast<std::size_t>(s)].op);
      EXPECT_NEAR(weighted, direct, 1e-10);
      std::vector<double> known(odd.begin(), odd.end());
      EXPECT_NEAR(renormalized_expectation(fit_known_phases(recs[static_cast<std::size_t>(s)], known)), direct, 1e-8);
    }
  }
}

TEST(VerifiedExpectation, SingleZ) {
  HamiltonianDecomposition h = decompose_pauli(to_sum(PauliString::parse("Z0", 1)));
  EXPECT_NEAR(verified_expectation(h, Circuit(1), {}).value, 1.0, 1e-12);
}

TEST(VerifiedExpectation, HoppingGroundState) {
  const auto h = decompose_free_fermion(build_hopping_chain(4, 1.0));
  const auto& s = h.summands.at(0);
  Circuit prep = fill_modes(2, 4);
  prep.append(single_particle_circuit(s.quadratic.orbitals, 4));
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.total().to_matrix());
  VerifiedExpectationOptions opt;
  opt.particle_number = 2;
  EXPECT_NEAR(verified_expectation(h, prep, opt).value, es.eigenvalues()(0), 1e-6);
}

TEST(VerifiedExpectation, NoiselessRandomStatesAllPostProcessors) {
  std::mt19937_64 rng(30);
  const auto fermion = build_hopping_chain(4, 1.0);
  const auto h = decompose_number_conserving(fermion);
  const PauliSum hq = jordan_wigner(fermion);
  for (int trial = 0; trial < 4; ++trial) {
    const auto prep = random_givens_state(rng);
    const double truth = tomography_expectation(hq, prep);
    VerifiedExpectationOptions opt;
    opt.particle_number = 2;
    EXPECT_NEAR(verified_expectation(h, prep, opt).value, truth, 1e-8);
    opt.post = PostProcessor::Prony;
    EXPECT_NEAR(verified_expectation(h, prep, opt).value, truth, 1e-6);
  }
}

TEST(VerifiedExpectation, ErrorsCarryTheSummandLabel) {
  HamiltonianDecomposition h = decompose_pauli(to_sum(PauliString::parse("X0", 1)));
  VerifiedExpectationOptions opt;
  opt.t_grid = {0.0};
  try {
    verified_expectation(h, Circuit(1), opt);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("X0"), std::string::npos);
  }
}

TEST(VerifiedExpectation, SinglePoint) {
  HamiltonianDecomposition h = decompose_pauli(to_sum(PauliString::parse("Z0", 1)));
  VerifiedExpectationOptions opt;
  opt.post = PostProcessor::SinglePoint;
  opt.t_grid = {0.0, 0.01};
  Circuit prep(1);
  prep.add_moment({gates::Ry(0, 1.0)});
  EXPECT_NEAR(verified_expectation(h, prep, opt).value, std::cos(1.0), 1e-4);
}

// Invariants

TEST(VpeProperties, VerificationIdentity) {
  std::mt19937_64 rng(31);
  const auto s = hopping_summand();
  for (int trial = 0; trial < 5; ++trial) {
    const auto prep = random_givens_state(rng, 1 + trial % 3);
    const double t = std::uniform_real_distribution<double>(0, 3)(rng);
    const auto v = detail::single_control_circuit(prep, {controlled_evolution(s)(t)}, 1);
    auto rho = apply_circuit(DensityMatrix::zero_state(5), v.body(0.0));
    const cplx verified = verified_offdiagonal(rho.matrix(), 5, 0, v.verify);
    const cplx unverified = 2.0 * partial_trace(rho, {0}).matrix()(1, 0);
    EXPECT_LT(std::abs(verified - unverified), 1e-10);
  }
}

TEST(VpeProperties, FailingEnsembleProjectsControlToOne) {
  std::mt19937_64 rng(32);
  const auto s = hopping_summand();
  const auto prep = random_givens_state(rng);
  const auto v = detail::single_control_circuit(prep, {controlled_evolution(s)(1.3)}, 1);
  auto rho = apply_circuit(DensityMatrix::zero_state(5), v.body(0.0));
  Matrix fail = rho.matrix();
  for (Eigen::Index i = 0; i < fail.rows(); ++i)
    for (Eigen::Index j = 0; j < fail.cols(); ++j)
      if ((i & 0xF) == 0 || (j & 0xF) == 0) fail(i, j) = 0;
  DensityMatrix failed(5, fail, false);
  ASSERT_GT(failed.trace(), 1e-3);
  Matrix control = partial_trace(failed, {0}).matrix() / failed.trace();
  EXPECT_LT(std::abs(control(1, 1) - 1.0), 1e-10);
  EXPECT_LT(std::abs(control(0, 1)), 1e-10);
}

TEST(VpeProperties, ConstantDampingOfFastForwardedCircuits) {
  std::mt19937_64 rng(33);
  const auto s = hopping_summand();
  const auto prep = random_givens_state(rng);
  const auto noise = NoiseModel::uniform(5, depolarizing(1e-3));
  const auto t = grid(8);
  const auto clean = exact_phase_function(prep, controlled_evolution(s), t, nullptr, {});
  const auto noisy = exact_phase_function(prep, controlled_evolution(s), t, &noise, {});
  const cplx ref = noisy.g[0] / clean.g[0];
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (std::abs(clean.g[k]) < 0.1) continue;
    EXPECT_LT(std::abs(noisy.g[k] / clean.g[k] - ref) / std::abs(ref), 0.02) << "t=" << t[k];
  }
}

TEST(VpeProperties, PaddedDepthDecaysExponentially) {
  auto z = pauli_summand("Z0", 1);
  const auto noise = NoiseModel::uniform(2, depolarizing(0.01));
  // Idle moments proportional to t.
  EvolutionMaker padded = [&](double t) {
    Circuit c = controlled_evolution(z)(t);
    for (int k = 0; k < static_cast<int>(std::lround(10 * t)); ++k) c.add_moment(Moment{});
    return c;
  };
  std::vector<double> ts, logs;
  for (double t = 0.5; t <= 5.0; t += 0.5) {
    ts.push_back(t);
    logs.push_back(std::log(std::abs(exact_phase_function(Circuit(1), padded, {t}, &noise, {}).g[0])));
  }
  const double n = double(ts.size());
  double mt = 0, ml = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i] / n;
    ml += logs[i] / n;
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    num += (ts[i] - mt) * (logs[i] - ml);
    den += (ts[i] - mt) * (ts[i] - mt);
  }
  const double slope = num / den;
  EXPECT_LT(slope, 0);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double fit = std::exp(ml + slope * (ts[i] - mt));
    EXPECT_LT(std::abs(std::exp(logs[i]) - fit) / fit, 0.02);
  }
}

namespace {

// Re g estimates for an eigenstate with verification succeeding with
// probability p_ne (a readout flip on the system qubit rejects the rest).
std::vector<double> sampled_real_parts(double p_ne, long long m, int trials, double t, std::mt19937_64& rng) {
  auto z = pauli_summand("Z0", 1);
  NoiseModel noise;
  if (p_ne < 1) noise.readout.emplace(1, bit_flip(1 - p_ne));
  std::vector<double> out;
  for (int i = 0; i < trials; ++i)
    out.push_back(sampled_vpe_single_control(Circuit(1), controlled_evolution(z), t, m, rng, &noise).real());
  return out;
}

double variance(const std::vector<double>& x) {
  double mean = 0, var = 0;
  for (double v : x) mean += v / double(x.size());
  for (double v : x) var += (v - mean) * (v - mean) / double(x.size() - 1);
  return var;
}

}  // namespace

TEST(VpeProperties, SamplingVariance) {
  std::mt19937_64 rng(34);
  const double t = 0.9, gx = std::cos(t);
  for (auto [p, m] : std::vector<std::pair<double, long long>>{{1.0, 100}, {0.5, 100}}) {
    const double predicted = p / double(m) - p * p * gx * gx / double(m);
    EXPECT_NEAR(variance(sampled_real_parts(p, m, 10000, t, rng)) / predicted, 1.0, 0.05);
  }
}

TEST(VpeProperties, ShotCountScalesInversely) {
  std::mt19937_64 rng(35);
  const double t = kPi / 2;  // Re g = 0, so the spread of Re g/p_ne is 1/sqrt(p_ne M)
  const long long m = 200;
  const double base = std::sqrt(variance(sampled_real_parts(1.0, m, 4000, t, rng)));
  for (double p : {0.5, 0.25}) {
    auto x = sampled_real_parts(p, m, 4000, t, rng);
    for (auto& v : x) v /= p;
    const double spread = std::sqrt(variance(x));
    const double shots_needed = double(m) * (spread / base) * (spread / base);
    const double ratio = shots_needed / double(m) * p;  // 1 when M scales exactly as 1/p_ne
    EXPECT_GT(ratio, 1 / 1.5);
    EXPECT_LT(ratio, 1.5);
  }
}

TEST(VpeProperties, RenormalizationIsDampingIndependent) {
  std::mt19937_64 rng(36);
  const auto s = hopping_summand();
  const auto prep = random_givens_state(rng);
  auto rec = exact_phase_function(prep, controlled_evolution(s), grid(10), nullptr, {});
  const auto est = fit_known_phases(rec, s.eigenvalues(2));
  for (double c : {0.9, 0.37, 0.01}) {
    auto damped = est;
    for (auto& a : damped.amplitudes) a *= c;
    EXPECT_NEAR(renormalized_expectation(damped), renormalized_expectation(est), 1e-12);
  }
}
