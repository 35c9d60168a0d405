#pragma once

#include "vpe/gates.hpp"
#include "vpe/hamiltonian.hpp"
#include "vpe/qsim.hpp"
#include "vpe/signal.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace vpe {

enum class Protocol { SingleControl, ControlFree };

struct VerifiedEstimatorConfig {
  Protocol protocol = Protocol::SingleControl;
  bool basis_flip = false;  // flip the readout frame for half the shots
  bool z_quarter = false;   // +-pi/4 Z rotation after the initial Hadamard
  std::optional<double> reference_energy;  // E_r, control-free only
  int parallel_controls = 1;

  void validate() const {
    if (parallel_controls < 1) throw std::invalid_argument("parallel control count must be at least 1");
    if (protocol == Protocol::ControlFree && !reference_energy)
      throw std::invalid_argument("control-free VPE needs a reference eigenvalue E_r");
    if (protocol == Protocol::ControlFree && parallel_controls != 1)
      throw std::invalid_argument("parallel controls require the single-control protocol");
  }
};

/// Maps t to the evolution circuit. Single-control makers emit the controlled
/// evolution on N+1 qubits with the control on qubit 0; control-free makers
/// emit the plain evolution on the N system qubits.
using EvolutionMaker = std::function<Circuit(double)>;

inline EvolutionMaker controlled_evolution(const Summand& s) {
  const int n = s.num_qubits();
  return [s, n](double t) { return s.evolution(t, n + 1, 1, 0); };
}

inline EvolutionMaker free_evolution(const Summand& s) {
  const int n = s.num_qubits();
  return [s, n](double t) { return s.evolution(t, n, 0, std::nullopt); };
}

/// One pre-rotation setting of the shot schedule.
struct ShotBranch {
  bool y_basis = false;
  bool flipped = false;
  double z_angle = 0.0;
};

/// Expands the X and Y settings into the symmetrized set selected by the
/// compilation flags. Shots are split evenly per basis, rounding down.
inline std::vector<ShotBranch> control_noise_compilation(const VerifiedEstimatorConfig& cfg) {
  std::vector<ShotBranch> out;
  std::vector<bool> flips = cfg.basis_flip ? std::vector<bool>{false, true} : std::vector<bool>{false};
  std::vector<double> zs = cfg.z_quarter ? std::vector<double>{kPi / 4, -kPi / 4} : std::vector<double>{0.0};
  for (bool y : {false, true})
    for (double z : zs)
      for (bool f : flips) out.push_back({y, f, z});
  return out;
}

inline Matrix prerotation_matrix(const ShotBranch& b) {
  Matrix rot = b.y_basis ? gates::rx_matrix(b.flipped ? -kPi / 2 : kPi / 2)
                         : gates::ry_matrix(b.flipped ? kPi / 2 : -kPi / 2);
  return rot * gates::rz_matrix(-b.z_angle);
}

namespace detail {

/// A VPE circuit family at fixed t: `body(z)` is everything before the final
/// pre-rotation, with the initial z rotation compiled into the readout Hadamards.
struct VpeCircuit {
  int num_qubits = 0;
  std::vector<int> readouts;
  std::vector<int> verify;
  std::function<Circuit(double)> body;
};

inline Gate initial_gate(int q, double z) {
  Matrix u = gates::rz_matrix(z) * gates::h_matrix();
  return Gate({q}, u, "h");
}

inline VpeCircuit single_control_circuit(const Circuit& prep, const std::vector<Circuit>& evolutions, int controls) {
  const int n = prep.num_qubits() + controls;
  for (const auto& e : evolutions)
    if (e.num_qubits() != n)
      throw std::invalid_argument("single-control evolution acts on " + std::to_string(e.num_qubits()) +
                                  " qubits; expected " + std::to_string(n));
  VpeCircuit v;
  v.num_qubits = n;
  for (int c = 0; c < controls; ++c) v.readouts.push_back(c);
  for (int q = controls; q < n; ++q) v.verify.push_back(q);
  const Circuit up = prep.shifted(n, controls), down = prep.inverse().shifted(n, controls);
  v.body = [=](double z) {
    Circuit c(n);
    std::vector<Gate> hs;
    for (int q = 0; q < controls; ++q) hs.push_back(initial_gate(q, z));
    c.add_moment(Moment(std::move(hs)));
    c.append(up);
    for (const auto& e : evolutions) c.append(e);
    c.append(down);
    return c;
  };
  return v;
}

inline VpeCircuit control_free_circuit(const Circuit& prep, const Circuit& evolution) {
  const int n = prep.num_qubits();
  if (evolution.num_qubits() != n)
    throw std::invalid_argument("control-free evolution acts on " + std::to_string(evolution.num_qubits()) +
                                " qubits; expected " + std::to_string(n));
  VpeCircuit v;
  v.num_qubits = n;
  v.readouts = {0};
  for (int q = 1; q < n; ++q) v.verify.push_back(q);
  const Circuit down = prep.inverse();
  v.body = [=](double z) {
    Circuit c(n);
    c.add_moment({initial_gate(0, z)});
    c.append(prep);
    c.append(evolution);
    c.append(down);
    return c;
  };
  return v;
}

/// Probabilities of (readout 0, readout 1) with every verify qubit at 0.
inline std::pair<double, double> verified_probabilities(const Matrix& rho, int n, int readout,
                                                        const std::vector<int>& verify) {
  std::size_t vmask = 0;
  for (int q : verify) vmask |= std::size_t{1} << bit_of(n, q);
  const std::size_t rbit = std::size_t{1} << bit_of(n, readout);
  double p0 = 0, p1 = 0;
  for (std::size_t i = 0; i < dim_of(n); ++i) {
    if (i & vmask) continue;
    const double p = std::max(0.0, rho(i, i).real());
    (i & rbit ? p1 : p0) += p;
  }
  return {p0, p1};
}

struct BranchOutcome {
  ShotBranch branch;
  int readout = 0;
  double p0 = 0, p1 = 0;
};

inline std::vector<BranchOutcome> branch_outcomes(const VpeCircuit& v, const NoiseModel* noise,
                                                  const VerifiedEstimatorConfig& cfg) {
  const auto branches = control_noise_compilation(cfg);
  std::vector<BranchOutcome> out;
  std::vector<double> zs;
  for (const auto& b : branches)
    if (std::find(zs.begin(), zs.end(), b.z_angle) == zs.end()) zs.push_back(b.z_angle);
  for (double z : zs) {
    DensityMatrix base = DensityMatrix::zero_state(v.num_qubits);
    base = apply_circuit(std::move(base), v.body(z), noise);
    for (int r : v.readouts)
      for (const auto& b : branches) {
        if (b.z_angle != z) continue;
        Circuit last(v.num_qubits);
        last.add_moment({Gate({r}, prerotation_matrix(b), "prerotation")});
        DensityMatrix rho = apply_circuit(base, last, noise);
        if (noise != nullptr) rho = apply_readout(std::move(rho), *noise);
        auto [p0, p1] = verified_probabilities(rho.matrix(), v.num_qubits, r, v.verify);
        out.push_back({b, r, p0, p1});
      }
  }
  return out;
}

struct PointEstimate {
  cplx g;
  ShotCounters counters;
};

inline cplx exact_point(const std::vector<BranchOutcome>& outcomes, int readout) {
  double sx = 0, sy = 0;
  int nx = 0, ny = 0;
  for (const auto& o : outcomes) {
    if (o.readout != readout) continue;
    const double tally = (o.branch.flipped ? -1.0 : 1.0) * (o.p0 - o.p1);
    if (o.branch.y_basis) {
      sy += tally;
      ++ny;
    } else {
      sx += tally;
      ++nx;
    }
  }
  return {sx / nx, sy / ny};
}

template <class Rng>
PointEstimate sampled_point(const std::vector<BranchOutcome>& outcomes, int readout, long long shots, Rng& rng) {
  if (shots < 1) throw std::invalid_argument("VPE needs at least one shot per basis");
  std::size_t per_basis = 0;
  for (const auto& o : outcomes)
    if (o.readout == readout && !o.branch.y_basis) ++per_basis;
  const long long per_branch = shots / static_cast<long long>(per_basis);
  if (per_branch < 1)
    throw std::invalid_argument("M=" + std::to_string(shots) + " is smaller than the " + std::to_string(per_basis) +
                                " compiled branches per basis");
  PointEstimate est;
  auto& c = est.counters;
  for (const auto& o : outcomes) {
    if (o.readout != readout) continue;
    const double p0 = std::clamp(o.p0, 0.0, 1.0);
    const double p1 = std::clamp(o.p1, 0.0, 1.0 - p0);
    std::binomial_distribution<long long> first(per_branch, p0);
    const long long n0 = first(rng);
    long long n1 = 0;
    if (p0 < 1.0) {
      std::binomial_distribution<long long> second(per_branch - n0, std::clamp(p1 / (1.0 - p0), 0.0, 1.0));
      n1 = second(rng);
    }
    const long long tally = (o.branch.flipped ? -1 : 1) * (n0 - n1);
    if (o.branch.y_basis) {
      c.tally_y += tally;
      c.shots_y += per_branch;
      c.verified_y += n0 + n1;
    } else {
      c.tally_x += tally;
      c.shots_x += per_branch;
      c.verified_x += n0 + n1;
    }
  }
  est.g = {static_cast<double>(c.tally_x) / static_cast<double>(c.shots_x),
           static_cast<double>(c.tally_y) / static_cast<double>(c.shots_y)};
  return est;
}

inline VpeCircuit circuit_for(const Circuit& prep, const EvolutionMaker& evolution, double t,
                              const VerifiedEstimatorConfig& cfg) {
  cfg.validate();
  if (cfg.protocol == Protocol::SingleControl) return single_control_circuit(prep, {evolution(t)}, 1);
  return control_free_circuit(prep, evolution(t));
}

inline cplx reference_correction(const VerifiedEstimatorConfig& cfg, double t) {
  return cfg.protocol == Protocol::ControlFree ? std::polar(1.0, *cfg.reference_energy * t) : cplx{1.0};
}

}  // namespace detail

/// Simulates the compiled branches once per grid point; records can then be
/// read off exactly or resampled cheaply.
class PhaseFunctionSampler {
 public:
  PhaseFunctionSampler(const Circuit& prep, const EvolutionMaker& evolution, std::vector<double> t_grid,
                       const NoiseModel* noise, const VerifiedEstimatorConfig& cfg)
      : t_grid_(std::move(t_grid)) {
    for (double t : t_grid_) {
      const auto v = detail::circuit_for(prep, evolution, t, cfg);
      outcomes_.push_back(detail::branch_outcomes(v, noise, cfg));
      corrections_.push_back(detail::reference_correction(cfg, t));
    }
  }

  const std::vector<double>& t_grid() const { return t_grid_; }

  /// Expected value of the verified estimator at every grid point, including
  /// readout channels and the compiled shot schedule.
  PhaseFunctionRecord exact() const {
    PhaseFunctionRecord rec;
    rec.mode = RecordMode::Exact;
    rec.t_grid = t_grid_;
    for (std::size_t k = 0; k < t_grid_.size(); ++k)
      rec.g.push_back(detail::exact_point(outcomes_[k], 0) * corrections_[k]);
    return rec;
  }

  template <class Rng>
  PhaseFunctionRecord sample(long long shots, Rng& rng) const {
    PhaseFunctionRecord rec;
    rec.mode = RecordMode::Sampled;
    rec.t_grid = t_grid_;
    rec.shots_per_point = shots;
    for (std::size_t k = 0; k < t_grid_.size(); ++k) {
      auto p = detail::sampled_point(outcomes_[k], 0, shots, rng);
      rec.g.push_back(p.g * corrections_[k]);
      rec.counters.push_back(p.counters);
    }
    return rec;
  }

 private:
  std::vector<double> t_grid_;
  std::vector<std::vector<detail::BranchOutcome>> outcomes_;
  std::vector<cplx> corrections_;
};

/// Noiseless with flags off this is 2 rho(1_v, 0_v), i.e. sum_j A_j e^{i E_j t}.
inline PhaseFunctionRecord exact_phase_function(const Circuit& prep, const EvolutionMaker& evolution,
                                                const std::vector<double>& t_grid, const NoiseModel* noise,
                                                const VerifiedEstimatorConfig& cfg) {
  return PhaseFunctionSampler(prep, evolution, t_grid, noise, cfg).exact();
}

template <class Rng>
PhaseFunctionRecord sampled_phase_function(const Circuit& prep, const EvolutionMaker& evolution,
                                           const std::vector<double>& t_grid, long long shots, Rng& rng,
                                           const NoiseModel* noise, const VerifiedEstimatorConfig& cfg) {
  return PhaseFunctionSampler(prep, evolution, t_grid, noise, cfg).sample(shots, rng);
}

template <class Rng>
cplx sampled_vpe_single_control(const Circuit& prep, const EvolutionMaker& evolution, double t, long long shots,
                                Rng& rng, const NoiseModel* noise, VerifiedEstimatorConfig cfg = {},
                                ShotCounters* counters = nullptr) {
  cfg.protocol = Protocol::SingleControl;
  auto rec = sampled_phase_function(prep, evolution, {t}, shots, rng, noise, cfg);
  if (counters) *counters = rec.counters.front();
  return rec.g.front();
}

template <class Rng>
cplx sampled_vpe_control_free(const Circuit& prep, const EvolutionMaker& evolution, double t, long long shots,
                              Rng& rng, const NoiseModel* noise, std::optional<double> reference_energy,
                              VerifiedEstimatorConfig cfg = {}, ShotCounters* counters = nullptr) {
  cfg.protocol = Protocol::ControlFree;
  cfg.reference_energy = reference_energy;
  auto rec = sampled_phase_function(prep, evolution, {t}, shots, rng, noise, cfg);
  if (counters) *counters = rec.counters.front();
  return rec.g.front();
}

/// 2 rho(1_v, 0_v) for a readout qubit, with every verify qubit at 0.
inline cplx verified_offdiagonal(const Matrix& rho, int n, int readout, const std::vector<int>& verify) {
  std::size_t vmask = 0;
  for (int q : verify) vmask |= std::size_t{1} << bit_of(n, q);
  const std::size_t rbit = std::size_t{1} << bit_of(n, readout);
  cplx acc = 0;
  for (std::size_t i = 0; i < dim_of(n); ++i)
    if (!(i & vmask) && !(i & rbit)) acc += rho(i | rbit, i);
  return 2.0 * acc;
}

/// Summands estimated together, one control each. Records are returned per
/// summand. Sampled mode draws each control's shots from its own marginal.
template <class Rng = std::mt19937_64>
std::vector<PhaseFunctionRecord> parallel_vpe(const std::vector<Summand>& summands, const Circuit& prep,
                                              const std::vector<double>& t_grid, const NoiseModel* noise = nullptr,
                                              VerifiedEstimatorConfig cfg = {}, long long shots = 0,
                                              Rng* rng = nullptr) {
  if (summands.empty()) throw std::invalid_argument("parallel_vpe needs at least one summand");
  const int controls = static_cast<int>(summands.size());
  const int n_sys = prep.num_qubits();
  for (std::size_t a = 0; a < summands.size(); ++a) {
    if (summands[a].num_qubits() != n_sys) throw std::invalid_argument("summand register does not match the prep");
    const Matrix ga = summands[a].generator_matrix();
    for (std::size_t b = a + 1; b < summands.size(); ++b) {
      const Matrix gb = summands[b].generator_matrix();
      if ((ga * gb - gb * ga).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("summands '" + summands[a].label + "' and '" + summands[b].label +
                                    "' do not commute");
    }
  }
  cfg.protocol = Protocol::SingleControl;
  cfg.parallel_controls = controls;
  cfg.validate();
  if (shots > 0 && rng == nullptr) throw std::invalid_argument("sampled parallel VPE needs an RNG");

  std::vector<PhaseFunctionRecord> recs(summands.size());
  for (auto& r : recs) {
    r.t_grid = t_grid;
    r.mode = shots > 0 ? RecordMode::Sampled : RecordMode::Exact;
    r.shots_per_point = shots;
  }
  const int n = n_sys + controls;
  for (double t : t_grid) {
    std::vector<Circuit> evolutions;
    for (int s = 0; s < controls; ++s) evolutions.push_back(summands[static_cast<std::size_t>(s)].evolution(t, n, controls, s));
    const auto v = detail::single_control_circuit(prep, evolutions, controls);
    const auto outcomes = detail::branch_outcomes(v, noise, cfg);
    for (int s = 0; s < controls; ++s) {
      auto& rec = recs[static_cast<std::size_t>(s)];
      if (shots > 0) {
        auto p = detail::sampled_point(outcomes, s, shots, *rng);
        rec.g.push_back(p.g);
        rec.counters.push_back(p.counters);
      } else {
        rec.g.push_back(detail::exact_point(outcomes, s));
      }
    }
  }
  return recs;
}

enum class PostProcessor { KnownPhaseFit, Prony, SinglePoint };

inline std::string to_string(PostProcessor p) {
  switch (p) {
    case PostProcessor::KnownPhaseFit: return "known_phase_fit";
    case PostProcessor::Prony: return "prony";
    case PostProcessor::SinglePoint: return "single_point";
  }
  return "?";
}

struct VerifiedExpectationOptions {
  VerifiedEstimatorConfig config;
  PostProcessor post = PostProcessor::KnownPhaseFit;
  long long shots = 0;                 // 0 selects exact mode
  std::vector<double> t_grid;          // empty selects the per-summand default
  std::optional<int> particle_number;  // restricts known eigenvalues to one sector
  std::optional<std::size_t> prony_order;
  bool compensate_bias = false;  // Prony only
};

/// t_k = k pi/4, k = 0..K-1 with K = max(4, 2 * distinct eigenvalues).
inline std::vector<double> default_t_grid(std::size_t distinct_eigenvalues) {
  const std::size_t k = std::max<std::size_t>(4, 2 * distinct_eigenvalues);
  std::vector<double> t(k);
  for (std::size_t i = 0; i < k; ++i) t[i] = static_cast<double>(i) * kPi / 4;
  return t;
}

struct SummandEstimate {
  std::string label;
  double expectation = 0;  // <H_s>
  SpectralEstimate spectrum;
  PhaseFunctionRecord record;
};

struct VerifiedExpectation {
  double value = 0;
  std::vector<SummandEstimate> summands;
};

inline std::vector<double> known_eigenvalues(const Summand& s, std::optional<int> sector) {
  if (sector && s.is_number_conserving()) return s.eigenvalues(sector);
  return s.eigenvalues();
}

/// Post-processes one record into <G_s> (the generator, not rescaled).
inline SpectralEstimate process_record(const PhaseFunctionRecord& rec, const std::vector<double>& eigenvalues,
                                       const VerifiedExpectationOptions& opt) {
  switch (opt.post) {
    case PostProcessor::KnownPhaseFit: return fit_known_phases(rec, eigenvalues);
    case PostProcessor::Prony: return prony(rec, opt.prony_order.value_or(eigenvalues.size()));
    case PostProcessor::SinglePoint: {
      if (rec.size() < 2 || rec.t_grid[0] != 0.0)
        throw std::invalid_argument("single-point estimation needs t=0 followed by one short time");
      SpectralEstimate est;
      est.method = SpectralMethod::SinglePoint;
      est.energies = {single_point_estimate(rec.g[1], rec.g[0], rec.t_grid[1])};
      est.amplitudes = {std::abs(rec.g[0])};
      return est;
    }
  }
  throw std::logic_error("unknown post-processor");
}

/// Series VPE over every summand, then sum_s <H_s> plus the constant.
template <class Rng = std::mt19937_64>
VerifiedExpectation verified_expectation(const HamiltonianDecomposition& h, const Circuit& prep,
                                         const VerifiedExpectationOptions& opt, const NoiseModel* noise = nullptr,
                                         Rng* rng = nullptr) {
  if (prep.num_qubits() != h.num_qubits) throw std::invalid_argument("prep register does not match the Hamiltonian");
  if (opt.shots > 0 && rng == nullptr) throw std::invalid_argument("sampled VPE needs an RNG");
  VerifiedExpectation out;
  out.value = h.constant;
  for (const auto& s : h.summands) {
    SummandEstimate se;
    se.label = s.label;
    try {
      const auto eig = known_eigenvalues(s, opt.particle_number);
      const auto grid = opt.t_grid.empty() ? default_t_grid(eig.size()) : opt.t_grid;
      VerifiedEstimatorConfig cfg = opt.config;
      EvolutionMaker maker;
      if (cfg.protocol == Protocol::ControlFree) {
        const auto er = s.vacuum_eigenvalue();
        if (!er) throw std::invalid_argument("the vacuum is not an eigenstate, so E_r is unknown");
        cfg.reference_energy = *er;
        maker = free_evolution(s);
      } else {
        maker = controlled_evolution(s);
      }
      se.record = opt.shots > 0 ? sampled_phase_function(prep, maker, grid, opt.shots, *rng, noise, cfg)
                                : exact_phase_function(prep, maker, grid, noise, cfg);
      se.spectrum = process_record(se.record, eig, opt);
      double g_expect = renormalized_expectation(se.spectrum);
      if (opt.compensate_bias && opt.post == PostProcessor::Prony && opt.shots > 0)
        g_expect = bias_compensate(g_expect, static_cast<int>(grid.size()), opt.shots);
      se.expectation = s.scale * g_expect;
    } catch (const std::exception& e) {
      throw std::runtime_error("summand '" + s.label + "': " + e.what());
    }
    out.value += se.expectation;
    out.summands.push_back(std::move(se));
  }
  return out;
}

/// Unmitigated baseline: Tr[rho H] on the noisy prepared state.
inline double tomography_expectation(const PauliSum& h, const Circuit& prep, const NoiseModel* noise = nullptr) {
  auto rho = apply_circuit(DensityMatrix::zero_state(prep.num_qubits()), prep, noise);
  return expectation(rho, h);
}

}  // namespace vpe
