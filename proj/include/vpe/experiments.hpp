#pragma once

// Experiment drivers: noise-rate sweeps over random ansatz states, variational
// loops, sampling convergence, split-noise and term-wise studies.

#include "vpe/ansatz.hpp"
#include "vpe/noise.hpp"
#include "vpe/optimize.hpp"
#include "vpe/vpe.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#ifndef VPE_DATA_DIR
#define VPE_DATA_DIR "data"
#endif

namespace vpe {

// ---------------------------------------------------------------------------
// Seeds, threads, fixtures.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a path of indices below `root`.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(root);
  for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("VPE_LAB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i < count on up to `threads` workers; the first exception
/// is rethrown after all workers join.
template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(resolve_threads(threads), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string data_path(const std::string& file) {
  const char* env = std::getenv("VPE_DATA_DIR");
  return std::string(env != nullptr ? env : VPE_DATA_DIR) + "/" + file;
}

// ---------------------------------------------------------------------------
// Plans.

enum class ExperimentKind { ErrorSweep, VqeSweep, SamplingConvergence, SplitNoise, Termwise };
enum class SystemKind { Givens, Tfim, FswPauli, FswPauliSingle, FswLowRank, FswTermwise, GivensIswap };
enum class NoiseKind { Depolarizing, Damping, ControlErrorDamping };
enum class Statistic { Rms, Median };

namespace detail {

template <class E>
struct EnumNames;

template <>
struct EnumNames<ExperimentKind> {
  static constexpr std::pair<ExperimentKind, const char*> table[] = {
      {ExperimentKind::ErrorSweep, "error-sweep"},
      {ExperimentKind::VqeSweep, "vqe"},
      {ExperimentKind::SamplingConvergence, "sampling-convergence"},
      {ExperimentKind::SplitNoise, "split-noise"},
      {ExperimentKind::Termwise, "termwise"}};
};

template <>
struct EnumNames<SystemKind> {
  static constexpr std::pair<SystemKind, const char*> table[] = {
      {SystemKind::Givens, "givens"},
      {SystemKind::Tfim, "tfim"},
      {SystemKind::FswPauli, "fsw-pauli"},
      {SystemKind::FswPauliSingle, "fsw-pauli-single"},
      {SystemKind::FswLowRank, "fsw-lowrank"},
      {SystemKind::FswTermwise, "fsw-termwise"},
      {SystemKind::GivensIswap, "givens-iswap"}};
};

template <>
struct EnumNames<NoiseKind> {
  static constexpr std::pair<NoiseKind, const char*> table[] = {{NoiseKind::Depolarizing, "depolarizing"},
                                                                {NoiseKind::Damping, "damping"},
                                                                {NoiseKind::ControlErrorDamping, "control-error"}};
};

template <>
struct EnumNames<PostProcessor> {
  static constexpr std::pair<PostProcessor, const char*> table[] = {{PostProcessor::Prony, "prony"},
                                                                    {PostProcessor::KnownPhaseFit, "known-phase"},
                                                                    {PostProcessor::SinglePoint, "single-point"}};
};

template <>
struct EnumNames<NoiseMask> {
  static constexpr std::pair<NoiseMask, const char*> table[] = {
      {NoiseMask::All, "all"}, {NoiseMask::SystemOnly, "system-only"}, {NoiseMask::ControlOnly, "control-only"}};
};

template <>
struct EnumNames<OptimizerKind> {
  static constexpr std::pair<OptimizerKind, const char*> table[] = {
      {OptimizerKind::NelderMead, "nelder-mead"}, {OptimizerKind::LinearTrustRegion, "linear-trust-region"}};
};

}  // namespace detail

template <class E>
std::string enum_name(E value) {
  for (const auto& [v, name] : detail::EnumNames<E>::table)
    if (v == value) return name;
  return "?";
}

template <class E>
std::vector<std::string> enum_names() {
  std::vector<std::string> out;
  for (const auto& [v, name] : detail::EnumNames<E>::table) out.emplace_back(name);
  return out;
}

template <class E>
std::optional<E> parse_enum(const std::string& text) {
  for (const auto& [v, name] : detail::EnumNames<E>::table)
    if (text == name) return v;
  return std::nullopt;
}

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::ErrorSweep;
  SystemKind system = SystemKind::Givens;
  NoiseKind noise = NoiseKind::Depolarizing;
  std::vector<double> rates{1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
  int replicates = 50;
  std::uint64_t seed = 1;
  long long shots = 0;  // 0 selects exact mode
  PostProcessor post = PostProcessor::Prony;
  bool basis_flip = false;
  bool z_quarter = false;
  NoiseMask mask = NoiseMask::All;
  bool compensate_bias = false;
  bool include_tomography = true;
  bool include_floor = true;  // noiseless replicates for slope fits
  int threads = 0;
  OptimizerConfig optimizer;
  // sampling convergence
  std::vector<long long> shot_counts{100, 1000, 10000, 100000};
  int trials = 200;
  double fixed_rate = 0.0;
  int t_points = 0;  // grid length K with spacing pi/4; 0 keeps the per-summand default

  /// Throws std::invalid_argument naming the offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw std::invalid_argument(field + ": " + why);
    };
    if (rates.empty()) fail("rates", "must not be empty");
    for (std::size_t i = 0; i < rates.size(); ++i) {
      const std::string f = "rates[" + std::to_string(i) + "]";
      if (!std::isfinite(rates[i]) || rates[i] < 0) fail(f, "must be a non-negative rate");
      if (rates[i] > 1) fail(f, "must not exceed 1");
      if (i > 0 && rates[i] <= rates[i - 1]) fail(f, "rates must be strictly ascending");
    }
    if (replicates < 1) fail("replicates", "must be at least 1");
    if (shots < 0) fail("shots", "must be non-negative");
    if (threads < 0) fail("threads", "must be non-negative");
    if (t_points != 0 && t_points < 2) fail("t_points", "must be 0 (default) or at least 2");
    if (optimizer.max_evaluations < 0) fail("optimizer.max_evaluations", "must be non-negative");
    if (!(optimizer.initial_step > 0)) fail("optimizer.initial_step", "must be positive");
    if (noise == NoiseKind::ControlErrorDamping && system != SystemKind::GivensIswap)
      fail("noise", "control-error noise needs the givens-iswap system");
    if (noise == NoiseKind::ControlErrorDamping)
      for (std::size_t i = 0; i < rates.size(); ++i)
        if (rates[i] > kPi / 2) fail("rates[" + std::to_string(i) + "]", "control-error offsets need rate <= pi/2");
    const bool single = system == SystemKind::Tfim || system == SystemKind::FswPauliSingle;
    if (mask != NoiseMask::All && !single) fail("mask", "noise masks need a single-control system");
    if (kind == ExperimentKind::SplitNoise && !single) fail("system", "split-noise needs a single-control system");
    if (kind == ExperimentKind::Termwise && system != SystemKind::FswTermwise)
      fail("system", "termwise runs use the fsw-termwise system");
    if (kind == ExperimentKind::SamplingConvergence) {
      if (system != SystemKind::Tfim) fail("system", "sampling convergence runs on the tfim system");
      if (shot_counts.empty()) fail("shot_counts", "must not be empty");
      for (std::size_t i = 0; i < shot_counts.size(); ++i) {
        if (shot_counts[i] < 2) fail("shot_counts[" + std::to_string(i) + "]", "must be at least 2");
        if (i > 0 && shot_counts[i] <= shot_counts[i - 1])
          fail("shot_counts[" + std::to_string(i) + "]", "must be strictly ascending");
      }
      if (trials < 1) fail("trials", "must be at least 1");
      if (!(fixed_rate >= 0 && fixed_rate <= 1)) fail("fixed_rate", "must lie in [0, 1]");
    }
  }
};

// ---------------------------------------------------------------------------
// Results.

struct SweepRecord {
  double rate = 0;  // noise rate, or shots per point for sampling studies
  int replicate = 0;
  std::string estimator;
  double abs_error = 0;
  std::string failure;  // non-empty when the replicate threw

  bool failed() const { return !failure.empty(); }
};

struct AggregateRow {
  std::string estimator;
  double rate = 0;
  std::size_t count = 0;
  std::size_t failures = 0;
  double rms = 0;
  double median = 0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double rms_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline AggregateRow aggregate(const std::vector<SweepRecord>& records, const std::string& estimator, double rate) {
  AggregateRow row{estimator, rate, 0, 0, 0, 0};
  std::vector<double> errs;
  for (const auto& r : records) {
    if (r.estimator != estimator || r.rate != rate) continue;
    ++row.count;
    if (r.failed()) ++row.failures;
    else errs.push_back(r.abs_error);
  }
  row.rms = rms_of(errs);
  row.median = median_of(errs);
  return row;
}

inline void sort_records(std::vector<SweepRecord>& v) {
  std::sort(v.begin(), v.end(), [](const SweepRecord& a, const SweepRecord& b) {
    return std::tie(a.rate, a.replicate, a.estimator) < std::tie(b.rate, b.replicate, b.estimator);
  });
}

}  // namespace detail

struct SweepResult {
  std::string name;
  std::vector<std::string> estimator_order;
  std::vector<SweepRecord> records;        // sorted by (rate, replicate, estimator)
  std::vector<SweepRecord> floor_records;  // noiseless replicates, rate 0

  std::vector<double> rates() const {
    std::vector<double> out;
    for (const auto& r : records)
      if (std::find(out.begin(), out.end(), r.rate) == out.end()) out.push_back(r.rate);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<AggregateRow> aggregates() const {
    std::vector<AggregateRow> out;
    for (const auto& e : estimator_order)
      for (double rate : rates()) out.push_back(detail::aggregate(records, e, rate));
    return out;
  }

  double statistic(const std::string& estimator, double rate, Statistic stat) const {
    const auto row = detail::aggregate(records, estimator, rate);
    return stat == Statistic::Rms ? row.rms : row.median;
  }

  /// Noiseless level of `estimator`, or nullopt without floor replicates.
  std::optional<double> floor(const std::string& estimator, Statistic stat) const {
    const auto row = detail::aggregate(floor_records, estimator, 0.0);
    if (row.count == 0) return std::nullopt;
    return stat == Statistic::Rms ? row.rms : row.median;
  }

  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.failed();
    return n;
  }
};

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;

  bool valid() const { return points >= 2 && std::isfinite(slope); }
};

/// OLS of log10(statistic) against log10(rate) over positive rates. With
/// `above_floor`, only rates whose statistic exceeds 10x the noiseless floor
/// enter the fit.
inline SlopeFit fit_slope(const SweepResult& r, const std::string& estimator, Statistic stat, bool above_floor = true) {
  const auto fl = r.floor(estimator, stat);
  std::vector<double> xs, ys;
  for (double rate : r.rates()) {
    if (rate <= 0) continue;
    const double v = r.statistic(estimator, rate, stat);
    if (!(v > 0) || !std::isfinite(v)) continue;
    if (above_floor && fl && !(v > 10 * *fl)) continue;
    xs.push_back(std::log10(rate));
    ys.push_back(std::log10(v));
  }
  SlopeFit fit;
  fit.points = xs.size();
  if (xs.size() < 2) return fit;
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n, my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

// ---------------------------------------------------------------------------
// Workloads.

using PrepFactory = std::function<Circuit(const std::vector<double>&)>;

/// One VPE run: a decomposition estimated on the preparation prep(theta).
struct WorkloadPart {
  HamiltonianDecomposition decomposition;
  PrepFactory prep;
};

struct Workload {
  std::string name;
  int num_qubits = 0;
  PauliSum hamiltonian;  // observable the estimators target
  Protocol protocol = Protocol::SingleControl;
  std::optional<int> sector;
  std::size_t num_params = 0;
  double param_range = kPi;  // initial parameters are uniform in [-range, range]
  PrepFactory state_prep;    // |0> -> psi(theta), used by tomography and the oracle
  std::vector<WorkloadPart> parts;

  std::vector<double> draw_params(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-param_range, param_range);
    std::vector<double> p(num_params);
    for (auto& x : p) x = u(rng);
    return p;
  }

  /// Dense oracle <psi(theta)|op|psi(theta)> from the Kronecker-built unitary.
  double truth(const std::vector<double>& params, const PauliSum& op) const {
    const Vector psi = state_prep(params).unitary().col(0);
    return (psi.adjoint() * op.to_matrix() * psi)(0, 0).real();
  }

  double truth(const std::vector<double>& params) const { return truth(params, hamiltonian); }

  /// Lowest eigenvalue of the target, restricted to the sector when set.
  double ground_energy() const {
    const Matrix h = hamiltonian.to_matrix();
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      if (!sector || std::popcount(static_cast<std::uint64_t>(i)) == *sector) idx.push_back(i);
    Matrix sub(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b) sub(a, b) = h(idx[a], idx[b]);
    return Eigen::SelfAdjointEigenSolver<Matrix>(sub, Eigen::EigenvaluesOnly).eigenvalues()(0);
  }
};

namespace detail {

constexpr int kWorkloadQubits = 4;
constexpr int kWorkloadFermions = 2;

inline Matrix diagonal_matrix(const RealVector& eps) {
  return Matrix(eps.cast<cplx>().asDiagonal());
}

inline Circuit concat(Circuit a, const Circuit& b) {
  a.append(b);
  return a;
}

inline FermionOperator h2_operator(const std::string& file) {
  const auto loaded = load_hamiltonian_file(data_path(file));
  if (!std::holds_alternative<FermionOperator>(loaded)) throw std::runtime_error(file + " is not fermionic");
  return std::get<FermionOperator>(loaded);
}

inline Workload givens_workload() {
  const int n = kWorkloadQubits, nf = kWorkloadFermions;
  const FermionOperator f = build_hopping_chain(n, 1.0);
  const auto diag = diagonalize_quadratic(f.one_body_matrix());
  const Matrix v = diag.basis_change();
  Workload w;
  w.name = "givens";
  w.num_qubits = n;
  w.hamiltonian = jordan_wigner(f);
  w.protocol = Protocol::ControlFree;
  w.sector = nf;
  w.num_params = givens_parameter_count(n);
  w.state_prep = [=](const std::vector<double>& th) { return concat(fill_modes(nf, n), givens_network(th, n)); };
  HamiltonianDecomposition d;
  d.num_qubits = n;
  d.constant = f.constant();
  d.summands.push_back(make_free_fermion_summand("H", diagonal_matrix(diag.energies)));
  w.parts.push_back({d, [=](const std::vector<double>& th) {
                       return compose_prep_for_control_free(givens_network_matrix(th, n), v, nf);
                     }});
  return w;
}

inline Workload tfim_workload() {
  const int n = kWorkloadQubits, layers = 2;
  Workload w;
  w.name = "tfim";
  w.num_qubits = n;
  w.hamiltonian = build_tfim(n, 1.0, 1.0);
  w.protocol = Protocol::SingleControl;
  w.num_params = 2 * layers;
  w.state_prep = [=](const std::vector<double>& th) { return concat(fill_modes(n, n), vha_circuit(th, layers, n)); };
  w.parts.push_back({decompose_pauli(w.hamiltonian), w.state_prep});
  return w;
}

inline Workload fsw_workload(const std::string& name, const FermionOperator& f, HamiltonianDecomposition d,
                             Protocol protocol, int layers) {
  const int n = kWorkloadQubits, nf = kWorkloadFermions;
  Workload w;
  w.name = name;
  w.num_qubits = n;
  w.hamiltonian = jordan_wigner(f);
  w.protocol = protocol;
  w.num_params = fsw_parameter_count(layers, n);
  w.state_prep = [=](const std::vector<double>& th) { return concat(fill_modes(nf, n), fsw_network(th, layers, n)); };
  if (protocol == Protocol::ControlFree) {
    w.sector = nf;
    w.parts.push_back({std::move(d), [=](const std::vector<double>& th) {
                         return compose_prep_for_control_free(fsw_network(th, layers, n), nf);
                       }});
  } else {
    w.parts.push_back({std::move(d), w.state_prep});
  }
  return w;
}

/// Z0 Z1 and the four-mode scattering group of H2 at 2 Angstrom.
inline Workload fsw_termwise_workload() {
  const FermionOperator f = h2_operator("h2_2A.ham");
  const auto full = decompose_number_conserving(f);
  HamiltonianDecomposition d;
  d.num_qubits = full.num_qubits;
  d.summands.push_back(make_pauli_summand("Z0 Z1", to_sum(PauliString::parse("Z0 Z1", full.num_qubits))));
  for (const auto& s : full.summands)
    if (s.label == "modes 0 1 2 3") {
      Summand scattering = s;
      scattering.label = "scattering";
      d.summands.push_back(scattering);
    }
  if (d.summands.size() != 2) throw std::logic_error("H2 decomposition has no scattering group");
  auto w = fsw_workload("fsw-termwise", f, d, Protocol::ControlFree, 6);
  w.hamiltonian = d.total();
  return w;
}

/// H1 = nearest-neighbour hopping (t1 = 1), H2 = t2 (next-nearest-neighbour
/// hopping + on-site), t2 = 0.5, both periodic. Each part rotates into its own
/// eigenbasis, merged with the ansatz and compiled to sqrt(ISWAP) gates.
inline Workload givens_iswap_workload() {
  const int n = kWorkloadQubits, nf = kWorkloadFermions;
  const double t2 = 0.5;
  const Matrix h1 = build_hopping_chain(n, 1.0).one_body_matrix();
  Matrix h2 = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    h2(j, (j + 2) % n) += -t2;
    h2((j + 2) % n, j) += -t2;
    h2(j, j) += -t2;
  }
  Workload w;
  w.name = "givens-iswap";
  w.num_qubits = n;
  w.hamiltonian = jordan_wigner(quadratic_operator(h1 + h2));
  w.protocol = Protocol::ControlFree;
  w.sector = nf;
  w.num_params = givens_parameter_count(n);
  w.state_prep = [=](const std::vector<double>& th) {
    return concat(fill_modes(nf, n), givens_network(th, n, GivensCompilation::SqrtIswap));
  };
  int k = 1;
  for (const Matrix& t : {h1, h2}) {
    const auto diag = diagonalize_quadratic(t);
    const Matrix v = diag.basis_change();
    HamiltonianDecomposition d;
    d.num_qubits = n;
    d.summands.push_back(make_free_fermion_summand("H" + std::to_string(k++), diagonal_matrix(diag.energies)));
    w.parts.push_back({d, [=](const std::vector<double>& th) {
                         int instance = 0;
                         return concat(cnot_chain(nf, n),
                                       single_particle_circuit_sqrt_iswap(v * givens_network_matrix(th, n), n, instance));
                       }});
  }
  return w;
}

}  // namespace detail

inline Workload make_workload(SystemKind system) {
  switch (system) {
    case SystemKind::Givens: return detail::givens_workload();
    case SystemKind::Tfim: return detail::tfim_workload();
    case SystemKind::FswPauli: {
      const auto f = detail::h2_operator("h2_2A.ham");
      return detail::fsw_workload("fsw-pauli", f, decompose_number_conserving(f), Protocol::ControlFree, 6);
    }
    case SystemKind::FswPauliSingle: {
      const auto f = detail::h2_operator("h2_2A.ham");
      return detail::fsw_workload("fsw-pauli-single", f, decompose_pauli(jordan_wigner(f)), Protocol::SingleControl,
                                  6);
    }
    case SystemKind::FswLowRank: {
      const auto lr = load_low_rank_file(data_path("h2_eq_lowrank.json"));
      return detail::fsw_workload("fsw-lowrank", lr.to_fermion(), decompose_low_rank(lr), Protocol::ControlFree, 4);
    }
    case SystemKind::FswTermwise: return detail::fsw_termwise_workload();
    case SystemKind::GivensIswap: return detail::givens_iswap_workload();
  }
  throw std::logic_error("unknown system");
}

// ---------------------------------------------------------------------------
// Noise and estimators.

/// Channel applied per qubit per moment at `rate`.
inline KrausChannel rate_channel(NoiseKind kind, double rate) {
  switch (kind) {
    case NoiseKind::Depolarizing: return depolarizing(rate);
    case NoiseKind::Damping: return amplitude_phase_damping(rate, rate);
    case NoiseKind::ControlErrorDamping: return amplitude_phase_damping(rate / 2, rate / 2);
  }
  throw std::logic_error("unknown noise kind");
}

/// Number of ISWAP-power slots given coherent offsets in control-error runs.
inline constexpr int kControlErrorSlots = 64;

/// Noise for a register of `num_qubits`; `mask` keeps only the control
/// (qubit 0) or only the other qubits. Control offsets are drawn from
/// `offset_seed` so that the same replicate sees offsets proportional to rate.
inline NoiseModel make_noise(NoiseKind kind, double rate, int num_qubits, NoiseMask mask, std::uint64_t offset_seed) {
  NoiseModel m;
  if (rate <= 0) return m;
  const auto ch = rate_channel(kind, rate);
  for (int q = 0; q < num_qubits; ++q) {
    const bool is_control = q == 0;
    if (mask == NoiseMask::ControlOnly && !is_control) continue;
    if (mask == NoiseMask::SystemOnly && is_control) continue;
    m.per_qubit.emplace(q, ch);
  }
  if (kind == NoiseKind::ControlErrorDamping) {
    std::mt19937_64 rng(offset_seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int slot = 0; slot < kControlErrorSlots; ++slot)
      m.control_error_offsets[slot] = u(rng) * rate / kPi;
  }
  return m;
}

struct EstimatorSettings {
  PostProcessor post = PostProcessor::Prony;
  long long shots = 0;
  bool basis_flip = false;
  bool z_quarter = false;
  bool compensate_bias = false;
  int t_points = 0;
};

inline EstimatorSettings settings_of(const ExperimentPlan& plan) {
  return {plan.post, plan.shots, plan.basis_flip, plan.z_quarter, plan.compensate_bias, plan.t_points};
}

/// t_k = k pi/4 for k < K.
inline std::vector<double> uniform_t_grid(int k) {
  std::vector<double> t(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) t[static_cast<std::size_t>(i)] = i * kPi / 4;
  return t;
}

inline VerifiedExpectationOptions vpe_options(const Workload& w, const EstimatorSettings& s) {
  VerifiedExpectationOptions opt;
  opt.config.protocol = w.protocol;
  opt.config.basis_flip = s.basis_flip;
  opt.config.z_quarter = s.z_quarter;
  opt.post = s.post;
  opt.shots = s.shots;
  opt.particle_number = w.sector;
  opt.compensate_bias = s.compensate_bias;
  if (s.t_points > 0) opt.t_grid = uniform_t_grid(s.t_points);
  return opt;
}

/// Verified estimate summed over the workload parts.
inline double vpe_estimate(const Workload& w, const std::vector<double>& params, const NoiseModel* noise,
                           const EstimatorSettings& s, std::mt19937_64* rng = nullptr) {
  const auto opt = vpe_options(w, s);
  double total = 0;
  for (const auto& part : w.parts) total += verified_expectation(part.decomposition, part.prep(params), opt, noise, rng).value;
  return total;
}

/// Unmitigated estimate; sampled mode draws `shots` single-string outcomes per
/// Pauli term.
inline double tomography_estimate(const PauliSum& h, const Circuit& prep, const NoiseModel* noise, long long shots,
                                  std::mt19937_64* rng) {
  if (shots <= 0) return tomography_expectation(h, prep, noise);
  if (rng == nullptr) throw std::invalid_argument("sampled tomography needs an RNG");
  const auto rho = apply_circuit(DensityMatrix::zero_state(prep.num_qubits()), prep, noise);
  double out = h.constant();
  for (const auto& s : h.without_constant().strings()) {
    const double mean = expectation(rho, to_sum(PauliString(s.letters, 1.0)));
    std::binomial_distribution<long long> draw(shots, std::clamp((1 + mean) / 2, 0.0, 1.0));
    out += s.coefficient * (2.0 * static_cast<double>(draw(*rng)) / static_cast<double>(shots) - 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps.

namespace detail {

/// One estimator column of a sweep.
struct EstimatorSpec {
  std::string name;
  bool verified = true;
  NoiseMask mask = NoiseMask::All;
};

inline int vpe_register(const Workload& w) {
  return w.protocol == Protocol::SingleControl ? w.num_qubits + 1 : w.num_qubits;
}

inline SweepResult run_sweep(const ExperimentPlan& plan, const Workload& w, const std::vector<EstimatorSpec>& specs,
                             const std::string& name) {
  plan.validate();
  SweepResult result;
  result.name = name;
  for (const auto& s : specs) result.estimator_order.push_back(s.name);

  std::vector<std::vector<double>> params(static_cast<std::size_t>(plan.replicates));
  std::vector<double> truths(params.size());
  for (std::size_t r = 0; r < params.size(); ++r) {
    params[r] = w.draw_params(derive_seed(plan.seed, {0, r}));
    truths[r] = w.truth(params[r]);
  }

  std::vector<double> rates = plan.rates;
  const bool add_floor = plan.include_floor && rates.front() > 0;
  if (add_floor) rates.insert(rates.begin(), 0.0);
  const auto settings = settings_of(plan);
  const std::size_t per_rate = params.size();
  std::vector<SweepRecord> out(rates.size() * per_rate * specs.size());

  parallel_for(rates.size() * per_rate, plan.threads, [&](std::size_t task) {
    const std::size_t ri = task / per_rate, r = task % per_rate;
    const double rate = rates[ri];
    const auto offsets = derive_seed(plan.seed, {1, r});
    for (std::size_t e = 0; e < specs.size(); ++e) {
      SweepRecord rec{rate, static_cast<int>(r), specs[e].name, 0, {}};
      try {
        std::mt19937_64 rng(derive_seed(plan.seed, {2, ri, r, e}));
        double est;
        if (specs[e].verified) {
          const auto noise = make_noise(plan.noise, rate, vpe_register(w), specs[e].mask, offsets);
          est = vpe_estimate(w, params[r], &noise, settings, &rng);
        } else {
          const auto noise = make_noise(plan.noise, rate, w.num_qubits, NoiseMask::All, offsets);
          est = tomography_estimate(w.hamiltonian, w.state_prep(params[r]), &noise, plan.shots, &rng);
        }
        rec.abs_error = std::abs(est - truths[r]);
      } catch (const std::exception& ex) {
        rec.abs_error = std::numeric_limits<double>::quiet_NaN();
        rec.failure = ex.what();
      }
      out[task * specs.size() + e] = std::move(rec);
    }
  });

  for (auto& rec : out) (add_floor && rec.rate == 0.0 ? result.floor_records : result.records).push_back(std::move(rec));
  if (!add_floor)
    for (const auto& rec : result.records)
      if (rec.rate == 0.0) result.floor_records.push_back(rec);
  sort_records(result.records);
  sort_records(result.floor_records);
  return result;
}

}  // namespace detail

/// Random-parameter sweep of VPE against tomography at every rate.
inline SweepResult run_error_sweep(const ExperimentPlan& plan) {
  const auto w = make_workload(plan.system);
  std::vector<detail::EstimatorSpec> specs{{"vpe", true, plan.mask}};
  if (plan.include_tomography) specs.push_back({"tomography", false, NoiseMask::All});
  return detail::run_sweep(plan, w, specs, w.name);
}

/// VPE with all, system-only and control-only noise, plus full-noise tomography.
inline SweepResult run_split_noise(const ExperimentPlan& plan) {
  const auto w = make_workload(plan.system);
  if (w.protocol != Protocol::SingleControl) throw std::invalid_argument("split-noise needs the single-control protocol");
  std::vector<detail::EstimatorSpec> specs{{"vpe", true, NoiseMask::All},
                                           {"vpe-system-only", true, NoiseMask::SystemOnly},
                                           {"vpe-control-only", true, NoiseMask::ControlOnly}};
  if (plan.include_tomography) specs.push_back({"tomography", false, NoiseMask::All});
  return detail::run_sweep(plan, w, specs, w.name + "-split");
}

/// Per-summand sweeps; each summand's error is measured against its own
/// dense expectation value.
inline SweepResult run_termwise(const ExperimentPlan& plan) {
  const auto base = make_workload(plan.system);
  SweepResult total;
  total.name = base.name;
  for (const auto& part : base.parts)
    for (const auto& s : part.decomposition.summands) {
      Workload w = base;
      w.hamiltonian = s.op;
      HamiltonianDecomposition d;
      d.num_qubits = part.decomposition.num_qubits;
      d.summands = {s};
      w.parts = {{d, part.prep}};
      std::vector<detail::EstimatorSpec> specs{{"vpe:" + s.label, true, NoiseMask::All}};
      if (plan.include_tomography) specs.push_back({"tomography:" + s.label, false, NoiseMask::All});
      auto r = detail::run_sweep(plan, w, specs, w.name);
      total.estimator_order.insert(total.estimator_order.end(), r.estimator_order.begin(), r.estimator_order.end());
      total.records.insert(total.records.end(), r.records.begin(), r.records.end());
      total.floor_records.insert(total.floor_records.end(), r.floor_records.begin(), r.floor_records.end());
    }
  detail::sort_records(total.records);
  detail::sort_records(total.floor_records);
  return total;
}

// ---------------------------------------------------------------------------
// Variational loops.

struct VqeOutcome {
  OptimizationTrace verified;
  OptimizationTrace tomography;
  double ground_energy = 0;
  double verified_error = 0;    // |best verified estimate - E0|
  double tomography_error = 0;  // |best tomography estimate - E0|
};

/// Minimizes the verified and the tomography estimates separately from
/// `initial`, both under the noise of `rate`.
inline VqeOutcome run_vqe_loop(const ExperimentPlan& plan, const Workload& w, const std::vector<double>& initial,
                               double rate, std::uint64_t offset_seed, bool with_tomography = true) {
  const auto settings = settings_of(plan);
  if (settings.shots > 0) throw std::invalid_argument("variational loops run in exact mode");
  const auto vpe_noise = make_noise(plan.noise, rate, detail::vpe_register(w), plan.mask, offset_seed);
  const auto tomo_noise = make_noise(plan.noise, rate, w.num_qubits, NoiseMask::All, offset_seed);
  VqeOutcome out;
  out.ground_energy = w.ground_energy();
  out.verified = minimize([&](const std::vector<double>& th) { return vpe_estimate(w, th, &vpe_noise, settings); },
                          initial, plan.optimizer);
  out.verified_error = std::abs(out.verified.best_value - out.ground_energy);
  if (with_tomography) {
    out.tomography = minimize(
        [&](const std::vector<double>& th) { return tomography_expectation(w.hamiltonian, w.state_prep(th), &tomo_noise); },
        initial, plan.optimizer);
    out.tomography_error = std::abs(out.tomography.best_value - out.ground_energy);
  }
  return out;
}

inline VqeOutcome run_vqe_loop(const ExperimentPlan& plan, double rate, int replicate = 0) {
  const auto w = make_workload(plan.system);
  const auto r = static_cast<std::uint64_t>(replicate);
  return run_vqe_loop(plan, w, w.draw_params(derive_seed(plan.seed, {0, r})), rate, derive_seed(plan.seed, {1, r}),
                      plan.include_tomography);
}

/// Final optimized-estimate error against the exact ground energy for every
/// rate and replicate.
inline SweepResult run_vqe_sweep(const ExperimentPlan& plan) {
  plan.validate();
  const auto w = make_workload(plan.system);
  SweepResult result;
  result.name = w.name + "-vqe";
  result.estimator_order = {"vpe"};
  if (plan.include_tomography) result.estimator_order.push_back("tomography");
  const auto reps = static_cast<std::size_t>(plan.replicates);
  std::vector<std::vector<SweepRecord>> out(plan.rates.size() * reps);
  parallel_for(out.size(), plan.threads, [&](std::size_t task) {
    const std::size_t ri = task / reps, r = task % reps;
    const double rate = plan.rates[ri];
    std::vector<SweepRecord> recs;
    try {
      const auto o = run_vqe_loop(plan, w, w.draw_params(derive_seed(plan.seed, {0, r})), rate,
                                  derive_seed(plan.seed, {1, r}), plan.include_tomography);
      recs.push_back({rate, static_cast<int>(r), "vpe", o.verified_error, {}});
      if (plan.include_tomography) recs.push_back({rate, static_cast<int>(r), "tomography", o.tomography_error, {}});
    } catch (const std::exception& ex) {
      for (const auto& e : result.estimator_order)
        recs.push_back({rate, static_cast<int>(r), e, std::numeric_limits<double>::quiet_NaN(), ex.what()});
    }
    out[task] = std::move(recs);
  });
  for (auto& v : out)
    for (auto& rec : v) (rec.rate == 0.0 ? result.floor_records : result.records).push_back(rec);
  detail::sort_records(result.records);
  detail::sort_records(result.floor_records);
  return result;
}

// ---------------------------------------------------------------------------
// Sampling convergence.

/// Noiseless variational minimum of the dense energy, from restarts derived
/// from `seed`; stops at the first restart within 1e-9 of the ground energy.
inline std::vector<double> noiseless_minimum(const Workload& w, std::uint64_t seed, int restarts = 20) {
  const Matrix h = w.hamiltonian.to_matrix();
  const double e0 = w.ground_energy();
  auto energy = [&](const std::vector<double>& th) {
    const Vector psi = w.state_prep(th).unitary().col(0);
    return (psi.adjoint() * h * psi)(0, 0).real();
  };
  OptimizerConfig cfg;
  cfg.max_evaluations = 2000;
  cfg.x_tolerance = 1e-9;
  cfg.f_tolerance = 1e-14;
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int k = 0; k < restarts; ++k) {
    auto tr = minimize(energy, w.draw_params(derive_seed(seed, {3, static_cast<std::uint64_t>(k)})), cfg);
    if (tr.best_value < best_value) {
      best_value = tr.best_value;
      best = tr.best_point;
    }
    if (best_value - e0 < 1e-9) break;
  }
  return best;
}

/// Median-error curves against shots M: sampled VPE with known-phase fit and
/// with Prony, and sampled tomography. The record's rate column holds M.
inline SweepResult run_sampling_convergence(const ExperimentPlan& plan) {
  plan.validate();
  const auto w = make_workload(plan.system);
  const auto theta = noiseless_minimum(w, plan.seed);
  const double truth = w.truth(theta);
  const auto& part = w.parts.front();
  const auto prep = part.prep(theta);
  const auto vpe_noise = make_noise(NoiseKind::Depolarizing, plan.fixed_rate, detail::vpe_register(w), plan.mask, 0);
  const auto tomo_noise = make_noise(NoiseKind::Depolarizing, plan.fixed_rate, w.num_qubits, NoiseMask::All, 0);

  VerifiedEstimatorConfig cfg;
  cfg.protocol = w.protocol;
  cfg.basis_flip = plan.basis_flip;
  cfg.z_quarter = plan.z_quarter;
  struct Cached {
    const Summand* summand;
    std::vector<double> eigenvalues;
    std::optional<PhaseFunctionSampler> sampler;
  };
  std::vector<Cached> cache;
  for (const auto& s : part.decomposition.summands) {
    Cached c{&s, known_eigenvalues(s, w.sector), std::nullopt};
    const auto grid = plan.t_points > 0 ? uniform_t_grid(plan.t_points) : default_t_grid(c.eigenvalues.size());
    c.sampler.emplace(prep, controlled_evolution(s), grid, &vpe_noise, cfg);
    cache.push_back(std::move(c));
  }
  const auto rho = apply_circuit(DensityMatrix::zero_state(w.num_qubits), w.state_prep(theta), &tomo_noise);
  std::vector<std::pair<PauliString, double>> terms;
  for (const auto& s : w.hamiltonian.without_constant().strings())
    terms.emplace_back(s, expectation(rho, to_sum(PauliString(s.letters, 1.0))));

  SweepResult result;
  result.name = w.name + "-sampling";
  result.estimator_order = {"vpe-known", "vpe-prony"};
  if (plan.include_tomography) result.estimator_order.push_back("tomography");
  const auto trials = static_cast<std::size_t>(plan.trials);
  std::vector<SweepRecord> out(plan.shot_counts.size() * trials * result.estimator_order.size());
  parallel_for(plan.shot_counts.size() * trials, plan.threads, [&](std::size_t task) {
    const std::size_t mi = task / trials, k = task % trials;
    const long long m = plan.shot_counts[mi];
    const double rate = static_cast<double>(m);
    std::mt19937_64 rng(derive_seed(plan.seed, {4, mi, k}));
    double known = w.parts.front().decomposition.constant, pr = known;
    std::string known_fail, prony_fail;
    for (const auto& c : cache) {
      const auto rec = c.sampler->sample(m, rng);
      try {
        known += c.summand->scale * renormalized_expectation(fit_known_phases(rec, c.eigenvalues));
      } catch (const std::exception& ex) {
        if (known_fail.empty()) known_fail = c.summand->label + ": " + ex.what();
      }
      try {
        double g = renormalized_expectation(prony(rec, c.eigenvalues.size()));
        if (plan.compensate_bias) g = bias_compensate(g, static_cast<int>(rec.size()), m);
        pr += c.summand->scale * g;
      } catch (const std::exception& ex) {
        if (prony_fail.empty()) prony_fail = c.summand->label + ": " + ex.what();
      }
    }
    auto make = [&](const std::string& name, double est, const std::string& fail) {
      SweepRecord r{rate, static_cast<int>(k), name, std::abs(est - truth), fail};
      if (!fail.empty()) r.abs_error = std::numeric_limits<double>::quiet_NaN();
      return r;
    };
    const std::size_t base = task * result.estimator_order.size();
    out[base] = make("vpe-known", known, known_fail);
    out[base + 1] = make("vpe-prony", pr, prony_fail);
    if (plan.include_tomography) {
      double tomo = w.hamiltonian.constant();
      for (const auto& [s, mean] : terms) {
        std::binomial_distribution<long long> draw(m, std::clamp((1 + mean) / 2, 0.0, 1.0));
        tomo += s.coefficient * (2.0 * static_cast<double>(draw(rng)) / static_cast<double>(m) - 1.0);
      }
      out[base + 2] = make("tomography", tomo, {});
    }
  });
  result.records = std::move(out);
  detail::sort_records(result.records);
  return result;
}

// ---------------------------------------------------------------------------
// Dispatch and presets.

inline SweepResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  switch (plan.kind) {
    case ExperimentKind::ErrorSweep: return run_error_sweep(plan);
    case ExperimentKind::VqeSweep: return run_vqe_sweep(plan);
    case ExperimentKind::SamplingConvergence: return run_sampling_convergence(plan);
    case ExperimentKind::SplitNoise: return run_split_noise(plan);
    case ExperimentKind::Termwise: return run_termwise(plan);
  }
  throw std::logic_error("unknown experiment kind");
}

struct ExperimentPreset {
  std::string name;
  std::string description;
  ExperimentPlan plan;
};

inline std::vector<ExperimentPreset> builtin_presets() {
  std::vector<ExperimentPreset> out;
  auto add = [&](std::string name, std::string description, auto&& edit) {
    ExperimentPlan p;
    edit(p);
    out.push_back({std::move(name), std::move(description), p});
  };
  add("givens-depol", "Givens network, control-free VPE, uniform depolarizing", [](ExperimentPlan& p) {
    p.system = SystemKind::Givens;
    p.noise = NoiseKind::Depolarizing;
    p.basis_flip = true;
  });
  add("givens-damping", "Givens network, control-free VPE, amplitude and phase damping", [](ExperimentPlan& p) {
    p.system = SystemKind::Givens;
    p.noise = NoiseKind::Damping;
    p.basis_flip = true;
  });
  add("tfim-sweep", "TFIM with VHA (p=2), single-control VPE per Pauli term, depolarizing", [](ExperimentPlan& p) {
    p.system = SystemKind::Tfim;
    p.noise = NoiseKind::Depolarizing;
  });
  add("tfim-vqe", "variational loop over the TFIM VHA circuit, depolarizing", [](ExperimentPlan& p) {
    p.kind = ExperimentKind::VqeSweep;
    p.system = SystemKind::Tfim;
    p.noise = NoiseKind::Depolarizing;
    p.rates = {1e-3, 3e-3, 1e-2, 3e-2};
    p.replicates = 10;
  });
  add("fsw-pauli", "H2 (2 A) swap network, control-free number-conserving Pauli groups", [](ExperimentPlan& p) {
    p.system = SystemKind::FswPauli;
    p.noise = NoiseKind::Depolarizing;
    p.basis_flip = true;
  });
  add("fsw-lowrank", "H2 (equilibrium) swap network, control-free low-rank factors", [](ExperimentPlan& p) {
    p.system = SystemKind::FswLowRank;
    p.noise = NoiseKind::Depolarizing;
    p.basis_flip = true;
  });
  add("sampling-convergence", "TFIM noiseless minimum, error against shots per circuit", [](ExperimentPlan& p) {
    p.kind = ExperimentKind::SamplingConvergence;
    p.system = SystemKind::Tfim;
    p.rates = {0.0};
    p.compensate_bias = true;
  });
  add("split-noise", "TFIM single-control VPE with noise on system only or control only", [](ExperimentPlan& p) {
    p.kind = ExperimentKind::SplitNoise;
    p.system = SystemKind::Tfim;
    p.noise = NoiseKind::Depolarizing;
    p.basis_flip = true;
    p.z_quarter = true;
  });
  add("termwise", "H2 (2 A) swap network, Z0 Z1 and scattering summands under damping", [](ExperimentPlan& p) {
    p.kind = ExperimentKind::Termwise;
    p.system = SystemKind::FswTermwise;
    p.noise = NoiseKind::Damping;
    p.basis_flip = true;
  });
  add("vqe-control-error", "Givens VQE with sqrt(ISWAP) control error and damping at p/2", [](ExperimentPlan& p) {
    p.kind = ExperimentKind::VqeSweep;
    p.system = SystemKind::GivensIswap;
    p.noise = NoiseKind::ControlErrorDamping;
    p.rates = {1e-3, 3e-3, 1e-2, 3e-2};
    p.replicates = 10;
    p.basis_flip = true;
  });
  return out;
}

inline std::optional<ExperimentPreset> find_preset(const std::string& name) {
  for (auto& p : builtin_presets())
    if (p.name == name) return p;
  return std::nullopt;
}

}  // namespace vpe
