#pragma once

// Timing-error sweeps, approximation-ladder comparisons, entanglement
// diagnostics, decoherence impact and the SI feasibility summary.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "chiforge/evolve.hpp"
#include "chiforge/model.hpp"
#include "chiforge/protocol.hpp"
#include "chiforge/statespace.hpp"

namespace chiforge {

// --- timing-error sweep ----------------------------------------------------------

struct SweepGrid {
  std::vector<double> n1_values;
  std::vector<double> n2_values;
  std::vector<std::vector<double>> fidelities;  // [i over n1][j over n2]
  ErrorModel model = ErrorModel::BetaOnly;
  Engine engine = Engine::Analytic;
  SystemParams params;  // Omega_S already snapped

  double at(std::size_t i, std::size_t j) const { return fidelities.at(i).at(j); }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return v;
}

// Runs `work(k)` for k in [0, count) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& work) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t k = 0; k < count; ++k) work(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          work(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline SweepGrid timing_error_sweep(const Protocol& proto, const std::vector<double>& n1_values,
                                    const std::vector<double>& n2_values, ErrorModel model,
                                    Engine engine = Engine::Analytic, unsigned jobs = 1, RunOptions opt = {}) {
  SweepGrid grid{n1_values, n2_values, {}, model, engine, proto.base};
  grid.fidelities.assign(n1_values.size(), std::vector<double>(n2_values.size(), 0.0));
  const auto psi0 = StateVector::basis(HilbertSpace::qubits(kAtoms), {kG, kG, kG, kG});
  const std::size_t cols = n2_values.size();
  parallel_for(n1_values.size() * cols, jobs, [&](std::size_t k) {
    const std::size_t i = k / cols, j = k % cols;
    const auto run = run_protocol(proto, psi0, engine, TimingError{n1_values[i], n2_values[j], model}, opt);
    grid.fidelities[i][j] = fidelity(proto.target, run.state);
  });
  return grid;
}

inline SweepGrid timing_error_sweep(const SystemParams& p, const std::vector<double>& n1_values,
                                    const std::vector<double>& n2_values, ErrorModel model,
                                    Engine engine = Engine::Analytic, unsigned jobs = 1, RunOptions opt = {}) {
  return timing_error_sweep(chi_protocol(p), n1_values, n2_values, model, engine, jobs, opt);
}

// --- entanglement ----------------------------------------------------------------

struct BipartitionEntropy {
  std::string label;  // in the 3,2,1,4 numbering, e.g. "(3,2)|(1,4)"
  std::vector<int> side;
  double entropy;     // ebits
};

inline std::vector<BipartitionEntropy> entanglement_diagnostics(const StateVector& psi) {
  require_same_space(HilbertSpace::qubits(kAtoms), psi.space(), "entanglement_diagnostics");
  // Each 2|2 cut, the side holding atom 3 first, atoms listed in 3,2,1,4 order.
  const std::vector<std::pair<std::vector<int>, std::vector<int>>> cuts = {
      {{3, 2}, {1, 4}}, {{3, 1}, {2, 4}}, {{3, 4}, {2, 1}}};
  std::vector<BipartitionEntropy> out;
  for (const auto& [a, b] : cuts) {
    std::string label = "(" + std::to_string(a[0]) + "," + std::to_string(a[1]) + ")|(" + std::to_string(b[0]) +
                        "," + std::to_string(b[1]) + ")";
    const auto rho = partial_trace(psi, {atom_label(a[0]), atom_label(a[1])});
    out.push_back({std::move(label), a, von_neumann_entropy(rho)});
  }
  return out;
}

// --- approximation ladder --------------------------------------------------------

struct LadderEntry {
  Engine engine;
  StateVector state;  // projected four-qubit state, post-unitaries applied when the schedule completed
  double projection_weight = 1.0;
  double vacuum_weight = 1.0;
  double max_leakage = 0.0;
  double final_leakage = 0.0;
  double norm_drift = 0.0;
  std::size_t integrator_steps = 0;
};

struct LadderComparison {
  Engine a;
  Engine b;
  double fidelity;
};

struct PairPhaseCheck {
  double gap;             // delta_1 - delta_2 of the test pair
  double duration;
  double printed;         // F(reduced, effective as printed)
  double second_order;    // F(reduced, effective with cos((dl-dm)t) X X)
  std::string supported;  // "as_printed" or "second_order"
};

struct LadderReport {
  std::vector<LadderEntry> entries;
  std::vector<LadderComparison> comparisons;
  RegimeReport regime;
  double horizon = 0.0;
  // F(ground, reduced + cavity shift): isolates the term the reduction drops.
  std::optional<double> ground_vs_reduced_shifted;
  std::optional<PairPhaseCheck> pair_phase;

  const LadderEntry* entry(Engine e) const {
    for (const auto& x : entries) {
      if (x.engine == e) return &x;
    }
    return nullptr;
  }

  std::optional<double> compare(Engine a, Engine b) const {
    for (const auto& c : comparisons) {
      if ((c.a == a && c.b == b) || (c.a == b && c.b == a)) return c.fidelity;
    }
    return std::nullopt;
  }
};

struct LadderOptions {
  std::vector<Engine> engines{Engine::FullNumeric, Engine::GroundNumeric, Engine::ReducedNumeric,
                              Engine::EffectiveNumeric, Engine::Analytic};
  std::optional<double> horizon;  // schedule time to stop at; default: whole schedule
  int steps_per_period = 400;
  double regime_threshold = 5.0;
  bool shifted_reduced = true;
  bool pair_phase_check = true;
  unsigned jobs = 1;
};

namespace detail {

// Fixed-seed random four-qubit state.
inline StateVector random_qubit_state(unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto space = HilbertSpace::qubits(kAtoms);
  Vector v(static_cast<Eigen::Index>(space.dimension()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(n(rng), n(rng));
  return StateVector(space, std::move(v)).normalize();
}

}  // namespace detail

// Reduced vs. both effective pair-phase conventions for a nearly degenerate
// pair (atoms 1 and 2, delta gap comparable to beta), in the frame rotating
// with the drive where neither convention interacts with Omega_S.
inline PairPhaseCheck pair_phase_check(const SystemParams& base, double gap, int steps_per_period = 400) {
  SystemParams p = base;
  p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{1.0, 10.0 + gap}, AtomDrive{}, AtomDrive{}};
  p.omega_s = 0.0;
  const auto d = derive_params(p);
  const double duration = kPi / (4.0 * d.beta_of(1, 2));
  IntegratorOptions iopt;
  iopt.steps_per_period = steps_per_period;

  const auto qubit0 = detail::random_qubit_state(7);
  const auto red = integrate_unitary(build_h_reduced(p), detail::lift(qubit0, HilbertSpace::uniform(kAtoms, 2, p.fock_dim)),
                                     0.0, duration, iopt);
  const auto red_q = detail::project(red.state).state;

  auto eff = [&](PairPhase phase) {
    EffectiveOptions eo{phase, true};
    return integrate_unitary(build_h_eff(p, {1, 2}, eo), qubit0, 0.0, duration, iopt).state;
  };
  PairPhaseCheck c;
  c.gap = d.delta_of(1) - d.delta_of(2);
  c.duration = duration;
  c.printed = fidelity(red_q, eff(PairPhase::AsPrinted));
  c.second_order = fidelity(red_q, eff(PairPhase::SecondOrder));
  c.supported = c.second_order >= c.printed ? "second_order" : "as_printed";
  return c;
}

inline LadderReport approximation_ladder(const Protocol& proto, const StateVector& psi0, const LadderOptions& opt = {}) {
  LadderReport rep;
  rep.regime = validate_regime(proto.step_params(0), opt.regime_threshold);
  rep.horizon = opt.horizon.value_or(proto.total_duration());

  RunOptions ro;
  ro.steps_per_period = opt.steps_per_period;
  ro.strict_projection = false;
  ro.horizon = opt.horizon;

  rep.entries.resize(opt.engines.size());
  parallel_for(opt.engines.size(), opt.jobs, [&](std::size_t k) {
    const auto run = run_protocol(proto, psi0, opt.engines[k], {}, ro);
    rep.entries[k] = {opt.engines[k],       run.state,      run.projection_weight, run.vacuum_weight,
                      run.max_leakage,      run.final_leakage, run.norm_drift,     run.integrator_steps};
  });
  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    for (std::size_t j = i + 1; j < rep.entries.size(); ++j) {
      rep.comparisons.push_back(
          {rep.entries[i].engine, rep.entries[j].engine, fidelity(rep.entries[i].state, rep.entries[j].state)});
    }
  }

  const bool has_ground = rep.entry(Engine::GroundNumeric) != nullptr;
  if (opt.shifted_reduced && has_ground) {
    RunOptions shifted = ro;
    shifted.reduced_cavity_shift = true;
    const auto run = run_protocol(proto, psi0, Engine::ReducedNumeric, {}, shifted);
    rep.ground_vs_reduced_shifted = fidelity(rep.entry(Engine::GroundNumeric)->state, run.state);
  }
  if (opt.pair_phase_check) {
    // Gap equal to beta of the test pair: large enough for the two
    // conventions to differ, small enough for the pair to stay coupled.
    const auto d = derive_params([&] {
      SystemParams p = proto.base;
      p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{1.0, 10.0}, AtomDrive{}, AtomDrive{}};
      return p;
    }());
    rep.pair_phase = pair_phase_check(proto.base, d.beta_of(1, 2), opt.steps_per_period);
  }
  return rep;
}

inline LadderReport approximation_ladder(const SystemParams& p, const StateVector& psi0,
                                         std::optional<double> horizon = std::nullopt, LadderOptions opt = {}) {
  opt.horizon = horizon;
  return approximation_ladder(chi_protocol(p), psi0, opt);
}

// --- decoherence -----------------------------------------------------------------

struct DecoherenceImpact {
  double fidelity_open;
  double fidelity_closed;
  double loss;
  double trace_drift;
  double relaxation_rate;  // units of g
  double dephasing_rate;   // units of g
};

// Per-qubit amplitude damping |g><s| at 1/tau_r and dephasing sigma_z at
// 1/(2 tau_d), applied to the effective model of each step.
inline DecoherenceImpact decoherence_impact(const Protocol& proto, double tau_r, double tau_d, double g_si,
                                            int steps_per_period = 400) {
  if (!(tau_r > 0.0) || !(tau_d > 0.0)) throw ConfigError("decoherence_impact: tau_r and tau_d must be > 0");
  if (!(g_si > 0.0)) throw ConfigError("decoherence_impact: g_si must be > 0");
  const auto space = HilbertSpace::qubits(kAtoms);
  DecoherenceImpact out{};
  out.relaxation_rate = std::isinf(tau_r) ? 0.0 : 1.0 / (tau_r * g_si);
  out.dephasing_rate = std::isinf(tau_d) ? 0.0 : 1.0 / (2.0 * tau_d * g_si);

  std::vector<CollapseChannel> channels;
  for (int l = 1; l <= kAtoms; ++l) {
    channels.push_back({tensor_embed(ket_bra(2, kG, kS), atom_label(l), space), out.relaxation_rate});
    channels.push_back({tensor_embed(pauli_z(), atom_label(l), space), out.dephasing_rate});
  }
  IntegratorOptions iopt;
  iopt.steps_per_period = steps_per_period;

  auto run = [&](bool open) {
    auto rho = DensityMatrix::pure(StateVector::basis(space, {kG, kG, kG, kG}));
    for (std::size_t i = 0; i < proto.steps.size(); ++i) {
      const auto p = proto.step_params(i);
      auto h = build_h_eff(p);
      h += build_h_drive(space, p.signed_omega_s());
      const auto r = integrate_lindblad(h, open ? channels : std::vector<CollapseChannel>{}, rho, 0.0,
                                        proto.steps[i].duration, iopt);
      out.trace_drift = std::max(out.trace_drift, r.trace_drift);
      rho = r.state;
    }
    Matrix u = Matrix::Identity(16, 16);
    for (const auto& lu : proto.post_unitaries) u = tensor_embed(lu.unitary, atom_label(lu.atom), space).matrix() * u;
    const Vector v = u.adjoint() * proto.target.amplitudes();
    return std::real(v.dot(rho.matrix() * v));
  };
  out.fidelity_closed = run(false);
  out.fidelity_open = run(true);
  out.loss = out.fidelity_closed - out.fidelity_open;
  return out;
}

// Leading-order loss estimate for `qubits` qubits over total time T:
// qubits * (T/tau_r + T/tau_d) / 2.
inline double first_order_loss_estimate(double total_si, double tau_r, double tau_d, int qubits = kAtoms) {
  return qubits * (total_si / tau_r + total_si / tau_d) / 2.0;
}

// --- feasibility -----------------------------------------------------------------

struct FeasibilityReport {
  double g_si;     // rad/s
  double t1_g, t2_g;  // units of 1/g
  double t1_si, t2_si, total_si;
  double tau_r, tau_d;
  double ratio;    // total / tau_r
  bool pass;       // total < tau_r / 3
  RegimeReport regime;
};

inline FeasibilityReport feasibility_report(const Protocol& proto, double g_si, double tau_r, double tau_d,
                                            double regime_threshold = 5.0) {
  if (!(g_si > 0.0)) throw ConfigError("feasibility_report: g_si must be > 0");
  if (proto.steps.size() < 2) throw std::invalid_argument("feasibility_report: expects the two-step schedule");
  FeasibilityReport r{};
  r.g_si = g_si;
  r.t1_g = proto.steps[0].duration;
  r.t2_g = proto.steps[1].duration;
  r.t1_si = r.t1_g / g_si;
  r.t2_si = r.t2_g / g_si;
  r.total_si = r.t1_si + r.t2_si;
  r.tau_r = tau_r;
  r.tau_d = tau_d;
  r.ratio = r.total_si / tau_r;
  r.pass = r.total_si < tau_r / 3.0;
  r.regime = validate_regime(proto.step_params(0), regime_threshold);
  return r;
}

inline FeasibilityReport feasibility_report(const SystemParams& p, double g_si, double tau_r, double tau_d) {
  return feasibility_report(chi_protocol(p), g_si, tau_r, tau_d);
}

}  // namespace chiforge
