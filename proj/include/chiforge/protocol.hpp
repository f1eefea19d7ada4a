#pragma once

// Two-step chi-state schedule, the reference states it passes through, and a
// runner that executes it under any of the five evolution engines.

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chiforge/errors.hpp"
#include "chiforge/evolve.hpp"
#include "chiforge/model.hpp"
#include "chiforge/statespace.hpp"

namespace chiforge {

enum class Engine { Analytic, EffectiveNumeric, ReducedNumeric, GroundNumeric, FullNumeric };
enum class ErrorModel { BetaOnly, FullPhase };

inline std::string to_string(Engine e) {
  switch (e) {
    case Engine::Analytic: return "analytic";
    case Engine::EffectiveNumeric: return "effective";
    case Engine::ReducedNumeric: return "reduced";
    case Engine::GroundNumeric: return "ground";
    case Engine::FullNumeric: return "full";
  }
  return "?";
}

inline std::string to_string(ErrorModel m) { return m == ErrorModel::BetaOnly ? "beta_only" : "full_phase"; }

inline Engine parse_engine(const std::string& s) {
  for (auto e : {Engine::Analytic, Engine::EffectiveNumeric, Engine::ReducedNumeric, Engine::GroundNumeric,
                 Engine::FullNumeric}) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown engine '" + s + "' (analytic|effective|reduced|ground|full)");
}

inline ErrorModel parse_error_model(const std::string& s) {
  if (s == "beta_only") return ErrorModel::BetaOnly;
  if (s == "full_phase") return ErrorModel::FullPhase;
  throw ConfigError("unknown error model '" + s + "' (beta_only|full_phase)");
}

// Relative duration errors n_i = dt_i / t_i.
//
// BetaOnly scales the entangling angles beta t_i while every Omega_S t_i stays
// at its nominal multiple of pi. FullPhase stretches the whole step.
struct TimingError {
  double n1 = 0.0;
  double n2 = 0.0;
  ErrorModel model = ErrorModel::BetaOnly;

  double rate(std::size_t step) const { return step == 0 ? n1 : (step == 1 ? n2 : 0.0); }

  void validate() const {
    if (!(std::abs(n1) < 1.0) || !(std::abs(n2) < 1.0)) throw ConfigError("timing error rates must satisfy |n| < 1");
  }
};

struct ScheduleStep {
  std::array<AtomDrive, kAtoms> drives{};
  double duration = 0.0;
  std::vector<AtomPair> expected_pairs;
  std::vector<std::string> constraints;
};

struct LocalUnitary {
  int atom;
  Matrix unitary;
};

struct Protocol {
  // Resonator, Omega_S and sign conventions shared by every step.
  SystemParams base;
  std::vector<ScheduleStep> steps;
  std::vector<LocalUnitary> post_unitaries;
  StateVector target;
  std::array<int, kAtoms> label_order{3, 2, 1, 4};
  std::vector<std::string> warnings;

  SystemParams step_params(std::size_t i) const {
    SystemParams p = base;
    p.drives = steps.at(i).drives;
    return p;
  }

  double total_duration() const {
    double t = 0.0;
    for (const auto& s : steps) t += s.duration;
    return t;
  }
};

// --- reference states ------------------------------------------------------------

inline const std::array<int, kAtoms> kPhysicalOrder{1, 2, 3, 4};
inline const std::array<int, kAtoms> kReportOrder{3, 2, 1, 4};

// Digits in physical order from a ket written as "gsgs" in `order`.
inline std::vector<int> ket_digits(const std::string& ket, const std::array<int, kAtoms>& order) {
  if (ket.size() != kAtoms) throw std::invalid_argument("ket must have four letters");
  std::vector<int> d(kAtoms);
  for (int k = 0; k < kAtoms; ++k) {
    const char c = ket[static_cast<std::size_t>(k)];
    if (c != 'g' && c != 's') throw std::invalid_argument("ket letters must be g or s");
    d[static_cast<std::size_t>(order[static_cast<std::size_t>(k)] - 1)] = c == 'g' ? kG : kS;
  }
  return d;
}

inline std::string ket_name(std::size_t index, const std::array<int, kAtoms>& order) {
  const auto d = HilbertSpace::qubits(kAtoms).digits(index);
  std::string s;
  for (int atom : order) s += d[static_cast<std::size_t>(atom - 1)] == kG ? 'g' : 's';
  return s;
}

inline StateVector state_from_kets(const std::vector<std::pair<std::string, Complex>>& terms,
                                   const std::array<int, kAtoms>& order) {
  const auto space = HilbertSpace::qubits(kAtoms);
  Vector v = Vector::Zero(static_cast<Eigen::Index>(space.dimension()));
  for (const auto& [ket, c] : terms) v(static_cast<Eigen::Index>(space.index(ket_digits(ket, order)))) += c;
  return StateVector(space, std::move(v)).normalize();
}

// The chi^00 state, written in the 3,2,1,4 labelling and stored in physical order.
inline StateVector chi_target() {
  const double a = 1.0 / (2.0 * std::sqrt(2.0));
  return state_from_kets({{"gggg", a},
                          {"ggss", -a},
                          {"gsgs", -a},
                          {"sggs", a},
                          {"ssgg", a},
                          {"gssg", a},
                          {"ssss", a},
                          {"sgsg", a}},
                         kReportOrder);
}

// State after the first step from |gggg>.
inline StateVector intermediate_after_step1() {
  return state_from_kets({{"gggg", 0.5}, {"ggss", -0.5 * kI}, {"ssgg", -0.5 * kI}, {"ssss", -0.5}},
                         kPhysicalOrder);
}

// State after the second step, before the local phase correction.
inline StateVector intermediate_after_step2() {
  const double a = 1.0 / (2.0 * std::sqrt(2.0));
  return state_from_kets({{"gggg", a},
                          {"gssg", -kI * a},
                          {"ggss", -kI * a},
                          {"gsgs", -a},
                          {"ssgg", -kI * a},
                          {"sgsg", -a},
                          {"ssss", -a},
                          {"sggs", kI * a}},
                         kPhysicalOrder);
}

// Amplitudes re-indexed so that the first letter of each ket belongs to order[0].
inline Vector amplitudes_in_order(const StateVector& psi, const std::array<int, kAtoms>& order) {
  const auto space = HilbertSpace::qubits(kAtoms);
  require_same_space(space, psi.space(), "amplitudes_in_order");
  Vector out(static_cast<Eigen::Index>(space.dimension()));
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const auto d = space.digits(i);
    std::size_t j = 0;
    for (int atom : order) j = j * 2 + static_cast<std::size_t>(d[static_cast<std::size_t>(atom - 1)]);
    out(static_cast<Eigen::Index>(j)) = psi[i];
  }
  return out;
}

// --- schedule construction -----------------------------------------------------

// n pi / t1 with n = round(target t1 / pi).
inline double choose_omega_s(double target, double t1) {
  if (!(target > 0.0) || !(t1 > 0.0)) throw ConfigError("choose_omega_s: target and t1 must be > 0");
  const double n = std::round(target * t1 / kPi);
  if (n < 1.0) {
    throw PhysicsError("choose_omega_s: target Omega_S " + std::to_string(target) +
                       " gives n = 0 half-turns over t1 = " + std::to_string(t1));
  }
  return n * kPi / t1;
}

// Rescales Omega_3 = Omega_4 so that beta_34 equals beta_12 exactly
// (beta_34 is quadratic in that Rabi frequency).
inline SystemParams equalize_pair_coupling(SystemParams p) {
  const auto d = derive_params(p);
  const double b12 = d.beta_of(1, 2), b34 = d.beta_of(3, 4);
  if (!(b12 > 0.0) || !(b34 > 0.0)) throw PhysicsError("equalize_pair_coupling: both pairs need beta > 0");
  const double k = std::sqrt(b12 / b34);
  p.drive(3).rabi *= k;
  p.drive(4).rabi *= k;
  return p;
}

inline constexpr double kBetaMismatchError = 0.02;
inline constexpr double kBetaMismatchWarn = 0.005;

inline Matrix phase_gate() {
  Matrix u = Matrix::Identity(2, 2);
  u(1, 1) = kI;
  return u;
}

// Step 1 couples (1,2) and (3,4) for t1 = pi/(4 beta_12); step 2 drives atoms
// 2 and 3 with atom 1's settings for t2 = pi/(4 beta_23). Omega_S is snapped so
// that Omega_S t1 is a multiple of pi.
inline Protocol chi_protocol(const SystemParams& p) {
  p.validate();
  Protocol proto;
  proto.base = p;

  ScheduleStep s1;
  s1.drives = p.drives;
  s1.expected_pairs = {{1, 2}, {3, 4}};
  for (int l = 1; l <= kAtoms; ++l) {
    if (!p.drive(l).driven()) throw PhysicsError("step 1 needs all four atoms driven");
  }
  const auto d1 = derive_params(p);
  const auto pairs1 = retained_pairs(p, {1, 2, 3, 4});
  if (pairs1 != s1.expected_pairs) {
    std::ostringstream os;
    os << "step 1 must couple exactly (1,2) and (3,4); coupled pairs:";
    for (auto pr : pairs1) os << " (" << pr.first << "," << pr.second << ")";
    throw PhysicsError(os.str());
  }
  const double beta = d1.beta_of(1, 2), beta_p = d1.beta_of(3, 4);
  const double mismatch = std::abs(beta - beta_p) / std::abs(beta);
  if (mismatch > kBetaMismatchError) {
    std::ostringstream os;
    os << "beta_12 = " << beta << " and beta_34 = " << beta_p << " differ by " << 100.0 * mismatch
       << "% (limit 2%); no single t1 gives both quarter turns";
    throw PhysicsError(os.str());
  }
  if (mismatch > kBetaMismatchWarn) {
    proto.warnings.push_back("beta_12 and beta_34 differ by " + std::to_string(100.0 * mismatch) + "%");
  }
  s1.duration = kPi / (4.0 * beta);
  s1.constraints = {"Omega_S t1 = n pi", "beta_12 t1 = pi/4", "beta_34 t1 = pi/4"};

  proto.base.omega_s = choose_omega_s(p.omega_s, s1.duration);

  ScheduleStep s2;
  s2.drives = {AtomDrive{0.0, 0.0}, p.drive(1), p.drive(1), AtomDrive{0.0, 0.0}};
  s2.expected_pairs = {{2, 3}};
  SystemParams p2 = proto.base;
  p2.drives = s2.drives;
  const auto d2 = derive_params(p2);
  s2.duration = kPi / (4.0 * d2.beta_of(2, 3));
  s2.constraints = {"Omega_S t2 = n pi", "beta_23 t2 = pi/4"};
  const double turns2 = proto.base.omega_s * s2.duration / kPi;
  if (std::abs(turns2 - std::round(turns2)) > 1e-9) {
    proto.warnings.push_back("Omega_S t2 is not a multiple of pi (" + std::to_string(turns2) + " half-turns)");
  }

  proto.steps = {s1, s2};
  proto.post_unitaries = {{1, phase_gate()}, {3, phase_gate()}};
  proto.target = chi_target();
  return proto;
}

// One step with the drives of `p` for `duration`, no post-unitaries; the
// target is the initial |gggg>. Used to probe the model chain outside the
// entangling schedule (e.g. with every drive off).
inline Protocol single_step_protocol(const SystemParams& p, double duration) {
  p.validate();
  if (!(duration >= 0.0)) throw ConfigError("single_step_protocol: duration must be >= 0");
  Protocol proto;
  proto.base = p;
  ScheduleStep s;
  s.drives = p.drives;
  s.duration = duration;
  s.expected_pairs = retained_pairs(p, driven_atoms(p));
  proto.steps = {s};
  proto.target = StateVector::basis(HilbertSpace::qubits(kAtoms), {kG, kG, kG, kG});
  return proto;
}

// --- execution -----------------------------------------------------------------

struct RunOptions {
  int steps_per_period = 400;
  // Throw when the state left in the qubit/vacuum sector has weight < 0.5.
  bool strict_projection = true;
  // Sampling stride (integrator steps) for |r> population in the full model.
  std::size_t leakage_stride = 50;
  // Stop after this much schedule time (nullopt: run every step). Steps are
  // truncated, post-unitaries are applied only when the schedule completes.
  std::optional<double> horizon;
  // Reduced engine only: keep the cavity shift term (see build_h_reduced).
  bool reduced_cavity_shift = false;
};

struct ProtocolRun {
  StateVector state;                    // four-qubit state after post-unitaries
  std::vector<StateVector> after_step;  // projected state after each step
  double projection_weight = 1.0;       // weight in the (g,s)^4 x vacuum sector at the end
  double vacuum_weight = 1.0;           // weight with zero photons at the end
  double final_leakage = 0.0;           // |r> population at the end (full model)
  double max_leakage = 0.0;             // largest sampled |r> population
  double norm_drift = 0.0;
  std::size_t integrator_steps = 0;
  double alpha_phase = 0.0;             // phase dropped by the analytic engine
  bool completed = true;
};

class ProjectionError : public PhysicsError {
 public:
  ProjectionError(const std::string& msg, double weight, double leakage)
      : PhysicsError(msg), weight(weight), leakage(leakage) {}
  double weight;
  double leakage;
};

namespace detail {

inline HilbertSpace engine_space(Engine e, int fock_dim) {
  switch (e) {
    case Engine::Analytic:
    case Engine::EffectiveNumeric: return HilbertSpace::qubits(kAtoms);
    case Engine::ReducedNumeric:
    case Engine::GroundNumeric: return HilbertSpace::uniform(kAtoms, 2, fock_dim);
    case Engine::FullNumeric: return HilbertSpace::uniform(kAtoms, 3, fock_dim);
  }
  throw std::logic_error("unknown engine");
}

// Places a four-qubit state into an engine space with the cavity in vacuum.
inline StateVector lift(const StateVector& psi, const HilbertSpace& target) {
  if (psi.space() == target) return psi;
  const auto qs = HilbertSpace::qubits(kAtoms);
  require_same_space(qs, psi.space(), "initial state");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(target.dimension()));
  for (std::size_t i = 0; i < qs.dimension(); ++i) {
    auto d = qs.digits(i);
    if (target.has(kCavity)) d.push_back(0);
    v(static_cast<Eigen::Index>(target.index(d))) = psi[i];
  }
  return {target, std::move(v)};
}

struct Projection {
  StateVector state;
  double weight;
  double vacuum;
  double leakage;
};

inline double r_population(const HilbertSpace& space, const Vector& v) {
  double pop = 0.0;
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const auto d = space.digits(i);
    for (int l = 0; l < kAtoms; ++l) {
      if (d[static_cast<std::size_t>(l)] == kR) {
        pop += std::norm(v(static_cast<Eigen::Index>(i)));
        break;
      }
    }
  }
  return pop;
}

inline Projection project(const StateVector& psi) {
  const auto qs = HilbertSpace::qubits(kAtoms);
  if (psi.space() == qs) return {psi, 1.0, 1.0, 0.0};
  const auto& space = psi.space();
  const bool has_cav = space.has(kCavity);
  Vector v = Vector::Zero(static_cast<Eigen::Index>(qs.dimension()));
  double vacuum = 0.0;
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const auto d = space.digits(i);
    const bool vac = !has_cav || d.back() == 0;
    if (vac) vacuum += std::norm(psi[i]);
    bool qubit = true;
    for (int l = 0; l < kAtoms; ++l) qubit = qubit && d[static_cast<std::size_t>(l)] <= kS;
    if (vac && qubit) {
      std::vector<int> q(d.begin(), d.begin() + kAtoms);
      v(static_cast<Eigen::Index>(qs.index(q))) = psi[i];
    }
  }
  const double weight = v.squaredNorm();
  const double leak = r_population(space, psi.amplitudes());
  if (weight > 0.0) v /= std::sqrt(weight);
  return {StateVector(qs, std::move(v)), weight, vacuum, leak};
}

// prod_l exp(-i phi X_l) on the (g, s) block of every atom.
inline SparseMatrix drive_rotation(const HilbertSpace& space, double phi) {
  std::vector<SiteOperator> ops;
  for (int l = 1; l <= kAtoms; ++l) {
    const auto site = atom_label(l);
    const int dim = space.factor(space.position(site)).dim;
    Matrix u = Matrix::Identity(dim, dim);
    u(kG, kG) = u(kS, kS) = std::cos(phi);
    u(kG, kS) = u(kS, kG) = -kI * std::sin(phi);
    ops.push_back({site, u});
  }
  return embed_sparse(ops, space);
}

}  // namespace detail

inline AnalyticStep analytic_step(const SystemParams& p) {
  const auto d = derive_params(p);
  const auto active = driven_atoms(p);
  AnalyticStep step;
  step.omega_s = p.signed_omega_s();
  for (int l : active) step.alpha_total += d.alpha_of(l);
  for (auto pr : retained_pairs(p, active)) step.pairs.push_back({pr, d.beta_of(pr.first, pr.second)});
  require_disjoint(step.pairs);
  return step;
}

inline ProtocolRun run_protocol(const Protocol& proto, const StateVector& psi0, Engine engine,
                                const TimingError& err = {}, const RunOptions& opt = {}) {
  err.validate();
  const auto space = detail::engine_space(engine, proto.base.fock_dim);
  const auto qs = HilbertSpace::qubits(kAtoms);
  StateVector psi = psi0.space() == qs ? detail::lift(psi0, space) : psi0;
  require_same_space(space, psi.space(), "run_protocol initial state");
  if (!psi.is_normalized(1e-8)) throw std::invalid_argument("run_protocol: initial state not normalized");

  ProtocolRun out;
  double elapsed = 0.0;
  IntegratorOptions iopt;
  iopt.steps_per_period = opt.steps_per_period;
  if (engine == Engine::FullNumeric) {
    iopt.observe_every = opt.leakage_stride;
    iopt.observer = [&](double, const Vector& v) {
      out.max_leakage = std::max(out.max_leakage, detail::r_population(space, v));
    };
  }

  for (std::size_t i = 0; i < proto.steps.size(); ++i) {
    const auto& step = proto.steps[i];
    const SystemParams p = proto.step_params(i);
    const double n = err.rate(i);
    double nominal = step.duration;
    if (opt.horizon) {
      const double left = *opt.horizon - elapsed;
      if (left <= 0.0) {
        out.completed = false;
        break;
      }
      if (left < nominal) {
        nominal = left;
        out.completed = false;
      }
    }
    elapsed += nominal;
    const double stretched = nominal * (1.0 + n);
    // Drive phase the step should leave behind, and the phase it actually
    // accumulates while running for `stretched`.
    const double target_phase = p.signed_omega_s() * (err.model == ErrorModel::FullPhase ? stretched : nominal);

    switch (engine) {
      case Engine::Analytic: {
        const auto a = analytic_step(p);
        for (const auto& pc : a.pairs) apply_pair_rotation(psi, pc.atoms, pc.beta * stretched);
        apply_drive_rotation(psi, target_phase);
        out.alpha_phase += -a.alpha_total * stretched;
        break;
      }
      case Engine::EffectiveNumeric:
      case Engine::GroundNumeric:
      case Engine::FullNumeric: {
        TimeDependentOperator h(space);
        if (engine == Engine::EffectiveNumeric) {
          h = build_h_eff(p);
          h += build_h_drive(space, p.signed_omega_s());
        } else if (engine == Engine::GroundNumeric) {
          h = build_h_ground(p);
        } else {
          h = build_h_full(p);
        }
        auto run = integrate_unitary(h, psi, 0.0, stretched, iopt);
        out.norm_drift += run.norm_drift;
        out.integrator_steps += run.steps;
        psi = std::move(run.state);
        const double excess = p.signed_omega_s() * stretched - target_phase;
        if (excess != 0.0) {
          psi = StateVector(space, detail::drive_rotation(space, -excess) * psi.amplitudes());
        }
        break;
      }
      case Engine::ReducedNumeric: {
        // Integrated in the frame rotating with the drive; the drive itself is
        // applied in closed form because it commutes with the reduced operator.
        auto run = integrate_unitary(build_h_reduced(p, opt.reduced_cavity_shift), psi, 0.0, stretched, iopt);
        out.norm_drift += run.norm_drift;
        out.integrator_steps += run.steps;
        psi = StateVector(space, detail::drive_rotation(space, target_phase) * run.state.amplitudes());
        break;
      }
    }
    out.after_step.push_back(detail::project(psi).state);
  }

  auto proj = detail::project(psi);
  out.projection_weight = proj.weight;
  out.vacuum_weight = proj.vacuum;
  out.final_leakage = proj.leakage;
  out.max_leakage = std::max(out.max_leakage, proj.leakage);
  if (opt.strict_projection && proj.weight < 0.5) {
    std::ostringstream os;
    os << to_string(engine) << " engine left only " << proj.weight
       << " of the population in the qubit/vacuum sector (|r> population " << proj.leakage << ", vacuum weight "
       << proj.vacuum << ")";
    throw ProjectionError(os.str(), proj.weight, proj.leakage);
  }
  StateVector q = proj.state;
  if (out.completed) {
    for (const auto& lu : proto.post_unitaries) {
      q = StateVector(qs, embed_sparse(lu.unitary, atom_label(lu.atom), qs) * q.amplitudes());
    }
  }
  out.state = std::move(q);
  return out;
}

}  // namespace chiforge
