#pragma once

// Time-evolution engines: fixed-step RK4 for i dpsi/dt = H(t) psi, the matching
// Lindblad integrator, and the closed-form evolution of the effective model.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "chiforge/errors.hpp"
#include "chiforge/model.hpp"
#include "chiforge/statespace.hpp"
#include "chiforge/time_dependent.hpp"

namespace chiforge {

inline constexpr double kNormDriftLimit = 1e-6;
inline constexpr double kTraceDriftLimit = 1e-4;
inline constexpr double kLindbladEigenFloor = -1e-6;
// Largest Hilbert-space dimension for the exact constant-generator path.
inline constexpr Eigen::Index kLindbladExpmMaxDim = 32;

struct IntegratorOptions {
  int steps_per_period = 400;
  // Called with (t, state) every `observe_every` steps and at the end.
  std::function<void(double, const Vector&)> observer;
  std::size_t observe_every = 0;
  // Lindblad only: use the exact exponential when the generator is constant
  // and small enough.
  bool exact_constant = true;
};

struct UnitaryRun {
  StateVector state;
  // Sum over steps of |1 - ||psi||| before each renormalisation.
  double norm_drift = 0.0;
  std::size_t steps = 0;
  double dt = 0.0;
};

// Step count and size for an interval: dt = 2 pi / (steps_per_period * w),
// w = max(fastest phase rate, bound on ||H||), then shrunk to divide the
// interval evenly.
inline std::pair<std::size_t, double> step_plan(double span, double rate, int steps_per_period) {
  if (span <= 0.0) return {0, 0.0};
  const double w = std::max(rate, 1e-12);
  const double dt_max = 2.0 * kPi / (steps_per_period * w);
  const auto n = static_cast<std::size_t>(std::ceil(span / dt_max - 1e-12));
  const std::size_t steps = std::max<std::size_t>(n, 1);
  return {steps, span / static_cast<double>(steps)};
}

inline UnitaryRun integrate_unitary(const TimeDependentOperator& h, const StateVector& psi0, double t0, double t1,
                                    const IntegratorOptions& opt = {}) {
  require_same_space(h.space(), psi0.space(), "integrate_unitary");
  if (t1 < t0) throw std::invalid_argument("integrate_unitary: t1 < t0");
  if (opt.steps_per_period < 20) throw std::invalid_argument("integrate_unitary: steps_per_period < 20");

  const auto [steps, dt] = step_plan(t1 - t0, std::max(h.max_frequency(), h.norm_bound()), opt.steps_per_period);
  UnitaryRun run{psi0, 0.0, steps, dt};
  Vector psi = psi0.amplitudes();
  const auto n = psi.size();
  Vector k1(n), k2(n), k3(n), k4(n), tmp(n);
  const Complex mi = -kI;

  for (std::size_t s = 0; s < steps; ++s) {
    const double t = t0 + static_cast<double>(s) * dt;
    h.apply(t, psi, k1);
    k1 *= mi;
    tmp = psi + (0.5 * dt) * k1;
    h.apply(t + 0.5 * dt, tmp, k2);
    k2 *= mi;
    tmp = psi + (0.5 * dt) * k2;
    h.apply(t + 0.5 * dt, tmp, k3);
    k3 *= mi;
    tmp = psi + dt * k3;
    h.apply(t + dt, tmp, k4);
    k4 *= mi;
    psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    const double nrm = psi.norm();
    if (!std::isfinite(nrm)) throw NumericsError("integrate_unitary: non-finite amplitudes");
    run.norm_drift += std::abs(1.0 - nrm);
    psi /= nrm;
    if (run.norm_drift > kNormDriftLimit) {
      throw NumericsError("integrate_unitary: norm drift " + std::to_string(run.norm_drift) +
                          " exceeds limit; increase steps_per_period");
    }
    if (opt.observer && opt.observe_every > 0 && (s + 1) % opt.observe_every == 0) opt.observer(t + dt, psi);
  }
  if (opt.observer) opt.observer(t1, psi);
  run.state = StateVector(psi0.space(), std::move(psi));
  return run;
}

// --- open systems ----------------------------------------------------------

struct CollapseChannel {
  Operator op;
  double rate;  // angular frequency, units of g
};

struct LindbladRun {
  DensityMatrix state;
  double trace_drift = 0.0;
  std::size_t steps = 0;
};

// d rho/dt = -i[H, rho] + sum_k rate_k (L rho L^dag - {L^dag L, rho}/2)
inline LindbladRun integrate_lindblad(const TimeDependentOperator& h, const std::vector<CollapseChannel>& channels,
                                      const DensityMatrix& rho0, double t0, double t1,
                                      const IntegratorOptions& opt = {}) {
  require_same_space(h.space(), rho0.space(), "integrate_lindblad");
  if (t1 < t0) throw std::invalid_argument("integrate_lindblad: t1 < t0");
  if (opt.steps_per_period < 20) throw std::invalid_argument("integrate_lindblad: steps_per_period < 20");

  struct Jump {
    SparseMatrix l, ld, ldl;
    double rate;
  };
  std::vector<Jump> jumps;
  double rate_total = 0.0;
  for (const auto& c : channels) {
    if (!(c.rate >= 0.0)) throw std::invalid_argument("integrate_lindblad: negative rate");
    require_same_space(h.space(), c.op.space(), "integrate_lindblad channel");
    if (c.rate == 0.0) continue;
    const SparseMatrix l = c.op.matrix().sparseView(0.0, 0.0);
    const SparseMatrix ld = l.adjoint();
    jumps.push_back({l, ld, ld * l, c.rate});
    rate_total += c.rate * max_abs(c.op.matrix()) * max_abs(c.op.matrix());
  }

  const double w = std::max({h.max_frequency(), h.norm_bound(), rate_total});
  auto [steps, dt] = step_plan(t1 - t0, w, opt.steps_per_period);
  const auto d = static_cast<Eigen::Index>(h.dimension());
  Matrix rho = rho0.matrix();

  if (h.max_frequency() == 0.0 && opt.exact_constant && d <= kLindbladExpmMaxDim) {
    // Constant generator: exact exponential of the column-stacked Liouvillian,
    // vec(A rho B) = (B^T kron A) vec(rho).
    const Matrix id = Matrix::Identity(d, d);
    const Matrix hm = h.eval(0.0).matrix();
    Matrix liou = -kI * (Matrix(Eigen::kroneckerProduct(id, hm)) - Matrix(Eigen::kroneckerProduct(hm.transpose(), id)));
    for (const auto& j : jumps) {
      const Matrix l(j.l), ldl(j.ldl);
      liou += j.rate * Matrix(Eigen::kroneckerProduct(l.conjugate(), l));
      liou -= (0.5 * j.rate) * (Matrix(Eigen::kroneckerProduct(id, ldl)) +
                                Matrix(Eigen::kroneckerProduct(ldl.transpose(), id)));
    }
    const Matrix prop = (liou * Complex(t1 - t0)).exp();
    const Vector v = prop * Eigen::Map<const Vector>(rho.data(), d * d);
    rho = Eigen::Map<const Matrix>(v.data(), d, d);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    steps = 1;
  } else {
    // rho is Hermitian at every stage, so rho H = (H rho)^dag.
    Matrix hr(d, d), tmp(d, d);
    auto rhs = [&](double t, const Matrix& rho, Matrix& out) {
      hr.setZero();
      for (const auto& term : h.terms()) {
        if (term.frequency == 0.0) {
          hr.noalias() += term.matrix * rho;
        } else {
          hr.noalias() += std::exp(kI * term.frequency * t) * (term.matrix * rho);
        }
      }
      out = -kI * (hr - hr.adjoint());
      for (const auto& j : jumps) {
        tmp.noalias() = j.l * rho;
        out.noalias() += j.rate * (tmp * j.ld);
        tmp.noalias() = j.ldl * rho;
        out -= (0.5 * j.rate) * (tmp + tmp.adjoint());
      }
    };

    Matrix k1(d, d), k2(d, d), k3(d, d), k4(d, d), stage(d, d);
    for (std::size_t s = 0; s < steps; ++s) {
      const double t = t0 + static_cast<double>(s) * dt;
      rhs(t, rho, k1);
      stage = rho + (0.5 * dt) * k1;
      rhs(t + 0.5 * dt, stage, k2);
      stage = rho + (0.5 * dt) * k2;
      rhs(t + 0.5 * dt, stage, k3);
      stage = rho + dt * k3;
      rhs(t + dt, stage, k4);
      rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      rho = 0.5 * (rho + rho.adjoint()).eval();
      if (!rho.allFinite()) throw NumericsError("integrate_lindblad: non-finite density matrix");
    }
  }

  const double drift = std::abs(rho.trace() - Complex(1.0));
  if (drift > kTraceDriftLimit) {
    throw NumericsError("integrate_lindblad: trace drift " + std::to_string(drift));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
  if (es.eigenvalues().minCoeff() < kLindbladEigenFloor) {
    throw NumericsError("integrate_lindblad: negative eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  }
  // Small negative eigenvalues from truncation error are clipped, then the
  // trace is restored.
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  rho = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace();
  return {DensityMatrix(h.space(), std::move(rho)), drift, steps};
}

// --- closed-form effective evolution -------------------------------------

struct PairCoupling {
  AtomPair atoms;
  double beta;
};

struct AnalyticStep {
  std::vector<PairCoupling> pairs;
  double omega_s = 0.0;     // signed drive amplitude
  double alpha_total = 0.0;  // sum of alpha_l over the driven atoms
};

namespace detail {

inline std::size_t qubit_bit(const HilbertSpace& space, int atom) {
  const std::size_t pos = space.position(atom_label(atom));
  return space.size() - 1 - pos;
}

inline void require_qubits(const HilbertSpace& space) {
  for (const auto& f : space.factors()) {
    if (f.dim != 2) throw std::invalid_argument("analytic evolution works on two-level atoms only");
  }
}

}  // namespace detail

// psi <- exp(-i theta X_l X_m) psi
inline void apply_pair_rotation(StateVector& psi, AtomPair pair, double theta) {
  detail::require_qubits(psi.space());
  const std::size_t mask = (std::size_t{1} << detail::qubit_bit(psi.space(), pair.first)) |
                           (std::size_t{1} << detail::qubit_bit(psi.space(), pair.second));
  const Vector in = psi.amplitudes();
  const Complex c = std::cos(theta), s = -kI * std::sin(theta);
  for (std::size_t i = 0; i < psi.space().dimension(); ++i) {
    psi.amplitudes()(static_cast<Eigen::Index>(i)) =
        c * in(static_cast<Eigen::Index>(i)) + s * in(static_cast<Eigen::Index>(i ^ mask));
  }
}

// psi <- prod_l exp(-i phi X_l) psi, i.e. |g> -> cos(phi)|g> - i sin(phi)|s> on every atom.
inline void apply_drive_rotation(StateVector& psi, double phi) {
  detail::require_qubits(psi.space());
  const Complex c = std::cos(phi), s = -kI * std::sin(phi);
  for (std::size_t k = 0; k < psi.space().size(); ++k) {
    const std::size_t mask = std::size_t{1} << (psi.space().size() - 1 - k);
    const Vector in = psi.amplitudes();
    for (std::size_t i = 0; i < psi.space().dimension(); ++i) {
      psi.amplitudes()(static_cast<Eigen::Index>(i)) =
          c * in(static_cast<Eigen::Index>(i)) + s * in(static_cast<Eigen::Index>(i ^ mask));
    }
  }
}

inline void require_disjoint(const std::vector<PairCoupling>& pairs) {
  std::set<int> used;
  for (const auto& p : pairs) {
    if (p.atoms.first == p.atoms.second || !used.insert(p.atoms.first).second ||
        !used.insert(p.atoms.second).second) {
      throw std::invalid_argument("analytic evolution: pairs overlap");
    }
  }
}

// exp(-i H0 t) exp(-i Heff t) psi0 for disjoint, degenerate pairs, where
// Heff = sum beta X_l X_m + alpha_total and H0 = Omega_S sum_l X_l. The common
// alpha phase is left out; see analytic_global_phase().
inline StateVector evolve_step_analytic(const AnalyticStep& step, double t, const StateVector& psi0) {
  require_disjoint(step.pairs);
  if (!psi0.is_normalized(1e-8)) throw std::invalid_argument("evolve_step_analytic: psi0 not normalized");
  StateVector psi = psi0;
  for (const auto& pc : step.pairs) apply_pair_rotation(psi, pc.atoms, pc.beta * t);
  apply_drive_rotation(psi, step.omega_s * t);
  return psi;
}

// Phase dropped by evolve_step_analytic: exp(-i alpha_total t) multiplies the state.
inline double analytic_global_phase(const AnalyticStep& step, double t) { return -step.alpha_total * t; }

}  // namespace chiforge
