#pragma once

// Physical parameters, derived coefficients and the Hamiltonian builders for
// every level of the reduction chain:
//
//   full       four Delta-type three-level atoms (g, s, r) + resonator
//   ground     (g, s) manifold after eliminating r
//   reduced    rotating-frame operator after dropping the 2*Omega_S terms
//   effective  cavity eliminated, pairwise sigma_x sigma_x couplings
//
// Frequencies are in units of the atom-resonator coupling g (g = 1) and
// times in units of 1/g.

#include <array>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chiforge/errors.hpp"
#include "chiforge/statespace.hpp"
#include "chiforge/time_dependent.hpp"

namespace chiforge {

inline constexpr int kAtoms = 4;

// Level indices of a three-level atom and of the (g, s) qubit.
inline constexpr int kG = 0;
inline constexpr int kS = 1;
inline constexpr int kR = 2;

inline std::string atom_label(int l) { return std::to_string(l); }
inline const std::string kCavity = "c";

struct AtomDrive {
  double rabi = 0.0;       // Omega_l
  double detuning1 = 0.0;  // Delta_{1,l}

  bool driven() const { return rabi > 0.0; }
  bool operator==(const AtomDrive&) const = default;
};

struct SystemParams {
  std::array<AtomDrive, kAtoms> drives{};
  double coupling = 1.0;   // g
  double detuning2 = 1.0;  // Delta_2
  double omega_s = 0.0;    // Omega_S
  int fock_dim = 5;
  // Net sign of the direct g<->s drive in every model; +1 follows the
  // interaction Hamiltonian of the full model.
  int drive_sign = 1;

  const AtomDrive& drive(int l) const { return drives.at(static_cast<std::size_t>(l - 1)); }
  AtomDrive& drive(int l) { return drives.at(static_cast<std::size_t>(l - 1)); }

  double signed_omega_s() const { return drive_sign * omega_s; }

  void validate() const {
    for (int l = 1; l <= kAtoms; ++l) {
      const auto& d = drive(l);
      if (!(d.rabi >= 0.0) || !std::isfinite(d.rabi)) {
        throw ConfigError("atom " + std::to_string(l) + ": rabi must be >= 0");
      }
      if (d.driven() && !(d.detuning1 > 0.0)) {
        throw ConfigError("atom " + std::to_string(l) + ": driven atom needs detuning1 > 0");
      }
    }
    if (!(coupling > 0.0)) throw ConfigError("coupling must be > 0");
    if (!(detuning2 > 0.0)) throw ConfigError("detuning2 must be > 0");
    if (!(omega_s >= 0.0) || !std::isfinite(omega_s)) throw ConfigError("omega_s must be >= 0");
    if (fock_dim < 2) throw ConfigError("fock_dim must be >= 2");
    if (drive_sign != 1 && drive_sign != -1) throw ConfigError("drive_sign must be +1 or -1");
  }

  // Every frequency multiplied by k.
  SystemParams scaled(double k) const {
    SystemParams p = *this;
    for (auto& d : p.drives) {
      d.rabi *= k;
      d.detuning1 *= k;
    }
    p.coupling *= k;
    p.detuning2 *= k;
    p.omega_s *= k;
    return p;
  }
};

struct DerivedParams {
  std::array<double, kAtoms> eta{};     // Omega_l^2 / Delta_{1,l}
  std::array<double, kAtoms> lambda{};  // (Omega_l g / 2)(1/Delta_{1,l} + 1/Delta_2)
  std::array<double, kAtoms> delta{};   // Delta_2 - Delta_{1,l}
  std::array<double, kAtoms> alpha{};   // lambda_l^2 / (4 delta_l)
  std::array<std::array<double, kAtoms>, kAtoms> beta{};  // (lambda_l lambda_m / 4)(1/delta_l + 1/delta_m)
  double xi = 0.0;                      // g^2 / Delta_2

  double eta_of(int l) const { return eta.at(static_cast<std::size_t>(l - 1)); }
  double lambda_of(int l) const { return lambda.at(static_cast<std::size_t>(l - 1)); }
  double delta_of(int l) const { return delta.at(static_cast<std::size_t>(l - 1)); }
  double alpha_of(int l) const { return alpha.at(static_cast<std::size_t>(l - 1)); }
  double beta_of(int l, int m) const {
    return beta.at(static_cast<std::size_t>(l - 1)).at(static_cast<std::size_t>(m - 1));
  }
};

inline DerivedParams derive_params(const SystemParams& p) {
  p.validate();
  DerivedParams d;
  const double g = p.coupling;
  d.xi = g * g / p.detuning2;
  for (int l = 1; l <= kAtoms; ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    const auto& drv = p.drive(l);
    d.delta[k] = p.detuning2 - drv.detuning1;
    if (!drv.driven()) continue;
    if (d.delta[k] == 0.0) {
      throw PhysicsError("atom " + std::to_string(l) +
                         ": delta = Delta_2 - Delta_1 = 0 (resonant Raman coupling, no dispersive limit)");
    }
    d.eta[k] = drv.rabi * drv.rabi / drv.detuning1;
    d.lambda[k] = 0.5 * drv.rabi * g * (1.0 / drv.detuning1 + 1.0 / p.detuning2);
    d.alpha[k] = d.lambda[k] * d.lambda[k] / (4.0 * d.delta[k]);
  }
  for (int l = 1; l <= kAtoms; ++l) {
    for (int m = 1; m <= kAtoms; ++m) {
      if (l == m) continue;
      const auto a = static_cast<std::size_t>(l - 1), b = static_cast<std::size_t>(m - 1);
      if (d.lambda[a] == 0.0 || d.lambda[b] == 0.0) continue;
      d.beta[a][b] = 0.25 * d.lambda[a] * d.lambda[b] * (1.0 / d.delta[a] + 1.0 / d.delta[b]);
    }
  }
  return d;
}

// --- regime checks -----------------------------------------------------------

struct RegimeCheck {
  std::string condition;
  double left;
  double right;
  double ratio;
  bool pass;
};

struct RegimeReport {
  double threshold = 5.0;
  std::vector<RegimeCheck> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const RegimeCheck& c) { return c.pass; });
  }
};

inline RegimeReport validate_regime(const SystemParams& p, double threshold = 5.0) {
  const auto d = derive_params(p);
  RegimeReport r;
  r.threshold = threshold;
  auto push = [&](std::string name, double left, double right) {
    const double ratio = right == 0.0 ? (left > 0.0 ? INFINITY : 0.0) : left / right;
    r.checks.push_back({std::move(name), left, right, ratio, ratio >= threshold});
  };
  for (int l = 1; l <= kAtoms; ++l) {
    if (!p.drive(l).driven()) continue;
    push("Delta1_" + atom_label(l) + " >> Omega_" + atom_label(l), p.drive(l).detuning1, p.drive(l).rabi);
  }
  push("Delta2 >> g", p.detuning2, p.coupling);
  const double two_os = 2.0 * p.omega_s;
  for (int l = 1; l <= kAtoms; ++l) {
    if (!p.drive(l).driven()) continue;
    push("2 Omega_S >> |delta_" + atom_label(l) + "|", two_os, std::abs(d.delta_of(l)));
    push("2 Omega_S >> lambda_" + atom_label(l), two_os, d.lambda_of(l));
    push("2 Omega_S >> eta_" + atom_label(l), two_os, d.eta_of(l));
  }
  push("2 Omega_S >> xi", two_os, d.xi);
  for (int l = 1; l <= kAtoms; ++l) {
    if (!p.drive(l).driven()) continue;
    push("|delta_" + atom_label(l) + "| >> lambda_" + atom_label(l) + "/2", std::abs(d.delta_of(l)),
         d.lambda_of(l) / 2.0);
  }
  return r;
}

// --- Hamiltonian builders ------------------------------------------------------

// Full model, four three-level atoms (g, s, r) + resonator:
//   sum_l [ Omega_l e^{i Delta_{1,l} t} |r><g| + g a e^{i Delta_2 t} |r><s| + Omega_S |s><g| + h.c. ]
inline TimeDependentOperator build_h_full(const SystemParams& p) {
  p.validate();
  const auto space = HilbertSpace::uniform(kAtoms, 3, p.fock_dim);
  TimeDependentOperator h(space);
  const Matrix a = annihilation(p.fock_dim);
  for (int l = 1; l <= kAtoms; ++l) {
    const auto site = atom_label(l);
    const auto& drv = p.drive(l);
    if (drv.rabi != 0.0) {
      h.add_hermitian(embed_sparse(ket_bra(3, kR, kG), site, space) * Complex(drv.rabi), drv.detuning1);
    }
    h.add_hermitian(embed_sparse({{site, ket_bra(3, kR, kS)}, {kCavity, a}}, space) * Complex(p.coupling),
                    p.detuning2);
    if (p.omega_s != 0.0) {
      h.add_hermitian(embed_sparse(ket_bra(3, kS, kG), site, space) * Complex(p.signed_omega_s()), 0.0);
    }
  }
  return h;
}

// Ground manifold after adiabatic elimination of r, on (2,2,2,2,N):
//   -sum_l [ eta_l |g><g| + xi a^dag a |s><s| + lambda_l (a^dag S+ e^{-i delta_l t} + h.c.)
//            - (Omega_S S+ + h.c.) ]
inline TimeDependentOperator build_h_ground(const SystemParams& p) {
  const auto d = derive_params(p);
  const auto space = HilbertSpace::uniform(kAtoms, 2, p.fock_dim);
  TimeDependentOperator h(space);
  const Matrix a = annihilation(p.fock_dim);
  const Matrix n = a.adjoint() * a;
  const Matrix s_plus = ket_bra(2, kS, kG);
  for (int l = 1; l <= kAtoms; ++l) {
    const auto site = atom_label(l);
    if (d.eta_of(l) != 0.0) h.add(embed_sparse(ket_bra(2, kG, kG), site, space) * Complex(-d.eta_of(l)), 0.0);
    if (d.xi != 0.0) h.add(embed_sparse({{site, ket_bra(2, kS, kS)}, {kCavity, n}}, space) * Complex(-d.xi), 0.0);
    if (d.lambda_of(l) != 0.0) {
      h.add_hermitian(embed_sparse({{site, s_plus}, {kCavity, Matrix(a.adjoint())}}, space) *
                          Complex(-d.lambda_of(l)),
                      -d.delta_of(l));
    }
    if (p.omega_s != 0.0) h.add_hermitian(embed_sparse(s_plus, site, space) * Complex(p.signed_omega_s()), 0.0);
  }
  return h;
}

// Per-atom change of basis from (g, s) to (+, -), |+-> = (|g> +- |s>)/sqrt2.
// Columns of the returned matrix are |+>, |-> written in the (g, s) basis.
inline Matrix pm_basis_change() {
  Matrix w(2, 2);
  const double r = 1.0 / std::sqrt(2.0);
  w << r, r, r, -r;
  return w;
}

inline SparseMatrix pm_basis_unitary(const HilbertSpace& space) {
  std::vector<SiteOperator> ops;
  for (const auto& f : space.factors()) {
    if (f.label == kCavity) continue;
    if (f.dim != 2) throw std::invalid_argument("to_pm_basis needs two-level atom factors");
    ops.push_back({f.label, pm_basis_change()});
  }
  return embed_sparse(ops, space);
}

// Rewrites an operator given in the (g, s) basis in the (+, -) basis, where
// index 0 is |+> and index 1 is |->.
inline Operator to_pm_basis(const Operator& op) {
  const Matrix w(pm_basis_unitary(op.space()));
  return {op.space(), w.adjoint() * op.matrix() * w};
}

inline TimeDependentOperator to_pm_basis(const TimeDependentOperator& op) {
  return op.conjugated(pm_basis_unitary(op.space()));
}

// Rotating-frame operator with the 2 Omega_S terms dropped, on (2,2,2,2,N):
//   -sum_l (lambda_l/2)(e^{i delta_l t} a + e^{-i delta_l t} a^dag)(S+ + S-)
//
// With `cavity_shift` the operator also keeps -(xi/2) a^dag a per atom, the
// non-rotating half of -xi a^dag a |s><s| that the standard reduction drops.
inline TimeDependentOperator build_h_reduced(const SystemParams& p, bool cavity_shift = false) {
  const auto d = derive_params(p);
  const auto space = HilbertSpace::uniform(kAtoms, 2, p.fock_dim);
  TimeDependentOperator h(space);
  const Matrix a = annihilation(p.fock_dim);
  for (int l = 1; l <= kAtoms; ++l) {
    if (d.lambda_of(l) == 0.0) continue;
    h.add_hermitian(embed_sparse({{atom_label(l), pauli_x()}, {kCavity, a}}, space) *
                        Complex(-0.5 * d.lambda_of(l)),
                    d.delta_of(l));
  }
  if (cavity_shift) {
    const Matrix n = a.adjoint() * a;
    h.add(embed_sparse(n, kCavity, space) * Complex(-0.5 * kAtoms * d.xi), 0.0);
  }
  return h;
}

// How the pair term of the effective Hamiltonian depends on delta_l - delta_m.
enum class PairPhase {
  // beta (e^{-i(dl-dm)t} S+_l S+_m + e^{-i(dl-dm)t} S+_l S-_m + h.c.), as written
  // in the standard effective Hamiltonian.
  AsPrinted,
  // beta cos((dl-dm)t) X_l X_m, what second-order elimination of the reduced
  // operator gives.
  SecondOrder,
};

inline constexpr double kPairKeepRatio = 1e-3;

struct AtomPair {
  int first;
  int second;
  bool operator==(const AtomPair&) const = default;
};

// A pair is kept when |delta_l - delta_m| <= beta_lm * kPairKeepRatio; exactly
// degenerate pairs are always kept.
inline bool pair_retained(const DerivedParams& d, int l, int m) {
  const double gap = std::abs(d.delta_of(l) - d.delta_of(m));
  return gap == 0.0 || gap <= std::abs(d.beta_of(l, m)) * kPairKeepRatio;
}

inline std::vector<int> driven_atoms(const SystemParams& p) {
  std::vector<int> out;
  for (int l = 1; l <= kAtoms; ++l) {
    if (p.drive(l).driven()) out.push_back(l);
  }
  return out;
}

inline std::vector<AtomPair> retained_pairs(const SystemParams& p, const std::vector<int>& active) {
  const auto d = derive_params(p);
  std::vector<AtomPair> out;
  for (std::size_t i = 0; i < active.size(); ++i) {
    for (std::size_t j = i + 1; j < active.size(); ++j) {
      if (pair_retained(d, active[i], active[j])) out.push_back({active[i], active[j]});
    }
  }
  return out;
}

struct EffectiveOptions {
  PairPhase phase = PairPhase::AsPrinted;
  // Keep every pair regardless of its detuning mismatch.
  bool keep_all_pairs = false;
};

// Cavity-free effective operator on the four (g, s) qubits:
//   sum_l alpha_l (|s><s| + |g><g|) + sum_{l<m} beta_lm (pair term)
inline TimeDependentOperator build_h_eff(const SystemParams& p, const std::vector<int>& active,
                                         EffectiveOptions opt = {}) {
  const auto d = derive_params(p);
  for (int l : active) {
    if (l < 1 || l > kAtoms) throw std::invalid_argument("atom index out of range");
    if (!p.drive(l).driven()) {
      throw std::invalid_argument("atom " + std::to_string(l) + " is listed active but not driven");
    }
  }
  std::set<int> act(active.begin(), active.end());
  const auto space = HilbertSpace::qubits(kAtoms);
  TimeDependentOperator h(space);
  const Matrix id2 = Matrix::Identity(2, 2);
  for (int l : act) {
    if (d.alpha_of(l) != 0.0) h.add(embed_sparse(id2, atom_label(l), space) * Complex(d.alpha_of(l)), 0.0);
  }
  const Matrix sp = ket_bra(2, kS, kG);
  const Matrix sm = ket_bra(2, kG, kS);
  for (auto it = act.begin(); it != act.end(); ++it) {
    for (auto jt = std::next(it); jt != act.end(); ++jt) {
      const int l = *it, m = *jt;
      if (!opt.keep_all_pairs && !pair_retained(d, l, m)) continue;
      const double b = d.beta_of(l, m);
      const double gap = d.delta_of(l) - d.delta_of(m);
      const auto sl = atom_label(l), sm_label = atom_label(m);
      if (opt.phase == PairPhase::AsPrinted) {
        const SparseMatrix pp = embed_sparse({{sl, sp}, {sm_label, sp}}, space);
        const SparseMatrix pm = embed_sparse({{sl, sp}, {sm_label, sm}}, space);
        h.add_hermitian((pp + pm) * Complex(b), -gap);
      } else {
        const SparseMatrix xx = embed_sparse({{sl, pauli_x()}, {sm_label, pauli_x()}}, space);
        if (gap == 0.0) {
          h.add(xx * Complex(b), 0.0);
        } else {
          h.add(xx * Complex(0.5 * b), gap);
          h.add(xx * Complex(0.5 * b), -gap);
        }
      }
    }
  }
  return h;
}

inline TimeDependentOperator build_h_eff(const SystemParams& p, EffectiveOptions opt = {}) {
  return build_h_eff(p, driven_atoms(p), opt);
}

// H0 = sum_l 2 Omega_S sigma_z,l in the (+, -) basis, i.e. Omega_S X_l on the
// (g, s) qubits. For three-level atoms the X acts on the (g, s) block.
inline TimeDependentOperator build_h_drive(const HilbertSpace& space, double signed_omega_s) {
  TimeDependentOperator h(space);
  if (signed_omega_s == 0.0) return h;
  for (int l = 1; l <= kAtoms; ++l) {
    const auto site = atom_label(l);
    const int dim = space.factor(space.position(site)).dim;
    Matrix x = Matrix::Zero(dim, dim);
    x(kG, kS) = x(kS, kG) = 1.0;
    h.add(embed_sparse(x, site, space) * Complex(signed_omega_s), 0.0);
  }
  return h;
}

inline std::string describe(const SystemParams& p) {
  std::ostringstream os;
  os << "Omega=(";
  for (int l = 1; l <= kAtoms; ++l) os << p.drive(l).rabi << (l < kAtoms ? "," : ")");
  os << " Delta1=(";
  for (int l = 1; l <= kAtoms; ++l) os << p.drive(l).detuning1 << (l < kAtoms ? "," : ")");
  os << " Delta2=" << p.detuning2 << " Omega_S=" << p.omega_s << " N=" << p.fock_dim;
  return os.str();
}

}  // namespace chiforge
