#include <random>

#include <gtest/gtest.h>

#include "chiforge/evolve.hpp"
#include "chiforge/model.hpp"
#include "chiforge/protocol.hpp"
#include "oracles.hpp"

using namespace chiforge;

namespace {

SystemParams step1_params() {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{1.0, 10.0}, AtomDrive{0.725, 10.5}, AtomDrive{0.725, 10.5}};
  p.detuning2 = 11.0;
  p.omega_s = 10.0;
  p.fock_dim = 4;
  return p;
}

SystemParams random_params(std::mt19937& rng, int fock_dim = 3) {
  std::uniform_real_distribution<double> u(0.2, 1.5), d1(6.0, 12.0);
  SystemParams p;
  for (auto& d : p.drives) d = {u(rng), d1(rng)};
  p.detuning2 = 14.0;
  p.coupling = u(rng);
  p.omega_s = 3.0 * u(rng);
  p.fock_dim = fock_dim;
  return p;
}

// Hand-written (+, -) basis forms (index 0 = |+>) of the (g, s) operators.
oracle::M pm_gg() {
  oracle::M m(2, 2);
  m << 0.5, 0.5, 0.5, 0.5;
  return m;
}
oracle::M pm_ss() {
  oracle::M m(2, 2);
  m << 0.5, -0.5, -0.5, 0.5;
  return m;
}
oracle::M pm_splus() {  // |s><g|
  oracle::M m(2, 2);
  m << 0.5, 0.5, -0.5, -0.5;
  return m;
}

// Ground-manifold operator assembled directly in the (+, -) basis.
oracle::M ground_pm_oracle(const SystemParams& p, double t) {
  const auto d = derive_params(p);
  const int n = p.fock_dim;
  const std::vector<int> dims{2, 2, 2, 2, n};
  const oracle::M a = oracle::destroy(n);
  const oracle::M ad = a.adjoint();
  const oracle::M sp = pm_splus();
  const oracle::M sm = sp.adjoint();
  oracle::M h = oracle::M::Zero(16 * n, 16 * n);
  for (int l = 0; l < 4; ++l) {
    const int atom = l + 1;
    h -= d.eta_of(atom) * oracle::embed(dims, {{l, pm_gg()}});
    h -= d.xi * oracle::embed(dims, {{l, pm_ss()}, {4, ad * a}});
    const oracle::C ph = std::exp(-oracle::I * d.delta_of(atom) * t);
    h -= d.lambda_of(atom) * (ph * oracle::embed(dims, {{l, sp}, {4, ad}}) +
                              std::conj(ph) * oracle::embed(dims, {{l, sm}, {4, a}}));
    h += p.signed_omega_s() * oracle::embed(dims, {{l, sp + sm}});
  }
  return h;
}

oracle::M full_oracle(const SystemParams& p, double t) {
  const int n = p.fock_dim;
  const std::vector<int> dims{3, 3, 3, 3, n};
  const oracle::M a = oracle::destroy(n);
  oracle::M h = oracle::M::Zero(81 * n, 81 * n);
  for (int l = 0; l < 4; ++l) {
    const auto& drv = p.drive(l + 1);
    oracle::M term = drv.rabi * std::exp(oracle::I * drv.detuning1 * t) * oracle::embed(dims, {{l, oracle::ket_bra(3, 2, 0)}});
    term += p.coupling * std::exp(oracle::I * p.detuning2 * t) * oracle::embed(dims, {{l, oracle::ket_bra(3, 2, 1)}, {4, a}});
    term += p.signed_omega_s() * oracle::embed(dims, {{l, oracle::ket_bra(3, 1, 0)}});
    h += term + term.adjoint();
  }
  return h;
}

}  // namespace

// --- derived coefficients ---------------------------------------------------------

TEST(DeriveParams, DefaultPairCouplings) {
  const auto d = derive_params(step1_params());
  EXPECT_NEAR(d.beta_of(1, 2), 4.56e-3, 0.01 * 4.56e-3);
  EXPECT_NEAR(d.beta_of(3, 4), 4.56e-3, 0.01 * 4.56e-3);
  EXPECT_DOUBLE_EQ(d.beta_of(1, 2), d.beta_of(2, 1));
  EXPECT_DOUBLE_EQ(d.beta_of(1, 3), d.beta_of(3, 1));
}

TEST(DeriveParams, HandEvaluatedExample) {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 5.0}, AtomDrive{1.0, 5.0}, AtomDrive{}, AtomDrive{}};
  p.detuning2 = 6.0;
  const auto d = derive_params(p);
  const double lambda = 0.5 * (1.0 / 5.0 + 1.0 / 6.0);
  EXPECT_NEAR(d.lambda_of(1), 0.18333, 1e-5);
  EXPECT_NEAR(d.lambda_of(1), lambda, 1e-15);
  EXPECT_NEAR(d.delta_of(1), 1.0, 1e-15);
  EXPECT_NEAR(d.beta_of(1, 2), 1.681e-2, 1e-5);
  EXPECT_NEAR(d.beta_of(1, 2), lambda * lambda / 2.0, 1e-15);
  EXPECT_NEAR(d.eta_of(1), 0.2, 1e-15);
  EXPECT_NEAR(d.xi, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(d.alpha_of(1), lambda * lambda / 4.0, 1e-15);
}

TEST(DeriveParams, UndrivenAtomHasNoCoupling) {
  auto p = step1_params();
  p.drive(2).rabi = 0.0;
  const auto d = derive_params(p);
  EXPECT_EQ(d.lambda_of(2), 0.0);
  EXPECT_EQ(d.eta_of(2), 0.0);
  for (int m = 1; m <= 4; ++m) EXPECT_EQ(d.beta_of(2, m), 0.0);
}

TEST(DeriveParams, ResonantRamanIsAnError) {
  auto p = step1_params();
  p.drive(1).detuning1 = p.detuning2;
  EXPECT_THROW(derive_params(p), PhysicsError);
}

TEST(DeriveParams, InvalidInputsAreConfigErrors) {
  auto p = step1_params();
  p.fock_dim = 1;
  EXPECT_THROW(derive_params(p), ConfigError);
  p = step1_params();
  p.detuning2 = 0.0;
  EXPECT_THROW(derive_params(p), ConfigError);
  p = step1_params();
  p.drive(3).rabi = -1.0;
  EXPECT_THROW(derive_params(p), ConfigError);
}

TEST(DeriveParams, HomogeneousOfDegreeOne) {
  std::mt19937 rng(11);
  for (double k : {0.5, 2.0, 7.3}) {
    const auto p = random_params(rng);
    const auto a = derive_params(p), b = derive_params(p.scaled(k));
    EXPECT_NEAR(b.xi, k * a.xi, 1e-12 * k);
    for (int l = 1; l <= 4; ++l) {
      EXPECT_NEAR(b.eta_of(l), k * a.eta_of(l), 1e-12 * k);
      EXPECT_NEAR(b.lambda_of(l), k * a.lambda_of(l), 1e-12 * k);
      EXPECT_NEAR(b.delta_of(l), k * a.delta_of(l), 1e-12 * k);
      EXPECT_NEAR(b.alpha_of(l), k * a.alpha_of(l), 1e-10 * k);
      for (int m = 1; m <= 4; ++m) EXPECT_NEAR(b.beta_of(l, m), k * a.beta_of(l, m), 1e-10 * k);
    }
  }
}

// --- regime ---------------------------------------------------------------------------

TEST(Regime, DefaultParametersPass) {
  auto p = step1_params();
  p.omega_s = choose_omega_s(10.0, kPi / (4.0 * derive_params(p).beta_of(1, 2)));
  const auto r = validate_regime(p, 5.0);
  EXPECT_TRUE(r.pass());
  for (const auto& c : r.checks) {
    EXPECT_EQ(c.pass, c.ratio >= 5.0);
    if (c.condition == "Delta1_1 >> Omega_1") {
      EXPECT_NEAR(c.ratio, 10.0, 1e-12);
    }
    if (c.condition == "Delta2 >> g") {
      EXPECT_NEAR(c.ratio, 11.0, 1e-12);
    }
  }
}

TEST(Regime, RabiEqualToDetuningFails) {
  auto p = step1_params();
  p.drive(1).rabi = p.drive(1).detuning1;
  const auto r = validate_regime(p);
  EXPECT_FALSE(r.pass());
  bool seen = false;
  for (const auto& c : r.checks) {
    if (c.condition == "Delta1_1 >> Omega_1") {
      seen = true;
      EXPECT_NEAR(c.ratio, 1.0, 1e-15);
      EXPECT_FALSE(c.pass);
    }
  }
  EXPECT_TRUE(seen);
}

TEST(Regime, NoDriveFailsEveryOmegaSCondition) {
  auto p = step1_params();
  p.omega_s = 0.0;
  int count = 0;
  for (const auto& c : validate_regime(p).checks) {
    if (c.condition.rfind("2 Omega_S", 0) == 0) {
      ++count;
      EXPECT_FALSE(c.pass) << c.condition;
    }
  }
  EXPECT_EQ(count, 13);
}

TEST(Regime, HugeThresholdFailsEverything) {
  for (const auto& c : validate_regime(step1_params(), 1000.0).checks) EXPECT_FALSE(c.pass) << c.condition;
}

// --- full model -------------------------------------------------------------------------

TEST(FullHamiltonian, MatchesBruteForceAssembly) {
  std::mt19937 rng(12);
  auto p = random_params(rng, 2);
  const auto h = build_h_full(p);
  for (double t : {0.0, 0.37, 5.1}) {
    const Matrix ref = full_oracle(p, t);
    EXPECT_LT(max_abs(h.eval(t).matrix() - ref), 1e-12) << "t = " << t;
  }
}

TEST(FullHamiltonian, BasisActionAtTimeZero) {
  SystemParams p;
  p.drives = {AtomDrive{0.3, 4.0}, AtomDrive{}, AtomDrive{}, AtomDrive{}};
  p.omega_s = 0.7;
  p.fock_dim = 2;
  const auto h = build_h_full(p);
  const auto& s = h.space();
  const auto out = h.eval(0.0) * StateVector::basis(s, {kG, kG, kG, kG, 0});
  EXPECT_NEAR(std::abs(out[s.index({kR, kG, kG, kG, 0})] - Complex(0.3)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(out[s.index({kS, kG, kG, kG, 0})] - Complex(0.7)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(out[s.index({kG, kS, kG, kG, 0})] - Complex(0.7)), 0.0, 1e-15);
}

TEST(FullHamiltonian, CavityMatrixElement) {
  SystemParams p;
  p.fock_dim = 3;
  p.detuning2 = 2.5;
  const auto h = build_h_full(p);
  const auto& s = h.space();
  for (double t : {0.0, 0.4, 1.3}) {
    const Complex el = h.eval(t).matrix()(static_cast<Eigen::Index>(s.index({kR, kG, kG, kG, 0})),
                                          static_cast<Eigen::Index>(s.index({kS, kG, kG, kG, 1})));
    EXPECT_NEAR(std::abs(el - std::exp(kI * 2.5 * t)), 0.0, 1e-14);
  }
}

// --- ground manifold ------------------------------------------------------------------------

TEST(GroundHamiltonian, DriveOnlyIsPlusOmegaSigmaX) {
  SystemParams p;
  p.coupling = 1e-300;  // xi and lambda vanish
  p.omega_s = 1.3;
  p.fock_dim = 2;
  const auto h = build_h_ground(p);
  const auto& s = h.space();
  Matrix ref = Matrix::Zero(32, 32);
  for (int l = 1; l <= 4; ++l) ref += 1.3 * tensor_embed(pauli_x(), atom_label(l), s).matrix();
  EXPECT_LT(max_abs(h.eval(0.7).matrix() - ref), 1e-14);
}

TEST(GroundHamiltonian, PhotonExchangeElement) {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{}, AtomDrive{}, AtomDrive{}};
  p.detuning2 = 11.0;
  p.fock_dim = 4;
  const auto d = derive_params(p);
  const auto h = build_h_ground(p);
  const auto& s = h.space();
  for (int n = 1; n < 4; ++n) {
    for (double t : {0.0, 2.0 * kPi / d.delta_of(1), 0.3}) {
      const Complex el = h.eval(t).matrix()(static_cast<Eigen::Index>(s.index({kS, kG, kG, kG, n})),
                                            static_cast<Eigen::Index>(s.index({kG, kG, kG, kG, n - 1})));
      const Complex expect = -d.lambda_of(1) * std::sqrt(static_cast<double>(n)) * std::exp(-kI * d.delta_of(1) * t);
      EXPECT_NEAR(std::abs(el - expect), 0.0, 1e-14);
    }
    // The opposite ordering (s with one photon fewer) is not coupled.
    const Complex none = h.eval(0.0).matrix()(static_cast<Eigen::Index>(s.index({kS, kG, kG, kG, n - 1})),
                                              static_cast<Eigen::Index>(s.index({kG, kG, kG, kG, n})));
    EXPECT_EQ(none, Complex(0.0));
  }
}

TEST(GroundHamiltonian, AgreesWithFullModelOverShortTimes) {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 20.0}, AtomDrive{1.0, 20.0}, AtomDrive{0.8, 21.0}, AtomDrive{0.8, 21.0}};
  p.detuning2 = 22.0;
  p.omega_s = 0.4;
  p.fock_dim = 3;
  const auto r = validate_regime(p, 10.0);
  for (const auto& c : r.checks) {
    if (c.condition.rfind("Delta", 0) == 0) {
      EXPECT_TRUE(c.pass) << c.condition;
    }
  }
  IntegratorOptions opt;
  opt.steps_per_period = 100;
  const auto full_space = HilbertSpace::uniform(4, 3, 3);
  const auto ground_space = HilbertSpace::uniform(4, 2, 3);
  const double t = 15.0;
  const auto full = integrate_unitary(build_h_full(p), StateVector::basis(full_space, {0, 0, 0, 0, 0}), 0.0, t, opt);
  const auto ground =
      integrate_unitary(build_h_ground(p), StateVector::basis(ground_space, {0, 0, 0, 0, 0}), 0.0, t, opt);
  // Restrict the full state to levels g, s.
  Vector v = Vector::Zero(static_cast<Eigen::Index>(ground_space.dimension()));
  for (std::size_t i = 0; i < ground_space.dimension(); ++i) {
    v(static_cast<Eigen::Index>(i)) = full.state[full_space.index(ground_space.digits(i))];
  }
  const StateVector projected = StateVector(ground_space, v).normalized();
  EXPECT_GE(fidelity(projected, ground.state), 0.999);
}

TEST(PmBasis, SigmaXBecomesSigmaZ) {
  const HilbertSpace q({{"1", 2}});
  const auto z = to_pm_basis(Operator(q, pauli_x()));
  EXPECT_LT(max_abs(z.matrix() - pauli_z()), 1e-15);
  const auto zz = to_pm_basis(Operator(q, ket_bra(2, kS, kG) + ket_bra(2, kG, kS)));
  EXPECT_LT(max_abs(zz.matrix() - (ket_bra(2, 0, 0) - ket_bra(2, 1, 1))), 1e-15);
}

TEST(PmBasis, GroundOperatorMatchesHandAssembly) {
  std::mt19937 rng(13);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = random_params(rng, 3);
    const auto h = to_pm_basis(build_h_ground(p));
    std::uniform_real_distribution<double> ut(0.0, 10.0);
    const double t = ut(rng);
    EXPECT_LT(max_abs(h.eval(t).matrix() - ground_pm_oracle(p, t)), 1e-12);
  }
}

TEST(PmBasis, ConjugationPreservesSpectrum) {
  std::mt19937 rng(14);
  const auto p = random_params(rng, 2);
  const auto h = build_h_ground(p).eval(1.3);
  const auto hp = to_pm_basis(h);
  Eigen::SelfAdjointEigenSolver<Matrix> a(h.matrix()), b(hp.matrix());
  EXPECT_LT((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
}

// --- reduced ------------------------------------------------------------------------------------

TEST(ReducedHamiltonian, SingleAtomMatrixElement) {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{}, AtomDrive{}, AtomDrive{}};
  p.detuning2 = 11.0;
  p.fock_dim = 3;
  const auto d = derive_params(p);
  const auto h = build_h_reduced(p);
  const auto& s = h.space();
  for (double t : {0.0, 0.9, 4.4}) {
    const Complex el = h.eval(t).matrix()(static_cast<Eigen::Index>(s.index({kS, kG, kG, kG, 0})),
                                          static_cast<Eigen::Index>(s.index({kG, kG, kG, kG, 1})));
    EXPECT_NEAR(std::abs(el + 0.5 * d.lambda_of(1) * std::exp(kI * d.delta_of(1) * t)), 0.0, 1e-14);
  }
}

TEST(ReducedHamiltonian, NoCouplingGivesZeroOperator) {
  SystemParams p;
  p.fock_dim = 2;
  EXPECT_LT(max_abs(build_h_reduced(p).eval(0.3).matrix()), 1e-300);
  EXPECT_TRUE(build_h_reduced(p).terms().empty());
}

TEST(ReducedHamiltonian, PeriodAverageVanishes) {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{1.0, 10.0}, AtomDrive{}, AtomDrive{}};
  p.detuning2 = 11.0;
  p.fock_dim = 3;
  const auto h = build_h_reduced(p);
  const double period = 2.0 * kPi / derive_params(p).delta_of(1);
  // Composite Simpson rule over one period.
  const int n = 400;
  Matrix sum = h.eval(0.0).matrix() + h.eval(period).matrix();
  for (int k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) * h.eval(period * k / n).matrix();
  EXPECT_LT(max_abs(sum / (3.0 * n)), 1e-10);
}

TEST(ReducedHamiltonian, CavityShiftTermIsDiagonal) {
  auto p = step1_params();
  p.fock_dim = 3;
  const auto d = derive_params(p);
  const Matrix diff = build_h_reduced(p, true).eval(0.2).matrix() - build_h_reduced(p, false).eval(0.2).matrix();
  const auto s = build_h_reduced(p).space();
  for (std::size_t i = 0; i < s.dimension(); ++i) {
    const int n = s.digits(i).back();
    EXPECT_NEAR(diff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real(), -2.0 * d.xi * n, 1e-14);
  }
  EXPECT_LT(max_abs(diff - Matrix(diff.diagonal().asDiagonal())), 1e-15);
}

// --- effective ------------------------------------------------------------------------------------

TEST(EffectiveHamiltonian, DefaultStepOnePairs) {
  const auto p = step1_params();
  const auto pairs = retained_pairs(p, {1, 2, 3, 4});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], (AtomPair{1, 2}));
  EXPECT_EQ(pairs[1], (AtomPair{3, 4}));
  const auto d = derive_params(p);
  const auto h = build_h_eff(p);
  const auto& s = h.space();
  Matrix ref = Matrix::Zero(16, 16);
  for (int l = 1; l <= 4; ++l) ref += d.alpha_of(l) * Matrix::Identity(16, 16);
  ref += d.beta_of(1, 2) * tensor_embed({{"1", pauli_x()}, {"2", pauli_x()}}, s).matrix();
  ref += d.beta_of(3, 4) * tensor_embed({{"3", pauli_x()}, {"4", pauli_x()}}, s).matrix();
  EXPECT_LT(max_abs(h.eval(3.0).matrix() - ref), 1e-15);
  EXPECT_EQ(h.max_frequency(), 0.0);
}

TEST(EffectiveHamiltonian, SingleActiveAtomIsEnergyShift) {
  const auto p = step1_params();
  const auto h = build_h_eff(p, {3});
  EXPECT_LT(max_abs(h.eval(0.0).matrix() - derive_params(p).alpha_of(3) * Matrix::Identity(16, 16)), 1e-15);
}

TEST(EffectiveHamiltonian, IdenticalPairMatchesKroneckerOracle) {
  SystemParams p;
  p.drives = {AtomDrive{1.0, 10.0}, AtomDrive{1.0, 10.0}, AtomDrive{}, AtomDrive{}};
  p.detuning2 = 11.0;
  const auto d = derive_params(p);
  const oracle::M ref = d.alpha_of(1) * oracle::embed({2, 2, 2, 2}, {}) * 2.0 +
                        d.beta_of(1, 2) * oracle::embed({2, 2, 2, 2}, {{0, oracle::sx()}, {1, oracle::sx()}});
  for (auto phase : {PairPhase::AsPrinted, PairPhase::SecondOrder}) {
    EXPECT_LT(max_abs(build_h_eff(p, {1, 2}, {phase, false}).eval(1.0).matrix() - ref), 1e-15);
  }
}

TEST(EffectiveHamiltonian, CommutesWithPairSwap) {
  SystemParams p;
  p.drives = {AtomDrive{0.9, 9.0}, AtomDrive{0.9, 9.0}, AtomDrive{}, AtomDrive{}};
  p.detuning2 = 10.0;
  const Matrix h = build_h_eff(p).eval(0.0).matrix();
  Matrix swap = Matrix::Zero(16, 16);
  const auto s = HilbertSpace::qubits(4);
  for (std::size_t i = 0; i < 16; ++i) {
    auto dg = s.digits(i);
    std::swap(dg[0], dg[1]);
    swap(static_cast<Eigen::Index>(s.index(dg)), static_cast<Eigen::Index>(i)) = 1.0;
  }
  EXPECT_LT(max_abs(swap * h - h * swap), 1e-15);
}

TEST(EffectiveHamiltonian, ActiveAtomMustBeDriven) {
  auto p = step1_params();
  p.drive(4).rabi = 0.0;
  EXPECT_THROW(build_h_eff(p, {4}), std::invalid_argument);
}

TEST(Builders, HermitianAtSampledTimes) {
  std::mt19937 rng(15);
  const auto p = random_params(rng, 3);
  std::vector<TimeDependentOperator> hs = {build_h_full(p), build_h_ground(p), build_h_reduced(p),
                                           build_h_reduced(p, true), to_pm_basis(build_h_ground(p))};
  EffectiveOptions all{PairPhase::AsPrinted, true};
  hs.push_back(build_h_eff(p, all));
  all.phase = PairPhase::SecondOrder;
  hs.push_back(build_h_eff(p, all));
  hs.push_back(build_h_drive(HilbertSpace::uniform(4, 3, 2), 0.8));
  for (const auto& h : hs) {
    for (double t : {0.0, 0.31, 2.7, 41.0}) EXPECT_LT(h.eval(t).hermiticity_defect(), 1e-12);
  }
}

TEST(TimeDependentOperator, NormBoundDominatesSpectralNorm) {
  std::mt19937 rng(16);
  const auto p = random_params(rng, 2);
  const auto h = build_h_full(p);
  for (double t : {0.0, 1.0, 2.5}) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h.eval(t).matrix(), Eigen::EigenvaluesOnly);
    EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), h.norm_bound() + 1e-12);
  }
  EXPECT_DOUBLE_EQ(h.max_frequency(), std::max(p.detuning2, std::max({p.drive(1).detuning1, p.drive(2).detuning1,
                                                                       p.drive(3).detuning1, p.drive(4).detuning1})));
}
