#include <random>

#include <gtest/gtest.h>

#include "chiforge/io.hpp"
#include "chiforge/protocol.hpp"
#include "oracles.hpp"

using namespace chiforge;

namespace {

SystemParams defaults() { return default_config().system(); }

StateVector gggg() { return StateVector::basis(HilbertSpace::qubits(4), {0, 0, 0, 0}); }

}  // namespace

TEST(ChiTarget, EightEqualWeightAmplitudes) {
  const auto chi = chi_target();
  EXPECT_NEAR(chi.norm(), 1.0, 1e-15);
  int nonzero = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    if (std::abs(chi[i]) > 1e-12) {
      ++nonzero;
      EXPECT_NEAR(std::abs(chi[i]), 1.0 / (2.0 * std::sqrt(2.0)), 1e-15);
    }
  }
  EXPECT_EQ(nonzero, 8);
}

TEST(ChiTarget, BinarySignPatternInReportingOrder) {
  const Vector v = amplitudes_in_order(chi_target(), kReportOrder);
  const double a = 1.0 / (2.0 * std::sqrt(2.0));
  const std::vector<std::pair<int, double>> expected = {{0b0000, a},  {0b0011, -a}, {0b0101, -a}, {0b0110, a},
                                                        {0b1001, a},  {0b1010, a},  {0b1100, a},  {0b1111, a}};
  double total = 0.0;
  for (const auto& [idx, val] : expected) {
    EXPECT_NEAR(std::abs(v(idx) - Complex(val)), 0.0, 1e-15) << idx;
    total += std::norm(v(idx));
  }
  EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(ChiTarget, PermutationRoundTrip) {
  std::mt19937 rng(41);
  const StateVector psi(HilbertSpace::qubits(4), oracle::random_state(16, rng));
  // 3,2,1,4 swaps atoms 1 and 3, so applying it twice is the identity.
  const Vector once = amplitudes_in_order(psi, kReportOrder);
  const Vector twice = amplitudes_in_order(StateVector(HilbertSpace::qubits(4), once), kReportOrder);
  EXPECT_LT((twice - psi.amplitudes()).norm(), 1e-15);
  EXPECT_LT((amplitudes_in_order(psi, kPhysicalOrder) - psi.amplitudes()).norm(), 1e-15);
}

TEST(ChiTarget, MaximallyMixedPairs) {
  const auto chi = chi_target();
  const oracle::V v = chi.amplitudes();
  // Pair (3,2) = positions {2,1}; (3,1) = {2,0}.
  for (const std::vector<int>& keep : {std::vector<int>{1, 2}, {0, 2}}) {
    const oracle::M rho = oracle::reduced_qubits(v, 4, keep);
    EXPECT_LT((rho - 0.25 * oracle::M::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(oracle::entropy_bits(rho), 2.0, 1e-9);
  }
}

TEST(Intermediates, FirstStepState) {
  const auto s1 = intermediate_after_step1();
  int nonzero = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    if (std::abs(s1[i]) > 1e-12) {
      ++nonzero;
      EXPECT_NEAR(std::abs(s1[i]), 0.5, 1e-15);
    }
  }
  EXPECT_EQ(nonzero, 4);
  const oracle::M rho = oracle::reduced_qubits(s1.amplitudes(), 4, {0, 1});
  // Atoms 1 and 2 form the pure pair (|gg> - i|ss>)/sqrt(2).
  oracle::M expect = oracle::M::Zero(4, 4);
  expect(0, 0) = expect(3, 3) = 0.5;
  expect(0, 3) = Complex(0.0, 0.5);
  expect(3, 0) = Complex(0.0, -0.5);
  EXPECT_LT((rho - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Intermediates, SecondStepSignsEmergeFromDynamics) {
  const auto proto = chi_protocol(equalize_pair_coupling(defaults()));
  const auto step2 = analytic_step(proto.step_params(1));
  const auto after = evolve_step_analytic(step2, proto.steps[1].duration, intermediate_after_step1());
  EXPECT_NEAR(fidelity(after, intermediate_after_step2()), 1.0, 1e-12);
  // The numeric effective engine agrees.
  auto h = build_h_eff(proto.step_params(1));
  h += build_h_drive(HilbertSpace::qubits(4), proto.base.signed_omega_s());
  IntegratorOptions o;
  o.steps_per_period = 600;
  const auto num = integrate_unitary(h, intermediate_after_step1(), 0.0, proto.steps[1].duration, o);
  EXPECT_GE(fidelity(num.state, intermediate_after_step2()), 1.0 - 1e-8);
}

TEST(Intermediates, LocalPhaseGateMapsToTarget) {
  const auto qs = HilbertSpace::qubits(4);
  StateVector psi = intermediate_after_step2();
  for (int atom : {1, 3}) psi = tensor_embed(phase_gate(), atom_label(atom), qs) * psi;
  EXPECT_NEAR(fidelity(psi, chi_target()), 1.0, 1e-14);
}

TEST(ChooseOmegaS, RoundsToWholeHalfTurns) {
  const double t1 = 172.25;
  const double w = choose_omega_s(10.0, t1);
  EXPECT_NEAR(w * t1 / kPi, 548.0, 1e-9);
  EXPECT_NEAR(w, 548.0 * kPi / t1, 1e-12);
  EXPECT_NEAR(w, 9.995, 5e-4);
  EXPECT_DOUBLE_EQ(choose_omega_s(kPi / t1, t1), kPi / t1);
  EXPECT_THROW(choose_omega_s(0.001, t1), PhysicsError);
  EXPECT_THROW(choose_omega_s(-1.0, t1), ConfigError);
}

TEST(ChiProtocol, DefaultDurations) {
  const auto proto = chi_protocol(defaults());
  ASSERT_EQ(proto.steps.size(), 2u);
  EXPECT_NEAR(proto.steps[0].duration, 172.0, 0.01 * 172.0);
  EXPECT_NEAR(proto.steps[1].duration, 172.0, 0.01 * 172.0);
  const double turns = proto.base.omega_s * proto.steps[0].duration / kPi;
  EXPECT_NEAR(turns, std::round(turns), 1e-9);
  EXPECT_EQ(proto.post_unitaries.size(), 2u);
  EXPECT_TRUE(proto.warnings.empty());
  const auto d = derive_params(defaults());
  EXPECT_LT(std::abs(d.beta_of(1, 2) - d.beta_of(3, 4)) / d.beta_of(1, 2), 1e-3);
}

TEST(ChiProtocol, DoublingBetaHalvesDuration) {
  auto p = defaults();
  const double t = chi_protocol(p).steps[0].duration;
  // beta is quadratic in the Rabi frequencies.
  for (auto& d : p.drives) d.rabi *= std::sqrt(2.0);
  EXPECT_NEAR(chi_protocol(p).steps[0].duration, t / 2.0, 1e-9 * t);
}

TEST(ChiProtocol, BetaMismatchIsPhysicsError) {
  auto p = defaults();
  p.drive(3).rabi = p.drive(4).rabi = 0.5;
  try {
    chi_protocol(p);
    FAIL() << "expected PhysicsError";
  } catch (const PhysicsError& e) {
    EXPECT_NE(std::string(e.what()).find("beta_34"), std::string::npos);
  }
}

TEST(ChiProtocol, CrossCoupledPairsRejected) {
  auto p = defaults();
  for (auto& d : p.drives) d = {1.0, 10.0};
  EXPECT_THROW(chi_protocol(p), PhysicsError);
}

TEST(EqualizePairCoupling, MakesBetasEqual) {
  const auto d = derive_params(equalize_pair_coupling(defaults()));
  EXPECT_NEAR(d.beta_of(3, 4), d.beta_of(1, 2), 1e-15);
}

TEST(RunProtocol, AnalyticReachesTarget) {
  const auto proto = chi_protocol(equalize_pair_coupling(defaults()));
  const auto run = run_protocol(proto, gggg(), Engine::Analytic);
  EXPECT_GE(fidelity(run.state, chi_target()), 1.0 - 1e-10);
  ASSERT_EQ(run.after_step.size(), 2u);
  EXPECT_GE(fidelity(run.after_step[0], intermediate_after_step1()), 1.0 - 1e-10);
  EXPECT_GE(fidelity(run.after_step[1], intermediate_after_step2()), 1.0 - 1e-10);
}

TEST(RunProtocol, DefaultParametersLimitedByBetaMismatch) {
  const auto proto = chi_protocol(defaults());
  const double f = fidelity(run_protocol(proto, gggg(), Engine::Analytic).state, chi_target());
  const auto d = derive_params(defaults());
  // Only the (3,4) angle is off: F = cos^2 of the angle error.
  const double err = (d.beta_of(3, 4) / d.beta_of(1, 2) - 1.0) * kPi / 4.0;
  EXPECT_NEAR(f, std::pow(std::cos(err), 2), 1e-12);
}

TEST(RunProtocol, ZeroDrivesLeaveGroundState) {
  auto p = defaults();
  for (auto& d : p.drives) d = {};
  p.omega_s = kPi / 10.0;  // a whole half turn over the step
  const auto proto = single_step_protocol(p, 10.0);
  const auto run = run_protocol(proto, gggg(), Engine::Analytic);
  EXPECT_NEAR(fidelity(run.state, gggg()), 1.0, 1e-12);
}

TEST(RunProtocol, EffectiveNumericMatchesAnalyticOnRandomStates) {
  std::mt19937 rng(42);
  const auto proto = chi_protocol(defaults());
  RunOptions opt;
  opt.steps_per_period = 600;
  for (const TimingError& err : {TimingError{}, TimingError{0.03, -0.02, ErrorModel::BetaOnly},
                                 TimingError{-0.01, 0.02, ErrorModel::FullPhase}}) {
    const StateVector psi0(HilbertSpace::qubits(4), oracle::random_state(16, rng));
    const auto a = run_protocol(proto, psi0, Engine::Analytic, err);
    const auto n = run_protocol(proto, psi0, Engine::EffectiveNumeric, err, opt);
    EXPECT_GE(fidelity(a.state, n.state), 1.0 - 1e-8);
    EXPECT_LE(n.norm_drift, 1e-8);
  }
}

TEST(RunProtocol, BetaOnlyGridIsSmoothWithPeakAtOrigin) {
  const auto proto = chi_protocol(equalize_pair_coupling(defaults()));
  const auto f = [&](double n1, double n2) {
    return fidelity(run_protocol(proto, gggg(), Engine::Analytic, {n1, n2, ErrorModel::BetaOnly}).state, chi_target());
  };
  EXPECT_NEAR(f(0, 0), 1.0, 1e-10);
  for (double n1 = -0.1; n1 <= 0.1001; n1 += 0.025) {
    for (double n2 = -0.1; n2 <= 0.1001; n2 += 0.025) {
      const auto run = run_protocol(proto, gggg(), Engine::Analytic, {n1, n2, ErrorModel::BetaOnly});
      EXPECT_NEAR(run.state.norm(), 1.0, 1e-12);
      EXPECT_LE(f(n1, n2), 1.0 + 1e-12);
      // Small steps change F by a small amount.
      EXPECT_NEAR(f(n1, n2), f(n1 + 1e-4, n2), 1e-3);
    }
  }
}

TEST(RunProtocol, TimingErrorBounds) {
  const auto proto = chi_protocol(defaults());
  EXPECT_THROW(run_protocol(proto, gggg(), Engine::Analytic, {1.0, 0.0}), ConfigError);
}

TEST(RunProtocol, WrongInitialSpaceRejected) {
  const auto proto = chi_protocol(defaults());
  EXPECT_THROW(run_protocol(proto, StateVector::basis(HilbertSpace::qubits(3), {0, 0, 0}), Engine::Analytic),
               std::invalid_argument);
}

TEST(EngineNames, RoundTrip) {
  for (Engine e : {Engine::Analytic, Engine::EffectiveNumeric, Engine::ReducedNumeric, Engine::GroundNumeric,
                   Engine::FullNumeric}) {
    EXPECT_EQ(parse_engine(to_string(e)), e);
  }
  for (ErrorModel m : {ErrorModel::BetaOnly, ErrorModel::FullPhase}) EXPECT_EQ(parse_error_model(to_string(m)), m);
  EXPECT_THROW(parse_engine("warp"), ConfigError);
  EXPECT_THROW(parse_error_model("none"), ConfigError);
}

TEST(ProtocolJson, RoundTrip) {
  const auto proto = chi_protocol(defaults());
  const auto back = protocol_from_json(json::parse(protocol_to_json(proto).dump()));
  ASSERT_EQ(back.steps.size(), proto.steps.size());
  for (std::size_t i = 0; i < proto.steps.size(); ++i) {
    EXPECT_EQ(back.steps[i].duration, proto.steps[i].duration);
    EXPECT_EQ(back.steps[i].drives, proto.steps[i].drives);
    EXPECT_EQ(back.steps[i].expected_pairs, proto.steps[i].expected_pairs);
  }
  EXPECT_EQ(back.base.omega_s, proto.base.omega_s);
  EXPECT_EQ(back.post_unitaries.size(), 2u);
  EXPECT_LT(max_abs(back.post_unitaries[0].unitary - phase_gate()), 1e-300);
  EXPECT_LT((back.target.amplitudes() - proto.target.amplitudes()).norm(), 1e-300);
  const auto a = run_protocol(proto, gggg(), Engine::Analytic);
  const auto b = run_protocol(back, gggg(), Engine::Analytic);
  EXPECT_EQ(fidelity(a.state, proto.target), fidelity(b.state, back.target));
}

TEST(ProtocolJson, MalformedInputIsConfigError) {
  EXPECT_THROW(protocol_from_json(json::parse("{}")), ConfigError);
  auto j = protocol_to_json(chi_protocol(defaults()));
  j["post_unitaries"][0]["atom"] = 7;
  EXPECT_THROW(protocol_from_json(j), ConfigError);
}

TEST(RunProtocol, DriveSignDoesNotChangeFidelity) {
  auto p = equalize_pair_coupling(defaults());
  const auto psi0 = StateVector::basis(HilbertSpace::qubits(4), {0, 0, 0, 0});
  RunOptions ro;
  ro.strict_projection = false;
  for (Engine e : {Engine::Analytic, Engine::ReducedNumeric}) {
    p.drive_sign = 1;
    const auto plus = chi_protocol(p);
    p.drive_sign = -1;
    const auto minus = chi_protocol(p);
    const double fp = fidelity(plus.target, run_protocol(plus, psi0, e, {}, ro).state);
    const double fm = fidelity(minus.target, run_protocol(minus, psi0, e, {}, ro).state);
    EXPECT_NEAR(fp, fm, 1e-9) << to_string(e);
  }
}
