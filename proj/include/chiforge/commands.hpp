#pragma once

// Subcommands behind the chiforge executable. Each returns a process exit
// code; exceptions are mapped by run_guarded().

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>

#include "chiforge/analysis.hpp"
#include "chiforge/io.hpp"
#include "chiforge/protocol.hpp"

namespace chiforge {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitConfig = 2, kExitPhysics = 3 };

inline constexpr double kReferenceSweepPoint = 0.02;
inline constexpr double kReferenceSweepFidelity = 0.96;

struct CommandContext {
  RunConfig config = default_config();
  unsigned jobs = 1;
  std::ostream* out = nullptr;  // human-readable summary; may be null

  std::ostream& log() const {
    static std::ostream null_stream(nullptr);
    return out ? *out : null_stream;
  }
};

// Output directory: $CHI_FORGE_OUT, else the configured one.
inline std::filesystem::path resolve_output_dir(const RunConfig& c) {
  if (const char* env = std::getenv("CHI_FORGE_OUT"); env && *env) return env;
  return c.output_dir;
}

inline std::filesystem::path prepare_output_dir(const RunConfig& c) {
  const auto dir = resolve_output_dir(c);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("output directory '" + dir.string() + "' is not writable: " + ec.message());
  }
  const auto probe = dir / ".chiforge_write_test";
  {
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory '" + dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
  return dir;
}

inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PhysicsError& e) {
    err << "physics error: " << e.what() << "\n";
    return kExitPhysics;
  } catch (const NumericsError& e) {
    err << "physics error (numerics): " << e.what() << "\n";
    return kExitPhysics;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

namespace detail {

inline RunOptions run_options(const RunConfig& c) {
  RunOptions o;
  o.steps_per_period = c.steps_per_period;
  return o;
}

inline StateVector ground_state() { return StateVector::basis(HilbertSpace::qubits(kAtoms), {kG, kG, kG, kG}); }

inline json run_json(const RunConfig& c, const Protocol& proto, const ProtocolRun& run) {
  json steps = json::array();
  const std::vector<StateVector> reference = {intermediate_after_step1(), intermediate_after_step2()};
  for (std::size_t i = 0; i < run.after_step.size(); ++i) {
    json s = {{"step", i + 1}, {"duration", proto.steps[i].duration}};
    if (i < reference.size()) s["fidelity_to_reference"] = fidelity(reference[i], run.after_step[i]);
    steps.push_back(s);
  }
  return {{"engine", to_string(c.engine)},
          {"error_model", to_string(c.error_model)},
          {"timing_error", {{"n1", c.n1}, {"n2", c.n2}}},
          {"params", to_json(proto.base)},
          {"protocol", protocol_to_json(proto)},
          {"fidelity", fidelity(proto.target, run.state)},
          {"steps", steps},
          {"projection_weight", run.projection_weight},
          {"vacuum_weight", run.vacuum_weight},
          {"max_leakage", run.max_leakage},
          {"norm_drift", run.norm_drift},
          {"integrator_steps", run.integrator_steps},
          {"final_state", {amplitudes_to_json(run.state, kReportOrder), amplitudes_to_json(run.state, kPhysicalOrder)}},
          {"entanglement", to_json(entanglement_diagnostics(run.state))},
          {"regime", to_json(validate_regime(proto.step_params(0), c.regime_threshold))}};
}

}  // namespace detail

inline int cmd_run(const CommandContext& ctx) {
  const auto& c = ctx.config;
  c.validate();
  const auto proto = chi_protocol(c.system());
  const auto dir = prepare_output_dir(c);
  const auto run = run_protocol(proto, detail::ground_state(), c.engine, TimingError{c.n1, c.n2, c.error_model},
                                detail::run_options(c));
  const double f = fidelity(proto.target, run.state);
  write_file((dir / "run.json").string(), dump(detail::run_json(c, proto, run)));
  auto& log = ctx.log();
  for (const auto& w : proto.warnings) log << "warning: " << w << "\n";
  log << "engine " << to_string(c.engine) << "  Omega_S " << std::setprecision(10) << proto.base.omega_s << "  t1 "
      << proto.steps[0].duration << "  t2 " << proto.steps[1].duration << "\n";
  log << "fidelity " << std::fixed << std::setprecision(6) << f << std::defaultfloat << "\n";
  return kExitOk;
}

inline int cmd_sweep(const CommandContext& ctx) {
  const auto& c = ctx.config;
  c.validate();
  const auto proto = chi_protocol(c.system());
  const auto dir = prepare_output_dir(c);
  const auto n1 = c.sweep_n1.values(), n2 = c.sweep_n2.values();
  const auto opt = detail::run_options(c);

  // The configured model first, then the other one for comparison.
  const ErrorModel other = c.error_model == ErrorModel::BetaOnly ? ErrorModel::FullPhase : ErrorModel::BetaOnly;
  std::vector<SweepGrid> grids;
  for (ErrorModel m : {c.error_model, other}) {
    grids.push_back(timing_error_sweep(proto, n1, n2, m, c.engine, ctx.jobs, opt));
  }
  // sweep.csv holds the configured model; the comparison model gets its own file.
  write_file((dir / "sweep.csv").string(), sweep_csv({grids[0]}));
  write_file((dir / ("sweep_" + to_string(other) + ".csv")).string(), sweep_csv({grids[1]}));

  json models = json::array();
  for (const auto& g : grids) {
    const auto at = run_protocol(proto, detail::ground_state(), c.engine,
                                 TimingError{kReferenceSweepPoint, kReferenceSweepPoint, g.model}, opt);
    const double f_ref = fidelity(proto.target, at.state);
    const auto origin = run_protocol(proto, detail::ground_state(), c.engine, TimingError{0.0, 0.0, g.model}, opt);
    double lo = 1.0, hi = 0.0;
    for (const auto& row : g.fidelities) {
      for (double f : row) {
        lo = std::min(lo, f);
        hi = std::max(hi, f);
      }
    }
    models.push_back({{"model", to_string(g.model)},
                      {"fidelity_origin", fidelity(proto.target, origin.state)},
                      {"fidelity_at_0.02_0.02", f_ref},
                      {"reference_value_at_0.02_0.02", kReferenceSweepFidelity},
                      {"difference_from_reference", f_ref - kReferenceSweepFidelity},
                      {"min", lo},
                      {"max", hi}});
  }
  const json summary = {
      {"engine", to_string(c.engine)},
      {"omega_s", proto.base.omega_s},
      {"n1", {{"lo", c.sweep_n1.lo}, {"hi", c.sweep_n1.hi}, {"points", c.sweep_n1.points}}},
      {"n2", {{"lo", c.sweep_n2.lo}, {"hi", c.sweep_n2.hi}, {"points", c.sweep_n2.points}}},
      {"rows_per_model", n1.size() * n2.size()},
      {"files", {"sweep.csv", "sweep_" + to_string(other) + ".csv"}},
      {"models", models},
      {"note",
       "the reference value 0.96 comes without an error model or Omega_S; both models are reported, neither is "
       "fitted to it"}};
  write_file((dir / "sweep.json").string(), dump(summary));

  auto& log = ctx.log();
  for (const auto& m : models) {
    log << m["model"].get<std::string>() << ": F(0,0) = " << std::setprecision(12) << m["fidelity_origin"].get<double>()
        << "  F(0.02,0.02) = " << std::setprecision(6) << m["fidelity_at_0.02_0.02"].get<double>() << "  (reference 0.96)\n";
  }
  return kExitOk;
}

inline int cmd_validate(const CommandContext& ctx) {
  const auto& c = ctx.config;
  c.validate();
  const auto p = c.system();
  const auto rep = validate_regime(p, c.regime_threshold);
  auto& log = ctx.log();
  log << std::left << std::setw(32) << "condition" << std::right << std::setw(14) << "left" << std::setw(14) << "right"
      << std::setw(12) << "ratio" << "  result\n";
  for (const auto& ch : rep.checks) {
    log << std::left << std::setw(32) << ch.condition << std::right << std::setw(14) << std::setprecision(6)
        << ch.left << std::setw(14) << ch.right << std::setw(12) << ch.ratio << "  " << (ch.pass ? "pass" : "FAIL")
        << "\n";
  }
  log << "threshold " << rep.threshold << ": " << (rep.pass() ? "all conditions pass" : "some conditions fail") << "\n";
  const auto dir = prepare_output_dir(c);
  write_file((dir / "validate.json").string(), dump(to_json(rep)));
  return rep.pass() ? kExitOk : kExitValidation;
}

// The entangling schedule when every atom is driven, otherwise a single step
// with the configured drives.
inline Protocol ladder_protocol(const RunConfig& c) {
  const auto p = c.system();
  if (driven_atoms(p).size() == static_cast<std::size_t>(kAtoms)) return chi_protocol(p);
  return single_step_protocol(p, c.ladder_horizon > 0.0 ? c.ladder_horizon : 100.0);
}

inline int cmd_ladder(const CommandContext& ctx) {
  const auto& c = ctx.config;
  c.validate();
  const auto proto = ladder_protocol(c);
  const auto dir = prepare_output_dir(c);
  LadderOptions opt;
  if (!c.ladder_full) {
    opt.engines = {Engine::GroundNumeric, Engine::ReducedNumeric, Engine::EffectiveNumeric, Engine::Analytic};
  }
  if (c.ladder_horizon > 0.0) opt.horizon = c.ladder_horizon;
  opt.steps_per_period = c.steps_per_period;
  opt.regime_threshold = c.regime_threshold;
  opt.jobs = ctx.jobs;
  const auto rep = approximation_ladder(proto, detail::ground_state(), opt);
  json j = to_json(rep);
  j["params"] = to_json(proto.base);
  write_file((dir / "ladder.json").string(), dump(j));

  auto& log = ctx.log();
  for (const auto& cmp : rep.comparisons) {
    log << "F(" << to_string(cmp.a) << ", " << to_string(cmp.b) << ") = " << std::setprecision(6) << cmp.fidelity
        << "\n";
  }
  for (const auto& e : rep.entries) {
    log << to_string(e.engine) << ": projection weight " << e.projection_weight << ", max |r> population "
        << e.max_leakage << "\n";
  }
  if (rep.pair_phase) {
    log << "pair phase convention supported by the reduced dynamics: " << rep.pair_phase->supported << "\n";
  }
  return kExitOk;
}

inline int cmd_report(const CommandContext& ctx) {
  const auto& c = ctx.config;
  c.validate();
  const auto proto = chi_protocol(c.system());
  const auto dir = prepare_output_dir(c);
  const auto feas = feasibility_report(proto, c.g_si, c.tau_r, c.tau_d, c.regime_threshold);
  const auto dec = decoherence_impact(proto, c.tau_r, c.tau_d, c.g_si);
  const double estimate = first_order_loss_estimate(feas.total_si, c.tau_r, c.tau_d);
  json j = {{"params", to_json(proto.base)},
            {"feasibility", to_json(feas)},
            {"decoherence", to_json(dec)},
            {"first_order_loss_estimate", estimate},
            {"target_entanglement", to_json(entanglement_diagnostics(proto.target))},
            {"warnings", proto.warnings}};
  write_file((dir / "report.json").string(), dump(j));

  auto& log = ctx.log();
  log << std::setprecision(6) << "t1 = " << feas.t1_si * 1e6 << " us, T = " << feas.total_si * 1e6
      << " us, T/tau_r = " << feas.ratio << (feas.pass ? " (T << tau_r)" : " (T not << tau_r)") << "\n";
  log << "decoherence loss " << dec.loss << " (first-order estimate " << estimate << ")\n";
  return kExitOk;
}

}  // namespace chiforge
