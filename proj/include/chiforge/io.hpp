#pragma once

// Run configuration (JSON), JSON encodings of every report, and the sweep CSV.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chiforge/analysis.hpp"
#include "chiforge/errors.hpp"
#include "chiforge/model.hpp"
#include "chiforge/protocol.hpp"

namespace chiforge {

using json = nlohmann::ordered_json;

struct SweepRange {
  double lo = -0.05;
  double hi = 0.05;
  std::size_t points = 41;

  std::vector<double> values() const { return linspace(lo, hi, points); }
};

struct RunConfig {
  // params.omega_s is unused; the schedule snaps omega_s_target.
  SystemParams params;
  double omega_s_target = 10.0;
  Engine engine = Engine::Analytic;
  ErrorModel error_model = ErrorModel::BetaOnly;
  double n1 = 0.0;  // timing errors for `run`
  double n2 = 0.0;
  SweepRange sweep_n1;
  SweepRange sweep_n2;
  double g_si = 2.0 * kPi * 2e8;  // rad/s
  double tau_r = 1.5e-6;          // s
  double tau_d = 1.5e-6;          // s
  double regime_threshold = 5.0;
  int steps_per_period = 400;
  bool equalize_pairs = false;
  // Ladder: include the three-level model, and the schedule time to stop at
  // (0 means the whole schedule).
  bool ladder_full = true;
  double ladder_horizon = 0.0;
  std::string output_dir = "chiforge_out";
  std::uint64_t seed = 20240607;

  SystemParams system() const {
    SystemParams p = params;
    p.omega_s = omega_s_target;
    if (equalize_pairs) p = equalize_pair_coupling(p);
    return p;
  }

  void validate() const {
    system().validate();
    if (!(omega_s_target > 0.0)) throw ConfigError("omega_s_target must be > 0");
    TimingError{n1, n2, error_model}.validate();
    for (const auto* r : {&sweep_n1, &sweep_n2}) {
      if (r->points < 1) throw ConfigError("sweep ranges need at least one point");
      if (!(r->lo <= r->hi)) throw ConfigError("sweep range needs lo <= hi");
      if (!(std::abs(r->lo) < 1.0) || !(std::abs(r->hi) < 1.0)) throw ConfigError("sweep range must lie in (-1, 1)");
    }
    if (!(g_si > 0.0)) throw ConfigError("g_si must be > 0");
    if (!(tau_r > 0.0) || !(tau_d > 0.0)) throw ConfigError("tau_r and tau_d must be > 0");
    if (!(regime_threshold > 0.0)) throw ConfigError("regime_threshold must be > 0");
    if (steps_per_period < 20) throw ConfigError("steps_per_period must be >= 20");
    if (ladder_horizon < 0.0) throw ConfigError("ladder_horizon must be >= 0");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  }
};

// Default step-one parameters.
inline RunConfig default_config() {
  RunConfig c;
  c.params.drives = {AtomDrive{1.0, 10.0}, AtomDrive{1.0, 10.0}, AtomDrive{0.725, 10.5}, AtomDrive{0.725, 10.5}};
  c.params.coupling = 1.0;
  c.params.detuning2 = 11.0;
  c.params.fock_dim = 5;
  c.params.drive_sign = 1;
  c.omega_s_target = 10.0;
  return c;
}

// --- number formatting ---------------------------------------------------------

// 17 significant digits, '.' separator, independent of the C locale.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

// --- config JSON -----------------------------------------------------------------

namespace detail {

template <typename T>
T get_field(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("unknown config key '" + k + "' in " + where);
  }
}

inline SweepRange sweep_from_json(const json& j, const SweepRange& fallback, const std::string& where) {
  reject_unknown(j, {"lo", "hi", "points"}, where);
  SweepRange r;
  r.lo = get_field(j, "lo", fallback.lo);
  r.hi = get_field(j, "hi", fallback.hi);
  const auto pts = get_field<long long>(j, "points", static_cast<long long>(fallback.points));
  if (pts < 1) throw ConfigError(where + ".points must be >= 1");
  r.points = static_cast<std::size_t>(pts);
  return r;
}

}  // namespace detail

inline json drives_to_json(const std::array<AtomDrive, kAtoms>& drives) {
  json a = json::array();
  for (const auto& d : drives) a.push_back({{"rabi", d.rabi}, {"detuning1", d.detuning1}});
  return a;
}

inline std::array<AtomDrive, kAtoms> drives_from_json(const json& j) {
  if (!j.is_array() || j.size() != kAtoms) throw ConfigError("drives must be an array of four {rabi, detuning1}");
  std::array<AtomDrive, kAtoms> out{};
  for (std::size_t k = 0; k < kAtoms; ++k) {
    detail::reject_unknown(j[k], {"rabi", "detuning1"}, "drives[" + std::to_string(k) + "]");
    out[k].rabi = detail::get_field(j[k], "rabi", 0.0);
    out[k].detuning1 = detail::get_field(j[k], "detuning1", 0.0);
  }
  return out;
}

inline json to_json(const RunConfig& c) {
  return {
      {"drives", drives_to_json(c.params.drives)},
      {"coupling", c.params.coupling},
      {"detuning2", c.params.detuning2},
      {"fock_dim", c.params.fock_dim},
      {"drive_sign", c.params.drive_sign},
      {"omega_s_target", c.omega_s_target},
      {"equalize_pairs", c.equalize_pairs},
      {"engine", to_string(c.engine)},
      {"error_model", to_string(c.error_model)},
      {"timing_error", {{"n1", c.n1}, {"n2", c.n2}}},
      {"sweep",
       {{"n1", {{"lo", c.sweep_n1.lo}, {"hi", c.sweep_n1.hi}, {"points", c.sweep_n1.points}}},
        {"n2", {{"lo", c.sweep_n2.lo}, {"hi", c.sweep_n2.hi}, {"points", c.sweep_n2.points}}}}},
      {"si", {{"g", c.g_si}, {"tau_r", c.tau_r}, {"tau_d", c.tau_d}}},
      {"regime_threshold", c.regime_threshold},
      {"steps_per_period", c.steps_per_period},
      {"ladder", {{"include_full", c.ladder_full}, {"horizon", c.ladder_horizon}}},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
  };
}

// Missing keys keep the values of `base`; unknown keys are rejected.
inline RunConfig config_from_json(const json& j, RunConfig base = default_config()) {
  using detail::get_field;
  detail::reject_unknown(j,
                         {"drives", "coupling", "detuning2", "fock_dim", "drive_sign", "omega_s_target",
                          "equalize_pairs", "engine", "error_model", "timing_error", "sweep", "si",
                          "regime_threshold", "steps_per_period", "ladder", "output_dir", "seed"},
                         "config");
  RunConfig c = base;
  if (j.contains("drives")) c.params.drives = drives_from_json(j.at("drives"));
  c.params.coupling = get_field(j, "coupling", c.params.coupling);
  c.params.detuning2 = get_field(j, "detuning2", c.params.detuning2);
  c.params.fock_dim = get_field(j, "fock_dim", c.params.fock_dim);
  c.params.drive_sign = get_field(j, "drive_sign", c.params.drive_sign);
  c.omega_s_target = get_field(j, "omega_s_target", c.omega_s_target);
  c.equalize_pairs = get_field(j, "equalize_pairs", c.equalize_pairs);
  if (j.contains("engine")) c.engine = parse_engine(get_field<std::string>(j, "engine", ""));
  if (j.contains("error_model")) c.error_model = parse_error_model(get_field<std::string>(j, "error_model", ""));
  if (j.contains("timing_error")) {
    const auto& t = j.at("timing_error");
    detail::reject_unknown(t, {"n1", "n2"}, "timing_error");
    c.n1 = get_field(t, "n1", c.n1);
    c.n2 = get_field(t, "n2", c.n2);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::reject_unknown(s, {"n1", "n2"}, "sweep");
    if (s.contains("n1")) c.sweep_n1 = detail::sweep_from_json(s.at("n1"), c.sweep_n1, "sweep.n1");
    if (s.contains("n2")) c.sweep_n2 = detail::sweep_from_json(s.at("n2"), c.sweep_n2, "sweep.n2");
  }
  if (j.contains("si")) {
    const auto& s = j.at("si");
    detail::reject_unknown(s, {"g", "tau_r", "tau_d"}, "si");
    c.g_si = get_field(s, "g", c.g_si);
    c.tau_r = get_field(s, "tau_r", c.tau_r);
    c.tau_d = get_field(s, "tau_d", c.tau_d);
  }
  c.regime_threshold = get_field(j, "regime_threshold", c.regime_threshold);
  c.steps_per_period = get_field(j, "steps_per_period", c.steps_per_period);
  if (j.contains("ladder")) {
    const auto& l = j.at("ladder");
    detail::reject_unknown(l, {"include_full", "horizon"}, "ladder");
    c.ladder_full = get_field(l, "include_full", c.ladder_full);
    c.ladder_horizon = get_field(l, "horizon", c.ladder_horizon);
  }
  c.output_dir = get_field(j, "output_dir", c.output_dir);
  c.seed = get_field(j, "seed", c.seed);
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path, RunConfig base = default_config()) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

// --- state and protocol JSON -------------------------------------------------------

inline json complex_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("complex numbers are written [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

// Amplitudes keyed by ket name, letters ordered as in `order`.
inline json amplitudes_to_json(const StateVector& psi, const std::array<int, kAtoms>& order) {
  const Vector v = amplitudes_in_order(psi, order);
  std::string name;
  for (int a : order) name += std::to_string(a);
  json amps = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // amplitudes_in_order re-indexes, so ket_name must use the identity order.
    amps.push_back({{"ket", ket_name(static_cast<std::size_t>(i), kPhysicalOrder)}, {"amplitude", complex_to_json(v(i))}});
  }
  return {{"order", name}, {"amplitudes", amps}};
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(complex_to_json(m(i, k)));
    rows.push_back(r);
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("matrix must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != n) throw ConfigError("matrix must be square");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = complex_from_json(r[static_cast<std::size_t>(k)]);
  }
  return m;
}

inline json protocol_to_json(const Protocol& p) {
  json steps = json::array();
  for (const auto& s : p.steps) {
    json pairs = json::array();
    for (auto pr : s.expected_pairs) pairs.push_back({pr.first, pr.second});
    steps.push_back({{"drives", drives_to_json(s.drives)},
                     {"duration", s.duration},
                     {"expected_pairs", pairs},
                     {"constraints", s.constraints}});
  }
  json post = json::array();
  for (const auto& u : p.post_unitaries) post.push_back({{"atom", u.atom}, {"unitary", matrix_to_json(u.unitary)}});
  json target = json::array();
  for (std::size_t i = 0; i < p.target.space().dimension(); ++i) target.push_back(complex_to_json(p.target[i]));
  return {{"base",
           {{"coupling", p.base.coupling},
            {"detuning2", p.base.detuning2},
            {"omega_s", p.base.omega_s},
            {"fock_dim", p.base.fock_dim},
            {"drive_sign", p.base.drive_sign},
            {"drives", drives_to_json(p.base.drives)}}},
          {"steps", steps},
          {"post_unitaries", post},
          {"target", target},
          {"warnings", p.warnings}};
}

inline Protocol protocol_from_json(const json& j) {
  try {
    Protocol p;
    const auto& b = j.at("base");
    p.base.coupling = b.at("coupling").get<double>();
    p.base.detuning2 = b.at("detuning2").get<double>();
    p.base.omega_s = b.at("omega_s").get<double>();
    p.base.fock_dim = b.at("fock_dim").get<int>();
    p.base.drive_sign = b.at("drive_sign").get<int>();
    p.base.drives = drives_from_json(b.at("drives"));
    p.base.validate();
    for (const auto& s : j.at("steps")) {
      ScheduleStep st;
      st.drives = drives_from_json(s.at("drives"));
      st.duration = s.at("duration").get<double>();
      if (!(st.duration >= 0.0)) throw ConfigError("step duration must be >= 0");
      for (const auto& pr : s.at("expected_pairs")) st.expected_pairs.push_back({pr.at(0).get<int>(), pr.at(1).get<int>()});
      st.constraints = s.at("constraints").get<std::vector<std::string>>();
      p.steps.push_back(std::move(st));
    }
    for (const auto& u : j.at("post_unitaries")) {
      const int atom = u.at("atom").get<int>();
      if (atom < 1 || atom > kAtoms) throw ConfigError("post-unitary atom out of range");
      Matrix m = matrix_from_json(u.at("unitary"));
      if (m.rows() != 2) throw ConfigError("post-unitaries act on one qubit");
      p.post_unitaries.push_back({atom, std::move(m)});
    }
    const auto& t = j.at("target");
    const auto space = HilbertSpace::qubits(kAtoms);
    if (t.size() != space.dimension()) throw ConfigError("target must have 16 amplitudes");
    Vector v(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_from_json(t[i]);
    p.target = StateVector(space, std::move(v));
    p.warnings = j.value("warnings", std::vector<std::string>{});
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("protocol JSON: ") + e.what());
  }
}

// --- report JSON ---------------------------------------------------------------------

inline json to_json(const SystemParams& p) {
  const auto d = derive_params(p);
  json atoms = json::array();
  for (int l = 1; l <= kAtoms; ++l) {
    atoms.push_back({{"atom", l},
                     {"rabi", p.drive(l).rabi},
                     {"detuning1", p.drive(l).detuning1},
                     {"eta", d.eta_of(l)},
                     {"lambda", d.lambda_of(l)},
                     {"delta", d.delta_of(l)},
                     {"alpha", d.alpha_of(l)}});
  }
  json betas = json::object();
  for (int l = 1; l <= kAtoms; ++l) {
    for (int m = l + 1; m <= kAtoms; ++m) betas[std::to_string(l) + std::to_string(m)] = d.beta_of(l, m);
  }
  return {{"coupling", p.coupling}, {"detuning2", p.detuning2}, {"omega_s", p.omega_s},
          {"fock_dim", p.fock_dim}, {"drive_sign", p.drive_sign}, {"xi", d.xi},
          {"atoms", atoms},         {"beta", betas}};
}

inline json to_json(const RegimeReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back(
        {{"condition", c.condition}, {"left", c.left}, {"right", c.right}, {"ratio", c.ratio}, {"pass", c.pass}});
  }
  return {{"threshold", r.threshold}, {"pass", r.pass()}, {"checks", checks}};
}

inline json to_json(const std::vector<BipartitionEntropy>& e) {
  json out = json::array();
  for (const auto& b : e) out.push_back({{"cut", b.label}, {"entropy", b.entropy}});
  return out;
}

inline json to_json(const LadderReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"engine", to_string(e.engine)},
                       {"projection_weight", e.projection_weight},
                       {"vacuum_weight", e.vacuum_weight},
                       {"max_leakage", e.max_leakage},
                       {"final_leakage", e.final_leakage},
                       {"norm_drift", e.norm_drift},
                       {"integrator_steps", e.integrator_steps}});
  }
  json comps = json::array();
  for (const auto& c : r.comparisons) {
    comps.push_back({{"a", to_string(c.a)}, {"b", to_string(c.b)}, {"fidelity", c.fidelity}});
  }
  json out = {{"horizon", r.horizon}, {"entries", entries}, {"fidelities", comps}, {"regime", to_json(r.regime)}};
  if (r.ground_vs_reduced_shifted) out["ground_vs_reduced_with_cavity_shift"] = *r.ground_vs_reduced_shifted;
  if (r.pair_phase) {
    const auto& p = *r.pair_phase;
    out["pair_phase_convention"] = {{"delta_gap", p.gap},
                                    {"duration", p.duration},
                                    {"fidelity_as_printed", p.printed},
                                    {"fidelity_second_order", p.second_order},
                                    {"supported", p.supported}};
  }
  return out;
}

inline json to_json(const DecoherenceImpact& d) {
  return {{"fidelity_closed", d.fidelity_closed}, {"fidelity_open", d.fidelity_open},
          {"loss", d.loss},                       {"trace_drift", d.trace_drift},
          {"relaxation_rate", d.relaxation_rate}, {"dephasing_rate", d.dephasing_rate}};
}

inline json to_json(const FeasibilityReport& f) {
  return {{"g_si", f.g_si},       {"t1", f.t1_g},         {"t2", f.t2_g},         {"t1_s", f.t1_si},
          {"t2_s", f.t2_si},      {"total_s", f.total_si}, {"tau_r_s", f.tau_r},   {"tau_d_s", f.tau_d},
          {"total_over_tau_r", f.ratio}, {"pass", f.pass}, {"regime", to_json(f.regime)}};
}

// --- sweep CSV -------------------------------------------------------------------------

inline constexpr const char* kSweepCsvHeader = "n1,n2,fidelity,model,engine";

// Rows ordered by n1, then n2.
inline std::string sweep_csv(const std::vector<SweepGrid>& grids) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& g : grids) {
    const std::string tail = "," + to_string(g.model) + "," + to_string(g.engine) + "\n";
    for (std::size_t i = 0; i < g.n1_values.size(); ++i) {
      for (std::size_t j = 0; j < g.n2_values.size(); ++j) {
        out += format_double(g.n1_values[i]) + "," + format_double(g.n2_values[j]) + "," +
               format_double(g.at(i, j)) + tail;
      }
    }
  }
  return out;
}

// Writes bytes exactly as given (binary mode, no newline translation).
inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace chiforge
