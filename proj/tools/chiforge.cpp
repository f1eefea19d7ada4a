// chiforge: command-line front end.
//
//   chiforge run|sweep|validate|ladder|report [--config PATH | --paper-defaults]
//            [--engine NAME] [--error-model NAME] [--jobs N] [--out DIR]

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "chiforge/commands.hpp"

namespace {

struct Flags {
  std::string config;
  bool use_defaults = false;
  std::string engine;
  std::string error_model;
  unsigned jobs = 1;
  std::string out;
};

void add_flags(CLI::App* sub, Flags& f) {
  auto* cfg = sub->add_option("--config", f.config, "JSON config file");
  auto* pd = sub->add_flag("--paper-defaults", f.use_defaults, "use the built-in parameter set (default)");
  cfg->excludes(pd);
  sub->add_option("--engine", f.engine, "analytic|effective|reduced|ground|full");
  sub->add_option("--error-model", f.error_model, "beta_only|full_phase");
  sub->add_option("--jobs", f.jobs, "worker threads for sweeps and ladders (0: all cores)");
  sub->add_option("--out", f.out, "output directory (CHI_FORGE_OUT overrides)");
}

chiforge::CommandContext make_context(const Flags& f) {
  using namespace chiforge;
  CommandContext ctx;
  ctx.config = f.config.empty() ? default_config() : load_config(f.config);
  if (!f.engine.empty()) ctx.config.engine = parse_engine(f.engine);
  if (!f.error_model.empty()) ctx.config.error_model = parse_error_model(f.error_model);
  if (!f.out.empty()) ctx.config.output_dir = f.out;
  ctx.jobs = f.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : f.jobs;
  ctx.out = &std::cout;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace chiforge;
  CLI::App app{"Four-atom chi-state protocol simulator"};
  app.require_subcommand(1);
  Flags flags;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const CommandContext&);
  };
  const Sub subs[] = {
      {"run", "run the protocol once and write run.json", cmd_run},
      {"sweep", "timing-error fidelity grid, sweep.csv and sweep.json", cmd_sweep},
      {"validate", "check the regime conditions (exit 1 if any fails)", cmd_validate},
      {"ladder", "compare every model in the reduction chain, ladder.json", cmd_ladder},
      {"report", "feasibility and decoherence summary, report.json", cmd_report},
  };
  std::optional<int (*)(const CommandContext&)> chosen;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_flags(sub, flags);
    sub->callback([&chosen, fn = s.fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  return run_guarded([&] { return (*chosen)(make_context(flags)); }, std::cerr);
}
