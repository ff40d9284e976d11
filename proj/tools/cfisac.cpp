// cfisac: command-line front end. See README.md for usage.

#include <iostream>

#include "CLI11.hpp"
#include "cfisac/commands.hpp"

using namespace cfisac;

namespace {

void add_common(CLI::App* cmd, CommonOptions& o, std::string& objective) {
  cmd->add_option("--config", o.config_path, "key = value config file (defaults if omitted)");
  cmd->add_option("--set", o.overrides, "override a config key, e.g. --set M=10 (repeatable)");
  cmd->add_option("--objective", objective, "relaxed objective")
      ->check(CLI::IsMember({"transmit", "paper-literal"}));
  cmd->add_option("--tol", o.tol, "relative tolerance of the exact feasibility check");
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::Range(1, 256));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint AP activation and power allocation for cell-free ISAC"};
  app.require_subcommand(1);

  std::string objective = "transmit";
  std::string method = "bb", methods = "bb,decoupled,full", seeds = "1", m_list, k_list;
  bool no_timing = false;

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "solve one generated scenario");
  add_common(s, solve.common, objective);
  s->add_option("--method", method, "bb, decoupled, full or exhaustive");
  s->add_option("--seed", solve.seed, "scenario index under the config's master_seed");
  s->add_option("--out", solve.out, "report file (JSON; stdout if omitted)");
  s->add_flag("--no-timing", no_timing, "omit wall times so output is reproducible byte for byte");
  s->add_option("--dump-program", solve.dump_program, "also write the all-AP relaxed cone program (text)");

  SweepArgs sweep;
  auto* w = app.add_subcommand("sweep", "benchmark grid to long-format CSV");
  add_common(w, sweep.common, objective);
  w->add_option("--method", methods, "comma-separated methods");
  w->add_option("--m-list", m_list, "comma-separated AP counts (default: config M)");
  w->add_option("--k-list", k_list, "comma-separated UE counts (default: config K)");
  w->add_option("--seeds", seeds, "N (0..N-1), a:b (a..b-1) or a,b,c");
  w->add_option("--out", sweep.out, "long CSV; summary written to <name>_summary.csv");
  w->add_flag("--no-timing", no_timing, "leave runtime columns empty");

  ExportArgs exp;
  auto* e = app.add_subcommand("export-dataset", "write labelled scenarios as JSON lines");
  add_common(e, exp.common, objective);
  e->add_option("--count", exp.count, "number of scenarios")->required()->check(CLI::NonNegativeNumber);
  e->add_option("--first-index", exp.first_index, "index of the first scenario");
  e->add_option("--out", exp.out, "dataset file")->required();

  EvalArgs ev;
  auto* p = app.add_subcommand("eval-predictions", "score predictions against a dataset");
  p->add_option("--predictions", ev.predictions, "prediction file (JSON lines)")->required();
  p->add_option("--dataset", ev.dataset, "dataset file the predictions refer to")->required();
  p->add_option("--tol", ev.tol, "relative tolerance of the exact feasibility check");
  p->add_option("--out", ev.out, "per-record CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    const ObjectiveMode mode = parse_objective_mode(objective);
    if (s->parsed()) {
      solve.common.objective = mode;
      solve.common.timing = !no_timing;
      solve.method = parse_method(method);
      return cmd_solve(solve, std::cout, std::cerr);
    }
    if (w->parsed()) {
      sweep.common.objective = mode;
      sweep.common.timing = !no_timing;
      sweep.methods.clear();
      for (const std::string& t : CLI::detail::split(methods, ',')) sweep.methods.push_back(parse_method(CLI::detail::trim_copy(t)));
      if (!m_list.empty()) sweep.M_list = parse_int_list("--m-list", m_list);
      if (!k_list.empty()) sweep.K_list = parse_int_list("--k-list", k_list);
      sweep.seeds = parse_seeds(seeds);
      return cmd_sweep(sweep, std::cout, std::cerr);
    }
    if (e->parsed()) {
      exp.common.objective = mode;
      return cmd_export_dataset(exp, std::cout, std::cerr);
    }
    return cmd_eval_predictions(ev, std::cout, std::cerr);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitError;
  }
}
