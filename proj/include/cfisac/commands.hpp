#pragma once

// Subcommand bodies behind tools/cfisac.cpp. Kept here, free of argument
// parsing, so the tests can drive them without spawning a process.
//
// Exit codes: 0 feasible / success, 2 infeasible, 1 error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfisac/baselines.hpp"
#include "cfisac/config.hpp"
#include "cfisac/dataset.hpp"
#include "cfisac/parallel.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/selector.hpp"

namespace cfisac {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitInfeasible = 2;

// Bumped whenever the sweep column set changes.
inline constexpr int kSweepCsvVersion = 1;

enum class Method { BB, Decoupled, Full, Exhaustive };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::BB: return "bb";
    case Method::Decoupled: return "decoupled";
    case Method::Full: return "full";
    case Method::Exhaustive: return "exhaustive";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "bb") return Method::BB;
  if (s == "decoupled") return Method::Decoupled;
  if (s == "full") return Method::Full;
  if (s == "exhaustive") return Method::Exhaustive;
  throw std::invalid_argument("unknown method '" + s + "' (expected bb, decoupled, full or exhaustive)");
}

struct CommonOptions {
  std::string config_path;              // empty: built-in defaults
  std::vector<std::string> overrides;   // "key=value", applied after the file
  ObjectiveMode objective = ObjectiveMode::TransmitPower;
  double tol = 1e-6;                    // relative tolerance of the exact feasibility check
  int workers = 1;
  bool timing = true;                   // false: wall times written as empty fields / omitted
};

inline SystemConfig resolve_config(const CommonOptions& o) {
  SystemConfig cfg = o.config_path.empty() ? SystemConfig{} : load_config(o.config_path);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override '" + kv + "' is not key=value");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

inline RelaxedOptions relaxed_options(const CommonOptions& o) {
  if (!(o.tol > 0) || !std::isfinite(o.tol)) throw std::invalid_argument("--tol must be positive");
  RelaxedOptions r;
  r.objective = o.objective;
  r.feas_tol = o.tol;
  return r;
}

// Seed lists: "N" means 0..N-1, "a:b" means a..b-1, "a,b,c" lists indices.
inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  auto num = [&](const std::string& t) { return detail::parse_u64("--seeds", t); };
  if (const auto colon = s.find(':'); colon != std::string::npos) {
    const std::uint64_t a = num(s.substr(0, colon)), b = num(s.substr(colon + 1));
    if (b <= a) throw std::invalid_argument("--seeds range '" + s + "' is empty");
    for (std::uint64_t i = a; i < b; ++i) out.push_back(i);
  } else if (s.find(',') != std::string::npos) {
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(num(detail::trim(tok)));
  } else {
    const std::uint64_t n = num(s);
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(i);
  }
  if (out.empty()) throw std::invalid_argument("--seeds selects no scenarios");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& flag, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const long long v = detail::parse_int(flag, detail::trim(tok));
    if (v < 1 || v > 100000) throw std::invalid_argument(flag + ": value " + tok + " out of range");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw std::invalid_argument(flag + " is empty");
  return out;
}

// ---------------------------------------------------------------------------

struct MethodOutcome {
  Method method = Method::BB;
  bool feasible = false;
  std::string status;  // method-specific status word
  PowerAllocation alloc;
  FeasibilityReport report;
  int solves = 0;
  double wall_seconds = 0;
  json details;  // BB trace, decoupled log, ...
};

inline MethodOutcome run_method(const Scenario& sc, Method m, const RelaxedOptions& ropt, int bb_workers = 1) {
  MethodOutcome out;
  out.method = m;
  switch (m) {
    case Method::BB: {
      SelectorOptions sel;
      sel.relaxed = ropt;
      sel.workers = bb_workers;
      BBResult r = modified_bb(sc, sel);
      out.feasible = r.ok() && r.report.feasible;
      out.status = to_string(r.status);
      out.alloc = std::move(r.alloc);
      out.report = std::move(r.report);
      out.solves = r.trace.solves;
      out.wall_seconds = r.trace.wall_seconds;
      out.details = {{"trace", trace_json(r.trace)}, {"numerical_failures", r.trace.numerical_failures}};
      break;
    }
    case Method::Decoupled: {
      DecoupledResult r = decoupled(sc, ropt);
      out.feasible = r.found && r.report.feasible;
      out.status = r.found ? "ok" : "no-size-works";
      out.alloc = std::move(r.alloc);
      out.report = std::move(r.report);
      out.solves = r.solves;
      out.wall_seconds = r.wall_seconds;
      json steps = json::array();
      for (const DecoupledStep& s : r.log)
        steps.push_back({{"size", s.size},
                         {"solver_status", to_string(s.solver_status)},
                         {"kappa", std::isfinite(s.kappa) ? json(s.kappa) : json(nullptr)},
                         {"outcome", s.outcome}});
      out.details = {{"ranking", decoupled_ranking(sc)}, {"steps", std::move(steps)}};
      break;
    }
    case Method::Full: {
      SubproblemResult r = full_ap_relaxed(sc, ropt);
      out.feasible = r.feasible;
      out.status = to_string(r.status);
      out.alloc = std::move(r.alloc);
      out.report = std::move(r.report);
      out.solves = 1;
      out.wall_seconds = r.wall_seconds;
      out.details = {{"iterations", r.iterations}, {"recovered_from", r.recovered_from}};
      break;
    }
    case Method::Exhaustive: {
      SelectorOptions sel;
      sel.relaxed = ropt;
      ExhaustiveResult r = exhaustive(sc, kDefaultExhaustiveMaxM, sel);
      out.feasible = r.found && r.report.feasible;
      out.status = r.found ? "ok" : "all-infeasible";
      out.alloc = std::move(r.alloc);
      out.report = std::move(r.report);
      out.solves = r.solves;
      out.wall_seconds = r.wall_seconds;
      break;
    }
  }
  return out;
}

inline json report_json(const Scenario& sc, const MethodOutcome& o, bool timing) {
  const FeasibilityReport& r = o.report;
  const double g = sc.config.sinr_threshold_linear();
  json sinr = json::array(), sinr_slack = json::array();
  for (Eigen::Index k = 0; k < r.sinr.size(); ++k) {
    sinr.push_back(r.sinr[k]);
    sinr_slack.push_back(r.sinr[k] / g - 1.0);
  }
  json j = {
      {"method", to_string(o.method)},
      {"index", sc.index},
      {"master_seed", sc.config.master_seed},
      {"M", sc.num_aps()},
      {"K", sc.num_ues()},
      {"status", o.status},
      {"feasible", o.feasible},
      {"total_power_w", r.total_power_w},
      {"transmit_power_w", r.transmit_power_w},
      {"circuit_power_w", r.circuit_power_w},
      {"active_count", r.active_count},
      {"active", detail::mask_json(o.alloc.active)},
      {"sinr", std::move(sinr)},
      {"sinr_rel_slack", std::move(sinr_slack)},  // SINR / gamma_thr - 1
      {"budget_slack", detail::vector_json(r.budget_slack)},
      {"crlb_trace_m2", detail::power_or_null(r.crlb_trace)},
      {"crlb_slack_m2", sc.config.sensing_enabled() && std::isfinite(r.crlb_trace)
                            ? json(sc.config.crlb_limit_m2 - r.crlb_trace)
                            : json(nullptr)},
      {"checks", {{"budget", r.budget_ok}, {"sinr", r.sinr_ok}, {"crlb", r.crlb_ok}}},
      {"solves", o.solves},
      {"P", detail::matrix_json(o.alloc.P)},
  };
  if (timing) j["wall_seconds"] = o.wall_seconds;
  if (!o.details.is_null()) j["details"] = o.details;
  return j;
}

// Output goes to `out_path`, or to `stdout_` when the path is empty or "-".
inline void write_text(const std::string& out_path, const std::string& text, std::ostream& stdout_) {
  if (out_path.empty() || out_path == "-") {
    stdout_ << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + out_path + "'");
  f << text;
  if (!f) throw std::runtime_error("write to '" + out_path + "' failed");
}

// ---------------------------------------------------------------------------
// solve

struct SolveArgs {
  CommonOptions common;
  Method method = Method::BB;
  std::uint64_t seed = 0;  // scenario index
  std::string out;
  std::string dump_program;  // optional: full-set relaxed program, plain-text dump
};

inline int cmd_solve(const SolveArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const SystemConfig cfg = resolve_config(a.common);
    if (a.method == Method::Exhaustive && cfg.M > kDefaultExhaustiveMaxM) {
      err << "error: exhaustive enumeration is limited to M <= " << kDefaultExhaustiveMaxM << " (got M = " << cfg.M
          << ", 2^M - 1 subproblems); use --method bb for larger instances\n";
      return kExitError;
    }
    const Scenario sc = generate_scenario(cfg, a.seed);
    if (!a.dump_program.empty()) {
      RelaxedOptions ro = relaxed_options(a.common);
      const RelaxedProgram rp = build_relaxed(sc, std::vector<bool>(static_cast<std::size_t>(cfg.M), true), ro);
      std::ofstream f(a.dump_program);
      write_program(f, rp.program);
      if (!f) throw std::runtime_error("cannot write '" + a.dump_program + "'");
    }
    const MethodOutcome o = run_method(sc, a.method, relaxed_options(a.common), a.common.workers);
    write_text(a.out, report_json(sc, o, a.common.timing).dump(2) + "\n", out);
    if (!o.feasible) err << "infeasible: " << o.status << "\n";
    return o.feasible ? kExitOk : kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  CommonOptions common;
  std::vector<Method> methods = {Method::BB, Method::Decoupled, Method::Full};
  std::vector<int> M_list;  // empty: the config value
  std::vector<int> K_list;
  std::vector<std::uint64_t> seeds = {0};
  std::string out;          // long CSV; the summary goes next to it
};

struct SweepRow {
  Method method = Method::BB;
  int M = 0, K = 0;
  std::uint64_t seed = 0;
  std::string status;
  bool feasible = false;
  double total_power_w = 0, transmit_power_w = 0;
  int active_aps = 0;
  double runtime_s = 0;
};

inline std::string csv_number(double v) {
  if (std::isnan(v) || std::isinf(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_seconds(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const char* kSweepHeader = "method,M,K,seed,total_power_w,transmit_power_w,active_aps,runtime_s,feasible,status\n";
inline const char* kSummaryHeader =
    "method,M,K,runs,feasible_runs,mean_total_power_w,mean_transmit_power_w,mean_active_aps,mean_runtime_s\n";

inline std::vector<SweepRow> run_sweep(const SweepArgs& a) {
  const SystemConfig base = resolve_config(a.common);
  const RelaxedOptions ropt = relaxed_options(a.common);
  const std::vector<int> Ms = a.M_list.empty() ? std::vector<int>{base.M} : a.M_list;
  const std::vector<int> Ks = a.K_list.empty() ? std::vector<int>{base.K} : a.K_list;
  if (a.methods.empty() || a.seeds.empty()) throw std::invalid_argument("sweep grid is empty");
  std::vector<SweepRow> cells;
  for (Method m : a.methods)
    for (int M : Ms)
      for (int K : Ks)
        for (std::uint64_t s : a.seeds) {
          SweepRow r;
          r.method = m, r.M = M, r.K = K, r.seed = s;
          cells.push_back(r);
        }
  // Cells come out in (method, M, K, seed) order whatever the worker count.
  return parallel_map(cells.size(), a.common.workers, [&](std::size_t i) {
    SweepRow row = cells[i];
    try {
      SystemConfig cfg = base;
      cfg.M = row.M;
      cfg.K = row.K;
      cfg.validate();
      const Scenario sc = generate_scenario(cfg, row.seed);
      const MethodOutcome o = run_method(sc, row.method, ropt);
      row.status = o.status;
      row.feasible = o.feasible;
      row.total_power_w = o.report.total_power_w;
      row.transmit_power_w = o.report.transmit_power_w;
      row.active_aps = o.report.active_count;
      row.runtime_s = o.wall_seconds;
    } catch (const std::exception& e) {
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      row.status = "error: " + msg;
    }
    return row;
  });
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, bool timing) {
  std::ostringstream os;
  os << kSweepHeader;
  for (const SweepRow& r : rows) {
    const bool has = r.status.rfind("error", 0) != 0;
    os << to_string(r.method) << ',' << r.M << ',' << r.K << ',' << r.seed << ','
       << (has ? csv_number(r.total_power_w) : "") << ',' << (has ? csv_number(r.transmit_power_w) : "") << ','
       << (has ? std::to_string(r.active_aps) : "") << ',' << (has && timing ? csv_seconds(r.runtime_s) : "") << ','
       << (r.feasible ? 1 : 0) << ',' << r.status << '\n';
  }
  return os.str();
}

// Means over feasible runs of each (method, M, K) cell; first-appearance order.
inline std::string sweep_summary_csv(const std::vector<SweepRow>& rows, bool timing) {
  struct Acc {
    int runs = 0, feas = 0;
    double total = 0, tx = 0, active = 0, runtime = 0;
  };
  std::vector<std::tuple<Method, int, int>> order;
  std::map<std::tuple<int, int, int>, Acc> acc;
  for (const SweepRow& r : rows) {
    const auto key = std::make_tuple(static_cast<int>(r.method), r.M, r.K);
    if (!acc.count(key)) order.emplace_back(r.method, r.M, r.K);
    Acc& a = acc[key];
    ++a.runs;
    if (!r.feasible) continue;
    ++a.feas;
    a.total += r.total_power_w;
    a.tx += r.transmit_power_w;
    a.active += r.active_aps;
    a.runtime += r.runtime_s;
  }
  std::ostringstream os;
  os << kSummaryHeader;
  for (const auto& [m, M, K] : order) {
    const Acc& a = acc[std::make_tuple(static_cast<int>(m), M, K)];
    const double n = a.feas;
    auto mean = [&](double s) { return a.feas ? csv_number(s / n) : std::string(); };
    os << to_string(m) << ',' << M << ',' << K << ',' << a.runs << ',' << a.feas << ',' << mean(a.total) << ','
       << mean(a.tx) << ',' << mean(a.active) << ',' << (timing && a.feas ? csv_seconds(a.runtime / n) : "") << '\n';
  }
  return os.str();
}

// sweep.csv -> sweep_summary.csv; other names get "_summary.csv" appended.
inline std::string summary_path(const std::string& out) {
  const std::string ext = ".csv";
  if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0)
    return out.substr(0, out.size() - ext.size()) + "_summary.csv";
  return out + "_summary.csv";
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const std::vector<SweepRow> rows = run_sweep(a);
    const std::string csv = sweep_csv(rows, a.common.timing), summary = sweep_summary_csv(rows, a.common.timing);
    write_text(a.out, csv, out);
    if (!a.out.empty() && a.out != "-") write_text(summary_path(a.out), summary, out);
    else out << '\n' << summary;
    int failed = 0;
    for (const SweepRow& r : rows) failed += r.status.rfind("error", 0) == 0;
    if (failed) err << failed << " of " << rows.size() << " runs failed; see the status column\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

// ---------------------------------------------------------------------------
// export-dataset / eval-predictions

struct ExportArgs {
  CommonOptions common;
  int count = 0;
  std::uint64_t first_index = 0;
  std::string out;
};

inline int cmd_export_dataset(const ExportArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const SystemConfig cfg = resolve_config(a.common);
    ExportOptions opt;
    opt.workers = a.common.workers;
    opt.first_index = a.first_index;
    opt.selector.relaxed = relaxed_options(a.common);
    if (a.out.empty()) throw std::invalid_argument("export-dataset needs --out");
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + a.out + "'");
    const ExportSummary s = export_dataset(cfg, a.count, f, opt);
    f.close();
    if (!f) throw std::runtime_error("write to '" + a.out + "' failed");
    for (const auto& [idx, reason] : s.skipped) err << "skipped scenario " << idx << ": " << reason << "\n";
    out << "wrote " << s.written << " records to " << a.out << " (" << s.skipped.size() << " skipped)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

struct EvalArgs {
  std::string predictions;
  std::string dataset;
  double tol = 1e-6;
  std::string out;  // per-record CSV; summary always goes to stdout
};

inline int cmd_eval_predictions(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto data = read_dataset(a.dataset);
    const auto preds = read_predictions(a.predictions);
    const EvalSummary s = evaluate_predictions(preds, data, a.tol);
    if (!a.out.empty()) {
      std::ostringstream os;
      os << "index,producer,feasible,budget_ok,sinr_ok,crlb_ok,total_power_w,transmit_power_w,label_total_power_w,"
            "power_ratio,transmit_ratio\n";
      for (const PredictionEval& e : s.rows)
        os << e.index << ',' << e.producer << ',' << e.report.feasible << ',' << e.report.budget_ok << ','
           << e.report.sinr_ok << ',' << e.report.crlb_ok << ',' << csv_number(e.report.total_power_w) << ','
           << csv_number(e.report.transmit_power_w) << ',' << csv_number(e.label_total_power_w) << ','
           << csv_number(e.power_ratio) << ',' << csv_number(e.transmit_ratio) << '\n';
      write_text(a.out, os.str(), out);
    }
    out << "predictions " << s.count << "\n"
        << "feasible " << s.feasible << "\n"
        << "feasible_rate " << csv_number(s.feasible_rate) << "\n"
        << "mean_power_w " << csv_number(s.mean_power_w) << "\n"
        << "mean_feasible_power_w " << csv_number(s.mean_feasible_power_w) << "\n"
        << "mean_power_ratio " << csv_number(s.mean_power_ratio) << "\n"
        << "mean_transmit_ratio " << csv_number(s.mean_transmit_ratio) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace cfisac
