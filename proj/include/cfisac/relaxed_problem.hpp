#pragma once

// Convex subproblem for a fixed set of active APs.
//
// With y_mk = sqrt(P_mk) the SINR requirement becomes a second-order cone in
// y, the power/amplitude link P_mk >= y_mk^2 a rotated cone, and the sensing
// requirement the linear surrogate b - nu A p_sen <= 0 (one row per AP).
// The incoherent interference uses the auxiliary r_m >= ||(sqrt(v_mk) y_mk)_k||
// so each UE cone only touches M_act + K + 1 entries.
//
// All SINR rows are divided by the downlink noise amplitude so the noise
// entry is 1.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfisac/cone_program.hpp"
#include "cfisac/metrics.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/socp_solver.hpp"

namespace cfisac {

enum class ObjectiveMode {
  TransmitPower,  // sum P_mk
  PaperLiteral,   // sum y_mk^2
};

inline const char* to_string(ObjectiveMode m) {
  return m == ObjectiveMode::TransmitPower ? "transmit" : "paper-literal";
}

inline ObjectiveMode parse_objective_mode(const std::string& s) {
  if (s == "transmit") return ObjectiveMode::TransmitPower;
  if (s == "paper-literal") return ObjectiveMode::PaperLiteral;
  throw std::invalid_argument("unknown objective mode '" + s + "' (expected transmit or paper-literal)");
}

struct RelaxedOptions {
  ObjectiveMode objective = ObjectiveMode::TransmitPower;
  bool include_crlb = true;  // ignored when the config disables sensing
  SolverSettings solver;
  double feas_tol = 1e-6;  // tolerance of the exact re-check
  // y >= 0 holds at some optimum without the explicit bound (a negative
  // amplitude only lowers signal and raises interference); leaving it out
  // avoids degenerate zero links.
  bool explicit_amplitude_bound = false;
};

struct RelaxedProgram {
  ConeProgram program;
  std::vector<int> active_aps;  // AP indices in program order
  int K = 0;
  // Variable indices, -1 for inactive rows.
  Eigen::MatrixXi y_var;
  Eigen::MatrixXi P_var;
  bool has_crlb = false;
  // Solver variables are P / power_unit and y / sqrt(power_unit).
  double power_unit = 1;
};

// Typical per-link power: the larger of the median power a UE's best AP
// alone would need against noise and the uniform per-link power that meets
// the CRLB limit. Only used to keep solver variables near 1.
inline double typical_power(const Scenario& sc, const std::vector<int>& aps, bool with_crlb) {
  const double gthr = sc.config.sinr_threshold_linear();
  std::vector<double> est;
  for (int k = 0; k < sc.num_ues(); ++k) {
    double best = 0;
    for (int m : aps) best = std::max(best, sc.channel.v(m, k));
    if (best > 0) est.push_back(gthr * sc.sigma2_dl / (best * best));
  }
  if (est.empty()) return 1.0;
  double u = 0;
  for (double e : est) u += e / static_cast<double>(est.size());
  if (with_crlb) {
    Eigen::VectorXd ones = Eigen::VectorXd::Zero(sc.num_aps());
    for (int m : aps) ones[m] = 1.0;
    const double crlb = crlb_trace(sc.sensing, ones);
    if (std::isfinite(crlb)) u = std::max(u, crlb / sc.config.crlb_limit_m2 / sc.num_ues());
  }
  return std::isfinite(u) && u > 0 ? u : 1.0;
}

inline RelaxedProgram build_relaxed(const Scenario& sc, const std::vector<bool>& active,
                                    const RelaxedOptions& opt = {}) {
  const int M = sc.num_aps(), K = sc.num_ues();
  if (static_cast<int>(active.size()) != M) throw std::invalid_argument("build_relaxed: mask length != M");
  RelaxedProgram rp;
  rp.K = K;
  for (int m = 0; m < M; ++m)
    if (active[static_cast<std::size_t>(m)]) rp.active_aps.push_back(m);
  if (rp.active_aps.empty()) throw std::invalid_argument("build_relaxed: empty active set");

  const auto& v = sc.channel.v;
  const auto& g = sc.channel.varsigma;
  const auto& gram = sc.channel.pilot_gram;
  const double sigma = std::sqrt(sc.sigma2_dl);
  const double gthr = sc.config.sinr_threshold_linear();
  ConeProgram& p = rp.program;
  rp.has_crlb = opt.include_crlb && sc.config.sensing_enabled();
  rp.power_unit = typical_power(sc, rp.active_aps, rp.has_crlb);
  const double pu = rp.power_unit, yu = std::sqrt(pu);

  rp.y_var = Eigen::MatrixXi::Constant(M, K, -1);
  rp.P_var = Eigen::MatrixXi::Constant(M, K, -1);
  for (int m : rp.active_aps)
    for (int k = 0; k < K; ++k) {
      rp.y_var(m, k) = p.add_variable("y[" + std::to_string(m) + "," + std::to_string(k) + "]");
      rp.P_var(m, k) = p.add_variable("P[" + std::to_string(m) + "," + std::to_string(k) + "]");
    }
  std::vector<int> r_var(static_cast<std::size_t>(M), -1);
  for (int m : rp.active_aps) r_var[static_cast<std::size_t>(m)] = p.add_variable("r[" + std::to_string(m) + "]");

  // P >= y^2 and y >= 0
  for (int m : rp.active_aps)
    for (int k = 0; k < K; ++k) {
      AffineExpr P, y;
      P.add(rp.P_var(m, k), 1.0);
      y.add(rp.y_var(m, k), 1.0);
      p.add_cone(ConeKind::RotatedSecondOrder, {P, AffineExpr(0.5), y});
    }
  if (opt.explicit_amplitude_bound)
    for (int m : rp.active_aps)
      for (int k = 0; k < K; ++k) p.add_nonnegative(AffineExpr().add(rp.y_var(m, k), 1.0));

  // per-AP budget
  for (int m : rp.active_aps) {
    AffineExpr e(1.0);
    for (int k = 0; k < K; ++k) e.add(rp.P_var(m, k), -v(m, k) * pu);
    p.add_nonnegative(e);
  }

  // r_m >= ||(sqrt(v_mk) y_mk)_k||
  for (int m : rp.active_aps) {
    std::vector<AffineExpr> rows;
    rows.push_back(AffineExpr().add(r_var[static_cast<std::size_t>(m)], 1.0));
    for (int k = 0; k < K; ++k) rows.push_back(AffineExpr().add(rp.y_var(m, k), std::sqrt(v(m, k)) * yu));
    p.add_cone(ConeKind::SecondOrder, rows);
  }

  // SINR of UE k
  const double inv_sqrt_g = 1.0 / std::sqrt(gthr);
  for (int k = 0; k < K; ++k) {
    std::vector<AffineExpr> rows;
    AffineExpr head;
    for (int m : rp.active_aps) head.add(rp.y_var(m, k), inv_sqrt_g * v(m, k) * yu / sigma);
    rows.push_back(head);
    for (int kp = 0; kp < K; ++kp) {
      if (kp == k || gram(kp, k) <= 0) continue;
      AffineExpr e;
      const double w = std::sqrt(gram(kp, k)) * yu / sigma;
      for (int m : rp.active_aps)
        if (g(m, kp) > 0) e.add(rp.y_var(m, kp), w * v(m, k) * g(m, k) / g(m, kp));
      rows.push_back(e);
    }
    for (int m : rp.active_aps)
      rows.push_back(AffineExpr().add(r_var[static_cast<std::size_t>(m)], std::sqrt(g(m, k)) / sigma));
    rows.push_back(AffineExpr(1.0));
    p.add_cone(ConeKind::SecondOrder, rows);
  }

  // b - nu A p_sen <= 0, with A = q_a q_b^T - q_c q_c^T written through the
  // two scalars B = q_b^T p_sen / (qb_max pu) and C = q_c^T p_sen / (qc_max pu).
  // Every row is divided by its largest coefficient.
  const auto& s = sc.sensing;
  if (rp.has_crlb) {
    const double nu = sc.config.crlb_limit_m2;
    double qb_max = 0, qc_max = 0;
    for (int m : rp.active_aps) {
      qb_max = std::max(qb_max, std::abs(s.q_b[m]));
      qc_max = std::max(qc_max, std::abs(s.q_c[m]));
    }
    if (qb_max == 0) qb_max = 1;
    if (qc_max == 0) qc_max = 1;
    const int B = p.add_variable("qb_p"), C = p.add_variable("qc_p");
    AffineExpr eb, ec;
    eb.add(B, -1.0);
    ec.add(C, -1.0);
    for (int m : rp.active_aps)
      for (int k = 0; k < K; ++k) {
        eb.add(rp.P_var(m, k), s.q_b[m] / qb_max);
        ec.add(rp.P_var(m, k), s.q_c[m] / qc_max);
      }
    p.add_equality(eb);
    p.add_equality(ec);
    // All M rows: an inactive AP contributes no power but its row still
    // constrains, which keeps the feasible sets nested across active sets.
    for (int m = 0; m < M; ++m) {
      const double cb = nu * s.q_a[m] * qb_max * pu, cc = -nu * s.q_c[m] * qc_max * pu;
      const double scale = std::max({std::abs(s.b[m]), std::abs(cb), std::abs(cc)});
      if (scale == 0) continue;  // 0 >= 0
      AffineExpr e(-s.b[m] / scale);
      e.add(B, cb / scale).add(C, cc / scale);
      p.add_nonnegative(e);
    }
  }

  if (opt.objective == ObjectiveMode::TransmitPower) {
    for (int m : rp.active_aps)
      for (int k = 0; k < K; ++k) p.set_objective(rp.P_var(m, k), 1.0);
  } else {
    // t >= sum y^2 as one rotated cone 2 t (1/2) >= ||y||^2
    const int t = p.add_variable("sum_y2");
    std::vector<AffineExpr> rows = {AffineExpr().add(t, 1.0), AffineExpr(0.5)};
    for (int m : rp.active_aps)
      for (int k = 0; k < K; ++k) rows.push_back(AffineExpr().add(rp.y_var(m, k), 1.0));
    p.add_cone(ConeKind::RotatedSecondOrder, rows);
    p.set_objective(t, 1.0);
  }
  return rp;
}

struct SubproblemResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  bool feasible = false;   // solver optimal and the recovered allocation passes the exact check
  PowerAllocation alloc;
  FeasibilityReport report;
  double relaxed_objective = std::numeric_limits<double>::quiet_NaN();  // in units of rho_DL
  std::string recovered_from;  // "solver" or "scaled-amplitude"
  int iterations = 0;
  double wall_seconds = 0;
  double total_power_w = std::numeric_limits<double>::infinity();
};

// Turns a solver point into an allocation. Two candidates are checked
// against the exact constraints: the solver's P, and the squared amplitudes
// y^2 scaled up by the CRLB factor max(1, crlb(y^2)/nu). A tight SINR row is
// only met to solver accuracy, so each candidate may first be scaled up by at
// most kMaxPolish to close that gap (uniform scaling never lowers an SINR or
// raises the CRLB). The cheaper feasible candidate is returned; if neither
// passes, the solver's P is returned with its failing report.
inline constexpr double kMaxPolish = 1e-3;

inline void polish_sinr(const Scenario& sc, PowerAllocation& alloc) {
  const double gamma = sc.config.sinr_threshold_linear() * (1.0 + 1e-10);
  const double kappa = sinr_scaling_factor(sc, alloc, gamma);
  if (kappa > 1.0 && kappa <= 1.0 + kMaxPolish) alloc.P *= kappa;
}

inline SubproblemResult recover_allocation(const RelaxedProgram& rp, const SocpSolution& sol, const Scenario& sc,
                                           double feas_tol = 1e-6) {
  const int M = sc.num_aps(), K = sc.num_ues();
  SubproblemResult out;
  out.status = sol.status;
  out.relaxed_objective = sol.objective * rp.power_unit;
  out.iterations = sol.iterations;
  out.wall_seconds = sol.wall_seconds;
  std::vector<bool> mask(static_cast<std::size_t>(M), false);
  for (int m : rp.active_aps) mask[static_cast<std::size_t>(m)] = true;
  out.alloc = {Eigen::MatrixXd::Zero(M, K), mask};
  if (!sol.optimal()) {
    out.report = check_feasibility(sc, out.alloc, feas_tol);
    out.report.feasible = false;
    return out;
  }

  PowerAllocation from_P{Eigen::MatrixXd::Zero(M, K), mask};
  PowerAllocation from_y{Eigen::MatrixXd::Zero(M, K), mask};
  for (int m : rp.active_aps)
    for (int k = 0; k < K; ++k) {
      from_P.P(m, k) = std::max(sol.x[rp.P_var(m, k)], 0.0) * rp.power_unit;
      const double y = std::max(sol.x[rp.y_var(m, k)], 0.0);
      from_y.P(m, k) = y * y * rp.power_unit;
    }
  if (sc.config.sensing_enabled()) {
    const double crlb = crlb_trace(sc.sensing, from_y.p_sen());
    if (std::isfinite(crlb)) from_y.P *= std::max(1.0, crlb / sc.config.crlb_limit_m2);
  }
  polish_sinr(sc, from_P);
  polish_sinr(sc, from_y);

  const FeasibilityReport rep_P = check_feasibility(sc, from_P, feas_tol);
  const FeasibilityReport rep_y = check_feasibility(sc, from_y, feas_tol);
  const bool use_y = rep_y.feasible && (!rep_P.feasible || rep_y.total_power_w < rep_P.total_power_w);
  out.alloc = use_y ? from_y : from_P;
  out.report = use_y ? rep_y : rep_P;
  out.recovered_from = use_y ? "scaled-amplitude" : "solver";
  out.feasible = out.report.feasible;
  out.total_power_w = out.report.total_power_w;
  return out;
}

inline SubproblemResult solve_subproblem(const Scenario& sc, const std::vector<bool>& active,
                                         const RelaxedOptions& opt = {}) {
  const RelaxedProgram rp = build_relaxed(sc, active, opt);
  const SocpSolution sol = solve(rp.program, opt.solver);
  return recover_allocation(rp, sol, sc, opt.feas_tol);
}

}  // namespace cfisac
