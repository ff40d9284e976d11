#pragma once

// Reference methods: the decoupled incremental method (communication-only
// solve, then a uniform power scale-up for the CRLB) and the one-shot
// full-AP relaxed solve.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cfisac/metrics.hpp"
#include "cfisac/relaxed_problem.hpp"

namespace cfisac {

struct DecoupledStep {
  int size = 0;  // i, number of candidate APs
  SolveStatus solver_status = SolveStatus::NumericalFailure;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  std::string outcome;  // "accepted", "comm-infeasible", "sensing-singular", "budget-violated", "not-exact"
};

struct DecoupledResult {
  bool found = false;
  PowerAllocation alloc;
  FeasibilityReport report;
  std::vector<DecoupledStep> log;
  int solves = 0;
  double wall_seconds = 0;
};

// APs ranked by sum_k v_mk, descending; ties keep the lower index first.
inline std::vector<int> decoupled_ranking(const Scenario& sc) {
  const int M = sc.num_aps();
  std::vector<int> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd score = sc.channel.v.rowwise().sum();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

inline DecoupledResult decoupled(const Scenario& sc, const RelaxedOptions& base = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const int M = sc.num_aps(), K = sc.num_ues();
  const double nu = sc.config.crlb_limit_m2;
  RelaxedOptions opt = base;
  opt.include_crlb = false;
  const std::vector<int> order = decoupled_ranking(sc);

  DecoupledResult res;
  for (int i = 1; i <= M; ++i) {
    std::vector<bool> mask(static_cast<std::size_t>(M), false);
    for (int j = 0; j < i; ++j) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = true;
    DecoupledStep step;
    step.size = i;
    const RelaxedProgram rp = build_relaxed(sc, mask, opt);
    const SocpSolution sol = solve(rp.program, opt.solver);
    ++res.solves;
    step.solver_status = sol.status;
    if (!sol.optimal()) {
      step.outcome = "comm-infeasible";
      res.log.push_back(step);
      continue;
    }
    PowerAllocation a{Eigen::MatrixXd::Zero(M, K), mask};
    for (int m : rp.active_aps)
      for (int k = 0; k < K; ++k) a.P(m, k) = std::max(sol.x[rp.P_var(m, k)], 0.0) * rp.power_unit;
    polish_sinr(sc, a);

    double kappa = 1.0;
    if (sc.config.sensing_enabled()) {
      const Eigen::VectorXd p = a.p_sen();
      const double det = fisher_determinant(sc.sensing, p);
      if (!(det > 0)) {
        step.outcome = "sensing-singular";
        res.log.push_back(step);
        continue;
      }
      kappa = std::max(sc.sensing.b.dot(p) / (nu * det), 1.0);
    }
    step.kappa = kappa;
    a.P *= kappa;

    const FeasibilityReport rep = check_feasibility(sc, a, opt.feas_tol);
    if (!rep.budget_ok) {
      step.outcome = "budget-violated";
      res.log.push_back(step);
      continue;
    }
    if (!rep.feasible) {
      step.outcome = "not-exact";
      res.log.push_back(step);
      continue;
    }
    step.outcome = "accepted";
    res.log.push_back(step);
    res.found = true;
    res.alloc = a;
    res.report = rep;
    break;
  }
  if (!res.found) {
    res.alloc = PowerAllocation::zeros(M, K);
    res.report = check_feasibility(sc, res.alloc, opt.feas_tol);
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline SubproblemResult full_ap_relaxed(const Scenario& sc, const RelaxedOptions& opt = {}) {
  return solve_subproblem(sc, std::vector<bool>(static_cast<std::size_t>(sc.num_aps()), true), opt);
}

}  // namespace cfisac
