#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "cfisac/relaxed_problem.hpp"

using namespace cfisac;

namespace {

// One AP, one UE, orthogonal pilot, sensing switched off.
Scenario single_link(double v, double varsigma, double sigma2_dl) {
  SystemConfig cfg;
  cfg.M = cfg.K = cfg.T = 1;
  cfg.crlb_limit_m2 = std::numeric_limits<double>::infinity();
  Geometry geo;
  geo.ap = {{100, 0}};
  geo.sr = {{0, 100}};
  geo.ue = {{50, 50}};
  return make_scenario(cfg, geo, Eigen::MatrixXd::Constant(1, 1, varsigma), Eigen::MatrixXd::Constant(1, 1, v),
                       Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1), 0.0, sigma2_dl);
}

std::vector<bool> all_on(int M) { return std::vector<bool>(static_cast<std::size_t>(M), true); }

SystemConfig small_config(int M, int K, bool sensing) {
  SystemConfig cfg;
  cfg.M = M;
  cfg.K = K;
  cfg.master_seed = 11;
  if (!sensing) cfg.crlb_limit_m2 = std::numeric_limits<double>::infinity();
  return cfg;
}

}  // namespace

TEST(RelaxedProblem, SingleLinkMatchesClosedForm) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const double vs = std::pow(10.0, -12 + 4 * u01(gen));
    const double v = vs * (0.3 + 0.7 * u01(gen));
    const double s2 = 8e-12 * std::pow(10.0, 2 * u01(gen) - 1);
    const Scenario sc = single_link(v, vs, s2);
    const double g = sc.config.sinr_threshold_linear();
    const double expect = g * s2 / (v * v - g * v * vs);
    if (expect * v > 1) continue;  // budget would bind
    const SubproblemResult r = solve_subproblem(sc, all_on(1));
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    ASSERT_TRUE(r.feasible);
    EXPECT_NEAR(r.alloc.P(0, 0) / expect, 1.0, 1e-6);
    EXPECT_NEAR(r.relaxed_objective / expect, 1.0, 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(RelaxedProblem, SingleLinkBelowThresholdIsInfeasible) {
  const Scenario probe = single_link(1e-10, 1e-10, 8e-12);
  const double g = probe.config.sinr_threshold_linear();
  for (double ratio : {0.1, 0.5, 0.99, 1.0}) {
    // v <= gamma * varsigma: no finite power meets the SINR target
    const double vs = 2e-10, v = ratio * g * vs;
    const SubproblemResult r = solve_subproblem(single_link(v, vs, 8e-12), all_on(1));
    EXPECT_EQ(r.status, SolveStatus::Infeasible) << ratio;
    EXPECT_FALSE(r.feasible);
  }
}

TEST(RelaxedProblem, ObjectiveModesAgreeWithoutSensing) {
  for (std::uint64_t idx = 0; idx < 4; ++idx) {
    const Scenario sc = generate_scenario(small_config(8, 3, false), idx);
    RelaxedOptions lit;
    lit.objective = ObjectiveMode::PaperLiteral;
    const SubproblemResult a = solve_subproblem(sc, all_on(8));
    const SubproblemResult b = solve_subproblem(sc, all_on(8), lit);
    ASSERT_EQ(a.feasible, b.feasible) << idx;
    if (!a.feasible) continue;
    EXPECT_NEAR(a.relaxed_objective / b.relaxed_objective, 1.0, 1e-6) << idx;
    EXPECT_NEAR(a.report.transmit_power_w / b.report.transmit_power_w, 1.0, 1e-6) << idx;
  }
}

TEST(RelaxedProblem, EpigraphIsTightWhenSensingIsSlack) {
  const Scenario sc = generate_scenario(small_config(10, 4, false), 2);
  const RelaxedProgram rp = build_relaxed(sc, all_on(10));
  const SocpSolution sol = solve(rp.program);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  double largest = 0;
  for (int m = 0; m < 10; ++m)
    for (int k = 0; k < 4; ++k) largest = std::max(largest, sol.x[rp.P_var(m, k)]);
  for (int m = 0; m < 10; ++m)
    for (int k = 0; k < 4; ++k) {
      const double P = sol.x[rp.P_var(m, k)], y = sol.x[rp.y_var(m, k)];
      EXPECT_LE(P - y * y, 1e-6 * largest);
    }
}

TEST(RelaxedProblem, ShrinkingTheActiveSetNeverLowersTheOptimum) {
  for (std::uint64_t idx = 0; idx < 3; ++idx) {
    const Scenario sc = generate_scenario(small_config(10, 3, true), idx);
    std::vector<bool> mask = all_on(10);
    double prev = 0;
    for (int drop = 0; drop < 9; ++drop) {
      const SubproblemResult r = solve_subproblem(sc, mask);
      if (r.status == SolveStatus::Infeasible) break;  // stays infeasible for subsets
      ASSERT_TRUE(r.status == SolveStatus::Optimal) << idx << " " << drop;
      EXPECT_GE(r.relaxed_objective, prev * (1 - 1e-6)) << idx << " " << drop;
      prev = r.relaxed_objective;
      mask[static_cast<std::size_t>((3 * drop + static_cast<int>(idx)) % 10)] = false;
      if (std::count(mask.begin(), mask.end(), true) == 0) break;
    }
  }
}

TEST(RelaxedProblem, InfeasibilityPropagatesToSubsets) {
  // Nested feasible sets: once infeasible, every subset must stay infeasible.
  const Scenario sc = generate_scenario(small_config(6, 4, true), 5);
  std::vector<bool> mask = all_on(6);
  bool seen_infeasible = false;
  for (int m = 0; m < 5; ++m) {
    const SubproblemResult r = solve_subproblem(sc, mask);
    if (seen_infeasible) EXPECT_FALSE(r.feasible) << m;
    seen_infeasible = seen_infeasible || r.status == SolveStatus::Infeasible;
    mask[static_cast<std::size_t>(m)] = false;
  }
}

TEST(RelaxedProblem, RecoveredAllocationsPassTheExactCheck) {
  std::mt19937_64 gen(5);
  int feasible = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Scenario sc = generate_scenario(small_config(12, 4, true), static_cast<std::uint64_t>(trial % 6));
    std::vector<bool> mask(12);
    for (auto&& b : mask) b = gen() % 3 != 0;
    if (std::count(mask.begin(), mask.end(), true) == 0) mask[0] = true;
    const SubproblemResult r = solve_subproblem(sc, mask);
    EXPECT_NE(r.status, SolveStatus::NumericalFailure);
    if (!r.alloc.well_formed()) ADD_FAILURE() << "malformed allocation";
    for (int m = 0; m < 12; ++m)
      if (!mask[static_cast<std::size_t>(m)]) EXPECT_EQ(r.alloc.P.row(m).norm(), 0.0);
    if (r.status != SolveStatus::Optimal) continue;
    EXPECT_TRUE(r.feasible) << trial;
    EXPECT_LE(r.report.crlb_trace, sc.config.crlb_limit_m2 * (1 + 1e-6));
    EXPECT_GE(r.report.sinr.minCoeff(), sc.config.sinr_threshold_linear() * (1 - 1e-6));
    EXPECT_GE(r.report.budget_slack.minCoeff(), -1e-6);
    // recovered power never undercuts the relaxed optimum by more than the polish allowance
    EXPECT_GE(r.alloc.P.sum(), r.relaxed_objective * (1 - 1e-6));
    ++feasible;
  }
  EXPECT_GT(feasible, 15);
}

TEST(RelaxedProblem, SolverPointSatisfiesTheLinearSensingRows) {
  const Scenario sc = generate_scenario(small_config(10, 3, true), 1);
  const RelaxedProgram rp = build_relaxed(sc, all_on(10));
  const SocpSolution sol = solve(rp.program);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(10);
  for (int m = 0; m < 10; ++m)
    for (int k = 0; k < 3; ++k) p[m] += sol.x[rp.P_var(m, k)] * rp.power_unit;
  const Eigen::VectorXd row = sc.sensing.b - sc.config.crlb_limit_m2 * (sc.sensing.A * p);
  for (int m = 0; m < 10; ++m) {
    const double scale = std::max(std::abs(sc.sensing.b[m]), std::abs(sc.config.crlb_limit_m2 * sc.sensing.A.row(m).dot(p)));
    EXPECT_LE(row[m], 1e-6 * scale) << m;
  }
}

TEST(RelaxedProblem, SolvesAreDeterministic) {
  const Scenario sc = generate_scenario(small_config(9, 3, true), 4);
  const RelaxedProgram rp1 = build_relaxed(sc, all_on(9));
  const RelaxedProgram rp2 = build_relaxed(sc, all_on(9));
  const SocpSolution a = solve(rp1.program), b = solve(rp2.program);
  ASSERT_EQ(a.x.size(), b.x.size());
  EXPECT_EQ(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * static_cast<std::size_t>(a.x.size())), 0);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(RelaxedProblem, RejectsEmptyOrMismatchedMasks) {
  const Scenario sc = generate_scenario(small_config(4, 2, true), 0);
  EXPECT_THROW(build_relaxed(sc, std::vector<bool>(4, false)), std::invalid_argument);
  EXPECT_THROW(build_relaxed(sc, std::vector<bool>(3, true)), std::invalid_argument);
}

TEST(RelaxedProblem, RecoveryClampsTinyNegativesAndZeroFillsInactiveRows) {
  const Scenario sc = generate_scenario(small_config(3, 2, false), 0);
  const std::vector<bool> mask = {true, false, true};
  const RelaxedProgram rp = build_relaxed(sc, mask);
  SocpSolution fake;
  fake.status = SolveStatus::Optimal;
  fake.objective = 0;
  fake.x = Eigen::VectorXd::Zero(rp.program.n);
  fake.x[rp.P_var(0, 0)] = -1e-12;
  fake.x[rp.y_var(0, 0)] = -1e-7;
  const SubproblemResult r = recover_allocation(rp, fake, sc);
  EXPECT_EQ(r.alloc.P(0, 0), 0.0);
  EXPECT_EQ(r.alloc.P.row(1).norm(), 0.0);
  EXPECT_FALSE(r.alloc.active[1]);
  EXPECT_TRUE(r.alloc.well_formed());
  EXPECT_FALSE(r.feasible);  // zero power cannot meet the SINR target
}

TEST(RelaxedProblem, ObjectiveModeNames) {
  EXPECT_EQ(parse_objective_mode("transmit"), ObjectiveMode::TransmitPower);
  EXPECT_EQ(parse_objective_mode("paper-literal"), ObjectiveMode::PaperLiteral);
  EXPECT_STREQ(to_string(ObjectiveMode::PaperLiteral), "paper-literal");
  EXPECT_THROW(parse_objective_mode("sum"), std::invalid_argument);
}
