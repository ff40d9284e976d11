#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cfisac/baselines.hpp"
#include "cfisac/selector.hpp"

using namespace cfisac;

namespace {

SystemConfig cfg_of(int M, int K, int T) {
  SystemConfig cfg;
  cfg.M = M;
  cfg.K = K;
  cfg.T = T;
  cfg.master_seed = 77;
  return cfg;
}

}  // namespace

TEST(Decoupled, ReturnsAnExactlyFeasibleAllocation) {
  for (std::uint64_t idx = 0; idx < 6; ++idx) {
    const Scenario sc = generate_scenario(cfg_of(10, 3, 3), idx);
    const DecoupledResult d = decoupled(sc);
    ASSERT_TRUE(d.found) << idx;
    EXPECT_TRUE(d.report.feasible);
    EXPECT_LE(d.report.crlb_trace, sc.config.crlb_limit_m2 * (1 + 1e-9));
    ASSERT_FALSE(d.log.empty());
    EXPECT_EQ(d.log.back().outcome, "accepted");
    EXPECT_GE(d.log.back().kappa, 1.0);
    EXPECT_EQ(d.report.active_count, d.log.back().size);
    EXPECT_EQ(static_cast<int>(d.log.size()), d.solves);
  }
}

TEST(Decoupled, ActiveSetIsTheTopRankedPrefix) {
  const Scenario sc = generate_scenario(cfg_of(10, 3, 3), 2);
  const DecoupledResult d = decoupled(sc);
  ASSERT_TRUE(d.found);
  const std::vector<int> order = decoupled_ranking(sc);
  const Eigen::VectorXd score = sc.channel.v.rowwise().sum();
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_GE(score[order[i - 1]], score[order[i]]);
  for (int j = 0; j < 10; ++j) {
    const bool in_prefix = std::find(order.begin(), order.begin() + d.report.active_count, j) !=
                           order.begin() + d.report.active_count;
    EXPECT_EQ(static_cast<bool>(d.alloc.active[static_cast<std::size_t>(j)]), in_prefix) << j;
  }
}

TEST(Decoupled, RankingBreaksTiesByIndex) {
  SystemConfig cfg = cfg_of(3, 1, 1);
  Geometry geo;
  geo.ap = {{10, 0}, {20, 0}, {30, 0}};
  geo.sr = {{0, 10}};
  geo.ue = {{0, 0}};
  Eigen::MatrixXd v(3, 1);
  v << 1e-10, 2e-10, 1e-10;
  const Scenario sc = make_scenario(cfg, geo, v * 2, v, Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(3, 1),
                                    0.0, 1e-12);
  EXPECT_EQ(decoupled_ranking(sc), (std::vector<int>{1, 0, 2}));
}

TEST(Decoupled, KappaIsOneWithoutSensing) {
  SystemConfig cfg = cfg_of(6, 2, 2);
  cfg.crlb_limit_m2 = std::numeric_limits<double>::infinity();
  const Scenario sc = generate_scenario(cfg, 0);
  const DecoupledResult d = decoupled(sc);
  ASSERT_TRUE(d.found);
  EXPECT_EQ(d.log.back().kappa, 1.0);
}

TEST(Decoupled, ScaledOutputMeetsTheSensingLimitExactly) {
  // crlb(kappa p) = crlb(p) / kappa, so the scaled allocation sits at nu
  // whenever kappa > 1.
  for (std::uint64_t idx = 0; idx < 5; ++idx) {
    const Scenario sc = generate_scenario(cfg_of(8, 2, 3), idx);
    const DecoupledResult d = decoupled(sc);
    ASSERT_TRUE(d.found);
    if (d.log.back().kappa > 1.0) EXPECT_NEAR(d.report.crlb_trace / sc.config.crlb_limit_m2, 1.0, 1e-9);
    EXPECT_GE(d.report.sinr.minCoeff(), sc.config.sinr_threshold_linear() * (1 - 1e-6));
  }
}

TEST(Decoupled, ReportsWhenNoSizeWorks) {
  SystemConfig cfg = cfg_of(4, 2, 2);
  cfg.sinr_threshold_db = 30;
  const DecoupledResult d = decoupled(generate_scenario(cfg, 0));
  EXPECT_FALSE(d.found);
  ASSERT_EQ(d.log.size(), 4u);
  for (const auto& s : d.log) EXPECT_EQ(s.outcome, "comm-infeasible");
  EXPECT_FALSE(d.report.feasible);
}

TEST(FullAp, EqualsTheBranchAndBoundRoot) {
  for (std::uint64_t idx = 0; idx < 3; ++idx) {
    const Scenario sc = generate_scenario(cfg_of(8, 3, 3), idx);
    const SubproblemResult full = full_ap_relaxed(sc);
    const BBResult bb = modified_bb(sc);
    ASSERT_TRUE(full.feasible);
    EXPECT_EQ(full.alloc.P, bb.root.alloc.P);
    EXPECT_EQ(full.total_power_w, bb.root.total_power_w);
    EXPECT_EQ(full.report.active_count, 8);
    EXPECT_GE(full.total_power_w, bb.report.total_power_w);
  }
}

TEST(FullAp, HasTheLowestTransmitPowerWithoutCircuitCost) {
  SystemConfig cfg = cfg_of(8, 3, 3);
  cfg.circuit_power_mw = 0;
  for (std::uint64_t idx = 0; idx < 3; ++idx) {
    const Scenario sc = generate_scenario(cfg, idx);
    const SubproblemResult full = full_ap_relaxed(sc);
    const DecoupledResult d = decoupled(sc);
    ASSERT_TRUE(full.feasible);
    // every subset's relaxed optimum is at least the full-set optimum
    std::vector<bool> mask(8, true);
    for (int m = 0; m < 4; ++m) {
      mask[static_cast<std::size_t>(m)] = false;
      const SubproblemResult r = solve_subproblem(sc, mask);
      if (r.feasible) EXPECT_GE(r.relaxed_objective, full.relaxed_objective * (1 - 1e-6)) << idx << " " << m;
    }
    if (d.found) EXPECT_GE(d.report.transmit_power_w, full.report.transmit_power_w * (1 - 1e-6));
  }
}
