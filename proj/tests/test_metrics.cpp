#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cfisac/metrics.hpp"

using namespace cfisac;

namespace {

Scenario hand_built(const Eigen::MatrixXd& varsigma, const Eigen::MatrixXd& v, const Eigen::MatrixXd& gram,
                    double sigma2) {
  SystemConfig cfg;
  cfg.crlb_limit_m2 = std::numeric_limits<double>::infinity();
  Geometry geo;
  for (Eigen::Index m = 0; m < v.rows(); ++m) geo.ap.push_back({10.0 + static_cast<double>(m), 5.0});
  geo.sr = {{0, 50}};
  for (Eigen::Index k = 0; k < v.cols(); ++k) geo.ue.push_back({-20.0, static_cast<double>(k)});
  return make_scenario(cfg, geo, varsigma, v, gram, Eigen::MatrixXd::Zero(v.rows(), 1), 0.0, sigma2);
}

// Sensing-only scenario with arbitrary geometry and unit reflectivity.
SensingCoefficients random_sensing(std::mt19937_64& gen, int M, int T) {
  std::uniform_real_distribution<double> pos(-250, 250), w(0.1, 2.0);
  Geometry g;
  for (int m = 0; m < M; ++m) g.ap.push_back({pos(gen), pos(gen)});
  for (int t = 0; t < T; ++t) g.sr.push_back({pos(gen), pos(gen)});
  Eigen::MatrixXd chi2(M, T);
  for (int m = 0; m < M; ++m)
    for (int t = 0; t < T; ++t) chi2(m, t) = w(gen);
  return sensing_coefficients(g, chi2, std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(gen)));
}

// Eq.-level SINR written out independently with explicit loops over k'.
double sinr_oracle(const Scenario& sc, const PowerAllocation& a, int k) {
  const auto& v = sc.channel.v;
  const auto& s = sc.channel.varsigma;
  const auto& th = sc.channel.pilot_gram;
  const int M = sc.num_aps(), K = sc.num_ues();
  double num = 0;
  for (int m = 0; m < M; ++m)
    if (a.active[m]) num += std::sqrt(a.P(m, k)) * v(m, k);
  num *= num;
  double den = sc.sigma2_dl;
  for (int kp = 0; kp < K; ++kp) {
    if (kp != k) {
      double c = 0;
      for (int m = 0; m < M; ++m)
        if (a.active[m]) c += std::sqrt(a.P(m, kp)) * v(m, k) * s(m, k) / s(m, kp);
      den += c * c * th(kp, k);
    }
    for (int m = 0; m < M; ++m)
      if (a.active[m]) den += a.P(m, kp) * v(m, kp) * s(m, k);
  }
  return num / den;
}

}  // namespace

TEST(Sinr, ZeroPowerGivesZero) {
  const Scenario sc = hand_built(Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Constant(2, 2, 0.5),
                                 Eigen::MatrixXd::Identity(2, 2), 0.1);
  EXPECT_EQ(sinr(sc, PowerAllocation::zeros(2, 2)), Eigen::VectorXd::Zero(2));
}

TEST(Sinr, SingleLinkHandValue) {
  const Scenario sc = hand_built(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.5),
                                 Eigen::MatrixXd::Identity(1, 1), 0.1);
  PowerAllocation a = PowerAllocation::zeros(1, 1);
  a.P(0, 0) = 1;
  EXPECT_NEAR(sinr(sc, a)[0], 0.25 / 0.6, 1e-15);
}

TEST(Sinr, MatchesAnIndependentEvaluation) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int M = 4, K = 5;
    Eigen::MatrixXd s(M, K), v(M, K);
    for (int m = 0; m < M; ++m)
      for (int k = 0; k < K; ++k) {
        s(m, k) = u(gen);
        v(m, k) = s(m, k) * u(gen);
      }
    const Scenario sc = hand_built(s, v, assign_pilots(K, 2), 0.05);  // shared pilots: coherent term active
    PowerAllocation a = PowerAllocation::zeros(M, K);
    for (int m = 0; m < M; ++m)
      for (int k = 0; k < K; ++k) a.P(m, k) = u(gen);
    a.active[static_cast<std::size_t>(trial % M)] = false;
    a.P.row(trial % M).setZero();
    const Eigen::VectorXd g = sinr(sc, a);
    for (int k = 0; k < K; ++k) EXPECT_NEAR(g[k] / sinr_oracle(sc, a, k), 1.0, 1e-12);
  }
}

TEST(Sinr, OrthogonalPilotsRemoveCoherentInterference) {
  Eigen::MatrixXd s(2, 2), v(2, 2);
  s << 1.0, 0.5, 0.3, 2.0;
  v << 0.8, 0.4, 0.2, 1.5;
  const Scenario sc = hand_built(s, v, Eigen::MatrixXd::Identity(2, 2), 0.0);
  PowerAllocation a = PowerAllocation::zeros(2, 2);
  a.P << 1, 2, 3, 4;
  const SinrTerms t = sinr_terms(sc, a);
  for (int k = 0; k < 2; ++k) {
    double noncoherent = 0;
    for (int m = 0; m < 2; ++m)
      for (int kp = 0; kp < 2; ++kp) noncoherent += a.P(m, kp) * v(m, kp) * s(m, k);
    EXPECT_NEAR(t.interference[k], noncoherent, 1e-14);
  }
}

TEST(Sinr, NoiseFreeIsScaleInvariantAndNoisyIsMonotone) {
  Eigen::MatrixXd s(3, 2), v(3, 2);
  s << 1.0, 0.2, 0.5, 0.9, 0.1, 0.4;
  v = s * 0.7;
  const Scenario quiet = hand_built(s, v, Eigen::MatrixXd::Ones(2, 2), 0.0);
  const Scenario noisy = hand_built(s, v, Eigen::MatrixXd::Ones(2, 2), 0.3);
  PowerAllocation a = PowerAllocation::zeros(3, 2);
  a.P << 0.3, 1.2, 0.8, 0.1, 2.0, 0.5;
  PowerAllocation b = a;
  b.P *= 2;
  EXPECT_TRUE(sinr(quiet, a).isApprox(sinr(quiet, b), 1e-14));
  const Eigen::VectorXd lo = sinr(noisy, a), hi = sinr(noisy, b);
  for (int k = 0; k < 2; ++k) EXPECT_GE(hi[k], lo[k]);
}

TEST(Sinr, ScalingFactorReachesTheTarget) {
  Eigen::MatrixXd s(2, 2), v(2, 2);
  s << 1.0, 0.05, 0.04, 1.0;
  v = s * 0.9;
  const Scenario sc = hand_built(s, v, Eigen::MatrixXd::Identity(2, 2), 0.5);
  PowerAllocation a = PowerAllocation::zeros(2, 2);
  a.P << 0.1, 0, 0, 0.1;
  const double gamma = 0.5;
  const double kappa = sinr_scaling_factor(sc, a, gamma);
  ASSERT_TRUE(std::isfinite(kappa));
  EXPECT_GT(kappa, 1.0);
  PowerAllocation b = a;
  b.P *= kappa;
  EXPECT_NEAR(sinr(sc, b).minCoeff(), gamma, 1e-12);
  EXPECT_TRUE(std::isinf(sinr_scaling_factor(sc, a, 100.0)));
  EXPECT_EQ(sinr_scaling_factor(sc, a, 1e-6), 1.0);
}

TEST(Crlb, TwoApsHandValue) {
  const double R = 100;
  Geometry g;
  g.ap = {{R, 0}, {-R, 0}};
  g.sr = {{0, R}};
  const SensingCoefficients s = sensing_coefficients(g, Eigen::MatrixXd::Ones(2, 1), 1.0);
  const Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  EXPECT_NEAR(s.q_a.dot(p), 2.0, 1e-14);
  EXPECT_NEAR(s.q_b.dot(p), 2.0, 1e-14);
  EXPECT_NEAR(s.q_c.dot(p), 0.0, 1e-14);
  EXPECT_NEAR(crlb_trace(s, p), 1.0, 1e-14);
}

TEST(Crlb, RankOneInformationIsSingular) {
  Geometry g;
  g.ap = {{60, 0}};
  g.sr = {{0, 60}};
  const SensingCoefficients s = sensing_coefficients(g, Eigen::MatrixXd::Ones(1, 1), 1.0);
  EXPECT_TRUE(std::isinf(crlb_trace(s, Eigen::VectorXd::Ones(1))));
  EXPECT_TRUE(std::isinf(crlb_trace(s, Eigen::VectorXd::Zero(1))));
  EXPECT_THROW(crlb_trace(s, Eigen::VectorXd::Ones(2)), std::invalid_argument);
}

TEST(Crlb, RankOneDeterminantDoesNotPickUpRoundingNoise) {
  // one AP, one receiver, awkward coordinates: a*b - c^2 vanishes up to the
  // rounding of the stored coefficients only
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> pos(-250, 250);
  for (int trial = 0; trial < 200; ++trial) {
    Geometry g;
    g.ap = {{pos(gen), pos(gen)}};
    g.sr = {{pos(gen), pos(gen)}};
    const SensingCoefficients s = sensing_coefficients(g, Eigen::MatrixXd::Constant(1, 1, 3.7e9), 1.3e5);
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 2.1e21);
    const double ab = s.q_a[0] * p[0] * s.q_b[0] * p[0];
    EXPECT_LE(std::abs(fisher_determinant(s, p)), 1e-15 * ab) << trial;
  }
}

TEST(Crlb, DeterminantIsTheQuadraticForm) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 50; ++trial) {
    const SensingCoefficients s = random_sensing(gen, 6, 3);
    Eigen::VectorXd p = Eigen::VectorXd::Random(6).cwiseAbs();
    EXPECT_NEAR(fisher_determinant(s, p) / p.dot(s.A * p), 1.0, 1e-10);
    // trace of the inverse of [a c; c b] is (a + b) / det
    Eigen::Matrix2d J;
    J << s.q_a.dot(p), s.q_c.dot(p), s.q_c.dot(p), s.q_b.dot(p);
    EXPECT_NEAR(crlb_trace(s, p) / J.inverse().trace(), 1.0, 1e-9);
  }
}

TEST(Crlb, HomogeneousOfDegreeMinusOne) {
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> lk(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const SensingCoefficients s = random_sensing(gen, 5, 2);
    const Eigen::VectorXd p = Eigen::VectorXd::Random(5).cwiseAbs();
    const double kappa = std::pow(10.0, lk(gen));
    const double base = crlb_trace(s, p);
    if (!std::isfinite(base)) continue;
    EXPECT_NEAR(crlb_trace(s, kappa * p) * kappa / base, 1.0, 1e-9);
  }
}

TEST(Crlb, LinearRowsImplyTheExactBound) {
  // p^T (b - nu A p) <= 0 with p >= 0 gives b^T p <= nu p^T A p
  std::mt19937_64 gen(31);
  int tested = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const SensingCoefficients s = random_sensing(gen, 4, 3);
    Eigen::VectorXd p = Eigen::VectorXd::Random(4).cwiseAbs();
    const Eigen::VectorXd Ap = s.A * p;
    if (!(p.dot(Ap) > 0)) continue;
    double nu = 0;  // smallest nu making every row hold, if any
    bool ok = true;
    for (int m = 0; m < 4; ++m) {
      if (Ap[m] <= 0) {
        ok = ok && s.b[m] <= 0;
        continue;
      }
      nu = std::max(nu, s.b[m] / Ap[m]);
    }
    if (!ok) continue;
    EXPECT_LE(crlb_trace(s, p), nu * (1 + 1e-9));
    ++tested;
  }
  EXPECT_GT(tested, 20);
}

TEST(Feasibility, ZeroAllocationFailsSinrEverywhere) {
  const Scenario sc = generate_scenario(SystemConfig{}, 0);
  const FeasibilityReport r = check_feasibility(sc, PowerAllocation::zeros(30, 6));
  EXPECT_FALSE(r.feasible);
  EXPECT_FALSE(r.sinr_ok);
  EXPECT_EQ(r.sinr, Eigen::VectorXd::Zero(6));
  EXPECT_TRUE(std::isinf(r.crlb_trace));
  EXPECT_FALSE(r.crlb_ok);
  EXPECT_EQ(r.transmit_power_w, 0.0);
  EXPECT_EQ(r.total_power_w, 30 * 0.2);
}

TEST(Feasibility, PowerAccounting) {
  const Scenario sc = generate_scenario(SystemConfig{}, 0);
  PowerAllocation a = PowerAllocation::zeros(30, 6);
  for (int m = 10; m < 30; ++m) a.active[static_cast<std::size_t>(m)] = false;
  a.P.topRows(10).setConstant(0.5);
  const FeasibilityReport r = check_feasibility(sc, a);
  EXPECT_NEAR(r.transmit_power_w, 100.0 * 30 / 1000.0, 1e-12);  // rho_DL * sum P, in W
  EXPECT_NEAR(r.circuit_power_w, 10 * 0.2, 1e-12);
  EXPECT_NEAR(r.total_power_w, 3.0 + 2.0, 1e-12);
  EXPECT_EQ(r.active_count, 10);
  for (int m = 10; m < 30; ++m) EXPECT_EQ(r.budget_slack[m], 1.0);
}

TEST(Feasibility, FlagsEachConstraintFamily) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Ones(1, 1), v = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const Scenario sc = hand_built(s, v, Eigen::MatrixXd::Identity(1, 1), 0.1);
  PowerAllocation a = PowerAllocation::zeros(1, 1);
  a.P(0, 0) = 1.0;  // SINR 0.4167 > 0.2754, budget slack 0.5
  EXPECT_TRUE(check_feasibility(sc, a).feasible);
  a.P(0, 0) = 3.0;  // budget 1 - 1.5 < 0
  EXPECT_FALSE(check_feasibility(sc, a).budget_ok);
  a.P(0, 0) = 0.1;  // SINR 0.025/0.15
  EXPECT_FALSE(check_feasibility(sc, a).sinr_ok);
  a.P(0, 0) = -0.1;
  EXPECT_FALSE(check_feasibility(sc, a).well_formed);
  PowerAllocation inactive = PowerAllocation::zeros(1, 1);
  inactive.active[0] = false;
  inactive.P(0, 0) = 1.0;
  EXPECT_FALSE(check_feasibility(sc, inactive).feasible);
  PowerAllocation wrong = PowerAllocation::zeros(2, 1);
  EXPECT_THROW(check_feasibility(sc, wrong), std::invalid_argument);
}

TEST(Feasibility, ToleranceIsRelativeToEachScale) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Ones(1, 1), v = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const Scenario sc = hand_built(s, v, Eigen::MatrixXd::Identity(1, 1), 0.1);
  const double g = sc.config.sinr_threshold_linear();
  // SINR 0.25P/(0.5P+0.1) = g  ->  P = 0.1 g / (0.25 - 0.5 g)
  const double p_exact = 0.1 * g / (0.25 - 0.5 * g);
  PowerAllocation a = PowerAllocation::zeros(1, 1);
  a.P(0, 0) = p_exact * (1 - 1e-8);
  EXPECT_TRUE(check_feasibility(sc, a).sinr_ok);
  a.P(0, 0) = p_exact * (1 - 1e-4);
  EXPECT_FALSE(check_feasibility(sc, a).sinr_ok);
  EXPECT_TRUE(check_feasibility(sc, a, 1e-3).sinr_ok);
}

TEST(Feasibility, CrlbCheckUsesTheExactQuadratic) {
  SystemConfig cfg;  // nu = 1
  Geometry g;
  g.ap = {{100, 0}, {-100, 0}};
  g.sr = {{0, 100}};
  g.ue = {{0, 0}};
  const Scenario sc = make_scenario(cfg, g, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Constant(2, 1, 0.5),
                                    Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Ones(2, 1), 1.0, 0.01);
  PowerAllocation a = PowerAllocation::zeros(2, 1);
  a.P << 0.5, 0.5;  // crlb = (2*0.5+2*0.5)/(1*1) = 2
  FeasibilityReport r = check_feasibility(sc, a);
  EXPECT_NEAR(r.crlb_trace, 2.0, 1e-12);
  EXPECT_FALSE(r.crlb_ok);
  a.P << 1.0, 1.0;
  r = check_feasibility(sc, a);
  EXPECT_NEAR(r.crlb_trace, 1.0, 1e-12);
  EXPECT_TRUE(r.crlb_ok);
  EXPECT_EQ(r.relaxed_crlb_slack.size(), 2);
}
