#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cfisac/config.hpp"
#include "cfisac/rng.hpp"

namespace cfisac {

struct Point {
  double x = 0;
  double y = 0;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Geometry {
  std::vector<Point> ap;
  std::vector<Point> sr;
  std::vector<Point> ue;
  Point target;
};

// Large-scale statistics for all AP-UE pairs.
struct ChannelStats {
  Eigen::MatrixXd varsigma;    // M x K large-scale gains (linear)
  Eigen::MatrixXd v;           // M x K MMSE estimate variances
  Eigen::MatrixXd pilot_gram;  // K x K, |theta_k^H theta_k'|^2
};

// Per-AP localisation information. Row m of the 2x2 Fisher information
// contributed by AP m (per unit sensing power) is [q_a q_c; q_c q_b].
struct SensingCoefficients {
  Eigen::VectorXd q_a;
  Eigen::VectorXd q_b;
  Eigen::VectorXd q_c;
  Eigen::VectorXd b;  // q_a + q_b
  Eigen::MatrixXd A;  // q_a q_b^T - q_c q_c^T
  double zeta = 0;
  Eigen::MatrixXd chi2;  // M x T, |chi_mt|^2
};

struct Scenario {
  SystemConfig config;
  std::uint64_t index = 0;
  Geometry geometry;
  ChannelStats channel;
  SensingCoefficients sensing;
  double sigma2_dl = 0;     // noise power normalised by the downlink power
  double sigma2_ul_mw = 0;  // uplink noise power

  int num_aps() const { return static_cast<int>(channel.v.rows()); }
  int num_ues() const { return static_cast<int>(channel.v.cols()); }
};

// Path-loss law -120.9 - 37.6 log10(d) [dB] plus shadowing. The link distance
// is clamped to 1 m, then expressed in units of `distance_unit_m` metres.
inline double large_scale_fading(double d_m, double shadow_db, double distance_unit_m = 1.0) {
  const double d = std::max(d_m, kMinLinkDistanceM) / distance_unit_m;
  return db_to_linear(-120.9 - 37.6 * std::log10(d) + shadow_db);
}

// Orthonormal pilots when K <= tau_p, otherwise round-robin reuse of the
// tau_p orthonormal sequences.
inline Eigen::MatrixXd assign_pilots(int K, int tau_p) {
  if (K < 1 || tau_p < 1) throw std::invalid_argument("assign_pilots: K and tau_p must be >= 1");
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(K, K);
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp)
      if (k % tau_p == kp % tau_p) gram(k, kp) = 1.0;
  return gram;
}

inline Eigen::MatrixXd estimate_variance(const Eigen::MatrixXd& varsigma, const Eigen::MatrixXd& pilot_gram,
                                         double pilot_power, int pilot_len, double sigma2_ul) {
  const Eigen::Index M = varsigma.rows(), K = varsigma.cols();
  if (pilot_gram.rows() != K || pilot_gram.cols() != K)
    throw std::invalid_argument("estimate_variance: pilot_gram must be K x K");
  const double tp = pilot_len * pilot_power;
  Eigen::MatrixXd v(M, K);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index k = 0; k < K; ++k) {
      double contamination = 0;
      for (Eigen::Index kp = 0; kp < K; ++kp) contamination += varsigma(m, kp) * pilot_gram(k, kp);
      const double s = varsigma(m, k);
      v(m, k) = s == 0 ? 0.0 : tp * s * s / (tp * contamination + sigma2_ul);
    }
  }
  return v;
}

// Bistatic localisation coefficients: direction-cosine sums over all SRs,
// weighted by |chi_mt|^2 and scaled by zeta.
inline SensingCoefficients sensing_coefficients(const Geometry& geo, const Eigen::MatrixXd& chi2, double zeta) {
  const auto M = static_cast<Eigen::Index>(geo.ap.size());
  const auto T = static_cast<Eigen::Index>(geo.sr.size());
  if (chi2.rows() != M || chi2.cols() != T)
    throw std::invalid_argument("sensing_coefficients: chi2 must be M x T");
  SensingCoefficients sc;
  sc.zeta = zeta;
  sc.chi2 = chi2;
  sc.q_a = Eigen::VectorXd::Zero(M);
  sc.q_b = Eigen::VectorXd::Zero(M);
  sc.q_c = Eigen::VectorXd::Zero(M);
  const Point& tg = geo.target;
  for (Eigen::Index m = 0; m < M; ++m) {
    const double r_ap = distance(geo.ap[m], tg);
    const double ax = (geo.ap[m].x - tg.x) / r_ap;
    const double ay = (geo.ap[m].y - tg.y) / r_ap;
    for (Eigen::Index t = 0; t < T; ++t) {
      const double r_sr = distance(geo.sr[t], tg);
      const double cx = ax + (geo.sr[t].x - tg.x) / r_sr;
      const double cy = ay + (geo.sr[t].y - tg.y) / r_sr;
      const double w = zeta * chi2(m, t);
      sc.q_a[m] += w * cx * cx;
      sc.q_b[m] += w * cy * cy;
      sc.q_c[m] += w * cx * cy;
    }
  }
  sc.b = sc.q_a + sc.q_b;
  sc.A = sc.q_a * sc.q_b.transpose() - sc.q_c * sc.q_c.transpose();
  return sc;
}

// Free-space power gain (lambda / (4 pi R))^2, R clamped to 1 m.
inline double free_space_gain(double r_m, double wavelength_m) {
  const double g = wavelength_m / (4.0 * std::numbers::pi * std::max(r_m, kMinLinkDistanceM));
  return g * g;
}

// zeta = 8 pi^2 B^2 / (sigma_S^2 c^2) with sigma_S^2 = N0 B normalised by the
// downlink power, matching the unit of P (multiples of rho_DL).
inline double sensing_zeta(const SystemConfig& cfg) {
  const double sigma2_s = cfg.noise_power_mw() / cfg.dl_power_mw;
  const double b = cfg.bandwidth_hz;
  return 8.0 * std::numbers::pi * std::numbers::pi * b * b / (sigma2_s * kSpeedOfLight * kSpeedOfLight);
}

namespace detail {

inline Point uniform_in_disc(Stream& rng, double radius) {
  const double r = radius * std::sqrt(rng.uniform());
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  return {r * std::cos(phi), r * std::sin(phi)};
}

}  // namespace detail

// Draws one network instance. The RNG stream depends only on
// (master_seed, index), so instances can be generated in any order.
inline Scenario generate_scenario(const SystemConfig& cfg, std::uint64_t index) {
  cfg.validate();
  Stream rng(cfg.master_seed, index);
  const double radius = cfg.area_diameter_m / 2.0;

  Scenario sc;
  sc.config = cfg;
  sc.index = index;
  Geometry& geo = sc.geometry;
  geo.target = {0.0, 0.0};
  auto away_from_target = [&]() {
    for (;;) {
      const Point p = detail::uniform_in_disc(rng, radius);
      if (distance(p, geo.target) >= kMinLinkDistanceM) return p;
    }
  };
  for (int m = 0; m < cfg.M; ++m) geo.ap.push_back(away_from_target());
  for (int t = 0; t < cfg.T; ++t) geo.sr.push_back(away_from_target());
  for (int k = 0; k < cfg.K; ++k) geo.ue.push_back(detail::uniform_in_disc(rng, radius));

  ChannelStats& ch = sc.channel;
  ch.varsigma.resize(cfg.M, cfg.K);
  for (int m = 0; m < cfg.M; ++m)
    for (int k = 0; k < cfg.K; ++k)
      ch.varsigma(m, k) = large_scale_fading(distance(geo.ap[m], geo.ue[k]), cfg.shadow_sigma_db * rng.normal(),
                                             cfg.pathloss_distance_unit_m);
  ch.pilot_gram = assign_pilots(cfg.K, cfg.pilot_len);
  sc.sigma2_ul_mw = cfg.noise_power_mw();
  sc.sigma2_dl = cfg.noise_power_mw() / cfg.dl_power_mw;
  ch.v = estimate_variance(ch.varsigma, ch.pilot_gram, cfg.pilot_power_mw, cfg.pilot_len, sc.sigma2_ul_mw);

  const double lambda = cfg.wavelength_m();
  Eigen::MatrixXd chi2(cfg.M, cfg.T);
  for (int m = 0; m < cfg.M; ++m)
    for (int t = 0; t < cfg.T; ++t)
      chi2(m, t) = free_space_gain(distance(geo.ap[m], geo.target), lambda) *
                   free_space_gain(distance(geo.sr[t], geo.target), lambda) * cfg.rcs_sigma_m2;
  sc.sensing = sensing_coefficients(geo, chi2, sensing_zeta(cfg));
  return sc;
}

// Assembles a scenario from explicit parts (hand-built instances).
inline Scenario make_scenario(const SystemConfig& cfg, Geometry geo, Eigen::MatrixXd varsigma, Eigen::MatrixXd v,
                              Eigen::MatrixXd pilot_gram, Eigen::MatrixXd chi2, double zeta, double sigma2_dl) {
  Scenario sc;
  sc.config = cfg;
  sc.config.M = static_cast<int>(v.rows());
  sc.config.K = static_cast<int>(v.cols());
  sc.config.T = static_cast<int>(chi2.cols());
  sc.sensing = sensing_coefficients(geo, chi2, zeta);
  sc.geometry = std::move(geo);
  sc.channel = {std::move(varsigma), std::move(v), std::move(pilot_gram)};
  sc.sigma2_dl = sigma2_dl;
  sc.sigma2_ul_mw = cfg.noise_power_mw();
  return sc;
}

}  // namespace cfisac
