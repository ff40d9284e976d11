#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cfisac/scenario.hpp"

namespace cfisac {

// Per-(AP,UE) downlink power coefficients in units of rho_DL plus the
// active-AP mask. Rows of inactive APs are zero.
struct PowerAllocation {
  Eigen::MatrixXd P;
  std::vector<bool> active;

  static PowerAllocation zeros(int M, int K) {
    return {Eigen::MatrixXd::Zero(M, K), std::vector<bool>(static_cast<std::size_t>(M), true)};
  }

  Eigen::VectorXd p_sen() const { return P.rowwise().sum(); }

  int num_active() const {
    int n = 0;
    for (bool a : active) n += a ? 1 : 0;
    return n;
  }

  // True when P >= 0 and inactive rows are zero.
  bool well_formed() const {
    if (static_cast<Eigen::Index>(active.size()) != P.rows()) return false;
    for (Eigen::Index m = 0; m < P.rows(); ++m)
      for (Eigen::Index k = 0; k < P.cols(); ++k) {
        const double p = P(m, k);
        if (!(p >= 0) || !std::isfinite(p)) return false;
        if (!active[static_cast<std::size_t>(m)] && p != 0) return false;
      }
    return true;
  }
};

inline void require_shape(const Scenario& sc, const PowerAllocation& alloc) {
  if (alloc.P.rows() != sc.num_aps() || alloc.P.cols() != sc.num_ues() ||
      static_cast<int>(alloc.active.size()) != sc.num_aps())
    throw std::invalid_argument("allocation shape does not match scenario");
}

// Numerator and the power-dependent part of the denominator of each UE's
// SINR. Both scale linearly with a uniform power factor; noise does not.
struct SinrTerms {
  Eigen::VectorXd signal;
  Eigen::VectorXd interference;  // coherent + noncoherent
};

inline SinrTerms sinr_terms(const Scenario& sc, const PowerAllocation& alloc) {
  require_shape(sc, alloc);
  const int M = sc.num_aps(), K = sc.num_ues();
  const Eigen::MatrixXd& v = sc.channel.v;
  const Eigen::MatrixXd& g = sc.channel.varsigma;
  const Eigen::MatrixXd& gram = sc.channel.pilot_gram;

  Eigen::MatrixXd amp = Eigen::MatrixXd::Zero(M, K);
  for (int m = 0; m < M; ++m)
    if (alloc.active[m])
      for (int k = 0; k < K; ++k) amp(m, k) = std::sqrt(std::max(alloc.P(m, k), 0.0));

  // Power radiated by AP m, normalised: sum_k' P_mk' v_mk'.
  Eigen::VectorXd radiated = Eigen::VectorXd::Zero(M);
  for (int m = 0; m < M; ++m)
    if (alloc.active[m])
      for (int k = 0; k < K; ++k) radiated[m] += alloc.P(m, k) * v(m, k);

  SinrTerms t{Eigen::VectorXd(K), Eigen::VectorXd(K)};
  for (int k = 0; k < K; ++k) {
    double signal = 0;
    for (int m = 0; m < M; ++m) signal += amp(m, k) * v(m, k);
    t.signal[k] = signal * signal;

    double coherent = 0;
    for (int kp = 0; kp < K; ++kp) {
      if (kp == k || gram(kp, k) == 0) continue;
      double s = 0;
      for (int m = 0; m < M; ++m)
        if (g(m, kp) > 0) s += amp(m, kp) * v(m, k) * g(m, k) / g(m, kp);
      coherent += s * s * gram(kp, k);
    }
    double noncoherent = 0;
    for (int m = 0; m < M; ++m) noncoherent += radiated[m] * g(m, k);
    t.interference[k] = coherent + noncoherent;
  }
  return t;
}

// Closed-form downlink SINR of every UE for the given allocation.
inline Eigen::VectorXd sinr(const Scenario& sc, const PowerAllocation& alloc) {
  const SinrTerms t = sinr_terms(sc, alloc);
  Eigen::VectorXd out(t.signal.size());
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const double denom = t.interference[k] + sc.sigma2_dl;
    out[k] = denom > 0 ? t.signal[k] / denom : 0.0;
  }
  return out;
}

// Smallest kappa >= 1 such that every UE meets gamma under kappa * P, or +inf
// when no uniform scaling does (interference-limited or zero signal).
inline double sinr_scaling_factor(const Scenario& sc, const PowerAllocation& alloc, double gamma) {
  const SinrTerms t = sinr_terms(sc, alloc);
  double kappa = 1.0;
  for (Eigen::Index k = 0; k < t.signal.size(); ++k) {
    const double margin = t.signal[k] - gamma * t.interference[k];
    if (!(margin > 0)) return std::numeric_limits<double>::infinity();
    kappa = std::max(kappa, gamma * sc.sigma2_dl / margin);
  }
  return kappa;
}

namespace detail {
#if defined(__SIZEOF_FLOAT128__)
using wide = __float128;
#else
using wide = long double;
#endif
}  // namespace detail

// Determinant of the 2x2 Fisher information, p^T A p. Accumulated in wide
// precision: with one AP and one receiver a*b and c^2 agree to the last bit,
// and in doubles the rounding alone could leave a positive "determinant".
inline double fisher_determinant(const SensingCoefficients& s, const Eigen::VectorXd& p_sen) {
  detail::wide a = 0, b = 0, c = 0;
  for (Eigen::Index m = 0; m < p_sen.size(); ++m) {
    const detail::wide p = p_sen[m];
    a += s.q_a[m] * p;
    b += s.q_b[m] * p;
    c += s.q_c[m] * p;
  }
  return static_cast<double>(a * b - c * c);
}

// Trace of the localisation CRLB, (b^T p) / (p^T A p); +inf when the Fisher
// information is singular.
inline double crlb_trace(const SensingCoefficients& s, const Eigen::VectorXd& p_sen) {
  if (p_sen.size() != s.b.size()) throw std::invalid_argument("crlb_trace: p_sen length mismatch");
  const double det = fisher_determinant(s, p_sen);
  if (!(det > 0)) return std::numeric_limits<double>::infinity();
  return s.b.dot(p_sen) / det;
}

struct FeasibilityReport {
  Eigen::VectorXd sinr;                // per-UE, linear
  Eigen::VectorXd budget_slack;        // 1 - sum_k v_mk P_mk (1 for inactive APs)
  double crlb_trace = 0;               // m^2
  Eigen::VectorXd relaxed_crlb_slack;  // nu A p - b
  bool well_formed = true;
  bool budget_ok = true;
  bool sinr_ok = true;
  bool crlb_ok = true;
  bool feasible = true;
  int active_count = 0;
  double transmit_power_w = 0;
  double circuit_power_w = 0;
  double total_power_w = 0;
};

// Power accounting: rho_DL * sum P_mk + |active| * P_cir, reported in watts.
inline double transmit_power_w(const Scenario& sc, const PowerAllocation& alloc) {
  return sc.config.dl_power_mw * alloc.P.sum() / 1000.0;
}

inline double total_power_w(const Scenario& sc, const PowerAllocation& alloc) {
  return transmit_power_w(sc, alloc) + alloc.num_active() * sc.config.circuit_power_mw / 1000.0;
}

// Evaluates the exact constraint set (budget, SINR, quadratic CRLB). Each
// constraint is compared against its natural scale times tol_rel.
inline FeasibilityReport check_feasibility(const Scenario& sc, const PowerAllocation& alloc, double tol_rel = 1e-6) {
  require_shape(sc, alloc);
  const int M = sc.num_aps();
  const SystemConfig& cfg = sc.config;
  FeasibilityReport r;
  r.well_formed = alloc.well_formed();

  r.budget_slack = Eigen::VectorXd::Ones(M);
  for (int m = 0; m < M; ++m)
    if (alloc.active[m]) r.budget_slack[m] = 1.0 - sc.channel.v.row(m).dot(alloc.P.row(m));
  r.budget_ok = (r.budget_slack.array() >= -tol_rel).all();

  const double gthr = cfg.sinr_threshold_linear();
  r.sinr = sinr(sc, alloc);
  r.sinr_ok = ((r.sinr.array() - gthr) >= -tol_rel * gthr).all();

  const Eigen::VectorXd p = alloc.p_sen();
  r.crlb_trace = crlb_trace(sc.sensing, p);
  const double nu = cfg.crlb_limit_m2;
  if (cfg.sensing_enabled()) {
    r.relaxed_crlb_slack = nu * (sc.sensing.A * p) - sc.sensing.b;
    r.crlb_ok = r.crlb_trace - nu <= tol_rel * nu;
  } else {
    r.relaxed_crlb_slack = Eigen::VectorXd::Constant(M, std::numeric_limits<double>::infinity());
    r.crlb_ok = true;
  }

  r.active_count = alloc.num_active();
  r.transmit_power_w = transmit_power_w(sc, alloc);
  r.circuit_power_w = r.active_count * cfg.circuit_power_mw / 1000.0;
  r.total_power_w = r.transmit_power_w + r.circuit_power_w;
  r.feasible = r.well_formed && r.budget_ok && r.sinr_ok && r.crlb_ok;
  return r;
}

}  // namespace cfisac
