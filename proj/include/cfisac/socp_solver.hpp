#pragma once

// Primal-dual interior-point method for programs built from nonnegative,
// second-order and rotated second-order cones.
//
// The iteration works on the homogeneous self-dual embedding with
// Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Each
// iteration factors one quasi-definite KKT matrix
//
//   [ d I    A^T    G^T  ]
//   [ A     -d I    0    ]
//   [ G      0    -W^2   ]
//
// with a static regularisation d and corrects it by iterative refinement.
// Scaling blocks of large second-order cones are written as
// eta^2 (D + u u^T - v v^T) with two extra KKT variables per cone so that the
// factor stays sparse.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "cfisac/cone_program.hpp"

namespace cfisac {

enum class SolveStatus {
  Optimal,
  OptimalInaccurate,  // stalled, but residuals and gap within the relaxed tolerances
  Infeasible,         // certificate of primal infeasibility found
  Unbounded,          // certificate of dual infeasibility found
  NumericalFailure,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::OptimalInaccurate: return "optimal-inaccurate";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

struct SolverSettings {
  double gap_tol = 1e-8;    // relative duality gap
  double abs_gap_tol = 1e-10;
  double feas_tol = 1e-8;   // relative primal / dual residual
  double inaccurate_factor = 1e3;  // relaxed tolerances = factor * tolerances
  int max_iter = 200;
  double step_fraction = 0.99;
  double static_reg = 7e-8;
  int refine_steps = 4;
  int ruiz_passes = 15;
  double ruiz_max_scale = 1e3;  // bound on the accumulated equilibration factors
  int expand_min_dim = 5;  // second-order cones at least this large use the sparse expansion
  bool verbose = false;    // per-iteration log on stderr
};

struct SocpSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x;  // primal variables
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // cone multipliers
  Eigen::VectorXd s;  // cone slacks
  double objective = std::numeric_limits<double>::quiet_NaN();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  double rel_gap = std::numeric_limits<double>::infinity();
  int iterations = 0;
  double wall_seconds = 0;

  bool optimal() const { return status == SolveStatus::Optimal || status == SolveStatus::OptimalInaccurate; }
};

namespace detail {

// t^2 - ||u||^2 without the cancellation of the direct formula.
inline double soc_residual(double t, double unorm) { return (t - unorm) * (t + unorm); }

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vec = Eigen::VectorXd;

struct Block {
  bool soc = false;
  int offset = 0;
  int dim = 0;
  bool expand = false;
  int kkt_extra = -1;  // KKT index of the first expansion variable
  // Nesterov-Todd scaling.
  Vec w;          // nonnegative blocks: W = diag(w)
  double eta = 1;  // second-order blocks: W = eta * Wbar(wbar)
  Vec wbar;
  // Expansion W^2 = eta^2 (D + u u^T - v v^T), D = diag(d1, 1, ..., 1),
  // u = (u0, u1 q), v = (0, v1 q), q = wbar_{1:}.
  double d1 = 1, u0 = 1, u1 = 0, v1 = 0;
};

class ConeSet {
 public:
  std::vector<Block> blocks;
  int rows = 0;
  int degree = 0;

  void add(bool soc, int dim) {
    Block b;
    b.soc = soc;
    b.offset = rows;
    b.dim = dim;
    if (!soc) b.w = Vec::Ones(dim);
    else {
      b.wbar = Vec::Zero(dim);
      b.wbar[0] = 1;
    }
    blocks.push_back(std::move(b));
    rows += dim;
    degree += soc ? 1 : dim;
  }

  // u + alpha e
  void add_identity(Vec& u, double alpha) const {
    for (const auto& b : blocks) {
      if (b.soc) u[b.offset] += alpha;
      else u.segment(b.offset, b.dim).array() += alpha;
    }
  }

  // inf { alpha : u + alpha e in K }
  double boundary_shift(const Vec& u) const {
    double a = -std::numeric_limits<double>::infinity();
    for (const auto& b : blocks) {
      if (b.soc) {
        const double t = u[b.offset];
        const double nrm = u.segment(b.offset + 1, b.dim - 1).norm();
        a = std::max(a, nrm - t);
      } else {
        a = std::max(a, -u.segment(b.offset, b.dim).minCoeff());
      }
    }
    return a;
  }

  Vec product(const Vec& u, const Vec& v) const {
    Vec w(u.size());
    for (const auto& b : blocks) {
      if (b.soc) {
        const int o = b.offset, d = b.dim;
        w[o] = u.segment(o, d).dot(v.segment(o, d));
        w.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
      } else {
        w.segment(b.offset, b.dim) = u.segment(b.offset, b.dim).cwiseProduct(v.segment(b.offset, b.dim));
      }
    }
    return w;
  }

  // Solves lam o u = d for u.
  Vec divide(const Vec& lam, const Vec& d) const {
    Vec u(d.size());
    for (const auto& b : blocks) {
      const int o = b.offset, n = b.dim;
      if (b.soc) {
        const double l0 = lam[o];
        const auto l1 = lam.segment(o + 1, n - 1);
        const auto d1 = d.segment(o + 1, n - 1);
        const double det = soc_residual(l0, l1.norm());
        const double u0 = (l0 * d[o] - l1.dot(d1)) / det;
        u[o] = u0;
        u.segment(o + 1, n - 1) = (d1 - u0 * l1) / l0;
      } else {
        u.segment(o, n) = d.segment(o, n).cwiseQuotient(lam.segment(o, n));
      }
    }
    return u;
  }

  // Largest alpha >= 0 with u + alpha du in K (capped at `cap`).
  double max_step(const Vec& u, const Vec& du, double cap) const {
    double alpha = cap;
    for (const auto& b : blocks) {
      const int o = b.offset, n = b.dim;
      if (!b.soc) {
        for (int i = o; i < o + n; ++i)
          if (du[i] < 0) alpha = std::min(alpha, -u[i] / du[i]);
        continue;
      }
      const double u0 = u[o], d0 = du[o];
      const auto u1 = u.segment(o + 1, n - 1);
      const auto dd1 = du.segment(o + 1, n - 1);
      const double qa = d0 * d0 - dd1.squaredNorm();
      const double qb = 2.0 * (u0 * d0 - u1.dot(dd1));
      const double qc = std::max(soc_residual(u0, u1.norm()), 0.0);
      double root = std::numeric_limits<double>::infinity();
      if (std::abs(qa) <= 1e-14 * (std::abs(qb) + qc)) {
        if (qb < 0) root = -qc / qb;
      } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0) {
          const double sq = std::sqrt(disc);
          const double q = -0.5 * (qb + (qb >= 0 ? sq : -sq));
          const double r1 = q / qa;
          const double r2 = q != 0 ? qc / q : std::numeric_limits<double>::infinity();
          for (double r : {r1, r2})
            if (r >= 0 && r < root) root = r;
        }
      }
      if (d0 < 0) root = std::min(root, -u0 / d0);
      alpha = std::min(alpha, root);
    }
    return std::max(alpha, 0.0);
  }

  // Computes the NT scaling for (s, z) and returns lambda = W z.
  bool update_scaling(const Vec& s, const Vec& z, Vec& lambda, int expand_min_dim) {
    lambda.resize(s.size());
    for (auto& b : blocks) {
      const int o = b.offset, n = b.dim;
      if (!b.soc) {
        for (int i = 0; i < n; ++i) {
          if (!(s[o + i] > 0) || !(z[o + i] > 0)) return false;
          b.w[i] = std::sqrt(s[o + i] / z[o + i]);
          lambda[o + i] = std::sqrt(s[o + i] * z[o + i]);
        }
        continue;
      }
      const double sres = soc_residual(s[o], s.segment(o + 1, n - 1).norm());
      const double zres = soc_residual(z[o], z.segment(o + 1, n - 1).norm());
      if (!(sres > 0) || !(zres > 0) || !(s[o] > 0) || !(z[o] > 0)) return false;
      const double sn = std::sqrt(sres), zn = std::sqrt(zres);
      const auto sb = s.segment(o, n), zb = z.segment(o, n);
      const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb) / (sn * zn)) / 2.0, 0.0));
      if (!(gamma > 0)) return false;
      b.wbar.resize(n);
      b.wbar = (sb / sn - zb / zn) / (2.0 * gamma);  // head fixed below
      // wbar_0 from wbar^T J wbar = 1, which also absorbs rounding.
      b.wbar[0] = std::sqrt(1.0 + b.wbar.tail(n - 1).squaredNorm());
      b.eta = std::sqrt(sn / zn);
      b.expand = n >= expand_min_dim;
      if (b.expand) {
        const double a = b.wbar[0];
        const double t = 2.0 * a * a - 1.0;
        b.d1 = 1.0 / (2.0 * t);
        const double u0sq = t - b.d1;
        b.u0 = std::sqrt(u0sq);
        b.u1 = 2.0 * a / b.u0;
        b.v1 = std::sqrt(std::max(b.u1 * b.u1 - 2.0, 0.0));
      }
      apply_soc(b, z.segment(o, n), lambda.segment(o, n), false);
    }
    return true;
  }

  template <class In, class Out>
  static void apply_soc(const Block& b, const In& u, Out&& out, bool inverse) {
    const int n = b.dim;
    const double a = b.wbar[0];
    const auto q = b.wbar.tail(n - 1);
    const double qu = q.dot(u.tail(n - 1));
    const double u0 = u[0];
    if (!inverse) {
      out[0] = b.eta * (a * u0 + qu);
      out.tail(n - 1) = b.eta * (u.tail(n - 1) + (u0 + qu / (1.0 + a)) * q);
      return;
    }
    out[0] = (a * u0 - qu) / b.eta;
    out.tail(n - 1) = (u.tail(n - 1) + (-u0 + qu / (1.0 + a)) * q) / b.eta;
  }

  Vec apply_w(const Vec& u, bool inverse = false) const {
    Vec out(u.size());
    for (const auto& b : blocks) {
      const int o = b.offset, n = b.dim;
      if (b.soc) apply_soc(b, u.segment(o, n), out.segment(o, n), inverse);
      else if (inverse) out.segment(o, n) = u.segment(o, n).cwiseQuotient(b.w);
      else out.segment(o, n) = u.segment(o, n).cwiseProduct(b.w);
    }
    return out;
  }
};

// Standard form after rotated cones are mapped onto second-order cones and
// the data are equilibrated.
struct Standard {
  int n = 0, p = 0, m = 0;
  SpMat A, G;
  Vec c, b, h;
  ConeSet cones;
  std::vector<int> rotated_offsets;  // row offsets of blocks that were rotated cones
  Vec col_scale, eq_scale, cone_scale;
  double cost_scale = 1, rhs_scale = 1;
};

inline Standard to_standard(const ConeProgram& prog, int ruiz_passes, double max_scale = 1e3) {
  prog.validate();
  Standard st;
  st.n = prog.n;
  st.p = prog.eq_rows;
  st.m = prog.cone_rows;
  st.c = Eigen::Map<const Vec>(prog.c.data(), prog.n);
  st.b = Eigen::Map<const Vec>(prog.b.data(), prog.eq_rows);
  st.h = Eigen::Map<const Vec>(prog.h.data(), prog.cone_rows);

  std::vector<Eigen::Triplet<double>> ta, tg;
  ta.reserve(prog.A.size());
  for (const auto& e : prog.A) ta.emplace_back(e.row, e.col, e.value);

  // Rotated cone (a, b, u) -> ((a + b)/sqrt2, (a - b)/sqrt2, u); the map is
  // orthogonal and its own inverse.
  std::vector<int> row_kind(static_cast<std::size_t>(prog.cone_rows), 0);  // 1: first, 2: second rotated row
  int off = 0;
  for (const auto& blk : prog.cones) {
    if (blk.kind == ConeKind::NonNegative) st.cones.add(false, blk.dim);
    else st.cones.add(true, blk.dim);
    if (blk.kind == ConeKind::RotatedSecondOrder) {
      st.rotated_offsets.push_back(off);
      row_kind[static_cast<std::size_t>(off)] = 1;
      row_kind[static_cast<std::size_t>(off + 1)] = 2;
    }
    off += blk.dim;
  }
  const double r2 = 1.0 / std::sqrt(2.0);
  tg.reserve(prog.G.size() * 2);
  for (const auto& e : prog.G) {
    const int kind = row_kind[static_cast<std::size_t>(e.row)];
    if (kind == 0) tg.emplace_back(e.row, e.col, e.value);
    else if (kind == 1) {
      tg.emplace_back(e.row, e.col, r2 * e.value);
      tg.emplace_back(e.row + 1, e.col, r2 * e.value);
    } else {
      tg.emplace_back(e.row - 1, e.col, r2 * e.value);
      tg.emplace_back(e.row, e.col, -r2 * e.value);
    }
  }
  for (int o : st.rotated_offsets) {
    const double h0 = st.h[o], h1 = st.h[o + 1];
    st.h[o] = r2 * (h0 + h1);
    st.h[o + 1] = r2 * (h0 - h1);
  }
  st.A.resize(st.p, st.n);
  st.A.setFromTriplets(ta.begin(), ta.end());
  st.G.resize(st.m, st.n);
  st.G.setFromTriplets(tg.begin(), tg.end());
  st.A.prune(0.0);
  st.G.prune(0.0);

  // Objective and right-hand side are brought to unit size first, so the
  // tolerances are relative to the data rather than to 1.
  const double cmax = st.c.size() ? st.c.lpNorm<Eigen::Infinity>() : 0.0;
  if (cmax > 0) st.cost_scale = 1.0 / cmax;
  const double rmax = std::max(st.b.size() ? st.b.lpNorm<Eigen::Infinity>() : 0.0,
                               st.h.size() ? st.h.lpNorm<Eigen::Infinity>() : 0.0);
  if (rmax > 0) st.rhs_scale = 1.0 / rmax;
  st.c *= st.cost_scale;
  st.b *= st.rhs_scale;
  st.h *= st.rhs_scale;

  // Ruiz equilibration. Rows of one second-order cone share a factor.
  st.col_scale = Vec::Ones(st.n);
  st.eq_scale = Vec::Ones(st.p);
  st.cone_scale = Vec::Ones(st.m);
  auto clampf = [](double f) { return std::clamp(f, 1e-4, 1e4); };
  for (int pass = 0; pass < ruiz_passes; ++pass) {
    Vec col_max = Vec::Zero(st.n), eq_max = Vec::Zero(st.p), cone_max = Vec::Zero(st.m);
    for (int j = 0; j < st.n; ++j) {
      for (SpMat::InnerIterator it(st.A, j); it; ++it) {
        const double a = std::abs(it.value());
        col_max[j] = std::max(col_max[j], a);
        eq_max[it.row()] = std::max(eq_max[it.row()], a);
      }
      for (SpMat::InnerIterator it(st.G, j); it; ++it) {
        const double a = std::abs(it.value());
        col_max[j] = std::max(col_max[j], a);
        cone_max[it.row()] = std::max(cone_max[it.row()], a);
      }
    }
    for (const auto& blk : st.cones.blocks)
      if (blk.soc) {
        const double mx = cone_max.segment(blk.offset, blk.dim).maxCoeff();
        cone_max.segment(blk.offset, blk.dim).setConstant(mx);
      }
    Vec cf(st.n), ef(st.p), gf(st.m);
    auto factor = [&](double mx, double acc) {
      if (!(mx > 0)) return 1.0;
      return std::clamp(clampf(1.0 / std::sqrt(mx)) * acc, 1.0 / max_scale, max_scale) / acc;
    };
    for (int j = 0; j < st.n; ++j) cf[j] = factor(col_max[j], st.col_scale[j]);
    for (int i = 0; i < st.p; ++i) ef[i] = factor(eq_max[i], st.eq_scale[i]);
    for (int i = 0; i < st.m; ++i) gf[i] = factor(cone_max[i], st.cone_scale[i]);
    st.A = ef.asDiagonal() * st.A * cf.asDiagonal();
    st.G = gf.asDiagonal() * st.G * cf.asDiagonal();
    st.col_scale.array() *= cf.array();
    st.eq_scale.array() *= ef.array();
    st.cone_scale.array() *= gf.array();
  }
  st.c = st.col_scale.cwiseProduct(st.c);
  st.b = st.eq_scale.cwiseProduct(st.b);
  st.h = st.cone_scale.cwiseProduct(st.h);
  st.A.makeCompressed();
  st.G.makeCompressed();
  return st;
}

class KktSystem {
 public:
  KktSystem(const Standard& st, const SolverSettings& settings) : st_(st), settings_(settings) {
    int extra = 0;
    for (auto& b : const_cast<ConeSet&>(st.cones).blocks) {
      if (b.soc && b.dim >= settings.expand_min_dim) {
        b.kkt_extra = st.n + st.p + st.m + extra;
        extra += 2;
      }
    }
    dim_ = st.n + st.p + st.m + extra;
    reg_ = Vec::Zero(dim_);
    reg_.head(st.n).setConstant(settings.static_reg);
    reg_.segment(st.n, st.p + st.m).setConstant(-settings.static_reg);
  }

  int dim() const { return dim_; }

  // Builds the matrix for the current scaling and factors it. Pass
  // `identity_scaling` for the initialisation solves (W = I).
  bool factor(bool identity_scaling) {
    // A zero pivot means entries of very different size cancelled; retry
    // with a heavier regularisation and leave the rest to refinement.
    double delta = settings_.static_reg;
    for (int attempt = 0; attempt < 4; ++attempt, delta *= 100.0) {
      reg_.head(st_.n).setConstant(delta);
      reg_.segment(st_.n, st_.p + st_.m).setConstant(-delta);
      if (assemble_and_factor(identity_scaling)) return true;
      if (settings_.verbose) std::fprintf(stderr, "      factorisation failed at regularisation %.1e\n", delta);
    }
    return false;
  }

 private:
  bool assemble_and_factor(bool identity_scaling) {
    auto& t = triplets_;
    t.clear();
    t.reserve(static_cast<std::size_t>(st_.A.nonZeros() + st_.G.nonZeros() + dim_ + 8 * st_.m));
    const int n = st_.n, p = st_.p, zoff = st_.n + st_.p;
    for (int j = 0; j < n; ++j) t.emplace_back(j, j, reg_[j]);
    for (int j = 0; j < n; ++j) {
      for (SpMat::InnerIterator it(st_.A, j); it; ++it) t.emplace_back(n + it.row(), j, it.value());
      for (SpMat::InnerIterator it(st_.G, j); it; ++it) t.emplace_back(zoff + it.row(), j, it.value());
    }
    for (int i = 0; i < p; ++i) t.emplace_back(n + i, n + i, reg_[n + i]);
    for (const auto& b : st_.cones.blocks) {
      const int o = zoff + b.offset, d = b.dim;
      if (!b.soc) {
        for (int i = 0; i < d; ++i) {
          const double w2 = identity_scaling ? 1.0 : b.w[i] * b.w[i];
          t.emplace_back(o + i, o + i, -w2 + reg_[o + i]);
        }
        continue;
      }
      const double eta2 = identity_scaling ? 1.0 : b.eta * b.eta;
      if (b.kkt_extra >= 0) {
        // W = I corresponds to wbar = e: d1 = 1/2, u0 = sqrt(1/2), q = 0.
        const double d1 = identity_scaling ? 0.5 : b.d1;
        const double u0 = identity_scaling ? std::sqrt(0.5) : b.u0;
        const double u1 = identity_scaling ? 0.0 : b.u1;
        const double v1 = identity_scaling ? 0.0 : b.v1;
        const double eta = std::sqrt(eta2);
        t.emplace_back(o, o, -eta2 * d1 + reg_[o]);
        for (int i = 1; i < d; ++i) t.emplace_back(o + i, o + i, -eta2 + reg_[o + i]);
        const int eu = b.kkt_extra, ev = b.kkt_extra + 1;
        t.emplace_back(eu, o, -eta * u0);
        for (int i = 1; i < d; ++i) {
          const double q = identity_scaling ? 0.0 : b.wbar[i];
          // Explicit zeros keep the sparsity pattern fixed across iterations.
          t.emplace_back(eu, o + i, -eta * u1 * q);
          t.emplace_back(ev, o + i, eta * v1 * q);
        }
        t.emplace_back(ev, o, 0.0);
        t.emplace_back(eu, eu, 1.0);
        t.emplace_back(ev, ev, -1.0);
      } else {
        for (int i = 0; i < d; ++i)
          for (int j = 0; j <= i; ++j) {
            double w2;
            if (identity_scaling) w2 = i == j ? 1.0 : 0.0;
            else {
              const double J = i == j ? (i == 0 ? 1.0 : -1.0) : 0.0;
              w2 = eta2 * (2.0 * b.wbar[i] * b.wbar[j] - J);
            }
            t.emplace_back(o + i, o + j, -w2 + (i == j ? reg_[o + i] : 0.0));
          }
      }
    }
    // The triplet sequence has the same pattern on every call, so after the
    // first assembly values are scattered straight into the stored slots.
    if (!analyzed_ || t.size() != slots_.size()) {
      K_.resize(dim_, dim_);
      K_.setFromTriplets(t.begin(), t.end());
      slots_.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) slots_[i] = &K_.coeffRef(t[i].row(), t[i].col());
      ldlt_.analyzePattern(K_);
      analyzed_ = true;
    } else {
      std::fill(K_.valuePtr(), K_.valuePtr() + K_.nonZeros(), 0.0);
      for (std::size_t i = 0; i < t.size(); ++i) *slots_[i] += t[i].value();
    }
    ldlt_.factorize(K_);
    return ldlt_.info() == Eigen::Success;
  }

 public:
  // Solves the unregularised system with iterative refinement. rhs and the
  // result cover (x, y, z); expansion variables are internal.
  Vec solve(const Vec& rhs_xyz) const {
    Vec rhs = Vec::Zero(dim_);
    rhs.head(rhs_xyz.size()) = rhs_xyz;
    Vec sol = ldlt_.solve(rhs);
    const double rhs_norm = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
    for (int it = 0; it < settings_.refine_steps; ++it) {
      Vec r = rhs - (K_.selfadjointView<Eigen::Lower>() * sol - reg_.cwiseProduct(sol));
      const double rn = r.lpNorm<Eigen::Infinity>();
      if (rn <= 1e-14 * rhs_norm) break;
      sol += ldlt_.solve(r);
    }
    if (settings_.verbose) {
      Vec r = rhs - (K_.selfadjointView<Eigen::Lower>() * sol - reg_.cwiseProduct(sol));
      std::fprintf(stderr, "      kkt residual %.2e (rhs %.2e)\n", r.lpNorm<Eigen::Infinity>(), rhs_norm);
    }
    return sol.head(rhs_xyz.size());
  }

 private:
  const Standard& st_;
  const SolverSettings& settings_;
  int dim_ = 0;
  Vec reg_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
  std::vector<Eigen::Triplet<double>> triplets_;
  std::vector<double*> slots_;
};

}  // namespace detail

inline SocpSolution solve(const ConeProgram& program, const SolverSettings& settings = {}) {
  using detail::Vec;
  const auto t0 = std::chrono::steady_clock::now();
  SocpSolution sol;
  detail::Standard st = detail::to_standard(program, settings.ruiz_passes, settings.ruiz_max_scale);
  const int n = st.n, p = st.p, m = st.m;
  detail::ConeSet& K = st.cones;
  detail::KktSystem kkt(st, settings);

  auto finish = [&](SolveStatus status, const Vec& x, const Vec& y, const Vec& z, const Vec& s, double scale_x,
                    double scale_dual) {
    sol.status = status;
    // Certificates are rays, so only the equilibration is undone for them.
    const bool ray = status == SolveStatus::Infeasible || status == SolveStatus::Unbounded;
    const double xs = ray ? 1.0 : st.rhs_scale, ds = ray ? 1.0 : st.cost_scale;
    sol.x = st.col_scale.cwiseProduct(x) / (scale_x * xs);
    sol.y = st.eq_scale.cwiseProduct(y) / (scale_dual * ds);
    Vec zz = st.cone_scale.cwiseProduct(z) / (scale_dual * ds);
    Vec ss = s.cwiseQuotient(st.cone_scale) / (scale_x * xs);
    const double r2 = 1.0 / std::sqrt(2.0);
    for (int o : st.rotated_offsets) {
      for (Vec* v : {&zz, &ss}) {
        const double a = (*v)[o], b = (*v)[o + 1];
        (*v)[o] = r2 * (a + b);
        (*v)[o + 1] = r2 * (a - b);
      }
    }
    sol.z = std::move(zz);
    sol.s = std::move(ss);
    sol.objective = program.objective_value(sol.x);
    sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
  };

  // Residuals are judged with the equilibration undone, in infinity norm.
  const double norm_c = std::max(1.0, st.c.cwiseQuotient(st.col_scale).lpNorm<Eigen::Infinity>());
  auto inf_norm = [](const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; };

  // Initial point: least-norm primal and dual estimates shifted into the cone.
  if (!kkt.factor(true)) return finish(SolveStatus::NumericalFailure, Vec::Zero(n), Vec::Zero(p), Vec::Zero(m),
                                       Vec::Zero(m), 1.0, 1.0);
  Vec rhs(n + p + m);
  rhs << Vec::Zero(n), st.b, st.h;
  Vec sol0 = kkt.solve(rhs);
  Vec x = sol0.head(n);
  Vec s = -sol0.tail(m);
  if (const double a = K.boundary_shift(s); a >= 0 || m == 0) K.add_identity(s, 1.0 + std::max(a, 0.0));
  rhs << -st.c, Vec::Zero(p), Vec::Zero(m);
  Vec sol1 = kkt.solve(rhs);
  Vec y = sol1.segment(n, p);
  Vec z = sol1.tail(m);
  if (const double a = K.boundary_shift(z); a >= 0 || m == 0) K.add_identity(z, 1.0 + std::max(a, 0.0));
  double tau = 1.0, kappa = 1.0;

  Vec lambda;
  const double relaxed = settings.inaccurate_factor;
  struct Snapshot {
    bool valid = false;
    double pres = 0, dres = 0, gap = 0, relgap = 0, absgap = 0;
  } best;
  Vec best_x, best_y, best_z, best_s;
  double best_tau = 1;

  for (int iter = 0;; ++iter) {
    sol.iterations = iter;
    // Residuals of the embedding.
    const Vec r1 = (p > 0 ? Vec(st.A.transpose() * y) : Vec::Zero(n)) + st.G.transpose() * z + st.c * tau;
    const Vec r2 = (p > 0 ? Vec(st.A * x) : Vec::Zero(0)) - st.b * tau;
    const Vec r3 = st.G * x + s - st.h * tau;
    const double cx = st.c.dot(x), by = st.b.dot(y), hz = st.h.dot(z);
    const double r4 = kappa + cx + by + hz;

    // Termination tests on the tau-normalised point.
    // Normalised by the size of the terms that make up each residual.
    const Vec Ax = p > 0 ? Vec(st.A * x) : Vec::Zero(0);
    const Vec Gx = st.G * x;
    const Vec Aty = p > 0 ? Vec(st.A.transpose() * y) : Vec::Zero(n);
    const Vec Gtz = st.G.transpose() * z;
    const double pscale = std::max({1.0, inf_norm(Ax.cwiseQuotient(st.eq_scale)) / tau,
                                    inf_norm(Gx.cwiseQuotient(st.cone_scale)) / tau,
                                    inf_norm(s.cwiseQuotient(st.cone_scale)) / tau});
    const double dscale = std::max({norm_c, inf_norm(Aty.cwiseQuotient(st.col_scale)) / tau,
                                    inf_norm(Gtz.cwiseQuotient(st.col_scale)) / tau});
    const double pres =
        std::max(inf_norm(r2.cwiseQuotient(st.eq_scale)), inf_norm(r3.cwiseQuotient(st.cone_scale))) / tau / pscale;
    const double dres = inf_norm(r1.cwiseQuotient(st.col_scale)) / tau / dscale;
    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    const double gap_int = s.dot(z) / (tau * tau);
    const double gap = gap_int / (st.cost_scale * st.rhs_scale);  // original objective units
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0) relgap = gap_int / -pcost;
    else if (dcost > 0) relgap = gap_int / dcost;
    // The absolute test only applies when the optimal value itself is ~0;
    // otherwise it would not be invariant to scaling the data.
    const double absgap = std::max(std::abs(pcost), std::abs(dcost)) <= settings.abs_gap_tol
                              ? gap_int
                              : std::numeric_limits<double>::infinity();
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.gap = gap;
    sol.rel_gap = relgap;
    if (settings.verbose)
      std::fprintf(stderr, "%3d pcost %+.6e dcost %+.6e gap %.2e pres %.2e dres %.2e tau %.2e kap %.2e\n", iter, pcost,
                   dcost, gap, pres, dres, tau, kappa);
    if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(gap)) break;
    if (pres <= settings.feas_tol && dres <= settings.feas_tol &&
        (absgap <= settings.abs_gap_tol || relgap <= settings.gap_tol))
      return finish(SolveStatus::Optimal, x, y, z, s, tau, tau);
    // Remember the most accurate point seen, for a reduced-accuracy exit.
    const double merit = std::max({pres, dres, std::min(absgap, relgap)});
    if (!best.valid || merit < std::max({best.pres, best.dres, std::min(best.absgap, best.relgap)})) {
      best = {true, pres, dres, gap, relgap, absgap};
      best_x = x;
      best_y = y;
      best_z = z;
      best_s = s;
      best_tau = tau;
    }
    // Infeasibility certificates.
    if (by + hz < 0) {
      const Vec aty = (p > 0 ? Vec(st.A.transpose() * y) : Vec::Zero(n)) + st.G.transpose() * z;
      if (inf_norm(aty.cwiseQuotient(st.col_scale)) / -(by + hz) <= settings.feas_tol)
        return finish(SolveStatus::Infeasible, x, y, z, s, 1.0, -(by + hz));
    }
    if (cx < 0) {
      const double ax = p > 0 ? inf_norm(Vec(st.A * x).cwiseQuotient(st.eq_scale)) : 0.0;
      const double gx = inf_norm((st.G * x + s).cwiseQuotient(st.cone_scale));
      if (std::max(ax, gx) / -cx <= settings.feas_tol)
        return finish(SolveStatus::Unbounded, x, y, z, s, -cx, 1.0);
    }
    if (iter >= settings.max_iter) break;

    if (!K.update_scaling(s, z, lambda, settings.expand_min_dim)) {
      if (settings.verbose) std::fprintf(stderr, "    stop: iterate left the cone interior\n");
      break;
    }
    if (!kkt.factor(false)) {
      if (settings.verbose) std::fprintf(stderr, "    stop: KKT factorisation failed\n");
      break;
    }

    rhs << -st.c, st.b, st.h;
    const Vec d1 = kkt.solve(rhs);
    const Vec x1 = d1.head(n), y1 = d1.segment(n, p), z1 = d1.tail(m);
    const double denom = kappa / tau - st.c.dot(x1) - st.b.dot(y1) - st.h.dot(z1);

    auto direction = [&](double eta_res, const Vec& ds_target, double dk_target, Vec& dx, Vec& dy, Vec& dz,
                         Vec& ds, double& dtau, double& dkappa) {
      const Vec u = K.divide(lambda, ds_target);
      Vec r(n + p + m);
      r << -eta_res * r1, -eta_res * r2, -eta_res * r3 - K.apply_w(u);
      const Vec d2 = kkt.solve(r);
      const Vec x2 = d2.head(n), y2 = d2.segment(n, p), z2 = d2.tail(m);
      dtau = (dk_target / tau + eta_res * r4 + st.c.dot(x2) + st.b.dot(y2) + st.h.dot(z2)) / denom;
      dx = x2 + dtau * x1;
      dy = y2 + dtau * y1;
      dz = z2 + dtau * z1;
      ds = K.apply_w(u - K.apply_w(dz));
      dkappa = (dk_target - kappa * dtau) / tau;
    };
    auto step_length = [&](const Vec& ds, const Vec& dz, double dtau, double dkappa) {
      double a = K.max_step(s, ds, 1.0);
      a = K.max_step(z, dz, a);
      if (dtau < 0) a = std::min(a, -tau / dtau);
      if (dkappa < 0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // Predictor.
    Vec dxa, dya, dza, dsa;
    double dtaua = 0, dkappaa = 0;
    direction(1.0, -K.product(lambda, lambda), -tau * kappa, dxa, dya, dza, dsa, dtaua, dkappaa);
    const double alpha_aff = step_length(dsa, dza, dtaua, dkappaa);
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);
    const double mu = (s.dot(z) + tau * kappa) / (K.degree + 1);

    // Corrector.
    Vec ds_target = -K.product(lambda, lambda) - K.product(K.apply_w(dsa, true), K.apply_w(dza));
    K.add_identity(ds_target, sigma * mu);
    const double dk_target = -tau * kappa + sigma * mu - dtaua * dkappaa;
    Vec dx, dy, dz, ds;
    double dtau = 0, dkappa = 0;
    direction(1.0 - sigma, ds_target, dk_target, dx, dy, dz, ds, dtau, dkappa);
    double alpha = std::min(1.0, settings.step_fraction * step_length(ds, dz, dtau, dkappa));
    if (alpha < 0.1 * alpha_aff) {
      // The second-order term can spoil the direction close to the cone
      // boundary; fall back to the plain centred direction when it is longer.
      Vec target = -K.product(lambda, lambda);
      K.add_identity(target, sigma * mu);
      Vec dx2, dy2, dz2, ds2;
      double dtau2 = 0, dkappa2 = 0;
      direction(1.0 - sigma, target, -tau * kappa + sigma * mu, dx2, dy2, dz2, ds2, dtau2, dkappa2);
      const double alpha2 = std::min(1.0, settings.step_fraction * step_length(ds2, dz2, dtau2, dkappa2));
      if (alpha2 > alpha) {
        dx = std::move(dx2);
        dy = std::move(dy2);
        dz = std::move(dz2);
        ds = std::move(ds2);
        dtau = dtau2;
        dkappa = dkappa2;
        alpha = alpha2;
      }
    }
    if (settings.verbose) std::fprintf(stderr, "    alpha_aff %.3f sigma %.2e alpha %.3f\n", alpha_aff, sigma, alpha);
    if (!(alpha > 1e-12)) break;

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
  }

  if (best.valid && best.pres <= relaxed * settings.feas_tol && best.dres <= relaxed * settings.feas_tol &&
      (best.absgap <= relaxed * settings.abs_gap_tol || best.relgap <= relaxed * settings.gap_tol)) {
    sol.primal_residual = best.pres;
    sol.dual_residual = best.dres;
    sol.gap = best.gap;
    sol.rel_gap = best.relgap;
    return finish(SolveStatus::OptimalInaccurate, best_x, best_y, best_z, best_s, best_tau, best_tau);
  }
  return finish(SolveStatus::NumericalFailure, x, y, z, s, tau, tau);
}

}  // namespace cfisac
