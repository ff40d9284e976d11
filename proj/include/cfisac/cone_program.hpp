#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfisac {

enum class ConeKind {
  NonNegative,         // s_i >= 0
  SecondOrder,         // s_0 >= ||s_{1:}||
  RotatedSecondOrder,  // 2 s_0 s_1 >= ||s_{2:}||^2, s_0, s_1 >= 0
};

struct ConeBlock {
  ConeKind kind = ConeKind::NonNegative;
  int dim = 0;
};

struct Entry {
  int row = 0;
  int col = 0;
  double value = 0;
};

// Affine expression sum_j a_j x_j + constant.
struct AffineExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0;

  AffineExpr() = default;
  explicit AffineExpr(double c) : constant(c) {}
  AffineExpr& add(int var, double coef) {
    if (coef != 0) terms.emplace_back(var, coef);
    return *this;
  }
};

// Standard-form conic program
//
//   minimize    c^T x
//   subject to  A x = b
//               G x + s = h,   s in K = K_1 x ... x K_n
//
// Cone blocks occupy consecutive, disjoint slices of the rows of G in the
// order they were added.
struct ConeProgram {
  int n = 0;
  std::vector<double> c;
  int eq_rows = 0;
  std::vector<Entry> A;
  std::vector<double> b;
  int cone_rows = 0;
  std::vector<Entry> G;
  std::vector<double> h;
  std::vector<ConeBlock> cones;
  std::vector<std::string> var_names;

  int add_variable(std::string name = {}) {
    c.push_back(0.0);
    var_names.push_back(std::move(name));
    return n++;
  }

  void set_objective(int var, double coef) { c.at(static_cast<std::size_t>(var)) = coef; }

  // expr == 0
  void add_equality(const AffineExpr& expr) {
    for (const auto& [j, a] : expr.terms) A.push_back({eq_rows, check_var(j), a});
    b.push_back(-expr.constant);
    ++eq_rows;
  }

  // Adds the cone constraint (expr_0, ..., expr_{d-1}) in K. Each row becomes
  // s_i = expr_i, i.e. G_i = -a_i and h_i = constant_i.
  void add_cone(ConeKind kind, const std::vector<AffineExpr>& rows) {
    const int d = static_cast<int>(rows.size());
    if (d == 0) throw std::invalid_argument("add_cone: empty cone");
    if (kind == ConeKind::RotatedSecondOrder && d < 2)
      throw std::invalid_argument("add_cone: rotated cone needs dimension >= 2");
    if (kind == ConeKind::NonNegative) {
      for (const auto& r : rows) push_cone_row(r);
      if (!cones.empty() && cones.back().kind == ConeKind::NonNegative) cones.back().dim += d;
      else cones.push_back({kind, d});
      return;
    }
    for (const auto& r : rows) push_cone_row(r);
    cones.push_back({kind, d});
  }

  // expr >= 0
  void add_nonnegative(const AffineExpr& expr) { add_cone(ConeKind::NonNegative, {expr}); }

  void validate() const {
    if (static_cast<int>(c.size()) != n) throw std::logic_error("ConeProgram: objective size mismatch");
    if (static_cast<int>(b.size()) != eq_rows || static_cast<int>(h.size()) != cone_rows)
      throw std::logic_error("ConeProgram: right-hand side size mismatch");
    int total = 0;
    for (const auto& blk : cones) total += blk.dim;
    if (total != cone_rows) throw std::logic_error("ConeProgram: cone dimensions do not cover all rows");
    for (const auto& e : A)
      if (e.row < 0 || e.row >= eq_rows || e.col < 0 || e.col >= n)
        throw std::logic_error("ConeProgram: equality entry out of range");
    for (const auto& e : G)
      if (e.row < 0 || e.row >= cone_rows || e.col < 0 || e.col >= n)
        throw std::logic_error("ConeProgram: cone entry out of range");
  }

  double objective_value(const Eigen::VectorXd& x) const {
    double v = 0;
    for (int j = 0; j < n; ++j) v += c[static_cast<std::size_t>(j)] * x[j];
    return v;
  }

 private:
  int check_var(int j) const {
    if (j < 0 || j >= n) throw std::out_of_range("ConeProgram: variable index out of range");
    return j;
  }
  void push_cone_row(const AffineExpr& r) {
    for (const auto& [j, a] : r.terms) G.push_back({cone_rows, check_var(j), -a});
    h.push_back(r.constant);
    ++cone_rows;
  }
};

// Plain-text sparse dump for cross-checking against external solvers. Layout
// (one item per line, numbers in %.17g):
//
//   cone_program 1
//   dims <n> <eq_rows> <cone_rows>
//   c <nnz>            then <j> <c_j> per line
//   A <nnz>            then <i> <j> <a_ij>
//   b <eq_rows>        then <b_i>
//   G <nnz>            then <i> <j> <g_ij>
//   h <cone_rows>      then <h_i>
//   cones <count>      then <kind> <dim>, kind in {l, q, r}
//   vars <n>           then <j> <name>
inline void write_program(std::ostream& os, const ConeProgram& p) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << "cone_program 1\n";
  os << "dims " << p.n << ' ' << p.eq_rows << ' ' << p.cone_rows << '\n';
  int nnz_c = 0;
  for (double v : p.c) nnz_c += v != 0 ? 1 : 0;
  os << "c " << nnz_c << '\n';
  for (int j = 0; j < p.n; ++j)
    if (p.c[static_cast<std::size_t>(j)] != 0) os << j << ' ' << num(p.c[static_cast<std::size_t>(j)]) << '\n';
  os << "A " << p.A.size() << '\n';
  for (const auto& e : p.A) os << e.row << ' ' << e.col << ' ' << num(e.value) << '\n';
  os << "b " << p.b.size() << '\n';
  for (double v : p.b) os << num(v) << '\n';
  os << "G " << p.G.size() << '\n';
  for (const auto& e : p.G) os << e.row << ' ' << e.col << ' ' << num(e.value) << '\n';
  os << "h " << p.h.size() << '\n';
  for (double v : p.h) os << num(v) << '\n';
  os << "cones " << p.cones.size() << '\n';
  for (const auto& blk : p.cones) {
    const char kind = blk.kind == ConeKind::NonNegative ? 'l' : blk.kind == ConeKind::SecondOrder ? 'q' : 'r';
    os << kind << ' ' << blk.dim << '\n';
  }
  os << "vars " << p.n << '\n';
  for (int j = 0; j < p.n; ++j)
    os << j << ' ' << (p.var_names[static_cast<std::size_t>(j)].empty() ? "-" : p.var_names[static_cast<std::size_t>(j)])
       << '\n';
}

}  // namespace cfisac
