#include "sqsos/expr.hpp"

#include <set>
#include <stdexcept>

namespace sqsos {

DecisionVar make_scalar_var(std::string name, int nvars) {
  DecisionVar v;
  v.name = std::move(name);
  v.nvars = nvars;
  v.basis = {MultiIndex(nvars, 0)};
  v.role = DecisionVar::Role::Scalar;
  return v;
}

DecisionVar make_poly_var(std::string name, int nvars, int degree,
                          DecisionVar::Role role, int min_degree) {
  DecisionVar v;
  v.name = std::move(name);
  v.nvars = nvars;
  v.role = role;
  for (const auto& alpha : monomials_up_to(nvars, degree))
    if (total_degree(alpha) >= min_degree) v.basis.push_back(alpha);
  if (v.basis.empty())
    throw std::invalid_argument("make_poly_var: empty coefficient basis");
  return v;
}

Eigen::VectorXd CoeffAssignment::flatten() const {
  int n = 0;
  for (const auto& c : coeffs) n += static_cast<int>(c.size());
  Eigen::VectorXd x(n);
  int o = 0;
  for (const auto& c : coeffs) {
    x.segment(o, c.size()) = c;
    o += static_cast<int>(c.size());
  }
  return x;
}

CoeffAssignment CoeffAssignment::unflatten(const std::vector<DecisionVar>& vars,
                                           const Eigen::VectorXd& x) {
  if (x.size() != flat_dim(vars))
    throw std::invalid_argument("unflatten: dimension mismatch");
  CoeffAssignment a;
  int o = 0;
  for (const auto& v : vars) {
    a.coeffs.push_back(x.segment(o, v.dim()));
    o += v.dim();
  }
  return a;
}

int flat_dim(const std::vector<DecisionVar>& vars) {
  int n = 0;
  for (const auto& v : vars) n += v.dim();
  return n;
}

int flat_offset(const std::vector<DecisionVar>& vars, int var_index) {
  int o = 0;
  for (int i = 0; i < var_index; ++i) o += vars[i].dim();
  return o;
}

struct Expr::Node {
  enum class Kind { Const, Var, Add, Scale, Mul, GradDot };
  Kind kind;
  Polynomial cpoly;      // Const
  int var_index = -1;    // Var
  double factor = 1.0;   // Scale
  std::vector<Expr> children;
  PolyVec dynamics;      // GradDot: over nvars + controls.size() indeterminates
  std::vector<Expr> controls;
  int ddeg = 0;   // degree in the decision coefficients
  int nvars = 0;  // indeterminates of the value polynomial
};

namespace {

using Node = Expr::Node;

int require_same_nvars(const Expr& a, const Expr& b, const char* op) {
  if (a.nvars() != b.nvars())
    throw std::invalid_argument(std::string(op) +
                                ": operand indeterminate counts differ");
  return a.nvars();
}

/// Degree of f in the trailing `m` indeterminates.
int tail_degree(const PolyVec& f, int keep, int m) {
  int d = 0;
  for (const auto& fi : f)
    for (const auto& [alpha, c] : fi.terms()) {
      int t = 0;
      for (int j = 0; j < m; ++j) t += alpha[keep + j];
      d = std::max(d, t);
    }
  return d;
}

}  // namespace

Expr Expr::constant(Polynomial p) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Const;
  n->nvars = p.nvars();
  n->cpoly = std::move(p);
  return Expr(std::move(n));
}

Expr Expr::var(const std::vector<DecisionVar>& vars, int var_index) {
  if (var_index < 0 || var_index >= static_cast<int>(vars.size()))
    throw std::out_of_range("Expr::var: bad variable index");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Var;
  n->var_index = var_index;
  n->nvars = vars[var_index].nvars;
  n->ddeg = 1;
  return Expr(std::move(n));
}

Expr Expr::operator+(const Expr& o) const {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Add;
  n->nvars = require_same_nvars(*this, o, "Expr::operator+");
  n->children = {*this, o};
  n->ddeg = std::max(node_->ddeg, o.node_->ddeg);
  return Expr(std::move(n));
}

Expr Expr::operator*(double c) const {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Scale;
  n->nvars = node_->nvars;
  n->factor = c;
  n->children = {*this};
  n->ddeg = node_->ddeg;
  return Expr(std::move(n));
}

Expr Expr::operator-(const Expr& o) const { return *this + o * -1.0; }

Expr mul(const Expr& a, const Expr& b) {
  const int dd = a.node().ddeg + b.node().ddeg;
  if (a.node().ddeg > 1 || b.node().ddeg > 1)
    throw std::invalid_argument(
        "mul: factors must be affine in the decision coefficients");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Mul;
  n->nvars = require_same_nvars(a, b, "mul");
  n->children = {a, b};
  n->ddeg = dd;
  return Expr(std::move(n));
}

Expr grad_dot(const Expr& V, PolyVec dynamics, std::vector<Expr> controls) {
  const int nx = V.nvars();
  const int m = static_cast<int>(controls.size());
  if (static_cast<int>(dynamics.size()) != nx)
    throw std::invalid_argument("grad_dot: dynamics dimension != state count");
  for (const auto& fi : dynamics)
    if (!fi.is_zero() && fi.nvars() != nx + m)
      throw std::invalid_argument("grad_dot: dynamics indeterminate count");
  int kmax = 0;
  for (const auto& k : controls) {
    if (k.nvars() != nx)
      throw std::invalid_argument("grad_dot: control indeterminate count");
    if (k.node().ddeg > 1)
      throw std::invalid_argument(
          "grad_dot: controls must be affine in the decision coefficients");
    kmax = std::max(kmax, k.node().ddeg);
  }
  if (V.node().ddeg > 1)
    throw std::invalid_argument(
        "grad_dot: differentiated argument must be affine in the decisions");
  const int du = m > 0 ? tail_degree(dynamics, nx, m) : 0;
  const int dd = V.node().ddeg + du * kmax;
  if (dd > 2)
    throw std::invalid_argument(
        "grad_dot: decision degree of the result exceeds two");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::GradDot;
  n->nvars = nx;
  n->children = {V};
  n->dynamics = std::move(dynamics);
  n->controls = std::move(controls);
  n->ddeg = dd;
  return Expr(std::move(n));
}

int Expr::decision_degree() const { return node_->ddeg; }
int Expr::nvars() const { return node_->nvars; }

namespace {

/// Closed-loop vector field f(x, k(x)) and its per-slot derivative
/// through the control coefficients.
struct ClosedLoop {
  PolyVec F;                                // nvars indeterminates
  std::map<int, PolyVec> dF;                // flat slot -> dF/dslot
  std::vector<LinearizedExpr> control_lin;  // per control expr
  PolyVec fsub_u;                           // df_i/du_j substituted, i*m + j
  int m = 0;
};

LinearizedExpr lin_rec(const Node& nd, const std::vector<DecisionVar>& vars,
                       const CoeffAssignment& a, bool want_jac);

ClosedLoop close_loop(const Node& nd, const std::vector<DecisionVar>& vars,
                      const CoeffAssignment& a, bool want_jac) {
  ClosedLoop cl;
  const int nx = nd.nvars;
  cl.m = static_cast<int>(nd.controls.size());
  if (cl.m == 0) {
    cl.F = nd.dynamics;
    return cl;
  }
  PolyVec kvals;
  for (const auto& k : nd.controls) {
    cl.control_lin.push_back(lin_rec(k.node(), vars, a, want_jac));
    kvals.push_back(cl.control_lin.back().value);
  }
  cl.F.reserve(nx);
  for (const auto& fi : nd.dynamics) cl.F.push_back(fi.substitute_tail(nx, kvals));
  if (!want_jac) return cl;
  cl.fsub_u.resize(static_cast<size_t>(nx) * cl.m);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < cl.m; ++j)
      cl.fsub_u[static_cast<size_t>(i) * cl.m + j] =
          nd.dynamics[i].derivative(nx + j).substitute_tail(nx, kvals);
  for (int j = 0; j < cl.m; ++j)
    for (const auto& [slot, col] : cl.control_lin[j].jacobian) {
      auto it = cl.dF.find(slot);
      if (it == cl.dF.end())
        it = cl.dF.emplace(slot, PolyVec(nx, Polynomial(nx))).first;
      for (int i = 0; i < nx; ++i)
        it->second[i] += cl.fsub_u[static_cast<size_t>(i) * cl.m + j] * col;
    }
  return cl;
}

LinearizedExpr lin_rec(const Node& nd, const std::vector<DecisionVar>& vars,
                       const CoeffAssignment& a, bool want_jac) {
  LinearizedExpr out;
  switch (nd.kind) {
    case Node::Kind::Const:
      out.value = nd.cpoly;
      break;
    case Node::Kind::Var: {
      const DecisionVar& v = vars[nd.var_index];
      const int base = flat_offset(vars, nd.var_index);
      out.value = Polynomial(v.nvars);
      const Eigen::VectorXd& c = a.coeffs[nd.var_index];
      for (int s = 0; s < v.dim(); ++s) {
        if (c[s] != 0.0) out.value += Polynomial::monomial(v.basis[s], c[s]);
        if (want_jac) out.jacobian[base + s] = Polynomial::monomial(v.basis[s]);
      }
      break;
    }
    case Node::Kind::Add: {
      auto l = lin_rec(nd.children[0].node(), vars, a, want_jac);
      auto r = lin_rec(nd.children[1].node(), vars, a, want_jac);
      out.value = l.value + r.value;
      out.jacobian = std::move(l.jacobian);
      for (auto& [slot, col] : r.jacobian) {
        auto it = out.jacobian.find(slot);
        if (it == out.jacobian.end())
          out.jacobian.emplace(slot, std::move(col));
        else
          it->second += col;
      }
      break;
    }
    case Node::Kind::Scale: {
      out = lin_rec(nd.children[0].node(), vars, a, want_jac);
      out.value = out.value * nd.factor;
      for (auto& [slot, col] : out.jacobian) col = col * nd.factor;
      break;
    }
    case Node::Kind::Mul: {
      auto l = lin_rec(nd.children[0].node(), vars, a, want_jac);
      auto r = lin_rec(nd.children[1].node(), vars, a, want_jac);
      out.value = l.value * r.value;
      if (want_jac) {
        for (const auto& [slot, col] : l.jacobian) out.jacobian[slot] = col * r.value;
        for (const auto& [slot, col] : r.jacobian) {
          auto [it, fresh] = out.jacobian.emplace(slot, l.value * col);
          if (!fresh) it->second += l.value * col;
        }
      }
      break;
    }
    case Node::Kind::GradDot: {
      auto lv = lin_rec(nd.children[0].node(), vars, a, want_jac);
      auto cl = close_loop(nd, vars, a, want_jac);
      out.value = gradient_dot(lv.value, cl.F);
      if (want_jac) {
        for (const auto& [slot, col] : lv.jacobian)
          out.jacobian[slot] = gradient_dot(col, cl.F);
        const PolyVec gv = gradient(lv.value);
        for (const auto& [slot, dF] : cl.dF) {
          Polynomial add(nd.nvars);
          for (int i = 0; i < nd.nvars; ++i) add += gv[i] * dF[i];
          auto [it, fresh] = out.jacobian.emplace(slot, add);
          if (!fresh) it->second += add;
        }
      }
      break;
    }
  }
  if (want_jac)
    for (auto it = out.jacobian.begin(); it != out.jacobian.end();)
      it = it->second.is_zero() ? out.jacobian.erase(it) : std::next(it);
  return out;
}

using Support = std::set<MultiIndex, GrlexLess>;

Support minkowski(const Support& a, const Support& b) {
  Support out;
  for (const auto& p : a)
    for (const auto& q : b) {
      MultiIndex s(p.size());
      for (size_t i = 0; i < p.size(); ++i) s[i] = p[i] + q[i];
      out.insert(std::move(s));
    }
  return out;
}

Support support_rec(const Node& nd, const std::vector<DecisionVar>& vars) {
  Support out;
  switch (nd.kind) {
    case Node::Kind::Const:
      for (const auto& [alpha, c] : nd.cpoly.terms()) out.insert(alpha);
      break;
    case Node::Kind::Var:
      out.insert(vars[nd.var_index].basis.begin(), vars[nd.var_index].basis.end());
      break;
    case Node::Kind::Add: {
      out = support_rec(nd.children[0].node(), vars);
      Support r = support_rec(nd.children[1].node(), vars);
      out.insert(r.begin(), r.end());
      break;
    }
    case Node::Kind::Scale:
      out = support_rec(nd.children[0].node(), vars);
      break;
    case Node::Kind::Mul:
      out = minkowski(support_rec(nd.children[0].node(), vars),
                      support_rec(nd.children[1].node(), vars));
      break;
    case Node::Kind::GradDot: {
      const int nx = nd.nvars;
      const int m = static_cast<int>(nd.controls.size());
      std::vector<Support> ksup;
      for (const auto& k : nd.controls) ksup.push_back(support_rec(k.node(), vars));
      // support of the closed-loop field, componentwise
      std::vector<Support> fsup(nx);
      for (int i = 0; i < nx; ++i)
        for (const auto& [alpha, c] : nd.dynamics[i].terms()) {
          Support term;
          MultiIndex head(alpha.begin(), alpha.begin() + nx);
          term.insert(std::move(head));
          for (int j = 0; j < m; ++j)
            for (int rep = 0; rep < alpha[nx + j]; ++rep)
              term = minkowski(term, ksup[j]);
          fsup[i].insert(term.begin(), term.end());
        }
      const Support vsup = support_rec(nd.children[0].node(), vars);
      for (int i = 0; i < nx; ++i) {
        Support dv;
        for (const auto& alpha : vsup)
          if (alpha[i] > 0) {
            MultiIndex d = alpha;
            --d[i];
            dv.insert(std::move(d));
          }
        Support part = minkowski(dv, fsup[i]);
        out.insert(part.begin(), part.end());
      }
      break;
    }
  }
  return out;
}

void hess_rec(const Node& nd, const std::vector<DecisionVar>& vars,
              const CoeffAssignment& a, const Polynomial& lambda, double scale,
              Eigen::MatrixXd& H) {
  switch (nd.kind) {
    case Node::Kind::Const:
    case Node::Kind::Var:
      break;
    case Node::Kind::Add:
      hess_rec(nd.children[0].node(), vars, a, lambda, scale, H);
      hess_rec(nd.children[1].node(), vars, a, lambda, scale, H);
      break;
    case Node::Kind::Scale:
      hess_rec(nd.children[0].node(), vars, a, lambda, scale * nd.factor, H);
      break;
    case Node::Kind::Mul: {
      // factors are affine, so only the bilinear cross terms survive
      auto l = lin_rec(nd.children[0].node(), vars, a, true);
      auto r = lin_rec(nd.children[1].node(), vars, a, true);
      for (const auto& [sa, pa] : l.jacobian)
        for (const auto& [sb, pb] : r.jacobian) {
          const double c = scale * coeff_dot(lambda, pa * pb);
          H(sa, sb) += c;
          H(sb, sa) += c;
        }
      break;
    }
    case Node::Kind::GradDot: {
      auto lv = lin_rec(nd.children[0].node(), vars, a, true);
      auto cl = close_loop(nd, vars, a, true);
      // cross terms <grad dV/da, dF/db>
      for (const auto& [sa, pa] : lv.jacobian)
        for (const auto& [sb, dF] : cl.dF) {
          const double c = scale * coeff_dot(lambda, gradient_dot(pa, dF));
          H(sa, sb) += c;
          H(sb, sa) += c;
        }
      // curvature of f in the controls (zero for control-affine fields)
      const int nx = nd.nvars;
      const int m = cl.m;
      if (m > 0 && tail_degree(nd.dynamics, nx, m) >= 2) {
        const PolyVec gv = gradient(lv.value);
        PolyVec kvals;
        for (const auto& kl : cl.control_lin) kvals.push_back(kl.value);
        // <grad V, d2f/du_j du_l> substituted, indexed j*m + l
        PolyVec gf2(static_cast<size_t>(m) * m, Polynomial(nx));
        for (int j = 0; j < m; ++j)
          for (int l = j; l < m; ++l) {
            Polynomial s(nx);
            for (int i = 0; i < nx; ++i)
              s += gv[i] * nd.dynamics[i].derivative(nx + j).derivative(nx + l)
                               .substitute_tail(nx, kvals);
            gf2[static_cast<size_t>(j) * m + l] = s;
            gf2[static_cast<size_t>(l) * m + j] = s;
          }
        for (int j = 0; j < m; ++j)
          for (int l = 0; l < m; ++l)
            for (const auto& [sa, ka] : cl.control_lin[j].jacobian)
              for (const auto& [sb, kb] : cl.control_lin[l].jacobian)
                H(sa, sb) += scale * coeff_dot(lambda,
                                               gf2[static_cast<size_t>(j) * m + l] *
                                                   ka * kb);
      }
      break;
    }
  }
}

}  // namespace

Polynomial eval_expr(const Expr& e, const std::vector<DecisionVar>& vars,
                     const CoeffAssignment& a) {
  return lin_rec(e.node(), vars, a, false).value;
}

LinearizedExpr linearize_expr(const Expr& e, const std::vector<DecisionVar>& vars,
                              const CoeffAssignment& a) {
  return lin_rec(e.node(), vars, a, true);
}

std::vector<MultiIndex> support_hull(const Expr& e,
                                     const std::vector<DecisionVar>& vars) {
  Support s = support_rec(e.node(), vars);
  return {s.begin(), s.end()};
}

void add_constraint_hessian(const Expr& e, const std::vector<DecisionVar>& vars,
                            const CoeffAssignment& a, const Polynomial& lambda,
                            double scale, Eigen::MatrixXd& H) {
  const int n = flat_dim(vars);
  if (H.rows() != n || H.cols() != n)
    throw std::invalid_argument("add_constraint_hessian: Hessian shape mismatch");
  hess_rec(e.node(), vars, a, lambda, scale, H);
}

double eval_objective(const Objective& obj, const std::vector<DecisionVar>& vars,
                      const CoeffAssignment& a) {
  double f = obj.constant;
  for (const auto& t : obj.quad_terms)
    f += t.weight * eval_expr(t.expr, vars, a).l2_norm_sq();
  if (obj.linear.size() > 0) {
    const Eigen::VectorXd x = a.flatten();
    if (obj.linear.size() != x.size())
      throw std::invalid_argument("eval_objective: linear term dimension");
    f += obj.linear.dot(x);
  }
  return f;
}

void objective_gradient_hessian(const Objective& obj,
                                const std::vector<DecisionVar>& vars,
                                const CoeffAssignment& a, Eigen::VectorXd& grad,
                                Eigen::MatrixXd& hess) {
  const int n = flat_dim(vars);
  grad = Eigen::VectorXd::Zero(n);
  hess = Eigen::MatrixXd::Zero(n, n);
  if (obj.linear.size() > 0) {
    if (obj.linear.size() != n)
      throw std::invalid_argument("objective_gradient_hessian: linear term dimension");
    grad = obj.linear;
  }
  for (const auto& t : obj.quad_terms) {
    if (t.expr.decision_degree() > 1)
      throw std::invalid_argument(
          "objective_gradient_hessian: squared terms must be affine");
    const LinearizedExpr L = linearize_expr(t.expr, vars, a);
    for (const auto& [sa, pa] : L.jacobian) {
      grad[sa] += 2.0 * t.weight * coeff_dot(L.value, pa);
      for (const auto& [sb, pb] : L.jacobian)
        hess(sa, sb) += 2.0 * t.weight * coeff_dot(pa, pb);
    }
  }
}

}  // namespace sqsos
