#include <cmath>

#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "sqsos/expr.hpp"

using namespace sqsos;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Polynomial eval_at(const Expr& e, const std::vector<DecisionVar>& vars,
                   const VectorXd& x) {
  return eval_expr(e, vars, CoeffAssignment::unflatten(vars, x));
}

double pair_with(const Polynomial& lambda, const Polynomial& p) {
  double s = 0.0;
  for (const auto& [alpha, c] : lambda.terms()) s += c * p.coeff(alpha);
  return s;
}

double poly_dist(const Polynomial& a, const Polynomial& b) {
  return std::sqrt((a - b).l2_norm_sq());
}

}  // namespace

TEST_CASE("products of decision polynomials evaluate and cap the degree") {
  std::vector<DecisionVar> vars;
  vars.push_back(make_scalar_var("s", 2));
  vars.push_back(make_poly_var("V", 2, 2));
  CoeffAssignment a;
  a.coeffs = {VectorXd::Constant(1, 1.0), VectorXd::Zero(vars[1].dim())};
  // V = x1^2: find its slot in the basis
  for (int i = 0; i < vars[1].dim(); ++i)
    if (vars[1].basis[i] == MultiIndex{2, 0}) a.coeffs[1][i] = 1.0;

  Expr s = Expr::var(vars, 0);
  Expr V = Expr::var(vars, 1);
  Expr e = mul(s, V - Expr::constant(Polynomial::constant(2, 1.0)));
  CHECK(e.decision_degree() == 2);
  CHECK(eval_expr(e, vars, a) == parse_polynomial("x1^2 - 1", 2));
  // a third decision factor is rejected at build time
  CHECK_THROWS_AS(mul(e, s), std::invalid_argument);
  CHECK_THROWS_AS(mul(s, e), std::invalid_argument);
}

TEST_CASE("gradient-dot of a concrete polynomial matches direct computation") {
  std::vector<DecisionVar> vars = {make_poly_var("V", 2, 4, DecisionVar::Role::FreePoly, 2)};
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  VectorXd x(vars[0].dim());
  for (int i = 0; i < x.size(); ++i) x[i] = nd(rng);
  const auto a = CoeffAssignment::unflatten(vars, x);

  // reversed-time Van der Pol vector field
  PolyVec f = {parse_polynomial("-x2", 2),
               parse_polynomial("x1 + x1^2*x2 - x2", 2)};
  Expr e = grad_dot(Expr::var(vars, 0), f);
  CHECK(e.decision_degree() == 1);
  const Polynomial direct = gradient_dot(eval_expr(Expr::var(vars, 0), vars, a), f);
  CHECK(poly_dist(eval_expr(e, vars, a), direct) <= 1e-12);
}

TEST_CASE("jacobian columns match central finite differences") {
  std::vector<DecisionVar> vars;
  vars.push_back(make_poly_var("V", 2, 4, DecisionVar::Role::FreePoly, 2));
  vars.push_back(make_poly_var("s", 2, 2, DecisionVar::Role::SosMultiplier));
  const int n = flat_dim(vars);

  PolyVec f = {parse_polynomial("-x2", 2),
               parse_polynomial("x1 + x1^2*x2 - x2", 2)};
  // s * (V - 1) - <grad V, f>: the generalized S-procedure certificate shape
  Expr V = Expr::var(vars, 0);
  Expr s = Expr::var(vars, 1);
  Expr g = mul(s, V - Expr::constant(Polynomial::constant(2, 1.0))) - grad_dot(V, f);
  CHECK(g.decision_degree() == 2);

  std::mt19937 rng(23);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = nd(rng);
    const auto L = linearize_expr(g, vars, CoeffAssignment::unflatten(vars, x));
    CHECK(poly_dist(L.value, eval_at(g, vars, x)) <= 1e-14);

    VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = nd(rng);
    const double h = 1e-6;
    const Polynomial fd =
        (eval_at(g, vars, x + h * d) - eval_at(g, vars, x - h * d)) * (0.5 / h);
    Polynomial jd(2);
    for (const auto& [slot, col] : L.jacobian) jd += col * d[slot];
    CHECK(poly_dist(fd, jd) <= 1e-5 * (1.0 + std::sqrt(jd.l2_norm_sq())));
  }
}

TEST_CASE("linearization of an affine expression is exact") {
  std::vector<DecisionVar> vars = {make_poly_var("V", 2, 4)};
  PolyVec f = {parse_polynomial("-x2 + x1*x2", 2), parse_polynomial("x1 - x2^3", 2)};
  Expr g = grad_dot(Expr::var(vars, 0), f) * -1.0 +
           Expr::constant(parse_polynomial("x1^2 + x2^2", 2));
  const int n = flat_dim(vars);
  std::mt19937 rng(31);
  std::normal_distribution<double> nd;
  VectorXd x(n), d(n);
  for (int i = 0; i < n; ++i) {
    x[i] = nd(rng);
    d[i] = nd(rng);
  }
  const auto L = linearize_expr(g, vars, CoeffAssignment::unflatten(vars, x));
  Polynomial pred = L.value;
  for (const auto& [slot, col] : L.jacobian) pred += col * d[slot];
  CHECK(poly_dist(pred, eval_at(g, vars, x + d)) <= 1e-12);
}

TEST_CASE("closed-loop substitution differentiates through the controls") {
  // states (x1, x2), control u: f = (x2, -x1 + u)
  std::vector<DecisionVar> vars;
  vars.push_back(make_poly_var("V", 2, 2, DecisionVar::Role::FreePoly, 1));
  vars.push_back(make_poly_var("k", 2, 1));
  PolyVec f = {parse_polynomial("x2", 3), parse_polynomial("-x1 + x3", 3)};
  Expr e = grad_dot(Expr::var(vars, 0), f, {Expr::var(vars, 1)});
  CHECK(e.decision_degree() == 2);

  const int n = flat_dim(vars);
  std::mt19937 rng(47);
  std::normal_distribution<double> nd;
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = nd(rng);
  const auto a = CoeffAssignment::unflatten(vars, x);

  // against manual substitution of kappa into f
  const Polynomial Vp = eval_expr(Expr::var(vars, 0), vars, a);
  const Polynomial kp = eval_expr(Expr::var(vars, 1), vars, a);
  const PolyVec fcl = {parse_polynomial("x2", 2), parse_polynomial("-x1", 2) + kp};
  CHECK(poly_dist(eval_expr(e, vars, a), gradient_dot(Vp, fcl)) <= 1e-12);

  const auto L = linearize_expr(e, vars, a);
  VectorXd d(n);
  for (int i = 0; i < n; ++i) d[i] = nd(rng);
  const double h = 1e-6;
  const Polynomial fd =
      (eval_at(e, vars, x + h * d) - eval_at(e, vars, x - h * d)) * (0.5 / h);
  Polynomial jd(2);
  for (const auto& [slot, col] : L.jacobian) jd += col * d[slot];
  CHECK(poly_dist(fd, jd) <= 1e-5 * (1.0 + std::sqrt(jd.l2_norm_sq())));
}

TEST_CASE("constraint Hessian: bilinear product of two scalars") {
  std::vector<DecisionVar> vars = {make_scalar_var("u", 1), make_scalar_var("v", 1)};
  CoeffAssignment a;
  a.coeffs = {VectorXd::Constant(1, 3.0), VectorXd::Constant(1, -2.0)};
  Expr e = mul(Expr::var(vars, 0), Expr::var(vars, 1));
  MatrixXd H = MatrixXd::Zero(2, 2);
  add_constraint_hessian(e, vars, a, Polynomial::constant(1, 1.0), 1.0, H);
  CHECK(H(0, 1) == doctest::Approx(1.0));
  CHECK(H(1, 0) == doctest::Approx(1.0));
  CHECK(H(0, 0) == 0.0);
  CHECK(H(1, 1) == 0.0);
  // scale propagates through the pairing
  add_constraint_hessian(e, vars, a, Polynomial::constant(1, 2.0), -1.0, H);
  CHECK(H(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("constraint Hessian matches second finite differences") {
  std::vector<DecisionVar> vars;
  vars.push_back(make_poly_var("V", 2, 4, DecisionVar::Role::FreePoly, 2));
  vars.push_back(make_poly_var("s", 2, 2, DecisionVar::Role::SosMultiplier));
  PolyVec f = {parse_polynomial("-x2", 2),
               parse_polynomial("x1 + x1^2*x2 - x2", 2)};
  Expr V = Expr::var(vars, 0);
  Expr s = Expr::var(vars, 1);
  Expr g = mul(s, V - Expr::constant(Polynomial::constant(2, 1.0))) -
           grad_dot(V, f) * 1.0;
  const int n = flat_dim(vars);

  std::mt19937 rng(59);
  std::normal_distribution<double> nd;
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = nd(rng);
  Polynomial lambda(2);
  for (const auto& alpha : monomials_up_to(2, 6))
    lambda.set_coeff(alpha, nd(rng));

  MatrixXd H = MatrixXd::Zero(n, n);
  add_constraint_hessian(g, vars, CoeffAssignment::unflatten(vars, x),
                         lambda, 1.0, H);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);

  auto phi = [&](const VectorXd& y) { return pair_with(lambda, eval_at(g, vars, y)); };
  const double h = 1e-4;
  for (int trial = 0; trial < 4; ++trial) {
    VectorXd da(n), db(n);
    for (int i = 0; i < n; ++i) {
      da[i] = nd(rng);
      db[i] = nd(rng);
    }
    const double fd = (phi(x + h * (da + db)) - phi(x + h * da) - phi(x + h * db) +
                       phi(x)) /
                      (h * h);
    const double hd = da.dot(H * db);
    CHECK(std::abs(fd - hd) <= 1e-4 * (1.0 + std::abs(hd)));
  }
}

TEST_CASE("control curvature enters the Hessian for quadratic-in-u fields") {
  // single state, f = x^2 + u^2, differentiated argument held fixed
  std::vector<DecisionVar> vars = {make_poly_var("k", 1, 1)};
  PolyVec f = {parse_polynomial("x1^2 + x2^2", 2)};
  Expr e = grad_dot(Expr::constant(parse_polynomial("x1^2", 1)), f,
                    {Expr::var(vars, 0)});
  CHECK(e.decision_degree() == 2);

  const int n = flat_dim(vars);
  std::mt19937 rng(67);
  std::normal_distribution<double> nd;
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = nd(rng);
  Polynomial lambda(1);
  for (const auto& alpha : monomials_up_to(1, 4)) lambda.set_coeff(alpha, nd(rng));

  MatrixXd H = MatrixXd::Zero(n, n);
  add_constraint_hessian(e, vars, CoeffAssignment::unflatten(vars, x),
                         lambda, 1.0, H);
  auto phi = [&](const VectorXd& y) { return pair_with(lambda, eval_at(e, vars, y)); };
  const double h = 1e-4;
  VectorXd da(n), db(n);
  for (int i = 0; i < n; ++i) {
    da[i] = nd(rng);
    db[i] = nd(rng);
  }
  const double fd =
      (phi(x + h * (da + db)) - phi(x + h * da) - phi(x + h * db) + phi(x)) / (h * h);
  CHECK(std::abs(fd - da.dot(H * db)) <= 1e-4 * (1.0 + std::abs(da.dot(H * db))));
  CHECK(H.cwiseAbs().maxCoeff() > 0.0);  // curvature actually present
}

TEST_CASE("objective: sum of squared scalars") {
  std::vector<DecisionVar> vars = {make_scalar_var("u", 1), make_scalar_var("v", 1)};
  Objective obj;
  obj.quad_terms.push_back({1.0, Expr::var(vars, 0)});
  obj.quad_terms.push_back({1.0, Expr::var(vars, 1)});
  CoeffAssignment a;
  a.coeffs = {VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 2.0)};
  CHECK(eval_objective(obj, vars, a) == doctest::Approx(5.0));
  VectorXd grad;
  MatrixXd hess;
  objective_gradient_hessian(obj, vars, a, grad, hess);
  CHECK(grad[0] == doctest::Approx(2.0));
  CHECK(grad[1] == doctest::Approx(4.0));
  CHECK((hess - 2.0 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("objective: distance to a target polynomial has constant Hessian") {
  std::vector<DecisionVar> vars = {make_poly_var("V", 2, 2)};
  const int n = flat_dim(vars);
  const Polynomial g0 = parse_polynomial("x1^2 + x1*x2 + x2^2 - 0.5", 2);
  Objective obj;
  obj.quad_terms.push_back({1.0, Expr::var(vars, 0) - Expr::constant(g0)});

  std::mt19937 rng(71);
  std::normal_distribution<double> nd;
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = nd(rng);
  const auto a = CoeffAssignment::unflatten(vars, x);
  VectorXd grad;
  MatrixXd hess;
  objective_gradient_hessian(obj, vars, a, grad, hess);
  CHECK((hess - 2.0 * MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-14);
  // value and gradient against the coefficient-space distance
  VectorXd g0v(n);
  for (int i = 0; i < n; ++i) g0v[i] = g0.coeff(vars[0].basis[i]);
  CHECK(eval_objective(obj, vars, a) == doctest::Approx((x - g0v).squaredNorm()));
  CHECK((grad - 2.0 * (x - g0v)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("support hull is frozen and covers every assignment") {
  std::vector<DecisionVar> vars;
  vars.push_back(make_poly_var("V", 2, 4, DecisionVar::Role::FreePoly, 2));
  vars.push_back(make_poly_var("s", 2, 2, DecisionVar::Role::SosMultiplier));
  PolyVec f = {parse_polynomial("-x2", 2),
               parse_polynomial("x1 + x1^2*x2 - x2", 2)};
  Expr g = mul(Expr::var(vars, 1),
               Expr::var(vars, 0) - Expr::constant(Polynomial::constant(2, 1.0))) -
           grad_dot(Expr::var(vars, 0), f);
  const auto hull = support_hull(g, vars);
  REQUIRE(!hull.empty());
  CHECK(std::is_sorted(hull.begin(), hull.end(), GrlexLess{}));
  int maxdeg = 0;
  for (const auto& alpha : hull) maxdeg = std::max(maxdeg, total_degree(alpha));
  CHECK(maxdeg == 6);  // deg s + deg V

  std::set<MultiIndex, GrlexLess> hs(hull.begin(), hull.end());
  std::mt19937 rng(83);
  std::normal_distribution<double> nd;
  const int n = flat_dim(vars);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = nd(rng);
    const Polynomial p = eval_at(g, vars, x);
    for (const auto& [alpha, c] : p.terms()) CHECK(hs.count(alpha) == 1);
  }
}
