#ifndef SQSOS_EXPR_HPP
#define SQSOS_EXPR_HPP

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sqsos/poly.hpp"

namespace sqsos {

/// A polynomial-valued decision variable: its coefficients over `basis`
/// are the scalar unknowns of the nonlinear program.
struct DecisionVar {
  enum class Role { FreePoly, SosMultiplier, Scalar };
  std::string name;
  int nvars = 0;                  // indeterminates of the value polynomial
  std::vector<MultiIndex> basis;  // coefficient slots, duplicate-free
  Role role = Role::FreePoly;

  int dim() const { return static_cast<int>(basis.size()); }
};

DecisionVar make_scalar_var(std::string name, int nvars);
DecisionVar make_poly_var(std::string name, int nvars, int degree,
                          DecisionVar::Role role = DecisionVar::Role::FreePoly,
                          int min_degree = 0);

/// Coefficient vectors for every decision variable, aligned with the
/// problem's variable list.
struct CoeffAssignment {
  std::vector<Eigen::VectorXd> coeffs;

  Eigen::VectorXd flatten() const;
  static CoeffAssignment unflatten(const std::vector<DecisionVar>& vars,
                                   const Eigen::VectorXd& x);
};

int flat_dim(const std::vector<DecisionVar>& vars);
int flat_offset(const std::vector<DecisionVar>& vars, int var_index);

/// Expression over decision variables; decision degree is capped at two
/// (products of products are rejected at build time).
class Expr {
 public:
  struct Node;
  Expr() = default;

  static Expr constant(Polynomial p);
  /// Reference to vars[var_index] of the owning problem.
  static Expr var(const std::vector<DecisionVar>& vars, int var_index);

  Expr operator+(const Expr& o) const;
  Expr operator-(const Expr& o) const;
  Expr operator*(double c) const;
  friend Expr mul(const Expr& a, const Expr& b);
  /// <grad(value of V), f(x, controls(x))>. `dynamics` has nvars + #controls
  /// indeterminates; with no controls it is used as-is over nvars.
  friend Expr grad_dot(const Expr& V, PolyVec dynamics,
                       std::vector<Expr> controls);

  bool valid() const { return node_ != nullptr; }
  const Node& node() const { return *node_; }
  int decision_degree() const;
  int nvars() const;

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

Expr mul(const Expr& a, const Expr& b);
Expr grad_dot(const Expr& V, PolyVec dynamics, std::vector<Expr> controls = {});

/// Value and exact Frechet derivative of an expression at an assignment:
/// columns are indexed by flattened decision-coefficient slots.
struct LinearizedExpr {
  Polynomial value;
  std::map<int, Polynomial> jacobian;  // flat slot -> column polynomial
};

Polynomial eval_expr(const Expr& e, const std::vector<DecisionVar>& vars,
                     const CoeffAssignment& a);
LinearizedExpr linearize_expr(const Expr& e, const std::vector<DecisionVar>& vars,
                              const CoeffAssignment& a);

/// Monomial support hull of the expression over all assignments (frozen
/// constraint basis), sorted in graded-lex order.
std::vector<MultiIndex> support_hull(const Expr& e,
                                     const std::vector<DecisionVar>& vars);

/// Hessian of <lambda, e> with respect to the flattened decision
/// coefficients, added into H (dense, flat_dim x flat_dim). lambda pairs
/// with the value polynomial coefficient-wise.
void add_constraint_hessian(const Expr& e, const std::vector<DecisionVar>& vars,
                            const CoeffAssignment& a, const Polynomial& lambda,
                            double scale, Eigen::MatrixXd& H);

/// Objective: sum_t weight_t * ||value(term_t)||^2 (coefficient l2 norm,
/// each term affine in the decisions) + linear part + constant.
struct Objective {
  struct QuadTerm {
    double weight;
    Expr expr;
  };
  std::vector<QuadTerm> quad_terms;
  Eigen::VectorXd linear;  // empty = zero
  double constant = 0.0;
};

double eval_objective(const Objective& obj, const std::vector<DecisionVar>& vars,
                      const CoeffAssignment& a);
void objective_gradient_hessian(const Objective& obj,
                                const std::vector<DecisionVar>& vars,
                                const CoeffAssignment& a, Eigen::VectorXd& grad,
                                Eigen::MatrixXd& hess);

/// A nonlinear SOS program: minimize the objective subject to every
/// constraint expression lying in the SOS cone (and SOS-multiplier
/// variables lying in it as well).
struct SosProgram {
  std::vector<DecisionVar> vars;
  std::vector<Expr> constraints;
  Objective objective;

  int num_coeffs() const { return flat_dim(vars); }
};

}  // namespace sqsos

#endif
