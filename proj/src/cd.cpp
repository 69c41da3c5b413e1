#include <chrono>
#include <cmath>
#include <limits>

#include "sqsos/bench.hpp"
#include "sqsos/conic.hpp"
#include "sqsos/soscone.hpp"

namespace sqsos {

namespace {

int even_up(int d) { return d + (d % 2); }

struct ConstraintShape {
  int nvars = 0;
  int two_d = 0;
  Polynomial interior;
};

ConstraintShape shape_of(const Expr& e, const std::vector<DecisionVar>& vars) {
  ConstraintShape cs;
  cs.nvars = e.nvars();
  int d = 0;
  for (const auto& alpha : support_hull(e, vars))
    d = std::max(d, total_degree(alpha));
  cs.two_d = even_up(d);
  cs.interior = Polynomial(cs.nvars);
  for (const auto& z : monomials_up_to(cs.nvars, cs.two_d / 2)) {
    MultiIndex sq(cs.nvars);
    for (int v = 0; v < cs.nvars; ++v) sq[v] = 2 * z[v];
    cs.interior.set_coeff(sq, cs.interior.coeff(sq) + 1.0);
  }
  return cs;
}

// Convex solve over the slots in `active` with everything else frozen.
// The constraints are affine in each coordinate block, so the linearization
// at the current point restricted to the block is exact.
bool block_step(const SosProgram& prob, const std::vector<ConstraintShape>& cs,
                const std::vector<int>& active, CoeffAssignment& a,
                std::string& status) {
  const int nact = static_cast<int>(active.size());
  std::vector<int> pos(prob.num_coeffs(), -1);
  for (int i = 0; i < nact; ++i) pos[active[i]] = i;

  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  objective_gradient_hessian(prob.objective, prob.vars, a, grad, hess);
  ConicBuilder bld;
  bld.add_vars(nact);
  Eigen::MatrixXd Hact(nact, nact);
  for (int i = 0; i < nact; ++i)
    for (int j = 0; j < nact; ++j) Hact(i, j) = hess(active[i], active[j]);
  if (Hact.norm() > 0) bld.set_quadratic_cost(Hact);
  for (int i = 0; i < nact; ++i)
    if (grad[active[i]] != 0.0) bld.set_linear_cost(i, grad[active[i]]);

  for (size_t c = 0; c < prob.constraints.size(); ++c) {
    const LinearizedExpr lin =
        linearize_expr(prob.constraints[c], prob.vars, a);
    AffinePolyMap m;
    m.offset = lin.value;
    for (const auto& [slot, col] : lin.jacobian)
      if (pos[slot] >= 0) m.cols.emplace_back(pos[slot], col);
    transcribe_sos(m, cs[c].nvars, cs[c].two_d, bld);
  }

  const ConicSolution sol = solve(bld.build());
  status = to_string(sol.status);
  if (sol.status != SolveStatus::Optimal) return false;
  Eigen::VectorXd x = a.flatten();
  for (int i = 0; i < nact; ++i) x[active[i]] += sol.x[i];
  a = CoeffAssignment::unflatten(prob.vars, x);
  return true;
}

}  // namespace

BenchReport solve_coordinate_descent(const BuiltProblem& bp,
                                     const SqpConfig& cfg,
                                     CoeffAssignment* solution) {
  cfg.validate();
  if (bp.pf.kind != ProblemFile::Kind::Roa)
    throw std::invalid_argument(
        "solve_coordinate_descent: baseline implemented for roa problems");
  const auto t0 = std::chrono::steady_clock::now();
  const SosProgram& prob = bp.prob;

  BenchReport rep;
  rep.problem_id = bp.pf.id;
  rep.method = "cd";

  std::vector<ConstraintShape> cs;
  for (const auto& e : prob.constraints) cs.push_back(shape_of(e, prob.vars));

  std::vector<int> mult_slots, lyap_slots;
  for (size_t v = 0; v < prob.vars.size(); ++v) {
    const int off = flat_offset(prob.vars, static_cast<int>(v));
    auto& dst = prob.vars[v].role == DecisionVar::Role::SosMultiplier
                    ? mult_slots
                    : lyap_slots;
    for (int i = 0; i < prob.vars[v].dim(); ++i) dst.push_back(off + i);
  }

  CoeffAssignment a = bp.init;
  double f_prev = std::numeric_limits<double>::infinity();
  rep.status = "max-iter";
  rep.f = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < cfg.max_iter; ++k) {
    std::string status;
    // multiplier step first: with V fixed this is a pure feasibility
    // problem, and an infeasible start is detected right here
    if (!block_step(prob, cs, mult_slots, a, status)) {
      rep.status = "failed";
      rep.message = "multiplier step " + status + " at iteration " +
                    std::to_string(k + 1);
      rep.iterations = k + 1;
      break;
    }
    if (!block_step(prob, cs, lyap_slots, a, status)) {
      rep.status = "failed";
      rep.message = "Lyapunov step " + status + " at iteration " +
                    std::to_string(k + 1);
      rep.iterations = k + 1;
      break;
    }
    const double f = eval_objective(prob.objective, prob.vars, a);
    rep.iterations = k + 1;
    rep.f = f;
    if (std::isfinite(f_prev)) rep.last_df = std::abs(f - f_prev);
    if (std::abs(f - f_prev) <= cfg.eps_opt) {
      rep.status = "optimal";
      break;
    }
    f_prev = f;
  }

  if (rep.status != "failed") {
    PolyVec g;
    for (const auto& e : prob.constraints)
      g.push_back(eval_expr(e, prob.vars, a));
    PolyVec interior;
    for (const auto& c : cs) interior.push_back(c.interior);
    rep.theta = theta_signed_distance(g, interior, cfg.violation.eps).theta;
  } else {
    rep.f = std::numeric_limits<double>::quiet_NaN();
    rep.theta = std::numeric_limits<double>::quiet_NaN();
  }
  if (solution) *solution = a;
  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rep;
}

}  // namespace sqsos
