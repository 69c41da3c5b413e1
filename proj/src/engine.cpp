#include "sqsos/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "sqsos/soscone.hpp"

namespace sqsos {

void SqpConfig::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0))
      throw std::invalid_argument(std::string("SqpConfig: ") + name +
                                  " must be > 0");
  };
  pos(eps_opt, "eps_opt");
  pos(eps_feas, "eps_feas");
  pos(s_phi, "s_phi");
  pos(s_theta, "s_theta");
  pos(delta, "delta");
  pos(rho_armijo, "rho_armijo");
  pos(gamma_f, "gamma_f");
  pos(gamma_theta, "gamma_theta");
  pos(eta, "eta");
  pos(rho_min, "rho_min");
  pos(rho_max, "rho_max");
  pos(alpha_min, "alpha_min");
  pos(theta_min_factor, "theta_min_factor");
  pos(hessian_init_scale, "hessian_init_scale");
  if (!(rho_min < rho_max))
    throw std::invalid_argument("SqpConfig: rho_min must be < rho_max");
  if (max_iter < 1) throw std::invalid_argument("SqpConfig: max_iter must be >= 1");
  violation.validate();
}

std::string to_string(SqpConfig::Hessian h) {
  switch (h) {
    case SqpConfig::Hessian::DampedBfgs: return "damped-bfgs";
    case SqpConfig::Hessian::ExactGershgorin: return "exact-gershgorin";
    case SqpConfig::Hessian::ExactMirrored: return "exact-mirrored";
    case SqpConfig::Hessian::ExactMinFrobenius: return "exact-min-frobenius";
  }
  return "?";
}

bool parse_hessian(const std::string& name, SqpConfig::Hessian& out) {
  if (name == "damped-bfgs") out = SqpConfig::Hessian::DampedBfgs;
  else if (name == "exact-gershgorin") out = SqpConfig::Hessian::ExactGershgorin;
  else if (name == "exact-mirrored") out = SqpConfig::Hessian::ExactMirrored;
  else if (name == "exact-min-frobenius") out = SqpConfig::Hessian::ExactMinFrobenius;
  else return false;
  return true;
}

std::string to_string(SolveOutcome::Status s) {
  switch (s) {
    case SolveOutcome::Status::Optimal: return "optimal";
    case SolveOutcome::Status::LocallyInfeasible: return "locally-infeasible";
    case SolveOutcome::Status::MaxIter: return "max-iter";
    case SolveOutcome::Status::Stalled: return "stalled";
  }
  return "?";
}

std::string to_string(IterateState::Phase p) {
  return p == IterateState::Phase::Main ? "main" : "restoration";
}

bool Filter::acceptable(double f, double theta) const {
  for (const auto& [fl, tl] : entries_)
    if (!(f < fl || theta < tl)) return false;
  return true;
}

void Filter::augment(double f, double theta) {
  // an existing dominating entry already forbids the new region
  for (const auto& e : entries_)
    if (e.first <= f && e.second <= theta) return;
  std::erase_if(entries_, [&](const std::pair<double, double>& e) {
    return e.first >= f && e.second >= theta;
  });
  entries_.emplace_back(f, theta);
}

bool f_type_switch(double grad_f_dot_d, double alpha, double theta_k,
                   const SqpConfig& cfg) {
  if (!(grad_f_dot_d < 0.0)) return false;
  return alpha * std::pow(-grad_f_dot_d, cfg.s_phi) >
         cfg.delta * std::pow(theta_k, cfg.s_theta);
}

bool armijo(double f_k, double f_trial, double grad_f_dot_d, double alpha,
            const SqpConfig& cfg) {
  return f_trial <= f_k + alpha * cfg.rho_armijo * grad_f_dot_d;
}

bool envelope_progress(double theta_k, double f_k, double f_trial,
                       double theta_trial, const SqpConfig& cfg) {
  return theta_trial <= theta_k * (1.0 - cfg.gamma_theta) ||
         f_trial <= f_k - cfg.gamma_f * theta_k;
}

double restoration_penalty(double theta_k, const SqpConfig& cfg) {
  if (theta_k <= cfg.eps_feas) return cfg.rho_max;
  return cfg.eps_feas / theta_k + cfg.rho_min;
}

bool scaled_termination(double grad_lag_inf, double f, double comp_inf,
                        double omega_inf, double theta, const SqpConfig& cfg) {
  const double opt_tol = cfg.eps_opt * std::max(1.0, std::abs(f));
  const double rhs = (opt_tol + comp_inf) / std::max(1.0, omega_inf);
  // the complementarity allowance only absorbs backend inexactness; a
  // genuinely loose complementarity is not a KKT point
  return grad_lag_inf <= rhs && comp_inf <= opt_tol && theta <= cfg.eps_feas;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int even_up(int d) { return d + (d % 2); }

struct ConstraintData {
  int nvars = 0;
  int two_d = 0;
  Polynomial interior;  // zeta' zeta for the constraint's Gram basis
};

enum class RunStatus { Optimal, LocallyInfeasible, MaxIter, Stalled, HookExit };

struct SubproblemOut {
  bool feasible = false;
  std::string status;
  Eigen::VectorXd step;                 // over the flat decision slots
  std::vector<Polynomial> duals;        // lambda_plus per constraint
};

class Engine {
 public:
  Engine(const SosProgram& prob, const SqpConfig& cfg, bool allow_restoration)
      : prob_(prob), cfg_(cfg), allow_restoration_(allow_restoration) {
    nslots_ = prob.num_coeffs();
    for (const auto& e : prob.constraints) {
      ConstraintData cd;
      cd.nvars = e.nvars();
      int d = 0;
      for (const auto& alpha : support_hull(e, prob.vars))
        d = std::max(d, total_degree(alpha));
      cd.two_d = even_up(d);
      cd.interior = Polynomial(cd.nvars);
      for (const auto& z : monomials_up_to(cd.nvars, cd.two_d / 2)) {
        MultiIndex sq(cd.nvars);
        for (int v = 0; v < cd.nvars; ++v) sq[v] = 2 * z[v];
        cd.interior.set_coeff(sq, cd.interior.coeff(sq) + 1.0);
      }
      cons_.push_back(std::move(cd));
    }
  }

  // restoration early-exit test, fed the current iterate each iteration
  std::function<bool(const CoeffAssignment&)> exit_hook;

  RunStatus run(const CoeffAssignment& init, Eigen::MatrixXd H0,
                IterateState::Phase phase, IterateState& state,
                std::vector<TraceRow>& trace, PhaseTimings& tm,
                std::string& message) {
    state.assignment = init;
    state.duals.clear();
    for (const auto& cd : cons_) state.duals.emplace_back(cd.nvars);
    state.H = std::move(H0);
    state.phase = phase;

    auto t_v = Clock::now();
    ViolationReport vr = violation(eval_constraints(state.assignment));
    tm.violation_ms += ms_since(t_v);
    state.theta = vr.theta;
    state.f = eval_objective(prob_.objective, prob_.vars, state.assignment);

    const double theta0 = state.theta;
    theta_min_ = cfg_.theta_min_factor * std::max(1.0, theta0);
    Filter filter;
    filter.augment(-std::numeric_limits<double>::infinity(),
                   1e4 * std::max(1.0, theta0));

    double omega_inf = 0.0;
    double f_prev = state.f;
    int tiny_steps = 0;

    for (int k = 0; k < cfg_.max_iter; ++k) {
      const auto t_iter = Clock::now();
      state.iteration = k;
      TraceRow row;
      row.iter = k;
      row.phase = phase;
      row.f = state.f;
      row.theta = state.theta;
      row.f_before = state.f;
      row.theta_before = state.theta;

      if (exit_hook && exit_hook(state.assignment)) {
        row.x = state.assignment.flatten();
        trace.push_back(row);
        return RunStatus::HookExit;
      }

      // scaled KKT residual at the current iterate
      std::vector<LinearizedExpr> lin = linearize_all(state.assignment);
      Eigen::VectorXd grad_f;
      Eigen::MatrixXd hess_f;
      objective_gradient_hessian(prob_.objective, prob_.vars, state.assignment,
                                 grad_f, hess_f);
      const Eigen::VectorXd gl = grad_lagrangian(grad_f, lin, state.duals);
      double comp_inf = 0.0;
      for (size_t i = 0; i < lin.size(); ++i)
        comp_inf = std::max(comp_inf,
                            std::abs(coeff_dot(state.duals[i], lin[i].value)));
      const double gl_inf = gl.size() ? gl.lpNorm<Eigen::Infinity>() : 0.0;
      state.kkt_scaled = (gl_inf * std::max(1.0, omega_inf) - comp_inf) /
                         std::max(1.0, std::abs(state.f));
      row.kkt_scaled = state.kkt_scaled;
      if (std::getenv("SQSOS_ENGINE_DEBUG"))
        std::fprintf(stderr,
                     "eng it %d f %.8e theta %.2e gl %.3e comp %.3e omega %.3e\n",
                     k, state.f, state.theta, gl_inf, comp_inf, omega_inf);

      if (!exit_hook &&
          scaled_termination(gl_inf, state.f, comp_inf, omega_inf, state.theta,
                             cfg_)) {
        row.subproblem_status = "terminated";
        row.wall_ms = ms_since(t_iter);
        row.x = state.assignment.flatten();
        trace.push_back(row);
        message = "scaled KKT condition satisfied; |df| = " +
                  std::to_string(std::abs(state.f - f_prev));
        return RunStatus::Optimal;
      }
      f_prev = state.f;

      if (cfg_.hessian != SqpConfig::Hessian::DampedBfgs)
        state.H = exact_hessian(hess_f, state.assignment, state.duals);

      const auto t_sub = Clock::now();
      SubproblemOut sp = solve_subproblem(state, lin, grad_f, nullptr);
      tm.subproblem_ms += ms_since(t_sub);
      row.subproblem_status = sp.status;

      if (!sp.feasible) {
        const RunStatus rs = enter_restoration(state, filter, trace, tm, message,
                                               "subproblem " + sp.status);
        if (rs == RunStatus::HookExit) {
          omega_inf = 0.0;
          row.wall_ms = ms_since(t_iter);
          row.f = state.f;
          row.theta = state.theta;
          row.x = state.assignment.flatten();
          trace.push_back(row);
          continue;  // restored; resume main iterations
        }
        row.wall_ms = ms_since(t_iter);
        row.x = state.assignment.flatten();
        trace.push_back(row);
        return rs;
      }

      omega_inf = sp.step.size() ? sp.step.lpNorm<Eigen::Infinity>() : 0.0;
      if (omega_inf <= 1e-12) {
        // fixed point of the subproblem: adopt its multipliers and let the
        // termination test decide next round
        state.duals = sp.duals;
        row.alpha = 0.0;
        row.wall_ms = ms_since(t_iter);
        row.x = state.assignment.flatten();
        trace.push_back(row);
        if (++tiny_steps >= 2) {
          message = "subproblem step vanished without satisfying the KKT test";
          return RunStatus::Stalled;
        }
        continue;
      }
      tiny_steps = 0;

      // filter line search with one SOC attempt at alpha = 1
      const auto t_ls = Clock::now();
      const double gfd = grad_f.dot(sp.step);
      bool accepted = false, used_soc = false, augment = false;
      bool want_restoration = false;
      double alpha = 1.0;
      CoeffAssignment xt;
      Eigen::VectorXd step_used;
      double f_t = 0.0, theta_t = 0.0;
      bool soc_tried = false;
      while (true) {
        const Eigen::VectorXd x_new =
            state.assignment.flatten() + alpha * sp.step;
        xt = CoeffAssignment::unflatten(prob_.vars, x_new);
        auto t_vv = Clock::now();
        theta_t = violation(eval_constraints(xt)).theta;
        tm.violation_ms += ms_since(t_vv);
        f_t = eval_objective(prob_.objective, prob_.vars, xt);
        if (acceptable_trial(filter, state, gfd, alpha, f_t, theta_t, augment)) {
          accepted = true;
          step_used = alpha * sp.step;
          break;
        }
        if (alpha == 1.0 && !soc_tried) {
          soc_tried = true;
          std::vector<Polynomial> shift = soc_shift(state, lin, sp.step);
          SubproblemOut soc = solve_subproblem(state, lin, grad_f, &shift);
          if (soc.feasible) {
            const Eigen::VectorXd corrected = soc.step + sp.step;
            const Eigen::VectorXd x_soc = state.assignment.flatten() + corrected;
            CoeffAssignment xs = CoeffAssignment::unflatten(prob_.vars, x_soc);
            auto t_vs = Clock::now();
            const double theta_s = violation(eval_constraints(xs)).theta;
            tm.violation_ms += ms_since(t_vs);
            const double f_s =
                eval_objective(prob_.objective, prob_.vars, xs);
            bool aug_s = false;
            if (acceptable_trial(filter, state, gfd, 1.0, f_s, theta_s, aug_s)) {
              accepted = true;
              used_soc = true;
              augment = aug_s;
              xt = std::move(xs);
              f_t = f_s;
              theta_t = theta_s;
              step_used = corrected;
              break;
            }
          }
        }
        alpha *= 0.5;
        if (alpha < cfg_.alpha_min) {
          want_restoration = true;
          break;
        }
      }
      tm.line_search_ms += ms_since(t_ls);

      if (want_restoration) {
        filter.augment(state.f, state.theta);
        row.filter_augmented = true;
        const RunStatus rs = enter_restoration(state, filter, trace, tm, message,
                                               "line search exhausted");
        if (rs != RunStatus::HookExit) {
          row.wall_ms = ms_since(t_iter);
          row.x = state.assignment.flatten();
          trace.push_back(row);
          return rs;
        }
        omega_inf = 0.0;
        row.wall_ms = ms_since(t_iter);
        row.f = state.f;
        row.theta = state.theta;
        row.x = state.assignment.flatten();
        trace.push_back(row);
        continue;
      }

      if (augment) row.filter_augmented = true;

      if (augment) filter.augment(state.f, state.theta);

      // dual update with the accepted step length, then the Hessian
      std::vector<Polynomial> new_duals(state.duals.size());
      for (size_t i = 0; i < state.duals.size(); ++i)
        new_duals[i] =
            state.duals[i] + (sp.duals[i] - state.duals[i]) * alpha;

      if (cfg_.hessian == SqpConfig::Hessian::DampedBfgs) {
        const auto t_h = Clock::now();
        bfgs_update(state, xt, new_duals, grad_f, lin, step_used);
        tm.hessian_ms += ms_since(t_h);
      }

      state.assignment = std::move(xt);
      state.duals = std::move(new_duals);
      state.f = f_t;
      state.theta = theta_t;
      row.alpha = alpha;
      row.soc_used = used_soc;
      row.f = state.f;
      row.theta = state.theta;
      row.wall_ms = ms_since(t_iter);
      row.x = state.assignment.flatten();
      trace.push_back(row);
    }
    message = "iteration limit reached";
    return RunStatus::MaxIter;
  }

  PolyVec eval_constraints(const CoeffAssignment& a) const {
    PolyVec g;
    g.reserve(prob_.constraints.size());
    for (const auto& e : prob_.constraints)
      g.push_back(eval_expr(e, prob_.vars, a));
    return g;
  }

  ViolationReport violation(const PolyVec& g) const {
    if (g.empty()) return {};
    if (cfg_.violation.method == ViolationConfig::Method::SignedDistance) {
      PolyVec interior;
      interior.reserve(g.size());
      for (const auto& cd : cons_) interior.push_back(cd.interior);
      return theta_signed_distance(g, interior, cfg_.violation.eps);
    }
    return estimate_violation(g, cfg_.violation);
  }

 private:
  std::vector<LinearizedExpr> linearize_all(const CoeffAssignment& a) const {
    std::vector<LinearizedExpr> lin;
    lin.reserve(prob_.constraints.size());
    for (const auto& e : prob_.constraints)
      lin.push_back(linearize_expr(e, prob_.vars, a));
    return lin;
  }

  Eigen::VectorXd grad_lagrangian(const Eigen::VectorXd& grad_f,
                                  const std::vector<LinearizedExpr>& lin,
                                  const std::vector<Polynomial>& duals) const {
    Eigen::VectorXd g = grad_f;
    for (size_t i = 0; i < lin.size(); ++i)
      for (const auto& [slot, col] : lin[i].jacobian)
        g[slot] -= coeff_dot(duals[i], col);
    return g;
  }

  Eigen::MatrixXd exact_hessian(const Eigen::MatrixXd& hess_f,
                                const CoeffAssignment& a,
                                const std::vector<Polynomial>& duals) const {
    Eigen::MatrixXd H = hess_f;
    for (size_t i = 0; i < prob_.constraints.size(); ++i)
      add_constraint_hessian(prob_.constraints[i], prob_.vars, a, duals[i],
                             -1.0, H);
    H = 0.5 * (H + H.transpose());
    const double floor = 1e-8;
    switch (cfg_.hessian) {
      case SqpConfig::Hessian::ExactGershgorin: {
        double bound = std::numeric_limits<double>::infinity();
        for (int i = 0; i < H.rows(); ++i)
          bound = std::min(bound, H(i, i) - (H.row(i).cwiseAbs().sum() -
                                             std::abs(H(i, i))));
        if (H.rows() > 0 && bound < floor)
          H.diagonal().array() += floor - bound;
        break;
      }
      case SqpConfig::Hessian::ExactMirrored: {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        Eigen::VectorXd ev = es.eigenvalues().cwiseAbs().cwiseMax(floor);
        H = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        break;
      }
      case SqpConfig::Hessian::ExactMinFrobenius: {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
        H = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        break;
      }
      case SqpConfig::Hessian::DampedBfgs:
        break;
    }
    return H;
  }

  SubproblemOut solve_subproblem(const IterateState& state,
                                 const std::vector<LinearizedExpr>& lin,
                                 const Eigen::VectorXd& grad_f,
                                 const std::vector<Polynomial>* soc) const {
    SubproblemOut out;
    ConicBuilder bld;
    bld.add_vars(nslots_);
    if (state.H.size() > 0 && state.H.norm() > 0)
      bld.set_quadratic_cost(state.H);
    for (int j = 0; j < nslots_; ++j)
      if (grad_f[j] != 0.0) bld.set_linear_cost(j, grad_f[j]);
    std::vector<SosConstraintHandle> handles;
    for (size_t i = 0; i < lin.size(); ++i) {
      AffinePolyMap m;
      m.offset = lin[i].value;
      if (soc) m.offset += (*soc)[i];
      for (const auto& [slot, col] : lin[i].jacobian) m.cols.emplace_back(slot, col);
      handles.push_back(transcribe_sos(m, cons_[i].nvars, cons_[i].two_d, bld));
    }
    const ConicSolution sol = solve(bld.build());
    out.status = to_string(sol.status);
    if (sol.status == SolveStatus::PrimalInfeasible) return out;
    if (sol.status != SolveStatus::Optimal) return out;
    out.feasible = true;
    out.step = sol.x.head(nslots_);
    out.duals.resize(lin.size());
    for (size_t i = 0; i < lin.size(); ++i) {
      Polynomial lam(cons_[i].nvars);
      const auto& mono = handles[i].map.row_monomials;
      for (size_t r = 0; r < mono.size(); ++r) {
        const double y = -sol.y[handles[i].eq_row_start + static_cast<int>(r)];
        if (y != 0.0) lam.set_coeff(mono[r], y);
      }
      out.duals[i] = std::move(lam);
    }
    return out;
  }

  std::vector<Polynomial> soc_shift(const IterateState& state,
                                    const std::vector<LinearizedExpr>& lin,
                                    const Eigen::VectorXd& step) const {
    const CoeffAssignment stepped = CoeffAssignment::unflatten(
        prob_.vars, state.assignment.flatten() + step);
    std::vector<Polynomial> shift;
    shift.reserve(lin.size());
    for (size_t i = 0; i < lin.size(); ++i) {
      Polynomial pred = lin[i].value;
      for (const auto& [slot, col] : lin[i].jacobian) pred += col * step[slot];
      shift.push_back(eval_expr(prob_.constraints[i], prob_.vars, stepped) - pred);
    }
    return shift;
  }

  bool acceptable_trial(const Filter& filter, const IterateState& state,
                        double gfd, double alpha, double f_t, double theta_t,
                        bool& augment) const {
    if (!filter.acceptable(f_t, theta_t)) return false;
    if (theta_t < theta_min_ && f_type_switch(gfd, alpha, state.theta, cfg_)) {
      if (armijo(state.f, f_t, gfd, alpha, cfg_)) {
        augment = false;  // sufficient decrease held: no augmentation
        return true;
      }
      return false;
    }
    if (envelope_progress(state.theta, state.f, f_t, theta_t, cfg_)) {
      augment = true;  // progress without sufficient decrease
      return true;
    }
    return false;
  }

  void bfgs_update(IterateState& state, const CoeffAssignment& xt,
                   const std::vector<Polynomial>& new_duals,
                   const Eigen::VectorXd& grad_f_old,
                   const std::vector<LinearizedExpr>& lin_old,
                   const Eigen::VectorXd& s) const {
    if (s.lpNorm<Eigen::Infinity>() < 1e-14) return;
    Eigen::VectorXd grad_f_new;
    Eigen::MatrixXd hess_unused;
    objective_gradient_hessian(prob_.objective, prob_.vars, xt, grad_f_new,
                               hess_unused);
    const Eigen::VectorXd gl_new =
        grad_lagrangian(grad_f_new, linearize_all(xt), new_duals);
    const Eigen::VectorXd gl_old =
        grad_lagrangian(grad_f_old, lin_old, new_duals);
    const Eigen::VectorXd y = gl_new - gl_old;
    const Eigen::MatrixXd& B = state.H;
    const Eigen::VectorXd Bs = B * s;
    const double sBs = s.dot(Bs);
    if (sBs <= 1e-16) return;
    const double sy = s.dot(y);
    double phi = 1.0;
    if (sy < 0.2 * sBs) phi = 0.8 * sBs / (sBs - sy);
    const Eigen::VectorXd yh = phi * y + (1.0 - phi) * Bs;
    const double syh = s.dot(yh);
    if (syh <= 1e-16) return;
    state.H = B - (Bs * Bs.transpose()) / sBs + (yh * yh.transpose()) / syh;
    state.H = 0.5 * (state.H + state.H.transpose());
  }

 public:
  RunStatus enter_restoration(IterateState& state, Filter& filter,
                              std::vector<TraceRow>& trace, PhaseTimings& tm,
                              std::string& message, const std::string& why) {
    if (!allow_restoration_) {
      message = "restoration requested inside restoration (" + why + ")";
      return RunStatus::LocallyInfeasible;
    }
    if (state.theta <= cfg_.eps_feas) {
      message = "no progress possible at a feasible point (" + why + ")";
      return RunStatus::Stalled;
    }
    const double theta_entry = state.theta;
    const double rho = restoration_penalty(theta_entry, cfg_);

    SosProgram rp;
    rp.vars = prob_.vars;
    const size_t ncons = prob_.constraints.size();
    for (size_t i = 0; i < ncons; ++i)
      rp.vars.push_back(
          make_scalar_var("r" + std::to_string(i), cons_[i].nvars));
    for (size_t i = 0; i < ncons; ++i) {
      Expr r = Expr::var(rp.vars, static_cast<int>(prob_.vars.size() + i));
      rp.constraints.push_back(prob_.constraints[i] +
                               mul(r, Expr::constant(cons_[i].interior)));
      rp.constraints.push_back(r);  // relaxation stays nonnegative
    }
    rp.objective.linear = Eigen::VectorXd::Zero(flat_dim(rp.vars));
    for (size_t i = 0; i < ncons; ++i) rp.objective.linear[nslots_ + i] = 1.0;
    for (size_t v = 0; v < prob_.vars.size(); ++v) {
      Polynomial cur(prob_.vars[v].nvars);
      for (int sidx = 0; sidx < prob_.vars[v].dim(); ++sidx)
        if (state.assignment.coeffs[v][sidx] != 0.0)
          cur += Polynomial::monomial(prob_.vars[v].basis[sidx],
                                      state.assignment.coeffs[v][sidx]);
      rp.objective.quad_terms.push_back(
          {rho / 2.0,
           Expr::var(rp.vars, static_cast<int>(v)) - Expr::constant(cur)});
    }

    // start from the entering iterate with r set to the measured
    // per-constraint distances (near-feasible for the relaxed program)
    PolyVec g = eval_constraints(state.assignment);
    PolyVec interior;
    for (const auto& cd : cons_) interior.push_back(cd.interior);
    const ViolationReport sd =
        theta_signed_distance(g, interior, cfg_.violation.eps);
    CoeffAssignment rinit = state.assignment;
    for (size_t i = 0; i < ncons; ++i)
      rinit.coeffs.push_back(Eigen::VectorXd::Constant(
          1, std::max(0.0, sd.per_constraint[i]) * 1.01 + 1e-9));

    Eigen::MatrixXd H0 =
        Eigen::MatrixXd::Zero(flat_dim(rp.vars), flat_dim(rp.vars));
    H0.topLeftCorner(nslots_, nslots_) =
        rho * Eigen::MatrixXd::Identity(nslots_, nslots_);

    Engine sub(rp, cfg_, false);
    Filter* orig_filter = &filter;
    const SqpConfig& cfg = cfg_;
    sub.exit_hook = [this, orig_filter, theta_entry,
                     &cfg](const CoeffAssignment& a) {
      CoeffAssignment main_part;
      main_part.coeffs.assign(a.coeffs.begin(),
                              a.coeffs.begin() + prob_.vars.size());
      const double th = violation(eval_constraints(main_part)).theta;
      if (th > cfg.eta * theta_entry) return false;
      const double fo = eval_objective(prob_.objective, prob_.vars, main_part);
      return orig_filter->acceptable(fo, th);
    };

    IterateState rstate;
    std::vector<TraceRow> rtrace;
    std::string rmsg;
    const RunStatus rs =
        sub.run(rinit, std::move(H0), IterateState::Phase::Restoration, rstate,
                rtrace, tm, rmsg);
    for (auto& r : rtrace) trace.push_back(r);
    if (rs != RunStatus::HookExit) {
      message = "restoration failed (" + why + "): " + rmsg;
      return RunStatus::LocallyInfeasible;
    }
    CoeffAssignment restored;
    restored.coeffs.assign(rstate.assignment.coeffs.begin(),
                           rstate.assignment.coeffs.begin() + prob_.vars.size());
    state.assignment = std::move(restored);
    PolyVec gr = eval_constraints(state.assignment);
    state.theta = violation(gr).theta;
    state.f = eval_objective(prob_.objective, prob_.vars, state.assignment);
    return RunStatus::HookExit;
  }

 private:
  const SosProgram& prob_;
  SqpConfig cfg_;
  bool allow_restoration_;
  int nslots_ = 0;
  std::vector<ConstraintData> cons_;
  double theta_min_ = 0.0;
};

}  // namespace

SolveOutcome solve_sqsos(const SosProgram& prob, const CoeffAssignment& init,
                         const SqpConfig& cfg) {
  cfg.validate();
  if (init.coeffs.size() != prob.vars.size())
    throw std::invalid_argument("solve_sqsos: init must assign every variable");
  for (size_t v = 0; v < prob.vars.size(); ++v)
    if (init.coeffs[v].size() != prob.vars[v].dim())
      throw std::invalid_argument("solve_sqsos: init coefficient size mismatch");

  Engine eng(prob, cfg, true);
  SolveOutcome out;
  const int n = prob.num_coeffs();
  Eigen::MatrixXd H0 =
      cfg.hessian_init_scale * Eigen::MatrixXd::Identity(n, n);
  const RunStatus rs = eng.run(init, std::move(H0), IterateState::Phase::Main,
                               out.final_state, out.trace, out.timings,
                               out.message);
  switch (rs) {
    case RunStatus::Optimal: out.status = SolveOutcome::Status::Optimal; break;
    case RunStatus::LocallyInfeasible:
      out.status = SolveOutcome::Status::LocallyInfeasible;
      break;
    case RunStatus::MaxIter: out.status = SolveOutcome::Status::MaxIter; break;
    case RunStatus::Stalled:
    case RunStatus::HookExit:
      out.status = SolveOutcome::Status::Stalled;
      break;
  }
  out.iterations = static_cast<int>(out.trace.size());
  return out;
}

RestorationResult feasibility_restoration(const SosProgram& prob,
                                          const CoeffAssignment& entry,
                                          const Filter& filter,
                                          const SqpConfig& cfg) {
  cfg.validate();
  Engine eng(prob, cfg, true);
  RestorationResult res;
  IterateState state;
  state.assignment = entry;
  for (size_t i = 0; i < prob.constraints.size(); ++i)
    state.duals.emplace_back(prob.constraints[i].nvars());
  state.theta = eng.violation(eng.eval_constraints(entry)).theta;
  state.f = eval_objective(prob.objective, prob.vars, entry);
  res.theta_entry = state.theta;
  if (state.theta <= cfg.eps_feas) {
    res.restored = true;
    res.assignment = entry;
    res.theta_exit = state.theta;
    res.message = "entry point already feasible";
    return res;
  }
  Filter f = filter;
  std::vector<TraceRow> trace;
  PhaseTimings tm;
  const RunStatus rs =
      eng.enter_restoration(state, f, trace, tm, res.message, "direct call");
  res.restored = rs == RunStatus::HookExit;
  res.assignment = state.assignment;
  res.theta_exit = state.theta;
  if (res.restored) res.message = "restored";
  return res;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iter,phase,f,theta,alpha,soc_used,subproblem_status,kkt_scaled,wall_ms\n";
  for (const auto& r : trace)
    os << r.iter << ',' << to_string(r.phase) << ',' << r.f << ',' << r.theta
       << ',' << r.alpha << ',' << (r.soc_used ? 1 : 0) << ','
       << r.subproblem_status << ',' << r.kkt_scaled << ',' << r.wall_ms
       << '\n';
}

void write_outcome_json(std::ostream& os, const SolveOutcome& out,
                        const SqpConfig& cfg) {
  nlohmann::json j;
  j["status"] = to_string(out.status);
  j["iterations"] = out.iterations;
  j["final"] = {{"f", out.final_state.f},
                {"theta", out.final_state.theta},
                {"kkt_scaled", out.final_state.kkt_scaled}};
  j["message"] = out.message;
  j["config"] = {{"eps_opt", cfg.eps_opt},
                 {"eps_feas", cfg.eps_feas},
                 {"s_phi", cfg.s_phi},
                 {"s_theta", cfg.s_theta},
                 {"delta", cfg.delta},
                 {"rho_armijo", cfg.rho_armijo},
                 {"gamma_f", cfg.gamma_f},
                 {"gamma_theta", cfg.gamma_theta},
                 {"eta", cfg.eta},
                 {"rho_min", cfg.rho_min},
                 {"rho_max", cfg.rho_max},
                 {"alpha_min", cfg.alpha_min},
                 {"theta_min_factor", cfg.theta_min_factor},
                 {"max_iter", cfg.max_iter},
                 {"hessian", to_string(cfg.hessian)},
                 {"hessian_init_scale", cfg.hessian_init_scale},
                 {"violation",
                  {{"method", to_string(cfg.violation.method)},
                   {"eps", cfg.violation.eps},
                   {"sample_count", cfg.violation.sample_count},
                   {"hypercube_radius", cfg.violation.hypercube_radius},
                   {"rng_seed", cfg.violation.rng_seed}}}};
  j["timings_ms"] = {{"subproblem", out.timings.subproblem_ms},
                     {"line_search", out.timings.line_search_ms},
                     {"violation", out.timings.violation_ms},
                     {"hessian", out.timings.hessian_ms}};
  os << j.dump(2) << '\n';
}

}  // namespace sqsos
