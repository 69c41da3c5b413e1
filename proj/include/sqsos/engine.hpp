#ifndef SQSOS_ENGINE_HPP
#define SQSOS_ENGINE_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "sqsos/expr.hpp"
#include "sqsos/violation.hpp"

namespace sqsos {

/// Parameters of the sequential quadratic SOS solver (filter line search,
/// restoration, Hessian strategy).
struct SqpConfig {
  double eps_opt = 1e-4;
  double eps_feas = 1e-6;
  double s_phi = 2.0;
  double s_theta = 0.9;
  double delta = 1.0;
  double rho_armijo = 1e-4;
  double gamma_f = 1e-5;
  double gamma_theta = 1e-5;
  double eta = 1e-4;        // restoration exit factor
  double rho_min = 0.01;    // restoration penalty bounds
  double rho_max = 1.0;
  double alpha_min = 1e-4;
  double theta_min_factor = 1e-4;  // Armijo gate: theta_min = factor * max(1, theta0)
  int max_iter = 100;
  enum class Hessian { DampedBfgs, ExactGershgorin, ExactMirrored, ExactMinFrobenius };
  Hessian hessian = Hessian::DampedBfgs;
  ViolationConfig violation;
  double hessian_init_scale = 1.0;

  void validate() const;  // throws std::invalid_argument (zero tolerances rejected)
};

std::string to_string(SqpConfig::Hessian h);
bool parse_hessian(const std::string& name, SqpConfig::Hessian& out);

/// Set of dominant (f, theta) pairs forming the forbidden region.
class Filter {
 public:
  /// true iff for every entry the trial improves f or theta strictly.
  bool acceptable(double f, double theta) const;
  /// Insert and prune dominated entries (f' >= f and theta' >= theta).
  void augment(double f, double theta);
  const std::vector<std::pair<double, double>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<double, double>> entries_;
};

struct IterateState {
  CoeffAssignment assignment;
  std::vector<Polynomial> duals;  // one multiplier polynomial per constraint
  Eigen::MatrixXd H;
  double f = 0.0;
  double theta = 0.0;
  double kkt_scaled = std::numeric_limits<double>::infinity();
  int iteration = 0;
  enum class Phase { Main, Restoration } phase = Phase::Main;
};

struct TraceRow {
  int iter = 0;
  IterateState::Phase phase = IterateState::Phase::Main;
  double f = 0.0;
  double theta = 0.0;
  double alpha = 0.0;
  bool soc_used = false;
  std::string subproblem_status;
  double kkt_scaled = 0.0;
  double wall_ms = 0.0;
  // replay/diagnostic fields, not serialized to the CSV
  Eigen::VectorXd x;         // flattened iterate after this iteration
  double f_before = 0.0;     // (f, theta) entering the iteration
  double theta_before = 0.0;
  bool filter_augmented = false;
};

struct PhaseTimings {
  double subproblem_ms = 0.0;
  double line_search_ms = 0.0;
  double violation_ms = 0.0;
  double hessian_ms = 0.0;
};

struct SolveOutcome {
  enum class Status { Optimal, LocallyInfeasible, MaxIter, Stalled };
  Status status = Status::MaxIter;
  IterateState final_state;
  std::vector<TraceRow> trace;
  PhaseTimings timings;
  int iterations = 0;
  std::string message;
};

std::string to_string(SolveOutcome::Status s);
std::string to_string(IterateState::Phase p);

// --- pure line-search predicates (Algorithm 2 pieces) ---

/// Descent plus sufficient cost progress relative to the violation.
bool f_type_switch(double grad_f_dot_d, double alpha, double theta_k,
                   const SqpConfig& cfg);
bool armijo(double f_k, double f_trial, double grad_f_dot_d, double alpha,
            const SqpConfig& cfg);
/// Violation or cost progress inside a small envelope.
bool envelope_progress(double theta_k, double f_k, double f_trial,
                       double theta_trial, const SqpConfig& cfg);
/// Penalty weight at restoration entry (more weight on feasibility the
/// larger the entering violation).
double restoration_penalty(double theta_k, const SqpConfig& cfg);
/// Scaled KKT test: grad-Lagrangian norm against opt tolerance inflated by
/// complementarity slack and deflated by the last step length.
bool scaled_termination(double grad_lag_inf, double f, double comp_inf,
                        double omega_inf, double theta, const SqpConfig& cfg);

/// Run the sequential quadratic SOS algorithm on an SOS-constrained
/// program. init must assign every decision variable.
SolveOutcome solve_sqsos(const SosProgram& prob, const CoeffAssignment& init,
                         const SqpConfig& cfg);

/// Outcome of a standalone feasibility-restoration run (Algorithm 4).
struct RestorationResult {
  bool restored = false;  // false: locally infeasible (or stalled)
  CoeffAssignment assignment;
  double theta_entry = 0.0;
  double theta_exit = 0.0;
  std::string message;
};

/// Drive the iterate toward feasibility by relaxing every constraint with a
/// nonnegative shift along its interior direction. Exits once the original
/// filter accepts the candidate and theta dropped below eta * theta_entry.
/// A no-op when the entry point is already feasible.
RestorationResult feasibility_restoration(const SosProgram& prob,
                                          const CoeffAssignment& entry,
                                          const Filter& filter,
                                          const SqpConfig& cfg);

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);
void write_outcome_json(std::ostream& os, const SolveOutcome& out,
                        const SqpConfig& cfg);

}  // namespace sqsos

#endif
