#ifndef SQSOS_BENCH_HPP
#define SQSOS_BENCH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sqsos/engine.hpp"

namespace sqsos {

/// Self-describing benchmark problem description (JSON on disk).
struct ProblemFile {
  enum class Kind { Roa, Synthesis };
  enum class Init { LqrLyapunov, Explicit, NegativeDefinite };

  std::string id;
  Kind kind = Kind::Roa;
  int indeterminates = 0;  // state dimension n
  int controls = 0;        // control dimension m (synthesis only)
  /// Polynomial text per state; over n indeterminates for a closed-loop
  /// (roa) system, over n + m with the controls appended for synthesis.
  std::vector<std::string> dynamics;
  std::string g0;  // target-shape polynomial, roa objective ||V - g0||^2
  std::string h;   // state-constraint polynomial; {h <= 0} is the safe set
  int degree_V = 4;
  int degree_s = 2;
  int degree_kappa = 1;
  double gamma = 1.0;  // roa level
  double beta = 1.0;   // synthesis level (fixed)
  std::vector<std::vector<double>> Hu;  // p x m rows of {H_u u <= 1}
  double epsilon = 1e-6;                // margin coefficient on |x|^2
  Init init = Init::LqrLyapunov;
  double init_scale = 1.0;  // multiplies the quadratic initial guess
  std::map<std::string, std::string> init_polys;  // explicit init by name

  static ProblemFile parse(const std::string& json_text);
  static ProblemFile load(const std::string& path);
  void validate() const;  // throws std::invalid_argument
};

std::string to_string(ProblemFile::Kind k);
std::string to_string(ProblemFile::Init i);

/// A problem file turned into an expression-graph program with an
/// initial guess for every decision variable.
struct BuiltProblem {
  ProblemFile pf;
  SosProgram prob;
  CoeffAssignment init;
  std::vector<std::string> constraint_names;  // aligned with prob.constraints
};

BuiltProblem build_roa(const ProblemFile& pf);
BuiltProblem build_synthesis(const ProblemFile& pf);
BuiltProblem build_problem(const ProblemFile& pf);

/// The polynomial a coefficient vector assigns to a decision variable.
Polynomial to_polynomial(const DecisionVar& var, const Eigen::VectorXd& coeffs);

/// Solve A'P + PA = -Q for symmetric P via the Kronecker lift (A Hurwitz).
Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Q);
/// LQR gain for (A, B) with unit state/control weights, u = -Kx
/// (Kleinman iteration from a scanned stabilizing start).
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct CertificateRecord {
  int samples_requested = 0;
  int samples_drawn = 0;  // points found inside the certified sublevel set
  int violations = 0;
  std::uint64_t seed = 0;
};

/// Sample the certified sublevel set (V <= level, x != 0) and count
/// pointwise failures of the claimed conditions: V decreasing along the
/// dynamics, V dominating the margin, and for synthesis the state and
/// control constraints. Failures are recorded, never thrown.
CertificateRecord certify_outcome(const BuiltProblem& bp,
                                  const CoeffAssignment& solution, int samples,
                                  std::uint64_t seed, double radius = 2.0);

struct BenchReport {
  int schema_version = 1;
  std::string problem_id;
  std::string method;  // "sqsos" | "cd"
  std::string status;  // "optimal" | "failed" | "max-iter" | ...
  std::string message;
  int iterations = 0;
  double f = 0.0;  // NaN when the method never produced an iterate
  double theta = 0.0;
  /// |f_k - f_{k-1}| over the final two iterates (NaN before two exist)
  double last_df = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  PhaseTimings timings;
  bool certified = false;
  CertificateRecord certificate;
};

/// Coordinate-descent baseline for roa problems: alternate a multiplier
/// step (V fixed) and a Lyapunov step (s fixed), both convex; stops when
/// |f_k - f_{k-1}| <= eps_opt. Requires a feasible start: an infeasible
/// first multiplier step is reported as a failed (NaN-cost) outcome.
BenchReport solve_coordinate_descent(const BuiltProblem& bp,
                                     const SqpConfig& cfg,
                                     CoeffAssignment* solution = nullptr);

/// Solve with the chosen method and, on an optimal outcome, attach a
/// sampled certificate.
BenchReport run_benchmark(const BuiltProblem& bp, const std::string& method,
                          const SqpConfig& cfg, int cert_samples,
                          std::uint64_t seed,
                          SolveOutcome* outcome = nullptr,
                          CoeffAssignment* solution = nullptr);

std::string report_json(const BenchReport& r, bool mask_timings = false);

int cli_main(int argc, const char* const* argv);

}  // namespace sqsos

#endif
