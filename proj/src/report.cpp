#include <chrono>
#include <cmath>

#include "json.hpp"
#include "sqsos/bench.hpp"

namespace sqsos {

BenchReport run_benchmark(const BuiltProblem& bp, const std::string& method,
                          const SqpConfig& cfg, int cert_samples,
                          std::uint64_t seed, SolveOutcome* outcome,
                          CoeffAssignment* solution) {
  BenchReport rep;
  CoeffAssignment sol;
  if (method == "sqsos") {
    const auto t0 = std::chrono::steady_clock::now();
    SolveOutcome out = solve_sqsos(bp.prob, bp.init, cfg);
    rep.problem_id = bp.pf.id;
    rep.method = method;
    rep.status = to_string(out.status);
    rep.message = out.message;
    rep.iterations = out.iterations;
    rep.f = out.final_state.f;
    rep.theta = out.final_state.theta;
    rep.timings = out.timings;
    if (out.trace.size() >= 2)
      rep.last_df = std::abs(out.trace.back().f -
                             out.trace[out.trace.size() - 2].f);
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    sol = out.final_state.assignment;
    if (outcome) *outcome = std::move(out);
  } else if (method == "cd") {
    rep = solve_coordinate_descent(bp, cfg, &sol);
  } else {
    throw std::invalid_argument("run_benchmark: unknown method '" + method +
                                "'");
  }
  if (rep.status == "optimal" && cert_samples > 0) {
    rep.certificate = certify_outcome(bp, sol, cert_samples, seed);
    rep.certified = rep.certificate.violations == 0 &&
                    rep.certificate.samples_drawn > 0;
  }
  if (solution) *solution = std::move(sol);
  return rep;
}

std::string report_json(const BenchReport& r, bool mask_timings) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["problem"] = r.problem_id;
  j["method"] = r.method;
  j["status"] = r.status;
  j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["f"] = std::isnan(r.f) ? nlohmann::json() : nlohmann::json(r.f);
  j["theta"] =
      std::isnan(r.theta) ? nlohmann::json() : nlohmann::json(r.theta);
  j["last_df"] =
      std::isnan(r.last_df) ? nlohmann::json() : nlohmann::json(r.last_df);
  if (mask_timings) {
    j["wall_ms"] = nullptr;
    j["timings_ms"] = nullptr;
  } else {
    j["wall_ms"] = r.wall_ms;
    j["timings_ms"] = {{"subproblem", r.timings.subproblem_ms},
                       {"line_search", r.timings.line_search_ms},
                       {"violation", r.timings.violation_ms},
                       {"hessian", r.timings.hessian_ms}};
  }
  j["certificate"] = {{"samples_requested", r.certificate.samples_requested},
                      {"samples_drawn", r.certificate.samples_drawn},
                      {"violations", r.certificate.violations},
                      {"seed", r.certificate.seed},
                      {"certified", r.certified}};
  return j.dump(2);
}

}  // namespace sqsos
