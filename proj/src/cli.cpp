#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqsos/bench.hpp"

namespace sqsos {

namespace {

using nlohmann::json;

bool parse_violation_method(const std::string& name,
                            ViolationConfig::Method& out) {
  if (name == "signed-distance") out = ViolationConfig::Method::SignedDistance;
  else if (name == "projection") out = ViolationConfig::Method::Projection;
  else if (name == "sampling") out = ViolationConfig::Method::Sampling;
  else return false;
  return true;
}

void apply_config_json(const std::string& path, SqpConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  json j = json::parse(in);
  auto num = [&](const char* key, double& slot) {
    if (j.contains(key)) slot = j.at(key).get<double>();
  };
  num("eps_opt", cfg.eps_opt);
  num("eps_feas", cfg.eps_feas);
  num("s_phi", cfg.s_phi);
  num("s_theta", cfg.s_theta);
  num("delta", cfg.delta);
  num("rho_armijo", cfg.rho_armijo);
  num("gamma_f", cfg.gamma_f);
  num("gamma_theta", cfg.gamma_theta);
  num("eta", cfg.eta);
  num("rho_min", cfg.rho_min);
  num("rho_max", cfg.rho_max);
  num("alpha_min", cfg.alpha_min);
  num("theta_min_factor", cfg.theta_min_factor);
  num("hessian_init_scale", cfg.hessian_init_scale);
  if (j.contains("max_iter")) cfg.max_iter = j.at("max_iter").get<int>();
  if (j.contains("hessian") &&
      !parse_hessian(j.at("hessian").get<std::string>(), cfg.hessian))
    throw std::invalid_argument("unknown hessian mode in config file");
  if (j.contains("violation") &&
      !parse_violation_method(j.at("violation").get<std::string>(),
                              cfg.violation.method))
    throw std::invalid_argument("unknown violation method in config file");
}

// 0 success, 2 solver failure, 3 (locally) infeasible
int exit_code_for(const BenchReport& r) {
  if (r.status == "optimal") return 0;
  if (r.status == to_string(SolveOutcome::Status::LocallyInfeasible) ||
      r.message.find("infeasible") != std::string::npos)
    return 3;
  return 2;
}

int run_solve(const std::string& problem_path, const std::string& config_path,
              const std::string& out_path, const std::string& trace_path,
              const std::string& hessian, const std::string& violation,
              int max_iter, std::uint64_t seed, const std::string& method,
              int cert_samples) {
  SqpConfig cfg;
  if (!config_path.empty()) apply_config_json(config_path, cfg);
  if (!hessian.empty() && !parse_hessian(hessian, cfg.hessian))
    throw std::invalid_argument("unknown hessian mode: " + hessian);
  if (!violation.empty() &&
      !parse_violation_method(violation, cfg.violation.method))
    throw std::invalid_argument("unknown violation method: " + violation);
  if (max_iter > 0) cfg.max_iter = max_iter;

  const BuiltProblem bp = build_problem(ProblemFile::load(problem_path));
  SolveOutcome outcome;
  const BenchReport rep =
      run_benchmark(bp, method, cfg, cert_samples, seed, &outcome);

  const std::string text = report_json(rep);
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(out_path);
    out << text << "\n";
    std::cerr << "report written to " << out_path << "\n";
  }
  if (!trace_path.empty()) {
    if (method != "sqsos") {
      std::cerr << "--trace: no trace for method " << method << ", skipped\n";
    } else {
      std::ofstream tr(trace_path);
      write_trace_csv(tr, outcome.trace);
      std::cerr << "trace written to " << trace_path << "\n";
    }
  }
  return exit_code_for(rep);
}

int run_violation(const std::string& poly_path, std::uint64_t seed,
                  int samples) {
  std::ifstream in(poly_path);
  if (!in) throw std::invalid_argument("cannot open " + poly_path);
  ViolationConfig scfg;
  scfg.method = ViolationConfig::Method::Sampling;
  scfg.rng_seed = seed;
  scfg.sample_count = samples;

  std::cout << "line,nvars,degree,sd_theta,sd_ms,proj_theta,proj_ms,"
               "samp_theta,samp_ms\n";
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    Polynomial p;
    try {
      p = parse_polynomial(line);
    } catch (const PolyParseError& e) {
      throw std::invalid_argument(poly_path + ":" + std::to_string(lineno) +
                                  ":" + std::to_string(e.column) + ": " +
                                  e.what());
    }
    const PolyVec pv{p};
    auto timed = [](auto&& fn) {
      const auto t0 = std::chrono::steady_clock::now();
      ViolationReport r = fn();
      const std::chrono::duration<double, std::milli> dt =
          std::chrono::steady_clock::now() - t0;
      return std::make_pair(r.theta, dt.count());
    };
    const auto sd =
        timed([&] { return theta_signed_distance(pv, default_interior(pv), 1e-6); });
    const auto pr = timed([&] { return theta_projection(pv); });
    const auto sa = timed([&] { return theta_sampling(pv, scfg); });
    std::cout << lineno << "," << p.nvars() << "," << p.degree() << ","
              << sd.first << "," << sd.second << "," << pr.first << ","
              << pr.second << "," << sa.first << "," << sa.second << "\n";
  }
  return 0;
}

int run_suite(const std::string& data_dir, std::uint64_t seed,
              const std::string& out_path, const std::string& hessian,
              int cert_samples) {
  SqpConfig cfg;
  cfg.hessian = SqpConfig::Hessian::ExactMinFrobenius;
  if (!hessian.empty() && !parse_hessian(hessian, cfg.hessian))
    throw std::invalid_argument("unknown hessian mode: " + hessian);

  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(data_dir))
    if (e.path().extension() == ".json") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::invalid_argument("no .json problem files in " + data_dir);

  struct Job {
    std::string file;
    std::string method;
  };
  std::vector<Job> jobs;
  for (const auto& f : files) {
    const ProblemFile pf = ProblemFile::load(f);  // surface parse errors now
    jobs.push_back({f, "sqsos"});
    if (pf.kind == ProblemFile::Kind::Roa) jobs.push_back({f, "cd"});
  }

  std::vector<std::future<BenchReport>> runs;
  runs.reserve(jobs.size());
  for (const auto& job : jobs)
    runs.push_back(std::async(std::launch::async, [&cfg, cert_samples, seed,
                                                   job] {
      const BuiltProblem bp = build_problem(ProblemFile::load(job.file));
      return run_benchmark(bp, job.method, cfg, cert_samples, seed);
    }));
  std::vector<BenchReport> reports;
  reports.reserve(runs.size());
  for (auto& r : runs) reports.push_back(r.get());
  std::sort(reports.begin(), reports.end(),
            [](const BenchReport& a, const BenchReport& b) {
              return std::tie(a.problem_id, a.method) <
                     std::tie(b.problem_id, b.method);
            });

  std::cout << "problem              method status      iters          cost"
               "     theta  cert   time_ms\n";
  int code = 0;
  for (const auto& r : reports) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%-20s %-6s %-10s %6d %13.6g %9.2e %5s %9.1f",
                  r.problem_id.c_str(), r.method.c_str(), r.status.c_str(),
                  r.iterations, r.f, r.theta,
                  r.certified ? "yes" : (r.status == "optimal" ? "NO" : "-"),
                  r.wall_ms);
    std::cout << buf << "\n";
    code = std::max(code, exit_code_for(r));
  }
  if (!out_path.empty()) {
    std::ostringstream agg;
    agg << "[\n";
    for (size_t i = 0; i < reports.size(); ++i)
      agg << report_json(reports[i]) << (i + 1 < reports.size() ? ",\n" : "\n");
    agg << "]\n";
    std::ofstream out(out_path);
    out << agg.str();
    std::cerr << "reports written to " << out_path << "\n";
  }
  return code;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"sequential quadratic SOS programming toolkit"};
  app.require_subcommand(1);

  std::string problem_path, config_path, out_path, trace_path;
  std::string hessian, violation, method = "sqsos";
  int max_iter = 0, cert_samples = 10000, viol_samples = 1000;
  std::uint64_t seed = 7;

  CLI::App* solve = app.add_subcommand("solve", "solve a problem file");
  solve->add_option("problem", problem_path, "problem JSON file")->required();
  solve->add_option("--config", config_path, "solver config JSON");
  solve->add_option("--out", out_path, "write the report JSON here");
  solve->add_option("--trace", trace_path, "write the iteration trace CSV here");
  solve->add_option("--hessian", hessian,
                    "damped-bfgs | exact-gershgorin | exact-mirrored | "
                    "exact-min-frobenius");
  solve->add_option("--violation", violation,
                    "signed-distance | projection | sampling");
  solve->add_option("--max-iter", max_iter, "iteration cap");
  solve->add_option("--seed", seed, "certificate sampling seed");
  solve->add_option("--method", method, "sqsos | cd")
      ->check(CLI::IsMember({"sqsos", "cd"}));
  solve->add_option("--cert-samples", cert_samples,
                    "certificate sample count (0 disables)");

  CLI::App* viol = app.add_subcommand(
      "violation", "violation-method sweep over a polynomial list");
  viol->add_option("polys", problem_path,
                   "text file, one polynomial per line")->required();
  viol->add_option("--seed", seed, "sampling seed");
  viol->add_option("--samples", viol_samples, "sampling method sample count");

  CLI::App* suite =
      app.add_subcommand("suite", "run every bundled benchmark instance");
  suite->add_option("--data", problem_path, "problem directory")
      ->default_val("data");
  suite->add_option("--seed", seed, "certificate sampling seed");
  suite->add_option("--out", out_path, "write the aggregated reports here");
  suite->add_option("--hessian", hessian, "hessian mode for every run");
  suite->add_option("--cert-samples", cert_samples,
                    "certificate sample count (0 disables)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (solve->parsed())
      return run_solve(problem_path, config_path, out_path, trace_path,
                       hessian, violation, max_iter, seed, method,
                       cert_samples);
    if (viol->parsed()) return run_violation(problem_path, seed, viol_samples);
    return run_suite(problem_path, seed, out_path, hessian, cert_samples);
  } catch (const PolyParseError& e) {
    std::cerr << "error: column " << e.column << ": " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace sqsos
