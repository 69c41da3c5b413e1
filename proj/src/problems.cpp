#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sqsos/bench.hpp"

namespace sqsos {

std::string to_string(ProblemFile::Kind k) {
  return k == ProblemFile::Kind::Roa ? "roa" : "synthesis";
}

std::string to_string(ProblemFile::Init i) {
  switch (i) {
    case ProblemFile::Init::LqrLyapunov: return "lqr-lyapunov";
    case ProblemFile::Init::Explicit: return "explicit";
    case ProblemFile::Init::NegativeDefinite: return "negative-definite";
  }
  return "?";
}

ProblemFile ProblemFile::parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("problem file: ") + e.what());
  }
  ProblemFile pf;
  try {
    pf.id = j.at("id").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "roa") pf.kind = Kind::Roa;
    else if (kind == "synthesis") pf.kind = Kind::Synthesis;
    else throw std::invalid_argument("problem file: unknown kind '" + kind + "'");
    pf.indeterminates = j.at("indeterminates").get<int>();
    pf.controls = j.value("controls", 0);
    pf.dynamics = j.at("dynamics").get<std::vector<std::string>>();
    pf.g0 = j.value("g0", std::string());
    pf.h = j.value("h", std::string());
    if (j.contains("degrees")) {
      const auto& d = j["degrees"];
      pf.degree_V = d.value("V", pf.degree_V);
      pf.degree_s = d.value("s", pf.degree_s);
      pf.degree_kappa = d.value("kappa", pf.degree_kappa);
    }
    pf.gamma = j.value("gamma", 1.0);
    pf.beta = j.value("beta", 1.0);
    if (j.contains("Hu"))
      pf.Hu = j["Hu"].get<std::vector<std::vector<double>>>();
    pf.epsilon = j.value("epsilon", 1e-6);
    if (j.contains("init")) {
      const auto& ji = j["init"];
      const std::string t = ji.value("type", "lqr-lyapunov");
      if (t == "lqr-lyapunov") pf.init = Init::LqrLyapunov;
      else if (t == "explicit") pf.init = Init::Explicit;
      else if (t == "negative-definite") pf.init = Init::NegativeDefinite;
      else throw std::invalid_argument("problem file: unknown init '" + t + "'");
      pf.init_scale = ji.value("scale", 1.0);
      if (ji.contains("polynomials"))
        pf.init_polys =
            ji["polynomials"].get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("problem file: ") + e.what());
  }
  pf.validate();
  return pf;
}

ProblemFile ProblemFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open problem file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ProblemFile::validate() const {
  if (indeterminates < 1)
    throw std::invalid_argument("problem file: indeterminates must be >= 1");
  const int expected =
      indeterminates + (kind == Kind::Synthesis ? controls : 0);
  if (static_cast<int>(dynamics.size()) != indeterminates)
    throw std::invalid_argument(
        "problem file: dynamics must have one entry per state");
  for (const auto& text : dynamics) {
    const Polynomial p = parse_polynomial(text);  // throws PolyParseError
    if (p.nvars() > expected)
      throw std::invalid_argument(
          "problem file: dynamics entry '" + text +
          "' uses more indeterminates than declared");
  }
  if (degree_V % 2 != 0 || degree_s % 2 != 0)
    throw std::invalid_argument(
        "problem file: SOS-parameterized degrees must be even");
  if (kind == Kind::Synthesis) {
    if (controls < 1)
      throw std::invalid_argument("problem file: synthesis needs controls >= 1");
    if (Hu.empty())
      throw std::invalid_argument("problem file: synthesis needs Hu rows");
    for (const auto& row : Hu)
      if (static_cast<int>(row.size()) != controls)
        throw std::invalid_argument(
            "problem file: Hu rows must have one entry per control");
    if (h.empty())
      throw std::invalid_argument("problem file: synthesis needs h");
    if (!(beta > 0))
      throw std::invalid_argument("problem file: beta must be > 0");
  } else {
    if (g0.empty())
      throw std::invalid_argument("problem file: roa needs g0");
    if (!(gamma > 0))
      throw std::invalid_argument("problem file: gamma must be > 0");
  }
  if (!(epsilon > 0))
    throw std::invalid_argument("problem file: epsilon must be > 0");
}

Polynomial to_polynomial(const DecisionVar& var, const Eigen::VectorXd& coeffs) {
  Polynomial p(var.nvars);
  for (int i = 0; i < var.dim(); ++i)
    if (coeffs[i] != 0.0) p += Polynomial::monomial(var.basis[i], coeffs[i]);
  return p;
}

Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(A.rows());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * n, n * n);
  // vec(A'P + PA) = (I (x) A' + A' (x) I) vec(P), column-major vec
  for (int c = 0; c < n; ++c) M.block(c * n, c * n, n, n) += A.transpose();
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r)
      for (int k = 0; k < n; ++k) M(c * n + r, k * n + r) += A(k, c);
  Eigen::VectorXd q(n * n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) q[c * n + r] = -Q(r, c);
  const Eigen::VectorXd vp = M.fullPivLu().solve(q);
  Eigen::MatrixXd P(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) P(r, c) = vp[c * n + r];
  P = 0.5 * (P + P.transpose());
  if ((A.transpose() * P + P * A + Q).norm() > 1e-6 * std::max(1.0, Q.norm()))
    throw std::invalid_argument(
        "lyapunov_solve: no solution (is the system matrix Hurwitz?)");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  if (es.eigenvalues().minCoeff() <= 0)
    throw std::invalid_argument("lyapunov_solve: solution not positive definite");
  return P;
}

namespace {

bool hurwitz(const Eigen::MatrixXd& A) {
  const Eigen::VectorXcd ev = A.eigenvalues();
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i].real() >= -1e-12) return false;
  return true;
}

}  // namespace

Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const int n = static_cast<int>(A.rows());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  // scan for a stabilizing start K0 = alpha B'
  Eigen::MatrixXd K = B.transpose();
  double alpha = 1.0;
  bool found = hurwitz(A - B * K);
  for (int t = 0; t < 24 && !found; ++t) {
    alpha *= 2.0;
    K = alpha * B.transpose();
    found = hurwitz(A - B * K);
  }
  if (!found) {
    // Bass method: shift A into the right half plane, solve the Lyapunov
    // equation for a Gramian-like P_b, and take K0 = B' P_b^{-1}
    const double beta = A.norm() + 0.5;
    const Eigen::MatrixXd M = beta * I + A;
    const Eigen::MatrixXd Pb =
        lyapunov_solve(-M.transpose(), 2.0 * B * B.transpose());
    K = B.transpose() * Pb.inverse();
    found = hurwitz(A - B * K);
  }
  if (!found)
    throw std::invalid_argument("lqr_gain: no stabilizing initial gain found");
  // Kleinman iteration: each step solves a Lyapunov equation for the
  // closed loop and recovers the next gain from its value matrix
  for (int it = 0; it < 100; ++it) {
    const Eigen::MatrixXd P =
        lyapunov_solve(A - B * K, I + K.transpose() * K);
    const Eigen::MatrixXd Knext = B.transpose() * P;
    const double delta = (Knext - K).norm();
    K = Knext;
    if (delta <= 1e-12 * std::max(1.0, K.norm())) break;
  }
  if (!hurwitz(A - B * K))
    throw std::invalid_argument("lqr_gain: iteration lost stability");
  return K;
}

namespace {

// coefficient of x_col in the linear part of p
double linear_coeff(const Polynomial& p, int nvars, int col) {
  MultiIndex e(nvars, 0);
  e[col] = 1;
  return p.coeff(e);
}

Polynomial quadratic_form(const Eigen::MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  Polynomial v(n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      MultiIndex e(n, 0);
      e[i] += 1;
      e[j] += 1;
      const double c = i == j ? P(i, i) : P(i, j) + P(j, i);
      if (c != 0.0) v.set_coeff(e, v.coeff(e) + c);
    }
  return v;
}

Polynomial margin_poly(int n, double epsilon) {
  Polynomial e(n);
  for (int i = 0; i < n; ++i) {
    MultiIndex a(n, 0);
    a[i] = 2;
    e.set_coeff(a, epsilon);
  }
  return e;
}

// default multiplier seed 0.5 (1 + |x|^2), clipped to the variable basis
Eigen::VectorXd multiplier_seed(const DecisionVar& var) {
  Polynomial s = Polynomial::constant(var.nvars, 0.5) +
                 margin_poly(var.nvars, 0.5);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(var.dim());
  for (int i = 0; i < var.dim(); ++i) c[i] = s.coeff(var.basis[i]);
  return c;
}

Eigen::VectorXd project_poly(const DecisionVar& var, const Polynomial& p) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(var.dim());
  for (int i = 0; i < var.dim(); ++i) c[i] = p.coeff(var.basis[i]);
  return c;
}

Polynomial parse_in(const std::string& text, int nvars, const char* what) {
  const Polynomial p = parse_polynomial(text);
  if (p.nvars() > nvars)
    throw std::invalid_argument(std::string("problem file: ") + what +
                                " uses more indeterminates than declared");
  // re-embed into exactly nvars indeterminates
  Polynomial q(nvars);
  for (const auto& [alpha, c] : p.terms()) {
    MultiIndex a = alpha;
    a.resize(nvars, 0);
    q.set_coeff(a, c);
  }
  return q;
}

}  // namespace

BuiltProblem build_roa(const ProblemFile& pf) {
  pf.validate();
  if (pf.kind != ProblemFile::Kind::Roa)
    throw std::invalid_argument("build_roa: problem kind is not roa");
  const int n = pf.indeterminates;

  PolyVec f;
  for (const auto& text : pf.dynamics) f.push_back(parse_in(text, n, "dynamics"));
  const Polynomial g0 = parse_in(pf.g0, n, "g0");
  const Polynomial eps = margin_poly(n, pf.epsilon);

  BuiltProblem bp;
  bp.pf = pf;
  SosProgram& p = bp.prob;
  p.vars = {make_poly_var("V", n, pf.degree_V, DecisionVar::Role::FreePoly, 2),
            make_poly_var("s", n, pf.degree_s, DecisionVar::Role::SosMultiplier)};
  Expr V = Expr::var(p.vars, 0), s = Expr::var(p.vars, 1);
  Expr level = Expr::constant(Polynomial::constant(n, pf.gamma));
  p.constraints.push_back(mul(s, V - level) - grad_dot(V, f) -
                          Expr::constant(eps));
  bp.constraint_names.push_back("decrease");
  p.constraints.push_back(V - Expr::constant(eps));
  bp.constraint_names.push_back("positivity");
  p.constraints.push_back(s);
  bp.constraint_names.push_back("multiplier");
  p.objective.quad_terms = {{1.0, V - Expr::constant(g0)}};

  bp.init.coeffs = {Eigen::VectorXd::Zero(p.vars[0].dim()),
                    multiplier_seed(p.vars[1])};
  switch (pf.init) {
    case ProblemFile::Init::LqrLyapunov: {
      Eigen::MatrixXd A(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = linear_coeff(f[i], n, j);
      const Eigen::MatrixXd P =
          lyapunov_solve(A, Eigen::MatrixXd::Identity(n, n));
      bp.init.coeffs[0] =
          project_poly(p.vars[0], quadratic_form(P) * pf.init_scale);
      break;
    }
    case ProblemFile::Init::NegativeDefinite:
      bp.init.coeffs[0] =
          project_poly(p.vars[0], margin_poly(n, -pf.init_scale));
      break;
    case ProblemFile::Init::Explicit:
      for (size_t v = 0; v < p.vars.size(); ++v) {
        const auto it = pf.init_polys.find(p.vars[v].name);
        if (it == pf.init_polys.end()) continue;
        bp.init.coeffs[v] =
            project_poly(p.vars[v], parse_in(it->second, n, "init"));
      }
      break;
  }
  return bp;
}

BuiltProblem build_synthesis(const ProblemFile& pf) {
  pf.validate();
  if (pf.kind != ProblemFile::Kind::Synthesis)
    throw std::invalid_argument("build_synthesis: problem kind is not synthesis");
  const int n = pf.indeterminates;
  const int m = pf.controls;
  const int prows = static_cast<int>(pf.Hu.size());

  PolyVec f;  // over n + m indeterminates, controls appended
  for (const auto& text : pf.dynamics)
    f.push_back(parse_in(text, n + m, "dynamics"));
  const Polynomial h = parse_in(pf.h, n, "h");
  const Polynomial eps = margin_poly(n, pf.epsilon);

  BuiltProblem bp;
  bp.pf = pf;
  SosProgram& p = bp.prob;
  p.vars.push_back(
      make_poly_var("V", n, pf.degree_V, DecisionVar::Role::FreePoly, 2));
  for (int j = 0; j < m; ++j)
    p.vars.push_back(make_poly_var("kappa" + std::to_string(j), n,
                                   pf.degree_kappa,
                                   DecisionVar::Role::FreePoly, 1));
  p.vars.push_back(
      make_poly_var("s1", n, pf.degree_s, DecisionVar::Role::SosMultiplier));
  p.vars.push_back(
      make_poly_var("s2", n, pf.degree_s, DecisionVar::Role::SosMultiplier));
  for (int i = 0; i < prows; ++i)
    p.vars.push_back(make_poly_var("s3_" + std::to_string(i), n, pf.degree_s,
                                   DecisionVar::Role::SosMultiplier));

  Expr V = Expr::var(p.vars, 0);
  std::vector<Expr> kappa;
  for (int j = 0; j < m; ++j) kappa.push_back(Expr::var(p.vars, 1 + j));
  Expr s1 = Expr::var(p.vars, 1 + m);
  Expr s2 = Expr::var(p.vars, 2 + m);
  Expr level = Expr::constant(Polynomial::constant(n, pf.beta));
  Expr one = Expr::constant(Polynomial::constant(n, 1.0));

  p.constraints.push_back(V - Expr::constant(eps));
  bp.constraint_names.push_back("positivity");
  p.constraints.push_back(mul(s1, V - level) - grad_dot(V, f, kappa) -
                          Expr::constant(eps));
  bp.constraint_names.push_back("decrease");
  p.constraints.push_back(mul(s2, V - level) - Expr::constant(h));
  bp.constraint_names.push_back("state-containment");
  for (int i = 0; i < prows; ++i) {
    Expr s3 = Expr::var(p.vars, 3 + m + i);
    Expr row = Expr::constant(Polynomial(n));
    for (int j = 0; j < m; ++j) row = row + kappa[j] * pf.Hu[i][j];
    p.constraints.push_back(mul(s3, V - level) - (row - one));
    bp.constraint_names.push_back("control-row-" + std::to_string(i));
  }
  p.constraints.push_back(s1);
  bp.constraint_names.push_back("multiplier-s1");
  p.constraints.push_back(s2);
  bp.constraint_names.push_back("multiplier-s2");
  for (int i = 0; i < prows; ++i) {
    p.constraints.push_back(Expr::var(p.vars, 3 + m + i));
    bp.constraint_names.push_back("multiplier-s3-" + std::to_string(i));
  }
  p.objective.quad_terms = {{1.0, V - Expr::constant(h)}};

  for (const auto& var : p.vars)
    bp.init.coeffs.push_back(var.role == DecisionVar::Role::SosMultiplier
                                 ? multiplier_seed(var)
                                 : Eigen::VectorXd::Zero(var.dim()));

  // LQR gain from the linearization at the origin (also used by the
  // negative-definite variant so the controller part stays sensible)
  Eigen::MatrixXd A(n, n), B(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = linear_coeff(f[i], n + m, j);
    for (int j = 0; j < m; ++j) B(i, j) = linear_coeff(f[i], n + m, n + j);
  }
  const Eigen::MatrixXd K = lqr_gain(A, B);
  for (int j = 0; j < m; ++j) {
    Polynomial kj(n);
    for (int i = 0; i < n; ++i) {
      MultiIndex e(n, 0);
      e[i] = 1;
      if (K(j, i) != 0.0) kj.set_coeff(e, -K(j, i));
    }
    bp.init.coeffs[1 + j] = project_poly(p.vars[1 + j], kj);
  }

  switch (pf.init) {
    case ProblemFile::Init::LqrLyapunov: {
      const Eigen::MatrixXd P =
          lyapunov_solve(A - B * K, Eigen::MatrixXd::Identity(n, n));
      bp.init.coeffs[0] =
          project_poly(p.vars[0], quadratic_form(P) * pf.init_scale);
      break;
    }
    case ProblemFile::Init::NegativeDefinite:
      bp.init.coeffs[0] =
          project_poly(p.vars[0], margin_poly(n, -pf.init_scale));
      break;
    case ProblemFile::Init::Explicit:
      for (size_t v = 0; v < p.vars.size(); ++v) {
        const auto it = pf.init_polys.find(p.vars[v].name);
        if (it == pf.init_polys.end()) continue;
        bp.init.coeffs[v] =
            project_poly(p.vars[v], parse_in(it->second, n, "init"));
      }
      break;
  }
  return bp;
}

BuiltProblem build_problem(const ProblemFile& pf) {
  return pf.kind == ProblemFile::Kind::Roa ? build_roa(pf)
                                           : build_synthesis(pf);
}

}  // namespace sqsos
