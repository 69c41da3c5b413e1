#include <random>

#include "sqsos/bench.hpp"

namespace sqsos {

CertificateRecord certify_outcome(const BuiltProblem& bp,
                                  const CoeffAssignment& solution, int samples,
                                  std::uint64_t seed, double radius) {
  const ProblemFile& pf = bp.pf;
  const int n = pf.indeterminates;
  const int m = pf.kind == ProblemFile::Kind::Synthesis ? pf.controls : 0;

  const Polynomial V = to_polynomial(bp.prob.vars[0], solution.coeffs[0]);
  const double level = pf.kind == ProblemFile::Kind::Roa ? pf.gamma : pf.beta;

  PolyVec f;
  for (const auto& text : pf.dynamics) {
    const Polynomial p = parse_polynomial(text);
    Polynomial q(n + m);
    for (const auto& [alpha, c] : p.terms()) {
      MultiIndex a = alpha;
      a.resize(n + m, 0);
      q.set_coeff(a, c);
    }
    f.push_back(std::move(q));
  }
  PolyVec kappa;
  if (pf.kind == ProblemFile::Kind::Synthesis) {
    for (int j = 0; j < m; ++j)
      kappa.push_back(
          to_polynomial(bp.prob.vars[1 + j], solution.coeffs[1 + j]));
    for (auto& fi : f) fi = fi.substitute_tail(n, kappa);
  } else {
    PolyVec fn;
    for (const auto& fi : f) fn.push_back(fi.substitute_tail(n, {}));
    f = std::move(fn);
  }
  const Polynomial vdot = gradient_dot(V, f);
  Polynomial h;
  if (!pf.h.empty()) h = parse_polynomial(pf.h, n);

  CertificateRecord rec;
  rec.samples_requested = samples;
  rec.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-radius, radius);
  const long long max_attempts = 1000LL * samples;
  std::vector<double> x(n);
  for (long long attempt = 0;
       attempt < max_attempts && rec.samples_drawn < samples; ++attempt) {
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
      x[i] = ud(rng);
      norm2 += x[i] * x[i];
    }
    if (norm2 < 1e-12) continue;
    const double vx = V.evaluate(x);
    if (vx > level) continue;
    ++rec.samples_drawn;
    bool bad = vdot.evaluate(x) >= 0.0;
    if (vx < pf.epsilon * norm2) bad = true;  // margin domination
    if (pf.kind == ProblemFile::Kind::Synthesis) {
      if (h.evaluate(x) > 0.0) bad = true;  // left the safe set
      for (const auto& row : pf.Hu) {
        double hu = 0.0;
        for (int j = 0; j < m; ++j) hu += row[j] * kappa[j].evaluate(x);
        if (hu > 1.0) bad = true;  // control bound exceeded
      }
    }
    if (bad) ++rec.violations;
  }
  return rec;
}

}  // namespace sqsos
