#include "sqsos/violation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sqsos/soscone.hpp"

namespace sqsos {

namespace {

int common_nvars(const PolyVec& p) {
  int n = 0;
  for (const auto& pi : p)
    if (!pi.is_zero()) {
      if (n == 0)
        n = pi.nvars();
      else if (pi.nvars() != n)
        throw std::invalid_argument("violation: mixed indeterminate counts");
    }
  return std::max(n, 1);
}

int half_degree(const Polynomial& p) { return (std::max(p.degree(), 0) + 1) / 2; }

}  // namespace

void ViolationConfig::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("ViolationConfig: eps must be > 0");
  if (sample_count < 1)
    throw std::invalid_argument("ViolationConfig: sample_count must be >= 1");
  if (!(hypercube_radius > 0.0))
    throw std::invalid_argument("ViolationConfig: hypercube_radius must be > 0");
}

std::string to_string(ViolationConfig::Method m) {
  switch (m) {
    case ViolationConfig::Method::SignedDistance: return "signed-distance";
    case ViolationConfig::Method::Projection: return "projection";
    case ViolationConfig::Method::Sampling: return "sampling";
  }
  return "?";
}

PolyVec default_interior(const PolyVec& p) {
  const int n = common_nvars(p);
  PolyVec out;
  out.reserve(p.size());
  for (const auto& pi : p) {
    Polynomial s(n);
    for (const auto& z : monomials_up_to(n, half_degree(pi))) {
      MultiIndex sq(n);
      for (int v = 0; v < n; ++v) sq[v] = 2 * z[v];
      s.set_coeff(sq, s.coeff(sq) + 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ViolationReport theta_signed_distance(const PolyVec& p, const PolyVec& interior,
                                      double eps) {
  if (interior.size() != p.size())
    throw std::invalid_argument("theta_signed_distance: interior size mismatch");
  const int n = common_nvars(p);
  ViolationReport rep;
  rep.method = ViolationConfig::Method::SignedDistance;
  rep.per_constraint.assign(p.size(), 0.0);
  std::vector<std::string> notes(p.size());

#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < static_cast<int>(p.size()); ++j) {
    const int two_d =
        2 * std::max(half_degree(p[j]), half_degree(interior[j]));
    const Polynomial pj = p[j].is_zero() ? Polynomial(n) : p[j];
    const GramMap map = build_gram_map(n, two_d);
    const int side = map.basis.size();
    const int nsv = svec_dim(side);
    const int nrows = map.num_rows();
    // each svec position belongs to exactly one coefficient row, so the
    // matching equations p + r*s = zeta'Q zeta can be eliminated by
    // pivoting one Gram entry per row; only the non-pivot entries and r
    // survive as conic variables
    std::vector<int> row_of(nsv, -1);
    std::vector<double> w_of(nsv, 0.0);
    const double r2 = std::sqrt(2.0);
    for (int r = 0; r < nrows; ++r)
      for (const auto& [a, b] : map.rows[r]) {
        const int k = b * (b + 1) / 2 + a;
        row_of[k] = r;
        w_of[k] = (a == b) ? 1.0 : r2;
      }
    std::vector<int> pivot(nrows, -1);
    std::vector<int> zidx(nsv, -1);
    int nz = 0;
    for (int k = 0; k < nsv; ++k) {
      if (pivot[row_of[k]] < 0)
        pivot[row_of[k]] = k;
      else
        zidx[k] = nz++;
    }
    ConicBuilder bld;
    bld.add_vars(nz + 1);
    const int rvar = nz;
    bld.set_linear_cost(rvar, 1.0);
    const int row0 = bld.begin_block(
        side == 1 ? ConeBlock::Kind::NonNeg : ConeBlock::Kind::Psd, side);
    for (int k = 0; k < nsv; ++k) {
      if (zidx[k] >= 0) {
        bld.add_entry(row0 + k, zidx[k], -1.0);
        continue;
      }
      const int r = row_of[k];
      const double wp = w_of[k];
      bld.set_rhs(row0 + k, pj.coeff(map.row_monomials[r]) / wp);
      bld.add_entry(row0 + k, rvar, -interior[j].coeff(map.row_monomials[r]) / wp);
      for (const auto& [a, b] : map.rows[r]) {
        const int kk = b * (b + 1) / 2 + a;
        if (kk != k) bld.add_entry(row0 + k, zidx[kk], w_of[kk] / wp);
      }
    }
    const ConicSolution sol = solve(bld.build());
    double r = sol.x.size() > rvar ? sol.x[rvar] : 0.0;
    if (sol.status == SolveStatus::DualInfeasible) r = 0.0;  // unbounded below
    if (sol.status != SolveStatus::Optimal &&
        sol.status != SolveStatus::DualInfeasible) {
      std::ostringstream os;
      os << "entry " << j << ": backend status " << to_string(sol.status)
         << " after " << sol.iterations << " iterations";
      notes[j] = os.str();
    }
    rep.per_constraint[j] = r;
  }
  double rmax = 0.0;
  for (double r : rep.per_constraint) rmax = std::max(rmax, r);
  rep.theta = rmax <= eps ? 0.0 : rmax;
  std::ostringstream os;
  for (const auto& s : notes)
    if (!s.empty()) os << (os.tellp() > 0 ? "; " : "") << s;
  rep.diagnostics = os.str();
  return rep;
}

ViolationReport theta_projection(const PolyVec& p) {
  const int n = common_nvars(p);
  ViolationReport rep;
  rep.method = ViolationConfig::Method::Projection;
  rep.per_constraint.assign(p.size(), 0.0);
  std::string failure;

#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < static_cast<int>(p.size()); ++j) {
    const Polynomial& pj = p[j];
    if (pj.degree() % 2 != 0 && pj.degree() > 0) {
#pragma omp critical
      failure = "theta_projection: odd-degree entry " + std::to_string(j);
      continue;
    }
    const int two_d = 2 * half_degree(pj);
    const GramMap map = build_gram_map(n, two_d);
    const int side = map.basis.size();
    const int nsv = svec_dim(side);
    // coefficients of zeta' Q zeta as a linear map of svec(Q)
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(map.num_rows(), nsv);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(map.num_rows());
    const double r2 = std::sqrt(2.0);
    for (int r = 0; r < map.num_rows(); ++r) {
      for (const auto& [a, b] : map.rows[r])
        M(r, b * (b + 1) / 2 + a) = (a == b) ? 1.0 : r2;
      c[r] = pj.coeff(map.row_monomials[r]);
    }
    ConicBuilder bld;
    const int q0 = bld.add_vars(nsv);
    bld.set_quadratic_cost(2.0 * M.transpose() * M);
    const Eigen::VectorXd lin = -2.0 * M.transpose() * c;
    for (int k = 0; k < nsv; ++k) bld.set_linear_cost(q0 + k, lin[k]);
    const int row0 = bld.begin_block(
        side == 1 ? ConeBlock::Kind::NonNeg : ConeBlock::Kind::Psd, side);
    for (int k = 0; k < nsv; ++k) bld.add_entry(row0 + k, q0 + k, -1.0);
    ConicSettings st;  // theta is objective-accurate, so push the gap further
    st.gap_tol = 1e-10;
    st.feas_tol = 1e-9;
    const ConicSolution sol = solve(bld.build(), nullptr, st);
    if (sol.status != SolveStatus::Optimal) {
#pragma omp critical
      failure = "theta_projection: entry " + std::to_string(j) +
                " backend status " + to_string(sol.status);
      continue;
    }
    rep.per_constraint[j] =
        std::max(0.0, (M * sol.x.segment(q0, nsv) - c).squaredNorm());
  }
  if (!failure.empty()) throw std::runtime_error(failure);
  rep.theta = 0.0;
  for (double t : rep.per_constraint) rep.theta += t;
  return rep;
}

namespace {

ViolationReport sampling_impl(const PolyVec& p, const ViolationConfig& cfg,
                              bool parallel) {
  cfg.validate();
  const int n = common_nvars(p);
  const int N = cfg.sample_count;
  // draw all points up front so the parallel split cannot change the stream
  std::vector<double> pts(static_cast<size_t>(N) * n);
  {
    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_real_distribution<double> u(-cfg.hypercube_radius,
                                             cfg.hypercube_radius);
    for (auto& v : pts) v = u(rng);
  }
  ViolationReport rep;
  rep.method = ViolationConfig::Method::Sampling;
  rep.per_constraint.assign(p.size(), 0.0);
  for (size_t j = 0; j < p.size(); ++j) {
    double pmin = std::numeric_limits<double>::infinity();
    if (parallel) {
#pragma omp parallel for reduction(min : pmin)
      for (int k = 0; k < N; ++k) {
        std::vector<double> x(pts.begin() + static_cast<size_t>(k) * n,
                              pts.begin() + static_cast<size_t>(k + 1) * n);
        pmin = std::min(pmin, p[j].evaluate(x));
      }
    } else {
      std::vector<double> x(n);
      for (int k = 0; k < N; ++k) {
        std::copy_n(pts.begin() + static_cast<size_t>(k) * n, n, x.begin());
        pmin = std::min(pmin, p[j].evaluate(x));
      }
    }
    rep.per_constraint[j] = pmin < 0.0 ? -pmin : 0.0;
    rep.theta = std::max(rep.theta, rep.per_constraint[j]);
  }
  return rep;
}

}  // namespace

ViolationReport theta_sampling(const PolyVec& p, const ViolationConfig& cfg) {
  return sampling_impl(p, cfg, true);
}

ViolationReport theta_sampling_serial(const PolyVec& p, const ViolationConfig& cfg) {
  return sampling_impl(p, cfg, false);
}

ViolationReport estimate_violation(const PolyVec& p, const ViolationConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case ViolationConfig::Method::SignedDistance:
      return theta_signed_distance(p, default_interior(p), cfg.eps);
    case ViolationConfig::Method::Projection:
      return theta_projection(p);
    case ViolationConfig::Method::Sampling:
      return theta_sampling(p, cfg);
  }
  throw std::logic_error("estimate_violation: bad method");
}

}  // namespace sqsos
