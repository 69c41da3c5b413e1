#include "sqsos/soscone.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace sqsos {

GramBasis make_gram_basis(int nvars, int half_degree) {
  GramBasis b;
  b.nvars = nvars;
  b.half_degree = half_degree;
  b.zeta = monomials_up_to(nvars, half_degree);
  return b;
}

GramMap build_gram_map(int nvars, int two_d) {
  if (two_d < 0 || two_d % 2 != 0)
    throw std::invalid_argument("build_gram_map: degree must be even and nonnegative");
  GramMap map;
  map.basis = make_gram_basis(nvars, two_d / 2);
  map.row_monomials = monomials_up_to(nvars, two_d);
  std::map<MultiIndex, int, GrlexLess> row_of;
  for (size_t r = 0; r < map.row_monomials.size(); ++r)
    row_of[map.row_monomials[r]] = static_cast<int>(r);
  map.rows.resize(map.row_monomials.size());
  const int nz = map.basis.size();
  for (int i = 0; i < nz; ++i)
    for (int j = i; j < nz; ++j) {
      MultiIndex prod(nvars);
      for (int v = 0; v < nvars; ++v)
        prod[v] = map.basis.zeta[i][v] + map.basis.zeta[j][v];
      map.rows[row_of.at(prod)].emplace_back(i, j);
    }
  return map;
}

Polynomial reconstruct(const GramMap& map, const Eigen::MatrixXd& Q) {
  Polynomial p(map.basis.nvars);
  for (size_t r = 0; r < map.rows.size(); ++r) {
    double c = 0.0;
    for (const auto& [i, j] : map.rows[r])
      c += (i == j) ? Q(i, i) : Q(i, j) + Q(j, i);
    if (c != 0.0) p.set_coeff(map.row_monomials[r], p.coeff(map.row_monomials[r]) + c);
  }
  return p;
}

SosConstraintHandle transcribe_sos(const AffinePolyMap& m, int nvars, int two_d,
                                   ConicBuilder& bld) {
  SosConstraintHandle h;
  h.map = build_gram_map(nvars, two_d);
  const int side = h.map.basis.size();
  const int nsv = svec_dim(side);
  h.gram_var_start = bld.add_vars(nsv);

  std::map<MultiIndex, int, GrlexLess> row_of;
  for (size_t r = 0; r < h.map.row_monomials.size(); ++r)
    row_of[h.map.row_monomials[r]] = static_cast<int>(r);

  auto check_degree = [&](const Polynomial& p, const char* what) {
    if (p.degree() > two_d) {
      std::ostringstream os;
      os << "transcribe_sos: " << what << " has degree " << p.degree()
         << " > " << two_d;
      throw std::invalid_argument(os.str());
    }
    if (!p.is_zero() && p.nvars() != nvars)
      throw std::invalid_argument("transcribe_sos: indeterminate count mismatch");
  };
  check_degree(m.offset, "offset");
  for (const auto& [var, col] : m.cols) check_degree(col, "column");

  // svec index of Gram entry (i, j), i <= j: column-major upper triangle
  auto svidx = [&](int i, int j) { return j * (j + 1) / 2 + i; };
  const double r2 = std::sqrt(2.0);

  h.eq_row_start = bld.begin_block(ConeBlock::Kind::Zero, h.map.num_rows());
  for (size_t r = 0; r < h.map.rows.size(); ++r) {
    const int row = h.eq_row_start + static_cast<int>(r);
    for (const auto& [i, j] : h.map.rows[r])
      bld.add_entry(row, h.gram_var_start + svidx(i, j), i == j ? -1.0 : -r2);
    bld.set_rhs(row, -m.offset.coeff(h.map.row_monomials[r]));
  }
  for (const auto& [var, col] : m.cols)
    for (const auto& [alpha, c] : col.terms())
      bld.add_entry(h.eq_row_start + row_of.at(alpha), var, c);

  if (side == 1) {
    h.cone_row_start = bld.begin_block(ConeBlock::Kind::NonNeg, 1);
    bld.add_entry(h.cone_row_start, h.gram_var_start, -1.0);
  } else {
    h.cone_row_start = bld.begin_block(ConeBlock::Kind::Psd, side);
    for (int k = 0; k < nsv; ++k)
      bld.add_entry(h.cone_row_start + k, h.gram_var_start + k, -1.0);
  }
  return h;
}

SosFeasibility sos_feasibility(const Polynomial& p) {
  SosFeasibility out;
  if (p.is_zero()) {
    out.is_sos = true;
    out.witness = Eigen::MatrixXd::Zero(1, 1);
    out.diagnostics = "zero polynomial";
    return out;
  }
  if (p.degree() % 2 != 0) {
    out.diagnostics = "odd degree";
    return out;
  }
  // minimize t subject to p = <Q, zeta zeta'>, Q + t I psd; strictly
  // feasible on both sides, so the boundary case is well conditioned.
  // Membership is invariant under positive scaling, so normalize to unit
  // peak coefficient first; keeps the SDP data O(1).
  double cmax = 0.0;
  for (const auto& [alpha, c] : p.terms()) cmax = std::max(cmax, std::abs(c));
  const Polynomial ps = p * (1.0 / cmax);
  ConicBuilder bld;
  SosConstraintHandle h;
  {
    // manual variant of transcribe_sos with the t I shift on the cone rows
    const int nvars = ps.nvars();
    const int two_d = ps.degree();
    h.map = build_gram_map(nvars, two_d);
    const int side = h.map.basis.size();
    const int nsv = svec_dim(side);
    h.gram_var_start = bld.add_vars(nsv);
    const int tvar = bld.add_vars(1);
    bld.set_linear_cost(tvar, 1.0);
    auto svidx = [&](int i, int j) { return j * (j + 1) / 2 + i; };
    const double r2 = std::sqrt(2.0);
    h.eq_row_start = bld.begin_block(ConeBlock::Kind::Zero, h.map.num_rows());
    for (size_t r = 0; r < h.map.rows.size(); ++r) {
      const int row = h.eq_row_start + static_cast<int>(r);
      for (const auto& [i, j] : h.map.rows[r])
        bld.add_entry(row, h.gram_var_start + svidx(i, j), i == j ? -1.0 : -r2);
      bld.set_rhs(row, -ps.coeff(h.map.row_monomials[r]));
    }
    h.cone_row_start = bld.begin_block(
        side == 1 ? ConeBlock::Kind::NonNeg : ConeBlock::Kind::Psd, side);
    for (int k = 0; k < nsv; ++k)
      bld.add_entry(h.cone_row_start + k, h.gram_var_start + k, -1.0);
    for (int i = 0; i < side; ++i)
      bld.add_entry(h.cone_row_start + svidx(i, i), tvar, -1.0);
  }
  const ConicProblem prob = bld.build();
  ConicSettings settings;
  settings.feas_tol = 1e-7;   // membership decision needs 1e-7, not 1e-8
  settings.gap_tol = 1e-7;
  const ConicSolution sol = solve(prob, nullptr, settings);
  std::ostringstream os;
  os << "shift objective " << sol.primal_obj << ", status " << to_string(sol.status)
     << ", iters " << sol.iterations;
  out.diagnostics = os.str();
  if (sol.status != SolveStatus::Optimal) return out;
  const int side = h.map.basis.size();
  Eigen::MatrixXd Q =
      cmax * smat(sol.x.segment(h.gram_var_start, svec_dim(side)), side);
  const double t = cmax * sol.primal_obj;
  if (t <= 1e-6 * cmax) {
    out.is_sos = true;
    if (t > 0) Q.diagonal().array() += t;  // nudge marginal witnesses onto the cone
    out.witness = Q;
  }
  return out;
}

}  // namespace sqsos
