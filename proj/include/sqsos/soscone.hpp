#ifndef SQSOS_SOSCONE_HPP
#define SQSOS_SOSCONE_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "sqsos/conic.hpp"
#include "sqsos/poly.hpp"

namespace sqsos {

/// Monomial vector zeta of a Gram parameterization p = zeta' Q zeta.
struct GramBasis {
  int nvars = 0;
  int half_degree = 0;
  std::vector<MultiIndex> zeta;  // = monomials_up_to(nvars, half_degree)

  int size() const { return static_cast<int>(zeta.size()); }
};

/// For each product monomial alpha, the symmetric-matrix index pairs
/// (i, j), i <= j, with zeta_i * zeta_j = x^alpha.
struct GramMap {
  GramBasis basis;
  std::vector<MultiIndex> row_monomials;        // degree <= 2 * half_degree, grlex order
  std::vector<std::vector<std::pair<int, int>>> rows;

  int num_rows() const { return static_cast<int>(row_monomials.size()); }
};

GramBasis make_gram_basis(int nvars, int half_degree);

/// Build the complete Gram index map for polynomials of even degree two_d.
GramMap build_gram_map(int nvars, int two_d);

/// The polynomial zeta' Q zeta in canonical form.
Polynomial reconstruct(const GramMap& map, const Eigen::MatrixXd& Q);

struct SosFeasibility {
  bool is_sos = false;
  std::optional<Eigen::MatrixXd> witness;  // PSD Gram matrix when feasible
  std::string diagnostics;
};

/// Decide SOS membership by solving the Gram-matrix feasibility SDP.
SosFeasibility sos_feasibility(const Polynomial& p);

/// Polynomial affine in the scalar decision variables:
///   p(x; xi) = offset(x) + sum_j xi_{cols[j].first} * cols[j].second(x).
struct AffinePolyMap {
  Polynomial offset;
  std::vector<std::pair<int, Polynomial>> cols;
};

/// Rows and variables added to a ConicBuilder for one SOS membership
/// constraint. eq_rows[i] corresponds to map.row_monomials[i]; the dual of
/// that row is the coefficient of that monomial in the constraint multiplier.
struct SosConstraintHandle {
  GramMap map;
  int gram_var_start = 0;  // svec entries of the Gram matrix
  int eq_row_start = 0;
  int cone_row_start = 0;  // Psd (or NonNeg when the basis is 1x1) block
};

/// Append "p(x; xi) is SOS of degree two_d" to the builder. Coefficient
/// matching gives one zero-cone row per monomial up to two_d and a Gram
/// matrix constrained to the PSD cone. Throws if any polynomial exceeds
/// degree two_d.
SosConstraintHandle transcribe_sos(const AffinePolyMap& m, int nvars, int two_d,
                                   ConicBuilder& bld);

}  // namespace sqsos

#endif
