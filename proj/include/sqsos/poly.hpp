#ifndef SQSOS_POLY_HPP
#define SQSOS_POLY_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqsos {

/// Exponent tuple of a monomial x1^a1 * ... * xn^an.
using MultiIndex = std::vector<int>;

int total_degree(const MultiIndex& a);

/// Graded lexicographic order: total degree first, then lex.
struct GrlexLess {
  bool operator()(const MultiIndex& a, const MultiIndex& b) const;
};

/// Sparse multivariate polynomial with real coefficients.
///
/// Canonical form: no stored zero coefficients. Arithmetic drops
/// coefficients below 1e-14 in magnitude to keep term counts bounded.
class Polynomial {
 public:
  using TermMap = std::map<MultiIndex, double, GrlexLess>;

  Polynomial() : nvars_(0) {}
  explicit Polynomial(int nvars) : nvars_(nvars) {}
  Polynomial(int nvars, TermMap terms);

  static Polynomial constant(int nvars, double c);
  /// The monomial x_{var} (0-based) in `nvars` indeterminates.
  static Polynomial variable(int nvars, int var);
  static Polynomial monomial(const MultiIndex& alpha, double c = 1.0);

  int nvars() const { return nvars_; }
  /// Degree of the zero polynomial is -1 (sentinel, never used for basis sizing).
  int degree() const;
  bool is_zero() const { return terms_.empty(); }
  const TermMap& terms() const { return terms_; }
  double coeff(const MultiIndex& alpha) const;
  void set_coeff(const MultiIndex& alpha, double c);

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator-(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial operator*(double c) const;
  Polynomial operator-() const;
  Polynomial& operator+=(const Polynomial& o);

  bool operator==(const Polynomial& o) const;

  Polynomial derivative(int var) const;
  double evaluate(const std::vector<double>& point) const;
  /// Sum of squared coefficients (squared l2-norm in coefficient space).
  double l2_norm_sq() const;

  /// Substitute polynomials for a suffix of the indeterminates: the
  /// result lives in the first `keep` indeterminates; subs[i] replaces
  /// indeterminate keep+i and must have nvars == keep.
  Polynomial substitute_tail(int keep, const std::vector<Polynomial>& subs) const;

  std::string to_string() const;

 private:
  void prune();
  int nvars_;
  TermMap terms_;
};

inline Polynomial operator*(double c, const Polynomial& p) { return p * c; }

/// Vector of polynomials over a shared indeterminate tuple.
using PolyVec = std::vector<Polynomial>;

/// Coefficient-space inner product sum_alpha a_alpha * b_alpha.
double coeff_dot(const Polynomial& a, const Polynomial& b);

Polynomial gradient_dot(const Polynomial& p, const PolyVec& f);
PolyVec gradient(const Polynomial& p);

/// All multi-indices alpha with |alpha|_1 <= d in graded-lex order.
/// Length is C(n+d, d).
std::vector<MultiIndex> monomials_up_to(int n, int d);

std::int64_t binomial(int n, int k);

struct PolyParseError : std::runtime_error {
  PolyParseError(const std::string& msg, int column)
      : std::runtime_error(msg + " (column " + std::to_string(column) + ")"),
        column(column) {}
  int column;
};

/// Parse the problem-file text format, e.g. "3*x1^2*x2 - 0.5*x2^4 + 1".
/// Coefficients and exponents are optional (default 1); whitespace is
/// insignificant. If nvars < 0 it is inferred from the largest index.
Polynomial parse_polynomial(const std::string& text, int nvars = -1);

}  // namespace sqsos

#endif
