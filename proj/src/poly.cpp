#include "sqsos/poly.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace sqsos {

namespace {
constexpr double kCoeffDropTol = 1e-14;
}

int total_degree(const MultiIndex& a) {
  int d = 0;
  for (int e : a) d += e;
  return d;
}

bool GrlexLess::operator()(const MultiIndex& a, const MultiIndex& b) const {
  const int da = total_degree(a), db = total_degree(b);
  if (da != db) return da < db;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

Polynomial::Polynomial(int nvars, TermMap terms)
    : nvars_(nvars), terms_(std::move(terms)) {
  for (const auto& [alpha, c] : terms_) {
    if (static_cast<int>(alpha.size()) != nvars_)
      throw std::invalid_argument("multi-index length does not match nvars");
  }
  prune();
}

Polynomial Polynomial::constant(int nvars, double c) {
  Polynomial p(nvars);
  p.set_coeff(MultiIndex(nvars, 0), c);
  return p;
}

Polynomial Polynomial::variable(int nvars, int var) {
  if (var < 0 || var >= nvars) throw std::invalid_argument("variable index out of range");
  MultiIndex a(nvars, 0);
  a[var] = 1;
  return monomial(a);
}

Polynomial Polynomial::monomial(const MultiIndex& alpha, double c) {
  Polynomial p(static_cast<int>(alpha.size()));
  p.set_coeff(alpha, c);
  return p;
}

int Polynomial::degree() const {
  if (terms_.empty()) return -1;
  // grlex: the last key has maximal total degree
  return total_degree(terms_.rbegin()->first);
}

double Polynomial::coeff(const MultiIndex& alpha) const {
  auto it = terms_.find(alpha);
  return it == terms_.end() ? 0.0 : it->second;
}

void Polynomial::set_coeff(const MultiIndex& alpha, double c) {
  if (static_cast<int>(alpha.size()) != nvars_)
    throw std::invalid_argument("multi-index length does not match nvars");
  if (c == 0.0)
    terms_.erase(alpha);
  else
    terms_[alpha] = c;
}

void Polynomial::prune() {
  for (auto it = terms_.begin(); it != terms_.end();) {
    if (std::abs(it->second) < kCoeffDropTol)
      it = terms_.erase(it);
    else
      ++it;
  }
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  Polynomial r = *this;
  r += o;
  return r;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
  if (nvars_ != o.nvars_) {
    if (is_zero() && terms_.empty())
      nvars_ = o.nvars_;
    else if (!o.is_zero())
      throw std::invalid_argument("polynomial nvars mismatch");
  }
  for (const auto& [alpha, c] : o.terms_) terms_[alpha] += c;
  prune();
  return *this;
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + (-o); }

Polynomial Polynomial::operator-() const {
  Polynomial r(nvars_);
  for (const auto& [alpha, c] : terms_) r.terms_[alpha] = -c;
  return r;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
  if (nvars_ != o.nvars_ && !is_zero() && !o.is_zero())
    throw std::invalid_argument("polynomial nvars mismatch");
  Polynomial r(std::max(nvars_, o.nvars_));
  for (const auto& [a, ca] : terms_) {
    for (const auto& [b, cb] : o.terms_) {
      MultiIndex s(a);
      for (size_t i = 0; i < s.size(); ++i) s[i] += b[i];
      r.terms_[s] += ca * cb;
    }
  }
  r.prune();
  return r;
}

Polynomial Polynomial::operator*(double c) const {
  Polynomial r(nvars_);
  for (const auto& [alpha, ca] : terms_) r.terms_[alpha] = ca * c;
  r.prune();
  return r;
}

bool Polynomial::operator==(const Polynomial& o) const {
  return nvars_ == o.nvars_ && terms_ == o.terms_;
}

Polynomial Polynomial::derivative(int var) const {
  if (var < 0 || var >= nvars_) throw std::invalid_argument("variable index out of range");
  Polynomial r(nvars_);
  for (const auto& [alpha, c] : terms_) {
    if (alpha[var] == 0) continue;
    MultiIndex b = alpha;
    const int e = b[var]--;
    r.terms_[b] += c * e;
  }
  r.prune();
  return r;
}

double Polynomial::evaluate(const std::vector<double>& point) const {
  if (static_cast<int>(point.size()) != nvars_)
    throw std::invalid_argument("evaluation point length mismatch");
  double v = 0.0;
  for (const auto& [alpha, c] : terms_) {
    double m = c;
    for (int i = 0; i < nvars_; ++i)
      for (int e = 0; e < alpha[i]; ++e) m *= point[i];
    v += m;
  }
  return v;
}

double Polynomial::l2_norm_sq() const {
  double v = 0.0;
  for (const auto& [alpha, c] : terms_) v += c * c;
  return v;
}

Polynomial Polynomial::substitute_tail(int keep, const std::vector<Polynomial>& subs) const {
  if (keep + static_cast<int>(subs.size()) != nvars_)
    throw std::invalid_argument("substitute_tail: keep + subs does not cover nvars");
  Polynomial r(keep);
  for (const auto& [alpha, c] : terms_) {
    Polynomial term = Polynomial::constant(keep, c);
    MultiIndex head(alpha.begin(), alpha.begin() + keep);
    term = term * Polynomial::monomial(head);
    for (size_t i = 0; i < subs.size(); ++i)
      for (int e = 0; e < alpha[keep + i]; ++e) term = term * subs[i];
    r += term;
  }
  return r;
}

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const double c = it->second;
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << "-";
    first = false;
    const double ac = std::abs(c);
    const bool is_const = total_degree(it->first) == 0;
    if (ac != 1.0 || is_const) {
      os << ac;
      if (!is_const) os << "*";
    }
    bool firstv = true;
    for (size_t i = 0; i < it->first.size(); ++i) {
      const int e = it->first[i];
      if (e == 0) continue;
      if (!firstv) os << "*";
      firstv = false;
      os << "x" << (i + 1);
      if (e > 1) os << "^" << e;
    }
  }
  return os.str();
}

PolyVec gradient(const Polynomial& p) {
  PolyVec g;
  g.reserve(p.nvars());
  for (int i = 0; i < p.nvars(); ++i) g.push_back(p.derivative(i));
  return g;
}

double coeff_dot(const Polynomial& a, const Polynomial& b) {
  const Polynomial& p = a.terms().size() <= b.terms().size() ? a : b;
  const Polynomial& q = &p == &a ? b : a;
  double s = 0.0;
  for (const auto& [alpha, c] : p.terms()) s += c * q.coeff(alpha);
  return s;
}

Polynomial gradient_dot(const Polynomial& p, const PolyVec& f) {
  if (static_cast<int>(f.size()) != p.nvars())
    throw std::invalid_argument("gradient_dot: dynamics dimension mismatch");
  Polynomial r(p.nvars());
  for (int i = 0; i < p.nvars(); ++i) r += p.derivative(i) * f[i];
  return r;
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  k = std::min(k, n - k);
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::vector<MultiIndex> monomials_up_to(int n, int d) {
  if (n < 1 || d < 0) throw std::invalid_argument("monomials_up_to: need n >= 1, d >= 0");
  std::vector<MultiIndex> out;
  out.reserve(static_cast<size_t>(binomial(n + d, d)));
  MultiIndex cur(n, 0);
  // enumerate multi-indices of exact degree t in lex order, t = 0..d
  for (int t = 0; t <= d; ++t) {
    std::vector<MultiIndex> level;
    MultiIndex a(n, 0);
    a[0] = t;
    while (true) {
      level.push_back(a);
      // next composition of t into n parts, lex-descending on a
      int i = n - 2;
      while (i >= 0 && a[i] == 0) --i;
      if (i < 0) break;
      a[i]--;
      int rest = a[n - 1] + 1;
      a[n - 1] = 0;
      a[i + 1] = rest;
      for (int j = i + 2; j < n; ++j) {
        a[i + 1] += a[j];
        a[j] = 0;
      }
    }
    // lex-ascending within the degree level
    std::sort(level.begin(), level.end());
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

namespace {

struct Parser {
  const std::string& s;
  size_t pos = 0;

  explicit Parser(const std::string& text) : s(text) {}

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw PolyParseError(msg, static_cast<int>(pos) + 1);
  }

  double parse_number() {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() &&
           (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.' ||
            s[pos] == 'e' || s[pos] == 'E' ||
            ((s[pos] == '+' || s[pos] == '-') && pos > start &&
             (s[pos - 1] == 'e' || s[pos - 1] == 'E'))))
      ++pos;
    if (pos == start) fail("expected number");
    try {
      return std::stod(s.substr(start, pos - start));
    } catch (const std::exception&) {
      pos = start;
      fail("malformed number");
    }
  }

  int parse_int() {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == start) fail("expected integer");
    return std::stoi(s.substr(start, pos - start));
  }

  // term := number? ("*"? var ("^" int)?)*
  struct Term {
    double coeff = 1.0;
    std::map<int, int> powers;  // var index (1-based) -> exponent
  };

  Term parse_term() {
    Term t;
    bool any = false;
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      t.coeff = parse_number();
      any = true;
    }
    while (true) {
      skip_ws();
      size_t save = pos;
      if (peek() == '*') {
        ++pos;
        skip_ws();
      }
      if (peek() != 'x') {
        pos = save;
        break;
      }
      ++pos;  // 'x'
      int idx = parse_int();
      if (idx < 1) fail("variable index must be >= 1");
      int exp = 1;
      if (peek() == '^') {
        ++pos;
        exp = parse_int();
        if (exp < 0) fail("negative exponent");
      }
      t.powers[idx] += exp;
      any = true;
    }
    if (!any) fail("expected term");
    return t;
  }
};

}  // namespace

Polynomial parse_polynomial(const std::string& text, int nvars) {
  Parser p(text);
  struct SignedTerm {
    double coeff;
    std::map<int, int> powers;
  };
  std::vector<SignedTerm> terms;
  int max_var = 0;
  double sign = 1.0;
  if (p.peek() == '-') {
    sign = -1.0;
    ++p.pos;
  } else if (p.peek() == '+') {
    ++p.pos;
  }
  while (true) {
    auto t = p.parse_term();
    if (!t.powers.empty()) max_var = std::max(max_var, t.powers.rbegin()->first);
    terms.push_back({sign * t.coeff, std::move(t.powers)});
    if (p.eof()) break;
    char c = p.peek();
    if (c == '+')
      sign = 1.0;
    else if (c == '-')
      sign = -1.0;
    else
      p.fail("expected '+' or '-'");
    ++p.pos;
  }
  if (nvars < 0) nvars = max_var;
  if (max_var > nvars)
    throw PolyParseError("variable index exceeds declared nvars", 1);
  Polynomial out(std::max(nvars, 1));
  for (const auto& t : terms) {
    MultiIndex a(std::max(nvars, 1), 0);
    for (const auto& [idx, e] : t.powers) a[idx - 1] = e;
    out += Polynomial::monomial(a, t.coeff);
  }
  return out;
}

}  // namespace sqsos
