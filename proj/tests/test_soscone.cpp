#include <Eigen/Dense>
#include <random>

#include "doctest.h"
#include "sqsos/soscone.hpp"

using namespace sqsos;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("gram map indexes every product monomial") {
  auto map = build_gram_map(2, 4);
  CHECK(map.basis.size() == 6);
  CHECK(map.num_rows() == 15);
  // x1*x2 arises from 1 * (x1 x2) and x2 * x1
  int r = -1;
  for (int i = 0; i < map.num_rows(); ++i)
    if (map.row_monomials[i] == MultiIndex{1, 1}) r = i;
  REQUIRE(r >= 0);
  CHECK(map.rows[r].size() == 2);
  // every (i, j) pair with i <= j appears exactly once overall
  size_t total = 0;
  for (const auto& row : map.rows) total += row.size();
  CHECK(total == 21);  // 6*7/2
  CHECK_THROWS_AS(build_gram_map(2, 3), std::invalid_argument);
}

TEST_CASE("reconstruct of the identity Gram matrix") {
  auto map = build_gram_map(2, 2);  // zeta = (1, x2, x1)
  auto p = reconstruct(map, MatrixXd::Identity(3, 3));
  Polynomial expect(2);
  expect.set_coeff({0, 0}, 1.0);
  expect.set_coeff({0, 2}, 1.0);
  expect.set_coeff({2, 0}, 1.0);
  CHECK(p == expect);
}

TEST_CASE("round-trip: random PSD Gram matrices are certified") {
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  int trials = 0;
  for (int n = 1; n <= 3; ++n)
    for (int two_d = 2; two_d <= 6; two_d += 2)
      for (int rep = 0; rep < 6; ++rep) {
        auto map = build_gram_map(n, two_d);
        const int side = map.basis.size();
        MatrixXd M(side, side);
        for (int i = 0; i < side; ++i)
          for (int j = 0; j < side; ++j) M(i, j) = nd(rng);
        const auto p = reconstruct(map, MatrixXd(M.transpose() * M));
        auto fs = sos_feasibility(p);
        INFO("n=", n, " two_d=", two_d, " rep=", rep, " : ", fs.diagnostics);
        REQUIRE(fs.is_sos);
        REQUIRE(fs.witness.has_value());
        // the witness reconstructs p (coefficient-wise, solver tolerance)
        auto wmap = build_gram_map(n, p.degree() + (p.degree() % 2));
        const auto back = reconstruct(wmap, *fs.witness);
        const auto diff = back - p;
        CHECK(std::sqrt(diff.l2_norm_sq()) <= 1e-6 * (1.0 + std::sqrt(p.l2_norm_sq())));
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(*fs.witness, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8);
        ++trials;
      }
  CHECK(trials >= 50);
}

TEST_CASE("polynomials with a negative point are rejected") {
  // x^2 - 1 is negative at the origin
  auto p = parse_polynomial("x1^2 - 1");
  CHECK_FALSE(sos_feasibility(p).is_sos);
  // odd degree can never be a sum of squares
  CHECK_FALSE(sos_feasibility(parse_polynomial("x1^3 + x1")).is_sos);
}

TEST_CASE("Motzkin polynomial: nonnegative but not a sum of squares") {
  auto p = parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1");
  auto fs = sos_feasibility(p);
  INFO(fs.diagnostics);
  CHECK_FALSE(fs.is_sos);
}

TEST_CASE("perfect squares pass at the cone boundary") {
  auto fs = sos_feasibility(parse_polynomial("x1^2 + 2*x1 + 1"));
  INFO(fs.diagnostics);
  CHECK(fs.is_sos);
  CHECK(sos_feasibility(parse_polynomial("x1^2 - 2*x1*x2 + x2^2")).is_sos);
  CHECK(sos_feasibility(Polynomial(2)).is_sos);  // zero polynomial
}

TEST_CASE("transcription: smallest constant shift onto the SOS cone") {
  // min xi s.t. x^2 - 2x + xi is SOS; completing the square needs xi >= 1
  ConicBuilder bld;
  const int xi = bld.add_vars(1);
  bld.set_linear_cost(xi, 1.0);
  AffinePolyMap m;
  m.offset = parse_polynomial("x1^2 - 2*x1", 1);
  m.cols = {{xi, Polynomial::constant(1, 1.0)}};
  auto h = transcribe_sos(m, 1, 2, bld);
  auto sol = solve(bld.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.primal_obj == doctest::Approx(1.0).epsilon(1e-7));
  // Gram matrix of the optimum is the rank-one (x - 1)^2 matrix
  const auto Q = smat(sol.x.segment(h.gram_var_start, 3), 2);
  CHECK(Q(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(Q(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("transcription rejects degree overflow") {
  ConicBuilder bld;
  AffinePolyMap m;
  m.offset = parse_polynomial("x1^4");
  CHECK_THROWS_AS(transcribe_sos(m, 1, 2, bld), std::invalid_argument);
}
