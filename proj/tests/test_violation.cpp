#include <cmath>

#include <Eigen/Dense>
#include <random>

#include "doctest.h"
#include "sqsos/soscone.hpp"
#include "sqsos/violation.hpp"

using namespace sqsos;
using Eigen::MatrixXd;

namespace {

Polynomial random_gram_sos(int n, int two_d, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  const GramMap map = build_gram_map(n, two_d);
  const int side = map.basis.size();
  MatrixXd A(side, side);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) A(i, j) = nd(rng);
  return reconstruct(map, MatrixXd(A.transpose() * A));
}

Polynomial random_poly(int n, int d, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Polynomial p(n);
  for (const auto& alpha : monomials_up_to(n, d)) p.set_coeff(alpha, nd(rng));
  return p;
}

}  // namespace

TEST_CASE("signed distance: membership, shift distance, Motzkin") {
  // already in the cone: the distance is not positive
  auto in_cone = theta_signed_distance({parse_polynomial("x1^2 + 1")},
                                       default_interior({parse_polynomial("x1^2 + 1")}),
                                       1e-6);
  CHECK(in_cone.theta == 0.0);
  CHECK(in_cone.per_constraint[0] <= 1e-6);

  // -x^2 + r(1 + x^2) = (r-1)x^2 + r is SOS exactly when r >= 1
  auto shifted = theta_signed_distance({parse_polynomial("-x1^2")},
                                       {parse_polynomial("1 + x1^2")}, 1e-6);
  CHECK(shifted.theta == doctest::Approx(1.0).epsilon(1e-6));

  auto motzkin = theta_signed_distance(
      {parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")},
      default_interior({parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")}),
      1e-6);
  CHECK(motzkin.theta > 1e-4);
}

TEST_CASE("signed distance: theta is zero iff every entry is within eps") {
  PolyVec p = {parse_polynomial("x1^2", 2), parse_polynomial("-x1^2 - x2^2", 2)};
  auto rep = theta_signed_distance(p, default_interior(p), 1e-6);
  CHECK(rep.theta > 0.0);
  CHECK(rep.per_constraint.size() == 2);
  CHECK(rep.per_constraint[0] <= 1e-6);
  CHECK(rep.per_constraint[1] > 1e-6);
  CHECK(rep.theta == doctest::Approx(rep.per_constraint[1]));
}

TEST_CASE("projection: SOS inputs, constant gap, cross-method agreement") {
  auto in_cone = theta_projection({parse_polynomial("x1^2 + 2*x1*x2 + x2^2", 2)});
  CHECK(in_cone.theta <= 1e-8);

  // nearest SOS polynomial to the constant -1 is 0
  auto c = theta_projection({Polynomial::constant(1, -1.0)});
  CHECK(c.theta == doctest::Approx(1.0).epsilon(1e-6));

  std::mt19937 rng(101);
  int positives = 0;
  for (int trial = 0; trial < 30; ++trial) {
    PolyVec p;
    if (trial % 2 == 0)
      p = {random_gram_sos(2, 4, rng)};
    else
      p = {random_poly(2, 4, rng)};
    const auto proj = theta_projection(p);
    const auto sd = theta_signed_distance(p, default_interior(p), 1e-6);
    INFO("trial ", trial, " proj ", proj.theta, " sd ", sd.theta);
    CHECK((proj.theta <= 1e-6) == (sd.theta == 0.0));
    if (sd.theta > 0.0) ++positives;
  }
  CHECK(positives >= 5);  // the random mix actually exercises both branches
}

TEST_CASE("signed distance soundness against the membership oracle") {
  std::mt19937 rng(211);
  int feasible = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Polynomial p = trial % 3 == 0 ? random_poly(2, 4, rng)
                                        : random_gram_sos(2, 4, rng);
    const auto sd = theta_signed_distance({p}, default_interior({p}), 1e-6);
    if (sd.theta == 0.0) {
      const auto fs = sos_feasibility(p);
      INFO("trial ", trial, ": ", fs.diagnostics);
      CHECK(fs.is_sos);
      ++feasible;
    }
  }
  CHECK(feasible >= 10);
}

TEST_CASE("signed distance decreases along the interior direction") {
  std::mt19937 rng(307);
  std::uniform_real_distribution<double> su(0.1, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Polynomial p = random_poly(2, 4, rng);
    const PolyVec s = default_interior({p});
    const double sigma = su(rng);
    const auto base = theta_signed_distance({p}, s, 1e-6);
    const auto moved = theta_signed_distance({p + sigma * s[0]}, s, 1e-6);
    CHECK(moved.theta <= base.theta + 1e-7);
  }
}

TEST_CASE("sampling: analytic minima and false negatives") {
  ViolationConfig cfg;
  cfg.method = ViolationConfig::Method::Sampling;
  cfg.sample_count = 20000;
  cfg.rng_seed = 7;
  auto rep = theta_sampling({parse_polynomial("x1^2 - 0.5")}, cfg);
  CHECK(rep.theta == doctest::Approx(0.5).epsilon(0.01));
  CHECK(theta_sampling({parse_polynomial("x1^2")}, cfg).theta == 0.0);

  // Motzkin is nonnegative, so sampling misses its non-membership
  ViolationConfig wide = cfg;
  wide.sample_count = 100000;
  wide.hypercube_radius = 2.0;
  auto motzkin = theta_sampling(
      {parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")}, wide);
  CHECK(motzkin.theta == 0.0);
}

TEST_CASE("sampling is deterministic and the parallel path matches serial") {
  std::mt19937 rng(401);
  const PolyVec p = {random_poly(3, 4, rng), random_poly(3, 2, rng)};
  ViolationConfig cfg;
  cfg.sample_count = 5000;
  cfg.rng_seed = 99;
  const auto a = theta_sampling(p, cfg);
  const auto b = theta_sampling(p, cfg);
  const auto c = theta_sampling_serial(p, cfg);
  CHECK(a.theta == b.theta);
  CHECK(a.theta == c.theta);
  for (size_t j = 0; j < p.size(); ++j) {
    CHECK(a.per_constraint[j] == b.per_constraint[j]);
    CHECK(a.per_constraint[j] == c.per_constraint[j]);
  }
  ViolationConfig other = cfg;
  other.rng_seed = 100;
  CHECK(theta_sampling(p, other).theta != a.theta);
}

TEST_CASE("a positive sampling theta implies a positive signed distance") {
  std::mt19937 rng(503);
  ViolationConfig cfg;
  cfg.sample_count = 2000;
  cfg.rng_seed = 1;
  int positive = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const PolyVec p = {random_poly(2, 4, rng)};
    const auto samp = theta_sampling(p, cfg);
    if (samp.theta > 0.0) {
      const auto sd = theta_signed_distance(p, default_interior(p), 1e-6);
      CHECK(sd.theta > 0.0);
      ++positive;
    }
  }
  CHECK(positive >= 5);
}

TEST_CASE("config validation and dispatch") {
  ViolationConfig bad;
  bad.eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ViolationConfig{};
  bad.sample_count = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ViolationConfig cfg;  // defaults: signed distance
  const PolyVec p = {parse_polynomial("-x1^2")};
  auto rep = estimate_violation(p, cfg);
  CHECK(rep.method == ViolationConfig::Method::SignedDistance);
  CHECK(rep.theta > 0.0);
  cfg.method = ViolationConfig::Method::Projection;
  CHECK(estimate_violation(p, cfg).method == ViolationConfig::Method::Projection);
  // odd-degree entries cannot be projected onto an even-degree Gram basis
  CHECK_THROWS_AS(theta_projection({parse_polynomial("x1^3")}), std::runtime_error);
}
