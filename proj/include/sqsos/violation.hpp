#ifndef SQSOS_VIOLATION_HPP
#define SQSOS_VIOLATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sqsos/poly.hpp"

namespace sqsos {

/// How to estimate the violation theta of "every entry of p lies in the
/// SOS cone" at the current iterate.
struct ViolationConfig {
  enum class Method { SignedDistance, Projection, Sampling };
  Method method = Method::SignedDistance;
  double eps = 1e-6;          // feasibility tolerance on the signed distance
  int sample_count = 1000;    // Sampling only
  double hypercube_radius = 1.0;
  std::uint64_t rng_seed = 0;

  void validate() const;  // throws std::invalid_argument
};

std::string to_string(ViolationConfig::Method m);

struct ViolationReport {
  double theta = 0.0;  // always >= 0
  std::vector<double> per_constraint;
  ViolationConfig::Method method = ViolationConfig::Method::SignedDistance;
  std::string diagnostics;
};

/// The strictly interior polynomial zeta' zeta matched to each entry's
/// Gram basis (the default `s` of the signed-distance program).
PolyVec default_interior(const PolyVec& p);

/// Smallest r with p + r (.) s entrywise SOS; theta = max(r*) clamped to
/// zero below eps. Each s_i must be strictly interior to the cone.
ViolationReport theta_signed_distance(const PolyVec& p, const PolyVec& interior,
                                      double eps);

/// Squared coefficient-space distance to the cone, summed over entries.
ViolationReport theta_projection(const PolyVec& p);

/// |min over hypercube samples| per entry, zero when no sample is
/// negative; deterministic in cfg.rng_seed. The parallel variant gives
/// bit-identical results to the serial reference.
ViolationReport theta_sampling(const PolyVec& p, const ViolationConfig& cfg);
ViolationReport theta_sampling_serial(const PolyVec& p, const ViolationConfig& cfg);

/// Dispatch on cfg.method (signed distance uses default_interior(p)).
ViolationReport estimate_violation(const PolyVec& p, const ViolationConfig& cfg);

}  // namespace sqsos

#endif
