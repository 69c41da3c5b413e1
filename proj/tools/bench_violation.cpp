// Timing comparison for the violation estimators: OpenMP sampling vs the
// serial reference, and signed distance vs coefficient-space projection,
// over random degree-6 SOS instances at n = 2, 3, 4.
#include <chrono>
#include <cstdio>
#include <random>

#include "sqsos/violation.hpp"

using namespace sqsos;

namespace {

Polynomial random_sos(int nvars, int half_degree, std::mt19937_64& rng) {
  std::normal_distribution<double> coef(0.0, 1.0);
  const auto basis = monomials_up_to(nvars, half_degree);
  Polynomial p(nvars);
  for (int k = 0; k < 3; ++k) {
    Polynomial q(nvars);
    for (const auto& alpha : basis) q.set_coeff(alpha, coef(rng));
    p += q * q;
  }
  return p;
}

template <typename Fn>
double time_ms(Fn&& fn, int repeats) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  const std::chrono::duration<double, std::milli> dt =
      std::chrono::steady_clock::now() - t0;
  return dt.count() / repeats;
}

}  // namespace

int main() {
  std::mt19937_64 rng(12345);
  ViolationConfig scfg;
  scfg.method = ViolationConfig::Method::Sampling;
  scfg.sample_count = 200000;
  scfg.rng_seed = 99;

  std::printf("n  instances  samp_par_ms  samp_ser_ms  speedup   sd_ms  proj_ms\n");
  for (int n = 2; n <= 4; ++n) {
    PolyVec pv;
    for (int i = 0; i < 4; ++i) pv.push_back(random_sos(n, 3, rng));

    const double par = time_ms([&] { theta_sampling(pv, scfg); }, 3);
    const double ser = time_ms([&] { theta_sampling_serial(pv, scfg); }, 3);
    const double sd = time_ms(
        [&] { theta_signed_distance(pv, default_interior(pv), 1e-6); }, 3);
    const double proj = time_ms([&] { theta_projection(pv); }, 3);

    // the parallel path must agree bit-for-bit with the serial reference
    const double tp = theta_sampling(pv, scfg).theta;
    const double ts = theta_sampling_serial(pv, scfg).theta;
    if (tp != ts) {
      std::printf("MISMATCH at n=%d: parallel %.17g vs serial %.17g\n", n, tp, ts);
      return 1;
    }
    std::printf("%d  %9zu  %11.2f  %11.2f  %7.2fx  %6.1f  %7.1f\n", n,
                pv.size(), par, ser, ser / par, sd, proj);
  }
  return 0;
}
