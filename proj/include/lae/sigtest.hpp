// Matched-pairs significance test over per-utterance error-count
// differences: z = mean(d) / (std(d)/sqrt(n)) with a two-sided normal
// p-value, plus a seeded sign-permutation p-value as a robustness companion.
#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "lae/util.hpp"

namespace lae {

struct MapssweResult {
  double z = 0;
  double p_normal = 1.0;
  double p_perm = 1.0;
  double mean_diff = 0;
  int n = 0;
};

inline MapssweResult mapsswe_test(const std::vector<int64_t>& errors_sys1,
                                  const std::vector<int64_t>& errors_sys2,
                                  uint64_t seed = 0x5eed, int resamples = 10000) {
  if (errors_sys1.size() != errors_sys2.size())
    throw DataError("mapsswe_test: systems scored different utterance sets");
  const int n = static_cast<int>(errors_sys1.size());
  if (n < 2) throw DataError("mapsswe_test: needs at least 2 paired utterances");

  std::vector<double> d(n);
  double mean = 0;
  for (int i = 0; i < n; ++i) {
    d[i] = static_cast<double>(errors_sys1[i]) - static_cast<double>(errors_sys2[i]);
    mean += d[i];
  }
  mean /= n;
  double var = 0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= (n - 1);
  const double sd = std::sqrt(var);

  MapssweResult r;
  r.n = n;
  r.mean_diff = mean;
  if (sd == 0.0) {
    // all differences identical; identical systems give p = 1 by convention
    r.z = mean == 0.0 ? 0.0 : (mean > 0 ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity());
    r.p_normal = mean == 0.0 ? 1.0 : 0.0;
    r.p_perm = mean == 0.0 ? 1.0 : 1.0 / (resamples + 1.0);
    return r;
  }
  r.z = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p_normal = std::erfc(std::abs(r.z) / std::sqrt(2.0));

  auto rng = make_rng(seed, "mapsswe-perm");
  std::uniform_int_distribution<int> coin(0, 1);
  int hits = 0;
  const double target = std::abs(mean);
  for (int rep = 0; rep < resamples; ++rep) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += coin(rng) ? d[i] : -d[i];
    m /= n;
    if (std::abs(m) >= target - 1e-12) ++hits;
  }
  r.p_perm = (hits + 1.0) / (resamples + 1.0);
  return r;
}

}  // namespace lae
