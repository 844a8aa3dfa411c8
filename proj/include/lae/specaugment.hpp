// SpecAugment: zero out n_time contiguous time spans and n_freq contiguous
// frequency bands; span widths are uniform in [0, max] and positions uniform
// over the valid range. Unmasked cells are untouched.
#pragma once

#include <algorithm>
#include <random>

#include "lae/tensor.hpp"

namespace lae {

struct SpecAugmentConfig {
  int n_time = 2;
  int n_freq = 2;
  int max_time_width = 10;
  int max_freq_width = 4;
};

inline TensorF spec_augment(const TensorF& features, const SpecAugmentConfig& cfg,
                            std::mt19937_64& rng) {
  TensorF out = features;
  const int T = out.rows(), F = out.cols();
  const int max_t = std::min(cfg.max_time_width, T);
  const int max_f = std::min(cfg.max_freq_width, F);
  for (int m = 0; m < cfg.n_time; ++m) {
    const int w = std::uniform_int_distribution<int>(0, max_t)(rng);
    const int start = std::uniform_int_distribution<int>(0, T - w)(rng);
    for (int t = start; t < start + w; ++t)
      for (int f = 0; f < F; ++f) out.at(t, f) = 0.0f;
  }
  for (int m = 0; m < cfg.n_freq; ++m) {
    const int w = std::uniform_int_distribution<int>(0, max_f)(rng);
    const int start = std::uniform_int_distribution<int>(0, F - w)(rng);
    for (int t = 0; t < T; ++t)
      for (int f = start; f < start + w; ++f) out.at(t, f) = 0.0f;
  }
  return out;
}

}  // namespace lae
