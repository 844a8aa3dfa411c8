// Target masking for language-aware training. The three sequences share one
// length: position i of Y_A keeps Y[i] when it is a language-A token and
// carries the mask_B placeholder otherwise, and symmetrically for Y_B.
#pragma once

#include <string>
#include <vector>

#include "lae/util.hpp"
#include "lae/vocab.hpp"

namespace lae {

struct MaskedTargets {
  std::vector<int> y;    // global target
  std::vector<int> y_a;  // language-B tokens replaced by mask_B
  std::vector<int> y_b;  // language-A tokens replaced by mask_A
};

inline MaskedTargets mask_targets(const std::vector<int>& y, const Vocabulary& vocab,
                                  const std::string& utt_id = "") {
  MaskedTargets m;
  m.y = y;
  m.y_a.reserve(y.size());
  m.y_b.reserve(y.size());
  for (int id : y) {
    if (id < 0 || id >= vocab.size() || vocab.is_special(id))
      throw DataError("target contains a special or out-of-range id" +
                      (utt_id.empty() ? std::string() : " in utterance " + utt_id));
    if (vocab.lang(id) == Lang::kA) {
      m.y_a.push_back(id);
      m.y_b.push_back(Vocabulary::kMaskA);
    } else {
      m.y_a.push_back(Vocabulary::kMaskB);
      m.y_b.push_back(id);
    }
  }
  return m;
}

// Inverse of masking: pick the non-mask entry per position.
inline std::vector<int> reconstruct_targets(const MaskedTargets& m) {
  std::vector<int> y;
  y.reserve(m.y_a.size());
  for (size_t i = 0; i < m.y_a.size(); ++i)
    y.push_back(m.y_a[i] == Vocabulary::kMaskB ? m.y_b[i] : m.y_a[i]);
  return y;
}

}  // namespace lae
