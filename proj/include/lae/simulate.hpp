// Synthetic bilingual corpus generation.
//
// Each language owns half of the feature dimensions: language A energizes
// dims [0, F/2), language B dims [F/2, F). A token is rendered as its
// prototype vector repeated for a sampled duration plus isotropic Gaussian
// noise, so a nearest-prototype frame classifier bounds the task difficulty
// from below. Code-switched *training-analog* utterances come in two
// flavors: natively rendered mixed-language sequences (one continuous
// render) and Simu-CS splices of independent monolingual utterances.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lae/corpus.hpp"
#include "lae/tensor.hpp"
#include "lae/util.hpp"
#include "lae/vocab.hpp"

namespace lae {

struct SyntheticLanguage {
  Lang label = Lang::kA;
  int dur_min = 8, dur_max = 12;     // frames per token
  float noise_std = 0.1f;
  int feat_dim = 16;
  std::vector<std::vector<float>> prototypes;  // per token, full F dims (zero outside the half)

  int dim_lo() const { return label == Lang::kA ? 0 : feat_dim / 2; }
  int dim_hi() const { return label == Lang::kA ? feat_dim / 2 : feat_dim; }
};

// Prototype entries are uniform in [-1, 1] within the language's half; a
// prototype is redrawn until it clears the 4-sigma separation invariant.
inline SyntheticLanguage make_language(Lang label, int inventory, int feat_dim, int dur_min,
                                       int dur_max, float noise_std, uint64_t seed) {
  if (feat_dim % 2 != 0) throw ConfigError("feature dimension must be even");
  if (dur_min < 1 || dur_max < dur_min) throw ConfigError("bad duration range");
  SyntheticLanguage lang;
  lang.label = label;
  lang.dur_min = dur_min;
  lang.dur_max = dur_max;
  lang.noise_std = noise_std;
  lang.feat_dim = feat_dim;
  auto rng = make_rng(seed, label == Lang::kA ? "lang-A" : "lang-B");
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  const float min_dist = 4.0f * noise_std;
  const int lo = lang.dim_lo(), hi = lang.dim_hi();
  for (int tok = 0; tok < inventory; ++tok) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::vector<float> proto(feat_dim, 0.0f);
      for (int d = lo; d < hi; ++d) proto[d] = u(rng);
      bool ok = true;
      for (const auto& other : lang.prototypes) {
        float sq = 0;
        for (int d = lo; d < hi; ++d) {
          const float diff = proto[d] - other[d];
          sq += diff * diff;
        }
        if (std::sqrt(sq) <= min_dist) {
          ok = false;
          break;
        }
      }
      if (ok) {
        lang.prototypes.push_back(std::move(proto));
        break;
      }
    }
    if (static_cast<int>(lang.prototypes.size()) != tok + 1)
      throw ConfigError("could not place prototypes with the required separation; "
                        "lower noise_std or the inventory size");
  }
  return lang;
}

namespace detail {

inline void render_token(const SyntheticLanguage& lang, int token, std::mt19937_64& rng,
                         std::vector<float>& out, int feat_dim) {
  std::uniform_int_distribution<int> dur_dist(lang.dur_min, lang.dur_max);
  std::normal_distribution<float> noise(0.0f, lang.noise_std);
  const int dur = dur_dist(rng);
  const auto& proto = lang.prototypes.at(token);
  for (int t = 0; t < dur; ++t)
    for (int d = 0; d < feat_dim; ++d) out.push_back(proto[d] + noise(rng));
}

inline TensorF to_features(std::vector<float> flat, int feat_dim) {
  const int T = static_cast<int>(flat.size()) / feat_dim;
  return TensorF({T, feat_dim}, std::move(flat));
}

}  // namespace detail

// Vocabulary ids: language A tokens occupy [3, 3+|A|), language B tokens
// [3+|A|, 3+|A|+|B|).
inline int token_to_vocab_id(Lang lang, int token, int inventory_a) {
  return lang == Lang::kA ? 3 + token : 3 + inventory_a + token;
}

inline Utterance gen_monolingual(const SyntheticLanguage& lang, int inventory_a, int tokens_min,
                                 int tokens_max, uint64_t seed, const std::string& utt_id) {
  auto rng = std::mt19937_64(seed);
  std::uniform_int_distribution<int> count_dist(tokens_min, tokens_max);
  std::uniform_int_distribution<int> tok_dist(0, static_cast<int>(lang.prototypes.size()) - 1);
  const int n = count_dist(rng);
  Utterance u;
  u.utt_id = utt_id;
  std::vector<float> flat;
  for (int i = 0; i < n; ++i) {
    const int tok = tok_dist(rng);
    u.boundaries.push_back(static_cast<int>(flat.size()) / lang.feat_dim);
    detail::render_token(lang, tok, rng, flat, lang.feat_dim);
    u.targets.push_back(token_to_vocab_id(lang.label, tok, inventory_a));
    u.tags.push_back(lang.label);
  }
  u.features = detail::to_features(std::move(flat), lang.feat_dim);
  return u;
}

// Natively rendered code-switch: one continuous render whose token sequence
// alternates language segments (switch count sampled uniformly).
inline Utterance gen_native_cs(const SyntheticLanguage& lang_a, const SyntheticLanguage& lang_b,
                               int tokens_min, int tokens_max, int switches_min, int switches_max,
                               uint64_t seed, const std::string& utt_id) {
  auto rng = std::mt19937_64(seed);
  std::uniform_int_distribution<int> count_dist(tokens_min, tokens_max);
  const int n = std::max(2, count_dist(rng));
  const int sw_lo = std::max(1, std::min(switches_min, n - 1));
  const int sw_hi = std::max(sw_lo, std::min(switches_max, n - 1));
  const int switches = std::uniform_int_distribution<int>(sw_lo, sw_hi)(rng);
  // choose distinct switch positions among the n-1 gaps
  std::vector<int> gaps(n - 1);
  for (int i = 0; i < n - 1; ++i) gaps[i] = i + 1;
  std::shuffle(gaps.begin(), gaps.end(), rng);
  std::vector<int> cuts(gaps.begin(), gaps.begin() + switches);
  std::sort(cuts.begin(), cuts.end());
  bool start_a = std::uniform_int_distribution<int>(0, 1)(rng) == 0;

  Utterance u;
  u.utt_id = utt_id;
  std::vector<float> flat;
  const int feat_dim = lang_a.feat_dim;
  int seg = 0;
  for (int i = 0; i < n; ++i) {
    while (seg < static_cast<int>(cuts.size()) && i >= cuts[seg]) ++seg;
    const bool use_a = (seg % 2 == 0) == start_a;
    const SyntheticLanguage& lang = use_a ? lang_a : lang_b;
    std::uniform_int_distribution<int> tok_dist(0, static_cast<int>(lang.prototypes.size()) - 1);
    const int tok = tok_dist(rng);
    u.boundaries.push_back(static_cast<int>(flat.size()) / feat_dim);
    detail::render_token(lang, tok, rng, flat, feat_dim);
    u.targets.push_back(
        token_to_vocab_id(lang.label, tok, static_cast<int>(lang_a.prototypes.size())));
    u.tags.push_back(lang.label);
  }
  u.features = detail::to_features(std::move(flat), feat_dim);
  return u;
}

// Concatenates monolingual utterances of alternating languages: features
// along time, targets and tags in order, boundaries re-offset. Empty
// segments act as identity elements and are dropped.
inline Utterance splice_code_switch(const std::vector<Utterance>& all_segments, int cap_frames,
                                    const std::string& utt_id) {
  std::vector<const Utterance*> segs;
  for (const auto& s : all_segments)
    if (!s.targets.empty() || (s.features.rank() == 2 && s.features.rows() > 0)) segs.push_back(&s);
  if (segs.empty()) throw DataError("splice_code_switch: no non-empty segments");
  if (segs.size() == 1) {
    Utterance u = *segs[0];
    u.utt_id = utt_id;
    return u;
  }
  std::vector<Utterance> segments;
  segments.reserve(segs.size());
  for (const auto* s : segs) segments.push_back(*s);
  for (size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].tags.empty() || segments[i - 1].tags.empty())
      throw DataError("splice_code_switch: segment without targets");
    if (segments[i].tags.front() == segments[i - 1].tags.front())
      throw DataError("splice_code_switch: segments must alternate languages");
  }
  int total = 0;
  for (const auto& s : segments) total += s.features.rows();
  if (total > cap_frames)
    throw DataError("splice_code_switch: spliced length " + std::to_string(total) +
                    " exceeds cap " + std::to_string(cap_frames));
  const int feat_dim = segments[0].features.cols();
  Utterance u;
  u.utt_id = utt_id;
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(total) * feat_dim);
  int offset = 0;
  for (const auto& s : segments) {
    flat.insert(flat.end(), s.features.data.begin(), s.features.data.end());
    for (size_t i = 0; i < s.targets.size(); ++i) {
      u.targets.push_back(s.targets[i]);
      u.tags.push_back(s.tags[i]);
      u.boundaries.push_back(s.boundaries[i] + offset);
    }
    offset += s.features.rows();
  }
  u.features = detail::to_features(std::move(flat), feat_dim);
  return u;
}

struct SimSpec {
  int tokens_per_lang = 20;
  int tokens_per_lang_b = 0;  // 0: same size as language A
  int inventory_a() const { return tokens_per_lang; }
  int inventory_b() const { return tokens_per_lang_b > 0 ? tokens_per_lang_b : tokens_per_lang; }
  int feat_dim = 16;
  int dur_min = 8, dur_max = 12;
  float noise_std = 0.1f;
  int utt_tokens_min = 4, utt_tokens_max = 10;
  int cs_switches_min = 1, cs_switches_max = 3;
  int cap_frames = 300;
  int train_mono_a = 2000, train_mono_b = 2000;
  int train_cs = 1000, train_simu_cs = 0;
  int eval_mono_a = 200, eval_mono_b = 200, eval_cs = 200;
  uint64_t seed = 12345;
};

// Simu-CS: splice 2 or 3 freshly generated monolingual utterances with
// alternating languages; retries with new draws if the frame cap is hit.
inline Utterance gen_simu_cs(const SimSpec& spec, const SyntheticLanguage& lang_a,
                             const SyntheticLanguage& lang_b, uint64_t seed,
                             const std::string& utt_id) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    auto rng = std::mt19937_64(splitmix64(seed + attempt));
    const int pieces = std::uniform_int_distribution<int>(2, 3)(rng);
    bool start_a = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    std::vector<Utterance> segs;
    // keep segments on the short side so 2-3 of them usually fit the cap
    const int seg_max = std::max(spec.utt_tokens_min, spec.utt_tokens_max / 2 + 1);
    for (int p = 0; p < pieces; ++p) {
      const bool use_a = (p % 2 == 0) == start_a;
      segs.push_back(gen_monolingual(use_a ? lang_a : lang_b, spec.inventory_a(),
                                     spec.utt_tokens_min, seg_max,
                                     std::uniform_int_distribution<uint64_t>()(rng), utt_id));
    }
    int total = 0;
    for (const auto& s : segs) total += s.features.rows();
    if (total <= spec.cap_frames) return splice_code_switch(segs, spec.cap_frames, utt_id);
  }
  throw DataError("gen_simu_cs: could not fit the frame cap after bounded retries");
}

struct GeneratedCorpus {
  Vocabulary vocab;
  SyntheticLanguage lang_a, lang_b;
  std::vector<Utterance> utterances;  // partition recorded per utterance
};

inline GeneratedCorpus gen_corpus(const SimSpec& spec) {
  GeneratedCorpus c;
  c.vocab = Vocabulary::synthetic(spec.inventory_a(), spec.inventory_b());
  c.lang_a = make_language(Lang::kA, spec.inventory_a(), spec.feat_dim, spec.dur_min,
                           spec.dur_max, spec.noise_std, spec.seed);
  c.lang_b = make_language(Lang::kB, spec.inventory_b(), spec.feat_dim, spec.dur_min,
                           spec.dur_max, spec.noise_std, spec.seed);
  char buf[64];
  auto add = [&](const std::string& partition, int count, auto&& gen) {
    for (int i = 0; i < count; ++i) {
      std::snprintf(buf, sizeof buf, "%s_%05d", partition.c_str(), i);
      const uint64_t seed = derive_seed(spec.seed, partition, static_cast<uint64_t>(i));
      Utterance u = gen(seed, std::string(buf));
      u.partition = partition;
      c.utterances.push_back(std::move(u));
    }
  };
  auto mono = [&](const SyntheticLanguage& lang) {
    return [&](uint64_t seed, const std::string& id) {
      return gen_monolingual(lang, spec.inventory_a(), spec.utt_tokens_min, spec.utt_tokens_max,
                             seed, id);
    };
  };
  auto native_cs = [&](uint64_t seed, const std::string& id) {
    return gen_native_cs(c.lang_a, c.lang_b, spec.utt_tokens_min, spec.utt_tokens_max,
                         spec.cs_switches_min, spec.cs_switches_max, seed, id);
  };
  auto simu_cs = [&](uint64_t seed, const std::string& id) {
    return gen_simu_cs(spec, c.lang_a, c.lang_b, seed, id);
  };
  add("train-mono-A", spec.train_mono_a, mono(c.lang_a));
  add("train-mono-B", spec.train_mono_b, mono(c.lang_b));
  add("train-CS", spec.train_cs, native_cs);
  add("train-simu-CS", spec.train_simu_cs, simu_cs);
  add("eval-mono-A", spec.eval_mono_a, mono(c.lang_a));
  add("eval-mono-B", spec.eval_mono_b, mono(c.lang_b));
  add("eval-CS", spec.eval_cs, native_cs);
  return c;
}

// Nearest-prototype frame classifier over both inventories; used by the
// separability checks.
inline std::pair<Lang, int> nearest_prototype(const SyntheticLanguage& lang_a,
                                              const SyntheticLanguage& lang_b, const float* frame) {
  Lang best_lang = Lang::kA;
  int best_tok = 0;
  float best = std::numeric_limits<float>::max();
  for (const SyntheticLanguage* lang : {&lang_a, &lang_b}) {
    for (size_t k = 0; k < lang->prototypes.size(); ++k) {
      float sq = 0;
      for (int d = 0; d < lang->feat_dim; ++d) {
        const float diff = frame[d] - lang->prototypes[k][d];
        sq += diff * diff;
      }
      if (sq < best) {
        best = sq;
        best_lang = lang->label;
        best_tok = static_cast<int>(k);
      }
    }
  }
  return {best_lang, best_tok};
}

}  // namespace lae
