// Synthetic corpus generation, feature/manifest round trips, and the
// Witten-Bell n-gram model (hand-computed probabilities included).
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "lae/corpus.hpp"
#include "lae/ngram.hpp"
#include "lae/simulate.hpp"
#include "test_util.hpp"

using namespace lae;
namespace fs = std::filesystem;

namespace {

SimSpec small_spec() {
  SimSpec s;
  s.tokens_per_lang = 5;
  s.feat_dim = 8;
  s.dur_min = 6;
  s.dur_max = 9;
  s.noise_std = 0.1f;
  s.utt_tokens_min = 2;
  s.utt_tokens_max = 5;
  s.train_mono_a = 20;
  s.train_mono_b = 20;
  s.train_cs = 10;
  s.train_simu_cs = 4;
  s.eval_mono_a = 2;
  s.eval_mono_b = 2;
  s.eval_cs = 2;
  s.seed = 2468;
  return s;
}

double min_prototype_distance(const SyntheticLanguage& lang) {
  double best = 1e30;
  for (size_t i = 0; i < lang.prototypes.size(); ++i)
    for (size_t j = i + 1; j < lang.prototypes.size(); ++j) {
      double sq = 0;
      for (int d = 0; d < lang.feat_dim; ++d) {
        const double diff = lang.prototypes[i][d] - lang.prototypes[j][d];
        sq += diff * diff;
      }
      best = std::min(best, std::sqrt(sq));
    }
  return best;
}

}  // namespace

TEST_CASE("prototype placement honors the 4-sigma separation invariant") {
  auto lang = make_language(Lang::kA, 20, 16, 8, 12, 0.1f, 7);
  CHECK(lang.prototypes.size() == 20);
  CHECK(min_prototype_distance(lang) > 4.0 * 0.1);
  // language B occupies the other half of the feature space
  auto lang_b = make_language(Lang::kB, 20, 16, 8, 12, 0.1f, 7);
  for (const auto& p : lang_b.prototypes)
    for (int d = 0; d < 8; ++d) CHECK(p[d] == 0.0f);
  for (const auto& p : lang.prototypes)
    for (int d = 8; d < 16; ++d) CHECK(p[d] == 0.0f);
}

TEST_CASE("noiseless monolingual render is exact and recoverable") {
  auto lang = make_language(Lang::kA, 6, 8, 4, 6, 0.0f, 11);
  auto lang_b = make_language(Lang::kB, 6, 8, 4, 6, 0.0f, 11);
  Utterance u = gen_monolingual(lang, 6, 3, 6, 99, "m0");
  REQUIRE_FALSE(u.targets.empty());
  // frame-level nearest prototype recovers the token at every frame
  for (size_t k = 0; k < u.targets.size(); ++k) {
    const int start = u.boundaries[k];
    const int end = k + 1 < u.boundaries.size() ? u.boundaries[k + 1] : u.features.rows();
    for (int t = start; t < end; ++t) {
      auto [l, tok] = nearest_prototype(lang, lang_b, &u.features.data[size_t(t) * 8]);
      CHECK(l == Lang::kA);
      CHECK(token_to_vocab_id(l, tok, 6) == u.targets[k]);
    }
  }
  // all energy in the A half
  for (int t = 0; t < u.features.rows(); ++t)
    for (int d = 4; d < 8; ++d) CHECK(u.features.at(t, d) == 0.0f);
  // determinism
  Utterance v = gen_monolingual(lang, 6, 3, 6, 99, "m0");
  CHECK(v.features.data == u.features.data);
  CHECK(v.targets == u.targets);
}

TEST_CASE("splice concatenates features, targets, tags, and boundaries") {
  auto lang_a = make_language(Lang::kA, 4, 8, 4, 6, 0.05f, 13);
  auto lang_b = make_language(Lang::kB, 4, 8, 4, 6, 0.05f, 13);
  Utterance a = gen_monolingual(lang_a, 4, 2, 3, 1, "a");
  Utterance b = gen_monolingual(lang_b, 4, 2, 3, 2, "b");
  Utterance s = splice_code_switch({a, b}, 1000, "ab");
  CHECK(s.features.rows() == a.features.rows() + b.features.rows());
  REQUIRE(s.targets.size() == a.targets.size() + b.targets.size());
  for (size_t i = 0; i < a.targets.size(); ++i) {
    CHECK(s.targets[i] == a.targets[i]);
    CHECK(s.boundaries[i] == a.boundaries[i]);
    CHECK(s.tags[i] == Lang::kA);
  }
  for (size_t i = 0; i < b.targets.size(); ++i) {
    CHECK(s.targets[a.targets.size() + i] == b.targets[i]);
    CHECK(s.boundaries[a.targets.size() + i] == b.boundaries[i] + a.features.rows());
    CHECK(s.tags[a.targets.size() + i] == Lang::kB);
  }
  // identity with an empty second segment
  Utterance empty;
  Utterance same = splice_code_switch({a, empty}, 1000, "a2");
  CHECK(same.features.data == a.features.data);
  CHECK(same.targets == a.targets);
  // alternation and cap enforcement
  CHECK_THROWS_AS(splice_code_switch({a, a}, 1000, "aa"), DataError);
  CHECK_THROWS_AS(splice_code_switch({a, b}, 3, "cap"), DataError);
}

TEST_CASE("separability: nearest-prototype accuracy >= 99% at sigma = d_min/4") {
  auto base_a = make_language(Lang::kA, 10, 16, 6, 9, 0.1f, 17);
  auto base_b = make_language(Lang::kB, 10, 16, 6, 9, 0.1f, 17);
  const double d_min = std::min(min_prototype_distance(base_a), min_prototype_distance(base_b));
  SyntheticLanguage noisy_a = base_a, noisy_b = base_b;
  noisy_a.noise_std = noisy_b.noise_std = static_cast<float>(0.25 * d_min);
  int64_t frames = 0, hits = 0;
  for (int i = 0; i < 50; ++i) {
    const bool use_a = i % 2 == 0;
    Utterance u = gen_monolingual(use_a ? noisy_a : noisy_b, 10, 3, 6, 1000 + i, "s");
    for (size_t k = 0; k < u.targets.size(); ++k) {
      const int start = u.boundaries[k];
      const int end = k + 1 < u.boundaries.size() ? u.boundaries[k + 1] : u.features.rows();
      for (int t = start; t < end; ++t) {
        auto [l, tok] = nearest_prototype(noisy_a, noisy_b, &u.features.data[size_t(t) * 16]);
        ++frames;
        if (token_to_vocab_id(l, tok, 10) == u.targets[k]) ++hits;
      }
    }
  }
  CHECK(double(hits) / double(frames) >= 0.99);
}

TEST_CASE("language-subspace disjointness under noise") {
  auto lang_a = make_language(Lang::kA, 8, 16, 8, 12, 0.2f, 23);
  for (int i = 0; i < 20; ++i) {
    Utterance u = gen_monolingual(lang_a, 8, 4, 8, 5000 + i, "d");
    const int T = u.features.rows();
    double mean_b = 0;
    for (int t = 0; t < T; ++t)
      for (int d = 8; d < 16; ++d) mean_b += u.features.at(t, d);
    mean_b = std::abs(mean_b / (T * 8.0));
    CHECK(mean_b <= 3.0 * 0.2 / std::sqrt(double(T)));
  }
}

TEST_CASE("gen_corpus: counts, id uniqueness, partition disjointness, determinism") {
  SimSpec spec = small_spec();
  GeneratedCorpus c1 = gen_corpus(spec);
  CHECK(c1.utterances.size() == 20 + 20 + 10 + 4 + 2 + 2 + 2);
  std::set<std::string> ids;
  std::map<std::string, int> per_partition;
  for (const auto& u : c1.utterances) {
    CHECK(ids.insert(u.utt_id).second);  // unique ids
    ++per_partition[u.partition];
    CHECK(utterance_class(u.tags) == (u.partition.find("CS") != std::string::npos ? 2
                                      : u.partition.find("mono-A") != std::string::npos ? 0 : 1));
  }
  CHECK(per_partition["train-CS"] == 10);
  CHECK(per_partition["train-simu-CS"] == 4);

  // token unigram counts and feature bytes reproduce exactly under the seed
  GeneratedCorpus c2 = gen_corpus(spec);
  std::map<int, int> uni1, uni2;
  for (const auto& u : c1.utterances)
    for (int id : u.targets) ++uni1[id];
  for (const auto& u : c2.utterances)
    for (int id : u.targets) ++uni2[id];
  CHECK(uni1 == uni2);
  for (size_t i = 0; i < c1.utterances.size(); ++i)
    CHECK(c1.utterances[i].features.data == c2.utterances[i].features.data);

  // native CS utterances switch language mid-utterance within the cap
  for (const auto& u : c1.utterances) {
    CHECK(u.features.rows() <= spec.cap_frames);
    if (u.partition == "train-CS") {
      int switches = 0;
      for (size_t i = 1; i < u.tags.size(); ++i)
        if (u.tags[i] != u.tags[i - 1]) ++switches;
      CHECK(switches >= 1);
      CHECK(switches <= spec.cs_switches_max);
    }
  }
}

TEST_CASE("feature files and manifests round-trip") {
  const fs::path dir = fs::temp_directory_path() / "lae_test_io";
  fs::remove_all(dir);
  auto rng = std::mt19937_64(3);
  TensorF feats = lae::testutil::random_tensor<float>({9, 4}, rng);
  write_features(dir / "u0.laef", feats);
  TensorF back = read_features(dir / "u0.laef");
  CHECK(back.shape == feats.shape);
  CHECK(back.data == feats.data);

  std::vector<ManifestRecord> records(2);
  records[0] = {"u0", "train-mono-A", "u0.laef", {3, 4}, {Lang::kA, Lang::kA}};
  records[1] = {"u1", "eval-CS", "u1.laef", {3, 7}, {Lang::kA, Lang::kB}};
  write_manifest(dir / "manifest.tsv", records);
  auto parsed = read_manifest(dir / "manifest.tsv");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].utt_id == "u0");
  CHECK(parsed[1].targets == std::vector<int>{3, 7});
  CHECK(parsed[1].tags == std::vector<Lang>{Lang::kA, Lang::kB});

  Utterance u = load_utterance(dir, parsed[0]);
  CHECK(u.features.data == feats.data);
  CHECK_THROWS_AS(read_features(dir / "missing.laef"), DataError);
}

// --- n-gram ------------------------------------------------------------------

TEST_CASE("witten-bell bigram on the two-token corpus matches hand computation") {
  Vocabulary vocab = Vocabulary::synthetic(1, 1);  // a00 = id 3, b00 = id 4
  NgramModel m = NgramModel::train({{3, 4}}, 2, vocab);
  // prediction vocabulary: {a00, b00, </s>, <unk>} so V = 4
  // unigram: P(w) = (c + 3*(1/4)) / (3 + 3) = 7/24 for each seen token
  // bigram [a]: P(b|a) = (1 + 1*P(b)) / (1 + 1) = 31/48
  const double p_uni = 7.0 / 24.0;
  const double p_cond = 31.0 / 48.0;
  CHECK(m.cond_logp({}, 4) == Catch::Approx(std::log(p_uni)).epsilon(1e-12));
  CHECK(m.cond_logp({3}, 4) == Catch::Approx(std::log(p_cond)).epsilon(1e-12));
  CHECK(m.sequence_logp({3, 4}) == Catch::Approx(3.0 * std::log(p_cond)).epsilon(1e-12));
  // retraining reproduces the same tables
  NgramModel m2 = NgramModel::train({{3, 4}}, 2, vocab);
  CHECK(m2.sequence_logp({3, 4}) == m.sequence_logp({3, 4}));
  CHECK(m2.cond_logp({4}, NgramModel::kEos) == m.cond_logp({4}, NgramModel::kEos));
}

TEST_CASE("every stored context normalizes over the prediction vocabulary") {
  Vocabulary vocab = Vocabulary::synthetic(3, 3);
  std::vector<std::vector<int>> corpus = {{3, 4, 6}, {6, 7, 3}, {3, 4}, {8, 5, 5, 3}, {4}};
  for (int order : {1, 2, 3}) {
    NgramModel m = NgramModel::train(corpus, order, vocab);
    for (const auto& ctx : m.stored_contexts()) {
      double sum = 0;
      for (int w : m.prediction_vocab()) sum += std::exp(m.cond_logp(ctx, w));
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("score decomposition and unknown-token flooring") {
  Vocabulary vocab = Vocabulary::synthetic(3, 3);
  std::vector<std::vector<int>> corpus = {{3, 4, 6}, {3, 4}, {7, 8}};
  NgramModel m = NgramModel::train(corpus, 3, vocab);
  const double s_xy = m.sequence_logp({3, 4});
  const double s_x = m.sequence_logp({3});
  const double expect = m.cond_logp({NgramModel::kBos, 3}, 4) +
                        m.cond_logp({NgramModel::kBos, 3, 4}, NgramModel::kEos) -
                        m.cond_logp({NgramModel::kBos, 3}, NgramModel::kEos);
  CHECK(s_xy - s_x == Catch::Approx(expect).epsilon(1e-12));
  // empty sequence scores only the end-of-sentence term
  CHECK(m.sequence_logp({}) ==
        Catch::Approx(m.cond_logp({NgramModel::kBos}, NgramModel::kEos)).epsilon(1e-12));
  // the mask token maps to the reserved unk class: finite and low
  const double mask_lp = m.token_logp({3}, Vocabulary::kMaskA);
  CHECK(std::isfinite(mask_lp));
  CHECK(mask_lp < m.token_logp({3}, 4));
}

TEST_CASE("unigram model over a balanced corpus approaches uniform") {
  // long sentences keep the </s> mass from diluting the per-token estimate
  Vocabulary vocab = Vocabulary::synthetic(4, 4);
  const int V = 8, L = 64;
  std::vector<std::vector<int>> corpus;
  auto rng = std::mt19937_64(7);
  for (int i = 0; i < 2000; ++i) {
    std::vector<int> sent;
    for (int k = 0; k < L; ++k)
      sent.push_back(3 + std::uniform_int_distribution<int>(0, V - 1)(rng));
    corpus.push_back(std::move(sent));
  }
  NgramModel m = NgramModel::train(corpus, 1, vocab);
  for (int id = 3; id < 3 + V; ++id)
    CHECK(std::abs(std::exp(m.cond_logp({}, id)) - 1.0 / V) / (1.0 / V) < 0.05);
  // perplexity of a fresh uniform sample is close to the source branching
  std::vector<std::vector<int>> held;
  for (int i = 0; i < 100; ++i) {
    std::vector<int> sent;
    for (int k = 0; k < L; ++k)
      sent.push_back(3 + std::uniform_int_distribution<int>(0, V - 1)(rng));
    held.push_back(std::move(sent));
  }
  const double ppl = m.perplexity(held);
  CHECK(ppl > 1.0);
  CHECK(std::abs(ppl - double(V)) / V < 0.10);
}

TEST_CASE("perplexity: degenerate corpus near 1, train <= held-out") {
  Vocabulary vocab = Vocabulary::synthetic(3, 3);
  std::vector<std::vector<int>> rep(50, std::vector<int>{3, 4, 5});
  NgramModel m = NgramModel::train(rep, 3, vocab);
  CHECK(m.perplexity(rep) < 1.35);  // smoothing slack only

  std::vector<std::vector<int>> train = {{3, 4, 6}, {3, 4}, {7, 8, 3}, {5, 6}};
  std::vector<std::vector<int>> held = {{3, 5, 8}, {6, 6}, {4, 7}};
  NgramModel m2 = NgramModel::train(train, 3, vocab);
  CHECK(m2.perplexity(train) <= m2.perplexity(held));
}

TEST_CASE("adding a sentence never lowers that sentence's probability") {
  Vocabulary vocab = Vocabulary::synthetic(3, 3);
  auto rng = std::mt19937_64(17);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<int>> corpus;
    const int n = 2 + trial % 4;
    for (int i = 0; i < n; ++i) {
      std::vector<int> sent(1 + std::uniform_int_distribution<int>(0, 4)(rng));
      for (auto& v : sent) v = 3 + std::uniform_int_distribution<int>(0, 5)(rng);
      corpus.push_back(std::move(sent));
    }
    std::vector<int> probe(1 + std::uniform_int_distribution<int>(0, 3)(rng));
    for (auto& v : probe) v = 3 + std::uniform_int_distribution<int>(0, 5)(rng);
    for (int order : {1, 2, 3}) {
      NgramModel before = NgramModel::train(corpus, order, vocab);
      auto extended = corpus;
      extended.push_back(probe);
      NgramModel after = NgramModel::train(extended, order, vocab);
      CHECK(after.sequence_logp(probe) >= before.sequence_logp(probe) - 1e-12);
    }
  }
}

TEST_CASE("arpa round trip preserves scores") {
  Vocabulary vocab = Vocabulary::synthetic(3, 3);
  std::vector<std::vector<int>> corpus = {{3, 4, 6}, {6, 7, 3}, {3, 4}, {8, 5, 5, 3}};
  NgramModel m = NgramModel::train(corpus, 3, vocab);
  const fs::path path = fs::temp_directory_path() / "lae_test_lm.arpa";
  m.save_arpa(path, vocab);
  NgramModel loaded = NgramModel::load_arpa(path, vocab);
  CHECK(loaded.order() == 3);
  auto rng = std::mt19937_64(29);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> seq(std::uniform_int_distribution<int>(0, 5)(rng));
    for (auto& v : seq) v = 3 + std::uniform_int_distribution<int>(0, 5)(rng);
    CHECK(loaded.sequence_logp(seq) == Catch::Approx(m.sequence_logp(seq)).margin(1e-8));
  }
}
