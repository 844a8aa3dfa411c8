// Token-level n-gram language model with interpolated Witten-Bell smoothing.
//
// P(w | h) = (c(h,w) + N1+(h) * P(w | h')) / (c(h,.) + N1+(h)) where N1+(h)
// is the number of distinct continuations of context h and h' drops the
// oldest symbol; the base case interpolates unigram counts with a uniform
// distribution over the prediction vocabulary (language tokens, </s>, and
// the <unk> class that absorbs specials). Backoff weights
// N1+(h) / (c(h,.) + N1+(h)) let the stored tables reproduce the recursion
// exactly for unseen continuations. Sentences start from a single <s>
// context symbol, which is never predicted.
//
// Serialization is an ARPA-like sorted text format: per order, lines of
// log10 probability, the n-gram tokens, and an optional log10 backoff
// weight for n-grams that also occur as contexts.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lae/ctc.hpp"
#include "lae/io.hpp"
#include "lae/util.hpp"
#include "lae/vocab.hpp"

namespace lae {

class NgramModel : public FusionLm {
 public:
  static constexpr int kEos = -1;  // </s>, predicted
  static constexpr int kUnk = -2;  // reserved class for unknown/special tokens
  static constexpr int kBos = -3;  // <s>, context only

  NgramModel() = default;

  int order() const { return order_; }

  static NgramModel train(const std::vector<std::vector<int>>& transcripts, int order,
                          const Vocabulary& vocab) {
    if (order < 1) throw ConfigError("n-gram order must be >= 1");
    if (transcripts.empty()) throw ConfigError("n-gram training needs transcripts");
    NgramModel m;
    m.order_ = order;
    for (int id = 0; id < vocab.size(); ++id)
      if (!vocab.is_special(id)) m.pred_vocab_.push_back(id);
    m.pred_vocab_.push_back(kEos);
    m.pred_vocab_.push_back(kUnk);

    // counts[k] maps a length-k context to its continuation counts
    std::vector<std::map<std::vector<int>, std::map<int, int>>> counts(order);
    for (const auto& sent : transcripts) {
      std::vector<int> s;
      s.push_back(kBos);
      for (int id : sent) s.push_back(m.map_token(id));
      s.push_back(kEos);
      for (size_t p = 1; p < s.size(); ++p) {
        const int w = s[p];
        for (int k = 0; k < order && k <= static_cast<int>(p); ++k) {
          std::vector<int> ctx(s.begin() + (p - k), s.begin() + p);
          ++counts[k][ctx][w];
        }
      }
    }

    // interpolated probability straight from the counts
    std::function<double(const std::vector<int>&, int)> prob = [&](const std::vector<int>& ctx,
                                                                   int w) -> double {
      if (ctx.empty()) {
        const auto& uni = counts[0].begin()->second;
        int total = 0;
        for (const auto& [tok, c] : uni) total += c;
        const int distinct = static_cast<int>(uni.size());
        const auto it = uni.find(w);
        const double c = it == uni.end() ? 0.0 : it->second;
        const double uniform = 1.0 / static_cast<double>(m.pred_vocab_.size());
        return (c + distinct * uniform) / (total + distinct);
      }
      const std::vector<int> shorter(ctx.begin() + 1, ctx.end());
      const auto bucket = counts[ctx.size()].find(ctx);
      if (bucket == counts[ctx.size()].end()) return prob(shorter, w);
      int total = 0;
      for (const auto& [tok, c] : bucket->second) total += c;
      const int distinct = static_cast<int>(bucket->second.size());
      const auto it = bucket->second.find(w);
      const double c = it == bucket->second.end() ? 0.0 : it->second;
      return (c + distinct * prob(shorter, w)) / (total + distinct);
    };

    for (int k = 0; k < order; ++k) {
      for (const auto& [ctx, cont] : counts[k]) {
        Context& entry = m.tables_[ctx];
        int total = 0;
        for (const auto& [tok, c] : cont) total += c;
        const int distinct = static_cast<int>(cont.size());
        entry.log_bow = std::log(static_cast<double>(distinct) / (total + distinct));
        if (k == 0) {
          for (int w : m.pred_vocab_) entry.logp[w] = std::log(prob(ctx, w));
        } else {
          for (const auto& [w, c] : cont) entry.logp[w] = std::log(prob(ctx, w));
        }
      }
    }
    return m;
  }

  // Conditional log-prob with backoff lookup; context uses internal symbols,
  // most recent last.
  double cond_logp(std::vector<int> ctx, int w) const {
    if (static_cast<int>(ctx.size()) > order_ - 1)
      ctx.erase(ctx.begin(), ctx.end() - (order_ - 1));
    double acc = 0;
    while (true) {
      auto it = tables_.find(ctx);
      if (it != tables_.end()) {
        auto pit = it->second.logp.find(w);
        if (pit != it->second.logp.end()) return acc + pit->second;
        if (!ctx.empty()) acc += it->second.log_bow;
      }
      if (ctx.empty()) throw NumericError("n-gram lookup fell through the unigram table");
      ctx.erase(ctx.begin());
    }
  }

  // FusionLm: log P(token | prefix) for shallow fusion during beam search.
  double token_logp(const std::vector<int>& prefix, int token) const override {
    std::vector<int> ctx;
    ctx.push_back(kBos);
    for (int id : prefix) ctx.push_back(map_token(id));
    return cond_logp(std::move(ctx), map_token(token));
  }

  // Full-sequence log-prob including the sentence-end term.
  double sequence_logp(const std::vector<int>& seq) const {
    std::vector<int> ctx;
    ctx.push_back(kBos);
    double acc = 0;
    for (int id : seq) {
      const int w = map_token(id);
      acc += cond_logp(ctx, w);
      ctx.push_back(w);
    }
    acc += cond_logp(ctx, kEos);
    return acc;
  }

  double perplexity(const std::vector<std::vector<int>>& corpus) const {
    double logp = 0;
    int64_t tokens = 0;
    for (const auto& seq : corpus) {
      logp += sequence_logp(seq);
      tokens += static_cast<int64_t>(seq.size()) + 1;  // + </s>
    }
    if (tokens == 0) throw ConfigError("perplexity of an empty corpus");
    return std::exp(-logp / static_cast<double>(tokens));
  }

  void save_arpa(const std::filesystem::path& path, const Vocabulary& vocab) const {
    std::vector<std::map<std::vector<int>, std::pair<double, const double*>>> grams(order_ + 1);
    for (const auto& [ctx, entry] : tables_) {
      for (const auto& [w, lp] : entry.logp) {
        std::vector<int> g = ctx;
        g.push_back(w);
        grams[g.size()][g] = {lp, nullptr};
      }
    }
    // attach backoff weights to the n-gram that names the context
    for (const auto& [ctx, entry] : tables_) {
      if (ctx.empty()) continue;
      auto& bucket = grams[ctx.size()];
      auto it = bucket.find(ctx);
      if (it == bucket.end())
        bucket[ctx] = {-99.0 * std::log(10.0), &entry.log_bow};  // context-only n-gram (e.g. <s>)
      else
        it->second.second = &entry.log_bow;
    }
    const double ln10 = std::log(10.0);
    std::string out = "\\data\\\n";
    char buf[64];
    for (int k = 1; k <= order_; ++k) {
      std::snprintf(buf, sizeof buf, "ngram %d=%zu\n", k, grams[k].size());
      out += buf;
    }
    for (int k = 1; k <= order_; ++k) {
      std::snprintf(buf, sizeof buf, "\n\\%d-grams:\n", k);
      out += buf;
      for (const auto& [g, pb] : grams[k]) {
        std::snprintf(buf, sizeof buf, "%.10g\t", pb.first / ln10);
        out += buf;
        for (size_t i = 0; i < g.size(); ++i) {
          if (i) out += ' ';
          out += symbol_surface(g[i], vocab);
        }
        if (pb.second) {
          std::snprintf(buf, sizeof buf, "\t%.10g", *pb.second / ln10);
          out += buf;
        }
        out += '\n';
      }
    }
    out += "\n\\end\\\n";
    spit(path, out);
  }

  static NgramModel load_arpa(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open LM: " + path.string());
    NgramModel m;
    for (int id = 0; id < vocab.size(); ++id)
      if (!vocab.is_special(id)) m.pred_vocab_.push_back(id);
    m.pred_vocab_.push_back(kEos);
    m.pred_vocab_.push_back(kUnk);
    const double ln10 = std::log(10.0);
    std::string line;
    int current = 0;
    while (std::getline(is, line)) {
      line = trim(line);
      if (line.empty() || line == "\\data\\" || line == "\\end\\" || line.rfind("ngram ", 0) == 0)
        continue;
      if (line[0] == '\\') {
        current = std::stoi(line.substr(1, line.find('-') - 1));
        m.order_ = std::max(m.order_, current);
        continue;
      }
      auto fields = split(line, '\t');
      if (fields.size() < 2 || current == 0) throw DataError("bad LM line: " + line);
      const double logp = std::stod(fields[0]) * ln10;
      std::vector<int> g;
      for (const auto& tok : split(fields[1], ' ')) g.push_back(symbol_id(tok, vocab));
      if (static_cast<int>(g.size()) != current) throw DataError("LM n-gram order mismatch: " + line);
      std::vector<int> ctx(g.begin(), g.end() - 1);
      if (fields[0] != "-99") m.tables_[ctx].logp[g.back()] = logp;
      if (fields.size() >= 3) m.tables_[g].log_bow = std::stod(fields[2]) * ln10;
    }
    if (m.order_ < 1) throw DataError("LM file contained no n-gram sections: " + path.string());
    m.tables_[{}].log_bow = 0.0;
    return m;
  }

  // Exposed for the normalization property test.
  std::vector<std::vector<int>> stored_contexts() const {
    std::vector<std::vector<int>> out;
    for (const auto& [ctx, entry] : tables_) out.push_back(ctx);
    return out;
  }
  const std::vector<int>& prediction_vocab() const { return pred_vocab_; }

  int map_token(int raw) const {
    if (raw < 0) return raw;  // already internal
    return raw >= 3 ? raw : kUnk;  // specials collapse into the reserved class
  }

 private:
  struct Context {
    std::map<int, double> logp;
    double log_bow = 0;
  };

  static std::string symbol_surface(int id, const Vocabulary& vocab) {
    if (id == kEos) return "</s>";
    if (id == kUnk) return "<unk>";
    if (id == kBos) return "<s>";
    return vocab.surface(id);
  }

  static int symbol_id(const std::string& s, const Vocabulary& vocab) {
    if (s == "</s>") return kEos;
    if (s == "<unk>") return kUnk;
    if (s == "<s>") return kBos;
    const int id = vocab.find(s);
    if (id < 0) throw DataError("LM token not in vocabulary: " + s);
    return id;
  }

  int order_ = 0;
  std::vector<int> pred_vocab_;
  std::map<std::vector<int>, Context> tables_;
};

}  // namespace lae
