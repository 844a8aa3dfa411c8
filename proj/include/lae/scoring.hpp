// Levenshtein alignment and mixed/per-language error rates.
//
// Alignment ties resolve preferring substitution over insertion over
// deletion, which makes the trace deterministic. Per-language attribution:
// substitutions and deletions follow the reference token's language,
// insertions follow the hypothesis token's language, so the per-language
// numerators always partition the global numerator exactly.
#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "lae/util.hpp"
#include "lae/vocab.hpp"

namespace lae {

enum class EditOp : uint8_t { kMatch, kSub, kDel, kIns };

struct EditStep {
  EditOp op;
  int ref_index = -1;  // -1 for insertions
  int hyp_index = -1;  // -1 for deletions
};

struct AlignmentCounts {
  int64_t sub = 0, del = 0, ins = 0, ref_len = 0;
  int64_t errors() const { return sub + del + ins; }
  double rate() const {
    return ref_len > 0 ? static_cast<double>(errors()) / static_cast<double>(ref_len)
                       : std::numeric_limits<double>::quiet_NaN();
  }
};

struct Alignment {
  AlignmentCounts counts;
  std::vector<EditStep> trace;
};

inline Alignment edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  std::vector<int> dp((n + 1) * (m + 1));
  auto D = [&](int i, int j) -> int& { return dp[i * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) D(i, 0) = i;
  for (int j = 0; j <= m; ++j) D(0, j) = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      const int sub = D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int ins = D(i, j - 1) + 1;
      const int del = D(i - 1, j) + 1;
      D(i, j) = std::min(sub, std::min(ins, del));
    }
  Alignment out;
  out.counts.ref_len = n;
  int i = n, j = m;
  std::vector<EditStep> rev;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && D(i, j) == D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      const bool match = ref[i - 1] == hyp[j - 1];
      rev.push_back({match ? EditOp::kMatch : EditOp::kSub, i - 1, j - 1});
      if (!match) ++out.counts.sub;
      --i;
      --j;
    } else if (j > 0 && D(i, j) == D(i, j - 1) + 1) {
      rev.push_back({EditOp::kIns, -1, j - 1});
      ++out.counts.ins;
      --j;
    } else {
      rev.push_back({EditOp::kDel, i - 1, -1});
      ++out.counts.del;
      --i;
    }
  }
  out.trace.assign(rev.rbegin(), rev.rend());
  return out;
}

// Error counts bucketed by language; Lang::kSpecial collects operations on
// mask or other special tokens so the partition stays exact.
struct ErrorBreakdown {
  AlignmentCounts total;
  std::map<Lang, AlignmentCounts> per_lang;

  AlignmentCounts& bucket(Lang l) { return per_lang[l]; }
};

inline void attribute_errors(const Alignment& a, const std::vector<int>& ref,
                             const std::vector<int>& hyp, const Vocabulary& vocab,
                             ErrorBreakdown& acc) {
  acc.total.ref_len += a.counts.ref_len;
  acc.total.sub += a.counts.sub;
  acc.total.del += a.counts.del;
  acc.total.ins += a.counts.ins;
  for (int id : ref) ++acc.bucket(vocab.lang(id)).ref_len;
  for (const EditStep& s : a.trace) {
    switch (s.op) {
      case EditOp::kSub: ++acc.bucket(vocab.lang(ref[s.ref_index])).sub; break;
      case EditOp::kDel: ++acc.bucket(vocab.lang(ref[s.ref_index])).del; break;
      case EditOp::kIns: ++acc.bucket(vocab.lang(hyp[s.hyp_index])).ins; break;
      case EditOp::kMatch: break;
    }
  }
}

struct ErrorRates {
  double mer = 0, er_a = 0, er_b = 0;
  ErrorBreakdown breakdown;
};

inline ErrorRates mixed_error_rate(const std::vector<std::vector<int>>& refs,
                                   const std::vector<std::vector<int>>& hyps,
                                   const Vocabulary& vocab) {
  if (refs.size() != hyps.size()) throw DataError("mixed_error_rate: ref/hyp count mismatch");
  ErrorRates r;
  for (size_t i = 0; i < refs.size(); ++i) {
    Alignment a = edit_distance(refs[i], hyps[i]);
    attribute_errors(a, refs[i], hyps[i], vocab, r.breakdown);
  }
  r.mer = r.breakdown.total.rate();
  r.er_a = r.breakdown.bucket(Lang::kA).rate();
  r.er_b = r.breakdown.bucket(Lang::kB).rate();
  return r;
}

// Subsequence of tokens belonging to one language (projection scoring view).
inline std::vector<int> project_language(const std::vector<int>& seq, const Vocabulary& vocab,
                                         Lang lang) {
  std::vector<int> out;
  for (int id : seq)
    if (vocab.lang(id) == lang) out.push_back(id);
  return out;
}

}  // namespace lae
