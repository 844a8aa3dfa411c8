// CTC criterion and decoders.
//
// The loss runs the forward-backward recursion over the blank-augmented
// label sequence entirely in log space. Both alpha and beta include the
// emission term of their own frame, so the state posterior at (t, s) is
// exp(alpha + beta - emission - logP) and the gradient of -logP with
// respect to a log-posterior entry is minus the summed posterior mass of
// the states labeled with that token.
#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lae/tape.hpp"
#include "lae/tensor.hpp"
#include "lae/util.hpp"

namespace lae {

constexpr int kBlankId = 0;

// Minimal frame count that admits the target: one frame per token plus a
// separating blank per adjacent repeat.
inline int ctc_min_frames(const std::vector<int>& target) {
  int repeats = 0;
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++repeats;
  return static_cast<int>(target.size()) + repeats;
}

template <typename Real>
struct CtcResult {
  Real loss = 0;                // -log P(target | grid); +inf when infeasible
  TensorT<Real> grid_grad;      // d(loss)/d(grid); zeros when infeasible
  bool feasible = true;
};

template <typename Real>
CtcResult<Real> ctc_loss(const TensorT<Real>& grid, const std::vector<int>& target,
                         int blank = kBlankId) {
  const int T = grid.rows();
  const int V = grid.cols();
  for (int id : target) {
    if (id == blank) throw DataError("ctc_loss: target contains the blank id");
    if (id < 0 || id >= V) throw DataError("ctc_loss: target id out of range");
  }
  CtcResult<Real> res;
  res.grid_grad = TensorT<Real>::zeros_like(grid);
  if (T < ctc_min_frames(target)) {
    res.loss = std::numeric_limits<Real>::infinity();
    res.feasible = false;
    return res;
  }

  const int L = static_cast<int>(target.size());
  const int S = 2 * L + 1;
  std::vector<int> lab(S, blank);
  for (int i = 0; i < L; ++i) lab[2 * i + 1] = target[i];

  const Real NEG = kLogZero<Real>;
  std::vector<Real> alpha(static_cast<size_t>(T) * S, NEG);
  std::vector<Real> beta(static_cast<size_t>(T) * S, NEG);
  auto A = [&](int t, int s) -> Real& { return alpha[static_cast<size_t>(t) * S + s]; };
  auto B = [&](int t, int s) -> Real& { return beta[static_cast<size_t>(t) * S + s]; };

  A(0, 0) = grid.at(0, blank);
  if (S > 1) A(0, 1) = grid.at(0, lab[1]);
  for (int t = 1; t < T; ++t) {
    // States reachable at frame t given the remaining frames are bounded;
    // restricting the window keeps the DP O(T*S).
    const int lo = std::max(0, S - 2 * (T - t));
    const int hi = std::min(S - 1, 2 * (t + 1) - 1);
    for (int s = lo; s <= hi; ++s) {
      Real acc = A(t - 1, s);
      if (s >= 1) acc = log_add(acc, A(t - 1, s - 1));
      if (s >= 2 && lab[s] != blank && lab[s] != lab[s - 2]) acc = log_add(acc, A(t - 1, s - 2));
      A(t, s) = acc == NEG ? NEG : acc + grid.at(t, lab[s]);
    }
  }
  Real log_p = A(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, A(T - 1, S - 2));
  res.loss = -log_p;

  B(T - 1, S - 1) = grid.at(T - 1, lab[S - 1]);
  if (S > 1) B(T - 1, S - 2) = grid.at(T - 1, lab[S - 2]);
  for (int t = T - 2; t >= 0; --t) {
    const int lo = std::max(0, S - 2 * (T - t));
    const int hi = std::min(S - 1, 2 * (t + 1) - 1);
    for (int s = hi; s >= lo; --s) {
      Real acc = B(t + 1, s);
      if (s + 1 < S) acc = log_add(acc, B(t + 1, s + 1));
      if (s + 2 < S && lab[s + 2] != blank && lab[s + 2] != lab[s]) acc = log_add(acc, B(t + 1, s + 2));
      B(t, s) = acc == NEG ? NEG : acc + grid.at(t, lab[s]);
    }
  }

  for (int t = 0; t < T; ++t) {
    // Sum state posteriors per emitted token in log space first; this keeps
    // the gradient exact even when individual terms underflow.
    std::map<int, Real> per_token;
    for (int s = 0; s < S; ++s) {
      if (A(t, s) == NEG || B(t, s) == NEG) continue;
      const Real lg = A(t, s) + B(t, s) - grid.at(t, lab[s]) - log_p;
      auto [it, fresh] = per_token.emplace(lab[s], lg);
      if (!fresh) it->second = log_add(it->second, lg);
    }
    for (const auto& [tok, lg] : per_token) res.grid_grad.at(t, tok) = -std::exp(lg);
  }
  return res;
}

namespace ops {

// Tape node for the CTC loss; the analytic grid gradient is cached at
// forward time and scaled by the upstream gradient on the way back.
template <typename Real>
int ctc(Tape<Real>& t, int grid, const std::vector<int>& target, int blank = kBlankId) {
  CtcResult<Real> res = ctc_loss(t.value(grid), target, blank);
  return t.make(TensorT<Real>::scalar(res.loss), {grid},
                [grid, gg = std::move(res.grid_grad)](Tape<Real>& tp, int self) {
                  if (!tp.wants_grad(grid)) return;
                  const Real g = tp.grad(self).data[0];
                  auto& buf = tp.grad_buf(grid);
                  for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g * gg.data[i];
                  tp.mark_touched(grid);
                });
}

}  // namespace ops

// Per-frame argmax, collapse adjacent repeats, drop blanks. Ties break
// toward the lowest id.
template <typename Real>
std::vector<int> greedy_decode(const TensorT<Real>& grid, int blank = kBlankId) {
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < grid.rows(); ++t) {
    int best = 0;
    for (int c = 1; c < grid.cols(); ++c)
      if (grid.at(t, c) > grid.at(t, best)) best = c;
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

struct Hypothesis {
  std::vector<int> ids;   // no blanks, already collapsed
  double acoustic = 0;    // log P_ctc(prefix)
  double lm = 0;          // LM log-prob of the token sequence
  double combined = 0;    // acoustic + lambda * lm
};

// Interface for shallow fusion; scores one token continuation.
struct FusionLm {
  virtual ~FusionLm() = default;
  virtual double token_logp(const std::vector<int>& context, int token) const = 0;
};

// CTC prefix beam search. Maintains per-prefix blank/non-blank probability
// mass; identical prefixes merge; the LM increment applies when a non-blank
// token extends a prefix. Deterministic: ties break by score then by
// lexicographic token ids.
template <typename Real>
std::vector<Hypothesis> prefix_beam_search(const TensorT<Real>& grid, int beam,
                                           const FusionLm* lm = nullptr, double lambda = 0.0,
                                           int blank = kBlankId) {
  if (beam < 1) throw ConfigError("prefix_beam_search: beam must be >= 1");
  if (lambda < 0) throw ConfigError("prefix_beam_search: lambda must be >= 0");
  struct Entry {
    double pb = -std::numeric_limits<double>::infinity();
    double pnb = -std::numeric_limits<double>::infinity();
    double lm_score = 0;
    double total() const { return log_add(pb, pnb); }
  };
  using Beam = std::map<std::vector<int>, Entry>;

  if (grid.rows() == 0) return {Hypothesis{}};
  const int V = grid.cols();

  Beam cur;
  cur[{}] = Entry{0.0, -std::numeric_limits<double>::infinity(), 0.0};

  auto rank = [lambda](const Beam& b) {
    std::vector<std::pair<std::vector<int>, Entry>> v(b.begin(), b.end());
    std::sort(v.begin(), v.end(), [lambda](const auto& x, const auto& y) {
      const double sx = x.second.total() + lambda * x.second.lm_score;
      const double sy = y.second.total() + lambda * y.second.lm_score;
      if (sx != sy) return sx > sy;
      return x.first < y.first;
    });
    return v;
  };

  for (int t = 0; t < grid.rows(); ++t) {
    Beam next;
    for (const auto& [prefix, e] : cur) {
      const double p_tot = e.total();
      // stay: emit blank, or repeat the trailing token without a separator
      {
        Entry& ne = next[prefix];
        ne.lm_score = e.lm_score;
        ne.pb = log_add(ne.pb, p_tot + static_cast<double>(grid.at(t, blank)));
        if (!prefix.empty())
          ne.pnb = log_add(ne.pnb, e.pnb + static_cast<double>(grid.at(t, prefix.back())));
      }
      // extend with every non-blank token
      for (int k = 0; k < V; ++k) {
        if (k == blank) continue;
        std::vector<int> ext = prefix;
        ext.push_back(k);
        const double base = (!prefix.empty() && k == prefix.back()) ? e.pb : p_tot;
        if (base == -std::numeric_limits<double>::infinity()) continue;
        auto [it, fresh] = next.emplace(std::move(ext), Entry{});
        Entry& ne = it->second;
        if (fresh || (ne.pb == -std::numeric_limits<double>::infinity() &&
                      ne.pnb == -std::numeric_limits<double>::infinity())) {
          ne.lm_score = e.lm_score + (lm ? lm->token_logp(prefix, k) : 0.0);
        }
        ne.pnb = log_add(ne.pnb, base + static_cast<double>(grid.at(t, k)));
      }
    }
    auto ranked = rank(next);
    if (static_cast<int>(ranked.size()) > beam) ranked.resize(beam);
    cur.clear();
    for (auto& [prefix, e] : ranked) cur.emplace(std::move(prefix), e);
  }

  auto ranked = rank(cur);
  if (static_cast<int>(ranked.size()) > beam) ranked.resize(beam);
  std::vector<Hypothesis> out;
  out.reserve(ranked.size());
  for (auto& [prefix, e] : ranked) {
    Hypothesis h;
    h.ids = prefix;
    h.acoustic = e.total();
    h.lm = e.lm_score;
    h.combined = h.acoustic + lambda * h.lm;
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace lae
