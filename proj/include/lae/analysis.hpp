// Inference-side analyses: grid extraction, decoding with a chosen decoder,
// frame-level spike export, and the idle-branch statistics behind the
// language-discrimination claims.
#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "lae/corpus.hpp"
#include "lae/ctc.hpp"
#include "lae/model.hpp"
#include "lae/scoring.hpp"
#include "lae/tensor.hpp"

namespace lae {

enum class DecoderKind { kGlobal, kAuxA, kAuxB };

inline DecoderKind decoder_from_name(const std::string& s) {
  if (s == "global") return DecoderKind::kGlobal;
  if (s == "auxA") return DecoderKind::kAuxA;
  if (s == "auxB") return DecoderKind::kAuxB;
  throw ConfigError("unknown decoder: " + s + " (expected global|auxA|auxB)");
}

struct ForwardGrids {
  TensorF global;  // T' x V log-posteriors
  TensorF aux_a;   // empty for vanilla
  TensorF aux_b;
};

inline ForwardGrids forward_grids(Model<float>& model, const TensorF& features,
                                  bool want_aux = true) {
  Tape<float> tape(/*recording=*/false);
  Pass<float> pass{tape};
  const int feat = tape.leaf(features);
  auto enc = model.encode(pass, feat);
  ForwardGrids out;
  out.global = tape.value(ops::log_softmax_rows(tape, model.global_logits(pass, enc.h_bil)));
  if (want_aux && model.config().has_branches()) {
    out.aux_a = tape.value(ops::log_softmax_rows(tape, model.aux_logits(pass, enc.h_a)));
    out.aux_b = tape.value(ops::log_softmax_rows(tape, model.aux_logits(pass, enc.h_b)));
  }
  return out;
}

inline const TensorF& pick_grid(const ForwardGrids& grids, DecoderKind kind) {
  switch (kind) {
    case DecoderKind::kGlobal: return grids.global;
    case DecoderKind::kAuxA:
      if (grids.aux_a.numel() == 0) throw ConfigError("model has no auxiliary decoder");
      return grids.aux_a;
    default:
      if (grids.aux_b.numel() == 0) throw ConfigError("model has no auxiliary decoder");
      return grids.aux_b;
  }
}

inline std::vector<Hypothesis> decode_utterance(Model<float>& model, const TensorF& features,
                                                DecoderKind kind, int beam,
                                                const FusionLm* lm = nullptr, double lambda = 0.0) {
  ForwardGrids grids = forward_grids(model, features, kind != DecoderKind::kGlobal);
  return prefix_beam_search(pick_grid(grids, kind), beam, lm, lambda);
}

// Language-specific decoding analysis: decode a whole eval set with one
// auxiliary decoder and score it two ways. The projection view drops
// non-target-language tokens from both sides before alignment; the
// attributed view aligns against the full mixed reference and buckets the
// errors by language (mask emissions land in the special bucket).
struct AuxDecodeReport {
  double projected_target_er = 0;  // hyp/ref projected to the decoder's language
  double projected_other_er = 0;   // projected to the other language (the failure row)
  ErrorRates attributed;           // full-reference view
};

inline AuxDecodeReport aux_decode_eval(Model<float>& model,
                                       const std::vector<Utterance>& utts,
                                       const Vocabulary& vocab, Lang which, int beam) {
  if (which == Lang::kSpecial) throw ConfigError("aux_decode_eval: pick language A or B");
  const DecoderKind kind = which == Lang::kA ? DecoderKind::kAuxA : DecoderKind::kAuxB;
  const Lang other = which == Lang::kA ? Lang::kB : Lang::kA;
  AuxDecodeReport report;
  ErrorBreakdown target_bd, other_bd;
  std::vector<std::vector<int>> refs, hyps;
  for (const auto& u : utts) {
    auto hyp = decode_utterance(model, u.features, kind, beam);
    const std::vector<int>& ids = hyp.empty() ? std::vector<int>{} : hyp[0].ids;
    refs.push_back(u.targets);
    hyps.push_back(ids);
    const auto ref_t = project_language(u.targets, vocab, which);
    const auto hyp_t = project_language(ids, vocab, which);
    attribute_errors(edit_distance(ref_t, hyp_t), ref_t, hyp_t, vocab, target_bd);
    const auto ref_o = project_language(u.targets, vocab, other);
    const auto hyp_o = project_language(ids, vocab, other);
    attribute_errors(edit_distance(ref_o, hyp_o), ref_o, hyp_o, vocab, other_bd);
  }
  report.projected_target_er = target_bd.total.rate();
  report.projected_other_er = other_bd.total.rate();
  report.attributed = mixed_error_rate(refs, hyps, vocab);
  return report;
}

// --- frame-level language ground truth ---------------------------------------

// Receptive field of subsampled frame j in raw frames: [4j, 4j+6]. A frame
// belongs to a language span only when every raw frame in its receptive
// field agrees (prototype energy lives in one half of the feature space);
// frames straddling a switch boundary come back as kSpecial.
inline Lang frame_language(const TensorF& features, int sub_frame) {
  const int T = features.rows(), F = features.cols();
  const int lo = std::min(4 * sub_frame, T - 1);
  const int hi = std::min(4 * sub_frame + 6, T - 1);
  int votes_a = 0, votes_b = 0;
  for (int t = lo; t <= hi; ++t) {
    double ea = 0, eb = 0;
    for (int d = 0; d < F / 2; ++d) ea += std::abs(features.at(t, d));
    for (int d = F / 2; d < F; ++d) eb += std::abs(features.at(t, d));
    (ea >= eb ? votes_a : votes_b)++;
  }
  if (votes_a > 0 && votes_b > 0) return Lang::kSpecial;  // boundary frame
  return votes_a > 0 ? Lang::kA : Lang::kB;
}

// --- spike export (Fig. 2 analog) --------------------------------------------

struct SpikeRow {
  int frame;
  int aux_a_top, aux_b_top, global_top;
  float aux_a_p, aux_b_p, global_p;
  float aux_a_blank_p, aux_b_blank_p, global_blank_p;
};

inline std::vector<SpikeRow> spike_rows(const ForwardGrids& grids) {
  std::vector<SpikeRow> rows;
  const int T = grids.global.rows();
  auto top = [](const TensorF& grid, int t, int& id, float& p) {
    id = 0;
    for (int c = 1; c < grid.cols(); ++c)
      if (grid.at(t, c) > grid.at(t, id)) id = c;
    p = std::exp(grid.at(t, id));
  };
  for (int t = 0; t < T; ++t) {
    SpikeRow r{};
    r.frame = t;
    top(grids.global, t, r.global_top, r.global_p);
    r.global_blank_p = std::exp(grids.global.at(t, kBlankId));
    if (grids.aux_a.numel() > 0) {
      top(grids.aux_a, t, r.aux_a_top, r.aux_a_p);
      top(grids.aux_b, t, r.aux_b_top, r.aux_b_p);
      r.aux_a_blank_p = std::exp(grids.aux_a.at(t, kBlankId));
      r.aux_b_blank_p = std::exp(grids.aux_b.at(t, kBlankId));
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::string spikes_csv(const std::vector<SpikeRow>& rows) {
  std::string out =
      "frame,auxA_top_id,auxA_top_p,auxA_blank_p,auxB_top_id,auxB_top_p,auxB_blank_p,"
      "global_top_id,global_top_p,global_blank_p\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%d,%.6f,%.6f,%d,%.6f,%.6f\n", r.frame,
                  r.aux_a_top, r.aux_a_p, r.aux_a_blank_p, r.aux_b_top, r.aux_b_p, r.aux_b_blank_p,
                  r.global_top, r.global_p, r.global_blank_p);
    out += buf;
  }
  return out;
}

// --- idle-branch statistics ----------------------------------------------------

struct MaskSpikeStats {
  int64_t offlang_spikes = 0;  // non-blank aux spikes inside other-language spans
  int64_t mask_spikes = 0;     // of those, frames showing the corresponding mask token
  double fraction() const {
    return offlang_spikes > 0 ? double(mask_spikes) / double(offlang_spikes) : 1.0;
  }
};

// For each subsampled frame inside a language-L span, the *other* branch's
// non-blank argmax should be that language's mask token (idle behavior).
inline void accumulate_mask_spikes(Model<float>& model, const Utterance& u, MaskSpikeStats& stats) {
  ForwardGrids grids = forward_grids(model, u.features, /*want_aux=*/true);
  if (grids.aux_a.numel() == 0) throw ConfigError("mask-spike stats need a branch architecture");
  const int T = grids.global.rows();
  for (int t = 0; t < T; ++t) {
    const Lang span = frame_language(u.features, t);
    if (span == Lang::kSpecial) continue;  // receptive field crosses a switch
    const TensorF& off_grid = span == Lang::kA ? grids.aux_b : grids.aux_a;
    const int expect_mask = span == Lang::kA ? Vocabulary::kMaskA : Vocabulary::kMaskB;
    int arg = 0;
    for (int c = 1; c < off_grid.cols(); ++c)
      if (off_grid.at(t, c) > off_grid.at(t, arg)) arg = c;
    if (arg == kBlankId) continue;
    ++stats.offlang_spikes;
    if (arg == expect_mask) ++stats.mask_spikes;
  }
}

}  // namespace lae
