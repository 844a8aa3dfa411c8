// Language-aware training loop.
//
// Per utterance the objective is J = J_ori + (J_A + J_B) / 2 with all three
// terms CTC losses: J_ori on the global decoder over the combined output,
// J_A and J_B on the shared auxiliary decoder over the branch outputs with
// masked targets. Auxiliary gradients flow through the auxiliary decoder,
// the language blocks, and the shared block. Utterances whose subsampled
// length cannot carry one of the three targets are skipped and counted.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lae/checkpoint.hpp"
#include "lae/corpus.hpp"
#include "lae/ctc.hpp"
#include "lae/masking.hpp"
#include "lae/model.hpp"
#include "lae/optimizer.hpp"
#include "lae/specaugment.hpp"
#include "lae/vocab.hpp"

namespace lae {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  int accum = 1;
  double peak_lr = 1e-3;
  int warmup_steps = 500;
  bool aux_loss = true;
  bool probe_loss = true;
  SpecAugmentConfig specaug;
  bool specaug_enabled = true;
  int avg_last_k = 5;
  double grad_clip = 5.0;
  uint64_t seed = 12345;
};

template <typename Real>
struct UttLossNodes {
  int total = -1;  // backward target (J plus the isolated probe loss)
  int j = -1;
  int j_ori = -1;
  int j_a = -1;
  int j_b = -1;
  int probe = -1;
};

// Builds the Eq. 1-3 composite for one utterance. The caller owns
// feasibility checks; infeasible targets yield +inf loss values.
template <typename Real>
UttLossNodes<Real> build_utt_loss(Model<Real>& model, Pass<Real>& pass, int feat_leaf,
                                  const MaskedTargets& targets, bool aux_enabled,
                                  bool probe_enabled, int probe_label) {
  auto& t = pass.tape;
  UttLossNodes<Real> nodes;
  auto enc = model.encode(pass, feat_leaf);
  const int grid_global = ops::log_softmax_rows(t, model.global_logits(pass, enc.h_bil));
  nodes.j_ori = ops::ctc(t, grid_global, targets.y);
  if (aux_enabled && model.config().has_branches()) {
    const int grid_a = ops::log_softmax_rows(t, model.aux_logits(pass, enc.h_a));
    const int grid_b = ops::log_softmax_rows(t, model.aux_logits(pass, enc.h_b));
    nodes.j_a = ops::ctc(t, grid_a, targets.y_a);
    nodes.j_b = ops::ctc(t, grid_b, targets.y_b);
    nodes.j = ops::add_scaled(t, nodes.j_ori, ops::add(t, nodes.j_a, nodes.j_b), Real(0.5));
  } else {
    nodes.j = nodes.j_ori;
  }
  nodes.total = nodes.j;
  if (probe_enabled) {
    nodes.probe = ops::cross_entropy_logits(t, model.probe_logits(pass, enc.h_bil), probe_label);
    nodes.total = ops::add(t, nodes.j, nodes.probe);
  }
  return nodes;
}

struct EpochMetrics {
  int epoch = 0;
  int64_t step = 0;
  double j = 0, j_ori = 0, j_a = 0, j_b = 0;
  double lr = 0;
  int64_t skipped = 0;
};

struct TrainOutcome {
  std::vector<EpochMetrics> metrics;
  std::vector<std::filesystem::path> checkpoints;
  int64_t final_step = 0;
};

inline std::string metrics_csv_text(const std::vector<EpochMetrics>& metrics,
                                    const std::string& digest_hex) {
  std::string out = "# config_digest=" + digest_hex + "\n";
  out += "epoch,step,J,J_ori,J_A,J_B,lr,skipped_count\n";
  char buf[200];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%d,%lld,%.6f,%.6f,%.6f,%.6f,%.8f,%lld\n", m.epoch,
                  static_cast<long long>(m.step), m.j, m.j_ori, m.j_a, m.j_b, m.lr,
                  static_cast<long long>(m.skipped));
    out += buf;
  }
  return out;
}

// Trains in place; writes one checkpoint per epoch plus metrics.csv under
// out_dir. Divergence aborts with the already-written checkpoints retained.
inline TrainOutcome train_model(Model<float>& model, const std::vector<Utterance>& utts,
                                const Vocabulary& vocab, const TrainConfig& cfg,
                                const std::filesystem::path& out_dir, const Digest& config_digest,
                                const std::string& vocab_digest_hex) {
  if (utts.empty()) throw DataError("train_model: empty corpus");
  std::filesystem::create_directories(out_dir);

  struct Prepared {
    const Utterance* utt;
    MaskedTargets targets;
    int probe_label;
    bool feasible;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(utts.size());
  for (const auto& u : utts) {
    Prepared p;
    p.utt = &u;
    p.targets = mask_targets(u.targets, vocab, u.utt_id);
    p.probe_label = utterance_class(u.tags);
    p.feasible = u.features.rows() >= kMinFrames;
    if (p.feasible) {
      const int sub_len = subsampled_length(u.features.rows());
      p.feasible = sub_len >= ctc_min_frames(p.targets.y);
      if (cfg.aux_loss && model.config().has_branches())
        p.feasible = p.feasible && sub_len >= ctc_min_frames(p.targets.y_a) &&
                     sub_len >= ctc_min_frames(p.targets.y_b);
    }
    prepared.push_back(std::move(p));
  }

  LrSchedule schedule{cfg.peak_lr, cfg.warmup_steps};
  Adam<float> adam;
  const bool aux = cfg.aux_loss && model.config().has_branches();
  const int group = cfg.batch_size * cfg.accum;
  int64_t step = 0;
  uint64_t utt_counter = 0;
  double last_lr = 0;

  TrainOutcome outcome;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(prepared.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    auto shuffle_rng = make_rng(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch;
    double sum_j_ori = 0, sum_j_a = 0, sum_j_b = 0;
    int64_t counted = 0;
    int in_group = 0;

    auto take_step = [&]() {
      if (in_group == 0) return;
      scale_grads(model, 1.0f / static_cast<float>(in_group));
      clip_global_norm(model, cfg.grad_clip);
      ++step;
      last_lr = schedule.lr(step);
      adam.step(model, last_lr);
      model.zero_grads();
      in_group = 0;
    };

    for (int idx : order) {
      Prepared& p = prepared[idx];
      if (!p.feasible) {
        ++em.skipped;
        continue;
      }
      TensorF feats = p.utt->features;
      if (cfg.specaug_enabled) {
        auto rng = make_rng(cfg.seed ^ fnv1a(p.utt->utt_id), "specaug",
                            static_cast<uint64_t>(epoch));
        feats = spec_augment(feats, cfg.specaug, rng);
      }
      Tape<float> tape;
      Pass<float> pass{tape, /*training=*/true,
                       derive_seed(cfg.seed, "dropout-pass", utt_counter++)};
      const int feat_leaf = tape.leaf(std::move(feats));
      auto nodes = build_utt_loss(model, pass, feat_leaf, p.targets, aux, cfg.probe_loss,
                                  p.probe_label);
      const double j = tape.value(nodes.j).data[0];
      if (!std::isfinite(j))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + " (last good checkpoint retained)");
      tape.backward(nodes.total);
      model.harvest_grads(pass);
      sum_j_ori += tape.value(nodes.j_ori).data[0];
      if (aux) {
        sum_j_a += tape.value(nodes.j_a).data[0];
        sum_j_b += tape.value(nodes.j_b).data[0];
      }
      ++counted;
      if (++in_group >= group) take_step();
    }
    take_step();

    if (counted == 0) throw DataError("train_model: every utterance was skipped as infeasible");
    em.step = step;
    em.j_ori = sum_j_ori / static_cast<double>(counted);
    em.j_a = sum_j_a / static_cast<double>(counted);
    em.j_b = sum_j_b / static_cast<double>(counted);
    em.j = em.j_ori + (em.j_a + em.j_b) / 2.0;  // Eq. 3 on the logged means
    em.lr = last_lr;
    outcome.metrics.push_back(em);

    char name[64];
    std::snprintf(name, sizeof name, "ckpt_epoch_%04d.laec", epoch);
    const auto ckpt_path = out_dir / name;
    CheckpointMeta meta;
    meta.step = static_cast<uint64_t>(step);
    meta.config_digest = config_digest;
    save_model(ckpt_path, model, meta);
    write_meta_file(ckpt_path.string() + ".meta",
                    {{"config_digest", hex(config_digest)},
                     {"vocab_digest", vocab_digest_hex},
                     {"epoch", std::to_string(epoch)},
                     {"step", std::to_string(step)}});
    outcome.checkpoints.push_back(ckpt_path);

    spit(out_dir / "metrics.csv", metrics_csv_text(outcome.metrics, hex(config_digest)));
  }
  outcome.final_step = step;
  return outcome;
}

}  // namespace lae
