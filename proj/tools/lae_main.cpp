// Single entry point for the bilingual recognition experiments: corpus
// generation, training, checkpoint averaging, decoding, scoring, probing,
// spike export, and significance testing.
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "lae/analysis.hpp"
#include "lae/checkpoint.hpp"
#include "lae/config.hpp"
#include "lae/corpus.hpp"
#include "lae/ctc.hpp"
#include "lae/digest.hpp"
#include "lae/model.hpp"
#include "lae/ngram.hpp"
#include "lae/probe.hpp"
#include "lae/scoring.hpp"
#include "lae/sigtest.hpp"
#include "lae/simulate.hpp"
#include "lae/training.hpp"
#include "lae/vocab.hpp"

namespace fs = std::filesystem;
using namespace lae;

namespace {

std::string file_digest_hex(const fs::path& path) { return hex(sha256(slurp(path))); }

// --- gen-data ----------------------------------------------------------------

void cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  GeneratedCorpus corpus = gen_corpus(cfg.sim_spec());
  const fs::path out(out_dir);
  fs::create_directories(out / "feats");
  corpus.vocab.save_tsv(out / "vocab.tsv");

  std::vector<ManifestRecord> records;
  std::vector<std::vector<int>> train_transcripts;
  for (const auto& u : corpus.utterances) {
    ManifestRecord r;
    r.utt_id = u.utt_id;
    r.partition = u.partition;
    r.feature_path = "feats/" + u.utt_id + ".laef";
    r.targets = u.targets;
    r.tags = u.tags;
    write_features(out / r.feature_path, u.features);
    if (u.partition.rfind("train-", 0) == 0) train_transcripts.push_back(u.targets);
    records.push_back(std::move(r));
  }
  write_manifest(out / "manifest.tsv", records);

  NgramModel lm = NgramModel::train(train_transcripts, cfg.lm_order, corpus.vocab);
  lm.save_arpa(out / "lm.arpa", corpus.vocab);

  spit(out / "config.digest", hex(cfg.digest()) + "\n");
  std::printf("gen-data: %zu utterances, vocab %d, lm order %d -> %s\n",
              corpus.utterances.size(), corpus.vocab.size(), cfg.lm_order, out_dir.c_str());
}

// --- train ---------------------------------------------------------------------

void cmd_train(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  const fs::path data(data_dir);
  Vocabulary vocab = Vocabulary::load_tsv(data / "vocab.tsv");
  if (vocab.size() != cfg.vocab_size())
    throw ConfigError("config expects vocab size " + std::to_string(cfg.vocab_size()) +
                      " but the corpus has " + std::to_string(vocab.size()));
  const std::string vocab_digest = file_digest_hex(data / "vocab.tsv");

  std::vector<Utterance> train_utts;
  for (const auto& r : read_manifest(data / "manifest.tsv"))
    if (r.partition.rfind("train-", 0) == 0) train_utts.push_back(load_utterance(data, r));
  if (train_utts.empty()) throw DataError("no train-* utterances in " + data_dir);

  Model<float> model(cfg.model_config());
  std::printf("train: arch=%s params=%lld utterances=%zu epochs=%d\n", cfg.arch.c_str(),
              static_cast<long long>(model.trainable_count()), train_utts.size(), cfg.epochs);

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.accum = cfg.accum;
  tc.peak_lr = cfg.peak_lr;
  tc.warmup_steps = cfg.warmup_steps;
  tc.aux_loss = cfg.aux_loss;
  tc.probe_loss = cfg.probe_loss;
  tc.specaug = cfg.specaug_config();
  tc.specaug_enabled = cfg.specaug_time_masks > 0 || cfg.specaug_freq_masks > 0;
  tc.avg_last_k = cfg.avg_last_k;
  tc.grad_clip = cfg.grad_clip;
  tc.seed = cfg.seed;

  TrainOutcome outcome = train_model(model, train_utts, vocab, tc, out_dir, cfg.digest(),
                                     vocab_digest);
  // extend the per-epoch meta sidecars with the model topology
  for (const auto& ckpt : outcome.checkpoints) {
    auto kv = read_meta_file(ckpt.string() + ".meta");
    for (const auto& [k, v] : model_meta_entries(cfg.model_config())) kv[k] = v;
    write_meta_file(ckpt.string() + ".meta", kv);
  }
  std::printf("train: finished %zu epochs, final step %lld, metrics at %s/metrics.csv\n",
              outcome.metrics.size(), static_cast<long long>(outcome.final_step),
              out_dir.c_str());
}

// --- average -------------------------------------------------------------------

void cmd_average(const std::string& in_dir, int last_k, const std::string& out_file) {
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt_epoch_", 0) == 0 && e.path().extension() == ".laec")
      ckpts.push_back(e.path());
  }
  std::sort(ckpts.begin(), ckpts.end());
  if (ckpts.empty()) throw DataError("no ckpt_epoch_*.laec files in " + in_dir);
  if (last_k < 1 || last_k > static_cast<int>(ckpts.size()))
    throw ConfigError("--last must be in [1, " + std::to_string(ckpts.size()) + "]");
  std::vector<fs::path> picked(ckpts.end() - last_k, ckpts.end());

  std::vector<uint64_t> source_steps;
  auto [params, meta] = average_checkpoints(picked, &source_steps);
  write_checkpoint(out_file, params, meta);

  auto kv = read_meta_file(picked.back().string() + ".meta");
  std::string steps;
  for (size_t i = 0; i < source_steps.size(); ++i)
    steps += (i ? "," : "") + std::to_string(source_steps[i]);
  kv["source_steps"] = steps;
  kv["averaged_count"] = std::to_string(last_k);
  write_meta_file(out_file + ".meta", kv);
  std::printf("average: %d checkpoints -> %s\n", last_k, out_file.c_str());
}

// --- decode --------------------------------------------------------------------

struct LoadedModel {
  std::unique_ptr<Model<float>> model;
  std::map<std::string, std::string> meta;
};

LoadedModel load_model_with_meta(const std::string& ckpt_path) {
  LoadedModel lm;
  lm.meta = read_meta_file(ckpt_path + ".meta");
  lm.model = std::make_unique<Model<float>>(model_config_from_meta(lm.meta));
  load_model(ckpt_path, *lm.model);
  return lm;
}

void check_vocab_digest(const LoadedModel& lm, const fs::path& data) {
  auto it = lm.meta.find("vocab_digest");
  if (it == lm.meta.end()) throw DataError("checkpoint meta has no vocab_digest");
  const std::string actual = file_digest_hex(data / "vocab.tsv");
  if (it->second != actual)
    throw DataError("vocab digest mismatch: checkpoint was trained with " + it->second +
                    " but the manifest's vocabulary hashes to " + actual);
}

void cmd_decode(const std::string& ckpt, const std::string& data_dir, const std::string& partition,
                int beam, const std::string& lm_path, double lm_weight,
                const std::string& decoder_name, const std::string& out_file, int threads) {
  const fs::path data(data_dir);
  LoadedModel lm = load_model_with_meta(ckpt);
  check_vocab_digest(lm, data);
  Vocabulary vocab = Vocabulary::load_tsv(data / "vocab.tsv");
  const DecoderKind kind = decoder_from_name(decoder_name);

  std::unique_ptr<NgramModel> ngram;
  if (lm_weight > 0 && !lm_path.empty()) ngram = std::make_unique<NgramModel>(
      NgramModel::load_arpa(lm_path, vocab));
  const double lambda = ngram ? lm_weight : 0.0;

  std::vector<ManifestRecord> records;
  for (const auto& r : read_manifest(data / "manifest.tsv"))
    if (r.partition == partition) records.push_back(r);
  if (records.empty()) throw DataError("no utterances in partition " + partition);

  std::vector<std::vector<Hypothesis>> all_hyps(records.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const TensorF feats = read_features(data / records[i].feature_path);
      all_hyps[i] = decode_utterance(*lm.model, feats, kind, beam, ngram.get(), lambda);
    }
  };
  const int nthreads = std::max(1, threads);
  if (nthreads == 1 || records.size() < 2) {
    work(0, records.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (records.size() + nthreads - 1) / nthreads;
    for (int k = 0; k < nthreads; ++k) {
      const size_t b = k * chunk, e = std::min(records.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  std::string out = "# config_digest=" + lm.meta.at("config_digest") + "\n";
  char buf[96];
  for (size_t i = 0; i < records.size(); ++i) {
    for (size_t rank = 0; rank < all_hyps[i].size(); ++rank) {
      const Hypothesis& h = all_hyps[i][rank];
      std::snprintf(buf, sizeof buf, " %zu %.6f %.6f %.6f", rank + 1, h.combined, h.acoustic,
                    h.lm);
      out += records[i].utt_id + buf;
      for (int id : h.ids) {
        out += ' ';
        out += vocab.surface(id);
      }
      out += '\n';
    }
  }
  spit(out_file, out);
  std::printf("decode: %zu utterances (%s, %s) -> %s\n", records.size(), partition.c_str(),
              decoder_name.c_str(), out_file.c_str());
}

// --- score ---------------------------------------------------------------------

struct NBestEntry {
  std::string utt_id;
  std::vector<int> ids;
};

std::vector<NBestEntry> read_nbest_rank1(const fs::path& path, const Vocabulary& vocab,
                                         std::string* digest_line) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open hypothesis file: " + path.string());
  std::vector<NBestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (digest_line && digest_line->empty()) *digest_line = line;
      continue;
    }
    auto fields = split(line, ' ');
    if (fields.size() < 5) throw DataError("bad n-best line: " + line);
    if (fields[1] != "1") continue;  // rank-1 only
    NBestEntry e;
    e.utt_id = fields[0];
    for (size_t i = 5; i < fields.size(); ++i) {
      const int id = vocab.find(fields[i]);
      if (id < 0) throw DataError("hypothesis token not in vocabulary: " + fields[i]);
      e.ids.push_back(id);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void cmd_score(const std::string& ref_manifest, const std::string& hyp_file,
               const std::string& out_file, const std::string& system,
               const std::string& project) {
  const fs::path manifest_path(ref_manifest);
  const fs::path data = manifest_path.parent_path();
  Vocabulary vocab = Vocabulary::load_tsv(data / "vocab.tsv");
  std::map<std::string, const ManifestRecord*> by_id;
  std::vector<ManifestRecord> records = read_manifest(manifest_path);
  for (const auto& r : records) by_id[r.utt_id] = &r;

  std::string digest_line;
  std::vector<NBestEntry> hyps = read_nbest_rank1(hyp_file, vocab, &digest_line);
  if (hyps.empty()) throw DataError("no rank-1 hypotheses in " + hyp_file);

  std::map<std::string, ErrorBreakdown> per_partition;
  std::string perutt;
  for (const auto& h : hyps) {
    auto it = by_id.find(h.utt_id);
    if (it == by_id.end()) throw DataError("hypothesis for unknown utterance " + h.utt_id);
    std::vector<int> ref = it->second->targets;
    std::vector<int> hyp = h.ids;
    if (project == "A") {
      ref = project_language(ref, vocab, Lang::kA);
      hyp = project_language(hyp, vocab, Lang::kA);
    } else if (project == "B") {
      ref = project_language(ref, vocab, Lang::kB);
      hyp = project_language(hyp, vocab, Lang::kB);
    }
    Alignment a = edit_distance(ref, hyp);
    attribute_errors(a, ref, hyp, vocab, per_partition[it->second->partition]);
    perutt += h.utt_id + " " + std::to_string(a.counts.errors()) + " " +
              std::to_string(a.counts.ref_len) + "\n";
  }

  std::string out = digest_line.empty() ? "" : digest_line + "\n";
  out += "partition,system,MER,ER_A,ER_B,N,S,D,I\n";
  char buf[256];
  for (const auto& [partition, bd] : per_partition) {
    ErrorBreakdown copy = bd;
    const double mer = 100.0 * copy.total.rate();
    const double er_a = 100.0 * copy.bucket(Lang::kA).rate();
    const double er_b = 100.0 * copy.bucket(Lang::kB).rate();
    std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%.4f,%lld,%lld,%lld,%lld\n",
                  partition.c_str(), system.c_str(), mer, er_a, er_b,
                  static_cast<long long>(copy.total.ref_len),
                  static_cast<long long>(copy.total.sub), static_cast<long long>(copy.total.del),
                  static_cast<long long>(copy.total.ins));
    out += buf;
  }
  spit(out_file, out);
  spit(out_file + ".perutt", perutt);
  std::printf("score: %zu utterances -> %s\n", hyps.size(), out_file.c_str());
}

// --- probe ---------------------------------------------------------------------

void cmd_probe(const std::string& ckpt, const std::string& data_dir, const std::string& out_file) {
  const fs::path data(data_dir);
  LoadedModel lm = load_model_with_meta(ckpt);
  check_vocab_digest(lm, data);
  // Refit the probe head on the frozen encoder (training utterances,
  // balanced per partition), then classify the evaluation sets.
  std::vector<Utterance> train_utts, utts;
  std::map<std::string, int> taken;
  for (const auto& r : read_manifest(data / "manifest.tsv")) {
    if (r.partition.rfind("train-", 0) == 0 && taken[r.partition]++ < 500)
      train_utts.push_back(load_utterance(data, r));
    if (r.partition.rfind("eval-", 0) == 0) utts.push_back(load_utterance(data, r));
  }
  if (utts.empty()) throw DataError("no eval-* utterances in " + data_dir);
  if (train_utts.empty()) throw DataError("no train-* utterances to fit the probe in " + data_dir);
  train_probe(*lm.model, train_utts, 300);
  ProbeResult pr = evaluate_probe(*lm.model, utts);
  std::string out = "# config_digest=" + lm.meta.at("config_digest") + "\n";
  out += "partition,accuracy,n\n";
  char buf[128];
  for (const auto& [partition, acc] : pr.accuracy_per_partition) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%lld\n", partition.c_str(), acc,
                  static_cast<long long>(pr.counts_per_partition.at(partition)));
    out += buf;
  }
  spit(out_file, out);
  std::printf("probe: -> %s\n", out_file.c_str());
}

// --- spikes --------------------------------------------------------------------

void cmd_spikes(const std::string& ckpt, const std::string& data_dir, const std::string& utt_id,
                const std::string& out_file) {
  const fs::path data(data_dir);
  LoadedModel lm = load_model_with_meta(ckpt);
  check_vocab_digest(lm, data);
  for (const auto& r : read_manifest(data / "manifest.tsv")) {
    if (r.utt_id != utt_id) continue;
    const TensorF feats = read_features(data / r.feature_path);
    ForwardGrids grids = forward_grids(*lm.model, feats, lm.model->config().has_branches());
    std::string out = "# config_digest=" + lm.meta.at("config_digest") + "\n";
    out += spikes_csv(spike_rows(grids));
    spit(out_file, out);
    std::printf("spikes: %s (%d frames) -> %s\n", utt_id.c_str(), grids.global.rows(),
                out_file.c_str());
    return;
  }
  throw DataError("utterance not found in manifest: " + utt_id);
}

// --- sigtest -------------------------------------------------------------------

std::map<std::string, int64_t> read_perutt(const fs::path& path, std::vector<std::string>* order) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open per-utterance error file: " + path.string());
  std::map<std::string, int64_t> out;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ' ');
    if (fields.size() < 2) throw DataError("bad per-utterance line: " + line);
    if (order) order->push_back(fields[0]);
    out[fields[0]] = std::stoll(fields[1]);
  }
  return out;
}

void cmd_sigtest(const std::string& file_a, const std::string& file_b, const std::string& out_file) {
  std::vector<std::string> order;
  auto a = read_perutt(file_a, &order);
  auto b = read_perutt(file_b, nullptr);
  if (a.size() != b.size())
    throw DataError("per-utterance files cover different utterance sets");
  std::vector<int64_t> e1, e2;
  for (const auto& id : order) {
    auto it = b.find(id);
    if (it == b.end()) throw DataError("utterance " + id + " missing from " + file_b);
    e1.push_back(a.at(id));
    e2.push_back(it->second);
  }
  MapssweResult r = mapsswe_test(e1, e2);
  char buf[200];
  std::snprintf(buf, sizeof buf, "n=%d mean_diff=%.6f z=%.6f p_normal=%.6g p_perm=%.6g\n", r.n,
                r.mean_diff, r.z, r.p_normal, r.p_perm);
  std::printf("%s", buf);
  if (!out_file.empty()) spit(out_file, buf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-aware encoder: bilingual recognition experiments"};
  app.require_subcommand(1);
  int threads = 1;

  std::string config_path, data_dir, out_path, in_dir, ckpt, partition = "eval-CS";
  std::string lm_path, decoder = "global", ref_manifest, hyp_file, system = "sys", project;
  std::string utt_id, perutt_a, perutt_b;
  int last_k = 5, beam = 10;
  double lm_weight = 0.0;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic bilingual corpus");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_path)->required();

  auto* train = app.add_subcommand("train", "train a model on a generated corpus");
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", out_path)->required();

  auto* average = app.add_subcommand("average", "average the last K epoch checkpoints");
  average->add_option("--in-dir", in_dir)->required();
  average->add_option("--last", last_k)->required();
  average->add_option("--out", out_path)->required();

  auto* decode = app.add_subcommand("decode", "prefix beam search decoding");
  decode->add_option("--ckpt", ckpt)->required();
  decode->add_option("--data", data_dir)->required();
  decode->add_option("--partition", partition)->required();
  decode->add_option("--beam", beam);
  decode->add_option("--lm", lm_path);
  decode->add_option("--lm-weight", lm_weight);
  decode->add_option("--decoder", decoder)->check(CLI::IsMember({"global", "auxA", "auxB"}));
  decode->add_option("--out", out_path)->required();
  decode->add_option("--threads", threads, "worker threads (1 = fully serial)");

  auto* score = app.add_subcommand("score", "score hypotheses against reference targets");
  score->add_option("--ref-manifest", ref_manifest)->required();
  score->add_option("--hyp", hyp_file)->required();
  score->add_option("--out", out_path)->required();
  score->add_option("--system", system);
  score->add_option("--project", project)->check(CLI::IsMember({"", "A", "B"}));

  auto* probe = app.add_subcommand("probe", "utterance-level language probe accuracy");
  probe->add_option("--ckpt", ckpt)->required();
  probe->add_option("--data", data_dir)->required();
  probe->add_option("--out", out_path)->required();

  auto* spikes = app.add_subcommand("spikes", "per-frame CTC spike export for one utterance");
  spikes->add_option("--ckpt", ckpt)->required();
  spikes->add_option("--data", data_dir)->required();
  spikes->add_option("--utt", utt_id)->required();
  spikes->add_option("--out", out_path)->required();

  auto* sigtest = app.add_subcommand("sigtest", "matched-pairs significance test");
  sigtest->add_option("--per-utt-a", perutt_a)->required();
  sigtest->add_option("--per-utt-b", perutt_b)->required();
  sigtest->add_option("--out", out_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) cmd_gen_data(config_path, out_path);
    else if (train->parsed()) cmd_train(config_path, data_dir, out_path);
    else if (average->parsed()) cmd_average(in_dir, last_k, out_path);
    else if (decode->parsed())
      cmd_decode(ckpt, data_dir, partition, beam, lm_path, lm_weight, decoder, out_path, threads);
    else if (score->parsed()) cmd_score(ref_manifest, hyp_file, out_path, system, project);
    else if (probe->parsed()) cmd_probe(ckpt, data_dir, out_path);
    else if (spikes->parsed()) cmd_spikes(ckpt, data_dir, utt_id, out_path);
    else if (sigtest->parsed()) cmd_sigtest(perutt_a, perutt_b, out_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 4;
  }
  return 0;
}
