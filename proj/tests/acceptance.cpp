// Acceptance suite: runs every gate criterion end to end and prints one
// PASS/FAIL line per criterion. Oracle criteria run in-process against the
// library; experiment criteria drive the command-line tool exactly as a
// user would. Exits nonzero if any criterion fails.
//
//   lae_acceptance --cli <path-to-lae-binary> --workdir <scratch-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lae/checkpoint.hpp"
#include "lae/config.hpp"
#include "lae/corpus.hpp"
#include "lae/ctc.hpp"
#include "lae/analysis.hpp"
#include "lae/masking.hpp"
#include "lae/model.hpp"
#include "lae/simulate.hpp"
#include "lae/training.hpp"
#include "test_util.hpp"

using namespace lae;
using namespace lae::testutil;
namespace fs = std::filesystem;

namespace {

// Stock desk-scale experiment. Corpus sizes follow the acceptance contract
// (2000+2000 monolingual, 1000 native code-switch, 200 per eval set).
// Durations overlap (8..16) so that separating adjacent repeats of one
// token requires genuine duration modeling, and the inventory is small
// enough that repeats occur regularly; this keeps the task unsaturated at
// the stock training budget.
const char* kStockBase =
    "seed = 20260810\n"
    "arch = lae\n"
    "tokens_per_lang = 12\n"
    "noise_std = 0.3\n"
    "dur_min = 8\n"
    "dur_max = 16\n"
    "utt_tokens_min = 6\n"
    "utt_tokens_max = 12\n"
    "train_mono_a = 2000\n"
    "train_mono_b = 2000\n"
    "train_cs = 1000\n"
    "train_simu_cs = 0\n"
    "eval_mono_a = 200\n"
    "eval_mono_b = 200\n"
    "eval_cs = 200\n"
    "epochs = 12\n"
    "batch_size = 16\n"
    "peak_lr = 1e-3\n"
    "warmup_steps = 500\n"
    "avg_last_k = 5\n"
    "beam = 10\n"
    "lm_weight = 0.2\n"
    "lm_order = 3\n";

struct Runner {
  std::string cli;
  fs::path work;
  int failures = 0;

  void criterion(int n, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", n, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }

  int sh(const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  }

  void must(const std::string& args) {
    if (sh(args) != 0) throw std::runtime_error("CLI step failed: " + args);
  }

  std::string p(const std::string& rel) const { return (work / rel).string(); }
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// --- criterion 1: CTC oracle ---------------------------------------------------

void criterion_1(Runner& r) {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = std::mt19937_64(101);
  std::uniform_int_distribution<int> t_dist(1, 6), v_dist(2, 4), len_dist(0, 6);
  int checked = 0;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int T = t_dist(rng), V = v_dist(rng);
    TensorD grid = random_log_grid<double>(T, V, rng);
    std::uniform_int_distribution<int> tok(1, V - 1);
    std::vector<int> target(std::min(len_dist(rng), T));
    for (auto& v : target) v = tok(rng);
    const double brute = brute_force_ctc_prob(grid, target, kBlankId);
    const auto res = ctc_loss(grid, target);
    const double mine = std::isinf(res.loss) ? 0.0 : std::exp(-res.loss);
    worst = std::max(worst, std::abs(mine - brute));
    ++checked;
  }
  // partition property: total probability over all feasible targets
  double worst_partition = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 1 + trial % 4, V = 3;
    TensorD grid = random_log_grid<double>(T, V, rng);
    double total = 0;
    std::vector<std::vector<int>> level{{}};
    for (int len = 0; len <= T; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& seq : level) {
        auto res = ctc_loss(grid, seq);
        if (res.feasible) total += std::exp(-res.loss);
        if (len < T)
          for (int tokid = 1; tokid < V; ++tokid) {
            auto ext = seq;
            ext.push_back(tokid);
            next.push_back(std::move(ext));
          }
      }
      level = std::move(next);
    }
    worst_partition = std::max(worst_partition, std::abs(total - 1.0));
  }
  const double secs = elapsed_s(t0);
  r.criterion(1, worst < 1e-9 && worst_partition < 1e-9 && secs < 10.0,
              fmt("CTC oracle: %d grids, max |P - brute| = %.2e, partition residual = %.2e, %.1fs",
                  checked, worst, worst_partition, secs));
}

// --- criterion 2: gradient suite ------------------------------------------------

void criterion_2(Runner& r) {
  const auto t0 = std::chrono::steady_clock::now();
  // tiny model per the contract: D=8, one layer per block
  ModelConfig mc;
  mc.arch = Arch::kLae;
  mc.layers_shared = 1;
  mc.layers_specific = 1;
  mc.d_model = 8;
  mc.d_ff = 16;
  mc.heads = 2;
  mc.feat_dim = 4;
  mc.vocab_size = 7;
  mc.dropout = 0.0f;
  mc.seed = 202;
  Model<double> model(mc);
  Vocabulary vocab = Vocabulary::synthetic(2, 2);
  auto rng = std::mt19937_64(203);
  TensorD feats = random_tensor<double>({24, 4}, rng);
  auto masked = mask_targets({3, 5, 4}, vocab);

  auto loss_value = [&] {
    Tape<double> tape;
    Pass<double> pass{tape, true, 0};
    auto nodes = build_utt_loss(model, pass, tape.leaf(feats), masked, true, false, 2);
    return tape.value(nodes.j).data[0];
  };
  {
    Tape<double> tape;
    Pass<double> pass{tape, true, 0};
    auto nodes = build_utt_loss(model, pass, tape.leaf(feats), masked, true, false, 2);
    tape.backward(nodes.j);
    model.zero_grads();
    model.harvest_grads(pass);
  }
  std::vector<TensorD> analytic, fd;
  for (auto& [name, param] : model.params()) {
    if (name.rfind("probe.", 0) == 0) continue;
    analytic.push_back(param.grad);
    fd.push_back(std::move(fd_gradients({&param.value}, loss_value, 1e-4)[0]));
  }
  const double composite_err = joint_rel_error(analytic, fd);

  // every differentiable primitive, randomized small shapes
  double op_err = 0;
  auto check = [&](const std::function<int(Tape<double>&, const std::vector<int>&)>& program,
                   std::vector<std::vector<int>> shapes, uint64_t seed) {
    auto prng = std::mt19937_64(seed);
    std::vector<TensorD> leaves;
    for (const auto& s : shapes) leaves.push_back(random_tensor<double>(s, prng));
    auto run = [&](std::vector<TensorD>* grads) {
      Tape<double> tape;
      std::vector<int> ids;
      for (auto& l : leaves) ids.push_back(tape.leaf(l, true));
      const int loss = program(tape, ids);
      const double v = tape.value(loss).data[0];
      if (grads) {
        tape.backward(loss);
        for (int id : ids) grads->push_back(tape.grad(id));
      }
      return v;
    };
    std::vector<TensorD> a;
    run(&a);
    std::vector<TensorD*> ptrs;
    for (auto& l : leaves) ptrs.push_back(&l);
    auto f = fd_gradients(ptrs, [&] { return run(nullptr); }, 1e-4);
    op_err = std::max(op_err, joint_rel_error(a, f));
  };
  using T = Tape<double>;
  using Ids = std::vector<int>;
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::add(t, in[0], in[1])); },
        {{3, 4}, {3, 4}}, 1);
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::add_scaled(t, in[0], in[1], 0.5)); },
        {{3, 4}, {3, 4}}, 2);
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::silu(t, ops::matmul(t, in[0], in[1]))); },
        {{3, 4}, {4, 5}}, 3);
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::silu(t, ops::matmul_nt(t, in[0], in[1]))); },
        {{3, 4}, {5, 4}}, 4);
  check([](T& t, const Ids& in) {
    return ops::sum_all(t, ops::silu(t, ops::linear(t, in[0], in[1], in[2])));
  }, {{3, 4}, {4, 5}, {5}}, 5);
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::silu(t, ops::softmax_rows(t, in[0]))); },
        {{4, 5}}, 6);
  check([](T& t, const Ids& in) {
    return ops::sum_all(t, ops::silu(t, ops::log_softmax_rows(t, in[0])));
  }, {{4, 5}}, 7);
  check([](T& t, const Ids& in) {
    return ops::sum_all(t, ops::silu(t, ops::layer_norm(t, in[0], in[1], in[2])));
  }, {{4, 6}, {6}, {6}}, 8);
  check([](T& t, const Ids& in) {
    auto a = ops::slice_cols(t, in[0], 0, 3);
    auto b = ops::slice_cols(t, in[0], 3, 6);
    return ops::sum_all(t, ops::silu(t, ops::hstack(t, {b, a})));
  }, {{3, 6}}, 9);
  check([](T& t, const Ids& in) {
    return ops::sum_all(t, ops::silu(t, ops::im2col_time(t, in[0], 3, 2)));
  }, {{9, 3}}, 10);
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::silu(t, ops::mean_rows(t, in[0]))); },
        {{5, 4}}, 11);
  check([](T& t, const Ids& in) { return ops::cross_entropy_logits(t, in[0], 1); }, {{1, 4}}, 12);
  check([](T& t, const Ids& in) {
    return ops::ctc(t, ops::log_softmax_rows(t, in[0]), std::vector<int>{1, 2, 1});
  }, {{6, 3}}, 13);
  check([](T& t, const Ids& in) {
    TensorD mask({3, 4});
    for (size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = i % 2 ? 1.0 : 0.0;
    return ops::sum_all(t, ops::mul_mask(t, in[0], std::move(mask), 2.0));
  }, {{3, 4}}, 14);
  check([](T& t, const Ids& in) { return ops::sum_all(t, ops::scale(t, in[0], -0.7)); },
        {{3, 4}}, 15);

  const double secs = elapsed_s(t0);
  r.criterion(2, composite_err < 1e-6 && op_err < 1e-6 && secs < 60.0,
              fmt("gradient suite: composite rel err = %.2e, per-op rel err = %.2e, %.1fs",
                  composite_err, op_err, secs));
}

// --- criterion 3: masking invariants --------------------------------------------

void criterion_3(Runner& r) {
  Vocabulary vocab = Vocabulary::synthetic(6, 6);
  auto rng = std::mt19937_64(301);
  std::uniform_int_distribution<int> len(0, 14), tok(3, 14);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> y(len(rng));
    for (auto& v : y) v = tok(rng);
    auto m = mask_targets(y, vocab);
    if (m.y_a.size() != y.size() || m.y_b.size() != y.size()) ++violations;
    for (size_t i = 0; i < y.size(); ++i) {
      const bool a_real = m.y_a[i] != Vocabulary::kMaskB;
      const bool b_real = m.y_b[i] != Vocabulary::kMaskA;
      if (a_real == b_real) ++violations;
      if ((a_real ? m.y_a[i] : m.y_b[i]) != y[i]) ++violations;
      if (a_real && vocab.lang(m.y_a[i]) != Lang::kA) ++violations;
      if (b_real && vocab.lang(m.y_b[i]) != Lang::kB) ++violations;
    }
    if (reconstruct_targets(m) != y) ++violations;
  }
  r.criterion(3, violations == 0,
              fmt("masking invariants over 1000 random targets: %d violations", violations));
}

// --- criterion 4: Eq. 3 / Eq. 4 exactness ----------------------------------------

void criterion_4(Runner& r) {
  // Eq. 4: combine identity and commutativity, exact
  auto rng = std::mt19937_64(401);
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    TensorF x = random_tensor<float>({6, 8}, rng);
    TensorF y = random_tensor<float>({6, 8}, rng);
    TensorF zeros({6, 8});
    if (combine(x, zeros).data != x.data) ok = false;
    if (combine(x, y).data != combine(y, x).data) ok = false;
  }
  // Eq. 3 on logged training metrics, machine-exact
  SimSpec spec;
  spec.tokens_per_lang = 3;
  spec.feat_dim = 8;
  spec.train_mono_a = 8;
  spec.train_mono_b = 8;
  spec.train_cs = 6;
  spec.eval_mono_a = spec.eval_mono_b = spec.eval_cs = 0;
  spec.utt_tokens_min = 2;
  spec.utt_tokens_max = 4;
  spec.seed = 402;
  GeneratedCorpus corpus = gen_corpus(spec);
  ModelConfig mc;
  mc.arch = Arch::kLae;
  mc.layers_shared = 1;
  mc.layers_specific = 1;
  mc.d_model = 8;
  mc.d_ff = 16;
  mc.heads = 2;
  mc.feat_dim = 8;
  mc.vocab_size = corpus.vocab.size();
  mc.seed = 403;
  Model<float> model(mc);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.warmup_steps = 5;
  tc.seed = 404;
  const fs::path dir = fs::path(r.work) / "eq3_check";
  fs::remove_all(dir);
  auto outcome = train_model(model, corpus.utterances, corpus.vocab, tc, dir, sha256("eq3"), "v");
  for (const auto& m : outcome.metrics)
    if (m.j != m.j_ori + (m.j_a + m.j_b) / 2.0) ok = false;
  // per-utterance node value agrees with the printed decomposition to float eps
  {
    Tape<float> tape;
    Pass<float> pass{tape, true, 0};
    auto masked = mask_targets(corpus.utterances[0].targets, corpus.vocab);
    auto nodes = build_utt_loss(model, pass, tape.leaf(corpus.utterances[0].features), masked,
                                true, false, 0);
    const float j = tape.value(nodes.j).data[0];
    const float expect = tape.value(nodes.j_ori).data[0] +
                         0.5f * (tape.value(nodes.j_a).data[0] + tape.value(nodes.j_b).data[0]);
    if (std::abs(j - expect) > 4 * std::numeric_limits<float>::epsilon() * std::max(1.0f, j))
      ok = false;
  }
  r.criterion(4, ok, "Eq. 3 logged identity and Eq. 4 combine identities hold exactly");
}

// --- criterion 11: beam-search oracle -------------------------------------------

void criterion_11(Runner& r) {
  auto rng = std::mt19937_64(1101);
  std::uniform_int_distribution<int> t_dist(1, 4), v_dist(2, 3);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int T = t_dist(rng), V = v_dist(rng);
    TensorD grid = random_log_grid<double>(T, V, rng);
    TensorF gridf({T, V});
    for (size_t i = 0; i < grid.data.size(); ++i) gridf.data[i] = float(grid.data[i]);
    auto totals = enumerate_labelings(grid, kBlankId);
    std::vector<int> best;
    double best_p = -1;
    for (const auto& [labeling, prob] : totals)
      if (prob > best_p) {
        best_p = prob;
        best = labeling;
      }
    auto hyps = prefix_beam_search(gridf, 4096);
    if (hyps.empty() || hyps[0].ids != best) ++mismatches;
  }
  r.criterion(11, mismatches == 0,
              fmt("beam-search oracle: 100 grids, %d top-1 mismatches vs brute force", mismatches));
}

// --- experiment-scale criteria ---------------------------------------------------

struct ScoreRow {
  double mer = -1, er_a = -1, er_b = -1;
  long long n = 0, sub = 0, del = 0, ins = 0;
};

ScoreRow parse_score(const fs::path& csv) {
  std::ifstream is(csv);
  if (!is) throw std::runtime_error("missing score file: " + csv.string());
  std::string line;
  ScoreRow row;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("partition,", 0) == 0) continue;
    auto fields = split(line, ',');
    row.mer = std::stod(fields[2]);
    row.er_a = std::stod(fields[3]);
    row.er_b = std::stod(fields[4]);
    row.n = std::stoll(fields[5]);
    row.sub = std::stoll(fields[6]);
    row.del = std::stoll(fields[7]);
    row.ins = std::stoll(fields[8]);
  }
  return row;
}

std::map<std::string, double> parse_probe(const fs::path& csv) {
  std::ifstream is(csv);
  if (!is) throw std::runtime_error("missing probe file: " + csv.string());
  std::map<std::string, double> acc;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("partition,", 0) == 0) continue;
    auto fields = split(line, ',');
    acc[fields[0]] = std::stod(fields[1]);
  }
  return acc;
}

std::pair<double, double> parse_sigtest(const fs::path& file) {
  const std::string text = slurp(file);
  double p_normal = 1.0, p_perm = 1.0;
  std::sscanf(text.c_str() + text.find("p_normal="), "p_normal=%lf", &p_normal);
  std::sscanf(text.c_str() + text.find("p_perm="), "p_perm=%lf", &p_perm);
  return {p_normal, p_perm};
}

struct StockArtifacts {
  std::string data = "stock/data";
  std::string lae_avg = "stock/run_lae/avg.laec";
  std::string van_avg = "stock/run_van/avg.laec";
};

// Runs the full stock pipeline (both systems) into `prefix`; every step uses
// --threads 1 so reports reproduce byte for byte.
void run_stock_pipeline(Runner& r, const std::string& prefix) {
  spit(r.work / prefix / "lae.conf", kStockBase);
  std::string van = kStockBase;
  van.replace(van.find("arch = lae"), 10, "arch = vanilla");
  spit(r.work / prefix / "van.conf", van);

  r.must("gen-data --config " + r.p(prefix + "/lae.conf") + " --out " + r.p(prefix + "/data"));
  for (std::string sys : {"lae", "van"}) {
    r.must("train --config " + r.p(prefix + "/" + sys + ".conf") + " --data " +
           r.p(prefix + "/data") + " --out " + r.p(prefix + "/run_" + sys));
    r.must("average --in-dir " + r.p(prefix + "/run_" + sys) + " --last 5 --out " +
           r.p(prefix + "/run_" + sys + "/avg.laec"));
    for (std::string part : {"eval-CS", "eval-mono-A", "eval-mono-B"}) {
      r.must("decode --ckpt " + r.p(prefix + "/run_" + sys + "/avg.laec") + " --data " +
             r.p(prefix + "/data") + " --partition " + part +
             " --beam 10 --decoder global --threads 1 --out " +
             r.p(prefix + "/nbest_" + sys + "_" + part + ".txt"));
      r.must("score --ref-manifest " + r.p(prefix + "/data/manifest.tsv") + " --hyp " +
             r.p(prefix + "/nbest_" + sys + "_" + part + ".txt") + " --system " + sys + " --out " +
             r.p(prefix + "/score_" + sys + "_" + part + ".csv"));
    }
  }
  r.must("sigtest --per-utt-a " + r.p(prefix + "/score_van_eval-CS.csv.perutt") +
         " --per-utt-b " + r.p(prefix + "/score_lae_eval-CS.csv.perutt") + " --out " +
         r.p(prefix + "/sigtest_cs.txt"));
  // criterion 7/8/9 artifacts, part of the reproducible report set
  r.must("probe --ckpt " + r.p(prefix + "/run_lae/avg.laec") + " --data " + r.p(prefix + "/data") +
         " --out " + r.p(prefix + "/probe.csv"));
  for (std::string part : {"eval-mono-A", "eval-mono-B"}) {
    r.must("decode --ckpt " + r.p(prefix + "/run_lae/avg.laec") + " --data " +
           r.p(prefix + "/data") + " --partition " + part +
           " --beam 10 --decoder auxA --threads 1 --out " +
           r.p(prefix + "/nbest_auxA_" + part + ".txt"));
  }
  r.must("score --ref-manifest " + r.p(prefix + "/data/manifest.tsv") + " --hyp " +
         r.p(prefix + "/nbest_auxA_eval-mono-A.txt") + " --system auxA --project A --out " +
         r.p(prefix + "/score_auxA_eval-mono-A.csv"));
  for (int i = 0; i < 5; ++i) {
    char utt[64];
    std::snprintf(utt, sizeof utt, "eval-CS_%05d", i);
    r.must("spikes --ckpt " + r.p(prefix + "/run_lae/avg.laec") + " --data " +
           r.p(prefix + "/data") + " --utt " + std::string(utt) + " --out " +
           r.p(prefix + "/spikes_" + utt + ".csv"));
  }
}

void criterion_5(Runner& r, const StockArtifacts& art) {
  const auto t0 = std::chrono::steady_clock::now();
  run_stock_pipeline(r, "stock");
  const double secs = elapsed_s(t0);

  ScoreRow lae_cs = parse_score(r.work / "stock/score_lae_eval-CS.csv");
  ScoreRow van_cs = parse_score(r.work / "stock/score_van_eval-CS.csv");
  ScoreRow lae_a = parse_score(r.work / "stock/score_lae_eval-mono-A.csv");
  ScoreRow van_a = parse_score(r.work / "stock/score_van_eval-mono-A.csv");
  ScoreRow lae_b = parse_score(r.work / "stock/score_lae_eval-mono-B.csv");
  ScoreRow van_b = parse_score(r.work / "stock/score_van_eval-mono-B.csv");
  auto [p_normal, p_perm] = parse_sigtest(r.work / "stock/sigtest_cs.txt");

  const bool trend = lae_cs.mer < van_cs.mer && p_normal < 0.05;
  const bool mono_ok = lae_a.mer <= van_a.mer * 1.05 + 1e-9 && lae_b.mer <= van_b.mer * 1.05 + 1e-9;
  const bool in_time = secs <= 45 * 60;
  r.criterion(5, trend && mono_ok && in_time,
              fmt("Table-1 trend: CS MER lae %.2f < vanilla %.2f (p_norm %.2g, p_perm %.2g); "
                  "mono-A %.2f vs %.2f, mono-B %.2f vs %.2f; %.0fs",
                  lae_cs.mer, van_cs.mer, p_normal, p_perm, lae_a.mer, van_a.mer, lae_b.mer,
                  van_b.mer, secs));
  (void)art;
}

void criterion_6(Runner& r) {
  std::string mono_cfg = kStockBase;
  mono_cfg.replace(mono_cfg.find("train_cs = 1000"), 15, "train_cs = 0");
  std::string simu_cfg = mono_cfg;
  simu_cfg.replace(simu_cfg.find("train_simu_cs = 0"), 17, "train_simu_cs = 1000");
  spit(r.work / "t4/mono.conf", mono_cfg);
  spit(r.work / "t4/simu.conf", simu_cfg);

  for (std::string v : {"mono", "simu"}) {
    r.must("gen-data --config " + r.p("t4/" + v + ".conf") + " --out " + r.p("t4/data_" + v));
    r.must("train --config " + r.p("t4/" + v + ".conf") + " --data " + r.p("t4/data_" + v) +
           " --out " + r.p("t4/run_" + v));
    r.must("average --in-dir " + r.p("t4/run_" + v) + " --last 5 --out " +
           r.p("t4/run_" + v + "/avg.laec"));
    r.must("decode --ckpt " + r.p("t4/run_" + v + "/avg.laec") + " --data " + r.p("t4/data_" + v) +
           " --partition eval-CS --beam 10 --decoder global --threads 1 --out " +
           r.p("t4/nbest_" + v + ".txt"));
    r.must("score --ref-manifest " + r.p("t4/data_" + v + "/manifest.tsv") + " --hyp " +
           r.p("t4/nbest_" + v + ".txt") + " --system " + v + " --out " +
           r.p("t4/score_" + v + ".csv"));
  }
  // the paired test requires the two corpora to share the eval partitions
  const bool same_eval = slurp(r.work / "t4/data_mono/feats/eval-CS_00000.laef") ==
                         slurp(r.work / "t4/data_simu/feats/eval-CS_00000.laef");
  r.must("sigtest --per-utt-a " + r.p("t4/score_mono.csv.perutt") + " --per-utt-b " +
         r.p("t4/score_simu.csv.perutt") + " --out " + r.p("t4/sigtest.txt"));
  ScoreRow mono = parse_score(r.work / "t4/score_mono.csv");
  ScoreRow simu = parse_score(r.work / "t4/score_simu.csv");
  auto [p_normal, p_perm] = parse_sigtest(r.work / "t4/sigtest.txt");
  r.criterion(6, same_eval && simu.mer < mono.mer && p_normal < 0.05,
              fmt("Table-4 trend: CS MER mono-only %.2f -> +Simu-CS %.2f (p_norm %.2g, p_perm %.2g)",
                  mono.mer, simu.mer, p_normal, p_perm));
}

void criterion_7(Runner& r) {
  auto acc = parse_probe(r.work / "stock/probe.csv");
  const bool ok = acc.size() == 3 && acc.at("eval-CS") >= 0.95 && acc.at("eval-mono-A") >= 0.95 &&
                  acc.at("eval-mono-B") >= 0.95;
  r.criterion(7, ok,
              fmt("Table-2 probe accuracy: CS %.4f, mono-A %.4f, mono-B %.4f (gate 0.95)",
                  acc.count("eval-CS") ? acc.at("eval-CS") : -1,
                  acc.count("eval-mono-A") ? acc.at("eval-mono-A") : -1,
                  acc.count("eval-mono-B") ? acc.at("eval-mono-B") : -1));
}

void criterion_8(Runner& r, const StockArtifacts& art) {
  // (a) the A decoder on mono-B emits no language-B tokens at all
  Vocabulary vocab = Vocabulary::load_tsv(r.work / art.data / "vocab.tsv");
  std::ifstream nbest(r.work / "stock/nbest_auxA_eval-mono-B.txt");
  std::string line;
  int64_t b_tokens = 0, hyps = 0;
  while (std::getline(nbest, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ' ');
    if (fields.size() < 5 || fields[1] != "1") continue;
    ++hyps;
    for (size_t i = 5; i < fields.size(); ++i) {
      const int id = vocab.find(fields[i]);
      if (id >= 0 && vocab.lang(id) == Lang::kB) ++b_tokens;
    }
  }
  // (b) on mono-A it stays within 20% relative of the global decoder
  ScoreRow aux_a = parse_score(r.work / "stock/score_auxA_eval-mono-A.csv");
  ScoreRow glob_a = parse_score(r.work / "stock/score_lae_eval-mono-A.csv");
  const double rel = glob_a.mer > 0 ? std::abs(aux_a.mer - glob_a.mer) / glob_a.mer
                                    : (aux_a.mer > 0 ? 1e9 : 0.0);
  r.criterion(8, hyps == 200 && b_tokens == 0 && rel <= 0.20,
              fmt("Table-3: auxA on mono-B emitted %lld B tokens over %lld hyps; "
                  "auxA mono-A ER %.2f vs global %.2f (rel %.1f%%)",
                  (long long)b_tokens, (long long)hyps, aux_a.mer, glob_a.mer, 100 * rel));
}

void criterion_9(Runner& r, const StockArtifacts& art) {
  auto meta = read_meta_file(r.p(art.lae_avg) + ".meta");
  Model<float> model(model_config_from_meta(meta));
  load_model(r.p(art.lae_avg), model);
  MaskSpikeStats stats;
  const fs::path data = r.work / art.data;
  // idle-branch emergence on mono-A: B-branch non-blank spikes show mask_A
  int64_t idle_nonblank = 0, idle_mask = 0;
  for (const auto& rec : read_manifest(data / "manifest.tsv")) {
    if (rec.partition == "eval-CS") {
      Utterance u = load_utterance(data, rec);
      accumulate_mask_spikes(model, u, stats);
    } else if (rec.partition == "eval-mono-A") {
      Utterance u = load_utterance(data, rec);
      ForwardGrids grids = forward_grids(model, u.features, true);
      for (const auto& row : spike_rows(grids)) {
        if (row.aux_b_top == kBlankId) continue;
        ++idle_nonblank;
        if (row.aux_b_top == Vocabulary::kMaskA) ++idle_mask;
      }
    }
  }
  const double idle_frac = idle_nonblank > 0 ? double(idle_mask) / double(idle_nonblank) : 1.0;
  // the five exported spike CSVs: T' data rows each, probabilities in [0, 1]
  bool csvs_ok = true;
  for (int i = 0; i < 5; ++i) {
    char utt[64];
    std::snprintf(utt, sizeof utt, "eval-CS_%05d", i);
    const fs::path csv = r.work / "stock" / (std::string("spikes_") + utt + ".csv");
    if (!fs::exists(csv)) {
      csvs_ok = false;
      continue;
    }
    const fs::path feat = data / "feats" / (std::string(utt) + ".laef");
    const int expect_rows = subsampled_length(read_features(feat).rows());
    std::ifstream is(csv);
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("frame,", 0) == 0) continue;
      ++rows;
      auto fields = split(line, ',');
      for (size_t f : {2u, 3u, 5u, 6u, 8u, 9u}) {
        const double p = std::stod(fields[f]);
        if (p < 0.0 || p > 1.0) csvs_ok = false;
      }
    }
    if (rows != expect_rows) csvs_ok = false;
  }
  r.criterion(9, stats.fraction() >= 0.90 && idle_frac >= 0.95 && csvs_ok,
              fmt("Fig.-2 idle spikes: %.1f%% of %lld off-language CS spikes are the mask token; "
                  "mono-A idle branch %.1f%% mask; 5 spike CSVs verified",
                  100 * stats.fraction(), (long long)stats.offlang_spikes, 100 * idle_frac));
}

void criterion_10(Runner& r, const StockArtifacts& art) {
  r.must("decode --ckpt " + r.p(art.lae_avg) + " --data " + r.p(art.data) +
         " --partition eval-CS --beam 10 --decoder global --lm " + r.p(art.data + "/lm.arpa") +
         " --lm-weight 0.2 --threads 1 --out " + r.p("stock/nbest_lae_cs_lm.txt"));
  r.must("score --ref-manifest " + r.p(art.data + "/manifest.tsv") + " --hyp " +
         r.p("stock/nbest_lae_cs_lm.txt") + " --system lae+lm --out " +
         r.p("stock/score_lae_cs_lm.csv"));
  ScoreRow fused = parse_score(r.work / "stock/score_lae_cs_lm.csv");
  ScoreRow plain = parse_score(r.work / "stock/score_lae_eval-CS.csv");
  r.criterion(10, fused.mer <= plain.mer + 0.2,
              fmt("LM fusion at 0.2: CS MER %.2f with LM vs %.2f without (allowed +0.2)",
                  fused.mer, plain.mer));
}

void criterion_12(Runner& r) {
  run_stock_pipeline(r, "stock_rerun");
  std::vector<std::string> reports = {
      "run_lae/metrics.csv", "run_van/metrics.csv", "sigtest_cs.txt", "probe.csv",
      "score_auxA_eval-mono-A.csv", "nbest_auxA_eval-mono-A.txt", "nbest_auxA_eval-mono-B.txt"};
  for (std::string sys : {"lae", "van"})
    for (std::string part : {"eval-CS", "eval-mono-A", "eval-mono-B"}) {
      reports.push_back("nbest_" + sys + "_" + part + ".txt");
      reports.push_back("score_" + sys + "_" + part + ".csv");
      reports.push_back("score_" + sys + "_" + part + ".csv.perutt");
    }
  for (int i = 0; i < 5; ++i) {
    char utt[64];
    std::snprintf(utt, sizeof utt, "spikes_eval-CS_%05d.csv", i);
    reports.push_back(utt);
  }
  int diffs = 0;
  for (const auto& rel : reports)
    if (slurp(r.work / "stock" / rel) != slurp(r.work / "stock_rerun" / rel)) ++diffs;
  r.criterion(12, diffs == 0,
              fmt("determinism: %zu reports byte-compared across a full rerun, %d differ",
                  reports.size(), diffs));
}

}  // namespace

int main(int argc, char** argv) {
  Runner r;
  r.work = "acceptance_work";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--cli") r.cli = argv[i + 1];
    if (std::string(argv[i]) == "--workdir") r.work = argv[i + 1];
  }
  if (r.cli.empty()) {
    std::fprintf(stderr, "usage: lae_acceptance --cli <lae-binary> [--workdir <dir>]\n");
    return 2;
  }
  fs::remove_all(r.work);
  fs::create_directories(r.work);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    criterion_1(r);
    criterion_2(r);
    criterion_3(r);
    criterion_4(r);
    criterion_11(r);
    StockArtifacts art;
    criterion_5(r, art);
    criterion_7(r);
    criterion_8(r, art);
    criterion_9(r, art);
    criterion_10(r, art);
    criterion_6(r);
    criterion_12(r);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 99;
  }
  std::printf("acceptance finished in %.0fs: %d criteria failed\n", elapsed_s(t0), r.failures);
  return r.failures;
}
