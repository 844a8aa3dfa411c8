// Model assembly: subsampler, pre-norm attention/feed-forward encoder
// stacks, and the three architectures under comparison.
//
//   vanilla:    subsampler -> N_total shared layers -> global decoder
//   bi-encoder: subsampler -> 1 shared layer -> two parallel branches
//   lae:        subsampler -> N_shared layers -> two parallel branches
//
// Branch outputs combine by frame-level addition into h_bil. Branch models
// carry one parameter-shared auxiliary decoder used for both languages, and
// every model carries a gradient-isolated 3-way language probe head.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lae/ctc.hpp"
#include "lae/tape.hpp"
#include "lae/tensor.hpp"
#include "lae/util.hpp"

namespace lae {

enum class Arch { kVanilla, kBiEncoder, kLae };

inline const char* arch_name(Arch a) {
  switch (a) {
    case Arch::kVanilla: return "vanilla";
    case Arch::kBiEncoder: return "bi-encoder";
    default: return "lae";
  }
}

inline Arch arch_from_name(const std::string& s) {
  if (s == "vanilla") return Arch::kVanilla;
  if (s == "bi-encoder") return Arch::kBiEncoder;
  if (s == "lae") return Arch::kLae;
  throw ConfigError("unknown architecture: " + s);
}

struct ModelConfig {
  Arch arch = Arch::kLae;
  int layers_total = 5;     // vanilla
  int layers_each = 2;      // bi-encoder branch depth (over a 1-layer shared front)
  int layers_shared = 3;    // lae
  int layers_specific = 1;  // lae
  int d_model = 64;
  int d_ff = 128;
  int heads = 4;
  int feat_dim = 16;
  int vocab_size = 43;
  float dropout = 0.1f;
  uint64_t seed = 1;

  int shared_depth() const {
    switch (arch) {
      case Arch::kVanilla: return layers_total;
      case Arch::kBiEncoder: return 1;
      default: return layers_shared;
    }
  }
  int branch_depth() const {
    switch (arch) {
      case Arch::kVanilla: return 0;
      case Arch::kBiEncoder: return layers_each;
      default: return layers_specific;
    }
  }
  bool has_branches() const { return arch != Arch::kVanilla; }

  void validate() const {
    if (d_model < 1 || d_ff < 1 || heads < 1 || feat_dim < 1 || vocab_size < 4)
      throw ConfigError("model dimensions must be positive (vocab >= 4)");
    if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (arch == Arch::kVanilla && layers_total < 1)
      throw ConfigError("vanilla requires layers_total >= 1");
    if (arch == Arch::kBiEncoder && layers_each < 1)
      throw ConfigError("bi-encoder requires layers_each >= 1");
    if (arch == Arch::kLae && (layers_shared < 1 || layers_specific < 1))
      throw ConfigError("lae requires layers_shared >= 1 and layers_specific >= 1");
  }
};

// Two stride-2 width-3 stages: L1 = floor((T-3)/2) + 1, T' = floor((L1-3)/2) + 1.
// Equivalent to T' = floor((floor((T-1)/2) - 1) / 2); minimum admitted T is 7.
constexpr int kMinFrames = 7;
inline int subsampled_length(int frames) {
  if (frames < kMinFrames)
    throw DataError("utterance too short for the subsampler: T=" + std::to_string(frames) +
                    " < " + std::to_string(kMinFrames));
  const int l1 = (frames - 3) / 2 + 1;
  return (l1 - 3) / 2 + 1;
}

template <typename Real>
struct Param {
  TensorT<Real> value;
  TensorT<Real> grad;
  bool trainable = true;
};

// Per-forward bookkeeping: parameter leaves already placed on the tape plus
// the dropout stream.
template <typename Real>
struct Pass {
  Tape<Real>& tape;
  bool training = false;
  uint64_t dropout_seed = 0;
  int dropout_ctr = 0;
  std::unordered_map<std::string, int> leaves;
};

struct EncodeOut {
  int h_a = -1;
  int h_b = -1;
  int h_bil = -1;
};

template <typename Real>
TensorT<Real> sinusoidal_pe(int rows, int dim) {
  TensorT<Real> pe({rows, dim});
  for (int t = 0; t < rows; ++t)
    for (int i = 0; i < dim / 2; ++i) {
      const Real angle = Real(t) / std::pow(Real(10000), Real(2 * i) / Real(dim));
      pe.at(t, 2 * i) = std::sin(angle);
      pe.at(t, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

template <typename Real>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init_params();
  }

  const ModelConfig& config() const { return cfg_; }
  std::map<std::string, Param<Real>>& params() { return params_; }
  const std::map<std::string, Param<Real>>& params() const { return params_; }

  Param<Real>& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_)
      if (p.trainable) n += p.value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, p] : params_) p.grad.fill(Real(0));
  }

  // --- forward pieces -------------------------------------------------------

  int leaf(Pass<Real>& pass, const std::string& name) {
    auto it = pass.leaves.find(name);
    if (it != pass.leaves.end()) return it->second;
    Param<Real>& p = param(name);
    const int id = pass.tape.leaf(p.value, pass.training && p.trainable);
    pass.leaves.emplace(name, id);
    return id;
  }

  int subsample(Pass<Real>& pass, int features) {
    auto& t = pass.tape;
    subsampled_length(t.value(features).rows());  // admission check
    int x = ops::im2col_time(t, features, 3, 2);
    x = ops::linear(t, x, leaf(pass, "subsample.conv0.w"), leaf(pass, "subsample.conv0.b"));
    x = ops::silu(t, x);
    x = ops::im2col_time(t, x, 3, 2);
    x = ops::linear(t, x, leaf(pass, "subsample.conv1.w"), leaf(pass, "subsample.conv1.b"));
    x = ops::silu(t, x);
    x = ops::linear(t, x, leaf(pass, "subsample.proj.w"), leaf(pass, "subsample.proj.b"));
    x = ops::add_const(t, x, sinusoidal_pe<Real>(t.value(x).rows(), cfg_.d_model));
    return x;
  }

  int encoder_layer(Pass<Real>& pass, const std::string& prefix, int x) {
    auto& t = pass.tape;
    // attention sublayer, pre-norm
    int a = ops::layer_norm(t, x, leaf(pass, prefix + ".ln1.g"), leaf(pass, prefix + ".ln1.b"));
    a = attention(pass, prefix + ".attn", a);
    a = dropout(pass, a);
    x = ops::add(t, x, a);
    // feed-forward sublayer, pre-norm
    int f = ops::layer_norm(t, x, leaf(pass, prefix + ".ln2.g"), leaf(pass, prefix + ".ln2.b"));
    f = ops::linear(t, f, leaf(pass, prefix + ".ff.w1"), leaf(pass, prefix + ".ff.b1"));
    f = ops::silu(t, f);
    f = ops::linear(t, f, leaf(pass, prefix + ".ff.w2"), leaf(pass, prefix + ".ff.b2"));
    f = dropout(pass, f);
    x = ops::add(t, x, f);
    return x;
  }

  int stack(Pass<Real>& pass, const std::string& prefix, int depth, int x) {
    for (int i = 0; i < depth; ++i) x = encoder_layer(pass, prefix + ".l" + std::to_string(i), x);
    return x;
  }

  EncodeOut encode(Pass<Real>& pass, int features) {
    auto& t = pass.tape;
    EncodeOut out;
    int x = subsample(pass, features);
    x = stack(pass, "shared", cfg_.shared_depth(), x);
    if (!cfg_.has_branches()) {
      out.h_bil = ops::layer_norm(t, x, leaf(pass, "shared.ln_out.g"),
                                  leaf(pass, "shared.ln_out.b"));
      return out;
    }
    int ha = stack(pass, "block_a", cfg_.branch_depth(), x);
    out.h_a = ops::layer_norm(t, ha, leaf(pass, "block_a.ln_out.g"),
                              leaf(pass, "block_a.ln_out.b"));
    int hb = stack(pass, "block_b", cfg_.branch_depth(), x);
    out.h_b = ops::layer_norm(t, hb, leaf(pass, "block_b.ln_out.g"),
                              leaf(pass, "block_b.ln_out.b"));
    out.h_bil = ops::add(t, out.h_a, out.h_b);  // Eq. 4: frame-level addition
    return out;
  }

  int global_logits(Pass<Real>& pass, int h_bil) {
    return ops::linear(pass.tape, h_bil, leaf(pass, "dec_global.w"),
                       leaf(pass, "dec_global.b"));
  }

  // One shared auxiliary decoder serves both language branches.
  int aux_logits(Pass<Real>& pass, int h_lang) {
    if (!cfg_.has_branches()) throw ConfigError("auxiliary decoder requires a branch architecture");
    return ops::linear(pass.tape, h_lang, leaf(pass, "dec_aux.w"),
                       leaf(pass, "dec_aux.b"));
  }

  // Utterance-level probe over the time-mean of h_bil; the stop_gradient
  // keeps probe training from shaping the encoder.
  int probe_logits(Pass<Real>& pass, int h_bil) {
    auto& t = pass.tape;
    int x = ops::stop_gradient(t, h_bil);
    x = ops::mean_rows(t, x);
    return ops::linear(t, x, leaf(pass, "probe.w"), leaf(pass, "probe.b"));
  }

  // Accumulates tape gradients of this pass into the parameter grad buffers.
  void harvest_grads(Pass<Real>& pass) {
    for (auto& [name, p] : params_) {
      if (!p.trainable) continue;
      if (p.grad.numel() == 0) p.grad = TensorT<Real>::zeros_like(p.value);
      auto it = pass.leaves.find(name);
      if (it == pass.leaves.end()) continue;
      const auto& g = pass.tape.grad(it->second);
      for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += g.data[i];
    }
  }

 private:
  int attention(Pass<Real>& pass, const std::string& prefix, int x) {
    auto& t = pass.tape;
    const int dk = cfg_.d_model / cfg_.heads;
    int q = ops::linear(t, x, leaf(pass, prefix + ".wq"), leaf(pass, prefix + ".bq"));
    int k = ops::linear(t, x, leaf(pass, prefix + ".wk"), leaf(pass, prefix + ".bk"));
    int v = ops::linear(t, x, leaf(pass, prefix + ".wv"), leaf(pass, prefix + ".bv"));
    std::vector<int> heads_out;
    for (int h = 0; h < cfg_.heads; ++h) {
      const int c0 = h * dk, c1 = (h + 1) * dk;
      int qh = ops::slice_cols(t, q, c0, c1);
      int kh = ops::slice_cols(t, k, c0, c1);
      int vh = ops::slice_cols(t, v, c0, c1);
      int scores = ops::scale(t, ops::matmul_nt(t, qh, kh), Real(1) / std::sqrt(Real(dk)));
      int attn = ops::softmax_rows(t, scores);
      heads_out.push_back(ops::matmul(t, attn, vh));
    }
    int ctx = ops::hstack(t, heads_out);
    return ops::linear(t, ctx, leaf(pass, prefix + ".wo"), leaf(pass, prefix + ".bo"));
  }

  int dropout(Pass<Real>& pass, int x) {
    const Real p = Real(cfg_.dropout);
    if (!pass.training || p <= Real(0)) return x;
    auto& t = pass.tape;
    auto rng = make_rng(pass.dropout_seed, "dropout", static_cast<uint64_t>(pass.dropout_ctr++));
    std::uniform_real_distribution<Real> u(Real(0), Real(1));
    TensorT<Real> mask = TensorT<Real>::zeros_like(t.value(x));
    for (auto& m : mask.data) m = u(rng) < p ? Real(0) : Real(1);
    return ops::mul_mask(t, x, std::move(mask), Real(1) / (Real(1) - p));
  }

  void init_params() {
    const int D = cfg_.d_model, F = cfg_.feat_dim, V = cfg_.vocab_size;
    add_weight("subsample.conv0.w", {3 * F, D}, 3 * F, D);
    add_bias("subsample.conv0.b", D);
    add_weight("subsample.conv1.w", {3 * D, D}, 3 * D, D);
    add_bias("subsample.conv1.b", D);
    add_weight("subsample.proj.w", {D, D}, D, D);
    add_bias("subsample.proj.b", D);
    add_stack("shared", cfg_.shared_depth());
    if (cfg_.has_branches()) {
      add_stack("block_a", cfg_.branch_depth());
      add_stack("block_b", cfg_.branch_depth());
      add_ln("block_a.ln_out", D);
      add_ln("block_b.ln_out", D);
      add_weight("dec_aux.w", {D, V}, D, V);
      add_bias("dec_aux.b", V);
    } else {
      add_ln("shared.ln_out", D);
    }
    add_weight("dec_global.w", {D, V}, D, V);
    add_bias("dec_global.b", V);
    add_weight("probe.w", {D, 3}, D, 3);
    add_bias("probe.b", 3);
  }

  void add_stack(const std::string& prefix, int depth) {
    const int D = cfg_.d_model, Dff = cfg_.d_ff;
    for (int i = 0; i < depth; ++i) {
      const std::string l = prefix + ".l" + std::to_string(i);
      add_ln(l + ".ln1", D);
      for (const char* wn : {"wq", "wk", "wv", "wo"}) add_weight(l + ".attn." + wn, {D, D}, D, D);
      for (const char* bn : {"bq", "bk", "bv", "bo"}) add_bias(l + ".attn." + bn, D);
      add_ln(l + ".ln2", D);
      add_weight(l + ".ff.w1", {D, Dff}, D, Dff);
      add_bias(l + ".ff.b1", Dff);
      add_weight(l + ".ff.w2", {Dff, D}, Dff, D);
      add_bias(l + ".ff.b2", D);
    }
  }

  // Branch parameters draw from the same init stream as their mirror so the
  // two blocks start identical; training data breaks the symmetry.
  static std::string init_stream_name(const std::string& name) {
    if (name.rfind("block_a.", 0) == 0 || name.rfind("block_b.", 0) == 0)
      return "block_x." + name.substr(8);
    return name;
  }

  void add_weight(const std::string& name, std::vector<int> shape, int fan_in, int fan_out) {
    auto rng = make_rng(cfg_.seed, "init", fnv1a(init_stream_name(name)));
    Param<Real> p;
    p.value = uniform_init<Real>(std::move(shape), fan_in, fan_out, rng);
    p.grad = TensorT<Real>::zeros_like(p.value);
    params_.emplace(name, std::move(p));
  }

  void add_bias(const std::string& name, int dim) {
    Param<Real> p;
    p.value = TensorT<Real>({dim});
    p.grad = TensorT<Real>::zeros_like(p.value);
    params_.emplace(name, std::move(p));
  }

  void add_ln(const std::string& prefix, int dim) {
    Param<Real> g;
    g.value = TensorT<Real>({dim});
    g.value.fill(Real(1));
    g.grad = TensorT<Real>::zeros_like(g.value);
    params_.emplace(prefix + ".g", std::move(g));
    add_bias(prefix + ".b", dim);
  }

  ModelConfig cfg_;
  std::map<std::string, Param<Real>> params_;
};

// Frame-level additive combination (Eq. 4): a plain elementwise sum, no
// normalization and no learned gate.
template <typename Real>
int combine(Tape<Real>& t, int h_a, int h_b) {
  return ops::add(t, h_a, h_b);
}

template <typename Real>
TensorT<Real> combine(const TensorT<Real>& h_a, const TensorT<Real>& h_b) {
  if (!h_a.same_shape(h_b)) throw ConfigError("combine: shape mismatch");
  TensorT<Real> out = h_a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += h_b.data[i];
  return out;
}

}  // namespace lae
