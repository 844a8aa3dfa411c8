// Experiment configuration: a line-based key=value file that fully
// specifies a run. Unknown keys are rejected. The canonical text (sorted
// keys, normalized formatting, defaults filled in) feeds the SHA-256
// config digest stored in checkpoints and reports.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "lae/digest.hpp"
#include "lae/model.hpp"
#include "lae/simulate.hpp"
#include "lae/specaugment.hpp"
#include "lae/util.hpp"

namespace lae {

struct ExperimentConfig {
  uint64_t seed = 12345;

  // model
  std::string arch = "lae";
  int layers_total = 5;
  int layers_each = 2;
  int layers_shared = 3;
  int layers_specific = 1;
  int d_model = 64;
  int d_ff = 128;
  int heads = 4;
  int feat_dim = 16;
  double dropout = 0.1;

  // corpus
  int tokens_per_lang = 20;
  int tokens_per_lang_b = 0;  // 0 keeps both inventories at tokens_per_lang
  double noise_std = 0.1;
  int dur_min = 8;
  int dur_max = 12;
  int utt_tokens_min = 4;
  int utt_tokens_max = 10;
  int cs_switches_min = 1;
  int cs_switches_max = 3;
  int cap_frames = 300;
  int train_mono_a = 2000;
  int train_mono_b = 2000;
  int train_cs = 1000;
  int train_simu_cs = 0;
  int eval_mono_a = 200;
  int eval_mono_b = 200;
  int eval_cs = 200;

  // training
  int epochs = 30;
  int batch_size = 16;
  int accum = 1;
  double peak_lr = 1e-3;
  int warmup_steps = 500;
  bool aux_loss = true;
  bool probe_loss = true;
  int specaug_time_masks = 2;
  int specaug_freq_masks = 2;
  int specaug_time_width = 10;
  int specaug_freq_width = 4;
  int avg_last_k = 5;
  double grad_clip = 5.0;

  // decoding
  int beam = 10;
  double lm_weight = 0.2;
  int lm_order = 3;

  int vocab_size() const {
    return 3 + tokens_per_lang + (tokens_per_lang_b > 0 ? tokens_per_lang_b : tokens_per_lang);
  }

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.arch = arch_from_name(arch);
    mc.layers_total = layers_total;
    mc.layers_each = layers_each;
    mc.layers_shared = layers_shared;
    mc.layers_specific = layers_specific;
    mc.d_model = d_model;
    mc.d_ff = d_ff;
    mc.heads = heads;
    mc.feat_dim = feat_dim;
    mc.vocab_size = vocab_size();
    mc.dropout = static_cast<float>(dropout);
    mc.seed = seed;
    mc.validate();
    return mc;
  }

  SimSpec sim_spec() const {
    SimSpec s;
    s.tokens_per_lang = tokens_per_lang;
    s.tokens_per_lang_b = tokens_per_lang_b;
    s.feat_dim = feat_dim;
    s.dur_min = dur_min;
    s.dur_max = dur_max;
    s.noise_std = static_cast<float>(noise_std);
    s.utt_tokens_min = utt_tokens_min;
    s.utt_tokens_max = utt_tokens_max;
    s.cs_switches_min = cs_switches_min;
    s.cs_switches_max = cs_switches_max;
    s.cap_frames = cap_frames;
    s.train_mono_a = train_mono_a;
    s.train_mono_b = train_mono_b;
    s.train_cs = train_cs;
    s.train_simu_cs = train_simu_cs;
    s.eval_mono_a = eval_mono_a;
    s.eval_mono_b = eval_mono_b;
    s.eval_cs = eval_cs;
    s.seed = seed;
    return s;
  }

  SpecAugmentConfig specaug_config() const {
    SpecAugmentConfig c;
    c.n_time = specaug_time_masks;
    c.n_freq = specaug_freq_masks;
    c.max_time_width = specaug_time_width;
    c.max_freq_width = specaug_freq_width;
    return c;
  }

  void validate() const {
    if (epochs < 1 || batch_size < 1 || accum < 1 || warmup_steps < 1 || peak_lr <= 0)
      throw ConfigError("training hyperparameters must be positive");
    if (avg_last_k < 1 || avg_last_k > epochs)
      throw ConfigError("avg_last_k must be in [1, epochs]");
    if (beam < 1) throw ConfigError("beam must be >= 1");
    if (lm_weight < 0) throw ConfigError("lm_weight must be >= 0");
    if (lm_order < 1) throw ConfigError("lm_order must be >= 1");
    if (dur_min < 1 || dur_max < dur_min) throw ConfigError("bad duration range");
    if (utt_tokens_min < 1 || utt_tokens_max < utt_tokens_min)
      throw ConfigError("bad utterance token range");
    if (tokens_per_lang < 1) throw ConfigError("tokens_per_lang must be >= 1");
    if (tokens_per_lang_b < 0) throw ConfigError("tokens_per_lang_b must be >= 0");
    if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
    model_config();  // validates model fields
  }

  std::string canonical_text() const;
  Digest digest() const { return sha256(canonical_text()); }

  static ExperimentConfig parse_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path) {
    return parse_text(slurp(path));
  }
};

namespace detail {

struct ConfigField {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    auto add_int = [&f](const std::string& key, int ExperimentConfig::* member) {
      f[key] = {[member](ExperimentConfig& c, const std::string& v) { c.*member = std::stoi(v); },
                [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    };
    auto add_double = [&f](const std::string& key, double ExperimentConfig::* member) {
      f[key] = {[member](ExperimentConfig& c, const std::string& v) { c.*member = std::stod(v); },
                [member](const ExperimentConfig& c) { return fmt_double(c.*member); }};
    };
    auto add_bool = [&f](const std::string& key, bool ExperimentConfig::* member) {
      f[key] = {[member](ExperimentConfig& c, const std::string& v) {
                  if (v == "true") c.*member = true;
                  else if (v == "false") c.*member = false;
                  else throw ConfigError("boolean key expects true/false, got: " + v);
                },
                [member](const ExperimentConfig& c) {
                  return std::string(c.*member ? "true" : "false");
                }};
    };
    f["seed"] = {[](ExperimentConfig& c, const std::string& v) { c.seed = std::stoull(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
    f["arch"] = {[](ExperimentConfig& c, const std::string& v) {
                   arch_from_name(v);  // validates
                   c.arch = v;
                 },
                 [](const ExperimentConfig& c) { return c.arch; }};
    add_int("layers_total", &ExperimentConfig::layers_total);
    add_int("layers_each", &ExperimentConfig::layers_each);
    add_int("layers_shared", &ExperimentConfig::layers_shared);
    add_int("layers_specific", &ExperimentConfig::layers_specific);
    add_int("d_model", &ExperimentConfig::d_model);
    add_int("d_ff", &ExperimentConfig::d_ff);
    add_int("heads", &ExperimentConfig::heads);
    add_int("feat_dim", &ExperimentConfig::feat_dim);
    add_double("dropout", &ExperimentConfig::dropout);
    add_int("tokens_per_lang", &ExperimentConfig::tokens_per_lang);
    add_int("tokens_per_lang_b", &ExperimentConfig::tokens_per_lang_b);
    add_double("noise_std", &ExperimentConfig::noise_std);
    add_int("dur_min", &ExperimentConfig::dur_min);
    add_int("dur_max", &ExperimentConfig::dur_max);
    add_int("utt_tokens_min", &ExperimentConfig::utt_tokens_min);
    add_int("utt_tokens_max", &ExperimentConfig::utt_tokens_max);
    add_int("cs_switches_min", &ExperimentConfig::cs_switches_min);
    add_int("cs_switches_max", &ExperimentConfig::cs_switches_max);
    add_int("cap_frames", &ExperimentConfig::cap_frames);
    add_int("train_mono_a", &ExperimentConfig::train_mono_a);
    add_int("train_mono_b", &ExperimentConfig::train_mono_b);
    add_int("train_cs", &ExperimentConfig::train_cs);
    add_int("train_simu_cs", &ExperimentConfig::train_simu_cs);
    add_int("eval_mono_a", &ExperimentConfig::eval_mono_a);
    add_int("eval_mono_b", &ExperimentConfig::eval_mono_b);
    add_int("eval_cs", &ExperimentConfig::eval_cs);
    add_int("epochs", &ExperimentConfig::epochs);
    add_int("batch_size", &ExperimentConfig::batch_size);
    add_int("accum", &ExperimentConfig::accum);
    add_double("peak_lr", &ExperimentConfig::peak_lr);
    add_int("warmup_steps", &ExperimentConfig::warmup_steps);
    add_bool("aux_loss", &ExperimentConfig::aux_loss);
    add_bool("probe_loss", &ExperimentConfig::probe_loss);
    add_int("specaug_time_masks", &ExperimentConfig::specaug_time_masks);
    add_int("specaug_freq_masks", &ExperimentConfig::specaug_freq_masks);
    add_int("specaug_time_width", &ExperimentConfig::specaug_time_width);
    add_int("specaug_freq_width", &ExperimentConfig::specaug_freq_width);
    add_int("avg_last_k", &ExperimentConfig::avg_last_k);
    add_double("grad_clip", &ExperimentConfig::grad_clip);
    add_int("beam", &ExperimentConfig::beam);
    add_double("lm_weight", &ExperimentConfig::lm_weight);
    add_int("lm_order", &ExperimentConfig::lm_order);
    return f;
  }();
  return fields;
}

}  // namespace detail

inline std::string ExperimentConfig::canonical_text() const {
  std::string out;
  for (const auto& [key, field] : detail::config_fields())
    out += key + "=" + field.get(*this) + "\n";
  return out;
}

inline ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
  ExperimentConfig cfg;
  const auto& fields = detail::config_fields();
  size_t lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto pos = line.find('=');
    if (pos == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    const std::string key = trim(line.substr(0, pos));
    const std::string value = trim(line.substr(pos + 1));
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key: " + key);
    try {
      it->second.set(cfg, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for config key " + key + ": " + value);
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace lae
