// Checkpoint container.
//
// Layout: magic "LAEC", u32 format version, u32 parameter count, then per
// parameter in lexicographic name order: u32 name length, UTF-8 name,
// u32 rank, u32 dims, little-endian f32 data. Footer: u64 global step and
// the 32-byte config digest. A text sidecar <file>.meta carries auxiliary
// metadata (vocabulary digest, averaged source steps).
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lae/digest.hpp"
#include "lae/io.hpp"
#include "lae/model.hpp"
#include "lae/tensor.hpp"

namespace lae {

constexpr uint32_t kCheckpointVersion = 1;

using ParamTensors = std::map<std::string, TensorF>;

struct CheckpointMeta {
  uint64_t step = 0;
  Digest config_digest{};
};

inline void write_checkpoint(const std::filesystem::path& path, const ParamTensors& params,
                             const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path.string());
  os.write("LAEC", 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {  // std::map iterates lexicographically
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(tensor.shape.size()));
    for (int d : tensor.shape) write_u32(os, static_cast<uint32_t>(d));
    for (float v : tensor.data) write_f32(os, v);
  }
  write_u64(os, meta.step);
  os.write(reinterpret_cast<const char*>(meta.config_digest.data()),
           static_cast<std::streamsize>(meta.config_digest.size()));
  if (!os) throw DataError("short write: " + path.string());
}

inline ParamTensors read_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "LAEC") throw DataError("bad checkpoint magic: " + path.string());
  const uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = read_u32(is);
  ParamTensors params;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<int>(read_u32(is));
      numel *= shape[r];
    }
    TensorF t(shape);
    for (int64_t j = 0; j < numel; ++j) t.data[j] = read_f32(is);
    if (!is) throw DataError("truncated checkpoint: " + path.string());
    params.emplace(std::move(name), std::move(t));
  }
  CheckpointMeta m;
  m.step = read_u64(is);
  is.read(reinterpret_cast<char*>(m.config_digest.data()), 32);
  if (!is) throw DataError("checkpoint missing footer: " + path.string());
  if (meta) *meta = m;
  return params;
}

inline void save_model(const std::filesystem::path& path, const Model<float>& model,
                       const CheckpointMeta& meta) {
  ParamTensors params;
  for (const auto& [name, p] : model.params()) params.emplace(name, p.value);
  write_checkpoint(path, params, meta);
}

inline CheckpointMeta load_model(const std::filesystem::path& path, Model<float>& model) {
  CheckpointMeta meta;
  ParamTensors params = read_checkpoint(path, &meta);
  if (params.size() != model.params().size())
    throw DataError("checkpoint parameter count does not match the model");
  for (auto& [name, p] : model.params()) {
    auto it = params.find(name);
    if (it == params.end()) throw DataError("checkpoint is missing parameter " + name);
    if (it->second.shape != p.value.shape)
      throw DataError("checkpoint shape mismatch for parameter " + name);
    p.value = std::move(it->second);
  }
  return meta;
}

// Elementwise arithmetic mean of checkpoints with identical name sets and
// shapes. The returned meta keeps the highest source step.
inline std::pair<ParamTensors, CheckpointMeta> average_checkpoints(
    const std::vector<std::filesystem::path>& paths, std::vector<uint64_t>* source_steps = nullptr) {
  if (paths.empty()) throw ConfigError("average_checkpoints: no inputs");
  CheckpointMeta meta;
  ParamTensors acc = read_checkpoint(paths[0], &meta);
  if (source_steps) source_steps->push_back(meta.step);
  // accumulate in double to keep the mean independent of summation ordering noise
  std::map<std::string, std::vector<double>> sums;
  for (const auto& [name, t] : acc) sums.emplace(name, std::vector<double>(t.data.begin(), t.data.end()));
  for (size_t i = 1; i < paths.size(); ++i) {
    CheckpointMeta m2;
    ParamTensors next = read_checkpoint(paths[i], &m2);
    if (m2.config_digest != meta.config_digest)
      throw DataError("checkpoint config digests differ: " + paths[i].string());
    meta.step = std::max(meta.step, m2.step);
    if (source_steps) source_steps->push_back(m2.step);
    if (next.size() != acc.size()) throw DataError("checkpoint parameter sets differ");
    for (auto& [name, t] : next) {
      auto it = acc.find(name);
      if (it == acc.end() || it->second.shape != t.shape)
        throw DataError("checkpoint parameter mismatch: " + name);
      auto& s = sums[name];
      for (size_t j = 0; j < t.data.size(); ++j) s[j] += t.data[j];
    }
  }
  const double inv = 1.0 / double(paths.size());
  for (auto& [name, t] : acc) {
    const auto& s = sums[name];
    for (size_t j = 0; j < t.data.size(); ++j) t.data[j] = static_cast<float>(s[j] * inv);
  }
  return {std::move(acc), meta};
}

// Model topology in sidecar form, sufficient to rebuild the architecture
// before loading parameters (head count is not recoverable from shapes).
inline std::map<std::string, std::string> model_meta_entries(const ModelConfig& mc) {
  char dropout[40];
  std::snprintf(dropout, sizeof dropout, "%.10g", double(mc.dropout));
  return {{"arch", arch_name(mc.arch)},
          {"layers_total", std::to_string(mc.layers_total)},
          {"layers_each", std::to_string(mc.layers_each)},
          {"layers_shared", std::to_string(mc.layers_shared)},
          {"layers_specific", std::to_string(mc.layers_specific)},
          {"d_model", std::to_string(mc.d_model)},
          {"d_ff", std::to_string(mc.d_ff)},
          {"heads", std::to_string(mc.heads)},
          {"feat_dim", std::to_string(mc.feat_dim)},
          {"vocab_size", std::to_string(mc.vocab_size)},
          {"dropout", dropout}};
}

inline ModelConfig model_config_from_meta(const std::map<std::string, std::string>& kv) {
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint meta is missing key " + key);
    return it->second;
  };
  ModelConfig mc;
  mc.arch = arch_from_name(need("arch"));
  mc.layers_total = std::stoi(need("layers_total"));
  mc.layers_each = std::stoi(need("layers_each"));
  mc.layers_shared = std::stoi(need("layers_shared"));
  mc.layers_specific = std::stoi(need("layers_specific"));
  mc.d_model = std::stoi(need("d_model"));
  mc.d_ff = std::stoi(need("d_ff"));
  mc.heads = std::stoi(need("heads"));
  mc.feat_dim = std::stoi(need("feat_dim"));
  mc.vocab_size = std::stoi(need("vocab_size"));
  mc.dropout = std::stof(need("dropout"));
  mc.seed = 0;  // parameters come from the checkpoint
  mc.validate();
  return mc;
}

// Sidecar metadata: plain key=value lines.
inline void write_meta_file(const std::filesystem::path& path,
                            const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  spit(path, out);
}

inline std::map<std::string, std::string> read_meta_file(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream is(path);
  if (!is) throw DataError("cannot open meta file: " + path.string());
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto pos = line.find('=');
    if (pos == std::string::npos) throw DataError("bad meta line: " + line);
    kv[trim(line.substr(0, pos))] = trim(line.substr(pos + 1));
  }
  return kv;
}

}  // namespace lae
