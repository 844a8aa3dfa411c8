// Utterances, per-utterance feature files, and the corpus manifest.
//
// Feature file: magic "LAEF", u32 T, u32 F, then T*F little-endian f32 in
// row-major order. Manifest: one TSV record per utterance with fields
// utt_id, partition, feature path (relative to the manifest), space
// separated target ids, space separated language tags; UTF-8, LF endings.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lae/io.hpp"
#include "lae/tensor.hpp"
#include "lae/util.hpp"
#include "lae/vocab.hpp"

namespace lae {

struct Utterance {
  std::string utt_id;
  std::string partition;
  TensorF features;             // T x F
  std::vector<int> targets;     // token ids, no specials
  std::vector<Lang> tags;       // per token
  std::vector<int> boundaries;  // start frame of each token (in raw frames)
};

inline const char* kPartitions[] = {"train-mono-A", "train-mono-B", "train-CS",
                                    "train-simu-CS", "eval-mono-A", "eval-mono-B", "eval-CS"};

inline void write_features(const std::filesystem::path& path, const TensorF& feats) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write feature file: " + path.string());
  os.write("LAEF", 4);
  write_u32(os, static_cast<uint32_t>(feats.rows()));
  write_u32(os, static_cast<uint32_t>(feats.cols()));
  for (float v : feats.data) write_f32(os, v);
  if (!os) throw DataError("short write: " + path.string());
}

inline TensorF read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open feature file: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "LAEF") throw DataError("bad feature magic: " + path.string());
  const int T = static_cast<int>(read_u32(is));
  const int F = static_cast<int>(read_u32(is));
  TensorF t({T, F});
  for (int64_t i = 0; i < t.numel(); ++i) t.data[i] = read_f32(is);
  if (!is) throw DataError("truncated feature file: " + path.string());
  return t;
}

struct ManifestRecord {
  std::string utt_id;
  std::string partition;
  std::string feature_path;  // relative to the manifest directory
  std::vector<int> targets;
  std::vector<Lang> tags;
};

inline std::string ids_to_string(const std::vector<int>& ids) {
  std::string s;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(ids[i]);
  }
  return s;
}

inline std::string tags_to_string(const std::vector<Lang>& tags) {
  std::string s;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (i) s += ' ';
    s += lang_tag(tags[i]);
  }
  return s;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.utt_id;
    out += '\t';
    out += r.partition;
    out += '\t';
    out += r.feature_path;
    out += '\t';
    out += ids_to_string(r.targets);
    out += '\t';
    out += tags_to_string(r.tags);
    out += '\n';
  }
  spit(path, out);
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 5) throw DataError("manifest line must have 5 tab-separated fields: " + line);
    ManifestRecord r;
    r.utt_id = fields[0];
    r.partition = fields[1];
    r.feature_path = fields[2];
    if (!trim(fields[3]).empty())
      for (const auto& tok : split(trim(fields[3]), ' ')) r.targets.push_back(std::stoi(tok));
    if (!trim(fields[4]).empty())
      for (const auto& tag : split(trim(fields[4]), ' ')) {
        if (tag == "A") r.tags.push_back(Lang::kA);
        else if (tag == "B") r.tags.push_back(Lang::kB);
        else throw DataError("bad tag in manifest: " + tag);
      }
    if (r.targets.size() != r.tags.size())
      throw DataError("manifest targets/tags length mismatch for " + r.utt_id);
    records.push_back(std::move(r));
  }
  return records;
}

inline Utterance load_utterance(const std::filesystem::path& manifest_dir, const ManifestRecord& r) {
  Utterance u;
  u.utt_id = r.utt_id;
  u.partition = r.partition;
  u.targets = r.targets;
  u.tags = r.tags;
  u.features = read_features(manifest_dir / r.feature_path);
  return u;
}

// Utterance-level language class: 0 = mono-A, 1 = mono-B, 2 = code-switched.
inline int utterance_class(const std::vector<Lang>& tags) {
  bool has_a = false, has_b = false;
  for (Lang t : tags) (t == Lang::kA ? has_a : has_b) = true;
  if (has_a && has_b) return 2;
  return has_b ? 1 : 0;
}

}  // namespace lae
