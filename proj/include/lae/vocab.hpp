// Token vocabulary: dense ids partitioned into specials and two language sets.
// Id 0 is the CTC blank; ids 1 and 2 are the masking symbols that stand in
// for a language-A (resp. language-B) token in the other language's target.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lae/io.hpp"
#include "lae/util.hpp"

namespace lae {

enum class Lang : uint8_t { kSpecial = 0, kA = 1, kB = 2 };

inline const char* lang_tag(Lang l) {
  switch (l) {
    case Lang::kA: return "A";
    case Lang::kB: return "B";
    default: return "special";
  }
}

class Vocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kMaskA = 1;  // stands for a language-A token, appears in Y_B
  static constexpr int kMaskB = 2;  // stands for a language-B token, appears in Y_A

  Vocabulary() = default;

  static Vocabulary synthetic(int tokens_a, int tokens_b) {
    Vocabulary v;
    v.add("<blank>", Lang::kSpecial);
    v.add("<mask_A>", Lang::kSpecial);
    v.add("<mask_B>", Lang::kSpecial);
    char buf[16];
    for (int i = 0; i < tokens_a; ++i) {
      std::snprintf(buf, sizeof buf, "a%02d", i);
      v.add(buf, Lang::kA);
    }
    for (int i = 0; i < tokens_b; ++i) {
      std::snprintf(buf, sizeof buf, "b%02d", i);
      v.add(buf, Lang::kB);
    }
    return v;
  }

  int add(std::string surface, Lang lang) {
    surfaces_.push_back(std::move(surface));
    langs_.push_back(lang);
    return size() - 1;
  }

  int size() const { return static_cast<int>(surfaces_.size()); }
  const std::string& surface(int id) const { return surfaces_.at(id); }
  Lang lang(int id) const { return langs_.at(id); }
  bool is_special(int id) const { return lang(id) == Lang::kSpecial; }

  int find(const std::string& surface) const {
    for (int i = 0; i < size(); ++i)
      if (surfaces_[i] == surface) return i;
    return -1;
  }

  std::vector<int> ids_of(Lang l) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (langs_[i] == l) out.push_back(i);
    return out;
  }

  void save_tsv(const std::filesystem::path& path) const {
    std::string out;
    for (int i = 0; i < size(); ++i) {
      out += std::to_string(i);
      out += '\t';
      out += surfaces_[i];
      out += '\t';
      out += lang_tag(langs_[i]);
      out += '\n';
    }
    spit(path, out);
  }

  static Vocabulary load_tsv(const std::filesystem::path& path) {
    Vocabulary v;
    std::ifstream is(path);
    if (!is) throw DataError("cannot open vocabulary: " + path.string());
    std::string line;
    int expect = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto fields = split(line, '\t');
      if (fields.size() != 3) throw DataError("vocabulary line is not id<TAB>surface<TAB>tag: " + line);
      if (std::stoi(fields[0]) != expect)
        throw DataError("vocabulary ids must be dense and ordered, got " + fields[0]);
      Lang l;
      if (fields[2] == "A") l = Lang::kA;
      else if (fields[2] == "B") l = Lang::kB;
      else if (fields[2] == "special") l = Lang::kSpecial;
      else throw DataError("unknown language tag: " + fields[2]);
      v.add(fields[1], l);
      ++expect;
    }
    v.validate();
    return v;
  }

  void validate() const {
    if (size() < 3) throw DataError("vocabulary must contain the three specials");
    if (langs_[kBlank] != Lang::kSpecial || langs_[kMaskA] != Lang::kSpecial ||
        langs_[kMaskB] != Lang::kSpecial)
      throw DataError("vocabulary ids 0..2 must be the special tokens");
    for (int i = 3; i < size(); ++i)
      if (langs_[i] == Lang::kSpecial)
        throw DataError("specials other than ids 0..2 are not allowed");
  }

 private:
  std::vector<std::string> surfaces_;
  std::vector<Lang> langs_;
};

}  // namespace lae
