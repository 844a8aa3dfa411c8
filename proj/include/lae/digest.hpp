// SHA-256 digests (backed by OpenSSL) with hex helpers.
#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <string>

#include "lae/util.hpp"

namespace lae {

using Digest = std::array<unsigned char, 32>;

inline Digest sha256(const std::string& data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size())
    throw NumericError("SHA-256 computation failed");
  return out;
}

inline std::string hex(const Digest& d) {
  std::string s;
  s.reserve(64);
  char buf[3];
  for (unsigned char c : d) {
    std::snprintf(buf, sizeof buf, "%02x", c);
    s += buf;
  }
  return s;
}

inline Digest unhex(const std::string& s) {
  if (s.size() != 64) throw DataError("digest hex string must be 64 characters");
  Digest d{};
  for (size_t i = 0; i < 32; ++i) {
    auto nib = [&](char c) -> unsigned {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      throw DataError("bad hex character in digest");
    };
    d[i] = static_cast<unsigned char>((nib(s[2 * i]) << 4) | nib(s[2 * i + 1]));
  }
  return d;
}

}  // namespace lae
