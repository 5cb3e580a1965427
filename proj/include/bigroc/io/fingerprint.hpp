#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "bigroc/error.hpp"

namespace bigroc::io {

inline std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

/// SHA-256 over the little-endian float64 encoding of `values`.
template <class T>
std::string fingerprint_values(std::span<const T> values) {
  std::vector<unsigned char> buf(values.size() * sizeof(double));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = static_cast<double>(values[i]);
    std::uint64_t u;
    static_assert(sizeof(u) == sizeof(d));
    std::memcpy(&u, &d, sizeof(d));
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  return sha256_hex(buf);
}

}  // namespace bigroc::io
