#pragma once

#include <openssl/evp.h>

#include <cstddef>
#include <string>
#include <string_view>

#include "gridloc/error.hpp"

namespace gridloc {

/// SHA-256 of a byte range, as a lowercase hex string.
inline std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int out_len = 0;
  if (EVP_Digest(data, len, out, &out_len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(out_len * 2);
  for (unsigned int i = 0; i < out_len; ++i) {
    s.push_back(hex[out[i] >> 4]);
    s.push_back(hex[out[i] & 0xf]);
  }
  return s;
}

inline std::string sha256_hex(std::string_view s) {
  return sha256_hex(s.data(), s.size());
}

}  // namespace gridloc
