#include "rubric_loop/digest.hpp"

#include <array>

#include <openssl/evp.h>

#include "rubric_loop/errors.hpp"

namespace rubric_loop {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("internal", "SHA-256 computation failed", ExitCode::kInternal);
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string canonical_json(const nlohmann::json& j) { return j.dump(); }

std::string digest_of(const nlohmann::json& j) { return sha256_hex(canonical_json(j)); }

}  // namespace rubric_loop
