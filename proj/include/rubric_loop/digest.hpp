#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace rubric_loop {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// Canonical encoding: compact dump with object keys in sorted order.
std::string canonical_json(const nlohmann::json& j);

// SHA-256 of the canonical encoding.
std::string digest_of(const nlohmann::json& j);

}  // namespace rubric_loop
