#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace evsynth {

/// Lowercase hex SHA-256 of the bytes of `data`.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a, seeded by folding the seed into the offset basis.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0) noexcept;

}  // namespace evsynth
