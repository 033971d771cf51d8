#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace agov {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
Digest hmac_sha256(std::string_view key, std::string_view message);

std::string to_hex(const Digest& d);
// Lowercase hex only; anything else (uppercase, wrong length) is rejected.
std::optional<Digest> digest_from_hex(std::string_view hex);

// Big-endian fixed-width integer encoding for hash inputs.
void append_u64be(std::string& out, std::uint64_t v);

}  // namespace agov
