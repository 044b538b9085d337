#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tracebin {

using Bytes = std::vector<std::uint8_t>;

/// Lowercase hex, no separators, no `0x`.
std::string to_hex(std::span<const std::uint8_t> bytes);
std::string to_hex(std::uint64_t value);

/// Strict parsers: reject empty input, odd digit counts, uppercase is accepted.
std::optional<Bytes> parse_hex_bytes(std::string_view text);
std::optional<std::uint64_t> parse_hex_u64(std::string_view text);
std::optional<std::uint64_t> parse_dec_u64(std::string_view text);

std::vector<std::string_view> split_ws(std::string_view line);
std::string_view trim(std::string_view text);

}  // namespace tracebin
