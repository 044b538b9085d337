#include <charconv>

#include "tracebin/error.hpp"
#include "tracebin/hex.hpp"

namespace tracebin {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoModule: return "NoModule";
    case ErrorCode::AmbiguousModule: return "AmbiguousModule";
    case ErrorCode::ConflictingInstruction: return "ConflictingInstruction";
    case ErrorCode::InvalidTraceSet: return "InvalidTraceSet";
    case ErrorCode::MalformedTrace: return "MalformedTrace";
    case ErrorCode::LaunchFailure: return "LaunchFailure";
    case ErrorCode::SelfModifyingDetected: return "SelfModifyingDetected";
    case ErrorCode::UnsupportedTarget: return "UnsupportedTarget";
    case ErrorCode::UndecodableInstruction: return "UndecodableInstruction";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyListing: return "EmptyListing";
    case ErrorCode::MissingBase: return "MissingBase";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateOffset: return "DuplicateOffset";
    case ErrorCode::UnderflowingOffset: return "UnderflowingOffset";
    case ErrorCode::ModuleMismatch: return "ModuleMismatch";
    case ErrorCode::TargetMismatch: return "TargetMismatch";
    case ErrorCode::InconsistentInputs: return "InconsistentInputs";
    case ErrorCode::MalformedReport: return "MalformedReport";
    case ErrorCode::InvalidOpcode: return "InvalidOpcode";
    case ErrorCode::TruncatedInstruction: return "TruncatedInstruction";
    case ErrorCode::UnknownCase: return "UnknownCase";
    case ErrorCode::ImageTooLarge: return "ImageTooLarge";
    case ErrorCode::MalformedElf: return "MalformedElf";
    case ErrorCode::NoViableSite: return "NoViableSite";
    case ErrorCode::BytesMismatch: return "BytesMismatch";
    case ErrorCode::TraceFailure: return "TraceFailure";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, 16);
  return std::string(buf, end);
}

namespace {

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::optional<Bytes> parse_hex_bytes(std::string_view text) {
  if (text.empty() || text.size() % 2 != 0) return std::nullopt;
  Bytes out;
  out.reserve(text.size() / 2);
  for (std::size_t i = 0; i < text.size(); i += 2) {
    int hi = hex_digit(text[i]);
    int lo = hex_digit(text[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

std::optional<std::uint64_t> parse_hex_u64(std::string_view text) {
  if (text.starts_with("0x") || text.starts_with("0X")) text.remove_prefix(2);
  if (text.empty() || text.size() > 16) return std::nullopt;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<std::uint64_t> parse_dec_u64(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 10);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t' || text.front() == '\r'))
    text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r' ||
                           text.back() == '\n'))
    text.remove_suffix(1);
  return text;
}

}  // namespace tracebin
