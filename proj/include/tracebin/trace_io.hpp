#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tracebin/model.hpp"

namespace tracebin {

/// Line-based trace file:
///
///   M <module-id-dec> <path> <base-hex> <text-start-hex> <text-size-hex>
///   I <module-id-dec> <offset-hex> <len-dec> <bytes-hex>
///   E <C|D|I|R> <mod>:<off-hex> <mod>:<off-hex>
///   B <module-id-dec> <offset-hex>
///
/// Lines may come in any order and `I` duplicates with identical content are
/// accepted. Lines starting with `#` are comments; the writer uses
/// `# partial <reason>` to mark traces cut short. Paths are percent-escaped
/// for space, `%` and control characters.
struct TraceFile {
  TraceSet trace;
  bool partial = false;
  std::string partial_reason;
};

TraceFile read_trace(std::istream& in);
TraceFile read_trace_file(const std::filesystem::path& path);

/// Canonical order: M by id, I by loc, E by (kind, src, dst), B by loc.
void write_trace(std::ostream& out, const TraceSet& trace, bool partial = false,
                 const std::string& partial_reason = {});
void write_trace_file(const std::filesystem::path& path, const TraceSet& trace, bool partial = false,
                      const std::string& partial_reason = {});
std::string trace_to_string(const TraceSet& trace);

std::string escape_path(const std::string& path);
std::string unescape_path(std::string_view text);

}  // namespace tracebin
