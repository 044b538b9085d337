#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tracebin/disasm_view.hpp"
#include "tracebin/hex.hpp"

namespace tracebin {

/// Raw code bytes together with the module offset of the first byte, so
/// every offset a disassembler reports is directly module-relative.
struct CodeImage {
  std::uint64_t base_offset = 0;
  Bytes bytes;

  std::uint64_t end_offset() const { return base_offset + bytes.size(); }
  bool contains(std::uint64_t offset) const { return offset >= base_offset && offset < end_offset(); }
  std::span<const std::uint8_t> from(std::uint64_t offset) const {
    return std::span<const std::uint8_t>(bytes).subspan(offset - base_offset);
  }
};

namespace refdisasm {

enum class InstClass { None, Cbr, DirectJmp, DirectCall, Indirect, Return, Halting };

std::string to_string(InstClass cls);

struct DecodedInst {
  std::uint64_t offset = 0;
  Bytes bytes;
  InstClass cls = InstClass::None;
  /// Branch target (module offset); present iff cls is Cbr, DirectJmp or DirectCall.
  std::optional<std::uint64_t> rel_target;

  std::size_t len() const { return bytes.size(); }
  std::uint64_t end() const { return offset + bytes.size(); }
};

struct HeuristicConfig {
  /// After the worklist drains, treat every `f3 0f 1e fa` in the image as a
  /// new entry point.
  bool endbr_scan = false;
  /// Ignore endbr hits in the alignment padding right after a
  /// `pop; pop; ret` epilogue (code there is assumed dead).
  bool epilogue_stop = false;
  /// Linear sweep: on an invalid opcode skip one byte and keep going
  /// instead of stopping.
  bool skip_byte_on_invalid = true;
  /// Calls to these offsets are assumed not to return (fall-through cut).
  std::vector<std::uint64_t> noreturn_targets;
};

/// Decodes one instruction of the supported subset at `offset`.
/// Throws InvalidOpcode (message names the first undecodable byte position)
/// or TruncatedInstruction when the encoding runs past the image end.
DecodedInst decode_len(const CodeImage& image, std::uint64_t offset);

DisasmView linear_sweep(const CodeImage& image, std::uint64_t start, const HeuristicConfig& cfg);
DisasmView recursive_descent(const CodeImage& image, std::span<const std::uint64_t> entries,
                             const HeuristicConfig& cfg);

ViewRecord to_view_record(const DecodedInst& inst);

}  // namespace refdisasm
}  // namespace tracebin
