#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracebin/hex.hpp"

namespace tracebin {

/// One instruction claimed by a disassembler. Mnemonics are carried as
/// opaque text and never interpreted.
struct ViewRecord {
  std::uint64_t offset = 0;
  std::size_t len = 0;
  std::optional<Bytes> bytes;
  std::optional<std::string> mnemonic;

  std::uint64_t end() const { return offset + len; }
  bool operator==(const ViewRecord&) const = default;
};

/// A disassembler's claimed instruction set, keyed by offset.
class DisasmView {
 public:
  std::string source_name;
  std::uint64_t declared_base = 0;

  const std::map<std::uint64_t, ViewRecord>& insts() const { return insts_; }
  std::size_t size() const { return insts_.size(); }

  /// Throws DuplicateOffset when a record already starts at `rec.offset`
  /// and MalformedRecord for len 0 or a byte count that disagrees with len.
  void add(ViewRecord rec);
  /// Replaces or inserts without the duplicate check.
  void put(ViewRecord rec);
  bool erase(std::uint64_t offset) { return insts_.erase(offset) != 0; }

  const ViewRecord* find(std::uint64_t offset) const;
  /// The record with the greatest start strictly below `offset` whose byte
  /// range still covers `offset` (desynchronized claim), if any.
  const ViewRecord* covering(std::uint64_t offset) const;

  /// Pairs (a, b) of record offsets whose byte ranges intersect.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> overlapping_records() const;

  bool operator==(const DisasmView&) const = default;

 private:
  std::map<std::uint64_t, ViewRecord> insts_;
};

/// Parses a `objdump -d` style listing. Both tab-separated objdump output
/// and space-separated listings (`1198: 450890ff4d0890  or ...`) are
/// accepted; bytes-only lines continue the preceding instruction.
DisasmView parse_objdump(std::istream& in, std::string source_name = "objdump");

/// Interchange format: `BASE <hex>` first, then
/// `<offset-hex> <len-dec> [<bytes-hex>] [# mnemonic]` per line.
/// `# tool <name>` comment lines name the producing tool.
DisasmView parse_interchange(std::istream& in);
void write_interchange(std::ostream& out, const DisasmView& view);

DisasmView read_view_file(const std::filesystem::path& path);
void write_view_file(const std::filesystem::path& path, const DisasmView& view);

enum class BasePreset { None, Ghidra, Angr };

/// Base a tool adds to module offsets: ghidra 0x100000, angr 0x400000.
std::uint64_t preset_base(BasePreset preset);
std::optional<BasePreset> parse_preset(std::string_view name);

/// Shifts every offset down by `view.declared_base` (the result has base 0).
/// Throws UnderflowingOffset if some offset is below the base.
DisasmView rebase(const DisasmView& view);
DisasmView rebase(DisasmView view, std::uint64_t declared_base);

}  // namespace tracebin
