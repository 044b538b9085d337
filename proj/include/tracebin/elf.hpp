#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tracebin/hex.hpp"
#include "tracebin/refdisasm.hpp"

namespace tracebin::elf {

struct Segment {
  std::uint64_t offset = 0;
  std::uint64_t vaddr = 0;
  std::uint64_t filesz = 0;
  std::uint64_t memsz = 0;
  std::uint32_t flags = 0;  // PF_X = 1, PF_W = 2, PF_R = 4

  bool executable() const { return flags & 1; }
};

/// The parts of an ELF64 little-endian x86-64 file the tools need. Module
/// offsets are relative to the load bias, the lowest `vaddr - offset` over
/// the PT_LOAD segments, which matches how the tracer normalizes addresses.
struct ElfInfo {
  bool pie = false;
  std::uint64_t entry = 0;  // vaddr
  std::uint64_t link_bias = 0;
  std::vector<Segment> loads;

  std::uint64_t entry_offset() const { return entry - link_bias; }
  /// File offset holding module offset `off`, if file-backed.
  std::optional<std::uint64_t> file_offset(std::uint64_t off) const;
};

/// Throws MalformedElf.
ElfInfo parse(std::span<const std::uint8_t> file);

/// The first executable segment as a CodeImage in module offsets.
CodeImage exec_image(std::span<const std::uint8_t> file);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes, bool executable = false);

}  // namespace tracebin::elf
