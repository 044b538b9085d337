#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tracebin/model.hpp"
#include "tracebin/refdisasm.hpp"

namespace tracebin::corpus {

/// Module offset of the first image byte inside emitted ELF files.
inline constexpr std::uint64_t kTextStart = 0x1000;
inline constexpr std::uint64_t kPageSize = 0x1000;
inline constexpr std::uint64_t kDefaultBase = 0x400000;

struct TruthInst {
  std::uint64_t offset = 0;
  Bytes bytes;
  refdisasm::InstClass cls = refdisasm::InstClass::None;
  std::optional<std::uint64_t> rel_target;
  std::string mnemonic;
  /// The exit syscall: execution ends here.
  bool exits = false;

  std::uint64_t end() const { return offset + bytes.size(); }
};

/// One input vector and the control path it drives. `script` lists the
/// label reached after each executed transfer, starting with the entry
/// label; "+" means the fall-through of a not-taken conditional branch.
struct CorpusRun {
  std::vector<std::string> args;
  std::vector<std::string> script;
};

struct CorpusCase {
  std::string name;
  CodeImage image;
  std::vector<TruthInst> ground_truth;  // sorted by offset
  std::vector<std::pair<std::uint64_t, std::uint64_t>> data_regions;  // (offset, size)
  std::uint64_t entry = 0;
  std::map<std::string, std::uint64_t> labels;
  std::vector<CorpusRun> runs;
  /// Coverage of runs[0].
  TraceSet expected_trace;
  std::vector<EdgeRecord> expected_edges;

  const TruthInst* truth_at(std::uint64_t offset) const;
  std::uint64_t label(const std::string& name) const;
  /// The ground truth as a perfect disassembler would report it.
  DisasmView truth_view() const;
  std::string module_path() const { return name + ".elf"; }
};

std::vector<std::string> case_names();

/// Throws UnknownCase.
CorpusCase gen(std::string_view name);

/// Walks `run` over the ground truth and returns the unique trace it
/// produces (module 0 = the case's ELF at `base`). Throws InvalidTraceSet
/// when the script contradicts the instruction classes.
TraceSet expected_trace_for(const CorpusCase& c, const CorpusRun& run, std::uint64_t base = kDefaultBase);

ModuleInfo module_info(const CorpusCase& c, std::uint64_t base = kDefaultBase);

struct ElfOptions {
  std::uint64_t base = kDefaultBase;
  /// ET_DYN with link base 0; the kernel picks (and randomizes) the base.
  bool pie = false;
};

/// Minimal static ELF64: a read-only header page then one RWX page holding
/// the image at module offset kTextStart. Throws ImageTooLarge beyond a page.
Bytes emit_elf(const CorpusCase& c, const ElfOptions& opts = {});
Bytes emit_elf(const CodeImage& image, std::uint64_t entry, const ElfOptions& opts = {});

/// Hand assembler with label fixups. Every instruction is recorded as a
/// ground-truth entry; `data` bytes are recorded as data regions.
class Assembler {
 public:
  explicit Assembler(std::uint64_t base_offset = kTextStart) : base_(base_offset) {}

  std::uint64_t here() const { return base_ + bytes_.size(); }
  void label(const std::string& name);

  void op(Bytes bytes, std::string mnemonic, refdisasm::InstClass cls = refdisasm::InstClass::None);
  /// `opcode` followed by a rel8 to `target`.
  void rel8(Bytes opcode, const std::string& target, std::string mnemonic, refdisasm::InstClass cls);
  void rel32(Bytes opcode, const std::string& target, std::string mnemonic, refdisasm::InstClass cls);
  /// `prefix` + RIP-relative disp32 to `target` + `suffix`.
  void rip32(Bytes prefix, const std::string& target, std::string mnemonic, Bytes suffix = {},
             refdisasm::InstClass cls = refdisasm::InstClass::None);
  void exit_syscall();  // xor edi,edi; mov eax,60; syscall

  void data(Bytes bytes);
  /// 32-bit little-endian (a - b) of two labels.
  void data_diff32(const std::string& a, const std::string& b);
  void pad_to(std::uint64_t alignment, std::uint8_t fill);

  struct Output {
    CodeImage image;
    std::vector<TruthInst> insts;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> data_regions;
    std::map<std::string, std::uint64_t> labels;
  };
  Output finish();

 private:
  struct Fixup {
    std::size_t at;     // byte index of the field
    std::size_t width;  // 1 or 4
    std::string target;
    std::uint64_t anchor;  // offset the displacement is relative to
    std::optional<std::string> minus;  // data_diff32
    std::optional<std::size_t> inst;   // index into insts_ whose rel_target to set
  };
  std::uint64_t base_;
  Bytes bytes_;
  std::vector<TruthInst> insts_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> data_;
  std::map<std::string, std::uint64_t> labels_;
  std::vector<Fixup> fixups_;
};

}  // namespace tracebin::corpus
