#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tracebin/hex.hpp"

namespace tracebin {

inline constexpr std::size_t kMaxInstLen = 15;

using ModuleId = std::uint32_t;

/// A loaded image as observed at runtime. `text_start` is relative to
/// `runtime_base`, so the executable range is
/// [runtime_base + text_start, runtime_base + text_start + text_size).
struct ModuleInfo {
  ModuleId id = 0;
  std::string path;
  std::uint64_t runtime_base = 0;
  std::uint64_t text_start = 0;
  std::uint64_t text_size = 0;

  std::uint64_t text_end() const { return text_start + text_size; }
  bool operator==(const ModuleInfo&) const = default;
};

struct NormAddr {
  ModuleId module = 0;
  std::uint64_t offset = 0;

  auto operator<=>(const NormAddr&) const = default;
};

/// One executed instruction. The length is the size of `bytes`.
struct InstRecord {
  NormAddr loc;
  Bytes bytes;

  std::size_t len() const { return bytes.size(); }
  std::uint64_t end() const { return loc.offset + bytes.size(); }
  bool operator==(const InstRecord&) const = default;
};

enum class EdgeKind : std::uint8_t { Cbr, Direct, Indirect, Return };

inline constexpr EdgeKind kAllEdgeKinds[] = {EdgeKind::Cbr, EdgeKind::Direct, EdgeKind::Indirect,
                                             EdgeKind::Return};

char edge_kind_letter(EdgeKind kind);
std::optional<EdgeKind> edge_kind_from_letter(char letter);
/// "cbr", "direct", "indirect", "return".
std::string edge_kind_name(EdgeKind kind);

struct EdgeRecord {
  EdgeKind kind = EdgeKind::Direct;
  NormAddr src;
  NormAddr dst;

  auto operator<=>(const EdgeRecord&) const = default;
};

/// The unique instruction trace: a set of executed instructions plus the
/// control transfers and block leaders seen at runtime.
class TraceSet {
 public:
  const std::vector<ModuleInfo>& modules() const { return modules_; }
  const std::map<NormAddr, InstRecord>& insts() const { return insts_; }
  const std::set<EdgeRecord>& edges() const { return edges_; }
  const std::set<NormAddr>& leaders() const { return leaders_; }

  const ModuleInfo* find_module(ModuleId id) const;
  const ModuleInfo* find_module(const std::string& path) const;
  const InstRecord* find_inst(NormAddr loc) const;
  bool contains(NormAddr loc) const { return insts_.count(loc) != 0; }

  /// Throws AmbiguousModule when the id is already present with different data.
  void add_module(ModuleInfo info);
  /// Set semantics: re-adding an identical record is a no-op. A record with
  /// the same loc but different bytes throws ConflictingInstruction.
  /// Returns true when the record was new.
  bool add_inst(InstRecord rec);
  bool add_edge(EdgeRecord edge);
  bool add_leader(NormAddr loc);

  /// Checks every TraceSet invariant; throws InvalidTraceSet on the first
  /// violation (overlapping records, dangling edge endpoints or leaders,
  /// duplicate module ids, out-of-range text, size bound).
  void validate() const;

  bool operator==(const TraceSet&) const = default;

 private:
  std::vector<ModuleInfo> modules_;
  std::map<NormAddr, InstRecord> insts_;
  std::set<EdgeRecord> edges_;
  std::set<NormAddr> leaders_;
};

/// Maps a runtime address to (module, offset from runtime_base).
/// Throws NoModule / AmbiguousModule.
NormAddr normalize(std::uint64_t raw_addr, std::span<const ModuleInfo> modules);
std::uint64_t denormalize(NormAddr addr, std::span<const ModuleInfo> modules);

/// Set union over all inputs with module tables re-keyed by path.
TraceSet merge(std::span<const TraceSet> traces);

/// Keeps only instructions, leaders and edges (both endpoints) of one module.
TraceSet filter_module(const TraceSet& trace, ModuleId module);

}  // namespace tracebin
