#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"

#include "tracebin/disasm_view.hpp"
#include "tracebin/evaluator.hpp"
#include "tracebin/model.hpp"

namespace tracebin {

enum class Verdict { SourceError, TargetError };

struct Explanation {
  NormAddr block_leader;
  Verdict verdict = Verdict::SourceError;
  std::optional<EdgeRecord> via_edge;
  std::uint64_t missed_inst_count = 0;
  /// Every inbound edge whose source is correctly disassembled; via_edge is
  /// the one with the smallest source offset.
  std::vector<EdgeRecord> qualifying_edges;

  bool operator==(const Explanation&) const = default;
};

/// Groups traced instructions into runtime blocks (a block starts at a
/// leader, after a gap, or after an edge source) and explains each block
/// holding MISSING instructions. Throws InconsistentInputs when the report
/// names locations the trace does not contain.
std::vector<Explanation> explain(const TraceSet& trace, const DisasmView& view, const ErrorReport& report);

struct CategoryCounts {
  std::array<std::uint64_t, 4> by_kind{};  // indexed by EdgeKind
  std::uint64_t unattributed = 0;

  std::uint64_t operator[](EdgeKind k) const { return by_kind[static_cast<std::size_t>(k)]; }
  std::uint64_t total() const { return by_kind[0] + by_kind[1] + by_kind[2] + by_kind[3] + unattributed; }
  bool operator==(const CategoryCounts&) const = default;
};

CategoryCounts categorize(const std::vector<Explanation>& explanations);

/// Rows `leader_hex,verdict,kind,src_hex,dst_hex,missed_count`; kind, src and
/// dst are empty for SOURCE_ERROR rows.
void write_explain_csv(std::ostream& out, const std::vector<Explanation>& explanations);
std::vector<Explanation> read_explain_csv(std::istream& in, ModuleId module = 0);
std::vector<Explanation> read_explain_file(const std::filesystem::path& path, ModuleId module = 0);
void write_explain_file(const std::filesystem::path& path, const std::vector<Explanation>& explanations);

nlohmann::json explanations_to_json(const std::vector<Explanation>& explanations);
nlohmann::json categories_to_json(const CategoryCounts& counts);

}  // namespace tracebin
