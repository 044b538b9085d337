#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tracebin/evaluator.hpp"
#include "tracebin/explain.hpp"

namespace tracebin::batch {

enum class Format { Csv, Json, Table };

std::optional<Format> parse_format(std::string_view name);

struct BatchEntry {
  std::filesystem::path trace_file;
  std::filesystem::path view_file;
  std::string tool;
  /// Empty means the path of the evaluated module.
  std::string target;
};

struct BatchSpec {
  std::vector<BatchEntry> entries;
  std::filesystem::path output_dir;
  Format format = Format::Table;
  unsigned jobs = 1;
};

/// Spec file: CSV with header `trace,view,tool,target`; relative paths are
/// resolved against the spec file's directory. Throws MalformedRecord.
std::vector<BatchEntry> read_entries(std::istream& in, const std::filesystem::path& relative_to = {});
std::vector<BatchEntry> read_entries_file(const std::filesystem::path& path);

struct EntryOutcome {
  BatchEntry entry;
  std::optional<std::string> error;
  ErrorReport report;
  std::vector<Explanation> explanations;
};

/// One row per tool: how many targets fell in each bucket, the total
/// number of instruction errors, and the explained misses by edge kind.
struct SummaryRow {
  std::string tool;
  std::uint64_t targets = 0;
  std::array<std::uint64_t, 5> buckets{};  // indexed by Bucket
  std::uint64_t total_errors = 0;
  CategoryCounts categories;

  std::uint64_t operator[](Bucket b) const { return buckets[static_cast<std::size_t>(b)]; }
  bool operator==(const SummaryRow&) const = default;
};

std::vector<SummaryRow> summarize(const std::vector<EntryOutcome>& outcomes);

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows, Format format, bool color = false);
nlohmann::json summary_to_json(const std::vector<SummaryRow>& rows);

struct BatchResult {
  std::vector<EntryOutcome> outcomes;  // in spec order
  std::vector<SummaryRow> summary;
  std::size_t failures = 0;
};

/// Evaluates and explains every entry (at most `jobs` at a time), writes
/// per-entry report and explain files, pairwise deltas for targets seen by
/// several tools, `summary.<csv|json|txt>` and a `batch.meta.json` sidecar.
/// Entry failures are recorded and skipped.
BatchResult run_batch(const BatchSpec& spec);

/// File-name-safe rendering of a target or tool name.
std::string file_stem(std::string_view name);

}  // namespace tracebin::batch
