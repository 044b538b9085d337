#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "tracebin/disasm_view.hpp"
#include "tracebin/model.hpp"

namespace tracebin {

enum class ErrorKind { Missing, Mismatch };

struct ViewClaim {
  std::uint64_t offset = 0;
  std::size_t len = 0;
  std::optional<Bytes> bytes;

  bool operator==(const ViewClaim&) const = default;
};

/// A guaranteed disassembly error: `traced` executed, and the view either
/// has no record starting at its location (Missing) or one that disagrees
/// in length or bytes (Mismatch).
struct ErrorRecord {
  NormAddr loc;
  ErrorKind kind = ErrorKind::Missing;
  InstRecord traced;
  std::optional<ViewClaim> view_claim;

  bool operator==(const ErrorRecord&) const = default;
};

/// Error-count buckets: Z = 0, A = 1..80, B = 81..410, C = 411..1009, D >= 1010.
enum class Bucket { Z, A, B, C, D };

Bucket bucketize(std::uint64_t total_errors);
char bucket_letter(Bucket b);
std::optional<Bucket> bucket_from_letter(char c);

struct ErrorReport {
  std::string target;
  std::string tool;
  ModuleId module = 0;
  std::vector<ErrorRecord> errors;  // sorted by loc
  std::uint64_t missing_count = 0;
  std::uint64_t mismatch_count = 0;
  /// Matches where the view carried no bytes and only lengths were compared.
  std::uint64_t length_only_matches = 0;
  Bucket bucket = Bucket::Z;

  std::uint64_t total() const { return missing_count + mismatch_count; }
  bool operator==(const ErrorReport&) const = default;
};

struct EvalOptions {
  std::string target;
  ModuleId module = 0;
};

/// Cross-references every traced instruction of `opts.module` against the
/// view (already rebased to module offsets). Only traced locations can be
/// reported. Throws ModuleMismatch if the trace has no such module.
ErrorReport evaluate(const TraceSet& trace, const DisasmView& view, const EvalOptions& opts = {});

struct ReportDelta {
  std::set<NormAddr> only_a;
  std::set<NormAddr> only_b;
  std::set<NormAddr> both;

  bool empty() const { return only_a.empty() && only_b.empty(); }
};

/// Throws TargetMismatch when the reports describe different targets/modules.
ReportDelta diff_reports(const ErrorReport& a, const ErrorReport& b);

/// CSV: a `# tracebin-report ...` summary line followed by one row per error:
/// `loc_hex,kind,traced_len,traced_bytes,view_claim` where view_claim is
/// `<off-hex>:<len>:<bytes-hex>` (bytes may be empty) or empty.
void write_report_csv(std::ostream& out, const ErrorReport& report);
ErrorReport read_report_csv(std::istream& in);
ErrorReport read_report_file(const std::filesystem::path& path);
void write_report_file(const std::filesystem::path& path, const ErrorReport& report);

nlohmann::json report_to_json(const ErrorReport& report);
ErrorReport report_from_json(const nlohmann::json& j);

void write_delta_csv(std::ostream& out, const ReportDelta& delta);

}  // namespace tracebin
