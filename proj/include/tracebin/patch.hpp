#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tracebin/disasm_view.hpp"
#include "tracebin/evaluator.hpp"
#include "tracebin/explain.hpp"
#include "tracebin/refdisasm.hpp"
#include "tracebin/tracer.hpp"

namespace tracebin::patch {

enum class Marker { Ud2, Int3 };
enum class Rationale {
  TargetOfIndirect,
  /// A missed block entered by a non-indirect edge, or a source-error block.
  MissedBlock,
  /// Heuristic: a call opcode planted in unexecuted bytes before the marker
  /// so that a linear sweep swallows it.
  DesyncRegion,
};

std::string to_string(Marker m);
std::string to_string(Rationale r);

struct PatchPlan {
  NormAddr target_loc;
  /// First patched byte; equals target_loc.offset except for DesyncRegion.
  std::uint64_t patch_offset = 0;
  Bytes original_bytes;
  Bytes patch_bytes;
  Marker marker = Marker::Ud2;
  Rationale rationale = Rationale::TargetOfIndirect;
  std::uint64_t missed_inst_count = 0;

  bool operator==(const PatchPlan&) const = default;
};

enum class Strategy { Block, Desync };

struct PlanOptions {
  bool prefer_int3 = false;
  Strategy strategy = Strategy::Block;
  /// Needed by the desync strategy to find unexecuted bytes before a site.
  const TraceSet* trace = nullptr;
};

/// One plan per missed block, ranked target errors first, then by missed
/// instruction count (descending), then offset. endbr64 landing pads are
/// never replaced. Throws NoViableSite when nothing fits.
std::vector<PatchPlan> plan(const ErrorReport& report, const std::vector<Explanation>& explanations,
                            const CodeImage& image, const PlanOptions& opts = {});

/// Throws BytesMismatch when the image does not hold `original_bytes`.
CodeImage apply(const CodeImage& image, const PatchPlan& plan);
CodeImage revert(const CodeImage& image, const PatchPlan& plan);
/// Same, on an ELF file (module offsets mapped through the load segments).
Bytes apply_elf(const Bytes& file, const PatchPlan& plan);

enum class Verdict { HiddenAndReached, Visible, Unreached };
std::string to_string(Verdict v);

/// Decides from a view of the patched binary and a trace of it.
Verdict judge(const DisasmView& view_of_patched, const PatchPlan& plan, const tracer::TraceResult& run);

/// Traces the patched ELF and judges it. Tracer errors become TraceFailure.
Verdict verify(const std::filesystem::path& patched_elf, const DisasmView& view_of_patched, const PatchPlan& plan,
               tracer::RunSpec run = {});

void write_plans(std::ostream& out, const std::vector<PatchPlan>& plans);
std::vector<PatchPlan> read_plans(std::istream& in);
void write_plans_file(const std::filesystem::path& path, const std::vector<PatchPlan>& plans);
std::vector<PatchPlan> read_plans_file(const std::filesystem::path& path);

}  // namespace tracebin::patch
