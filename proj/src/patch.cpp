#include "tracebin/patch.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "tracebin/elf.hpp"
#include "tracebin/error.hpp"

namespace tracebin::patch {

std::string to_string(Marker m) { return m == Marker::Ud2 ? "ud2" : "int3"; }

std::string to_string(Rationale r) {
  switch (r) {
    case Rationale::TargetOfIndirect: return "TARGET_OF_INDIRECT";
    case Rationale::MissedBlock: return "MISSED_BLOCK";
    case Rationale::DesyncRegion: return "DESYNC_REGION";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::HiddenAndReached: return "hidden_and_reached";
    case Verdict::Visible: return "visible";
    case Verdict::Unreached: return "unreached";
  }
  return "?";
}

namespace {

const Bytes kEndbr64 = {0xf3, 0x0f, 0x1e, 0xfa};

Bytes marker_bytes(Marker m) { return m == Marker::Ud2 ? Bytes{0x0f, 0x0b} : Bytes{0xcc}; }

Bytes image_slice(const CodeImage& image, std::uint64_t offset, std::size_t len) {
  if (offset < image.base_offset || offset + len > image.end_offset())
    throw Error(ErrorCode::BytesMismatch, "range at " + to_hex(offset) + " lies outside the image");
  auto from = image.bytes.begin() + static_cast<std::ptrdiff_t>(offset - image.base_offset);
  return Bytes(from, from + static_cast<std::ptrdiff_t>(len));
}

/// Bytes before `site` that no traced instruction covers, up to `limit`.
std::size_t unexecuted_gap(const TraceSet& trace, const CodeImage& image, NormAddr site, std::size_t limit) {
  std::size_t gap = 0;
  while (gap < limit) {
    std::uint64_t off = site.offset - gap - 1;
    if (site.offset < gap + 1 || off < image.base_offset) break;
    bool covered = false;
    auto it = trace.insts().upper_bound({site.module, off});
    if (it != trace.insts().begin()) {
      --it;
      covered = it->first.module == site.module && it->second.end() > off;
    }
    if (covered) break;
    ++gap;
  }
  return gap;
}

}  // namespace

std::vector<PatchPlan> plan(const ErrorReport& report, const std::vector<Explanation>& explanations,
                            const CodeImage& image, const PlanOptions& opts) {
  if (opts.strategy == Strategy::Desync && !opts.trace)
    throw Error(ErrorCode::Usage, "the desync strategy needs the trace");
  std::map<NormAddr, const ErrorRecord*> missing;
  for (const auto& e : report.errors)
    if (e.kind == ErrorKind::Missing) missing[e.loc] = &e;

  struct Ranked {
    PatchPlan plan;
    bool target_error;
  };
  std::vector<Ranked> ranked;
  std::set<NormAddr> used;

  for (const auto& ex : explanations) {
    auto it = missing.lower_bound(ex.block_leader);
    if (it == missing.end() || it->first.module != ex.block_leader.module) continue;
    std::optional<PatchPlan> chosen;
    for (; it != missing.end() && !chosen; ++it) {
      const InstRecord& inst = it->second->traced;
      auto next = std::next(it);
      bool last_in_run = next == missing.end() || next->first != NormAddr{inst.loc.module, inst.end()};
      if (inst.bytes != kEndbr64 && !used.count(inst.loc)) {
        if (image_slice(image, inst.loc.offset, inst.len()) != inst.bytes)
          throw Error(ErrorCode::BytesMismatch, "image differs from the trace at " + to_hex(inst.loc.offset));
        PatchPlan p;
        p.target_loc = inst.loc;
        p.marker = opts.prefer_int3 || inst.len() < 2 ? Marker::Int3 : Marker::Ud2;
        p.missed_inst_count = ex.missed_inst_count;
        p.rationale = ex.verdict == tracebin::Verdict::TargetError && ex.via_edge &&
                              ex.via_edge->kind == EdgeKind::Indirect
                          ? Rationale::TargetOfIndirect
                          : Rationale::MissedBlock;
        Bytes marked = marker_bytes(p.marker);
        marked.resize(inst.len(), 0x90);
        std::size_t lead = 0;
        if (opts.strategy == Strategy::Desync) {
          lead = unexecuted_gap(*opts.trace, image, inst.loc, 3);
          if (lead > 0) p.rationale = Rationale::DesyncRegion;
        }
        if (opts.strategy == Strategy::Block || lead > 0) {
          p.patch_offset = inst.loc.offset - lead;
          p.original_bytes = image_slice(image, p.patch_offset, lead + inst.len());
          p.patch_bytes = p.original_bytes;
          if (lead > 0) p.patch_bytes[0] = 0xe8;
          std::copy(marked.begin(), marked.end(), p.patch_bytes.begin() + static_cast<std::ptrdiff_t>(lead));
          chosen = std::move(p);
        }
      }
      if (last_in_run) break;
    }
    if (chosen) {
      used.insert(chosen->target_loc);
      ranked.push_back({std::move(*chosen), ex.verdict == tracebin::Verdict::TargetError});
    }
  }
  if (ranked.empty()) throw Error(ErrorCode::NoViableSite, "no missed instruction can hold a marker");
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return std::make_tuple(!a.target_error, -static_cast<std::int64_t>(a.plan.missed_inst_count), a.plan.target_loc) <
           std::make_tuple(!b.target_error, -static_cast<std::int64_t>(b.plan.missed_inst_count), b.plan.target_loc);
  });
  std::vector<PatchPlan> out;
  for (auto& r : ranked) out.push_back(std::move(r.plan));
  return out;
}

namespace {

CodeImage replace(const CodeImage& image, std::uint64_t offset, const Bytes& expect, const Bytes& with) {
  Bytes current;
  try {
    current = image_slice(image, offset, expect.size());
  } catch (const Error&) {
    throw Error(ErrorCode::BytesMismatch, "patch range at " + to_hex(offset) + " lies outside the image");
  }
  if (current != expect)
    throw Error(ErrorCode::BytesMismatch,
                "expected " + to_hex(expect) + " at " + to_hex(offset) + ", found " + to_hex(current));
  CodeImage out = image;
  std::copy(with.begin(), with.end(), out.bytes.begin() + static_cast<std::ptrdiff_t>(offset - image.base_offset));
  return out;
}

}  // namespace

CodeImage apply(const CodeImage& image, const PatchPlan& plan) {
  return replace(image, plan.patch_offset, plan.original_bytes, plan.patch_bytes);
}

CodeImage revert(const CodeImage& image, const PatchPlan& plan) {
  return replace(image, plan.patch_offset, plan.patch_bytes, plan.original_bytes);
}

Bytes apply_elf(const Bytes& file, const PatchPlan& plan) {
  elf::ElfInfo info = elf::parse(file);
  auto at = info.file_offset(plan.patch_offset);
  auto last = info.file_offset(plan.patch_offset + plan.original_bytes.size() - 1);
  if (!at || !last || *last != *at + plan.original_bytes.size() - 1)
    throw Error(ErrorCode::BytesMismatch, "patch range at " + to_hex(plan.patch_offset) + " is not file-backed");
  CodeImage whole{0, file};
  return replace(whole, *at, plan.original_bytes, plan.patch_bytes).bytes;
}

Verdict judge(const DisasmView& view, const PatchPlan& plan, const tracer::TraceResult& run) {
  bool reached = run.trace.contains(plan.target_loc) && run.signal_at(plan.target_loc);
  if (!reached) return Verdict::Unreached;
  const ViewRecord* rec = view.find(plan.target_loc.offset);
  if (!rec) return Verdict::HiddenAndReached;
  Bytes marker = marker_bytes(plan.marker);
  bool shows_marker = !rec->bytes || (rec->bytes->size() >= marker.size() &&
                                      std::equal(marker.begin(), marker.end(), rec->bytes->begin()));
  return shows_marker ? Verdict::Visible : Verdict::HiddenAndReached;
}

Verdict verify(const std::filesystem::path& patched_elf, const DisasmView& view, const PatchPlan& plan,
               tracer::RunSpec run) {
  run.program_path = patched_elf.string();
  tracer::TraceResult result;
  try {
    result = tracer::collect(run);
  } catch (const Error& e) {
    throw Error(ErrorCode::TraceFailure, e.what());
  }
  return judge(view, plan, result);
}

void write_plans(std::ostream& out, const std::vector<PatchPlan>& plans) {
  out << "# module target patch_offset original patch marker rationale missed\n";
  for (const auto& p : plans)
    out << "P " << p.target_loc.module << ' ' << to_hex(p.target_loc.offset) << ' ' << to_hex(p.patch_offset) << ' '
        << to_hex(p.original_bytes) << ' ' << to_hex(p.patch_bytes) << ' ' << to_string(p.marker) << ' '
        << to_string(p.rationale) << ' ' << p.missed_inst_count << '\n';
}

std::vector<PatchPlan> read_plans(std::istream& in) {
  std::vector<PatchPlan> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    auto tok = split_ws(text);
    auto bad = [&] { throw Error(ErrorCode::MalformedRecord, "plan line " + std::to_string(line_no)); };
    if (tok.size() != 9 || tok[0] != "P") bad();
    PatchPlan p;
    auto mod = parse_dec_u64(tok[1]);
    auto target = parse_hex_u64(tok[2]);
    auto off = parse_hex_u64(tok[3]);
    auto orig = parse_hex_bytes(tok[4]);
    auto patch = parse_hex_bytes(tok[5]);
    auto missed = parse_dec_u64(tok[8]);
    if (!mod || !target || !off || !orig || !patch || !missed || orig->size() != patch->size()) bad();
    p.target_loc = {static_cast<ModuleId>(*mod), *target};
    p.patch_offset = *off;
    p.original_bytes = *orig;
    p.patch_bytes = *patch;
    if (tok[6] == "ud2") p.marker = Marker::Ud2;
    else if (tok[6] == "int3") p.marker = Marker::Int3;
    else bad();
    if (tok[7] == "TARGET_OF_INDIRECT") p.rationale = Rationale::TargetOfIndirect;
    else if (tok[7] == "MISSED_BLOCK") p.rationale = Rationale::MissedBlock;
    else if (tok[7] == "DESYNC_REGION") p.rationale = Rationale::DesyncRegion;
    else bad();
    p.missed_inst_count = *missed;
    if (*target < *off || *target - *off >= p.patch_bytes.size()) bad();
    out.push_back(std::move(p));
  }
  return out;
}

void write_plans_file(const std::filesystem::path& path, const std::vector<PatchPlan>& plans) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_plans(out, plans);
}

std::vector<PatchPlan> read_plans_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_plans(in);
}

}  // namespace tracebin::patch
