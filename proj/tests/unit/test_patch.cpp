#include "doctest.h"

#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "tracebin/corpus.hpp"
#include "tracebin/elf.hpp"
#include "tracebin/error.hpp"
#include "tracebin/patch.hpp"

using namespace tracebin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tracebin-patch-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Usage;
}

/// A two-instruction program whose second instruction is reached only via
/// an indirect jump the view missed.
struct Synthetic {
  TraceSet trace;
  DisasmView view;
  CodeImage image;
};

Synthetic indirect_target(Bytes target_inst) {
  Synthetic s;
  s.image.base_offset = 0;
  s.image.bytes = {0xff, 0xe0};
  for (auto b : target_inst) s.image.bytes.push_back(b);
  s.image.bytes.push_back(0xc3);
  s.trace.add_module({0, "syn", 0x400000, 0, 0x1000});
  s.trace.add_inst({{0, 0}, {0xff, 0xe0}});
  s.trace.add_inst({{0, 2}, target_inst});
  s.trace.add_inst({{0, 2 + target_inst.size()}, {0xc3}});
  s.trace.add_leader({0, 0});
  s.trace.add_edge({EdgeKind::Indirect, {0, 0}, {0, 2}});
  s.view.add({0, 2, Bytes{0xff, 0xe0}, std::nullopt});
  return s;
}

std::vector<patch::PatchPlan> plan_for(const Synthetic& s, const patch::PlanOptions& opts = {}) {
  auto report = evaluate(s.trace, s.view);
  return patch::plan(report, explain(s.trace, s.view, report), s.image, opts);
}

struct Lab {
  corpus::CorpusCase c;
  std::vector<patch::PatchPlan> plans;
};

Lab jump_table_lab(const std::string& name) {
  Lab lab{corpus::gen(name), {}};
  // Plans always come from the view that misses the arms.
  std::vector<std::uint64_t> entries{lab.c.entry};
  auto view = refdisasm::recursive_descent(lab.c.image, entries, {});
  auto report = evaluate(lab.c.expected_trace, view);
  lab.plans = patch::plan(report, explain(lab.c.expected_trace, view, report), lab.c.image);
  return lab;
}

fs::path write_patched(const TempDir& dir, const corpus::CorpusCase& c, const patch::PatchPlan& p) {
  auto path = dir.path / (c.name + ".patched.elf");
  elf::write_file(path, patch::apply_elf(corpus::emit_elf(c), p), true);
  return path;
}

DisasmView view_of(const CodeImage& image, std::uint64_t entry, bool endbr) {
  refdisasm::HeuristicConfig cfg;
  cfg.endbr_scan = endbr;
  std::vector<std::uint64_t> entries{entry};
  return refdisasm::recursive_descent(image, entries, cfg);
}

}  // namespace

TEST_CASE("marker sizing") {
  auto add3 = indirect_target({0x48, 0x01, 0xd0});
  auto plans = plan_for(add3);
  REQUIRE(plans.size() == 1);
  CHECK(to_hex(plans[0].patch_bytes) == "0f0b90");
  CHECK(to_hex(plans[0].original_bytes) == "4801d0");
  CHECK(plans[0].marker == patch::Marker::Ud2);
  CHECK(plans[0].rationale == patch::Rationale::TargetOfIndirect);
  CHECK(plans[0].target_loc == NormAddr{0, 2});
  auto patched = patch::apply(add3.image, plans[0]);
  auto ud2 = refdisasm::decode_len(patched, 2);
  CHECK(ud2.len() == 2);
  CHECK(refdisasm::decode_len(patched, 4).len() == 1);

  auto one = plan_for(indirect_target({0x50}));
  CHECK(to_hex(one[0].patch_bytes) == "cc");
  CHECK(one[0].marker == patch::Marker::Int3);

  patch::PlanOptions int3;
  int3.prefer_int3 = true;
  CHECK(to_hex(plan_for(add3, int3)[0].patch_bytes) == "cc9090");

  auto none = indirect_target({0x50});
  none.view.add({2, 1, Bytes{0x50}, std::nullopt});
  none.view.add({3, 1, Bytes{0xc3}, std::nullopt});
  CHECK(code_of([&] { plan_for(none); }) == ErrorCode::NoViableSite);
}

TEST_CASE("endbr64 is never replaced") {
  auto lab = jump_table_lab("jump_table_cet");
  REQUIRE(lab.plans.size() == 3);
  for (const auto& p : lab.plans) {
    CHECK(p.original_bytes != Bytes{0xf3, 0x0f, 0x1e, 0xfa});
    CHECK(p.target_loc.offset == p.patch_offset);
    bool at_arm = false;
    for (const char* arm : {"t1", "t2", "t3"}) at_arm |= p.target_loc.offset == lab.c.label(arm) + 4;
    CHECK(at_arm);
  }
}

TEST_CASE("ranking and apply/revert") {
  auto lab = jump_table_lab("jump_table");
  REQUIRE(lab.plans.size() == 3);
  CHECK(lab.plans[0].target_loc.offset == lab.c.label("t1"));
  CHECK(lab.plans[1].target_loc.offset == lab.c.label("t2"));
  CHECK(lab.plans[2].target_loc.offset == lab.c.label("t3"));
  CHECK(lab.plans[0].missed_inst_count >= lab.plans[2].missed_inst_count);

  for (const auto& p : lab.plans) {
    CHECK(p.rationale == patch::Rationale::TargetOfIndirect);
    CHECK(to_hex(p.patch_bytes) == "0f0b909090");
    auto patched = patch::apply(lab.c.image, p);
    CHECK(patched.bytes.size() == lab.c.image.bytes.size());
    CHECK(patch::revert(patched, p).bytes == lab.c.image.bytes);
    CHECK(code_of([&] { patch::apply(patched, p); }) == ErrorCode::BytesMismatch);
    CHECK(code_of([&] { patch::revert(lab.c.image, p); }) == ErrorCode::BytesMismatch);
    for (const auto& t : lab.c.ground_truth) {
      if (t.offset == p.target_loc.offset) continue;
      CHECK(refdisasm::decode_len(patched, t.offset).bytes == t.bytes);
    }
    for (std::size_t i = 0; i < patched.bytes.size(); ++i) {
      auto off = patched.base_offset + i;
      if (off < p.patch_offset || off >= p.patch_offset + p.patch_bytes.size())
        CHECK(patched.bytes[i] == lab.c.image.bytes[i]);
    }
  }

  auto elf = corpus::emit_elf(lab.c);
  auto patched_elf = patch::apply_elf(elf, lab.plans[0]);
  CHECK(patched_elf.size() == elf.size());
  CHECK(code_of([&] { patch::apply_elf(patched_elf, lab.plans[0]); }) == ErrorCode::BytesMismatch);
}

TEST_CASE("desync strategy plants a call over the marker") {
  // nop; 3 unexecuted nops; mov $0x6,%edx (missed); ret
  Synthetic s;
  s.image = {0, {0x90, 0x90, 0x90, 0x90, 0xba, 0x06, 0x00, 0x00, 0x00, 0xc3}};
  s.trace.add_module({0, "syn", 0x400000, 0, 0x1000});
  s.trace.add_inst({{0, 0}, {0x90}});
  s.trace.add_inst({{0, 4}, {0xba, 0x06, 0x00, 0x00, 0x00}});
  s.trace.add_leader({0, 0});
  s.view.add({0, 1, Bytes{0x90}, std::nullopt});
  patch::PlanOptions opts;
  opts.strategy = patch::Strategy::Desync;
  CHECK(code_of([&] { plan_for(s, opts); }) == ErrorCode::Usage);
  opts.trace = &s.trace;
  auto plans = plan_for(s, opts);
  REQUIRE(plans.size() == 1);
  const auto& p = plans[0];
  CHECK(p.rationale == patch::Rationale::DesyncRegion);
  CHECK(p.patch_offset == 1);
  CHECK(to_hex(p.patch_bytes) == "e890900f0b909090");
  auto patched = patch::apply(s.image, p);
  auto sweep = refdisasm::linear_sweep(patched, 0, {});
  CHECK_FALSE(sweep.find(4));
  CHECK(sweep.find(1)->len == 5);
  CHECK(refdisasm::decode_len(patched, 4).cls == refdisasm::InstClass::Halting);
}

TEST_CASE("plan files round trip") {
  auto lab = jump_table_lab("jump_table_cet");
  auto plans = lab.plans;
  plans[1].marker = patch::Marker::Int3;
  plans[2].rationale = patch::Rationale::DesyncRegion;
  std::stringstream io;
  patch::write_plans(io, plans);
  CHECK(patch::read_plans(io) == plans);

  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return code_of([&] { patch::read_plans(in); });
  };
  CHECK(bad("P 0 1000 1000 90 0f0b ud2 MISSED_BLOCK 1\n") == ErrorCode::MalformedRecord);
  CHECK(bad("P 0 1000 1000 9090 0f0b ud3 MISSED_BLOCK 1\n") == ErrorCode::MalformedRecord);
  CHECK(bad("P 0 1000 1000 9090 0f0b ud2 MISSED_BLOCK\n") == ErrorCode::MalformedRecord);
  CHECK(bad("P 0 2000 1000 9090 0f0b ud2 MISSED_BLOCK 1\n") == ErrorCode::MalformedRecord);
}

TEST_CASE("verify outcomes" * doctest::skip(!tracer::platform_supported())) {
  TempDir dir;
  tracer::RunSpec quiet;
  quiet.stdout_file = "/dev/null";

  SUBCASE("hidden and reached") {
    auto lab = jump_table_lab("jump_table");
    const auto& p = lab.plans[0];
    auto path = write_patched(dir, lab.c, p);
    auto view = view_of(patch::apply(lab.c.image, p), lab.c.entry, false);
    CHECK_FALSE(view.find(p.target_loc.offset));
    CHECK(patch::verify(path, view, p, quiet) == patch::Verdict::HiddenAndReached);
  }

  SUBCASE("visible once the endbr scan covers the arm") {
    auto lab = jump_table_lab("jump_table_cet");
    const auto& p = lab.plans[0];
    auto path = write_patched(dir, lab.c, p);
    auto view = view_of(patch::apply(lab.c.image, p), lab.c.entry, true);
    CHECK(patch::verify(path, view, p, quiet) == patch::Verdict::Visible);
  }

  SUBCASE("unreached when the input skips the arm") {
    auto lab = jump_table_lab("jump_table");
    const patch::PatchPlan* on_t3 = nullptr;
    for (const auto& p : lab.plans)
      if (p.target_loc.offset == lab.c.label("t3")) on_t3 = &p;
    REQUIRE(on_t3);
    auto path = write_patched(dir, lab.c, *on_t3);
    auto view = view_of(patch::apply(lab.c.image, *on_t3), lab.c.entry, false);
    auto run = quiet;
    run.args = {"x"};
    CHECK(patch::verify(path, view, *on_t3, run) == patch::Verdict::Unreached);
  }

  SUBCASE("tracer failures surface as TraceFailure") {
    auto lab = jump_table_lab("jump_table");
    DisasmView empty;
    CHECK(code_of([&] { patch::verify(dir.path / "missing.elf", empty, lab.plans[0], quiet); }) ==
          ErrorCode::TraceFailure);
  }
}
