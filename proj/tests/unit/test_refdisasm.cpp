#include "doctest.h"

#include <set>
#include <vector>

#include "tracebin/corpus.hpp"
#include "tracebin/error.hpp"
#include "tracebin/evaluator.hpp"
#include "tracebin/refdisasm.hpp"

using namespace tracebin;
using namespace tracebin::refdisasm;

namespace {

CodeImage at(std::uint64_t base, Bytes b) { return CodeImage{base, std::move(b)}; }

std::set<std::uint64_t> offsets(const DisasmView& v) {
  std::set<std::uint64_t> out;
  for (const auto& [off, rec] : v.insts()) out.insert(off);
  return out;
}

}  // namespace

TEST_CASE("decode_len basics") {
  auto call = decode_len(at(0x1193, {0xe8, 0xc5, 0xfe, 0xff, 0xff}), 0x1193);
  CHECK(call.len() == 5);
  CHECK(call.cls == InstClass::DirectCall);
  CHECK(call.rel_target == 0x105d);

  auto endbr = decode_len(at(0, {0xf3, 0x0f, 0x1e, 0xfa}), 0);
  CHECK(endbr.len() == 4);
  CHECK(endbr.cls == InstClass::None);

  CHECK(decode_len(at(0, {0x3e, 0xff, 0xe0}), 0).cls == InstClass::Indirect);
  CHECK(decode_len(at(0, {0x0f, 0x0b}), 0).cls == InstClass::Halting);
  CHECK(decode_len(at(0, {0xcc}), 0).cls == InstClass::Halting);
  CHECK(decode_len(at(0, {0xc2, 0x08, 0x00}), 0).cls == InstClass::Return);
  CHECK(decode_len(at(0, {0x0f, 0x85, 0, 0, 0, 0}), 0).rel_target == 6);
  CHECK(decode_len(at(0, {0x48, 0xb8, 1, 2, 3, 4, 5, 6, 7, 8}), 0).len() == 10);
  CHECK(decode_len(at(0, {0x66, 0x0f, 0x1f, 0x44, 0x00, 0x00}), 0).len() == 6);
  CHECK(decode_len(at(0, {0xf7, 0xc0, 1, 0, 0, 0}), 0).len() == 6);
  CHECK(decode_len(at(0, {0x48, 0x8d, 0x04, 0x25, 0, 0, 0, 0}), 0).len() == 8);

  try {
    decode_len(at(0x10, {0x0f, 0xff}), 0x10);
    FAIL("expected InvalidOpcode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidOpcode);
    CHECK(std::string(e.what()).find("11") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_len(at(0, {0xf3, 0x90}), 0), Error);
  try {
    decode_len(at(0, {0xe8, 0x00}), 0);
    FAIL("expected TruncatedInstruction");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedInstruction);
  }
}

TEST_CASE("linear sweep desynchronizes on data_in_code and recovers") {
  auto c = corpus::gen("data_in_code");
  auto view = linear_sweep(c.image, c.image.base_offset, {});
  auto label = c.label("Label");
  const auto* swallow = view.find(label);
  REQUIRE(swallow);
  CHECK(to_hex(*swallow->bytes) == "e8c5feffff");
  const auto* orr = view.find(label + 5);
  REQUIRE(orr);
  CHECK(to_hex(*orr->bytes) == "450890ff4d0890");
  // Back in step with the ground truth within 16 bytes of the data's end.
  std::uint64_t data_end = label + 4;
  std::uint64_t resync = 0;
  for (const auto& t : c.ground_truth)
    if (t.offset >= data_end && view.find(t.offset) && !resync && t.offset > label + 5) resync = t.offset;
  CHECK(resync > 0);
  CHECK(resync - data_end <= 16);
}

TEST_CASE("linear sweep over pure code equals the ground truth") {
  auto c = corpus::gen("straight_line");
  auto view = linear_sweep(c.image, c.image.base_offset, {});
  auto truth = c.truth_view();
  for (const auto& [off, rec] : truth.insts()) {
    const auto* got = view.find(off);
    REQUIRE(got);
    CHECK(got->bytes == rec.bytes);
  }
}

TEST_CASE("recursive descent on the jump table corpus") {
  auto c = corpus::gen("jump_table");
  std::vector<std::uint64_t> entries{c.entry};
  auto view = recursive_descent(c.image, entries, {});
  auto report = evaluate(c.expected_trace, view);
  CHECK(report.missing_count == 14);
  CHECK(report.mismatch_count == 0);
  for (const auto& e : report.errors) {
    CHECK(e.loc.offset >= c.label("t1"));
    CHECK(e.loc.offset < c.label("loop_end"));
  }

  auto cet = corpus::gen("jump_table_cet");
  std::vector<std::uint64_t> cet_entries{cet.entry};
  HeuristicConfig scan;
  scan.endbr_scan = true;
  CHECK(evaluate(cet.expected_trace, recursive_descent(cet.image, cet_entries, scan)).total() == 0);
  CHECK(evaluate(cet.expected_trace, recursive_descent(cet.image, cet_entries, {})).missing_count > 0);
}

TEST_CASE("recursive descent reaches a fixpoint") {
  for (const auto& name : corpus::case_names()) {
    auto c = corpus::gen(name);
    std::vector<std::uint64_t> entries{c.entry};
    for (bool endbr : {false, true}) {
      HeuristicConfig cfg;
      cfg.endbr_scan = endbr;
      auto view = recursive_descent(c.image, entries, cfg);
      std::vector<std::uint64_t> all;
      for (const auto& [off, rec] : view.insts()) all.push_back(off);
      CHECK_MESSAGE(recursive_descent(c.image, all, cfg) == view, name);
      if (name == "data_in_code") continue;
      for (const auto& [off, rec] : view.insts()) {
        const auto* t = c.truth_at(off);
        REQUIRE_MESSAGE(t, name << " " << to_hex(off));
        CHECK(*rec.bytes == t->bytes);
      }
    }
  }
}

TEST_CASE("epilogue heuristics") {
  auto c = corpus::gen("epilogue_gap");
  std::vector<std::uint64_t> entries{c.entry};
  auto g = c.label("G");
  auto h = c.label("H");
  auto missed_at = [&](const HeuristicConfig& cfg) {
    auto report = evaluate(c.expected_trace, recursive_descent(c.image, entries, cfg));
    std::set<std::uint64_t> heads;
    for (const auto& e : report.errors) heads.insert(e.loc.offset);
    return heads;
  };
  auto plain = missed_at({});
  CHECK(plain.count(g));
  CHECK(plain.count(h));
  HeuristicConfig scan;
  scan.endbr_scan = true;
  CHECK(missed_at(scan).empty());
  scan.epilogue_stop = true;
  auto stopped = missed_at(scan);
  CHECK(stopped.count(g));
  CHECK_FALSE(stopped.count(h));
}

TEST_CASE("noreturn targets cut the fall-through") {
  // call f; nop; ret / f: ud2
  CodeImage img{0x1000, {0xe8, 0x02, 0x00, 0x00, 0x00, 0x90, 0xc3, 0x0f, 0x0b}};
  std::vector<std::uint64_t> entries{0x1000};
  auto full = recursive_descent(img, entries, {});
  CHECK(offsets(full) == std::set<std::uint64_t>{0x1000, 0x1005, 0x1006, 0x1007});
  HeuristicConfig cfg;
  cfg.noreturn_targets = {0x1007};
  CHECK(offsets(recursive_descent(img, entries, cfg)) == std::set<std::uint64_t>{0x1000, 0x1007});
}

TEST_CASE("linear sweep invalid opcode policy") {
  CodeImage img{0, {0x90, 0x06, 0x90, 0xc3}};
  CHECK(offsets(linear_sweep(img, 0, {})) == std::set<std::uint64_t>{0, 2, 3});
  HeuristicConfig strict;
  strict.skip_byte_on_invalid = false;
  CHECK(offsets(linear_sweep(img, 0, strict)) == std::set<std::uint64_t>{0});
}
