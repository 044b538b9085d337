#include "doctest.h"

#include <sstream>

#include "random_cases.hpp"
#include "tracebin/corpus.hpp"
#include "tracebin/error.hpp"
#include "tracebin/explain.hpp"
#include "tracebin/refdisasm.hpp"

using namespace tracebin;

namespace {

void add(TraceSet& t, std::uint64_t off, Bytes b) { t.add_inst({{0, off}, std::move(b)}); }

void view_add(DisasmView& v, const TraceSet& t, std::uint64_t off) {
  const auto* inst = t.find_inst({0, off});
  v.add({off, inst->len(), inst->bytes, std::nullopt});
}

std::vector<Explanation> run(const TraceSet& t, const DisasmView& v) { return explain(t, v, evaluate(t, v)); }

}  // namespace

TEST_CASE("missed chain: first block is a target error, the next a source error") {
  TraceSet t;
  t.add_module({0, "fig", 0x400000, 0, 0x1000});
  add(t, 0x10, {0x90});
  add(t, 0x11, {0xeb, 0x0d});  // -> 0x20
  add(t, 0x20, {0x90});
  add(t, 0x21, {0xeb, 0x0d});  // -> 0x30
  add(t, 0x30, {0x90});
  add(t, 0x31, {0xc3});
  t.add_leader({0, 0x10});
  t.add_edge({EdgeKind::Direct, {0, 0x11}, {0, 0x20}});
  t.add_edge({EdgeKind::Direct, {0, 0x21}, {0, 0x30}});
  t.validate();
  DisasmView v;
  view_add(v, t, 0x10);
  view_add(v, t, 0x11);

  auto ex = run(t, v);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].block_leader == NormAddr{0, 0x20});
  CHECK(ex[0].verdict == Verdict::TargetError);
  REQUIRE(ex[0].via_edge);
  CHECK(ex[0].via_edge->src == NormAddr{0, 0x11});
  CHECK(ex[0].missed_inst_count == 2);
  CHECK(ex[1].block_leader == NormAddr{0, 0x30});
  CHECK(ex[1].verdict == Verdict::SourceError);
  CHECK_FALSE(ex[1].via_edge);
  CHECK(ex[1].missed_inst_count == 2);

  auto cats = categorize(ex);
  CHECK(cats[EdgeKind::Direct] == 2);
  CHECK(cats.unattributed == 2);

  std::ostringstream out;
  write_explain_csv(out, ex);
  CHECK(out.str() ==
        "leader_hex,verdict,kind,src_hex,dst_hex,missed_count\n"
        "20,TARGET_ERROR,direct,11,20,2\n"
        "30,SOURCE_ERROR,,,,2\n");
  std::istringstream in(out.str());
  auto back = read_explain_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].via_edge == ex[0].via_edge);
  CHECK(back[1].verdict == Verdict::SourceError);
  CHECK(back[1].missed_inst_count == 2);
}

TEST_CASE("ties go to the smallest source") {
  TraceSet t;
  t.add_module({0, "tie", 0x400000, 0, 0x1000});
  add(t, 0x10, {0x75, 0x0e});  // jne 0x20
  add(t, 0x12, {0xeb, 0x0c});  // jmp 0x20
  add(t, 0x20, {0xc3});
  t.add_leader({0, 0x10});
  t.add_edge({EdgeKind::Direct, {0, 0x12}, {0, 0x20}});
  t.add_edge({EdgeKind::Cbr, {0, 0x10}, {0, 0x20}});
  DisasmView v;
  view_add(v, t, 0x10);
  view_add(v, t, 0x12);
  auto ex = run(t, v);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].via_edge->kind == EdgeKind::Cbr);
  CHECK(ex[0].qualifying_edges.size() == 2);
  CHECK(ex[0].via_edge->dst == ex[0].block_leader);
}

TEST_CASE("no missed instructions") {
  auto c = corpus::gen("straight_line");
  auto ex = run(c.expected_trace, c.truth_view());
  CHECK(ex.empty());
  CHECK(categorize(ex) == CategoryCounts{});
  CHECK(categorize({}).total() == 0);
}

TEST_CASE("jump table misses are three indirect target errors") {
  auto c = corpus::gen("jump_table");
  std::vector<std::uint64_t> entries{c.entry};
  auto view = refdisasm::recursive_descent(c.image, entries, {});
  auto ex = run(c.expected_trace, view);
  REQUIRE(ex.size() == 3);
  std::uint64_t total = 0;
  for (const auto& e : ex) {
    CHECK(e.verdict == Verdict::TargetError);
    CHECK(e.via_edge->kind == EdgeKind::Indirect);
    CHECK(e.via_edge->src == NormAddr{0, c.label("dispatch")});
    total += e.missed_inst_count;
  }
  CHECK(total == 14);
  auto cats = categorize(ex);
  CHECK(cats[EdgeKind::Indirect] == 14);
  CHECK(cats.total() == 14);
}

TEST_CASE("cbr and return continuation misses") {
  auto c = corpus::gen("cbr_return_mix");
  auto view = c.truth_view();
  auto drop_block = [&](std::uint64_t from, std::size_t count) {
    auto it = c.expected_trace.insts().find({0, from});
    for (std::size_t i = 0; i < count; ++i, ++it) view.erase(it->first.offset);
  };
  drop_block(c.label("L1"), 2);
  drop_block(c.label("C"), 3);
  auto ex = run(c.expected_trace, view);
  auto cats = categorize(ex);
  CHECK(cats[EdgeKind::Cbr] == 2);
  CHECK(cats[EdgeKind::Return] == 3);
  CHECK(cats[EdgeKind::Direct] == 0);
  CHECK(cats[EdgeKind::Indirect] == 0);
  CHECK(cats.unattributed == 0);
}

TEST_CASE("category sums match the missing count") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    auto img = testing::random_image(rng, 150);
    auto view = testing::random_view(rng, img);
    auto report = evaluate(img.trace, view);
    auto ex = explain(img.trace, view, report);
    CHECK(categorize(ex).total() == report.missing_count);
    CHECK(explain(img.trace, view, report) == ex);
    for (const auto& e : ex) {
      CHECK(e.missed_inst_count > 0);
      if (e.verdict == Verdict::TargetError) {
        REQUIRE(e.via_edge);
        CHECK(e.via_edge->dst == e.block_leader);
        const auto* src = view.find(e.via_edge->src.offset);
        REQUIRE(src);
        CHECK(src->len == img.trace.find_inst(e.via_edge->src)->len());
      } else {
        for (const auto& edge : img.trace.edges()) {
          if (edge.dst != e.block_leader) continue;
          bool src_missed = false;
          for (const auto& err : report.errors) src_missed |= err.loc == edge.src;
          CHECK(src_missed);
        }
      }
    }
  }
}

TEST_CASE("report and trace must agree") {
  TraceSet t;
  t.add_module({0, "x", 0x400000, 0, 0x1000});
  add(t, 0x10, {0x90});
  DisasmView v;
  auto report = evaluate(t, v);
  TraceSet other;
  other.add_module({0, "x", 0x400000, 0, 0x1000});
  add(other, 0x40, {0x90});
  try {
    explain(other, v, report);
    FAIL("expected InconsistentInputs");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InconsistentInputs);
  }
}
