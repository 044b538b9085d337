// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "random_cases.hpp"
#include "tracebin/corpus.hpp"
#include "tracebin/elf.hpp"
#include "tracebin/error.hpp"
#include "tracebin/evaluator.hpp"
#include "tracebin/explain.hpp"
#include "tracebin/patch.hpp"
#include "tracebin/refdisasm.hpp"
#include "tracebin/tracer.hpp"

using namespace tracebin;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool skipped = false;
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<Outcome()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool in_time = secs < budget_s;
  const char* tag = o.skipped ? "SKIP" : (o.pass && in_time ? "PASS" : "FAIL");
  if (!o.skipped && !(o.pass && in_time)) ++failures;
  std::printf("%s [%2d] %s: %s (%.2f s, limit %.0f s)\n", tag, id, title.c_str(), o.detail.c_str(), secs, budget_s);
  std::fflush(stdout);
}

std::string hexset(const std::set<std::uint64_t>& s) {
  std::string out = "{";
  for (auto v : s) out += (out.size() > 1 ? "," : "") + to_hex(v);
  return out + "}";
}

Outcome soundness() {
  std::mt19937_64 rng(20240601);
  std::size_t disagreements = 0, errors = 0;
  for (int i = 0; i < 1000; ++i) {
    auto img = testing::random_image(rng, 300);
    auto view = testing::random_view(rng, img);
    auto report = evaluate(img.trace, view);
    std::set<std::pair<NormAddr, ErrorKind>> got;
    for (const auto& e : report.errors) {
      got.insert({e.loc, e.kind});
      const auto* start = view.find(e.loc.offset);
      bool exact = start && start->len == e.traced.len() && (!start->bytes || *start->bytes == e.traced.bytes);
      if (!img.trace.contains(e.loc) || exact) ++disagreements;
    }
    if (got != testing::brute_force_errors(img.trace, view)) ++disagreements;
    errors += report.errors.size();
  }
  return {disagreements == 0, std::to_string(disagreements) + " disagreements over " + std::to_string(errors) +
                                  " errors in 1000 images"};
}

Outcome desync() {
  auto c = corpus::gen("data_in_code");
  auto view = refdisasm::linear_sweep(c.image, c.image.base_offset, {});
  auto report = evaluate(c.expected_trace, view);
  std::set<std::uint64_t> missing, expected;
  for (const auto& e : report.errors)
    if (e.kind == ErrorKind::Missing) missing.insert(e.loc.offset);
  auto live = c.label("live");
  for (std::uint64_t off : {live, live + 3, live + 4, live + 7}) expected.insert(off);
  bool names_ok = c.truth_at(live)->mnemonic.rfind("incl", 0) == 0 && c.truth_at(live + 3)->mnemonic == "nop" &&
                  c.truth_at(live + 4)->mnemonic.rfind("decl", 0) == 0;
  return {missing == expected && names_ok && report.mismatch_count == 0,
          "missing " + hexset(missing) + " (incl, nop, decl, nop)"};
}

Outcome cet() {
  auto c = corpus::gen("jump_table");
  std::vector<std::uint64_t> entries{c.entry};
  auto view = refdisasm::recursive_descent(c.image, entries, {});
  auto report = evaluate(c.expected_trace, view);
  auto ex = explain(c.expected_trace, view, report);
  bool all_indirect = ex.size() == 3;
  for (const auto& e : ex)
    all_indirect &= e.verdict == Verdict::TargetError && e.via_edge && e.via_edge->kind == EdgeKind::Indirect;

  auto cet = corpus::gen("jump_table_cet");
  std::vector<std::uint64_t> cet_entries{cet.entry};
  refdisasm::HeuristicConfig scan;
  scan.endbr_scan = true;
  auto with_endbr = evaluate(cet.expected_trace, refdisasm::recursive_descent(cet.image, cet_entries, scan));
  std::ostringstream d;
  d << "jump_table missing=" << report.missing_count << " in " << ex.size()
    << " indirect target blocks; jump_table_cet+endbr missing=" << with_endbr.missing_count;
  return {report.missing_count == 14 && report.mismatch_count == 0 && all_indirect && with_endbr.total() == 0,
          d.str()};
}

Outcome chain() {
  TraceSet t;
  t.add_module({0, "chain", 0x400000, 0, 0x1000});
  t.add_inst({{0, 0x10}, {0x90}});
  t.add_inst({{0, 0x11}, {0xeb, 0x0d}});
  t.add_inst({{0, 0x20}, {0x90}});
  t.add_inst({{0, 0x21}, {0xeb, 0x0d}});
  t.add_inst({{0, 0x30}, {0xc3}});
  t.add_leader({0, 0x10});
  t.add_edge({EdgeKind::Direct, {0, 0x11}, {0, 0x20}});
  t.add_edge({EdgeKind::Direct, {0, 0x21}, {0, 0x30}});
  DisasmView v;
  v.add({0x10, 1, Bytes{0x90}, std::nullopt});
  v.add({0x11, 2, Bytes{0xeb, 0x0d}, std::nullopt});
  auto ex = explain(t, v, evaluate(t, v));
  bool ok = ex.size() == 2 && ex[0].block_leader.offset == 0x20 && ex[0].verdict == Verdict::TargetError &&
            ex[0].via_edge && ex[0].via_edge->src.offset == 0x11 && ex[1].block_leader.offset == 0x30 &&
            ex[1].verdict == Verdict::SourceError;
  return {ok, "block2 " + std::string(ex.size() > 0 && ex[0].verdict == Verdict::TargetError ? "TARGET" : "?") +
                  "_ERROR, block3 " +
                  std::string(ex.size() > 1 && ex[1].verdict == Verdict::SourceError ? "SOURCE" : "?") + "_ERROR"};
}

Outcome merge_algebra() {
  std::mt19937_64 rng(99);
  std::vector<ModuleInfo> modules = {{0, "prog", 0x400000, 0x1000, 0x1000}, {1, "libc.so.6", 0x7f0000000000, 0x1000, 0x1000}};
  std::size_t cases = 0, failed = 0;
  for (int i = 0; i < 600; ++i) {
    std::vector<InstRecord> pool;
    for (ModuleId m : {0, 1}) {
      std::uint64_t off = 0x1000;
      for (int k = 0; k < 60; ++k) {
        std::size_t len = 1 + rng() % 15;
        pool.push_back({{m, off}, testing::random_bytes(rng, len)});
        off += len;
      }
    }
    auto a = testing::random_trace(rng, pool, modules);
    auto b = testing::random_trace(rng, pool, modules);
    auto c = testing::random_trace(rng, pool, modules);
    auto m = [](std::vector<TraceSet> v) { return merge(v); };
    bool ok = m({a, a}) == a && m({a, b}) == m({b, a}) && m({m({a, b}), c}) == m({a, m({b, c})});

    testing::SyntheticImage img;
    for (const auto& r : pool)
      if (r.loc.module == 0) img.tiling.push_back(r);
    auto view = testing::random_view(rng, img);
    std::set<NormAddr> small, big;
    for (const auto& e : evaluate(a, view).errors) small.insert(e.loc);
    for (const auto& e : evaluate(m({a, b}), view).errors) big.insert(e.loc);
    ok &= std::includes(big.begin(), big.end(), small.begin(), small.end());
    ++cases;
    if (!ok) ++failed;
  }
  return {failed == 0, std::to_string(failed) + " failures over " + std::to_string(cases) + " random cases"};
}

Outcome buckets() {
  const std::vector<std::pair<std::uint64_t, char>> table = {{0, 'Z'},   {1, 'A'},   {80, 'A'},   {81, 'B'},
                                                             {410, 'B'}, {411, 'C'}, {1009, 'C'}, {1010, 'D'}};
  std::string got;
  bool ok = true;
  for (auto [n, letter] : table) {
    char b = bucket_letter(bucketize(n));
    got += std::to_string(n) + "->" + b + " ";
    ok &= b == letter;
  }
  got.pop_back();
  return {ok, got};
}

Outcome round_trips() {
  std::mt19937_64 rng(7);
  std::size_t diffs = 0;
  for (int i = 0; i < 200; ++i) {
    auto img = testing::random_image(rng, 100);
    auto view = testing::random_view(rng, img);
    view.declared_base = (rng() % 4) * 0x100000;
    std::ostringstream out;
    write_interchange(out, view);
    std::istringstream in(out.str());
    if (!(parse_interchange(in) == view)) ++diffs;
  }
  std::istringstream listing(
      "0000000000001189 <f>:\n"
      "    1189:\tf3 0f 1e fa          \tendbr64 \n"
      "    118d:\t48 b8 88 77 66 55 44 \tmovabs $0x1122334455667788,%rax\n"
      "    1194:\t33 22 11 \n"
      "    1197:\tc3                   \tret    \n");
  auto golden = parse_objdump(listing);
  std::istringstream packed("1198: 450890ff4d0890  or %dl,0x908(%r8,%rcx,4)\n38008c: c3  retq\n");
  auto spaced = parse_objdump(packed);
  bool golden_ok = golden.size() == 3 && golden.find(0x118d)->len == 10 &&
                   to_hex(*golden.find(0x118d)->bytes) == "48b88877665544332211" && golden.find(0x1197) &&
                   spaced.find(0x1198)->len == 7 && spaced.find(0x38008c)->len == 1;
  if (!golden_ok) ++diffs;
  return {diffs == 0, std::to_string(diffs) + " diffs over 200 interchange views and objdump goldens"};
}

Outcome presets() {
  std::istringstream g("BASE 100000\n101193 5 e8c5feffff\n");
  std::istringstream a("BASE 0\n401030 6 ff251e2f0000\n");
  auto ghidra = rebase(parse_interchange(g));
  auto angr = rebase(parse_interchange(a), preset_base(BasePreset::Angr));
  bool ok = ghidra.find(0x1193) && ghidra.size() == 1 && angr.find(0x1030) && angr.size() == 1 &&
            preset_base(BasePreset::Ghidra) == 0x100000 && preset_base(BasePreset::Angr) == 0x400000;
  return {ok, "ghidra 0x101193->0x1193, angr 0x401030->0x1030"};
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("tracebin-acceptance-" + std::to_string(::getpid()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

tracer::RunSpec quiet_run(const fs::path& p) {
  tracer::RunSpec spec;
  spec.program_path = p.string();
  spec.stdout_file = "/dev/null";
  spec.timeout_s = 10;
  return spec;
}

Outcome tracer_e2e() {
  if (!tracer::platform_supported()) return {false, "needs Linux x86-64", true};
  Scratch s;
  auto c = corpus::gen("jump_table");
  std::string detail;
  bool ok = true;
  for (std::uint64_t base : {std::uint64_t{0x400000}, std::uint64_t{0x7f0000000000}}) {
    auto path = s.dir / ("jump_table-" + to_hex(base) + ".elf");
    elf::write_file(path, corpus::emit_elf(c, {base, false}), true);
    auto r = tracer::collect(quiet_run(path));
    auto expected = corpus::expected_trace_for(c, c.runs.front(), base);
    bool same = r.trace.insts() == expected.insts() && r.trace.edges() == expected.edges() &&
                r.trace.leaders() == expected.leaders() && r.trace.find_module(0)->runtime_base == base;
    ok &= same && !r.partial;
    detail += (detail.empty() ? "" : ", ") + std::string("base ") + to_hex(base) + (same ? " equal" : " differs") +
              " (" + std::to_string(r.trace.insts().size()) + " insts, " + std::to_string(r.trace.edges().size()) +
              " edges)";
  }
  return {ok, detail};
}

Outcome trojan() {
  if (!tracer::platform_supported()) return {false, "needs Linux x86-64", true};
  Scratch s;
  std::string verdicts;
  bool ok = true;
  for (bool endbr : {false, true}) {
    auto c = corpus::gen(endbr ? "jump_table_cet" : "jump_table");
    std::vector<std::uint64_t> entries{c.entry};
    auto view = refdisasm::recursive_descent(c.image, entries, {});
    auto report = evaluate(c.expected_trace, view);
    auto plans = patch::plan(report, explain(c.expected_trace, view, report), c.image);
    const auto& p = plans.front();
    auto path = s.dir / (c.name + ".patched.elf");
    elf::write_file(path, patch::apply_elf(corpus::emit_elf(c), p), true);
    refdisasm::HeuristicConfig cfg;
    cfg.endbr_scan = endbr;
    auto patched_view = refdisasm::recursive_descent(patch::apply(c.image, p), entries, cfg);
    auto v = patch::verify(path, patched_view, p, quiet_run(path));
    auto want = endbr ? patch::Verdict::Visible : patch::Verdict::HiddenAndReached;
    ok &= v == want;
    verdicts += (verdicts.empty() ? "" : ", ") + c.name + (endbr ? "+endbr" : "") + " -> " + patch::to_string(v);
  }
  return {ok, verdicts};
}

}  // namespace

int main() {
  criterion(1, "soundness against brute-force oracle", 60, soundness);
  criterion(2, "linear sweep desynchronization on data_in_code", 1, desync);
  criterion(3, "endbr heuristic on jump_table (14 -> 0)", 1, cet);
  criterion(4, "three-block chain verdicts", 1, chain);
  criterion(5, "merge algebra and evaluator monotonicity", 60, merge_algebra);
  criterion(6, "bucket boundaries", 1, buckets);
  criterion(7, "parser round trips", 30, round_trips);
  criterion(8, "rebase presets", 1, presets);
  criterion(9, "tracer end to end under two load bases", 10, tracer_e2e);
  criterion(10, "trojan marker plan/apply/verify", 10, trojan);
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
