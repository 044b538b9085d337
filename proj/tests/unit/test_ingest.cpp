#include "doctest.h"

#include <sstream>

#include "random_cases.hpp"
#include "tracebin/disasm_view.hpp"
#include "tracebin/error.hpp"

using namespace tracebin;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Usage;
}

DisasmView objdump(const std::string& text) {
  std::istringstream in(text);
  return parse_objdump(in);
}

DisasmView idf(const std::string& text) {
  std::istringstream in(text);
  return parse_interchange(in);
}

}  // namespace

TEST_CASE("objdump listing with space-separated packed bytes") {
  auto v = objdump("1198: 450890ff4d0890  or %dl,0x908(%r8,%rcx,4)\n");
  const auto* r = v.find(0x1198);
  REQUIRE(r);
  CHECK(r->len == 7);
  CHECK(*r->bytes == Bytes{0x45, 0x08, 0x90, 0xff, 0x4d, 0x08, 0x90});
  CHECK(*r->mnemonic == "or %dl,0x908(%r8,%rcx,4)");

  auto ret = objdump("  38008c: c3  retq\n");
  CHECK(ret.find(0x38008c)->len == 1);
}

TEST_CASE("objdump golden listing with headers, labels and continuation lines") {
  const std::string listing =
      "\n"
      "prog:     file format elf64-x86-64\n"
      "\n"
      "\n"
      "Disassembly of section .text:\n"
      "\n"
      "0000000000001189 <f>:\n"
      "    1189:\tf3 0f 1e fa          \tendbr64 \n"
      "    118d:\t55                   \tpush   %rbp\n"
      "    118e:\t48 89 e5             \tmov    %rsp,%rbp\n"
      "    1191:\teb 04                \tjmp    1197 <f+0xe>\n"
      "    1193:\te8 c5 fe ff ff       \tcall   105d <_init-0xfa3>\n"
      "    1198:\t45 08 90 ff 4d 08 90 \tor     %r10b,-0x6ff7b201(%r8)\n"
      "    119f:\t5d                   \tpop    %rbp\n"
      "    11a0:\t48 b8 88 77 66 55 44 \tmovabs $0x1122334455667788,%rax\n"
      "    11a7:\t33 22 11 \n"
      "    11aa:\tc3                   \tret    \n"
      "\t...\n";
  auto v = objdump(listing);
  CHECK(v.size() == 9);
  CHECK(v.source_name == "objdump");
  const auto* movabs = v.find(0x11a0);
  REQUIRE(movabs);
  CHECK(movabs->len == 10);
  CHECK(to_hex(*movabs->bytes) == "48b88877665544332211");
  CHECK_FALSE(v.find(0x11a7));
  CHECK(v.find(0x11aa)->len == 1);
  CHECK(v.find(0x1193)->mnemonic == std::optional<std::string>("call   105d <_init-0xfa3>"));
  CHECK(v.overlapping_records().empty());
}

TEST_CASE("objdump errors") {
  CHECK(code_of([] { objdump(""); }) == ErrorCode::EmptyListing);
  CHECK(code_of([] { objdump("Disassembly of section .text:\n"); }) == ErrorCode::EmptyListing);
  try {
    objdump("  1000:\t90\tnop\nthis is not a listing\n");
    FAIL("expected MalformedLine");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedLine);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(code_of([] { objdump("  1000:\tzz\tnop\n"); }) == ErrorCode::MalformedLine);
}

TEST_CASE("interchange records") {
  auto v = idf("BASE 400000\n1030 6 ff251e2f0000\n");
  CHECK(v.declared_base == 0x400000);
  CHECK(v.find(0x1030)->len == 6);
  auto nobytes = idf("BASE 0\n1030 6\n");
  CHECK_FALSE(nobytes.find(0x1030)->bytes.has_value());
  auto named = idf("BASE 0\n# tool ghidra 11\n1030 1 c3 # ret\n");
  CHECK(named.source_name == "ghidra 11");
  CHECK(named.find(0x1030)->mnemonic == std::optional<std::string>("ret"));

  CHECK(code_of([] { idf("1030 6\n"); }) == ErrorCode::MissingBase);
  CHECK(code_of([] { idf(""); }) == ErrorCode::MissingBase);
  CHECK(code_of([] { idf("BASE 0\n1030 6\n1030 6\n"); }) == ErrorCode::DuplicateOffset);
  CHECK(code_of([] { idf("BASE 0\n1030 2 c3\n"); }) == ErrorCode::MalformedRecord);
  CHECK(code_of([] { idf("BASE 0\n1030 0\n"); }) == ErrorCode::MalformedRecord);
  CHECK(code_of([] { idf("BASE 0\nxyz\n"); }) == ErrorCode::MalformedRecord);
}

TEST_CASE("interchange round trip on random views") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto img = testing::random_image(rng, 60);
    auto view = testing::random_view(rng, img);
    view.declared_base = (rng() % 3) * 0x100000;
    view.source_name = i % 2 ? "tool-" + std::to_string(i) : "";
    std::ostringstream out;
    write_interchange(out, view);
    std::istringstream in(out.str());
    CHECK(parse_interchange(in) == view);
  }
}

TEST_CASE("rebase presets") {
  auto ghidra = idf("BASE 100000\n101193 5 e8c5feffff\n");
  auto r = rebase(ghidra);
  CHECK(r.find(0x1193));
  CHECK(r.declared_base == 0);
  CHECK(preset_base(*parse_preset("ghidra")) == 0x100000);
  CHECK(preset_base(*parse_preset("angr")) == 0x400000);
  CHECK(preset_base(*parse_preset("none")) == 0);
  CHECK_FALSE(parse_preset("ida"));

  auto angr = rebase(idf("BASE 0\n401030 6 ff251e2f0000\n"), preset_base(BasePreset::Angr));
  CHECK(angr.find(0x1030));
  auto ident = idf("BASE 0\n1030 1 c3\n");
  CHECK(rebase(ident).insts() == ident.insts());
  CHECK(code_of([&] { rebase(idf("BASE 100000\n1030 1 c3\n")); }) == ErrorCode::UnderflowingOffset);
}

TEST_CASE("rebase preserves everything but offsets") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    auto img = testing::random_image(rng, 50);
    auto view = testing::random_view(rng, img);
    DisasmView shifted;
    for (const auto& [off, rec] : view.insts()) {
      auto moved = rec;
      moved.offset += 0x100000;
      shifted.add(moved);
    }
    shifted.declared_base = 0x100000;
    auto back = rebase(shifted);
    REQUIRE(back.size() == view.size());
    CHECK(back.insts() == view.insts());
  }
}

TEST_CASE("overlapping records are kept and reported") {
  auto v = idf("BASE 0\n1000 5\n1002 2\n1010 1\n");
  CHECK(v.size() == 3);
  auto pairs = v.overlapping_records();
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == std::pair<std::uint64_t, std::uint64_t>{0x1000, 0x1002});
  CHECK(v.covering(0x1003)->offset == 0x1002);
  CHECK(v.covering(0x1004)->offset == 0x1000);
  CHECK(v.covering(0x1000) == nullptr);
}
