#include "tracebin/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <functional>

#include "tracebin/error.hpp"

namespace tracebin::corpus {

using refdisasm::InstClass;

// ---------------------------------------------------------------- Assembler

void Assembler::label(const std::string& name) {
  if (!labels_.emplace(name, here()).second) throw Error(ErrorCode::Usage, "duplicate label " + name);
}

void Assembler::op(Bytes bytes, std::string mnemonic, InstClass cls) {
  TruthInst inst;
  inst.offset = here();
  inst.bytes = bytes;
  inst.cls = cls;
  inst.mnemonic = std::move(mnemonic);
  bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
  insts_.push_back(std::move(inst));
}

void Assembler::rel8(Bytes opcode, const std::string& target, std::string mnemonic, InstClass cls) {
  std::size_t at = bytes_.size() + opcode.size();
  opcode.push_back(0);
  std::uint64_t end = here() + opcode.size();
  op(std::move(opcode), std::move(mnemonic), cls);
  fixups_.push_back({at, 1, target, end, std::nullopt, insts_.size() - 1});
}

void Assembler::rel32(Bytes opcode, const std::string& target, std::string mnemonic, InstClass cls) {
  std::size_t at = bytes_.size() + opcode.size();
  opcode.insert(opcode.end(), 4, 0);
  std::uint64_t end = here() + opcode.size();
  op(std::move(opcode), std::move(mnemonic), cls);
  fixups_.push_back({at, 4, target, end, std::nullopt, insts_.size() - 1});
}

void Assembler::rip32(Bytes prefix, const std::string& target, std::string mnemonic, Bytes suffix, InstClass cls) {
  std::size_t at = bytes_.size() + prefix.size();
  prefix.insert(prefix.end(), 4, 0);
  prefix.insert(prefix.end(), suffix.begin(), suffix.end());
  std::uint64_t end = here() + prefix.size();
  op(std::move(prefix), std::move(mnemonic), cls);
  fixups_.push_back({at, 4, target, end, std::nullopt, std::nullopt});
}

void Assembler::exit_syscall() {
  op({0x31, 0xff}, "xor %edi,%edi");
  op({0xb8, 0x3c, 0x00, 0x00, 0x00}, "mov $0x3c,%eax");
  op({0x0f, 0x05}, "syscall");
  insts_.back().exits = true;
}

void Assembler::data(Bytes bytes) {
  if (bytes.empty()) return;
  if (!data_.empty() && data_.back().first + data_.back().second == here())
    data_.back().second += bytes.size();
  else
    data_.emplace_back(here(), bytes.size());
  bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
}

void Assembler::data_diff32(const std::string& a, const std::string& b) {
  fixups_.push_back({bytes_.size(), 4, a, 0, b, std::nullopt});
  data({0, 0, 0, 0});
}

void Assembler::pad_to(std::uint64_t alignment, std::uint8_t fill) {
  Bytes pad;
  while ((here() + pad.size()) % alignment != 0) pad.push_back(fill);
  data(std::move(pad));
}

Assembler::Output Assembler::finish() {
  auto lookup = [&](const std::string& name) {
    auto it = labels_.find(name);
    if (it == labels_.end()) throw Error(ErrorCode::Usage, "undefined label " + name);
    return it->second;
  };
  for (const auto& f : fixups_) {
    std::uint64_t target = lookup(f.target);
    std::int64_t value = f.minus ? static_cast<std::int64_t>(target - lookup(*f.minus))
                                 : static_cast<std::int64_t>(target - f.anchor);
    if (f.width == 1 && (value < -128 || value > 127)) throw Error(ErrorCode::Usage, "rel8 out of range to " + f.target);
    for (std::size_t i = 0; i < f.width; ++i)
      bytes_[f.at + i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i));
    if (f.inst) {
      auto& inst = insts_[*f.inst];
      inst.rel_target = target;
    }
  }
  for (auto& inst : insts_)
    std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(inst.offset - base_), inst.bytes.size(),
                inst.bytes.begin());
  return {CodeImage{base_, bytes_}, insts_, data_, labels_};
}

// ---------------------------------------------------------------- fixtures

namespace {

const Bytes kEndbr = {0xf3, 0x0f, 0x1e, 0xfa};
const Bytes kUd2 = {0x0f, 0x0b};

Bytes imm32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 24)};
}

Bytes cat(Bytes a, const Bytes& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Bytes text(std::string_view s) { return Bytes(s.begin(), s.end()); }

struct Fixture {
  Assembler::Output out;
  std::string entry;
  std::vector<CorpusRun> runs;
};

// Computed-goto dispatch over order[] = {1, 0, 2}: the default run executes
// arms t2, t1, t3; one extra argument runs t1 only, two run t3 only.
Fixture jump_table(bool cet) {
  Assembler a;
  auto endbr = [&] {
    if (cet) a.op(kEndbr, "endbr64");
  };
  a.label("entry");
  endbr();
  a.op({0x48, 0x8b, 0x04, 0x24}, "mov (%rsp),%rax");
  a.op(cat({0xbf}, imm32(1)), "mov $0x1,%edi");
  a.op({0x83, 0xf8, 0x01}, "cmp $0x1,%eax");
  a.rel8({0x7f}, "single", "jg single", InstClass::Cbr);
  a.op(cat({0xbb}, imm32(0xffffffff)), "mov $0xffffffff,%ebx");
  a.op(cat({0x41, 0xbc}, imm32(2)), "mov $0x2,%r12d");
  a.rel8({0xeb}, "loop_end", "jmp loop_end", InstClass::DirectJmp);
  a.label("single");
  a.op({0x8d, 0x58, 0xfe}, "lea -0x2(%rax),%ebx");
  a.op({0x44, 0x8d, 0x60, 0xff}, "lea -0x1(%rax),%r12d");
  a.rel8({0xeb}, "loop_end", "jmp loop_end", InstClass::DirectJmp);
  for (int arm = 1; arm <= 3; ++arm) {
    std::string n = std::to_string(arm);
    a.label("t" + n);
    endbr();
    a.op(cat({0xba}, imm32(6)), "mov $0x6,%edx");
    a.rip32({0x48, 0x8d, 0x35}, "msg" + n, "lea msg" + n + "(%rip),%rsi");
    a.op(cat({0xb8}, imm32(1)), "mov $0x1,%eax");
    a.op({0x0f, 0x05}, "syscall");
    if (arm != 3) a.rel8({0xeb}, "loop_end", "jmp loop_end", InstClass::DirectJmp);
  }
  a.label("loop_end");
  a.op({0xff, 0xc3}, "inc %ebx");
  a.op({0x44, 0x39, 0xe3}, "cmp %r12d,%ebx");
  a.rel8({0x7f}, "exit", "jg exit", InstClass::Cbr);
  a.label("loop");
  a.rip32({0x48, 0x8d, 0x0d}, "order", "lea order(%rip),%rcx");
  a.op({0x48, 0x63, 0x04, 0x99}, "movslq (%rcx,%rbx,4),%rax");
  a.rip32({0x48, 0x8d, 0x15}, "table", "lea table(%rip),%rdx");
  a.op({0x48, 0x63, 0x04, 0x82}, "movslq (%rdx,%rax,4),%rax");
  a.op({0x48, 0x01, 0xd0}, "add %rdx,%rax");
  a.label("dispatch");
  a.op({0xff, 0xe0}, "jmp *%rax", InstClass::Indirect);
  a.label("exit");
  a.exit_syscall();
  a.op(kUd2, "ud2", InstClass::Halting);
  a.pad_to(4, 0x00);
  a.label("order");
  a.data(cat(cat(imm32(1), imm32(0)), imm32(2)));
  a.label("table");
  a.data_diff32("t1", "table");
  a.data_diff32("t2", "table");
  a.data_diff32("t3", "table");
  for (int arm = 1; arm <= 3; ++arm) {
    a.label("msg" + std::to_string(arm));
    a.data(text("loc " + std::to_string(arm) + "\n"));
  }

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{},
                    {"entry", "+", "loop_end", "loop", "t2", "loop_end", "loop", "t1", "loop_end", "loop", "t3",
                     "exit"}});
  f.runs.push_back({{"x"}, {"entry", "single", "loop_end", "loop", "t1", "loop_end", "exit"}});
  f.runs.push_back({{"x", "y"}, {"entry", "single", "loop_end", "loop", "t3", "exit"}});
  return f;
}

// f jumps over four data bytes into live code; a linear sweep decodes the
// data as a call that swallows the first byte of the incl.
Fixture data_in_code() {
  Assembler a;
  a.label("entry");
  a.rel32({0xe8}, "f", "call f", InstClass::DirectCall);
  a.label("after_call");
  a.exit_syscall();
  a.op(kUd2, "ud2", InstClass::Halting);
  a.label("f");
  a.op({0x55}, "push %rbp");
  a.op({0x48, 0x89, 0xe5}, "mov %rsp,%rbp");
  a.rel8({0xeb}, "live", "jmp Label+4", InstClass::DirectJmp);
  a.label("Label");
  a.data({0xe8, 0xc5, 0xfe, 0xff});
  a.label("live");
  a.op({0xff, 0x45, 0x08}, "incl 0x8(%rbp)");
  a.op({0x90}, "nop");
  a.op({0xff, 0x4d, 0x08}, "decl 0x8(%rbp)");
  a.op({0x90}, "nop");
  a.op({0x5d}, "pop %rbp");
  a.op({0xc3}, "ret", InstClass::Return);

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{}, {"entry", "f", "live", "after_call"}});
  return f;
}

// A lazily bound PLT stub: the first call goes stub -> push/jmp -> resolver,
// which patches the GOT slot; the second call goes straight to func.
Fixture plt_pattern() {
  Assembler a;
  a.label("entry");
  a.rip32({0x48, 0x8d, 0x05}, "stub_push", "lea stub_push(%rip),%rax");
  a.rip32({0x48, 0x89, 0x05}, "got", "mov %rax,got(%rip)");
  a.rel32({0xe8}, "stub", "call stub", InstClass::DirectCall);
  a.label("ret1");
  a.rel32({0xe8}, "stub", "call stub", InstClass::DirectCall);
  a.label("ret2");
  a.exit_syscall();
  a.op(kUd2, "ud2", InstClass::Halting);
  a.pad_to(16, 0xcc);
  a.label("plt0");
  a.op({0x59}, "pop %rcx");
  a.rip32({0x48, 0x8d, 0x05}, "func", "lea func(%rip),%rax");
  a.rip32({0x48, 0x89, 0x05}, "got", "mov %rax,got(%rip)");
  a.op({0xff, 0xe0}, "jmp *%rax", InstClass::Indirect);
  a.pad_to(16, 0xcc);
  a.label("stub");
  a.rip32({0xff, 0x25}, "got", "jmp *got(%rip)", {}, InstClass::Indirect);
  a.label("stub_push");
  a.op(cat({0x68}, imm32(0)), "push $0x0");
  a.rel32({0xe9}, "plt0", "jmp plt0", InstClass::DirectJmp);
  a.pad_to(16, 0xcc);
  a.label("func");
  a.op(cat({0xb8}, imm32(7)), "mov $0x7,%eax");
  a.op({0xc3}, "ret", InstClass::Return);
  a.pad_to(8, 0x00);
  a.label("got");
  a.data(Bytes(8, 0));

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{}, {"entry", "stub", "stub_push", "plt0", "func", "ret1", "stub", "func", "ret2"}});
  return f;
}

// G sits right after f's `pop; pop; ret` and is reached only through
// `call *%rax`; H (endbr-marked) is reached only from G.
Fixture epilogue_gap() {
  Assembler a;
  a.label("entry");
  a.rel32({0xe8}, "f", "call f", InstClass::DirectCall);
  a.label("ret1");
  a.rip32({0x48, 0x8d, 0x05}, "G", "lea G(%rip),%rax");
  a.op({0xff, 0xd0}, "call *%rax", InstClass::Indirect);
  a.label("ret2");
  a.exit_syscall();
  a.op(kUd2, "ud2", InstClass::Halting);
  a.pad_to(16, 0xcc);
  a.label("f");
  a.op({0x53}, "push %rbx");
  a.op({0x41, 0x54}, "push %r12");
  a.op(cat({0xbb}, imm32(1)), "mov $0x1,%ebx");
  a.op({0x01, 0xdb}, "add %ebx,%ebx");
  a.op({0x41, 0x5c}, "pop %r12");
  a.op({0x5b}, "pop %rbx");
  a.op({0xc3}, "ret", InstClass::Return);
  a.label("G");
  a.op(kEndbr, "endbr64");
  a.op({0x53}, "push %rbx");
  a.op(cat({0xbb}, imm32(3)), "mov $0x3,%ebx");
  a.rel32({0xe8}, "H", "call H", InstClass::DirectCall);
  a.label("ret3");
  a.op({0x5b}, "pop %rbx");
  a.op({0xc3}, "ret", InstClass::Return);
  a.pad_to(16, 0xcc);
  a.label("H");
  a.op(kEndbr, "endbr64");
  a.op(cat({0xb8}, imm32(2)), "mov $0x2,%eax");
  a.op({0xc3}, "ret", InstClass::Return);

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{}, {"entry", "f", "ret1", "G", "H", "ret3", "ret2"}});
  return f;
}

// Jumps whose target is the next instruction.
Fixture redundant_jump() {
  Assembler a;
  a.label("entry");
  a.op({0x55}, "push %rbp");
  a.op({0x48, 0x89, 0xe5}, "mov %rsp,%rbp");
  a.op(cat({0xb8}, imm32(0x30)), "mov $0x30,%eax");
  a.rel32({0xe8}, "g", "call g", InstClass::DirectCall);
  a.label("ret1");
  a.rel32({0xe9}, "next1", "jmp next1", InstClass::DirectJmp);
  a.label("next1");
  a.op({0x89, 0xc7}, "mov %eax,%edi");
  a.rel32({0xe9}, "next2", "jmp next2", InstClass::DirectJmp);
  a.label("next2");
  a.op({0x5d}, "pop %rbp");
  a.exit_syscall();
  a.label("g");
  a.op({0x83, 0xc0, 0x01}, "add $0x1,%eax");
  a.op({0xc3}, "ret", InstClass::Return);

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{}, {"entry", "g", "ret1", "next1", "next2"}});
  return f;
}

// A taken je into L1 and a call whose continuation C is reached by ret.
Fixture cbr_return_mix() {
  Assembler a;
  a.label("entry");
  a.op({0x31, 0xc0}, "xor %eax,%eax");
  a.op({0x85, 0xc0}, "test %eax,%eax");
  a.rel8({0x74}, "L1", "je L1", InstClass::Cbr);
  a.op(kUd2, "ud2", InstClass::Halting);
  a.label("L1");
  a.op(cat({0xb9}, imm32(1)), "mov $0x1,%ecx");
  a.rel32({0xe8}, "f", "call f", InstClass::DirectCall);
  a.label("C");
  a.exit_syscall();
  a.op(kUd2, "ud2", InstClass::Halting);
  a.label("f");
  a.op(cat({0xba}, imm32(3)), "mov $0x3,%edx");
  a.op({0xc3}, "ret", InstClass::Return);

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{}, {"entry", "L1", "f", "C"}});
  return f;
}

Fixture straight_line() {
  Assembler a;
  a.label("entry");
  a.op({0x55}, "push %rbp");
  a.op({0x48, 0x89, 0xe5}, "mov %rsp,%rbp");
  a.op({0x31, 0xc0}, "xor %eax,%eax");
  a.op({0x83, 0xc0, 0x01}, "add $0x1,%eax");
  a.op({0x83, 0xe8, 0x01}, "sub $0x1,%eax");
  a.op({0x5d}, "pop %rbp");
  a.exit_syscall();

  Fixture f{a.finish(), "entry", {}};
  f.runs.push_back({{}, {"entry"}});
  return f;
}

const std::vector<std::pair<std::string, std::function<Fixture()>>>& registry() {
  static const std::vector<std::pair<std::string, std::function<Fixture()>>> r = {
      {"jump_table", [] { return jump_table(false); }},
      {"jump_table_cet", [] { return jump_table(true); }},
      {"data_in_code", data_in_code},
      {"plt_pattern", plt_pattern},
      {"epilogue_gap", epilogue_gap},
      {"redundant_jump", redundant_jump},
      {"cbr_return_mix", cbr_return_mix},
      {"straight_line", straight_line},
  };
  return r;
}

EdgeKind edge_kind_of(InstClass cls) {
  switch (cls) {
    case InstClass::Cbr: return EdgeKind::Cbr;
    case InstClass::DirectJmp:
    case InstClass::DirectCall: return EdgeKind::Direct;
    case InstClass::Indirect: return EdgeKind::Indirect;
    case InstClass::Return: return EdgeKind::Return;
    default: break;
  }
  throw Error(ErrorCode::InvalidTraceSet, "not a transfer class");
}

bool is_call(const TruthInst& inst) {
  if (inst.cls == InstClass::DirectCall) return true;
  return inst.cls == InstClass::Indirect && inst.mnemonic.starts_with("call");
}

}  // namespace

// ---------------------------------------------------------------- CorpusCase

const TruthInst* CorpusCase::truth_at(std::uint64_t offset) const {
  auto it = std::lower_bound(ground_truth.begin(), ground_truth.end(), offset,
                             [](const TruthInst& t, std::uint64_t off) { return t.offset < off; });
  return it != ground_truth.end() && it->offset == offset ? &*it : nullptr;
}

std::uint64_t CorpusCase::label(const std::string& name) const {
  auto it = labels.find(name);
  if (it == labels.end()) throw Error(ErrorCode::Usage, "case " + this->name + " has no label " + name);
  return it->second;
}

DisasmView CorpusCase::truth_view() const {
  DisasmView view;
  view.source_name = "ground-truth";
  for (const auto& t : ground_truth) view.add({t.offset, t.bytes.size(), t.bytes, t.mnemonic});
  return view;
}

std::vector<std::string> case_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

ModuleInfo module_info(const CorpusCase& c, std::uint64_t base) {
  std::uint64_t size = (c.image.bytes.size() + kPageSize - 1) / kPageSize * kPageSize;
  return {0, c.module_path(), base, kTextStart, size};
}

TraceSet expected_trace_for(const CorpusCase& c, const CorpusRun& run, std::uint64_t base) {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::InvalidTraceSet, c.name + ": " + msg);
  };
  if (run.script.empty()) fail("empty script");
  TraceSet trace;
  trace.add_module(module_info(c, base));
  std::vector<std::uint64_t> stack;
  std::size_t si = 1;
  std::uint64_t pos = c.label(run.script[0]);
  bool leader_pending = true;
  // Bounded: every script step or fall-through visits at most the image.
  for (std::size_t steps = 0; steps < 1'000'000; ++steps) {
    const TruthInst* inst = c.truth_at(pos);
    if (!inst) fail("execution reaches non-instruction offset " + to_hex(pos));
    NormAddr loc{0, pos};
    trace.add_inst({loc, inst->bytes});
    if (leader_pending) trace.add_leader(loc);
    leader_pending = false;
    if (inst->exits) {
      if (si != run.script.size()) fail("script continues past the exit");
      trace.validate();
      return trace;
    }
    if (inst->cls == InstClass::None) {
      pos = inst->end();
      continue;
    }
    if (inst->cls == InstClass::Halting) fail("execution reaches a halting instruction at " + to_hex(pos));
    if (si >= run.script.size()) fail("script ends at transfer " + to_hex(pos));
    const std::string& next = run.script[si++];
    std::uint64_t dst = next == "+" ? inst->end() : c.label(next);
    switch (inst->cls) {
      case InstClass::Cbr:
        if (dst != inst->end() && dst != *inst->rel_target) fail("bad branch target at " + to_hex(pos));
        break;
      case InstClass::DirectJmp:
      case InstClass::DirectCall:
        if (dst != *inst->rel_target) fail("bad direct target at " + to_hex(pos));
        break;
      case InstClass::Return:
        if (stack.empty() || stack.back() != dst) fail("return to " + to_hex(dst) + " does not match the call stack");
        stack.pop_back();
        break;
      default:
        break;
    }
    if (is_call(*inst)) stack.push_back(inst->end());
    trace.add_edge({edge_kind_of(inst->cls), loc, {0, dst}});
    pos = dst;
    leader_pending = true;
  }
  throw Error(ErrorCode::InvalidTraceSet, c.name + ": execution does not terminate");
}

CorpusCase gen(std::string_view name) {
  for (const auto& [n, fn] : registry()) {
    if (n != name) continue;
    Fixture f = fn();
    CorpusCase c;
    c.name = n;
    c.image = std::move(f.out.image);
    c.ground_truth = std::move(f.out.insts);
    c.data_regions = std::move(f.out.data_regions);
    c.labels = std::move(f.out.labels);
    c.entry = c.label(f.entry);
    c.runs = std::move(f.runs);
    c.expected_trace = expected_trace_for(c, c.runs.front());
    c.expected_edges.assign(c.expected_trace.edges().begin(), c.expected_trace.edges().end());
    return c;
  }
  throw Error(ErrorCode::UnknownCase, "unknown corpus case '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- ELF

namespace {

template <typename T>
void put(Bytes& out, std::size_t at, T value) {
  std::memcpy(out.data() + at, &value, sizeof(T));
}

}  // namespace

Bytes emit_elf(const CorpusCase& c, const ElfOptions& opts) { return emit_elf(c.image, c.entry, opts); }

Bytes emit_elf(const CodeImage& image, std::uint64_t entry, const ElfOptions& opts) {
  if (image.base_offset != kTextStart)
    throw Error(ErrorCode::Usage, "image must start at module offset " + to_hex(kTextStart));
  if (image.bytes.size() > kPageSize)
    throw Error(ErrorCode::ImageTooLarge,
                "image of " + std::to_string(image.bytes.size()) + " bytes exceeds one page");
  if (opts.base % kPageSize != 0) throw Error(ErrorCode::Usage, "ELF base must be page aligned");
  const std::uint64_t base = opts.pie ? 0 : opts.base;

  Bytes out(kTextStart + image.bytes.size(), 0);
  // e_ident
  const std::uint8_t ident[16] = {0x7f, 'E', 'L', 'F', 2, 1, 1, 0};
  std::memcpy(out.data(), ident, sizeof(ident));
  put<std::uint16_t>(out, 16, opts.pie ? 3 : 2);  // e_type
  put<std::uint16_t>(out, 18, 62);                 // EM_X86_64
  put<std::uint32_t>(out, 20, 1);
  put<std::uint64_t>(out, 24, base + entry);
  put<std::uint64_t>(out, 32, 64);  // e_phoff
  put<std::uint64_t>(out, 40, 0);   // e_shoff
  put<std::uint32_t>(out, 48, 0);
  put<std::uint16_t>(out, 52, 64);  // e_ehsize
  put<std::uint16_t>(out, 54, 56);  // e_phentsize
  put<std::uint16_t>(out, 56, 2);   // e_phnum
  put<std::uint16_t>(out, 58, 64);  // e_shentsize
  put<std::uint16_t>(out, 60, 0);
  put<std::uint16_t>(out, 62, 0);

  auto phdr = [&](std::size_t index, std::uint32_t flags, std::uint64_t offset, std::uint64_t size) {
    std::size_t at = 64 + 56 * index;
    put<std::uint32_t>(out, at, 1);  // PT_LOAD
    put<std::uint32_t>(out, at + 4, flags);
    put<std::uint64_t>(out, at + 8, offset);
    put<std::uint64_t>(out, at + 16, base + offset);
    put<std::uint64_t>(out, at + 24, base + offset);
    put<std::uint64_t>(out, at + 32, size);
    put<std::uint64_t>(out, at + 40, size);
    put<std::uint64_t>(out, at + 48, kPageSize);
  };
  phdr(0, 4, 0, 64 + 56 * 2);                         // R
  phdr(1, 7, kTextStart, image.bytes.size());         // RWX
  std::copy(image.bytes.begin(), image.bytes.end(), out.begin() + kTextStart);
  return out;
}

}  // namespace tracebin::corpus
