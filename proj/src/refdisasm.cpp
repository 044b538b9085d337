#include "tracebin/refdisasm.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "tracebin/error.hpp"

namespace tracebin::refdisasm {

std::string to_string(InstClass cls) {
  switch (cls) {
    case InstClass::None: return "none";
    case InstClass::Cbr: return "cbr";
    case InstClass::DirectJmp: return "direct_jmp";
    case InstClass::DirectCall: return "direct_call";
    case InstClass::Indirect: return "indirect";
    case InstClass::Return: return "return";
    case InstClass::Halting: return "halting";
  }
  return "?";
}

namespace {

class Reader {
 public:
  Reader(const CodeImage& image, std::uint64_t start) : image_(image), start_(start), pos_(start) {}

  std::uint8_t peek() const {
    if (pos_ >= image_.end_offset())
      throw Error(ErrorCode::TruncatedInstruction, "instruction at " + to_hex(start_) + " runs past the image end");
    return image_.bytes[pos_ - image_.base_offset];
  }
  std::uint8_t next() {
    auto b = peek();
    ++pos_;
    return b;
  }
  std::uint64_t take_le(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(next()) << (8 * i);
    return v;
  }
  std::uint64_t pos() const { return pos_; }
  std::uint64_t start() const { return start_; }

  [[noreturn]] void invalid(std::uint64_t at) const {
    throw Error(ErrorCode::InvalidOpcode, "invalid opcode at " + to_hex(at) + " (instruction start " +
                                              to_hex(start_) + ")");
  }

 private:
  const CodeImage& image_;
  std::uint64_t start_;
  std::uint64_t pos_;
};

struct ModRM {
  std::uint8_t mod;
  std::uint8_t reg;
  std::uint8_t rm;
};

// Consumes ModRM, SIB and displacement.
ModRM read_modrm(Reader& r) {
  std::uint8_t b = r.next();
  ModRM m{static_cast<std::uint8_t>(b >> 6), static_cast<std::uint8_t>((b >> 3) & 7),
          static_cast<std::uint8_t>(b & 7)};
  if (m.mod == 3) return m;
  std::uint8_t base = m.rm;
  if (m.rm == 4) base = r.next() & 7;
  if (m.mod == 1) {
    r.take_le(1);
  } else if (m.mod == 2 || (m.mod == 0 && base == 5)) {
    r.take_le(4);
  }
  return m;
}

std::uint64_t sign_extend(std::uint64_t v, int bytes) {
  int shift = 64 - 8 * bytes;
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(v << shift) >> shift);
}

}  // namespace

DecodedInst decode_len(const CodeImage& image, std::uint64_t offset) {
  if (!image.contains(offset))
    throw Error(ErrorCode::TruncatedInstruction, "offset " + to_hex(offset) + " is outside the image");
  Reader r(image, offset);
  DecodedInst out;
  out.offset = offset;

  bool opsize16 = false;
  for (;;) {
    auto b = r.peek();
    if (b == 0x66) {
      opsize16 = true;
      r.next();
    } else if (b == 0x3e) {
      r.next();
    } else {
      break;
    }
  }

  if (r.peek() == 0xf3) {
    // Only endbr64 uses F3 in the subset.
    std::uint64_t at = r.pos();
    r.next();
    if (r.next() != 0x0f || r.next() != 0x1e || r.next() != 0xfa) r.invalid(at);
  } else {
    std::uint8_t rex = 0;
    if ((r.peek() & 0xf0) == 0x40) rex = r.next();
    bool rex_w = rex & 0x08;
    std::uint64_t op_at = r.pos();
    std::uint8_t op = r.next();
    auto imm_z = [&] { r.take_le(opsize16 ? 2 : 4); };
    auto rel = [&](int n, InstClass cls) {
      std::uint64_t disp = sign_extend(r.take_le(n), n);
      out.cls = cls;
      out.rel_target = r.pos() + disp;
    };

    switch (op) {
      case 0x50: case 0x51: case 0x52: case 0x53: case 0x54: case 0x55: case 0x56: case 0x57:
      case 0x58: case 0x59: case 0x5a: case 0x5b: case 0x5c: case 0x5d: case 0x5e: case 0x5f:
        break;
      case 0x90:
        if (rex & 0x01) r.invalid(op_at);  // 41 90 is xchg %eax,%r8d
        break;
      case 0x01: case 0x03: case 0x08: case 0x29: case 0x2b: case 0x31: case 0x33: case 0x39: case 0x3b:
      case 0x63: case 0x85: case 0x89: case 0x8b:
        read_modrm(r);
        break;
      case 0x8d:
        if (read_modrm(r).mod == 3) r.invalid(op_at);
        break;
      case 0xb8: case 0xb9: case 0xba: case 0xbb: case 0xbc: case 0xbd: case 0xbe: case 0xbf:
        r.take_le(rex_w ? 8 : (opsize16 ? 2 : 4));
        break;
      case 0xc7:
        if (read_modrm(r).reg != 0) r.invalid(op_at);
        imm_z();
        break;
      case 0x83:
        read_modrm(r);
        r.take_le(1);
        break;
      case 0xf7: {
        auto m = read_modrm(r);
        if (m.reg == 1) r.invalid(op_at);
        if (m.reg == 0) imm_z();
        break;
      }
      case 0xff: {
        auto m = read_modrm(r);
        if (m.reg == 2 || m.reg == 4) out.cls = InstClass::Indirect;
        else if (m.reg > 1) r.invalid(op_at);
        break;
      }
      case 0x68:
        imm_z();
        break;
      case 0xe8: rel(4, InstClass::DirectCall); break;
      case 0xe9: rel(4, InstClass::DirectJmp); break;
      case 0xeb: rel(1, InstClass::DirectJmp); break;
      case 0x70: case 0x71: case 0x72: case 0x73: case 0x74: case 0x75: case 0x76: case 0x77:
      case 0x78: case 0x79: case 0x7a: case 0x7b: case 0x7c: case 0x7d: case 0x7e: case 0x7f:
        rel(1, InstClass::Cbr);
        break;
      case 0xc3:
        out.cls = InstClass::Return;
        break;
      case 0xc2:
        r.take_le(2);
        out.cls = InstClass::Return;
        break;
      case 0xcc:
        out.cls = InstClass::Halting;
        break;
      case 0x0f: {
        std::uint64_t op2_at = r.pos();
        std::uint8_t op2 = r.next();
        if (op2 == 0x0b) {
          out.cls = InstClass::Halting;
        } else if (op2 == 0x05) {
          // syscall
        } else if (op2 == 0x1f) {
          if (read_modrm(r).reg != 0) r.invalid(op2_at);
        } else if (op2 >= 0x80 && op2 <= 0x8f) {
          rel(4, InstClass::Cbr);
        } else {
          r.invalid(op2_at);
        }
        break;
      }
      default:
        r.invalid(op_at);
    }
  }

  std::uint64_t len = r.pos() - offset;
  if (len > 15) throw Error(ErrorCode::InvalidOpcode, "instruction at " + to_hex(offset) + " exceeds 15 bytes");
  auto first = image.bytes.begin() + static_cast<std::ptrdiff_t>(offset - image.base_offset);
  out.bytes.assign(first, first + static_cast<std::ptrdiff_t>(len));
  return out;
}

namespace {

std::string mnemonic_of(const DecodedInst& inst) {
  const auto& b = inst.bytes;
  std::size_t i = 0;
  while (i < b.size() && (b[i] == 0x66 || b[i] == 0x3e)) ++i;
  if (b[i] == 0xf3) return "endbr64";
  if ((b[i] & 0xf0) == 0x40 && i + 1 < b.size()) ++i;
  std::uint8_t op = b[i];
  std::uint8_t reg = i + 1 < b.size() ? (b[i + 1] >> 3) & 7 : 0;
  switch (inst.cls) {
    case InstClass::Cbr: return "jcc";
    case InstClass::DirectJmp: return "jmp";
    case InstClass::DirectCall: return "call";
    case InstClass::Indirect: return reg == 2 ? "call *" : "jmp *";
    case InstClass::Return: return "ret";
    case InstClass::Halting: return op == 0xcc ? "int3" : "ud2";
    case InstClass::None: break;
  }
  if (op >= 0x50 && op <= 0x57) return "push";
  if (op >= 0x58 && op <= 0x5f) return "pop";
  if (op >= 0xb8 && op <= 0xbf) return "mov";
  switch (op) {
    case 0x90: return "nop";
    case 0x01: case 0x03: return "add";
    case 0x08: return "or";
    case 0x29: case 0x2b: return "sub";
    case 0x31: case 0x33: return "xor";
    case 0x39: case 0x3b: return "cmp";
    case 0x63: return "movslq";
    case 0x85: return "test";
    case 0x89: case 0x8b: case 0xc7: return "mov";
    case 0x8d: return "lea";
    case 0x68: return "push";
    case 0x83: {
      static constexpr const char* kGroup1[] = {"add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"};
      return kGroup1[reg];
    }
    case 0xf7: {
      static constexpr const char* kGroup3[] = {"test", "?", "not", "neg", "mul", "imul", "div", "idiv"};
      return kGroup3[reg];
    }
    case 0xff: return reg == 0 ? "inc" : "dec";
    case 0x0f: return b[i + 1] == 0x05 ? "syscall" : "nopl";
    default: return "?";
  }
}

}  // namespace

ViewRecord to_view_record(const DecodedInst& inst) {
  ViewRecord rec;
  rec.offset = inst.offset;
  rec.len = inst.len();
  rec.bytes = inst.bytes;
  rec.mnemonic = mnemonic_of(inst);
  return rec;
}

DisasmView linear_sweep(const CodeImage& image, std::uint64_t start, const HeuristicConfig& cfg) {
  DisasmView view;
  view.source_name = "refdisasm-linear";
  std::uint64_t pos = start;
  while (image.contains(pos)) {
    try {
      auto inst = decode_len(image, pos);
      pos = inst.end();
      view.put(to_view_record(inst));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidOpcode && cfg.skip_byte_on_invalid) {
        ++pos;
        continue;
      }
      break;
    }
  }
  return view;
}

namespace {

bool is_pop(const DecodedInst& inst) {
  const auto& b = inst.bytes;
  if (b.size() == 1) return b[0] >= 0x58 && b[0] <= 0x5f;
  return b.size() == 2 && b[0] == 0x41 && b[1] >= 0x58 && b[1] <= 0x5f;
}

bool is_indirect_call(const DecodedInst& inst) {
  const auto& b = inst.bytes;
  std::size_t i = 0;
  while (i < b.size() && (b[i] == 0x66 || b[i] == 0x3e)) ++i;
  if (i < b.size() && (b[i] & 0xf0) == 0x40) ++i;
  return i + 1 < b.size() && b[i] == 0xff && ((b[i + 1] >> 3) & 7) == 2;
}

constexpr std::uint8_t kEndbr64[] = {0xf3, 0x0f, 0x1e, 0xfa};

}  // namespace

DisasmView recursive_descent(const CodeImage& image, std::span<const std::uint64_t> entries,
                             const HeuristicConfig& cfg) {
  std::map<std::uint64_t, DecodedInst> decoded;
  std::deque<std::uint64_t> work(entries.begin(), entries.end());
  std::set<std::uint64_t> noreturn(cfg.noreturn_targets.begin(), cfg.noreturn_targets.end());

  auto drain = [&] {
    while (!work.empty()) {
      std::uint64_t off = work.front();
      work.pop_front();
      if (decoded.count(off) || !image.contains(off)) continue;
      DecodedInst inst;
      try {
        inst = decode_len(image, off);
      } catch (const Error&) {
        continue;
      }
      bool falls_through = true;
      switch (inst.cls) {
        case InstClass::DirectJmp:
        case InstClass::Return:
        case InstClass::Halting:
          falls_through = false;
          break;
        case InstClass::Indirect:
          // jmp * ends the path; call * is assumed to return.
          falls_through = is_indirect_call(inst);
          break;
        case InstClass::DirectCall:
          falls_through = !noreturn.count(*inst.rel_target);
          break;
        default:
          break;
      }
      if (inst.rel_target) work.push_back(*inst.rel_target);
      if (falls_through) work.push_back(inst.end());
      decoded.emplace(off, std::move(inst));
    }
  };
  drain();

  if (cfg.endbr_scan) {
    for (;;) {
      // Epilogue shadows: from the end of a `pop; pop; ret` to the next
      // 16-byte boundary.
      std::vector<std::pair<std::uint64_t, std::uint64_t>> shadows;
      if (cfg.epilogue_stop) {
        std::map<std::uint64_t, const DecodedInst*> by_end;
        for (const auto& [off, inst] : decoded) by_end[inst.end()] = &inst;
        for (const auto& [off, inst] : decoded) {
          if (inst.cls != InstClass::Return) continue;
          auto p2 = by_end.find(off);
          if (p2 == by_end.end() || !is_pop(*p2->second)) continue;
          auto p1 = by_end.find(p2->second->offset);
          if (p1 == by_end.end() || !is_pop(*p1->second)) continue;
          std::uint64_t lo = inst.end();
          shadows.emplace_back(lo, (lo | 0xf) + 1);
        }
      }
      auto covered = [&](std::uint64_t pos) {
        auto it = decoded.upper_bound(pos);
        if (it == decoded.begin()) return false;
        --it;
        return it->second.end() > pos;
      };
      bool found = false;
      const auto& bytes = image.bytes;
      for (std::size_t i = 0; i + 4 <= bytes.size(); ++i) {
        if (!std::equal(std::begin(kEndbr64), std::end(kEndbr64), bytes.begin() + static_cast<std::ptrdiff_t>(i)))
          continue;
        std::uint64_t off = image.base_offset + i;
        if (decoded.count(off) || covered(off)) continue;
        bool shadowed = std::any_of(shadows.begin(), shadows.end(),
                                    [&](const auto& s) { return off >= s.first && off < s.second; });
        if (shadowed) continue;
        work.push_back(off);
        found = true;
      }
      if (!found) break;
      drain();
    }
  }

  DisasmView view;
  view.source_name = "refdisasm-recursive";
  for (const auto& [off, inst] : decoded) view.put(to_view_record(inst));
  return view;
}

}  // namespace tracebin::refdisasm
