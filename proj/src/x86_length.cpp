#include "tracebin/x86_length.hpp"

#include <array>

#include "tracebin/error.hpp"

namespace tracebin::x86 {
namespace {

// Immediate operand encodings.
enum Imm : std::uint8_t {
  kNone,
  kB,     // 1 byte
  kW,     // 2 bytes
  kZ,     // 2 with 66, else 4
  kV,     // 8 with REX.W, 2 with 66, else 4 (mov r64, imm64)
  kRel32, // always 4 in 64-bit mode
  kMoffs, // 8, or 4 with 67
  kWB,    // enter: imm16 + imm8
  kGrp3,  // F6/F7: immediate only for /0 and /1
  kBad,   // invalid in 64-bit mode
};

struct OpInfo {
  bool modrm;
  Imm imm;
};

constexpr std::array<OpInfo, 256> make_one_byte_map() {
  std::array<OpInfo, 256> t{};
  for (auto& e : t) e = {false, kNone};
  // ALU blocks 00-3F: x0-x3 / x8-xB ModRM, x4/xC imm8, x5/xD immz.
  for (int base = 0x00; base < 0x40; base += 8) {
    for (int i = 0; i < 4; ++i) t[base + i] = {true, kNone};
    t[base + 4] = {false, kB};
    t[base + 5] = {false, kZ};
  }
  for (int op : {0x06, 0x07, 0x0e, 0x16, 0x17, 0x1e, 0x1f, 0x27, 0x2f, 0x37, 0x3f}) t[op] = {false, kBad};
  for (int op : {0x60, 0x61, 0x62}) t[op] = {false, kBad};
  t[0x63] = {true, kNone};
  t[0x68] = {false, kZ};
  t[0x69] = {true, kZ};
  t[0x6a] = {false, kB};
  t[0x6b] = {true, kB};
  for (int op = 0x70; op <= 0x7f; ++op) t[op] = {false, kB};
  t[0x80] = {true, kB};
  t[0x81] = {true, kZ};
  t[0x82] = {false, kBad};
  t[0x83] = {true, kB};
  for (int op = 0x84; op <= 0x8f; ++op) t[op] = {true, kNone};
  t[0x9a] = {false, kBad};
  for (int op = 0xa0; op <= 0xa3; ++op) t[op] = {false, kMoffs};
  t[0xa8] = {false, kB};
  t[0xa9] = {false, kZ};
  for (int op = 0xb0; op <= 0xb7; ++op) t[op] = {false, kB};
  for (int op = 0xb8; op <= 0xbf; ++op) t[op] = {false, kV};
  t[0xc0] = {true, kB};
  t[0xc1] = {true, kB};
  t[0xc2] = {false, kW};
  t[0xc4] = {false, kBad};  // VEX, handled before the table lookup
  t[0xc5] = {false, kBad};
  t[0xc6] = {true, kB};
  t[0xc7] = {true, kZ};
  t[0xc8] = {false, kWB};
  t[0xca] = {false, kW};
  t[0xcd] = {false, kB};
  t[0xce] = {false, kBad};
  for (int op = 0xd0; op <= 0xd3; ++op) t[op] = {true, kNone};
  t[0xd4] = {false, kBad};
  t[0xd5] = {false, kBad};
  t[0xd6] = {false, kBad};
  for (int op = 0xd8; op <= 0xdf; ++op) t[op] = {true, kNone};
  for (int op = 0xe0; op <= 0xe7; ++op) t[op] = {false, kB};
  t[0xe8] = {false, kRel32};
  t[0xe9] = {false, kRel32};
  t[0xea] = {false, kBad};
  t[0xeb] = {false, kB};
  t[0xf6] = {true, kGrp3};
  t[0xf7] = {true, kGrp3};
  t[0xfe] = {true, kNone};
  t[0xff] = {true, kNone};
  return t;
}

constexpr std::array<OpInfo, 256> make_two_byte_map() {
  std::array<OpInfo, 256> t{};
  for (auto& e : t) e = {true, kNone};
  for (int op : {0x05, 0x06, 0x07, 0x08, 0x09, 0x0b, 0x0e, 0x30, 0x31, 0x32, 0x33, 0x34, 0x35, 0x37, 0x77,
                 0xa0, 0xa1, 0xa2, 0xa8, 0xa9, 0xaa})
    t[op] = {false, kNone};
  for (int op = 0xc8; op <= 0xcf; ++op) t[op] = {false, kNone};
  for (int op = 0x80; op <= 0x8f; ++op) t[op] = {false, kRel32};
  for (int op : {0x04, 0x0a, 0x0c, 0x24, 0x25, 0x26, 0x27, 0x36, 0x39, 0x3b, 0x3c, 0x3d, 0x3e, 0x3f, 0x7a,
                 0x7b})
    t[op] = {false, kBad};
  for (int op : {0x70, 0x71, 0x72, 0x73, 0xa4, 0xac, 0xba, 0xc2, 0xc4, 0xc5, 0xc6}) t[op] = {true, kB};
  return t;
}

constexpr auto kOneByte = make_one_byte_map();
constexpr auto kTwoByte = make_two_byte_map();

bool is_legacy_prefix(std::uint8_t b) {
  switch (b) {
    case 0xf0: case 0xf2: case 0xf3: case 0x2e: case 0x36: case 0x3e:
    case 0x26: case 0x64: case 0x65: case 0x66: case 0x67:
      return true;
    default:
      return false;
  }
}

// Opcodes in the 0F map (and VEX/EVEX map 1) that take an imm8.
bool map1_has_imm8(std::uint8_t op) {
  return (op >= 0x70 && op <= 0x73) || op == 0xc2 || op == 0xc4 || op == 0xc5 || op == 0xc6;
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> code) : code_(code) {}

  std::uint8_t peek(std::size_t ahead = 0) const {
    if (pos_ + ahead >= code_.size()) truncated();
    return code_[pos_ + ahead];
  }
  std::uint8_t next() {
    auto b = peek();
    ++pos_;
    return b;
  }
  void skip(std::size_t n) {
    if (pos_ + n > code_.size()) truncated();
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  [[noreturn]] static void truncated() {
    throw Error(ErrorCode::TruncatedInstruction, "instruction runs past the end of the buffer");
  }

  std::span<const std::uint8_t> code_;
  std::size_t pos_ = 0;
};

void skip_modrm_operand(Cursor& c) {
  std::uint8_t modrm = c.next();
  std::uint8_t mod = modrm >> 6;
  std::uint8_t rm = modrm & 7;
  if (mod == 3) return;
  if (rm == 4) {
    std::uint8_t sib = c.next();
    if (mod == 0 && (sib & 7) == 5) c.skip(4);
  } else if (mod == 0 && rm == 5) {
    c.skip(4);  // RIP-relative
  }
  if (mod == 1) c.skip(1);
  if (mod == 2) c.skip(4);
}

[[noreturn]] void undecodable(std::uint8_t op) {
  throw Error(ErrorCode::UndecodableInstruction, "opcode " + to_hex(std::span<const std::uint8_t>(&op, 1)) +
                                                     " is invalid in 64-bit mode");
}

}  // namespace

std::size_t instruction_length(std::span<const std::uint8_t> code) {
  Cursor c(code.first(std::min(code.size(), kMaxInstLen + 1)));
  bool opsize16 = false;
  bool addr32 = false;
  bool rex_w = false;

  while (is_legacy_prefix(c.peek())) {
    auto b = c.next();
    if (b == 0x66) opsize16 = true;
    if (b == 0x67) addr32 = true;
    rex_w = false;
  }
  if ((c.peek() & 0xf0) == 0x40) {
    rex_w = (c.next() & 0x08) != 0;
  }

  std::uint8_t op = c.next();
  std::size_t len = 0;

  if (op == 0xc4 || op == 0xc5 || op == 0x62 || (op == 0x8f && (c.peek() & 0x38) != 0)) {
    // VEX / EVEX / XOP: map select decides the immediate; ModRM always present.
    int map = 1;
    if (op == 0xc5) {
      c.skip(1);
    } else if (op == 0xc4) {
      map = c.next() & 0x1f;
      c.skip(1);
    } else if (op == 0x62) {
      map = c.next() & 0x07;
      c.skip(2);
    } else {
      map = c.next() & 0x1f;  // XOP: 8, 9 or 0xa
      c.skip(1);
    }
    std::uint8_t vop = c.next();
    skip_modrm_operand(c);
    if (op == 0x8f) {
      if (map == 8) c.skip(1);
      else if (map == 0xa) c.skip(4);
    } else if (map == 3 || (map == 1 && map1_has_imm8(vop))) {
      c.skip(1);
    }
    len = c.pos();
  } else if (op == 0x0f) {
    std::uint8_t op2 = c.next();
    if (op2 == 0x38) {
      c.skip(1);
      skip_modrm_operand(c);
    } else if (op2 == 0x3a) {
      c.skip(1);
      skip_modrm_operand(c);
      c.skip(1);
    } else if (op2 == 0x0f) {
      skip_modrm_operand(c);  // 3DNow!: suffix opcode byte follows operands
      c.skip(1);
    } else {
      const auto& info = kTwoByte[op2];
      if (info.imm == kBad) undecodable(op2);
      if (info.modrm) skip_modrm_operand(c);
      if (info.imm == kB) c.skip(1);
      if (info.imm == kRel32) c.skip(4);
    }
    len = c.pos();
  } else {
    const auto& info = kOneByte[op];
    if (info.imm == kBad) undecodable(op);
    std::uint8_t reg = 0;
    if (info.modrm) {
      reg = (c.peek() >> 3) & 7;
      skip_modrm_operand(c);
    }
    switch (info.imm) {
      case kNone: break;
      case kB: c.skip(1); break;
      case kW: c.skip(2); break;
      case kZ: c.skip(opsize16 ? 2 : 4); break;
      case kV: c.skip(rex_w ? 8 : (opsize16 ? 2 : 4)); break;
      case kRel32: c.skip(4); break;
      case kMoffs: c.skip(addr32 ? 4 : 8); break;
      case kWB: c.skip(3); break;
      case kGrp3:
        if (reg <= 1) c.skip(op == 0xf6 ? 1 : (opsize16 ? 2 : 4));
        break;
      case kBad: undecodable(op);
    }
    len = c.pos();
  }

  if (len > kMaxInstLen)
    throw Error(ErrorCode::UndecodableInstruction, "instruction exceeds 15 bytes");
  return len;
}

std::optional<EdgeKind> classify_transfer(std::span<const std::uint8_t> inst_bytes) {
  // Validates the encoding as a side effect.
  std::size_t len = instruction_length(inst_bytes);
  std::size_t i = 0;
  while (i < len && is_legacy_prefix(inst_bytes[i])) ++i;
  if (i < len && (inst_bytes[i] & 0xf0) == 0x40) ++i;
  if (i >= len) return std::nullopt;
  std::uint8_t op = inst_bytes[i];

  if ((op >= 0x70 && op <= 0x7f) || (op >= 0xe0 && op <= 0xe3)) return EdgeKind::Cbr;
  if (op == 0xe8 || op == 0xe9 || op == 0xeb) return EdgeKind::Direct;
  if (op == 0xc3 || op == 0xc2 || op == 0xcb || op == 0xca) return EdgeKind::Return;
  if (op == 0x0f && i + 1 < len && inst_bytes[i + 1] >= 0x80 && inst_bytes[i + 1] <= 0x8f) return EdgeKind::Cbr;
  if (op == 0xff && i + 1 < len) {
    std::uint8_t reg = (inst_bytes[i + 1] >> 3) & 7;
    if (reg >= 2 && reg <= 5) return EdgeKind::Indirect;
  }
  return std::nullopt;
}

}  // namespace tracebin::x86
