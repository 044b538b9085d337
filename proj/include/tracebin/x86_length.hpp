#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "tracebin/model.hpp"

namespace tracebin::x86 {

/// Length of the 64-bit-mode instruction at the start of `code`, covering the
/// full one-byte, 0F, 0F38, 0F3A, 3DNow!, VEX, EVEX and XOP maps. Throws
/// UndecodableInstruction for opcodes that are invalid in 64-bit mode and
/// TruncatedInstruction when `code` ends before the instruction does.
std::size_t instruction_length(std::span<const std::uint8_t> code);

/// Control-transfer kind of a complete instruction, or nullopt for anything
/// that does not transfer control. Prefixes (66/67/F2/F3/segment/REX) are
/// skipped, so `3e ff e0` (notrack jmp *%rax) is Indirect.
std::optional<EdgeKind> classify_transfer(std::span<const std::uint8_t> inst_bytes);

}  // namespace tracebin::x86
