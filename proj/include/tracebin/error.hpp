#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tracebin {

enum class ErrorCode {
  // core-model
  NoModule,
  AmbiguousModule,
  ConflictingInstruction,
  InvalidTraceSet,
  MalformedTrace,
  // tracer
  LaunchFailure,
  SelfModifyingDetected,
  UnsupportedTarget,
  UndecodableInstruction,
  // disasm-ingest
  MalformedLine,
  EmptyListing,
  MissingBase,
  MalformedRecord,
  DuplicateOffset,
  UnderflowingOffset,
  // evaluator / cf-explain
  ModuleMismatch,
  TargetMismatch,
  InconsistentInputs,
  MalformedReport,
  // ref-disasm
  InvalidOpcode,
  TruncatedInstruction,
  // corpus
  UnknownCase,
  ImageTooLarge,
  MalformedElf,
  // patch-lab
  NoViableSite,
  BytesMismatch,
  TraceFailure,
  // plumbing
  Io,
  Usage,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tracebin
