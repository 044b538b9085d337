#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tracebin/model.hpp"

namespace tracebin::tracer {

struct RunSpec {
  std::string program_path;
  std::vector<std::string> args;
  /// `key=value` entries; empty means inherit the caller's environment.
  std::vector<std::string> env;
  std::optional<std::string> stdin_file;
  std::optional<std::string> stdout_file;
  unsigned timeout_s = 60;
};

enum class StepMode {
  /// Single-step every instruction.
  Full,
  /// Single-step until a block has been seen once, then run over it with a
  /// temporary breakpoint on its last instruction.
  BlockSkip,
};

struct TraceOptions {
  bool main_module_only = true;
  StepMode mode = StepMode::BlockSkip;
};

struct SignalEvent {
  int signo = 0;
  std::uint64_t raw_pc = 0;
  /// Set when the pc lies in a module of the trace.
  std::optional<NormAddr> loc;
};

struct TraceResult {
  TraceSet trace;
  bool partial = false;
  std::string partial_reason;
  std::vector<SignalEvent> signals;
  std::optional<int> exit_code;
  std::optional<int> term_signal;
  std::uint64_t steps = 0;
  /// Instructions the length decoder handled but whose transfer kind it
  /// could not classify.
  std::vector<std::string> warnings;

  bool signal_at(NormAddr loc) const;
};

/// True on Linux x86-64, the only host where `collect` works.
bool platform_supported();

/// Runs the program under ptrace and records its unique instruction trace.
/// Throws LaunchFailure, UnsupportedTarget (threads or child processes,
/// unsupported host), SelfModifyingDetected, NoModule (code executed from
/// an anonymous mapping) and UndecodableInstruction. A timeout kills the
/// target and returns the (still sound) trace with `partial` set.
TraceResult collect(const RunSpec& spec, const TraceOptions& opts = {});

}  // namespace tracebin::tracer
