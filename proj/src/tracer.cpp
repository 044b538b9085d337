#include "tracebin/tracer.hpp"

#include "tracebin/error.hpp"

#if defined(__linux__) && defined(__x86_64__)

#include <fcntl.h>
#include <signal.h>
#include <sys/ptrace.h>
#include <sys/user.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "tracebin/x86_length.hpp"

extern char** environ;

namespace tracebin::tracer {

bool platform_supported() { return true; }

namespace {

[[noreturn]] void sys_fail(ErrorCode code, const std::string& what) {
  throw Error(code, what + ": " + std::strerror(errno));
}

/// Executable file-backed mappings of the tracee grouped by path.
class ModuleTable {
 public:
  explicit ModuleTable(pid_t pid) : pid_(pid) {
    std::error_code ec;
    exe_ = std::filesystem::read_symlink("/proc/" + std::to_string(pid) + "/exe", ec).string();
  }

  void refresh() {
    std::ifstream maps("/proc/" + std::to_string(pid_) + "/maps");
    if (!maps) throw Error(ErrorCode::TraceFailure, "cannot read the target's memory map");
    struct Span {
      std::uint64_t bias = ~std::uint64_t{0};
      std::uint64_t lo = ~std::uint64_t{0};
      std::uint64_t hi = 0;
    };
    std::map<std::string, Span> spans;
    std::vector<std::string> order;
    std::string line;
    while (std::getline(maps, line)) {
      unsigned long long start = 0, end = 0, offset = 0, inode = 0;
      char perms[8] = {};
      char dev[16] = {};
      int consumed = 0;
      if (std::sscanf(line.c_str(), "%llx-%llx %7s %llx %15s %llu %n", &start, &end, perms, &offset, dev, &inode,
                      &consumed) < 6)
        continue;
      std::string path = consumed > 0 && static_cast<std::size_t>(consumed) <= line.size() ? line.substr(consumed) : "";
      while (!path.empty() && path.back() == ' ') path.pop_back();
      if (path.empty()) continue;
      auto [it, fresh] = spans.try_emplace(path);
      if (fresh) order.push_back(path);
      Span& s = it->second;
      s.bias = std::min<std::uint64_t>(s.bias, start - offset);
      if (perms[2] == 'x') {
        s.lo = std::min<std::uint64_t>(s.lo, start);
        s.hi = std::max<std::uint64_t>(s.hi, end);
      }
    }
    for (const auto& path : order) {
      const Span& s = spans[path];
      if (s.hi == 0) continue;
      ModuleId id;
      if (auto it = ids_.find(path); it != ids_.end()) {
        id = it->second;
      } else {
        id = path == exe_ ? 0 : next_id_++;
        ids_[path] = id;
      }
      by_id_[id] = ModuleInfo{id, path, s.bias, s.lo - s.bias, s.hi - s.lo};
    }
    modules_.clear();
    for (const auto& [id, info] : by_id_) modules_.push_back(info);
  }

  NormAddr locate(std::uint64_t raw) {
    try {
      return normalize(raw, modules_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoModule) throw;
    }
    refresh();
    try {
      return normalize(raw, modules_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoModule) throw;
      throw Error(ErrorCode::NoModule, "code executed at " + to_hex(raw) + " outside any file-backed module");
    }
  }

  const std::vector<ModuleInfo>& modules() const { return modules_; }

 private:
  pid_t pid_;
  std::string exe_;
  std::map<std::string, ModuleId> ids_;
  std::map<ModuleId, ModuleInfo> by_id_;
  std::vector<ModuleInfo> modules_;
  ModuleId next_id_ = 1;
};

/// Kills the target when the deadline passes.
class Watchdog {
 public:
  Watchdog(pid_t pid, unsigned seconds)
      : thread_([this, pid, seconds] {
          std::unique_lock lock(mu_);
          if (!cv_.wait_for(lock, std::chrono::seconds(seconds), [this] { return done_; })) {
            fired_ = true;
            ::kill(pid, SIGKILL);
          }
        }) {}
  ~Watchdog() {
    {
      std::lock_guard lock(mu_);
      done_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }
  bool fired() const { return fired_; }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  bool done_ = false;
  std::atomic<bool> fired_{false};
  std::thread thread_;
};

enum class StopKind { Exited, Trap, Breakpoint, Signal };

struct Stop {
  StopKind kind = StopKind::Exited;
  int signo = 0;
  int status = 0;
};

class Tracee {
 public:
  explicit Tracee(pid_t pid) : pid_(pid) {}
  ~Tracee() {
    if (alive_) {
      ::kill(pid_, SIGKILL);
      int st;
      ::waitpid(pid_, &st, 0);
    }
    if (mem_fd_ >= 0) ::close(mem_fd_);
  }

  pid_t pid() const { return pid_; }
  bool alive() const { return alive_; }
  int status() const { return status_; }

  void open_mem() {
    mem_fd_ = ::open(("/proc/" + std::to_string(pid_) + "/mem").c_str(), O_RDWR | O_CLOEXEC);
    if (mem_fd_ < 0) sys_fail(ErrorCode::TraceFailure, "cannot open target memory");
  }

  user_regs_struct regs() {
    user_regs_struct r{};
    if (::ptrace(PTRACE_GETREGS, pid_, nullptr, &r) != 0) sys_fail(ErrorCode::TraceFailure, "PTRACE_GETREGS");
    return r;
  }
  void set_regs(const user_regs_struct& r) {
    if (::ptrace(PTRACE_SETREGS, pid_, nullptr, &r) != 0) sys_fail(ErrorCode::TraceFailure, "PTRACE_SETREGS");
  }

  Bytes read(std::uint64_t addr, std::size_t n) {
    Bytes out(n);
    ssize_t got = ::pread(mem_fd_, out.data(), n, static_cast<off_t>(addr));
    if (got <= 0 && n > 1) {
      // The instruction may end right before an unmapped page.
      std::size_t to_page = 0x1000 - (addr & 0xfff);
      if (to_page < n) got = ::pread(mem_fd_, out.data(), to_page, static_cast<off_t>(addr));
    }
    if (got <= 0) sys_fail(ErrorCode::TraceFailure, "cannot read target memory at " + to_hex(addr));
    out.resize(static_cast<std::size_t>(got));
    return out;
  }
  void write_byte(std::uint64_t addr, std::uint8_t b) {
    if (::pwrite(mem_fd_, &b, 1, static_cast<off_t>(addr)) != 1)
      sys_fail(ErrorCode::TraceFailure, "cannot write target memory at " + to_hex(addr));
  }

  /// Resumes (single-step or continue) delivering `sig`, then waits.
  Stop resume(bool step, int sig, std::optional<std::uint64_t> breakpoint = std::nullopt) {
    if (::ptrace(step ? PTRACE_SINGLESTEP : PTRACE_CONT, pid_, nullptr, reinterpret_cast<void*>(static_cast<long>(sig))) != 0)
      sys_fail(ErrorCode::TraceFailure, "ptrace resume");
    return wait(breakpoint);
  }

  Stop wait(std::optional<std::uint64_t> breakpoint = std::nullopt) {
    int st = 0;
    for (;;) {
      if (::waitpid(pid_, &st, 0) < 0) {
        if (errno == EINTR) continue;
        sys_fail(ErrorCode::TraceFailure, "waitpid");
      }
      break;
    }
    if (WIFEXITED(st) || WIFSIGNALED(st)) {
      alive_ = false;
      status_ = st;
      return {StopKind::Exited, 0, st};
    }
    int sig = WSTOPSIG(st);
    int event = st >> 16;
    if (event == PTRACE_EVENT_CLONE || event == PTRACE_EVENT_FORK || event == PTRACE_EVENT_VFORK) {
      unsigned long child = 0;
      ::ptrace(PTRACE_GETEVENTMSG, pid_, nullptr, &child);
      if (child) ::kill(static_cast<pid_t>(child), SIGKILL);
      throw Error(ErrorCode::UnsupportedTarget, "target creates threads or child processes");
    }
    if (event != 0) return {StopKind::Trap, 0, st};
    if (sig == SIGTRAP) {
      siginfo_t info{};
      ::ptrace(PTRACE_GETSIGINFO, pid_, nullptr, &info);
      if (info.si_code == SI_KERNEL) {
        if (breakpoint && regs().rip == *breakpoint + 1) return {StopKind::Breakpoint, 0, st};
        return {StopKind::Signal, SIGTRAP, st};
      }
      if (info.si_code <= 0) return {StopKind::Signal, SIGTRAP, st};  // sent by kill()
      return {StopKind::Trap, 0, st};
    }
    return {StopKind::Signal, sig, st};
  }

 private:
  pid_t pid_;
  bool alive_ = true;
  int status_ = 0;
  int mem_fd_ = -1;
};

pid_t launch(const RunSpec& spec) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_regular_file(spec.program_path, ec) || ::access(spec.program_path.c_str(), X_OK) != 0)
    throw Error(ErrorCode::LaunchFailure, spec.program_path + " is not an executable file");
  if (spec.timeout_s < 1) throw Error(ErrorCode::Usage, "timeout must be at least one second");

  std::vector<std::string> argv_s{spec.program_path};
  argv_s.insert(argv_s.end(), spec.args.begin(), spec.args.end());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);
  std::vector<std::string> env_s = spec.env;
  std::vector<char*> envp;
  for (auto& e : env_s) envp.push_back(e.data());
  envp.push_back(nullptr);
  char** envv = spec.env.empty() ? environ : envp.data();
  std::string in_path = spec.stdin_file.value_or("");
  std::string out_path = spec.stdout_file.value_or("");

  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) sys_fail(ErrorCode::LaunchFailure, "pipe2");
  pid_t pid = ::fork();
  if (pid < 0) sys_fail(ErrorCode::LaunchFailure, "fork");
  if (pid == 0) {
    ::close(pipefd[0]);
    int err = 0;
    if (::ptrace(PTRACE_TRACEME, 0, nullptr, nullptr) != 0) err = errno;
    if (!err && !in_path.empty()) {
      int fd = ::open(in_path.c_str(), O_RDONLY);
      if (fd < 0 || ::dup2(fd, 0) < 0) err = errno;
    }
    if (!err && !out_path.empty()) {
      int fd = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      if (fd < 0 || ::dup2(fd, 1) < 0) err = errno;
    }
    if (!err) {
      ::execve(argv[0], argv.data(), envv);
      err = errno;
    }
    [[maybe_unused]] auto n = ::write(pipefd[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(pipefd[1]);
  int st = 0;
  while (::waitpid(pid, &st, 0) < 0 && errno == EINTR) {
  }
  int err = 0;
  bool got_err = ::read(pipefd[0], &err, sizeof err) == static_cast<ssize_t>(sizeof err);
  ::close(pipefd[0]);
  if (!WIFSTOPPED(st) || got_err) {
    if (WIFSTOPPED(st)) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &st, 0);
    }
    throw Error(ErrorCode::LaunchFailure,
                "cannot start " + spec.program_path + (got_err ? std::string(": ") + std::strerror(err) : ""));
  }
  long options = PTRACE_O_EXITKILL | PTRACE_O_TRACECLONE | PTRACE_O_TRACEFORK | PTRACE_O_TRACEVFORK;
  if (::ptrace(PTRACE_SETOPTIONS, pid, nullptr, reinterpret_cast<void*>(options)) != 0) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, &st, 0);
    sys_fail(ErrorCode::LaunchFailure, "PTRACE_SETOPTIONS");
  }
  return pid;
}

struct Prev {
  bool valid = false;
  std::uint64_t raw = 0;
  std::uint64_t end = 0;
  std::optional<EdgeKind> kind;
  NormAddr loc;
  bool retained = false;
};

}  // namespace

TraceResult collect(const RunSpec& spec, const TraceOptions& opts) {
  pid_t pid = launch(spec);
  Tracee tracee(pid);
  tracee.open_mem();
  ModuleTable table(pid);
  table.refresh();
  Watchdog watchdog(pid, spec.timeout_s);

  TraceResult result;
  TraceSet acc;
  Prev prev;
  auto retained = [&](const NormAddr& loc) { return !opts.main_module_only || loc.module == 0; };

  // Block-skip bookkeeping over raw addresses: blocks maps a block start to
  // the address where single-stepping has to resume (its last transfer, or
  // the next block start when it falls through).
  std::map<std::uint64_t, std::uint64_t> blocks;
  std::set<std::uint64_t> block_starts;
  std::optional<std::uint64_t> open_block;

  auto handle_signal = [&](int signo, std::uint64_t pc) {
    SignalEvent ev{signo, pc, std::nullopt};
    try {
      NormAddr loc = table.locate(pc);
      if (retained(loc)) ev.loc = loc;
    } catch (const Error&) {
    }
    result.signals.push_back(ev);
    prev.valid = false;
    open_block.reset();
  };

  try {
    while (tracee.alive()) {
      auto regs = tracee.regs();
      const std::uint64_t rip = regs.rip;
      ++result.steps;

      bool leader = !prev.valid || prev.kind.has_value() || prev.end != rip;
      if (leader) {
        open_block = rip;
        block_starts.insert(rip);
      } else if (block_starts.count(rip)) {
        if (open_block) blocks[*open_block] = rip;
        open_block = rip;
      }

      NormAddr loc = table.locate(rip);
      Bytes window = tracee.read(rip, kMaxInstLen);
      std::size_t len = x86::instruction_length(window);
      Bytes bytes(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(len));
      std::optional<EdgeKind> kind;
      try {
        kind = x86::classify_transfer(bytes);
      } catch (const Error& e) {
        result.warnings.push_back(to_hex(rip) + ": " + e.what());
      }

      bool keep = retained(loc);
      if (keep) {
        try {
          acc.add_inst({loc, bytes});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ConflictingInstruction) throw;
          throw Error(ErrorCode::SelfModifyingDetected, e.what());
        }
        if (leader) acc.add_leader(loc);
        if (prev.valid && prev.kind && prev.retained) acc.add_edge({*prev.kind, prev.loc, loc});
      }

      // Run over a block that has been stepped through before.
      if (opts.mode == StepMode::BlockSkip && open_block == rip) {
        auto it = blocks.find(rip);
        if (it != blocks.end() && it->second != rip) {
          std::uint64_t bp = it->second;
          std::uint8_t saved = tracee.read(bp, 1)[0];
          tracee.write_byte(bp, 0xcc);
          Stop stop = tracee.resume(false, 0, bp);
          if (tracee.alive()) tracee.write_byte(bp, saved);
          if (stop.kind == StopKind::Breakpoint) {
            auto r = tracee.regs();
            r.rip = bp;
            tracee.set_regs(r);
            prev = {true, bp, bp, std::nullopt, loc, keep};
            open_block.reset();
            continue;
          }
          if (stop.kind == StopKind::Exited) break;
          // Anything else (a signal inside the block): fall back to stepping.
          auto r = tracee.regs();
          if (stop.kind == StopKind::Signal) {
            handle_signal(stop.signo, stop.signo == SIGTRAP ? r.rip - 1 : r.rip);
            Stop s = tracee.resume(true, stop.signo);
            while (s.kind == StopKind::Signal) {
              handle_signal(s.signo, tracee.regs().rip);
              s = tracee.resume(true, s.signo);
            }
          } else {
            prev.valid = false;
            open_block.reset();
          }
          continue;
        }
      }

      if (kind && open_block) {
        blocks[*open_block] = rip;
        open_block.reset();
      }
      prev = {true, rip, rip + len, kind, loc, keep};

      Stop stop = tracee.resume(true, 0);
      while (stop.kind == StopKind::Signal) {
        // Faults (ud2) stop with the pc on the faulting instruction; int3
        // stops after it, so report the instruction just stepped.
        handle_signal(stop.signo, stop.signo == SIGTRAP ? rip : tracee.regs().rip);
        stop = tracee.resume(true, stop.signo);
      }
    }
  } catch (const Error& e) {
    if (!watchdog.fired() || e.code() != ErrorCode::TraceFailure) throw;
  }

  if (watchdog.fired()) {
    result.partial = true;
    result.partial_reason = "timeout";
  } else if (!tracee.alive()) {
    int st = tracee.status();
    if (WIFEXITED(st)) result.exit_code = WEXITSTATUS(st);
    if (WIFSIGNALED(st)) result.term_signal = WTERMSIG(st);
  }

  std::set<ModuleId> used{0};
  for (const auto& [loc, rec] : acc.insts()) used.insert(loc.module);
  for (const auto& m : table.modules())
    if (used.count(m.id) && (!opts.main_module_only || m.id == 0)) result.trace.add_module(m);
  for (const auto& [loc, rec] : acc.insts()) result.trace.add_inst(rec);
  for (const auto& e : acc.edges()) result.trace.add_edge(e);
  for (const auto& l : acc.leaders()) result.trace.add_leader(l);
  result.trace.validate();
  return result;
}

}  // namespace tracebin::tracer

#else

namespace tracebin::tracer {

bool platform_supported() { return false; }

TraceResult collect(const RunSpec&, const TraceOptions&) {
  throw Error(ErrorCode::UnsupportedTarget, "tracing requires Linux on x86-64");
}

}  // namespace tracebin::tracer

#endif

namespace tracebin::tracer {

bool TraceResult::signal_at(NormAddr loc) const {
  for (const auto& s : signals)
    if (s.loc == loc) return true;
  return false;
}

}  // namespace tracebin::tracer
