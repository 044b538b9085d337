#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"

#include "tracebin/batch.hpp"
#include "tracebin/corpus.hpp"
#include "tracebin/disasm_view.hpp"
#include "tracebin/elf.hpp"
#include "tracebin/error.hpp"
#include "tracebin/evaluator.hpp"
#include "tracebin/explain.hpp"
#include "tracebin/patch.hpp"
#include "tracebin/refdisasm.hpp"
#include "tracebin/trace_io.hpp"
#include "tracebin/tracer.hpp"

using namespace tracebin;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

bool use_color(int fd) {
  if (const char* env = std::getenv("TRACEBIN_COLOR")) return std::string(env) == "1";
  return ::isatty(fd) != 0;
}

[[noreturn]] void usage(const std::string& msg) { throw Error(ErrorCode::Usage, msg); }

std::uint64_t hex_arg(const std::string& text, const char* what) {
  auto v = parse_hex_u64(text);
  if (!v) usage(std::string("bad hex value for ") + what + ": " + text);
  return *v;
}

bool is_elf(const Bytes& b) { return b.size() >= 4 && b[0] == 0x7f && b[1] == 'E' && b[2] == 'L' && b[3] == 'F'; }

struct LoadedImage {
  CodeImage image;
  std::uint64_t entry = 0;
  bool elf = false;
  Bytes file;
};

/// ELF files contribute their executable segment; anything else is raw code
/// starting at `raw_offset`.
LoadedImage load_image(const fs::path& path, std::uint64_t raw_offset) {
  LoadedImage out;
  out.file = elf::read_file(path);
  if (is_elf(out.file)) {
    out.elf = true;
    out.image = elf::exec_image(out.file);
    out.entry = elf::parse(out.file).entry_offset();
  } else {
    out.image = CodeImage{raw_offset, out.file};
    out.entry = raw_offset;
  }
  return out;
}

DisasmView load_view(const fs::path& path) {
  auto view = read_view_file(path);
  return view.declared_base ? rebase(view) : view;
}

ModuleId pick_module(const TraceSet& trace, const std::string& sel) {
  if (sel.empty()) return 0;
  if (auto id = parse_dec_u64(sel)) return static_cast<ModuleId>(*id);
  if (const auto* m = trace.find_module(sel)) return m->id;
  usage("no module named " + sel);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::size_t pick_plan(const std::vector<patch::PatchPlan>& plans, std::size_t index) {
  if (plans.empty()) usage("plan file holds no plans");
  if (index >= plans.size()) usage("plan index " + std::to_string(index) + " out of range");
  return index;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tracebin: evaluate disassemblers against executed-instruction traces"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  int status = kExitOk;

  // trace
  auto* trace_cmd = app.add_subcommand("trace", "Record the unique instruction trace of a program");
  std::string trace_out;
  unsigned trace_timeout = 60;
  bool all_modules = false;
  std::string trace_mode = "block";
  std::optional<std::string> trace_stdin, trace_stdout;
  std::vector<std::string> trace_cmdline;
  trace_cmd->add_option("--out", trace_out, "Trace file to write")->required();
  trace_cmd->add_option("--timeout", trace_timeout, "Seconds before the target is killed");
  trace_cmd->add_flag("--main-module-only", "Record only the main executable (default)");
  trace_cmd->add_flag("--all-modules", all_modules, "Record shared objects too");
  trace_cmd->add_option("--mode", trace_mode, "Stepping mode")->check(CLI::IsMember({"full", "block"}));
  trace_cmd->add_option("--stdin", trace_stdin, "File fed to the target's stdin");
  trace_cmd->add_option("--stdout", trace_stdout, "File receiving the target's stdout");
  trace_cmd->add_option("command", trace_cmdline, "Program and arguments (after --)")->required();
  trace_cmd->callback([&] {
    if (!tracer::platform_supported()) usage("tracing needs Linux on x86-64");
    tracer::RunSpec spec;
    spec.program_path = trace_cmdline.front();
    spec.args.assign(trace_cmdline.begin() + 1, trace_cmdline.end());
    spec.timeout_s = trace_timeout;
    spec.stdin_file = trace_stdin;
    spec.stdout_file = trace_stdout;
    tracer::TraceOptions opts;
    opts.main_module_only = !all_modules;
    opts.mode = trace_mode == "full" ? tracer::StepMode::Full : tracer::StepMode::BlockSkip;
    auto result = tracer::collect(spec, opts);
    write_trace_file(trace_out, result.trace, result.partial, result.partial_reason);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    std::cerr << result.trace.insts().size() << " unique instructions, " << result.steps << " stops";
    if (result.partial) std::cerr << " (partial: " << result.partial_reason << ")";
    if (result.exit_code) std::cerr << ", exit " << *result.exit_code;
    if (result.term_signal) std::cerr << ", signal " << *result.term_signal;
    std::cerr << '\n';
  });

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Convert disassembler output to the interchange format");
  std::string ingest_format = "idf", ingest_preset, ingest_base, ingest_in, ingest_out, ingest_tool;
  ingest_cmd->add_option("--format", ingest_format, "Input format")->check(CLI::IsMember({"objdump", "idf"}));
  ingest_cmd->add_option("--preset", ingest_preset, "Image base preset")->check(CLI::IsMember({"ghidra", "angr", "none"}));
  ingest_cmd->add_option("--base", ingest_base, "Image base (hex) the tool added to offsets");
  ingest_cmd->add_option("--tool", ingest_tool, "Tool name recorded in the view");
  ingest_cmd->add_option("input", ingest_in, "Listing or interchange file")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest_out, "View file to write")->required();
  ingest_cmd->callback([&] {
    std::ifstream in(ingest_in);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + ingest_in);
    DisasmView view = ingest_format == "objdump" ? parse_objdump(in) : parse_interchange(in);
    std::optional<std::uint64_t> base;
    if (!ingest_preset.empty()) base = preset_base(*parse_preset(ingest_preset));
    if (!ingest_base.empty()) base = hex_arg(ingest_base, "--base");
    view = base ? rebase(view, *base) : rebase(view);
    if (!ingest_tool.empty()) view.source_name = ingest_tool;
    write_view_file(ingest_out, view);
    std::cerr << view.size() << " records\n";
  });

  // merge
  auto* merge_cmd = app.add_subcommand("merge", "Union several traces of the same program");
  std::vector<std::string> merge_in;
  std::string merge_out;
  merge_cmd->add_option("inputs", merge_in, "Trace files")->required()->check(CLI::ExistingFile);
  merge_cmd->add_option("--out", merge_out, "Merged trace file")->required();
  merge_cmd->callback([&] {
    std::vector<TraceSet> traces;
    std::string reasons;
    for (const auto& p : merge_in) {
      auto f = read_trace_file(p);
      if (f.partial) reasons += (reasons.empty() ? "" : ",") + f.partial_reason;
      traces.push_back(std::move(f.trace));
    }
    auto merged = merge(traces);
    write_trace_file(merge_out, merged, !reasons.empty(), reasons);
    std::cerr << merged.insts().size() << " unique instructions\n";
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Report the guaranteed errors of a view");
  std::string eval_trace, eval_view, eval_out, eval_tool, eval_target, eval_module;
  bool eval_json = false;
  eval_cmd->add_option("--trace", eval_trace)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--view", eval_view)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "Report file")->required();
  eval_cmd->add_option("--tool", eval_tool, "Tool name (defaults to the view's)");
  eval_cmd->add_option("--target", eval_target, "Target name (defaults to the module path)");
  eval_cmd->add_option("--module", eval_module, "Module id or path (default 0)");
  eval_cmd->add_flag("--json", eval_json, "Write JSON instead of CSV");
  eval_cmd->callback([&] {
    auto trace = read_trace_file(eval_trace).trace;
    auto view = load_view(eval_view);
    auto report = evaluate(trace, view, {eval_target, pick_module(trace, eval_module)});
    report.tool = eval_tool.empty() ? view.source_name : eval_tool;
    if (eval_json) write_json(eval_out, report_to_json(report));
    else write_report_file(eval_out, report);
    std::cout << "missing=" << report.missing_count << " mismatch=" << report.mismatch_count
              << " total=" << report.total() << " bucket=" << bucket_letter(report.bucket) << '\n';
  });

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "Attribute missed blocks to control-flow causes");
  std::string ex_trace, ex_view, ex_report, ex_out;
  bool ex_json = false;
  explain_cmd->add_option("--trace", ex_trace)->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--view", ex_view)->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--report", ex_report)->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--out", ex_out)->required();
  explain_cmd->add_flag("--json", ex_json, "Write JSON (with categories) instead of CSV");
  explain_cmd->callback([&] {
    auto trace = read_trace_file(ex_trace).trace;
    auto view = load_view(ex_view);
    auto report = read_report_file(ex_report);
    auto ex = explain(trace, view, report);
    auto cats = categorize(ex);
    if (ex_json) write_json(ex_out, {{"explanations", explanations_to_json(ex)}, {"categories", categories_to_json(cats)}});
    else write_explain_file(ex_out, ex);
    std::cout << "blocks=" << ex.size();
    for (auto k : kAllEdgeKinds) std::cout << ' ' << edge_kind_name(k) << '=' << cats[k];
    std::cout << " unattributed=" << cats.unattributed << '\n';
  });

  // refdisasm
  auto* rd_cmd = app.add_subcommand("refdisasm", "Run the reference disassembler");
  std::string rd_image, rd_mode = "recursive", rd_out, rd_image_offset = "1000";
  std::vector<std::string> rd_entries, rd_noreturn;
  bool rd_endbr = false, rd_epilogue = false, rd_no_skip = false;
  rd_cmd->add_option("--image", rd_image, "ELF file or raw code image")->required()->check(CLI::ExistingFile);
  rd_cmd->add_option("--image-offset", rd_image_offset, "Module offset (hex) of a raw image's first byte");
  rd_cmd->add_option("--mode", rd_mode)->check(CLI::IsMember({"linear", "recursive"}));
  rd_cmd->add_option("--entry", rd_entries, "Entry offset (hex), repeatable");
  rd_cmd->add_option("--noreturn", rd_noreturn, "Offset (hex) of a function that never returns, repeatable");
  rd_cmd->add_flag("--endbr", rd_endbr, "Scan for endbr64 landing pads");
  rd_cmd->add_flag("--epilogue-stop", rd_epilogue, "Ignore endbr64 in padding after an epilogue");
  rd_cmd->add_flag("--no-skip-byte", rd_no_skip, "Stop the linear sweep at the first invalid opcode");
  rd_cmd->add_option("--out", rd_out, "View file to write")->required();
  rd_cmd->callback([&] {
    auto img = load_image(rd_image, hex_arg(rd_image_offset, "--image-offset"));
    refdisasm::HeuristicConfig cfg;
    cfg.endbr_scan = rd_endbr;
    cfg.epilogue_stop = rd_epilogue;
    cfg.skip_byte_on_invalid = !rd_no_skip;
    for (const auto& n : rd_noreturn) cfg.noreturn_targets.push_back(hex_arg(n, "--noreturn"));
    std::vector<std::uint64_t> entries;
    for (const auto& e : rd_entries) entries.push_back(hex_arg(e, "--entry"));
    DisasmView view;
    if (rd_mode == "linear") {
      view = refdisasm::linear_sweep(img.image, entries.empty() ? img.image.base_offset : entries.front(), cfg);
    } else {
      if (entries.empty()) entries.push_back(img.entry);
      view = refdisasm::recursive_descent(img.image, entries, cfg);
    }
    view.source_name = "refdisasm-" + rd_mode + (rd_endbr ? "-endbr" : "") + (rd_epilogue ? "-epilogue" : "");
    write_view_file(rd_out, view);
    std::cerr << view.size() << " records\n";
  });

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Hand-built test programs with ground truth");
  corpus_cmd->require_subcommand(1);
  auto* corpus_list = corpus_cmd->add_subcommand("list", "List corpus cases");
  corpus_list->callback([] {
    for (const auto& n : corpus::case_names()) std::cout << n << '\n';
  });
  auto* corpus_gen = corpus_cmd->add_subcommand("gen", "Write image, truth view, expected trace and ELF");
  std::vector<std::string> gen_names;
  std::string gen_dir, gen_base;
  bool gen_pie = false, gen_all = false;
  corpus_gen->add_option("names", gen_names, "Case names");
  corpus_gen->add_flag("--all", gen_all, "Generate every case");
  corpus_gen->add_option("--out-dir", gen_dir)->required();
  corpus_gen->add_option("--base", gen_base, "Load address (hex) of the ELF");
  corpus_gen->add_flag("--pie", gen_pie, "Emit a position-independent ELF");
  corpus_gen->callback([&] {
    if (gen_all) gen_names = corpus::case_names();
    if (gen_names.empty()) usage("name a case or pass --all");
    fs::create_directories(gen_dir);
    corpus::ElfOptions opts;
    if (!gen_base.empty()) opts.base = hex_arg(gen_base, "--base");
    opts.pie = gen_pie;
    for (const auto& name : gen_names) {
      auto c = corpus::gen(name);
      fs::path dir(gen_dir);
      elf::write_file(dir / (name + ".img"), c.image.bytes);
      auto truth = c.truth_view();
      truth.source_name = "ground-truth";
      write_view_file(dir / (name + ".truth.idf"), truth);
      write_trace_file(dir / (name + ".trace"), corpus::expected_trace_for(c, c.runs.front(), opts.base));
      elf::write_file(dir / (name + ".elf"), corpus::emit_elf(c, opts), true);
      std::cout << name << '\n';
    }
  });

  // patch
  auto* patch_cmd = app.add_subcommand("patch", "Plant halting markers in missed code");
  patch_cmd->require_subcommand(1);
  auto* plan_cmd = patch_cmd->add_subcommand("plan", "Plan same-length marker patches");
  std::string plan_trace, plan_view, plan_image, plan_out, plan_marker = "ud2", plan_strategy = "block",
                                                         plan_image_offset = "1000";
  plan_cmd->add_option("--trace", plan_trace)->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--view", plan_view)->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--image", plan_image, "ELF file or raw code image")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--image-offset", plan_image_offset, "Module offset (hex) of a raw image's first byte");
  plan_cmd->add_option("--marker", plan_marker)->check(CLI::IsMember({"ud2", "int3"}));
  plan_cmd->add_option("--strategy", plan_strategy)->check(CLI::IsMember({"block", "desync"}));
  plan_cmd->add_option("--out", plan_out, "Plan file")->required();
  plan_cmd->callback([&] {
    auto trace = filter_module(read_trace_file(plan_trace).trace, 0);
    auto view = load_view(plan_view);
    auto img = load_image(plan_image, hex_arg(plan_image_offset, "--image-offset"));
    auto report = evaluate(trace, view);
    patch::PlanOptions opts;
    opts.prefer_int3 = plan_marker == "int3";
    opts.strategy = plan_strategy == "desync" ? patch::Strategy::Desync : patch::Strategy::Block;
    opts.trace = &trace;
    auto plans = patch::plan(report, explain(trace, view, report), img.image, opts);
    patch::write_plans_file(plan_out, plans);
    for (const auto& p : plans)
      std::cout << to_hex(p.target_loc.offset) << ' ' << patch::to_string(p.rationale) << ' ' << p.missed_inst_count
                << '\n';
  });
  auto* apply_cmd = patch_cmd->add_subcommand("apply", "Apply one plan to an ELF or raw image");
  std::string apply_plans, apply_in, apply_out, apply_image_offset = "1000";
  std::size_t apply_index = 0;
  apply_cmd->add_option("--plans", apply_plans)->required()->check(CLI::ExistingFile);
  apply_cmd->add_option("--index", apply_index, "Which plan (default: the top-ranked)");
  apply_cmd->add_option("--in", apply_in)->required()->check(CLI::ExistingFile);
  apply_cmd->add_option("--image-offset", apply_image_offset, "Module offset (hex) of a raw image's first byte");
  apply_cmd->add_option("--out", apply_out)->required();
  apply_cmd->callback([&] {
    auto plans = patch::read_plans_file(apply_plans);
    const auto& p = plans[pick_plan(plans, apply_index)];
    auto file = elf::read_file(apply_in);
    if (is_elf(file)) {
      elf::write_file(apply_out, patch::apply_elf(file, p), true);
    } else {
      CodeImage img{hex_arg(apply_image_offset, "--image-offset"), file};
      elf::write_file(apply_out, patch::apply(img, p).bytes);
    }
    std::cout << "patched " << to_hex(p.patch_offset) << ' ' << to_hex(p.original_bytes) << " -> "
              << to_hex(p.patch_bytes) << '\n';
  });
  auto* verify_cmd = patch_cmd->add_subcommand("verify", "Check that a planted marker runs but stays unseen");
  std::string verify_elf, verify_view, verify_plans;
  std::size_t verify_index = 0;
  unsigned verify_timeout = 60;
  std::vector<std::string> verify_args;
  verify_cmd->add_option("--elf", verify_elf, "Patched ELF")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--view", verify_view, "View of the patched binary")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--plans", verify_plans)->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--index", verify_index);
  verify_cmd->add_option("--timeout", verify_timeout);
  verify_cmd->add_option("args", verify_args, "Arguments for the program (after --)");
  verify_cmd->callback([&] {
    if (!tracer::platform_supported()) usage("verification traces the binary and needs Linux on x86-64");
    auto plans = patch::read_plans_file(verify_plans);
    const auto& p = plans[pick_plan(plans, verify_index)];
    tracer::RunSpec run;
    run.args = verify_args;
    run.timeout_s = verify_timeout;
    run.stdout_file = "/dev/null";
    std::cout << patch::to_string(patch::verify(verify_elf, load_view(verify_view), p, run)) << '\n';
  });

  // batch
  auto* batch_cmd = app.add_subcommand("batch", "Evaluate many (trace, view) pairs");
  std::string batch_spec_file, batch_dir, batch_format = "table";
  unsigned batch_jobs = 1;
  batch_cmd->add_option("--spec", batch_spec_file, "CSV: trace,view,tool,target")->required()->check(CLI::ExistingFile);
  batch_cmd->add_option("--out-dir", batch_dir)->required();
  batch_cmd->add_option("--format", batch_format)->check(CLI::IsMember({"csv", "json", "table"}));
  batch_cmd->add_option("--jobs", batch_jobs)->check(CLI::PositiveNumber);
  batch_cmd->callback([&] {
    batch::BatchSpec spec;
    spec.entries = batch::read_entries_file(batch_spec_file);
    spec.output_dir = batch_dir;
    spec.format = *batch::parse_format(batch_format);
    spec.jobs = batch_jobs;
    auto result = batch::run_batch(spec);
    for (const auto& o : result.outcomes)
      if (o.error) std::cerr << "failed: " << o.entry.trace_file.string() << " / " << o.entry.tool << ": " << *o.error << '\n';
    batch::write_summary(std::cout, result.summary, spec.format, use_color(1));
    if (result.failures) status = kExitFailure;
  });

  // report
  auto* report_cmd = app.add_subcommand("report", "Summarize report files (or batch output directories)");
  std::vector<std::string> report_in;
  std::string report_format = "table";
  std::vector<std::string> report_diff;
  report_cmd->add_option("inputs", report_in, "Report CSV files or directories")->check(CLI::ExistingPath);
  report_cmd->add_option("--format", report_format)->check(CLI::IsMember({"csv", "json", "table"}));
  report_cmd->add_option("--diff", report_diff, "Two reports to compare")->expected(2)->check(CLI::ExistingFile);
  report_cmd->callback([&] {
    if (!report_diff.empty()) {
      write_delta_csv(std::cout, diff_reports(read_report_file(report_diff[0]), read_report_file(report_diff[1])));
      return;
    }
    if (report_in.empty()) usage("name report files or directories");
    std::vector<fs::path> files;
    for (const auto& in : report_in) {
      if (fs::is_directory(in)) {
        std::vector<fs::path> found;
        for (const auto& e : fs::directory_iterator(in)) {
          auto name = e.path().filename().string();
          if (name.size() > 11 && name.ends_with(".report.csv")) found.push_back(e.path());
        }
        std::sort(found.begin(), found.end());
        files.insert(files.end(), found.begin(), found.end());
      } else {
        files.emplace_back(in);
      }
    }
    std::vector<batch::EntryOutcome> outcomes;
    for (const auto& f : files) {
      batch::EntryOutcome o;
      o.report = read_report_file(f);
      o.entry.tool = o.report.tool;
      auto name = f.filename().string();
      if (name.ends_with(".report.csv")) {
        auto ex = f.parent_path() / (name.substr(0, name.size() - 11) + ".explain.csv");
        if (fs::exists(ex)) o.explanations = read_explain_file(ex, o.report.module);
      }
      outcomes.push_back(std::move(o));
    }
    batch::write_summary(std::cout, batch::summarize(outcomes), *batch::parse_format(report_format), use_color(1));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const Error& e) {
    bool color = use_color(2);
    std::cerr << (color ? "\x1b[31merror:\x1b[0m " : "error: ") << e.what() << '\n';
    return e.code() == ErrorCode::Usage ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return status;
}
