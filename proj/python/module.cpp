#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "tracebin/batch.hpp"
#include "tracebin/corpus.hpp"
#include "tracebin/disasm_view.hpp"
#include "tracebin/error.hpp"
#include "tracebin/evaluator.hpp"
#include "tracebin/explain.hpp"
#include "tracebin/patch.hpp"
#include "tracebin/refdisasm.hpp"
#include "tracebin/trace_io.hpp"
#include "tracebin/tracer.hpp"

namespace py = pybind11;
using namespace tracebin;

namespace {

py::bytes to_py(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_py(const py::bytes& b) {
  std::string s = b;
  return Bytes(s.begin(), s.end());
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::string trace_text(const TraceSet& t) { return trace_to_string(t); }

TraceSet trace_from_text(const std::string& text) {
  std::istringstream in(text);
  return read_trace(in).trace;
}

std::string view_text(const DisasmView& v) {
  std::ostringstream out;
  write_interchange(out, v);
  return out.str();
}

DisasmView view_from_text(const std::string& text, const std::string& format) {
  std::istringstream in(text);
  if (format == "objdump") return parse_objdump(in);
  if (format == "idf") return parse_interchange(in);
  throw Error(ErrorCode::Usage, "unknown view format " + format);
}

refdisasm::HeuristicConfig heuristics(bool endbr_scan, bool epilogue_stop, bool skip_byte,
                                      std::vector<std::uint64_t> noreturn) {
  refdisasm::HeuristicConfig cfg;
  cfg.endbr_scan = endbr_scan;
  cfg.epilogue_stop = epilogue_stop;
  cfg.skip_byte_on_invalid = skip_byte;
  cfg.noreturn_targets = std::move(noreturn);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_tracebin, m) {
  m.doc() = "Trace-based disassembler evaluation";

  // Messages start with the error code name, e.g. "MissingBase: ...".
  py::register_exception<Error>(m, "TracebinError", PyExc_RuntimeError);

  py::class_<TraceSet>(m, "TraceSet")
      .def(py::init<>())
      .def_static("from_text", &trace_from_text)
      .def_static("load", [](const std::filesystem::path& p) { return read_trace_file(p).trace; })
      .def("save", [](const TraceSet& t, const std::filesystem::path& p) { write_trace_file(p, t); })
      .def("to_text", &trace_text)
      .def("modules",
           [](const TraceSet& t) {
             py::list out;
             for (const auto& mi : t.modules())
               out.append(py::dict(py::arg("id") = mi.id, py::arg("path") = mi.path,
                                   py::arg("runtime_base") = mi.runtime_base, py::arg("text_start") = mi.text_start,
                                   py::arg("text_size") = mi.text_size));
             return out;
           })
      .def("instructions",
           [](const TraceSet& t) {
             py::list out;
             for (const auto& [loc, rec] : t.insts()) out.append(py::make_tuple(loc.module, loc.offset, to_py(rec.bytes)));
             return out;
           })
      .def("edges",
           [](const TraceSet& t) {
             py::list out;
             for (const auto& e : t.edges())
               out.append(py::make_tuple(edge_kind_name(e.kind), e.src.module, e.src.offset, e.dst.module, e.dst.offset));
             return out;
           })
      .def("leaders",
           [](const TraceSet& t) {
             py::list out;
             for (const auto& l : t.leaders()) out.append(py::make_tuple(l.module, l.offset));
             return out;
           })
      .def("__len__", [](const TraceSet& t) { return t.insts().size(); })
      .def("__eq__", [](const TraceSet& a, const TraceSet& b) { return a == b; });

  py::class_<DisasmView>(m, "DisasmView")
      .def(py::init<>())
      .def_static("from_text", &view_from_text, py::arg("text"), py::arg("format") = "idf")
      .def_static("load", [](const std::filesystem::path& p) { return read_view_file(p); })
      .def("save", [](const DisasmView& v, const std::filesystem::path& p) { write_view_file(p, v); })
      .def("to_text", &view_text)
      .def_readwrite("source_name", &DisasmView::source_name)
      .def_readwrite("declared_base", &DisasmView::declared_base)
      .def("offsets",
           [](const DisasmView& v) {
             std::vector<std::uint64_t> out;
             for (const auto& [off, rec] : v.insts()) out.push_back(off);
             return out;
           })
      .def("rebase", [](const DisasmView& v, std::optional<std::uint64_t> base) { return base ? rebase(v, *base) : rebase(v); },
           py::arg("base") = py::none())
      .def("__len__", &DisasmView::size)
      .def("__contains__", [](const DisasmView& v, std::uint64_t off) { return v.find(off) != nullptr; });

  m.def("preset_base", [](const std::string& name) {
    auto p = parse_preset(name);
    if (!p) throw Error(ErrorCode::Usage, "unknown preset " + name);
    return preset_base(*p);
  });

  py::class_<ErrorReport>(m, "ErrorReport")
      .def_readwrite("target", &ErrorReport::target)
      .def_readwrite("tool", &ErrorReport::tool)
      .def_readonly("module", &ErrorReport::module)
      .def_readonly("missing_count", &ErrorReport::missing_count)
      .def_readonly("mismatch_count", &ErrorReport::mismatch_count)
      .def_readonly("length_only_matches", &ErrorReport::length_only_matches)
      .def_property_readonly("total", &ErrorReport::total)
      .def_property_readonly("bucket", [](const ErrorReport& r) { return std::string(1, bucket_letter(r.bucket)); })
      .def("error_locations",
           [](const ErrorReport& r) {
             py::list out;
             for (const auto& e : r.errors)
               out.append(py::make_tuple(e.loc.offset, e.kind == ErrorKind::Missing ? "MISSING" : "MISMATCH"));
             return out;
           })
      .def("to_csv",
           [](const ErrorReport& r) {
             std::ostringstream out;
             write_report_csv(out, r);
             return out.str();
           })
      .def_static("from_csv",
                  [](const std::string& text) {
                    std::istringstream in(text);
                    return read_report_csv(in);
                  })
      .def("to_json", [](const ErrorReport& r) { return json_to_py(report_to_json(r)); });

  m.def("evaluate",
        [](const TraceSet& t, const DisasmView& v, const std::string& target, ModuleId module) {
          return evaluate(t, v, {target, module});
        },
        py::arg("trace"), py::arg("view"), py::arg("target") = "", py::arg("module") = 0);
  m.def("bucketize", [](std::uint64_t n) { return std::string(1, bucket_letter(bucketize(n))); });
  m.def("merge", [](const std::vector<TraceSet>& traces) { return merge(traces); });
  m.def("diff_reports", [](const ErrorReport& a, const ErrorReport& b) {
    auto d = diff_reports(a, b);
    auto offs = [](const std::set<NormAddr>& s) {
      std::vector<std::uint64_t> out;
      for (auto l : s) out.push_back(l.offset);
      return out;
    };
    return py::dict(py::arg("only_a") = offs(d.only_a), py::arg("only_b") = offs(d.only_b),
                    py::arg("both") = offs(d.both));
  });

  py::class_<Explanation>(m, "Explanation")
      .def_property_readonly("block_leader", [](const Explanation& e) { return e.block_leader.offset; })
      .def_property_readonly("verdict",
                             [](const Explanation& e) {
                               return e.verdict == Verdict::TargetError ? "TARGET_ERROR" : "SOURCE_ERROR";
                             })
      .def_property_readonly("via_kind",
                             [](const Explanation& e) -> std::optional<std::string> {
                               if (!e.via_edge) return std::nullopt;
                               return edge_kind_name(e.via_edge->kind);
                             })
      .def_property_readonly("via_src",
                             [](const Explanation& e) -> std::optional<std::uint64_t> {
                               if (!e.via_edge) return std::nullopt;
                               return e.via_edge->src.offset;
                             })
      .def_readonly("missed_inst_count", &Explanation::missed_inst_count);

  m.def("explain", &explain, py::arg("trace"), py::arg("view"), py::arg("report"));
  m.def("categorize", [](const std::vector<Explanation>& ex) { return json_to_py(categories_to_json(categorize(ex))); });

  m.def("linear_sweep",
        [](const py::bytes& image, std::uint64_t image_offset, bool skip_byte) {
          CodeImage img{image_offset, from_py(image)};
          return refdisasm::linear_sweep(img, image_offset, heuristics(false, false, skip_byte, {}));
        },
        py::arg("image"), py::arg("image_offset") = corpus::kTextStart, py::arg("skip_byte") = true);
  m.def("recursive_descent",
        [](const py::bytes& image, std::uint64_t image_offset, std::vector<std::uint64_t> entries, bool endbr_scan,
           bool epilogue_stop, std::vector<std::uint64_t> noreturn) {
          CodeImage img{image_offset, from_py(image)};
          if (entries.empty()) entries.push_back(image_offset);
          return refdisasm::recursive_descent(img, entries, heuristics(endbr_scan, epilogue_stop, true, noreturn));
        },
        py::arg("image"), py::arg("image_offset") = corpus::kTextStart, py::arg("entries") = std::vector<std::uint64_t>{},
        py::arg("endbr_scan") = false, py::arg("epilogue_stop") = false,
        py::arg("noreturn") = std::vector<std::uint64_t>{});

  py::class_<corpus::CorpusCase>(m, "CorpusCase")
      .def_readonly("name", &corpus::CorpusCase::name)
      .def_readonly("entry", &corpus::CorpusCase::entry)
      .def_readonly("labels", &corpus::CorpusCase::labels)
      .def_readonly("expected_trace", &corpus::CorpusCase::expected_trace)
      .def_property_readonly("image", [](const corpus::CorpusCase& c) { return to_py(c.image.bytes); })
      .def_property_readonly("image_offset", [](const corpus::CorpusCase& c) { return c.image.base_offset; })
      .def("truth_view", &corpus::CorpusCase::truth_view)
      .def("elf",
           [](const corpus::CorpusCase& c, std::uint64_t base, bool pie) {
             return to_py(corpus::emit_elf(c, {base, pie}));
           },
           py::arg("base") = corpus::kDefaultBase, py::arg("pie") = false);
  m.def("corpus_names", &corpus::case_names);
  m.def("corpus_case", [](const std::string& name) { return corpus::gen(name); });

  py::class_<patch::PatchPlan>(m, "PatchPlan")
      .def_property_readonly("target", [](const patch::PatchPlan& p) { return p.target_loc.offset; })
      .def_readonly("patch_offset", &patch::PatchPlan::patch_offset)
      .def_property_readonly("original_bytes", [](const patch::PatchPlan& p) { return to_py(p.original_bytes); })
      .def_property_readonly("patch_bytes", [](const patch::PatchPlan& p) { return to_py(p.patch_bytes); })
      .def_property_readonly("marker", [](const patch::PatchPlan& p) { return patch::to_string(p.marker); })
      .def_property_readonly("rationale", [](const patch::PatchPlan& p) { return patch::to_string(p.rationale); })
      .def_readonly("missed_inst_count", &patch::PatchPlan::missed_inst_count);
  m.def("plan_patches",
        [](const ErrorReport& r, const std::vector<Explanation>& ex, const py::bytes& image, std::uint64_t image_offset,
           bool prefer_int3) {
          patch::PlanOptions opts;
          opts.prefer_int3 = prefer_int3;
          return patch::plan(r, ex, CodeImage{image_offset, from_py(image)}, opts);
        },
        py::arg("report"), py::arg("explanations"), py::arg("image"), py::arg("image_offset") = corpus::kTextStart,
        py::arg("prefer_int3") = false);
  m.def("apply_patch",
        [](const py::bytes& image, std::uint64_t image_offset, const patch::PatchPlan& p) {
          return to_py(patch::apply(CodeImage{image_offset, from_py(image)}, p).bytes);
        },
        py::arg("image"), py::arg("image_offset"), py::arg("plan"));
  m.def("apply_patch_elf", [](const py::bytes& elf, const patch::PatchPlan& p) {
    return to_py(patch::apply_elf(from_py(elf), p));
  });
  m.def("verify_patch",
        [](const std::filesystem::path& elf, const DisasmView& view, const patch::PatchPlan& p,
           std::vector<std::string> args) {
          tracer::RunSpec run;
          run.args = std::move(args);
          run.stdout_file = "/dev/null";
          py::gil_scoped_release release;
          return patch::to_string(patch::verify(elf, view, p, run));
        },
        py::arg("elf"), py::arg("view"), py::arg("plan"), py::arg("args") = std::vector<std::string>{});

  m.def("platform_supported", &tracer::platform_supported);
  m.def("collect",
        [](const std::string& program, std::vector<std::string> args, unsigned timeout, bool main_module_only,
           const std::string& mode) {
          tracer::RunSpec spec;
          spec.program_path = program;
          spec.args = std::move(args);
          spec.timeout_s = timeout;
          spec.stdout_file = "/dev/null";
          tracer::TraceOptions opts;
          opts.main_module_only = main_module_only;
          opts.mode = mode == "full" ? tracer::StepMode::Full : tracer::StepMode::BlockSkip;
          tracer::TraceResult r;
          {
            py::gil_scoped_release release;
            r = tracer::collect(spec, opts);
          }
          py::dict info(py::arg("partial") = r.partial, py::arg("partial_reason") = r.partial_reason,
                        py::arg("exit_code") = r.exit_code, py::arg("term_signal") = r.term_signal,
                        py::arg("steps") = r.steps);
          return py::make_tuple(r.trace, info);
        },
        py::arg("program"), py::arg("args") = std::vector<std::string>{}, py::arg("timeout") = 60,
        py::arg("main_module_only") = true, py::arg("mode") = "block");
}
