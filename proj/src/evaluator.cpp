#include "tracebin/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "tracebin/error.hpp"
#include "tracebin/trace_io.hpp"

namespace tracebin {

Bucket bucketize(std::uint64_t total_errors) {
  if (total_errors == 0) return Bucket::Z;
  if (total_errors <= 80) return Bucket::A;
  if (total_errors <= 410) return Bucket::B;
  if (total_errors <= 1009) return Bucket::C;
  return Bucket::D;
}

char bucket_letter(Bucket b) { return "ZABCD"[static_cast<int>(b)]; }

std::optional<Bucket> bucket_from_letter(char c) {
  switch (c) {
    case 'Z': return Bucket::Z;
    case 'A': return Bucket::A;
    case 'B': return Bucket::B;
    case 'C': return Bucket::C;
    case 'D': return Bucket::D;
  }
  return std::nullopt;
}

namespace {

ViewClaim claim_of(const ViewRecord& rec) { return {rec.offset, rec.len, rec.bytes}; }

void finish(ErrorReport& report) {
  report.missing_count = 0;
  report.mismatch_count = 0;
  for (const auto& e : report.errors) (e.kind == ErrorKind::Missing ? report.missing_count : report.mismatch_count)++;
  report.bucket = bucketize(report.total());
}

}  // namespace

ErrorReport evaluate(const TraceSet& trace, const DisasmView& view, const EvalOptions& opts) {
  if (!trace.find_module(opts.module))
    throw Error(ErrorCode::ModuleMismatch, "trace has no module " + std::to_string(opts.module));
  ErrorReport report;
  report.target = opts.target.empty() ? trace.find_module(opts.module)->path : opts.target;
  report.tool = view.source_name;
  report.module = opts.module;

  for (const auto& [loc, rec] : trace.insts()) {
    if (loc.module != opts.module) continue;
    const ViewRecord* v = view.find(loc.offset);
    if (v) {
      bool same = v->len == rec.len() && (!v->bytes || *v->bytes == rec.bytes);
      if (same) {
        if (!v->bytes) ++report.length_only_matches;
        continue;
      }
      report.errors.push_back({loc, ErrorKind::Mismatch, rec, claim_of(*v)});
      continue;
    }
    ErrorRecord err{loc, ErrorKind::Missing, rec, std::nullopt};
    if (const ViewRecord* cover = view.covering(loc.offset)) err.view_claim = claim_of(*cover);
    report.errors.push_back(std::move(err));
  }
  finish(report);
  return report;
}

ReportDelta diff_reports(const ErrorReport& a, const ErrorReport& b) {
  if (a.target != b.target || a.module != b.module)
    throw Error(ErrorCode::TargetMismatch, "reports describe '" + a.target + "' and '" + b.target + "'");
  std::set<NormAddr> sa, sb;
  for (const auto& e : a.errors) sa.insert(e.loc);
  for (const auto& e : b.errors) sb.insert(e.loc);
  ReportDelta d;
  std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(d.only_a, d.only_a.end()));
  std::set_difference(sb.begin(), sb.end(), sa.begin(), sa.end(), std::inserter(d.only_b, d.only_b.end()));
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(d.both, d.both.end()));
  return d;
}

namespace {

const char* kind_name(ErrorKind k) { return k == ErrorKind::Missing ? "MISSING" : "MISMATCH"; }

std::optional<ErrorKind> kind_from_name(std::string_view s) {
  if (s == "MISSING") return ErrorKind::Missing;
  if (s == "MISMATCH") return ErrorKind::Mismatch;
  return std::nullopt;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_report(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::MalformedReport, "line " + std::to_string(line_no) + ": " + msg);
}

}  // namespace

void write_report_csv(std::ostream& out, const ErrorReport& report) {
  out << "# tracebin-report target=" << escape_path(report.target) << " tool=" << escape_path(report.tool)
      << " module=" << report.module << " missing=" << report.missing_count << " mismatch=" << report.mismatch_count
      << " total=" << report.total() << " bucket=" << bucket_letter(report.bucket)
      << " length_only=" << report.length_only_matches << '\n';
  out << "loc_hex,kind,traced_len,traced_bytes,view_claim\n";
  for (const auto& e : report.errors) {
    out << to_hex(e.loc.offset) << ',' << kind_name(e.kind) << ',' << e.traced.len() << ',' << to_hex(e.traced.bytes)
        << ',';
    if (e.view_claim) {
      out << to_hex(e.view_claim->offset) << ':' << e.view_claim->len << ':';
      if (e.view_claim->bytes) out << to_hex(*e.view_claim->bytes);
    }
    out << '\n';
  }
}

ErrorReport read_report_csv(std::istream& in) {
  ErrorReport report;
  bool have_summary = false;
  std::map<std::string, std::string> fields;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty()) continue;
    if (!have_summary) {
      if (!text.starts_with("# tracebin-report")) bad_report(line_no, "missing '# tracebin-report' summary line");
      for (auto tok : split_ws(text.substr(17))) {
        auto eq = tok.find('=');
        if (eq == std::string_view::npos) bad_report(line_no, "bad summary field '" + std::string(tok) + "'");
        fields[std::string(tok.substr(0, eq))] = std::string(tok.substr(eq + 1));
      }
      have_summary = true;
      continue;
    }
    if (text.starts_with("loc_hex,") || text.front() == '#') continue;
    auto cols = split_commas(text);
    if (cols.size() != 5) bad_report(line_no, "expected 5 columns");
    auto off = parse_hex_u64(cols[0]);
    auto kind = kind_from_name(cols[1]);
    auto len = parse_dec_u64(cols[2]);
    auto bytes = parse_hex_bytes(cols[3]);
    if (!off || !kind || !len || !bytes || bytes->size() != *len) bad_report(line_no, "bad error row");
    ErrorRecord e;
    e.kind = *kind;
    e.loc = {0, *off};
    e.traced = {e.loc, *bytes};
    if (!cols[4].empty()) {
      auto c1 = cols[4].find(':');
      auto c2 = c1 == std::string_view::npos ? c1 : cols[4].find(':', c1 + 1);
      if (c2 == std::string_view::npos) bad_report(line_no, "bad view_claim");
      auto coff = parse_hex_u64(cols[4].substr(0, c1));
      auto clen = parse_dec_u64(cols[4].substr(c1 + 1, c2 - c1 - 1));
      if (!coff || !clen) bad_report(line_no, "bad view_claim");
      ViewClaim claim{*coff, static_cast<std::size_t>(*clen), std::nullopt};
      auto cb = cols[4].substr(c2 + 1);
      if (!cb.empty()) {
        claim.bytes = parse_hex_bytes(cb);
        if (!claim.bytes) bad_report(line_no, "bad view_claim bytes");
      }
      e.view_claim = std::move(claim);
    }
    report.errors.push_back(std::move(e));
  }
  if (!have_summary) throw Error(ErrorCode::MalformedReport, "empty report");

  auto num = [&](const char* key) -> std::uint64_t {
    auto it = fields.find(key);
    if (it == fields.end()) return 0;
    auto v = parse_dec_u64(it->second);
    if (!v) throw Error(ErrorCode::MalformedReport, std::string("bad summary value for ") + key);
    return *v;
  };
  report.target = unescape_path(fields["target"]);
  report.tool = unescape_path(fields["tool"]);
  report.module = static_cast<ModuleId>(num("module"));
  report.length_only_matches = num("length_only");
  for (auto& e : report.errors) {
    e.loc.module = report.module;
    e.traced.loc.module = report.module;
  }
  std::sort(report.errors.begin(), report.errors.end(), [](const auto& a, const auto& b) { return a.loc < b.loc; });
  finish(report);
  if (fields.count("total") && num("total") != report.total())
    throw Error(ErrorCode::MalformedReport, "summary total disagrees with row count");
  return report;
}

ErrorReport read_report_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_report_csv(in);
}

void write_report_file(const std::filesystem::path& path, const ErrorReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_report_csv(out, report);
}

nlohmann::json report_to_json(const ErrorReport& report) {
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : report.errors) {
    nlohmann::json row{{"loc", to_hex(e.loc.offset)},
                       {"kind", kind_name(e.kind)},
                       {"traced_len", e.traced.len()},
                       {"traced_bytes", to_hex(e.traced.bytes)}};
    if (e.view_claim) {
      row["view_claim"] = {{"offset", to_hex(e.view_claim->offset)}, {"len", e.view_claim->len}};
      if (e.view_claim->bytes) row["view_claim"]["bytes"] = to_hex(*e.view_claim->bytes);
    }
    errors.push_back(std::move(row));
  }
  return {{"target", report.target},
          {"tool", report.tool},
          {"module", report.module},
          {"missing", report.missing_count},
          {"mismatch", report.mismatch_count},
          {"total", report.total()},
          {"bucket", std::string(1, bucket_letter(report.bucket))},
          {"length_only", report.length_only_matches},
          {"errors", std::move(errors)}};
}

ErrorReport report_from_json(const nlohmann::json& j) {
  try {
    ErrorReport report;
    report.target = j.at("target").get<std::string>();
    report.tool = j.at("tool").get<std::string>();
    report.module = j.at("module").get<ModuleId>();
    report.length_only_matches = j.value("length_only", std::uint64_t{0});
    for (const auto& row : j.at("errors")) {
      auto off = parse_hex_u64(row.at("loc").get<std::string>());
      auto kind = kind_from_name(row.at("kind").get<std::string>());
      auto bytes = parse_hex_bytes(row.at("traced_bytes").get<std::string>());
      if (!off || !kind || !bytes) throw Error(ErrorCode::MalformedReport, "bad error row");
      ErrorRecord e{{report.module, *off}, *kind, {{report.module, *off}, *bytes}, std::nullopt};
      if (row.contains("view_claim")) {
        const auto& c = row["view_claim"];
        auto coff = parse_hex_u64(c.at("offset").get<std::string>());
        if (!coff) throw Error(ErrorCode::MalformedReport, "bad view_claim");
        ViewClaim claim{*coff, c.at("len").get<std::size_t>(), std::nullopt};
        if (c.contains("bytes")) claim.bytes = parse_hex_bytes(c["bytes"].get<std::string>());
        e.view_claim = std::move(claim);
      }
      report.errors.push_back(std::move(e));
    }
    std::sort(report.errors.begin(), report.errors.end(), [](const auto& a, const auto& b) { return a.loc < b.loc; });
    finish(report);
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedReport, e.what());
  }
}

void write_delta_csv(std::ostream& out, const ReportDelta& delta) {
  out << "loc_hex,side\n";
  std::map<NormAddr, const char*> rows;
  for (auto loc : delta.only_a) rows[loc] = "a";
  for (auto loc : delta.only_b) rows[loc] = "b";
  for (auto loc : delta.both) rows[loc] = "both";
  for (const auto& [loc, side] : rows) out << to_hex(loc.offset) << ',' << side << '\n';
}

}  // namespace tracebin
