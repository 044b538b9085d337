#include "tracebin/batch.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "tracebin/disasm_view.hpp"
#include "tracebin/error.hpp"
#include "tracebin/trace_io.hpp"

namespace tracebin::batch {

namespace fs = std::filesystem;

std::optional<Format> parse_format(std::string_view name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  if (name == "table") return Format::Table;
  return std::nullopt;
}

namespace {

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == ',') out.emplace_back();
    else out.back() += c;
  }
  for (auto& f : out) f = std::string(trim(f));
  return out;
}

}  // namespace

std::vector<BatchEntry> read_entries(std::istream& in, const fs::path& relative_to) {
  std::vector<BatchEntry> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    auto f = split_csv(text);
    if (!header) {
      if (f.size() < 3 || f[0] != "trace" || f[1] != "view" || f[2] != "tool")
        throw Error(ErrorCode::MalformedRecord, "batch spec must start with the header trace,view,tool,target");
      header = true;
      continue;
    }
    if (f.size() < 3 || f.size() > 4 || f[0].empty() || f[1].empty() || f[2].empty())
      throw Error(ErrorCode::MalformedRecord, "batch spec line " + std::to_string(line_no));
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() && !relative_to.empty() ? relative_to / path : path;
    };
    out.push_back({resolve(f[0]), resolve(f[1]), f[2], f.size() == 4 ? f[3] : ""});
  }
  if (out.empty()) throw Error(ErrorCode::MalformedRecord, "batch spec has no entries");
  return out;
}

std::vector<BatchEntry> read_entries_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_entries(in, path.parent_path());
}

std::string file_stem(std::string_view name) {
  std::string out;
  for (char c : name) {
    bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '.' ||
                c == '_';
    out += keep ? c : '_';
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<EntryOutcome>& outcomes) {
  std::map<std::string, SummaryRow> rows;
  for (const auto& o : outcomes) {
    if (o.error) continue;
    auto& row = rows[o.entry.tool];
    row.tool = o.entry.tool;
    ++row.targets;
    ++row.buckets[static_cast<std::size_t>(bucketize(o.report.total()))];
    row.total_errors += o.report.total();
    auto cats = categorize(o.explanations);
    for (std::size_t k = 0; k < cats.by_kind.size(); ++k) row.categories.by_kind[k] += cats.by_kind[k];
    row.categories.unattributed += cats.unattributed;
  }
  std::vector<SummaryRow> out;
  for (auto& [tool, row] : rows) out.push_back(std::move(row));
  return out;
}

nlohmann::json summary_to_json(const std::vector<SummaryRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json buckets;
    for (Bucket b : {Bucket::Z, Bucket::A, Bucket::B, Bucket::C, Bucket::D})
      buckets[std::string(1, bucket_letter(b))] = r[b];
    arr.push_back({{"tool", r.tool},
                   {"targets", r.targets},
                   {"buckets", buckets},
                   {"total_errors", r.total_errors},
                   {"categories", categories_to_json(r.categories)}});
  }
  return arr;
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows, Format format, bool color) {
  const std::vector<std::string> head = {"tool", "targets", "Z", "A", "B", "C", "D", "T",
                                         "cbr", "direct", "indirect", "return", "unattributed"};
  auto cells = [](const SummaryRow& r) {
    std::vector<std::string> c = {r.tool, std::to_string(r.targets)};
    for (auto n : r.buckets) c.push_back(std::to_string(n));
    c.push_back(std::to_string(r.total_errors));
    for (auto n : r.categories.by_kind) c.push_back(std::to_string(n));
    c.push_back(std::to_string(r.categories.unattributed));
    return c;
  };
  if (format == Format::Json) {
    out << summary_to_json(rows).dump(2) << '\n';
    return;
  }
  if (format == Format::Csv) {
    for (std::size_t i = 0; i < head.size(); ++i) out << (i ? "," : "") << head[i];
    out << '\n';
    for (const auto& r : rows) {
      auto c = cells(r);
      std::string tool = c[0];
      if (tool.find_first_of(",\"") != std::string::npos) {
        std::string q = "\"";
        for (char ch : tool) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        c[0] = q + "\"";
      }
      for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "," : "") << c[i];
      out << '\n';
    }
    return;
  }
  std::vector<std::vector<std::string>> table = {head};
  for (const auto& r : rows) table.push_back(cells(r));
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : table)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (r == 0 && color) out << "\x1b[1m";
    for (std::size_t i = 0; i < table[r].size(); ++i) {
      if (i) out << "  ";
      if (i == 0) out << std::left << std::setw(static_cast<int>(width[i])) << table[r][i];
      else out << std::right << std::setw(static_cast<int>(width[i])) << table[r][i];
    }
    if (r == 0 && color) out << "\x1b[0m";
    out << '\n';
  }
  if (rows.empty()) out << "(no successful entries)\n";
}

namespace {

EntryOutcome run_entry(const BatchEntry& entry) {
  EntryOutcome o{entry, std::nullopt, {}, {}};
  try {
    auto trace = read_trace_file(entry.trace_file).trace;
    auto view = read_view_file(entry.view_file);
    o.report = evaluate(trace, view, {entry.target, 0});
    o.report.tool = entry.tool;
    o.explanations = explain(trace, view, o.report);
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace

BatchResult run_batch(const BatchSpec& spec) {
  if (spec.entries.empty()) throw Error(ErrorCode::Usage, "batch has no entries");
  fs::create_directories(spec.output_dir);
  BatchResult result;
  result.outcomes.resize(spec.entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.entries.size(); i = next++) result.outcomes[i] = run_entry(spec.entries[i]);
  };
  unsigned jobs = std::clamp<unsigned>(spec.jobs, 1, static_cast<unsigned>(spec.entries.size()));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::map<std::string, std::vector<const EntryOutcome*>> by_target;
  for (auto& o : result.outcomes) {
    if (o.error) {
      ++result.failures;
      continue;
    }
    std::string stem = file_stem(o.report.target) + "__" + file_stem(o.entry.tool);
    write_report_file(spec.output_dir / (stem + ".report.csv"), o.report);
    write_explain_file(spec.output_dir / (stem + ".explain.csv"), o.explanations);
    if (spec.format == Format::Json) {
      write_text(spec.output_dir / (stem + ".report.json"), report_to_json(o.report).dump(2) + "\n");
      write_text(spec.output_dir / (stem + ".explain.json"), explanations_to_json(o.explanations).dump(2) + "\n");
    }
    by_target[o.report.target].push_back(&o);
  }
  for (auto& [target, list] : by_target) {
    std::sort(list.begin(), list.end(),
              [](const EntryOutcome* a, const EntryOutcome* b) { return a->entry.tool < b->entry.tool; });
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        if (list[i]->report.module != list[j]->report.module) continue;
        std::ostringstream delta;
        write_delta_csv(delta, diff_reports(list[i]->report, list[j]->report));
        write_text(spec.output_dir / (file_stem(target) + "__" + file_stem(list[i]->entry.tool) + "__vs__" +
                                      file_stem(list[j]->entry.tool) + ".delta.csv"),
                   delta.str());
      }
    }
  }

  result.summary = summarize(result.outcomes);
  const char* ext = spec.format == Format::Csv ? "csv" : spec.format == Format::Json ? "json" : "txt";
  std::ostringstream summary;
  write_summary(summary, result.summary, spec.format);
  write_text(spec.output_dir / (std::string("summary.") + ext), summary.str());

  nlohmann::json meta;
  meta["generated_at"] = utc_now();
  meta["jobs"] = jobs;
  meta["entries"] = spec.entries.size();
  meta["failures"] = nlohmann::json::array();
  for (std::size_t i = 0; i < result.outcomes.size(); ++i) {
    const auto& o = result.outcomes[i];
    if (o.error)
      meta["failures"].push_back({{"index", i},
                                  {"trace", o.entry.trace_file.string()},
                                  {"view", o.entry.view_file.string()},
                                  {"tool", o.entry.tool},
                                  {"error", *o.error}});
  }
  write_text(spec.output_dir / "batch.meta.json", meta.dump(2) + "\n");
  return result;
}

}  // namespace tracebin::batch
