#include "tracebin/explain.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <tuple>
#include <set>

#include "tracebin/error.hpp"

namespace tracebin {

namespace {

bool correct_in_view(const InstRecord& rec, const DisasmView& view) {
  const ViewRecord* v = view.find(rec.loc.offset);
  return v && v->len == rec.len() && (!v->bytes || *v->bytes == rec.bytes);
}

}  // namespace

std::vector<Explanation> explain(const TraceSet& trace, const DisasmView& view, const ErrorReport& report) {
  std::set<NormAddr> missing;
  for (const auto& e : report.errors) {
    const InstRecord* rec = trace.find_inst(e.loc);
    if (!rec || rec->bytes != e.traced.bytes)
      throw Error(ErrorCode::InconsistentInputs, "report location " + to_hex(e.loc.offset) + " is not in the trace");
    if (e.kind == ErrorKind::Missing) missing.insert(e.loc);
  }
  if (missing.empty()) return {};

  std::set<NormAddr> edge_srcs;
  std::map<NormAddr, std::vector<EdgeRecord>> inbound;
  for (const auto& edge : trace.edges()) {
    edge_srcs.insert(edge.src);
    inbound[edge.dst].push_back(edge);
  }

  std::vector<Explanation> out;
  std::optional<Explanation> current;
  const InstRecord* prev = nullptr;
  auto flush = [&] {
    if (current && current->missed_inst_count > 0) out.push_back(std::move(*current));
    current.reset();
  };

  for (const auto& [loc, rec] : trace.insts()) {
    if (loc.module != report.module) continue;
    bool starts = !prev || prev->loc.module != loc.module || prev->end() != loc.offset ||
                  trace.leaders().count(loc) || edge_srcs.count(prev->loc);
    if (starts) {
      flush();
      current.emplace();
      current->block_leader = loc;
      if (auto it = inbound.find(loc); it != inbound.end()) {
        for (const auto& edge : it->second) {
          const InstRecord* src = trace.find_inst(edge.src);
          if (src && src->loc.module == report.module && correct_in_view(*src, view))
            current->qualifying_edges.push_back(edge);
        }
      }
      std::sort(current->qualifying_edges.begin(), current->qualifying_edges.end(),
                [](const EdgeRecord& a, const EdgeRecord& b) {
                  return std::tie(a.src, a.kind) < std::tie(b.src, b.kind);
                });
      if (!current->qualifying_edges.empty()) {
        current->verdict = Verdict::TargetError;
        current->via_edge = current->qualifying_edges.front();
      }
    }
    if (missing.count(loc)) ++current->missed_inst_count;
    prev = &rec;
  }
  flush();
  return out;
}

CategoryCounts categorize(const std::vector<Explanation>& explanations) {
  CategoryCounts counts;
  for (const auto& e : explanations) {
    if (e.verdict == Verdict::TargetError && e.via_edge)
      counts.by_kind[static_cast<std::size_t>(e.via_edge->kind)] += e.missed_inst_count;
    else
      counts.unattributed += e.missed_inst_count;
  }
  return counts;
}

namespace {

const char* verdict_name(Verdict v) { return v == Verdict::TargetError ? "TARGET_ERROR" : "SOURCE_ERROR"; }

std::optional<EdgeKind> kind_from_name(std::string_view s) {
  for (auto k : kAllEdgeKinds)
    if (edge_kind_name(k) == s) return k;
  return std::nullopt;
}

}  // namespace

void write_explain_csv(std::ostream& out, const std::vector<Explanation>& explanations) {
  out << "leader_hex,verdict,kind,src_hex,dst_hex,missed_count\n";
  for (const auto& e : explanations) {
    out << to_hex(e.block_leader.offset) << ',' << verdict_name(e.verdict) << ',';
    if (e.via_edge)
      out << edge_kind_name(e.via_edge->kind) << ',' << to_hex(e.via_edge->src.offset) << ','
          << to_hex(e.via_edge->dst.offset);
    else
      out << ",,";
    out << ',' << e.missed_inst_count << '\n';
  }
}

std::vector<Explanation> read_explain_csv(std::istream& in, ModuleId module) {
  std::vector<Explanation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#' || text.starts_with("leader_hex,")) continue;
    std::vector<std::string_view> cols;
    std::size_t pos = 0;
    for (auto comma = text.find(','); ; comma = text.find(',', pos)) {
      cols.push_back(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    auto bad = [&] { throw Error(ErrorCode::MalformedReport, "explain line " + std::to_string(line_no)); };
    if (cols.size() != 6) bad();
    Explanation e;
    auto leader = parse_hex_u64(cols[0]);
    auto count = parse_dec_u64(cols[5]);
    if (!leader || !count) bad();
    e.block_leader = {module, *leader};
    e.missed_inst_count = *count;
    if (cols[1] == "TARGET_ERROR") {
      e.verdict = Verdict::TargetError;
      auto kind = kind_from_name(cols[2]);
      auto src = parse_hex_u64(cols[3]);
      auto dst = parse_hex_u64(cols[4]);
      if (!kind || !src || !dst) bad();
      e.via_edge = EdgeRecord{*kind, {module, *src}, {module, *dst}};
      e.qualifying_edges.push_back(*e.via_edge);
    } else if (cols[1] != "SOURCE_ERROR") {
      bad();
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Explanation> read_explain_file(const std::filesystem::path& path, ModuleId module) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_explain_csv(in, module);
}

void write_explain_file(const std::filesystem::path& path, const std::vector<Explanation>& explanations) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_explain_csv(out, explanations);
}

nlohmann::json explanations_to_json(const std::vector<Explanation>& explanations) {
  auto edge_json = [](const EdgeRecord& e) {
    return nlohmann::json{{"kind", edge_kind_name(e.kind)}, {"src", to_hex(e.src.offset)}, {"dst", to_hex(e.dst.offset)}};
  };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : explanations) {
    nlohmann::json row{{"leader", to_hex(e.block_leader.offset)},
                       {"verdict", verdict_name(e.verdict)},
                       {"missed_count", e.missed_inst_count}};
    if (e.via_edge) row["via_edge"] = edge_json(*e.via_edge);
    row["qualifying_edges"] = nlohmann::json::array();
    for (const auto& q : e.qualifying_edges) row["qualifying_edges"].push_back(edge_json(q));
    arr.push_back(std::move(row));
  }
  return arr;
}

nlohmann::json categories_to_json(const CategoryCounts& counts) {
  nlohmann::json j;
  for (auto k : kAllEdgeKinds) j[edge_kind_name(k)] = counts[k];
  j["unattributed"] = counts.unattributed;
  return j;
}

}  // namespace tracebin
