#include "tracebin/model.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_map>

#include "tracebin/error.hpp"

namespace tracebin {

char edge_kind_letter(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Cbr: return 'C';
    case EdgeKind::Direct: return 'D';
    case EdgeKind::Indirect: return 'I';
    case EdgeKind::Return: return 'R';
  }
  return '?';
}

std::optional<EdgeKind> edge_kind_from_letter(char letter) {
  switch (letter) {
    case 'C': return EdgeKind::Cbr;
    case 'D': return EdgeKind::Direct;
    case 'I': return EdgeKind::Indirect;
    case 'R': return EdgeKind::Return;
    default: return std::nullopt;
  }
}

std::string edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Cbr: return "cbr";
    case EdgeKind::Direct: return "direct";
    case EdgeKind::Indirect: return "indirect";
    case EdgeKind::Return: return "return";
  }
  return "?";
}

const ModuleInfo* TraceSet::find_module(ModuleId id) const {
  for (const auto& m : modules_)
    if (m.id == id) return &m;
  return nullptr;
}

const ModuleInfo* TraceSet::find_module(const std::string& path) const {
  for (const auto& m : modules_)
    if (m.path == path) return &m;
  return nullptr;
}

const InstRecord* TraceSet::find_inst(NormAddr loc) const {
  auto it = insts_.find(loc);
  return it == insts_.end() ? nullptr : &it->second;
}

void TraceSet::add_module(ModuleInfo info) {
  if (const auto* existing = find_module(info.id)) {
    if (*existing == info) return;
    throw Error(ErrorCode::AmbiguousModule,
                "module id " + std::to_string(info.id) + " already bound to " + existing->path);
  }
  modules_.push_back(std::move(info));
  std::sort(modules_.begin(), modules_.end(),
            [](const ModuleInfo& a, const ModuleInfo& b) { return a.id < b.id; });
}

bool TraceSet::add_inst(InstRecord rec) {
  if (rec.bytes.empty() || rec.bytes.size() > kMaxInstLen)
    throw Error(ErrorCode::InvalidTraceSet,
                "instruction length " + std::to_string(rec.bytes.size()) + " outside [1,15] at " +
                    to_hex(rec.loc.offset));
  auto [it, inserted] = insts_.try_emplace(rec.loc, rec);
  if (!inserted && it->second.bytes != rec.bytes)
    throw Error(ErrorCode::ConflictingInstruction,
                "module " + std::to_string(rec.loc.module) + " offset " + to_hex(rec.loc.offset) +
                    ": " + to_hex(it->second.bytes) + " vs " + to_hex(rec.bytes));
  return inserted;
}

bool TraceSet::add_edge(EdgeRecord edge) { return edges_.insert(edge).second; }

bool TraceSet::add_leader(NormAddr loc) { return leaders_.insert(loc).second; }

void TraceSet::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidTraceSet, msg); };

  for (std::size_t i = 1; i < modules_.size(); ++i)
    if (modules_[i].id == modules_[i - 1].id) fail("duplicate module id " + std::to_string(modules_[i].id));
  for (const auto& m : modules_) {
    if (m.text_size == 0) fail("module " + m.path + " has empty text");
    if (m.text_start + m.text_size < m.text_start) fail("module " + m.path + " text range overflows");
  }

  std::unordered_map<ModuleId, std::uint64_t> per_module;
  const InstRecord* prev = nullptr;
  for (const auto& [loc, rec] : insts_) {
    const auto* mod = find_module(loc.module);
    if (!mod) fail("instruction at " + to_hex(loc.offset) + " references unknown module " +
                   std::to_string(loc.module));
    if (loc.offset < mod->text_start || rec.end() > mod->text_end())
      fail("instruction at " + to_hex(loc.offset) + " lies outside the text of " + mod->path);
    if (prev && prev->loc.module == loc.module && prev->end() > loc.offset)
      fail("overlapping instructions at " + to_hex(prev->loc.offset) + " and " + to_hex(loc.offset));
    ++per_module[loc.module];
    prev = &rec;
  }
  for (const auto& [id, count] : per_module)
    if (count > find_module(id)->text_size) fail("instruction count exceeds text size");

  for (const auto& e : edges_)
    if (!contains(e.src) || !contains(e.dst))
      fail("edge " + to_hex(e.src.offset) + "->" + to_hex(e.dst.offset) + " has an untraced endpoint");
  for (const auto& l : leaders_)
    if (!contains(l)) fail("leader " + to_hex(l.offset) + " is not a traced instruction");
}

NormAddr normalize(std::uint64_t raw_addr, std::span<const ModuleInfo> modules) {
  const ModuleInfo* hit = nullptr;
  for (const auto& m : modules) {
    std::uint64_t lo = m.runtime_base + m.text_start;
    std::uint64_t hi = lo + m.text_size;
    if (raw_addr >= lo && raw_addr < hi) {
      if (hit)
        throw Error(ErrorCode::AmbiguousModule,
                    "address " + to_hex(raw_addr) + " is inside " + hit->path + " and " + m.path);
      hit = &m;
    }
  }
  if (!hit) throw Error(ErrorCode::NoModule, "address " + to_hex(raw_addr) + " is in no module");
  return {hit->id, raw_addr - hit->runtime_base};
}

std::uint64_t denormalize(NormAddr addr, std::span<const ModuleInfo> modules) {
  for (const auto& m : modules)
    if (m.id == addr.module) return m.runtime_base + addr.offset;
  throw Error(ErrorCode::NoModule, "unknown module id " + std::to_string(addr.module));
}

TraceSet merge(std::span<const TraceSet> traces) {
  struct PathInfo {
    ModuleInfo info;
    ModuleId preferred;
  };
  std::map<std::string, PathInfo> by_path;
  for (const auto& t : traces) {
    for (const auto& m : t.modules()) {
      auto [it, inserted] = by_path.try_emplace(m.path, PathInfo{m, m.id});
      if (inserted) continue;
      auto& seen = it->second;
      if (seen.info.text_start != m.text_start || seen.info.text_size != m.text_size)
        throw Error(ErrorCode::InvalidTraceSet, "module tables disagree on the text of " + m.path);
      seen.info.runtime_base = std::min(seen.info.runtime_base, m.runtime_base);
      seen.preferred = std::min(seen.preferred, m.id);
    }
  }

  // Each path keeps the smallest id it was ever known by unless another path
  // already claimed it. Ordering by (preferred id, path) keeps this
  // independent of input order.
  std::vector<PathInfo*> order;
  for (auto& [path, info] : by_path) order.push_back(&info);
  std::sort(order.begin(), order.end(), [](const PathInfo* a, const PathInfo* b) {
    return std::tie(a->preferred, a->info.path) < std::tie(b->preferred, b->info.path);
  });
  std::set<ModuleId> taken;
  std::map<std::string, ModuleId> new_id;
  for (auto* p : order) {
    ModuleId id = p->preferred;
    while (taken.count(id)) ++id;
    taken.insert(id);
    new_id[p->info.path] = id;
  }

  TraceSet out;
  for (auto& [path, p] : by_path) {
    ModuleInfo m = p.info;
    m.id = new_id[path];
    out.add_module(std::move(m));
  }
  for (const auto& t : traces) {
    std::unordered_map<ModuleId, ModuleId> remap;
    for (const auto& m : t.modules()) remap[m.id] = new_id[m.path];
    auto rekey = [&](NormAddr a) {
      auto it = remap.find(a.module);
      if (it == remap.end())
        throw Error(ErrorCode::InvalidTraceSet, "reference to unknown module " + std::to_string(a.module));
      return NormAddr{it->second, a.offset};
    };
    for (const auto& [loc, rec] : t.insts()) out.add_inst({rekey(loc), rec.bytes});
    for (const auto& e : t.edges()) out.add_edge({e.kind, rekey(e.src), rekey(e.dst)});
    for (const auto& l : t.leaders()) out.add_leader(rekey(l));
  }
  out.validate();
  return out;
}

TraceSet filter_module(const TraceSet& trace, ModuleId module) {
  TraceSet out;
  const auto* m = trace.find_module(module);
  if (!m) throw Error(ErrorCode::ModuleMismatch, "trace has no module " + std::to_string(module));
  out.add_module(*m);
  for (const auto& [loc, rec] : trace.insts())
    if (loc.module == module) out.add_inst(rec);
  for (const auto& e : trace.edges())
    if (e.src.module == module && e.dst.module == module) out.add_edge(e);
  for (const auto& l : trace.leaders())
    if (l.module == module) out.add_leader(l);
  return out;
}

}  // namespace tracebin
