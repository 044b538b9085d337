#include "tracebin/disasm_view.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "tracebin/error.hpp"

namespace tracebin {

void DisasmView::add(ViewRecord rec) {
  if (insts_.count(rec.offset))
    throw Error(ErrorCode::DuplicateOffset, "offset " + to_hex(rec.offset) + " appears twice");
  put(std::move(rec));
}

void DisasmView::put(ViewRecord rec) {
  if (rec.len == 0) throw Error(ErrorCode::MalformedRecord, "zero-length record at " + to_hex(rec.offset));
  if (rec.bytes && rec.bytes->size() != rec.len)
    throw Error(ErrorCode::MalformedRecord, "byte count disagrees with length at " + to_hex(rec.offset));
  insts_[rec.offset] = std::move(rec);
}

const ViewRecord* DisasmView::find(std::uint64_t offset) const {
  auto it = insts_.find(offset);
  return it == insts_.end() ? nullptr : &it->second;
}

const ViewRecord* DisasmView::covering(std::uint64_t offset) const {
  // Records are at most 15 bytes long, so only a short window can cover.
  auto it = insts_.lower_bound(offset);
  while (it != insts_.begin()) {
    --it;
    if (offset - it->first >= 16) break;
    if (it->second.end() > offset) return &it->second;
  }
  return nullptr;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> DisasmView::overlapping_records() const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  for (auto it = insts_.begin(); it != insts_.end(); ++it) {
    for (auto next = std::next(it); next != insts_.end() && next->first < it->second.end(); ++next)
      out.emplace_back(it->first, next->first);
  }
  return out;
}

namespace {

[[noreturn]] void malformed_line(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + msg);
}

// Byte tokens are even-length hex groups: "e8", "c5" or "450890ff4d0890".
std::optional<Bytes> parse_byte_tokens(const std::vector<std::string_view>& tokens) {
  Bytes out;
  for (auto tok : tokens) {
    auto b = parse_hex_bytes(tok);
    if (!b) return std::nullopt;
    out.insert(out.end(), b->begin(), b->end());
  }
  if (out.empty()) return std::nullopt;
  return out;
}

}  // namespace

DisasmView parse_objdump(std::istream& in, std::string source_name) {
  static const std::regex kLabel(R"(^\s*[0-9a-fA-F]+\s+<[^>]*>:\s*$)");
  static const std::regex kInst(R"(^\s*([0-9a-fA-F]+):(.*)$)");

  DisasmView view;
  view.source_name = std::move(source_name);
  std::optional<std::uint64_t> last_offset;
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text == "..." || text.starts_with("Disassembly of section") ||
        text.find("file format") != std::string_view::npos || std::regex_match(line, kLabel))
      continue;

    std::smatch m;
    if (!std::regex_match(line, m, kInst)) malformed_line(line_no, "unrecognized line '" + std::string(text) + "'");
    auto offset = parse_hex_u64(m[1].str());
    if (!offset) malformed_line(line_no, "bad address");
    std::string rest = m[2].str();

    std::optional<Bytes> bytes;
    std::string mnemonic;
    if (rest.find('\t') != std::string::npos) {
      // objdump proper: "\t<bytes> \t<mnemonic operands>"
      std::vector<std::string> fields;
      std::stringstream ss(rest);
      std::string field;
      while (std::getline(ss, field, '\t'))
        if (!trim(field).empty()) fields.push_back(field);
      if (fields.empty()) malformed_line(line_no, "missing instruction bytes");
      bytes = parse_byte_tokens(split_ws(fields[0]));
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (!mnemonic.empty()) mnemonic += ' ';
        mnemonic += std::string(trim(fields[i]));
      }
    } else {
      std::string_view body = trim(rest);
      auto gap = body.find("  ");
      if (gap != std::string_view::npos) {
        bytes = parse_byte_tokens(split_ws(body.substr(0, gap)));
        mnemonic = std::string(trim(body.substr(gap)));
      } else {
        // Single-space separation: leading hex tokens are bytes.
        auto tokens = split_ws(body);
        std::size_t n = 0;
        while (n < tokens.size() && parse_hex_bytes(tokens[n])) ++n;
        bytes = parse_byte_tokens({tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n)});
        for (std::size_t i = n; i < tokens.size(); ++i) {
          if (!mnemonic.empty()) mnemonic += ' ';
          mnemonic += std::string(tokens[i]);
        }
      }
    }
    if (!bytes) malformed_line(line_no, "bad instruction bytes");

    if (mnemonic.empty() && last_offset) {
      const ViewRecord* prev = view.find(*last_offset);
      if (prev && prev->end() == *offset) {
        ViewRecord merged = *prev;
        merged.bytes->insert(merged.bytes->end(), bytes->begin(), bytes->end());
        merged.len = merged.bytes->size();
        view.put(std::move(merged));
        continue;
      }
    }
    ViewRecord rec;
    rec.offset = *offset;
    rec.len = bytes->size();
    rec.bytes = std::move(bytes);
    if (!mnemonic.empty()) rec.mnemonic = mnemonic;
    try {
      view.add(std::move(rec));
    } catch (const Error& e) {
      malformed_line(line_no, e.what());
    }
    last_offset = *offset;
  }
  if (view.size() == 0) throw Error(ErrorCode::EmptyListing, "no instructions in listing");
  return view;
}

DisasmView parse_interchange(std::istream& in) {
  DisasmView view;
  bool have_base = false;
  std::string line;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& msg) {
    throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty()) continue;
    if (!have_base) {
      auto tok = split_ws(text);
      if (tok.size() != 2 || tok[0] != "BASE")
        throw Error(ErrorCode::MissingBase, "line " + std::to_string(line_no) + ": expected 'BASE <hex>'");
      auto base = parse_hex_u64(tok[1]);
      if (!base) throw Error(ErrorCode::MissingBase, "bad base value '" + std::string(tok[1]) + "'");
      view.declared_base = *base;
      have_base = true;
      continue;
    }
    if (text.front() == '#') {
      auto body = trim(text.substr(1));
      if (body.starts_with("tool ")) view.source_name = std::string(trim(body.substr(5)));
      continue;
    }

    std::optional<std::string> mnemonic;
    auto hash = text.find('#');
    std::string_view fields_text = text;
    if (hash != std::string_view::npos) {
      auto m = trim(text.substr(hash + 1));
      if (!m.empty()) mnemonic = std::string(m);
      fields_text = text.substr(0, hash);
    }
    auto tok = split_ws(fields_text);
    if (tok.size() < 2 || tok.size() > 3) bad("expected '<offset-hex> <len-dec> [<bytes-hex>]'");
    auto offset = parse_hex_u64(tok[0]);
    auto len = parse_dec_u64(tok[1]);
    if (!offset || !len || *len == 0) bad("bad offset or length");
    ViewRecord rec;
    rec.offset = *offset;
    rec.len = *len;
    if (tok.size() == 3) {
      rec.bytes = parse_hex_bytes(tok[2]);
      if (!rec.bytes) bad("bad byte field");
      if (rec.bytes->size() != rec.len) bad("byte count disagrees with length");
    }
    rec.mnemonic = std::move(mnemonic);
    if (view.find(rec.offset))
      throw Error(ErrorCode::DuplicateOffset,
                  "line " + std::to_string(line_no) + ": offset " + to_hex(rec.offset) + " appears twice");
    view.add(std::move(rec));
  }
  if (!have_base) throw Error(ErrorCode::MissingBase, "no BASE header");
  return view;
}

void write_interchange(std::ostream& out, const DisasmView& view) {
  out << "BASE " << to_hex(view.declared_base) << '\n';
  if (!view.source_name.empty()) out << "# tool " << view.source_name << '\n';
  for (const auto& [offset, rec] : view.insts()) {
    out << to_hex(offset) << ' ' << rec.len;
    if (rec.bytes) out << ' ' << to_hex(*rec.bytes);
    if (rec.mnemonic) out << " # " << *rec.mnemonic;
    out << '\n';
  }
}

DisasmView read_view_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_interchange(in);
}

void write_view_file(const std::filesystem::path& path, const DisasmView& view) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_interchange(out, view);
}

std::uint64_t preset_base(BasePreset preset) {
  switch (preset) {
    case BasePreset::None: return 0;
    case BasePreset::Ghidra: return 0x100000;
    case BasePreset::Angr: return 0x400000;
  }
  return 0;
}

std::optional<BasePreset> parse_preset(std::string_view name) {
  if (name == "none") return BasePreset::None;
  if (name == "ghidra") return BasePreset::Ghidra;
  if (name == "angr") return BasePreset::Angr;
  return std::nullopt;
}

DisasmView rebase(const DisasmView& view) { return rebase(view, view.declared_base); }

DisasmView rebase(DisasmView view, std::uint64_t declared_base) {
  DisasmView out;
  out.source_name = view.source_name;
  out.declared_base = 0;
  for (const auto& [offset, rec] : view.insts()) {
    if (offset < declared_base)
      throw Error(ErrorCode::UnderflowingOffset,
                  "offset " + to_hex(offset) + " is below the declared base " + to_hex(declared_base));
    ViewRecord moved = rec;
    moved.offset = offset - declared_base;
    out.put(std::move(moved));
  }
  return out;
}

}  // namespace tracebin
