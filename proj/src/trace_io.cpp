#include "tracebin/trace_io.hpp"

#include <fstream>
#include <sstream>

#include "tracebin/error.hpp"

namespace tracebin {

std::string escape_path(const std::string& path) {
  std::string out;
  for (unsigned char c : path) {
    if (c == '%' || c == ' ' || c < 0x20 || c == 0x7f) {
      static constexpr char kDigits[] = "0123456789ABCDEF";
      out.push_back('%');
      out.push_back(kDigits[c >> 4]);
      out.push_back(kDigits[c & 0xf]);
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string unescape_path(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      auto byte = parse_hex_bytes(text.substr(i + 1, 2));
      if (byte) {
        out.push_back(static_cast<char>((*byte)[0]));
        i += 2;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

namespace {

[[noreturn]] void malformed(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::MalformedTrace, "line " + std::to_string(line_no) + ": " + msg);
}

std::uint32_t parse_module_id(std::string_view tok, std::size_t line_no) {
  auto v = parse_dec_u64(tok);
  if (!v || *v > UINT32_MAX) malformed(line_no, "bad module id '" + std::string(tok) + "'");
  return static_cast<std::uint32_t>(*v);
}

std::uint64_t parse_hex_field(std::string_view tok, std::size_t line_no) {
  auto v = parse_hex_u64(tok);
  if (!v) malformed(line_no, "bad hex value '" + std::string(tok) + "'");
  return *v;
}

NormAddr parse_addr_pair(std::string_view tok, std::size_t line_no) {
  auto colon = tok.find(':');
  if (colon == std::string_view::npos) malformed(line_no, "expected <mod>:<off>");
  return {parse_module_id(tok.substr(0, colon), line_no), parse_hex_field(tok.substr(colon + 1), line_no)};
}

}  // namespace

TraceFile read_trace(std::istream& in) {
  TraceFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      auto body = trim(view.substr(1));
      if (body.starts_with("partial")) {
        file.partial = true;
        file.partial_reason = std::string(trim(body.substr(7)));
      }
      continue;
    }
    auto tok = split_ws(view);
    if (tok[0].size() != 1) malformed(line_no, "unknown record '" + std::string(tok[0]) + "'");
    try {
      switch (tok[0][0]) {
        case 'M': {
          if (tok.size() != 6) malformed(line_no, "M expects 5 fields");
          file.trace.add_module({parse_module_id(tok[1], line_no), unescape_path(tok[2]),
                                 parse_hex_field(tok[3], line_no), parse_hex_field(tok[4], line_no),
                                 parse_hex_field(tok[5], line_no)});
          break;
        }
        case 'I': {
          if (tok.size() != 5) malformed(line_no, "I expects 4 fields");
          auto len = parse_dec_u64(tok[3]);
          auto bytes = parse_hex_bytes(tok[4]);
          if (!len || !bytes) malformed(line_no, "bad length or bytes");
          if (bytes->size() != *len) malformed(line_no, "length does not match byte count");
          file.trace.add_inst({{parse_module_id(tok[1], line_no), parse_hex_field(tok[2], line_no)},
                               std::move(*bytes)});
          break;
        }
        case 'E': {
          if (tok.size() != 4 || tok[1].size() != 1) malformed(line_no, "E expects kind and two addresses");
          auto kind = edge_kind_from_letter(tok[1][0]);
          if (!kind) malformed(line_no, "unknown edge kind '" + std::string(tok[1]) + "'");
          file.trace.add_edge({*kind, parse_addr_pair(tok[2], line_no), parse_addr_pair(tok[3], line_no)});
          break;
        }
        case 'B': {
          if (tok.size() != 3) malformed(line_no, "B expects 2 fields");
          file.trace.add_leader({parse_module_id(tok[1], line_no), parse_hex_field(tok[2], line_no)});
          break;
        }
        default:
          malformed(line_no, "unknown record '" + std::string(tok[0]) + "'");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MalformedTrace) throw;
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  file.trace.validate();
  return file;
}

TraceFile read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_trace(in);
}

void write_trace(std::ostream& out, const TraceSet& trace, bool partial, const std::string& partial_reason) {
  if (partial) out << "# partial" << (partial_reason.empty() ? "" : " " + partial_reason) << '\n';
  for (const auto& m : trace.modules())
    out << "M " << m.id << ' ' << escape_path(m.path) << ' ' << to_hex(m.runtime_base) << ' '
        << to_hex(m.text_start) << ' ' << to_hex(m.text_size) << '\n';
  for (const auto& [loc, rec] : trace.insts())
    out << "I " << loc.module << ' ' << to_hex(loc.offset) << ' ' << rec.len() << ' ' << to_hex(rec.bytes)
        << '\n';
  for (const auto& e : trace.edges())
    out << "E " << edge_kind_letter(e.kind) << ' ' << e.src.module << ':' << to_hex(e.src.offset) << ' '
        << e.dst.module << ':' << to_hex(e.dst.offset) << '\n';
  for (const auto& l : trace.leaders()) out << "B " << l.module << ' ' << to_hex(l.offset) << '\n';
}

void write_trace_file(const std::filesystem::path& path, const TraceSet& trace, bool partial,
                      const std::string& partial_reason) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_trace(out, trace, partial, partial_reason);
}

std::string trace_to_string(const TraceSet& trace) {
  std::ostringstream os;
  write_trace(os, trace);
  return os.str();
}

}  // namespace tracebin
