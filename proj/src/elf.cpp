#include "tracebin/elf.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "tracebin/error.hpp"

namespace tracebin::elf {

namespace {

template <typename T>
T get(std::span<const std::uint8_t> file, std::uint64_t at) {
  if (at + sizeof(T) > file.size()) throw Error(ErrorCode::MalformedElf, "truncated at " + to_hex(at));
  T v;
  std::memcpy(&v, file.data() + at, sizeof(T));
  return v;
}

}  // namespace

std::optional<std::uint64_t> ElfInfo::file_offset(std::uint64_t off) const {
  std::uint64_t vaddr = off + link_bias;
  for (const auto& s : loads)
    if (vaddr >= s.vaddr && vaddr < s.vaddr + s.filesz) return vaddr - s.vaddr + s.offset;
  return std::nullopt;
}

ElfInfo parse(std::span<const std::uint8_t> file) {
  if (file.size() < 64 || file[0] != 0x7f || file[1] != 'E' || file[2] != 'L' || file[3] != 'F')
    throw Error(ErrorCode::MalformedElf, "bad ELF magic");
  if (file[4] != 2 || file[5] != 1) throw Error(ErrorCode::MalformedElf, "not a little-endian ELF64 file");
  ElfInfo info;
  auto type = get<std::uint16_t>(file, 16);
  if (type != 2 && type != 3) throw Error(ErrorCode::MalformedElf, "not an executable");
  if (get<std::uint16_t>(file, 18) != 62) throw Error(ErrorCode::MalformedElf, "not x86-64");
  info.pie = type == 3;
  info.entry = get<std::uint64_t>(file, 24);
  auto phoff = get<std::uint64_t>(file, 32);
  auto phentsize = get<std::uint16_t>(file, 54);
  auto phnum = get<std::uint16_t>(file, 56);
  if (phentsize < 56) throw Error(ErrorCode::MalformedElf, "bad program header size");
  info.link_bias = std::numeric_limits<std::uint64_t>::max();
  for (std::uint16_t i = 0; i < phnum; ++i) {
    std::uint64_t at = phoff + std::uint64_t{phentsize} * i;
    if (get<std::uint32_t>(file, at) != 1) continue;
    Segment s;
    s.flags = get<std::uint32_t>(file, at + 4);
    s.offset = get<std::uint64_t>(file, at + 8);
    s.vaddr = get<std::uint64_t>(file, at + 16);
    s.filesz = get<std::uint64_t>(file, at + 32);
    s.memsz = get<std::uint64_t>(file, at + 40);
    if (s.offset + s.filesz > file.size()) throw Error(ErrorCode::MalformedElf, "segment past end of file");
    std::uint64_t page = 0x1000;
    info.link_bias = std::min(info.link_bias, (s.vaddr & ~(page - 1)) - (s.offset & ~(page - 1)));
    info.loads.push_back(s);
  }
  if (info.loads.empty()) throw Error(ErrorCode::MalformedElf, "no PT_LOAD segments");
  return info;
}

CodeImage exec_image(std::span<const std::uint8_t> file) {
  ElfInfo info = parse(file);
  for (const auto& s : info.loads) {
    if (!s.executable()) continue;
    CodeImage image;
    image.base_offset = s.vaddr - info.link_bias;
    image.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(s.offset),
                       file.begin() + static_cast<std::ptrdiff_t>(s.offset + s.filesz));
    return image;
  }
  throw Error(ErrorCode::MalformedElf, "no executable segment");
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes, bool executable) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
  }
  if (executable) {
    using std::filesystem::perms;
    std::filesystem::permissions(path, perms::owner_exec | perms::group_exec | perms::others_exec,
                                 std::filesystem::perm_options::add);
  }
}

}  // namespace tracebin::elf
