#include "bootscope/symbolics.hpp"

#include "bootscope/error.hpp"
#include "bootscope/rsp.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

namespace bootscope {

std::string_view to_string(symbol_kind kind) noexcept {
  switch (kind) {
  case symbol_kind::function: return "function";
  case symbol_kind::object: return "object";
  case symbol_kind::other: return "other";
  }
  return "other";
}

symbol_index::symbol_index(std::vector<symbol> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const symbol& a, const symbol& b) { return a.address < b.address; });
  entries_.reserve(entries.size());
  for (auto& e : entries) {
    // Same name at the same address: keep the later row.
    auto dup = entries_.rbegin();
    while (dup != entries_.rend() && dup->address == e.address && dup->name != e.name) ++dup;
    if (dup != entries_.rend() && dup->address == e.address) {
      *dup = std::move(e);
      continue;
    }
    entries_.push_back(std::move(e));
  }

  std::map<std::string_view, std::vector<std::uint64_t>> by_name;
  for (const auto& e : entries_) by_name[e.name].push_back(e.address);
  for (const auto& [name, addrs] : by_name) {
    if (addrs.size() > 1) {
      warnings_.push_back("symbol '" + std::string(name) + "' defined at " + std::to_string(addrs.size()) +
                          " addresses; resolving to lowest 0x" + rsp::hex_u64(addrs.front()));
    }
  }
}

const symbol* symbol_index::find_preceding(std::uint64_t addr) const noexcept {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), addr,
                             [](std::uint64_t a, const symbol& s) { return a < s.address; });
  if (it == entries_.begin()) return nullptr;
  return &*std::prev(it);
}

const symbol* symbol_index::find_by_name(std::string_view name) const noexcept {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const symbol& s) { return s.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

line_map::line_map(std::vector<line_row> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const line_row& a, const line_row& b) { return a.address < b.address; });
  rows_.reserve(rows.size());
  for (auto& r : rows) {
    if (!rows_.empty() && rows_.back().address == r.address) {
      warnings_.push_back("duplicate line-map address 0x" + rsp::hex_u64(r.address) + ": " + rows_.back().file +
                          ":" + std::to_string(rows_.back().line) + " replaced by " + r.file + ":" +
                          std::to_string(r.line));
      rows_.back() = std::move(r);
      continue;
    }
    rows_.push_back(std::move(r));
  }
}

const line_row* line_map::find_preceding(std::uint64_t addr) const noexcept {
  auto it = std::upper_bound(rows_.begin(), rows_.end(), addr,
                             [](std::uint64_t a, const line_row& r) { return a < r.address; });
  if (it == rows_.begin()) return nullptr;
  return &*std::prev(it);
}

namespace {

bool path_matches(std::string_view row_file, std::string_view wanted) {
  if (row_file == wanted) return true;
  if (row_file.size() <= wanted.size()) return false;
  return row_file.ends_with(wanted) && row_file[row_file.size() - wanted.size() - 1] == '/';
}

} // namespace

std::optional<std::uint64_t> line_map::address_of(std::string_view file, unsigned line) const {
  for (const auto& r : rows_) {
    if (r.line == line && path_matches(r.file, file)) return r.address;
  }
  return std::nullopt;
}

std::vector<std::string> line_map::files() const {
  std::set<std::string> names;
  for (const auto& r : rows_) names.insert(r.file);
  return {names.begin(), names.end()};
}

// ---------------------------------------------------------------------------
// ELF

namespace {

class elf_reader {
public:
  explicit elf_reader(std::span<const std::uint8_t> image) : image_(image) {}

  bool in_bounds(std::uint64_t off, std::uint64_t len) const noexcept {
    return off <= image_.size() && len <= image_.size() - off;
  }

  std::uint64_t read(std::uint64_t off, unsigned width) const {
    if (!in_bounds(off, width)) throw error(errc::corrupt_section_table, "read past end of image at offset " +
                                                                             std::to_string(off));
    std::uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) v |= std::uint64_t{image_[off + i]} << (8 * i);
    return v;
  }

  std::string_view c_string(std::uint64_t table_off, std::uint64_t table_size, std::uint64_t index) const {
    if (index >= table_size) throw error(errc::corrupt_section_table, "symbol name offset outside string table");
    auto begin = reinterpret_cast<const char*>(image_.data() + table_off + index);
    auto limit = table_size - index;
    std::uint64_t len = 0;
    while (len < limit && begin[len] != '\0') ++len;
    if (len == limit) throw error(errc::corrupt_section_table, "unterminated symbol name");
    return {begin, len};
  }

private:
  std::span<const std::uint8_t> image_;
};

struct section {
  std::uint32_t type = 0;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  std::uint32_t link = 0;
  std::uint64_t entsize = 0;
};

constexpr std::uint32_t sht_symtab = 2;
constexpr std::uint32_t sht_dynsym = 11;
constexpr unsigned stt_object = 1;
constexpr unsigned stt_func = 2;

} // namespace

symbol_index load_elf_symbols(std::span<const std::uint8_t> image) {
  if (image.size() < 4 || image[0] != 0x7f || image[1] != 'E' || image[2] != 'L' || image[3] != 'F') {
    throw error(errc::not_elf, "missing ELF magic");
  }
  if (image.size() < 16) throw error(errc::corrupt_section_table, "truncated ELF identification");
  const bool is64 = image[4] == 2;
  if (image[4] != 1 && !is64) throw error(errc::not_elf, "unsupported ELF class " + std::to_string(image[4]));
  if (image[5] != 1) {
    throw error(errc::unsupported_endianness,
                image[5] == 2 ? "big-endian ELF is not supported" : "unknown ELF data encoding");
  }

  elf_reader r(image);
  const std::uint64_t header_size = is64 ? 64 : 52;
  if (!r.in_bounds(0, header_size)) throw error(errc::corrupt_section_table, "truncated ELF header");

  std::uint64_t shoff = is64 ? r.read(0x28, 8) : r.read(0x20, 4);
  std::uint64_t shentsize = r.read(is64 ? 0x3a : 0x2e, 2);
  std::uint64_t shnum = r.read(is64 ? 0x3c : 0x30, 2);
  if (shoff == 0 || shnum == 0) return {};

  const std::uint64_t min_shentsize = is64 ? 64 : 40;
  if (shentsize < min_shentsize) throw error(errc::corrupt_section_table, "section header entries too small");
  if (shnum > image.size() / shentsize || !r.in_bounds(shoff, shnum * shentsize)) {
    throw error(errc::corrupt_section_table, "section header table outside image");
  }

  std::vector<section> sections(shnum);
  for (std::uint64_t i = 0; i < shnum; ++i) {
    auto base = shoff + i * shentsize;
    auto& s = sections[i];
    s.type = static_cast<std::uint32_t>(r.read(base + 4, 4));
    if (is64) {
      s.offset = r.read(base + 24, 8);
      s.size = r.read(base + 32, 8);
      s.link = static_cast<std::uint32_t>(r.read(base + 40, 4));
      s.entsize = r.read(base + 56, 8);
    } else {
      s.offset = r.read(base + 16, 4);
      s.size = r.read(base + 20, 4);
      s.link = static_cast<std::uint32_t>(r.read(base + 24, 4));
      s.entsize = r.read(base + 36, 4);
    }
  }

  auto pick = [&](std::uint32_t type) -> const section* {
    for (const auto& s : sections)
      if (s.type == type) return &s;
    return nullptr;
  };
  const section* symtab = pick(sht_symtab);
  if (symtab == nullptr) symtab = pick(sht_dynsym);
  if (symtab == nullptr) return {};

  const std::uint64_t min_entsize = is64 ? 24 : 16;
  std::uint64_t entsize = symtab->entsize == 0 ? min_entsize : symtab->entsize;
  if (entsize < min_entsize) throw error(errc::corrupt_section_table, "symbol entries too small");
  if (!r.in_bounds(symtab->offset, symtab->size)) throw error(errc::corrupt_section_table, "symbol table outside image");
  if (symtab->link >= sections.size()) throw error(errc::corrupt_section_table, "symbol table links to missing section");
  const auto& strtab = sections[symtab->link];
  if (!r.in_bounds(strtab.offset, strtab.size)) throw error(errc::corrupt_section_table, "string table outside image");

  std::vector<symbol> out;
  const std::uint64_t count = symtab->size / entsize;
  for (std::uint64_t i = 1; i < count; ++i) {
    auto base = symtab->offset + i * entsize;
    std::uint64_t name_off, value, size;
    unsigned info, shndx;
    if (is64) {
      name_off = r.read(base, 4);
      info = static_cast<unsigned>(r.read(base + 4, 1));
      shndx = static_cast<unsigned>(r.read(base + 6, 2));
      value = r.read(base + 8, 8);
      size = r.read(base + 16, 8);
    } else {
      name_off = r.read(base, 4);
      value = r.read(base + 4, 4);
      size = r.read(base + 8, 4);
      info = static_cast<unsigned>(r.read(base + 12, 1));
      shndx = static_cast<unsigned>(r.read(base + 14, 2));
    }
    unsigned type = info & 0xf;
    if ((type != stt_func && type != stt_object) || shndx == 0) continue;
    auto name = r.c_string(strtab.offset, strtab.size, name_off);
    if (name.empty()) continue;
    out.push_back(symbol{std::string(name), value, size == 0 ? std::nullopt : std::optional<std::uint64_t>(size),
                         type == stt_func ? symbol_kind::function : symbol_kind::object});
  }
  return symbol_index(std::move(out));
}

// ---------------------------------------------------------------------------
// Text formats

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(++line_no, line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

[[noreturn]] void parse_fail(std::size_t line_no, std::string_view line, const std::string& why) {
  throw error(errc::parse_error, "line " + std::to_string(line_no) + ": " + why + ": '" + std::string(line) + "'",
              line_no);
}

symbol_kind kind_from_letter(char c) {
  switch (c) {
  case 't': case 'T': return symbol_kind::function;
  case 'd': case 'D': case 'b': case 'B': case 'r': case 'R': return symbol_kind::object;
  default: return symbol_kind::other;
  }
}

} // namespace

symbol_index load_symbol_map(std::string_view text) {
  std::vector<symbol> out;
  for_each_line(text, [&](std::size_t no, std::string_view line) {
    if (blank(line)) return;
    auto fields = split_ws(line);
    if (fields.size() < 3) parse_fail(no, line, "expected '<address> <kind> <name>'");
    auto addr = rsp::parse_hex_u64(fields[0]);
    if (!addr) parse_fail(no, line, "address is not hexadecimal");
    if (fields[1].size() != 1) parse_fail(no, line, "kind must be a single letter");
    // Names may contain spaces (demangled output); keep everything after the kind.
    auto name_start = static_cast<std::size_t>(fields[2].data() - line.data());
    auto name = line.substr(name_start);
    while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.remove_suffix(1);
    out.push_back(symbol{std::string(name), *addr, std::nullopt, kind_from_letter(fields[1][0])});
  });
  return symbol_index(std::move(out));
}

line_map load_line_map(std::string_view text) {
  std::vector<line_row> rows;
  for_each_line(text, [&](std::size_t no, std::string_view line) {
    if (blank(line) || line.front() == '#') return;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
      parse_fail(no, line, "expected three tab-separated fields");
    }
    auto addr = rsp::parse_hex_u64(line.substr(0, t1));
    if (!addr) parse_fail(no, line, "address is not hexadecimal");
    auto file = line.substr(t1 + 1, t2 - t1 - 1);
    if (file.empty()) parse_fail(no, line, "file is empty");
    auto num = line.substr(t2 + 1);
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
    if (ec != std::errc{} || ptr != num.data() + num.size()) parse_fail(no, line, "line is not a number");
    if (value < 1) parse_fail(no, line, "line numbers start at 1");
    rows.push_back(line_row{*addr, std::string(file), value});
  });
  return line_map(std::move(rows));
}

location resolve_addr(const symbol_index& index, const line_map& lines, std::uint64_t addr) {
  location loc;
  loc.address = addr;
  if (const auto* s = index.find_preceding(addr)) {
    loc.symbol = s->name;
    loc.offset = addr - s->address;
  }
  if (const auto* row = lines.find_preceding(addr)) {
    loc.file = row->file;
    loc.line = row->line;
  }
  return loc;
}

std::uint64_t resolve_symbol(const symbol_index& index, std::string_view name) {
  const auto* s = index.find_by_name(name);
  if (s == nullptr) throw error(errc::unknown_symbol, "unknown symbol '" + std::string(name) + "'");
  return s->address;
}

std::uint64_t resolve_line(const line_map& lines, std::string_view file, unsigned line) {
  auto addr = lines.address_of(file, line);
  if (!addr) {
    throw error(errc::unknown_line, "no address maps to " + std::string(file) + ":" + std::to_string(line));
  }
  return *addr;
}

std::string format_location(const location& loc) {
  std::string out;
  if (loc.symbol) {
    out = *loc.symbol;
    if (loc.offset != 0) out += "+0x" + rsp::hex_u64(loc.offset);
  } else {
    out = "0x" + rsp::hex_u64(loc.address) + " (no symbol)";
  }
  if (loc.file) out += " at " + *loc.file + ":" + std::to_string(*loc.line);
  return out;
}

} // namespace bootscope
