#pragma once

// Address <-> symbol <-> source-line resolution.
//
// Symbols come from an ELF symbol table or an `nm`-style text map. Source
// lines come from a sidecar TSV line map (`hexaddress<TAB>file<TAB>line`)
// standing in for DWARF line tables. Both tables answer "which entry covers
// this address" with nearest-preceding semantics; when several rows share an
// address the one appearing later in the input wins.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bootscope {

enum class symbol_kind { function, object, other };

std::string_view to_string(symbol_kind kind) noexcept;

struct symbol {
  std::string name;
  std::uint64_t address = 0;
  std::optional<std::uint64_t> size;
  symbol_kind kind = symbol_kind::other;
};

class symbol_index {
public:
  symbol_index() = default;
  /// Sorts by address, keeping input order among equal addresses; collapses
  /// repeated (name, address) pairs.
  explicit symbol_index(std::vector<symbol> entries);

  std::span<const symbol> entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Greatest entry address <= addr, or nullptr.
  const symbol* find_preceding(std::uint64_t addr) const noexcept;

  /// Lowest-addressed entry carrying `name`, or nullptr.
  const symbol* find_by_name(std::string_view name) const noexcept;

  /// Tie-break notices collected while building the index.
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

private:
  std::vector<symbol> entries_;
  std::vector<std::string> warnings_;
};

struct line_row {
  std::uint64_t address = 0;
  std::string file;
  unsigned line = 1;
};

class line_map {
public:
  line_map() = default;
  /// Sorts by address. For duplicate addresses the last row wins and a
  /// warning is recorded.
  explicit line_map(std::vector<line_row> rows);

  std::span<const line_row> rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }

  const line_row* find_preceding(std::uint64_t addr) const noexcept;

  /// Lowest address mapped to file:line. `file` matches exactly or as a
  /// trailing path component sequence ("sched.c" matches "kernel/sched.c").
  std::optional<std::uint64_t> address_of(std::string_view file, unsigned line) const;

  /// Distinct file names, sorted.
  std::vector<std::string> files() const;

  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

private:
  std::vector<line_row> rows_;
  std::vector<std::string> warnings_;
};

/// Reads function/object symbols from a little-endian ELF32 or ELF64 image.
/// Prefers .symtab, falls back to .dynsym, returns an empty index when the
/// image carries neither. Never reads outside `image`.
symbol_index load_elf_symbols(std::span<const std::uint8_t> image);

/// Parses `nm`-style rows: `<hex address> <kind letter> <name>`.
/// Kind letters t/T are functions, d/D/b/B/r/R objects, the rest other.
symbol_index load_symbol_map(std::string_view text);

/// Parses `<hex address>\t<file>\t<line>` rows. Blank lines and lines
/// starting with `#` are skipped.
line_map load_line_map(std::string_view text);

struct location {
  std::uint64_t address = 0;
  std::optional<std::string> symbol;
  std::uint64_t offset = 0; ///< address - symbol address; 0 without a symbol
  std::optional<std::string> file;
  std::optional<unsigned> line;
};

location resolve_addr(const symbol_index& index, const line_map& lines, std::uint64_t addr);

/// Throws errc::unknown_symbol. Duplicate names resolve to the lowest address.
std::uint64_t resolve_symbol(const symbol_index& index, std::string_view name);

/// Throws errc::unknown_line.
std::uint64_t resolve_line(const line_map& lines, std::string_view file, unsigned line);

/// `sched_init+0x4 at kernel/sched.c:42`, or `0x... (no symbol)`.
std::string format_location(const location& loc);

} // namespace bootscope
