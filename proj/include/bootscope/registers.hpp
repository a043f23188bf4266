#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bootscope {

struct register_def {
  std::string name;
  unsigned bits = 32;
};

/// Ordered register list as the stub lays it out in `g` payloads. Each
/// register is little-endian hex, `bits / 4` characters wide.
class register_layout {
public:
  register_layout(std::vector<register_def> regs, std::size_t pc_index);

  /// EAX ECX EDX EBX ESP EBP ESI EDI EIP EFLAGS CS SS DS ES FS GS, 32-bit each; pc = EIP.
  static register_layout i386();

  /// One register per line: `<name> <bits>`, the pc line suffixed with `pc`.
  /// `#` starts a comment. Throws errc::parse_error.
  static register_layout parse(std::string_view text);

  const std::vector<register_def>& registers() const noexcept { return regs_; }
  std::size_t pc_index() const noexcept { return pc_index_; }
  std::size_t hex_length() const noexcept;
  std::size_t index_of(std::string_view name) const; ///< throws errc::invalid_argument

private:
  std::vector<register_def> regs_;
  std::size_t pc_index_;
};

struct register_file {
  register_layout layout;
  std::vector<std::uint64_t> values;

  explicit register_file(register_layout l) : layout(std::move(l)), values(layout.registers().size(), 0) {}

  std::uint64_t pc() const { return values.at(layout.pc_index()); }
  void set_pc(std::uint64_t v) { values.at(layout.pc_index()) = v; }
  std::uint64_t get(std::string_view name) const { return values.at(layout.index_of(name)); }
  void set(std::string_view name, std::uint64_t v) { values.at(layout.index_of(name)) = v; }
};

/// Throws errc::malformed_register_payload on a length or digit mismatch.
/// `x` digits (unavailable registers) read as zero.
register_file decode_registers(const register_layout& layout, std::string_view payload);

std::string encode_registers(const register_file& regs);

} // namespace bootscope
