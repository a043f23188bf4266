#include "bootscope/registers.hpp"

#include "bootscope/error.hpp"

#include <charconv>
#include <optional>
#include <sstream>

namespace bootscope {

register_layout::register_layout(std::vector<register_def> regs, std::size_t pc_index)
    : regs_(std::move(regs)), pc_index_(pc_index) {
  if (regs_.empty()) throw error(errc::invalid_argument, "register layout is empty");
  if (pc_index_ >= regs_.size()) throw error(errc::invalid_argument, "pc register index out of range");
  for (const auto& r : regs_) {
    if (r.bits == 0 || r.bits % 8 != 0 || r.bits > 64) {
      throw error(errc::invalid_argument, "register " + r.name + " has unsupported width " + std::to_string(r.bits));
    }
  }
}

register_layout register_layout::i386() {
  std::vector<register_def> regs;
  for (const char* name : {"EAX", "ECX", "EDX", "EBX", "ESP", "EBP", "ESI", "EDI", "EIP", "EFLAGS", "CS", "SS",
                           "DS", "ES", "FS", "GS"}) {
    regs.push_back({name, 32});
  }
  return register_layout(std::move(regs), 8);
}

register_layout register_layout::parse(std::string_view text) {
  std::vector<register_def> regs;
  std::optional<std::size_t> pc;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string name, bits_text, flag;
    if (!(fields >> name)) continue;
    if (!(fields >> bits_text)) throw error(errc::parse_error, "line " + std::to_string(no) + ": missing width", no);
    unsigned bits = 0;
    auto [ptr, ec] = std::from_chars(bits_text.data(), bits_text.data() + bits_text.size(), bits);
    if (ec != std::errc{} || ptr != bits_text.data() + bits_text.size()) {
      throw error(errc::parse_error, "line " + std::to_string(no) + ": width is not a number", no);
    }
    if (fields >> flag) {
      if (flag != "pc") throw error(errc::parse_error, "line " + std::to_string(no) + ": unknown flag " + flag, no);
      if (pc) throw error(errc::parse_error, "line " + std::to_string(no) + ": second pc register", no);
      pc = regs.size();
    }
    regs.push_back({name, bits});
  }
  if (!pc) throw error(errc::parse_error, "layout names no pc register");
  try {
    return register_layout(std::move(regs), *pc);
  } catch (const error& e) {
    throw error(errc::parse_error, e.what());
  }
}

std::size_t register_layout::hex_length() const noexcept {
  std::size_t n = 0;
  for (const auto& r : regs_) n += r.bits / 4;
  return n;
}

std::size_t register_layout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < regs_.size(); ++i) {
    if (regs_[i].name == name) return i;
  }
  throw error(errc::invalid_argument, "no register named " + std::string(name));
}

namespace {

int digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c == 'x') return 0;
  return -1;
}

} // namespace

register_file decode_registers(const register_layout& layout, std::string_view payload) {
  if (payload.size() != layout.hex_length()) {
    throw error(errc::malformed_register_payload, "register payload has " + std::to_string(payload.size()) +
                                                      " hex digits, layout expects " +
                                                      std::to_string(layout.hex_length()));
  }
  register_file regs(layout);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < layout.registers().size(); ++i) {
    unsigned bytes = layout.registers()[i].bits / 8;
    std::uint64_t v = 0;
    for (unsigned b = 0; b < bytes; ++b) {
      int hi = digit(payload[pos]);
      int lo = digit(payload[pos + 1]);
      if (hi < 0 || lo < 0) {
        throw error(errc::malformed_register_payload, "non-hex digit in register payload at " + std::to_string(pos));
      }
      v |= std::uint64_t(hi * 16 + lo) << (8 * b);
      pos += 2;
    }
    regs.values[i] = v;
  }
  return regs;
}

std::string encode_registers(const register_file& regs) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(regs.layout.hex_length());
  for (std::size_t i = 0; i < regs.layout.registers().size(); ++i) {
    unsigned bytes = regs.layout.registers()[i].bits / 8;
    auto v = regs.values[i];
    for (unsigned b = 0; b < bytes; ++b) {
      auto byte = static_cast<unsigned>((v >> (8 * b)) & 0xff);
      out.push_back(digits[byte >> 4]);
      out.push_back(digits[byte & 0xf]);
    }
  }
  return out;
}

} // namespace bootscope
