#include "bootscope/rsp.hpp"

#include "bootscope/error.hpp"

#include <charconv>

namespace bootscope::rsp {

namespace {

constexpr char hex_digits[] = "0123456789abcdef";

int hex_value(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

bool needs_escape(char c) noexcept {
  return c == frame_start || c == frame_end || c == escape_char || c == rle_marker;
}

std::uint8_t parse_byte(std::string_view two, stop_kind kind) {
  auto hi = two.size() >= 2 ? hex_value(two[0]) : -1;
  auto lo = two.size() >= 2 ? hex_value(two[1]) : -1;
  if (hi < 0 || lo < 0) {
    throw error(errc::unknown_reply_form,
                "stop reply '" + std::string(to_string(kind)) + "' lacks a two-digit hex code");
  }
  return static_cast<std::uint8_t>(hi * 16 + lo);
}

} // namespace

std::uint8_t checksum(std::string_view bytes) noexcept {
  unsigned sum = 0;
  for (unsigned char c : bytes) sum += c;
  return static_cast<std::uint8_t>(sum & 0xff);
}

std::string encode_packet(std::string_view payload, std::size_t limit) {
  if (payload.size() > limit) {
    throw error(errc::payload_too_large, "payload of " + std::to_string(payload.size()) +
                                             " bytes exceeds packet limit " + std::to_string(limit));
  }
  std::string out;
  out.reserve(payload.size() + 8);
  out.push_back(frame_start);
  for (char c : payload) {
    if (needs_escape(c)) {
      out.push_back(escape_char);
      out.push_back(static_cast<char>(c ^ 0x20));
    } else {
      out.push_back(c);
    }
  }
  auto sum = checksum(std::string_view(out).substr(1));
  out.push_back(frame_end);
  out.push_back(hex_digits[sum >> 4]);
  out.push_back(hex_digits[sum & 0xf]);
  return out;
}

packet decode_packet(std::string_view wire) {
  if (wire.empty()) throw error(errc::truncated_frame, "empty input");
  if (wire.front() != frame_start) throw error(errc::malformed_frame, "frame does not start with '$'");

  auto end = wire.find(frame_end, 1);
  if (end == std::string_view::npos || wire.size() < end + 3) {
    throw error(errc::truncated_frame, "frame is incomplete");
  }
  auto body = wire.substr(1, end - 1);
  auto hi = hex_value(wire[end + 1]);
  auto lo = hex_value(wire[end + 2]);
  if (hi < 0 || lo < 0) throw error(errc::malformed_frame, "checksum digits are not hex");
  auto expected = static_cast<std::uint8_t>(hi * 16 + lo);
  auto actual = checksum(body);
  if (actual != expected) {
    throw error(errc::checksum_mismatch, "checksum mismatch: frame says " +
                                             std::string{wire[end + 1], wire[end + 2]} + ", computed " +
                                             std::string{hex_digits[actual >> 4], hex_digits[actual & 0xf]});
  }

  packet p;
  p.raw_len = end + 3;
  p.payload.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c == escape_char) {
      if (i + 1 >= body.size()) throw error(errc::malformed_escape, "dangling escape at end of payload");
      p.payload.push_back(static_cast<char>(body[++i] ^ 0x20));
    } else if (c == rle_marker) {
      if (p.payload.empty()) throw error(errc::malformed_escape, "run-length marker with no preceding byte");
      if (i + 1 >= body.size()) throw error(errc::malformed_escape, "run-length marker without count");
      auto count_char = static_cast<unsigned char>(body[++i]);
      if (count_char < 29 + 3 || count_char > 126) {
        throw error(errc::malformed_escape, "run-length count out of range");
      }
      p.payload.append(count_char - 29, p.payload.back());
    } else {
      p.payload.push_back(c);
    }
  }
  return p;
}

stop_reply parse_stop_reply(std::string_view payload) {
  if (payload.empty()) throw error(errc::unknown_reply_form, "empty stop reply");
  stop_reply r;
  switch (payload.front()) {
  case 'S':
    r.kind = stop_kind::signal;
    r.signal_no = parse_byte(payload.substr(1), r.kind);
    break;
  case 'T': {
    r.kind = stop_kind::signal_with_info;
    r.signal_no = parse_byte(payload.substr(1), r.kind);
    auto rest = payload.substr(3);
    while (!rest.empty()) {
      auto semi = rest.find(';');
      auto item = rest.substr(0, semi);
      if (!item.empty()) {
        auto colon = item.find(':');
        if (colon == std::string_view::npos) {
          r.info.emplace_back(std::string(item), std::string());
        } else {
          r.info.emplace_back(std::string(item.substr(0, colon)), std::string(item.substr(colon + 1)));
        }
      }
      if (semi == std::string_view::npos) break;
      rest.remove_prefix(semi + 1);
    }
    break;
  }
  case 'W':
    r.kind = stop_kind::exited;
    r.exit_code = parse_byte(payload.substr(1), r.kind);
    break;
  case 'X':
    r.kind = stop_kind::terminated;
    r.signal_no = parse_byte(payload.substr(1), r.kind);
    break;
  default:
    throw error(errc::unknown_reply_form, "unknown stop reply form '" + std::string(payload.substr(0, 16)) + "'");
  }
  return r;
}

std::string_view to_string(stop_kind kind) noexcept {
  switch (kind) {
  case stop_kind::signal: return "signal";
  case stop_kind::signal_with_info: return "signal_with_info";
  case stop_kind::exited: return "exited";
  case stop_kind::terminated: return "terminated";
  }
  return "unknown";
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(hex_digits[b >> 4]);
    out.push_back(hex_digits[b & 0xf]);
  }
  return out;
}

std::optional<std::vector<std::uint8_t>> from_hex(std::string_view text) {
  if (text.size() % 2 != 0) return std::nullopt;
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 2);
  for (std::size_t i = 0; i < text.size(); i += 2) {
    auto hi = hex_value(text[i]);
    auto lo = hex_value(text[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

std::optional<std::uint64_t> parse_hex_u64(std::string_view text) {
  if (text.starts_with("0x") || text.starts_with("0X")) text.remove_prefix(2);
  if (text.empty()) return std::nullopt;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string hex_u64(std::uint64_t value) {
  char buf[17];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, 16);
  (void)ec;
  return std::string(buf, ptr);
}

bool is_error_reply(std::string_view payload) noexcept {
  return payload.size() == 3 && payload[0] == 'E' && hex_value(payload[1]) >= 0 && hex_value(payload[2]) >= 0;
}

} // namespace bootscope::rsp
