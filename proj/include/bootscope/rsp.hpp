#pragma once

// GDB Remote Serial Protocol packet layer.
//
// A frame on the wire is `$` + escaped payload + `#` + two lowercase hex
// checksum digits. The checksum is the mod-256 sum of the on-wire bytes
// between `$` and `#`. The encoder escapes `#`, `$`, `}` and `*` as `}`
// followed by the byte xor 0x20; it never emits run-length encoding. The
// decoder accepts both escapes and `X*n` run-length groups.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bootscope::rsp {

inline constexpr std::size_t default_packet_limit = 4096;

inline constexpr char frame_start = '$';
inline constexpr char frame_end = '#';
inline constexpr char escape_char = '}';
inline constexpr char rle_marker = '*';
inline constexpr char ack = '+';
inline constexpr char nack = '-';

struct packet {
  std::string payload;     ///< logical content: unescaped, run-length expanded
  std::size_t raw_len = 0; ///< on-wire bytes consumed, `$` through checksum
};

std::uint8_t checksum(std::string_view bytes) noexcept;

/// Frames `payload`. Throws errc::payload_too_large when the logical payload
/// exceeds `limit`.
std::string encode_packet(std::string_view payload, std::size_t limit = default_packet_limit);

/// Decodes the frame at the start of `wire`, which must begin with `$`.
/// Trailing bytes after the checksum are left alone (see packet::raw_len).
/// Throws errc::truncated_frame for any incomplete prefix of a frame,
/// errc::checksum_mismatch, errc::malformed_escape or errc::malformed_frame.
packet decode_packet(std::string_view wire);

enum class stop_kind { signal, signal_with_info, exited, terminated };

struct stop_reply {
  stop_kind kind = stop_kind::signal;
  std::optional<std::uint8_t> signal_no; ///< signal, signal_with_info, terminated
  std::optional<std::uint8_t> exit_code; ///< exited
  std::vector<std::pair<std::string, std::string>> info;

  bool target_gone() const noexcept {
    return kind == stop_kind::exited || kind == stop_kind::terminated;
  }
};

/// Classifies an S/T/W/X reply. Throws errc::unknown_reply_form otherwise.
stop_reply parse_stop_reply(std::string_view payload);

std::string_view to_string(stop_kind kind) noexcept;

// Hex helpers shared by the client and the mock stub.

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<std::vector<std::uint8_t>> from_hex(std::string_view text);
std::optional<std::uint64_t> parse_hex_u64(std::string_view text);
std::string hex_u64(std::uint64_t value);

/// True for an `Exx` error reply.
bool is_error_reply(std::string_view payload) noexcept;

} // namespace bootscope::rsp
