#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bootscope {

/// Every failure the toolkit reports is one of these kinds. The facade maps
/// them onto CLI exit codes and HTTP statuses.
enum class errc {
  // rsp
  payload_too_large,
  checksum_mismatch,
  truncated_frame,
  malformed_escape,
  malformed_frame,
  unknown_reply_form,
  // transport
  invalid_config,
  connect_failed,
  timeout,
  retries_exhausted,
  link_closed,
  busy_link,
  // symbolics
  not_elf,
  unsupported_endianness,
  corrupt_section_table,
  parse_error,
  unknown_symbol,
  unknown_line,
  // session
  malformed_register_payload,
  stub_error,
  memory_unreadable,
  wrong_phase,
  unknown_breakpoint,
  // boottrace
  duplicate_key,
  empty_catalog,
  // perfmodel
  span_out_of_range,
  unknown_function,
  empty_group,
  mismatched_groups,
  incomplete_matrix,
  // mocktarget / facade
  bind_failed,
  io_error,
  invalid_argument,
};

std::string_view to_string(errc code) noexcept;

class error : public std::runtime_error {
public:
  error(errc code, const std::string& message, std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(message), code_(code), line_(line) {}

  errc code() const noexcept { return code_; }

  /// 1-based line number for parse-type errors.
  std::optional<std::size_t> line() const noexcept { return line_; }

private:
  errc code_;
  std::optional<std::size_t> line_;
};

} // namespace bootscope
