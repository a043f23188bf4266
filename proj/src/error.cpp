#include "bootscope/error.hpp"

namespace bootscope {

std::string_view to_string(errc code) noexcept {
  switch (code) {
  case errc::payload_too_large: return "payload_too_large";
  case errc::checksum_mismatch: return "checksum_mismatch";
  case errc::truncated_frame: return "truncated_frame";
  case errc::malformed_escape: return "malformed_escape";
  case errc::malformed_frame: return "malformed_frame";
  case errc::unknown_reply_form: return "unknown_reply_form";
  case errc::invalid_config: return "invalid_config";
  case errc::connect_failed: return "connect_failed";
  case errc::timeout: return "timeout";
  case errc::retries_exhausted: return "retries_exhausted";
  case errc::link_closed: return "link_closed";
  case errc::busy_link: return "busy_link";
  case errc::not_elf: return "not_elf";
  case errc::unsupported_endianness: return "unsupported_endianness";
  case errc::corrupt_section_table: return "corrupt_section_table";
  case errc::parse_error: return "parse_error";
  case errc::unknown_symbol: return "unknown_symbol";
  case errc::unknown_line: return "unknown_line";
  case errc::malformed_register_payload: return "malformed_register_payload";
  case errc::stub_error: return "stub_error";
  case errc::memory_unreadable: return "memory_unreadable";
  case errc::wrong_phase: return "wrong_phase";
  case errc::unknown_breakpoint: return "unknown_breakpoint";
  case errc::duplicate_key: return "duplicate_key";
  case errc::empty_catalog: return "empty_catalog";
  case errc::span_out_of_range: return "span_out_of_range";
  case errc::unknown_function: return "unknown_function";
  case errc::empty_group: return "empty_group";
  case errc::mismatched_groups: return "mismatched_groups";
  case errc::incomplete_matrix: return "incomplete_matrix";
  case errc::bind_failed: return "bind_failed";
  case errc::io_error: return "io_error";
  case errc::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

} // namespace bootscope
