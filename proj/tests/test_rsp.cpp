#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bootscope/error.hpp"
#include "bootscope/rsp.hpp"
#include "support/oracles.hpp"

#include <random>

using namespace bootscope;

namespace {

errc code_of(std::string_view wire) {
  try {
    rsp::decode_packet(wire);
  } catch (const error& e) {
    return e.code();
  }
  FAIL("decode succeeded for " << wire);
  return errc::io_error;
}

// Frames `body` verbatim with a correct checksum, so decode gets past the
// checksum test and reaches the payload checks.
std::string raw_frame(const std::string& body) {
  static const char* digits = "0123456789abcdef";
  auto sum = oracle::checksum(body);
  return "$" + body + "#" + digits[sum >> 4] + digits[sum & 15];
}

} // namespace

TEST_CASE("checksum matches hand values") {
  CHECK(rsp::checksum("") == 0);
  CHECK(rsp::checksum("OK") == 0x9a);
  CHECK(rsp::checksum("S05") == 0xb8);
  CHECK(rsp::checksum("qSupported") == oracle::checksum("qSupported"));
}

TEST_CASE("encode frames simple payloads") {
  CHECK(rsp::encode_packet("OK") == "$OK#9a");
  CHECK(rsp::encode_packet("S05") == "$S05#b8");
  CHECK(rsp::encode_packet("") == "$#00");
  CHECK(rsp::encode_packet("g") == "$g#67");
}

TEST_CASE("encode escapes the four special bytes") {
  CHECK(rsp::encode_packet("a#b") == oracle::frame("a#b"));
  CHECK(rsp::encode_packet("a#b").substr(0, 5) == "$a}\x03" "b");
  CHECK(rsp::encode_packet("$") == oracle::frame("$"));
  CHECK(rsp::encode_packet("}") == oracle::frame("}"));
  CHECK(rsp::encode_packet("*") == "$}\x0a#" + std::string("87"));
}

TEST_CASE("encode rejects payloads over the limit") {
  CHECK_NOTHROW(rsp::encode_packet(std::string(16, 'x'), 16));
  CHECK_THROWS_AS(rsp::encode_packet(std::string(17, 'x'), 16), error);
  try {
    rsp::encode_packet(std::string(17, 'x'), 16);
  } catch (const error& e) {
    CHECK(e.code() == errc::payload_too_large);
  }
}

TEST_CASE("decode expands run-length encoding") {
  // '0' followed by '*' and ' ' (32): 32 - 29 = 3 more copies.
  auto p = rsp::decode_packet("$0* #7a");
  CHECK(p.payload == "0000");
  CHECK(p.raw_len == 7);
  CHECK(code_of("$0* #70") == errc::checksum_mismatch);

  auto wide = rsp::decode_packet(raw_frame("x*~"));
  CHECK(wide.payload == std::string(1 + 126 - 29, 'x'));
}

TEST_CASE("decode reports raw length and ignores trailing bytes") {
  auto p = rsp::decode_packet("$OK#9a+$S05#b8");
  CHECK(p.payload == "OK");
  CHECK(p.raw_len == 6);
  CHECK(rsp::decode_packet("$OK#9A").payload == "OK");
}

TEST_CASE("decode error kinds") {
  CHECK(code_of("") == errc::truncated_frame);
  CHECK(code_of("OK#9a") == errc::malformed_frame);
  CHECK(code_of("$OK") == errc::truncated_frame);
  CHECK(code_of("$OK#9") == errc::truncated_frame);
  CHECK(code_of("$OK#zz") == errc::malformed_frame);
  CHECK(code_of("$OK#00") == errc::checksum_mismatch);
  CHECK(code_of(raw_frame("a}")) == errc::malformed_escape);
  CHECK(code_of(raw_frame("*!")) == errc::malformed_escape);
  CHECK(code_of(raw_frame("a*")) == errc::malformed_escape);
  CHECK(code_of(raw_frame("a*\x1f")) == errc::malformed_escape);
  CHECK(code_of(raw_frame("a*\x7f")) == errc::malformed_escape);
}

TEST_CASE("round trip over random payloads") {
  std::mt19937 rng(20240611);
  std::uniform_int_distribution<int> len(0, 300);
  std::uniform_int_distribution<int> byte(0, 255);
  const std::string special = "#$}*";
  for (int i = 0; i < 2000; ++i) {
    std::string p(static_cast<std::size_t>(len(rng)), '\0');
    for (auto& c : p) c = static_cast<char>(byte(rng) < 64 ? special[static_cast<std::size_t>(byte(rng) % 4)] : byte(rng));
    auto wire = rsp::encode_packet(p, 4096);
    REQUIRE(wire == oracle::frame(p));
    auto back = rsp::decode_packet(wire);
    REQUIRE(back.payload == p);
    REQUIRE(back.raw_len == wire.size());
  }
}

TEST_CASE("stop replies") {
  auto s = rsp::parse_stop_reply("S05");
  CHECK(s.kind == rsp::stop_kind::signal);
  CHECK(*s.signal_no == 5);
  CHECK_FALSE(s.target_gone());

  auto t = rsp::parse_stop_reply("T05thread:01;08:007c0000;");
  CHECK(t.kind == rsp::stop_kind::signal_with_info);
  REQUIRE(t.info.size() == 2);
  CHECK(t.info[0] == std::pair<std::string, std::string>{"thread", "01"});
  CHECK(t.info[1].first == "08");

  auto w = rsp::parse_stop_reply("W00");
  CHECK(w.kind == rsp::stop_kind::exited);
  CHECK(*w.exit_code == 0);
  CHECK(w.target_gone());

  auto x = rsp::parse_stop_reply("X09");
  CHECK(x.kind == rsp::stop_kind::terminated);
  CHECK(x.target_gone());

  CHECK_THROWS_AS(rsp::parse_stop_reply("OK"), error);
  CHECK_THROWS_AS(rsp::parse_stop_reply(""), error);
  CHECK_THROWS_AS(rsp::parse_stop_reply("S5"), error);
}

TEST_CASE("hex helpers") {
  const std::uint8_t bytes[] = {0x55, 0xaa, 0x00, 0x0f};
  CHECK(rsp::to_hex(bytes) == "55aa000f");
  auto back = rsp::from_hex("55AA000f");
  REQUIRE(back);
  CHECK(*back == std::vector<std::uint8_t>(std::begin(bytes), std::end(bytes)));
  CHECK_FALSE(rsp::from_hex("5"));
  CHECK_FALSE(rsp::from_hex("zz"));
  CHECK(*rsp::parse_hex_u64("0x7c00") == 0x7c00);
  CHECK(*rsp::parse_hex_u64("ffffffffffffffff") == ~std::uint64_t{0});
  CHECK_FALSE(rsp::parse_hex_u64(""));
  CHECK_FALSE(rsp::parse_hex_u64("12g"));
  CHECK(rsp::hex_u64(0) == "0");
  CHECK(rsp::hex_u64(0x7dfe) == "7dfe");
  CHECK(rsp::is_error_reply("E01"));
  CHECK_FALSE(rsp::is_error_reply("OK"));
  CHECK_FALSE(rsp::is_error_reply("E1"));
}
