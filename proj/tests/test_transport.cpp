#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bootscope/mocktarget.hpp"
#include "bootscope/transport.hpp"
#include "support/oracles.hpp"

#include <thread>

using namespace bootscope;
using namespace std::chrono_literals;

namespace {

link_config config_for(const mock_stub& stub) {
  link_config cfg;
  cfg.port = stub.port();
  cfg.response_timeout = 2000ms;
  return cfg;
}

errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return errc::io_error;
}

} // namespace

TEST_CASE("config validation") {
  link_config cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.port = 0;
  CHECK(code_of([&] { cfg.validate(); }) == errc::invalid_config);
  cfg.port = 65536;
  CHECK(code_of([&] { cfg.validate(); }) == errc::invalid_config);
  cfg.port = 1234;
  cfg.response_timeout = 0ms;
  CHECK(code_of([&] { cfg.validate(); }) == errc::invalid_config);
}

TEST_CASE("connect to a closed port fails") {
  // Grab an ephemeral port, then release it so nothing listens there.
  int port = 0;
  {
    auto stub = mock_stub::serve(build_boot_fixture());
    port = stub->port();
  }
  link_config cfg;
  cfg.port = port;
  cfg.response_timeout = 500ms;
  CHECK(code_of([&] { link::connect(cfg); }) == errc::connect_failed);
}

TEST_CASE("exchange against the fixture stub") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = link::connect(config_for(*stub));
  CHECK(l.state() == link_state::idle);

  std::vector<std::pair<direction, std::string>> seen;
  l.set_observer([&](direction d, std::string_view p) { seen.emplace_back(d, std::string(p)); });

  CHECK(l.exchange("?").payload == "S05");
  CHECK(l.exchange("m7dfe,2").payload == "55aa");
  CHECK(l.state() == link_state::idle);
  REQUIRE(seen.size() == 4);
  CHECK(seen[0] == std::pair<direction, std::string>{direction::sent, "?"});
  CHECK(seen[1] == std::pair<direction, std::string>{direction::received, "S05"});
  CHECK(l.retransmissions() == 0);

  // Every frame on the wire is the oracle framing of its payload.
  auto wire = stub->wire();
  CHECK(wire.received.find(oracle::frame("?")) != std::string::npos);
  CHECK(wire.received.find(oracle::frame("m7dfe,2")) != std::string::npos);
  CHECK(wire.sent.find("+" + oracle::frame("S05")) != std::string::npos);
}

TEST_CASE("nack triggers an identical retransmission") {
  fault_injection f;
  f.nack_first = 2;
  auto stub = mock_stub::serve(build_boot_fixture(), 0, "127.0.0.1", f);
  auto l = link::connect(config_for(*stub));
  CHECK(l.exchange("?").payload == "S05");
  CHECK(l.retransmissions() == 2);

  auto received = stub->wire().received;
  auto framed = oracle::frame("?");
  std::size_t count = 0;
  for (auto pos = received.find(framed); pos != std::string::npos; pos = received.find(framed, pos + 1)) ++count;
  CHECK(count == 3);
}

TEST_CASE("persistent nacks exhaust retries") {
  fault_injection f;
  f.nack_first = 100;
  auto stub = mock_stub::serve(build_boot_fixture(), 0, "127.0.0.1", f);
  auto cfg = config_for(*stub);
  cfg.max_retries = 3;
  auto l = link::connect(cfg);
  CHECK(code_of([&] { l.exchange("?"); }) == errc::retries_exhausted);
  CHECK(l.state() == link_state::disconnected);
  CHECK(l.retransmissions() == 3);
}

TEST_CASE("corrupt replies are nacked and resent") {
  fault_injection f;
  f.corrupt_first_replies = 2;
  auto stub = mock_stub::serve(build_boot_fixture(), 0, "127.0.0.1", f);
  auto l = link::connect(config_for(*stub));
  CHECK(l.exchange("?").payload == "S05");
  CHECK(l.exchange("m7dfe,2").payload == "55aa");
  auto received = stub->wire().received;
  CHECK(std::count(received.begin(), received.end(), '-') == 2);
}

TEST_CASE("silent stub times out and disconnects") {
  fault_injection f;
  f.silent = true;
  auto stub = mock_stub::serve(build_boot_fixture(), 0, "127.0.0.1", f);
  auto cfg = config_for(*stub);
  cfg.response_timeout = 150ms;
  auto l = link::connect(cfg);
  auto t0 = std::chrono::steady_clock::now();
  CHECK(code_of([&] { l.exchange("?"); }) == errc::timeout);
  auto waited = std::chrono::steady_clock::now() - t0;
  CHECK(waited >= 140ms);
  CHECK(waited < 2000ms);
  CHECK(l.state() == link_state::disconnected);
  CHECK(code_of([&] { l.exchange("?"); }) == errc::link_closed);
}

TEST_CASE("per-call timeout overrides the configured one") {
  fault_injection f;
  f.silent = true;
  auto stub = mock_stub::serve(build_boot_fixture(), 0, "127.0.0.1", f);
  auto l = link::connect(config_for(*stub));
  auto t0 = std::chrono::steady_clock::now();
  CHECK(code_of([&] { l.exchange("?", 100ms); }) == errc::timeout);
  CHECK(std::chrono::steady_clock::now() - t0 < 1500ms);
}

TEST_CASE("only one command in flight") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = link::connect(config_for(*stub));
  std::optional<errc> nested;
  l.set_observer([&](direction d, std::string_view) {
    if (d != direction::sent || nested) return;
    CHECK(l.state() == link_state::awaiting_response);
    nested = code_of([&] { l.exchange("g"); });
    CHECK(code_of([&] { l.reconnect(); }) == errc::busy_link);
  });
  CHECK(l.exchange("?").payload == "S05");
  REQUIRE(nested);
  CHECK(*nested == errc::busy_link);
}

TEST_CASE("peer going away surfaces as link_closed") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = link::connect(config_for(*stub));
  CHECK(l.exchange("?").payload == "S05");
  stub->stop();
  auto code = code_of([&] {
    // The first send may still succeed into the socket buffer.
    for (int i = 0; i < 3; ++i) l.exchange("?");
  });
  CHECK(code == errc::link_closed);
  CHECK(l.state() == link_state::disconnected);
}

TEST_CASE("reconnect after a drop") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = link::connect(config_for(*stub));
  l.close();
  CHECK(code_of([&] { l.exchange("?"); }) == errc::link_closed);
  l.reconnect();
  CHECK(l.exchange("?").payload == "S05");
}

TEST_CASE("payload limit applies before sending") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto cfg = config_for(*stub);
  cfg.packet_limit = 8;
  auto l = link::connect(cfg);
  CHECK(code_of([&] { l.exchange("M7c00,4:00000000"); }) == errc::payload_too_large);
  CHECK(l.state() == link_state::idle);
  CHECK(l.exchange("?").payload == "S05");
}
