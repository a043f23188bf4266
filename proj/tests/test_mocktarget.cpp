#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bootscope/error.hpp"
#include "bootscope/mocktarget.hpp"
#include "bootscope/transport.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

#include <random>

using namespace bootscope;
using namespace bootscope::testing;

namespace {

bootscope::link dial(const mock_stub& stub) {
  link_config cfg;
  cfg.port = stub.port();
  cfg.response_timeout = std::chrono::milliseconds(2000);
  return bootscope::link::connect(cfg);
}

std::string ask(bootscope::link& l, std::string_view payload) { return l.exchange(payload).payload; }

target_script tiny(std::vector<std::uint64_t> trace) {
  target_script s;
  s.name = "tiny";
  s.base = 0x1000;
  s.memory.assign(0x100, 0x90);
  s.trace = std::move(trace);
  s.entry_pc = s.trace.front();
  return s;
}

std::uint64_t pc_of(bootscope::link& l) {
  return decode_registers(register_layout::i386(), ask(l, "g")).pc();
}

} // namespace

TEST_CASE("initial stop reply frames as S05") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = dial(*stub);
  CHECK(ask(l, "?") == "S05");
  CHECK(stub->wire().sent.find("$S05#b8") != std::string::npos);
  CHECK(ask(l, "qSupported:multiprocess+").rfind("PacketSize=", 0) == 0);
  CHECK(ask(l, "vMustReplyEmpty").empty());
}

TEST_CASE("registers report the trace pc and keep it across G") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = dial(*stub);
  auto regs = decode_registers(register_layout::i386(), ask(l, "g"));
  CHECK(regs.pc() == 0x7c00);
  CHECK(regs.get("ESP") == 0x7c00);
  regs.set("EAX", 0xdeadbeef);
  regs.set_pc(0x1234);
  CHECK(ask(l, "G" + encode_registers(regs)) == "OK");
  auto back = decode_registers(register_layout::i386(), ask(l, "g"));
  CHECK(back.get("EAX") == 0xdeadbeef);
  CHECK(back.pc() == 0x7c00);
  CHECK(ask(l, "G00") == "E01");
}

TEST_CASE("memory writes echo back and bounds are enforced") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto l = dial(*stub);
  CHECK(ask(l, "M9000,4:01020304") == "OK");
  CHECK(ask(l, "m9000,4") == "01020304");
  CHECK(stub->state().memory[0x9000 - 0x7c00] == 0x01);
  CHECK(ask(l, "m7bff,1") == "E01");
  CHECK(ask(l, "mdfff,1").size() == 2);
  CHECK(ask(l, "mdfff,2") == "E01");
  CHECK(ask(l, "m7c00,801") == "E01");
  CHECK(ask(l, "m7c00,800").size() == 0x1000);
  CHECK(ask(l, "M9000,2:01") == "E01");
  CHECK(ask(l, "M9000,1") == "E01");
  CHECK(ask(l, "mzz,1") == "E01");
  CHECK(ask(l, "m9000") == "E01");
}

TEST_CASE("boot sector carries the signature and a 4 x 16 partition table") {
  auto script = build_boot_fixture();
  REQUIRE(script.memory.size() >= 0x200);
  CHECK(script.base == 0x7c00);
  CHECK(script.memory[0x1fe] == 0x55);
  CHECK(script.memory[0x1ff] == 0xaa);

  auto stub = mock_stub::serve(script);
  auto l = dial(*stub);
  CHECK(ask(l, "m7dfe,2") == "55aa");
  auto table = rsp::from_hex(ask(l, "m7dbe,40"));
  REQUIRE(table);
  REQUIRE(table->size() == 64);
  for (std::size_t entry = 0; entry < 4; ++entry) {
    std::uint8_t status = (*table)[entry * 16];
    CHECK((status == 0x00 || status == 0x80));
  }
  // First entry: active FreeBSD slice starting at sector 63.
  CHECK((*table)[0] == 0x80);
  CHECK((*table)[4] == 0xa5);
  std::uint32_t lba = (*table)[8] | (*table)[9] << 8 | (*table)[10] << 16 | static_cast<std::uint32_t>((*table)[11]) << 24;
  CHECK(lba == 63);

  auto syms = load_symbol_map(boot_fixture_symbol_map());
  CHECK(syms.find_by_name("partition_table")->address == 0x7c00 + 0x1be);
  CHECK(syms.find_by_name("boot_signature")->address == 0x7c00 + 0x1fe);
}

TEST_CASE("the fixture image carries no stray trap bytes") {
  auto script = build_boot_fixture();
  CHECK(std::find(script.memory.begin(), script.memory.end(), 0xcc) == script.memory.end());
}

TEST_CASE("step walks the trace and ends with W00") {
  auto stub = mock_stub::serve(tiny({0x1000, 0x1004, 0x1008}));
  auto l = dial(*stub);
  CHECK(ask(l, "s") == "S05");
  CHECK(pc_of(l) == 0x1004);
  CHECK(ask(l, "s") == "S05");
  CHECK(pc_of(l) == 0x1008);
  CHECK(ask(l, "s") == "W00");
  CHECK(ask(l, "?") == "W00");
  CHECK(ask(l, "g") == "E01");
  CHECK(ask(l, "s") == "W00");
  CHECK(ask(l, "c") == "W00");
  CHECK(stub->state().finished);
}

TEST_CASE("Z0 support toggles") {
  auto on = mock_stub::serve(build_boot_fixture(true));
  auto l = dial(*on);
  CHECK(ask(l, "Z0,9000,1") == "OK");
  CHECK(on->state().z0 == std::set<std::uint64_t>{0x9000});
  CHECK(ask(l, "z0,9000,1") == "OK");
  CHECK(on->state().z0.empty());

  auto off = mock_stub::serve(build_boot_fixture(false));
  auto m = dial(*off);
  CHECK(ask(m, "Z0,9000,1").empty());
}

TEST_CASE("continue matches the brute-force oracle") {
  std::mt19937 rng(4242);
  for (int round = 0; round < 60; ++round) {
    std::uniform_int_distribution<int> len(1, 40);
    std::uniform_int_distribution<int> slot(0, 15);
    std::vector<std::uint64_t> trace(static_cast<std::size_t>(len(rng)));
    for (auto& pc : trace) pc = 0x1000 + 4 * static_cast<std::uint64_t>(slot(rng));
    auto script = tiny(trace);
    std::set<std::uint64_t> bps;
    std::uniform_int_distribution<int> nbp(0, 4);
    for (int i = nbp(rng); i > 0; --i) bps.insert(0x1000 + 4 * static_cast<std::uint64_t>(slot(rng)));

    // Half the rounds use Z0, half patch 0xCC.
    bool patch = round % 2 == 1;
    auto stub = mock_stub::serve(script);
    auto l = dial(*stub);
    for (auto a : bps) {
      if (patch) {
        CHECK(ask(l, "M" + rsp::hex_u64(a) + ",1:cc") == "OK");
      } else {
        CHECK(ask(l, "Z0," + rsp::hex_u64(a) + ",1") == "OK");
      }
    }
    std::size_t pos = 0;
    for (;;) {
      auto expect = oracle::next_stop(trace, pos, bps);
      auto reply = ask(l, "c");
      if (!expect) {
        CHECK(reply == "W00");
        break;
      }
      REQUIRE(reply == "S05");
      CHECK(stub->state().position == *expect);
      CHECK(pc_of(l) == trace[*expect]);
      pos = *expect;
    }
  }
}

TEST_CASE("identical command sequences produce identical transcripts") {
  auto run = [] {
    auto stub = mock_stub::serve(build_boot_fixture());
    {
      auto l = dial(*stub);
      for (const char* cmd : {"?", "g", "Z0,9000,1", "c", "g", "m9000,10", "s", "s", "c", "c", "c", "c"}) ask(l, cmd);
    }
    auto w = stub->wire();
    // The ack for the last reply may or may not land before the close.
    while (!w.received.empty() && w.received.back() == '+') w.received.pop_back();
    return w;
  };
  auto a = run();
  auto b = run();
  CHECK(a.received == b.received);
  CHECK(a.sent == b.sent);
  CHECK(!a.sent.empty());
}

TEST_CASE("a second client is refused while one is attached") {
  auto stub = mock_stub::serve(build_boot_fixture());
  auto first = dial(*stub);
  CHECK(ask(first, "?") == "S05");
  auto second = dial(*stub);
  CHECK_THROWS_AS(second.exchange("?"), error);
  CHECK(ask(first, "?") == "S05");
  auto st = stub->state();
  CHECK(st.connections == 1);
  CHECK(st.refused == 1);
}

TEST_CASE("script validation") {
  auto s = tiny({0x1000, 0x1004});
  CHECK_NOTHROW(s.validate());
  auto empty = s;
  empty.trace.clear();
  CHECK_THROWS_AS(empty.validate(), error);
  auto entry = s;
  entry.entry_pc = 0x1004;
  CHECK_THROWS_AS(entry.validate(), error);
  auto outside = s;
  outside.trace.push_back(0x5000);
  CHECK_THROWS_AS(outside.validate(), error);
  outside.external.insert(0x5000);
  CHECK_NOTHROW(outside.validate());
  CHECK_THROWS_AS(mock_stub::serve(empty), error);
}

TEST_CASE("script files round trip") {
  temp_dir dir;
  auto script = build_boot_fixture(false);
  script.registers.set("EAX", 0x1234);
  save_script(script, dir / "boot.script");
  CHECK(std::filesystem::exists(dir / "boot.bin"));
  auto back = load_script_file(dir / "boot.script");
  CHECK(back.name == script.name);
  CHECK(back.base == script.base);
  CHECK(back.memory == script.memory);
  CHECK(back.entry_pc == script.entry_pc);
  CHECK(back.trace == script.trace);
  CHECK(back.external == script.external);
  CHECK(back.registers.values == script.registers.values);
  CHECK_FALSE(back.features.z0_supported);

  export_image(script, dir / "raw.img");
  CHECK(read_bytes(dir / "raw.img") == script.memory);
}

TEST_CASE("script parse errors carry line numbers") {
  temp_dir dir;
  write_text(dir / "img.bin", std::string(16, '\x90'));
  auto parse = [&](const std::string& text) { return load_script(text, dir.path()); };

  auto ok = parse("base 0x100\nimage img.bin\ntrace 100 104 # comment\ntrace 108\nreg EAX 5\n");
  CHECK(ok.entry_pc == 0x100);
  CHECK(ok.trace.size() == 3);
  CHECK(ok.registers.get("EAX") == 5);

  auto custom = parse("base 0\nimage img.bin\nregister r0 16\nregister ip 16 pc\ntrace 0 2\n");
  CHECK(custom.registers.layout.registers().size() == 2);
  CHECK(custom.registers.layout.pc_index() == 1);

  auto line_of = [&](const std::string& text) -> std::optional<std::size_t> {
    try {
      parse(text);
    } catch (const error& e) {
      CHECK(e.code() == errc::parse_error);
      return e.line();
    }
    FAIL("no error for " << text);
    return std::nullopt;
  };
  CHECK(line_of("base 0\nbogus 1\n") == std::optional<std::size_t>(2));
  CHECK(line_of("base zz\n") == std::optional<std::size_t>(1));
  CHECK(line_of("base 0\nimage img.bin\ntrace 0\nz0 maybe\n") == std::optional<std::size_t>(4));
  CHECK_THROWS_AS(parse("base 0\nimage img.bin\n"), error);
  CHECK_THROWS_AS(parse("base 0\nimage missing.bin\ntrace 0\n"), error);
}

TEST_CASE("exported fixture directory is complete") {
  temp_dir dir;
  export_boot_fixture(dir.path());
  for (const char* f : {"fixture.script", "fixture.bin", "fixture.elf", "symbols.map", "lines.tsv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  for (const auto& [rel, text] : boot_fixture_sources()) {
    CHECK(read_text(dir / ("src/" + rel)) == text);
  }
  auto script = load_script_file(dir / "fixture.script");
  CHECK(script.trace == build_boot_fixture().trace);
  CHECK(read_text(dir / "symbols.map") == boot_fixture_symbol_map());
}
