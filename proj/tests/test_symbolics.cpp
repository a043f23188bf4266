#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bootscope/error.hpp"
#include "bootscope/mocktarget.hpp"
#include "bootscope/symbolics.hpp"
#include "support/harness.hpp"

#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace bootscope;
using namespace bootscope::testing;

namespace {

std::string capture(const std::string& cmd) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  pclose(p);
  return out;
}

using name_addr = std::set<std::pair<std::string, std::uint64_t>>;

// FUNC/OBJECT symbols defined in the first symbol table readelf lists, which
// is .symtab when present.
name_addr readelf_symbols(const std::string& path) {
  name_addr out;
  std::istringstream in(capture("readelf -sW '" + path + "' 2>/dev/null"));
  std::string line;
  bool in_symtab = false;
  bool have_symtab = capture("readelf -SW '" + path + "' 2>/dev/null").find(".symtab") != std::string::npos;
  while (std::getline(in, line)) {
    if (line.rfind("Symbol table", 0) == 0) {
      bool is_symtab = line.find("'.symtab'") != std::string::npos;
      in_symtab = have_symtab ? is_symtab : !is_symtab;
      continue;
    }
    if (!in_symtab) continue;
    std::istringstream row(line);
    std::string num, value, size, type, bind, vis, ndx, name;
    if (!(row >> num >> value >> size >> type >> bind >> vis >> ndx)) continue;
    if (num.empty() || num.back() != ':') continue;
    std::getline(row, name);
    auto start = name.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    name = name.substr(start);
    if ((type != "FUNC" && type != "OBJECT") || ndx == "UND") continue;
    out.emplace(name, std::stoull(value, nullptr, 16));
  }
  return out;
}

name_addr ours(const symbol_index& idx) {
  name_addr out;
  for (const auto& s : idx.entries()) out.emplace(s.name, s.address);
  return out;
}

errc code_of(std::span<const std::uint8_t> image) {
  try {
    load_elf_symbols(image);
  } catch (const error& e) {
    return e.code();
  }
  return errc::io_error;
}

std::string self_path() {
  char buf[4096];
  auto n = readlink("/proc/self/exe", buf, sizeof buf - 1);
  REQUIRE(n > 0);
  return std::string(buf, static_cast<std::size_t>(n));
}

} // namespace

TEST_CASE("ELF symbols of this test binary agree with readelf") {
  auto path = self_path();
  auto expected = readelf_symbols(path);
  REQUIRE(expected.size() > 100);
  auto image = read_bytes(path);
  auto idx = load_elf_symbols(image);
  CHECK(ours(idx) == expected);
  CHECK(idx.find_by_name("main") != nullptr);
}

TEST_CASE("fixture ELF round trip agrees with readelf and the symbol map") {
  temp_dir dir;
  export_boot_fixture(dir.path());
  auto elf = dir / "fixture.elf";
  auto idx = load_elf_symbols(read_bytes(elf));
  auto from_map = load_symbol_map(boot_fixture_symbol_map());
  CHECK(ours(idx) == readelf_symbols(elf.string()));
  CHECK(ours(idx) == ours(from_map));

  auto sig = idx.find_by_name("boot_signature");
  REQUIRE(sig != nullptr);
  CHECK(sig->address == 0x7dfe);
  CHECK(sig->kind == symbol_kind::object);
  CHECK(sig->size == std::optional<std::uint64_t>(2));
  auto boot0 = idx.find_by_name("boot0");
  REQUIRE(boot0 != nullptr);
  CHECK(boot0->kind == symbol_kind::function);
}

TEST_CASE("ELF rejection kinds") {
  std::vector<std::uint8_t> junk = {'n', 'o', 'p', 'e'};
  CHECK(code_of(junk) == errc::not_elf);
  CHECK(code_of({}) == errc::not_elf);

  auto script = build_boot_fixture();
  symbol s{"f", 0x7c00, 4, symbol_kind::function};
  auto image = write_elf32(script.base, script.memory, std::span<const symbol>(&s, 1));
  CHECK(load_elf_symbols(image).size() == 1);

  auto be = image;
  be[5] = 2;
  CHECK(code_of(be) == errc::unsupported_endianness);
  auto cls = image;
  cls[4] = 7;
  CHECK(code_of(cls) == errc::not_elf);
  auto shoff = image;
  shoff[0x20] = 0xff;
  shoff[0x21] = 0xff;
  shoff[0x22] = 0xff;
  CHECK(code_of(shoff) == errc::corrupt_section_table);
  std::vector<std::uint8_t> head(image.begin(), image.begin() + 30);
  CHECK(code_of(head) == errc::corrupt_section_table);
}

TEST_CASE("truncated and corrupted ELF images never read out of bounds") {
  auto script = build_boot_fixture();
  auto symbols = load_symbol_map(boot_fixture_symbol_map());
  auto image = write_elf32(script.base, script.memory, symbols.entries());

  // Every truncation either parses or reports a typed error.
  for (std::size_t len = 0; len < image.size(); len += 7) {
    std::vector<std::uint8_t> cut(image.begin(), image.begin() + static_cast<std::ptrdiff_t>(len));
    try {
      load_elf_symbols(cut);
    } catch (const error&) {
    }
  }

  std::mt19937 rng(77);
  std::uniform_int_distribution<std::size_t> where(0, image.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 3000; ++i) {
    auto copy = image;
    for (int k = 0; k < 4; ++k) {
      // Bias mutations toward the header and section tables.
      std::size_t at = (k % 2 == 0) ? where(rng) % 64 : copy.size() - 1 - where(rng) % 256;
      copy[at] = static_cast<std::uint8_t>(byte(rng));
    }
    try {
      auto idx = load_elf_symbols(copy);
      (void)idx.size();
    } catch (const error& e) {
      auto c = e.code();
      CHECK((c == errc::not_elf || c == errc::unsupported_endianness || c == errc::corrupt_section_table));
    }
  }
}

TEST_CASE("symbol map parsing") {
  auto idx = load_symbol_map("c0100000 T start_kernel\n"
                             "c0001000 t early_idt\n"
                             "\n"
                             "c0200000 D init_task\n"
                             "c0300000 A absolute_thing\n"
                             "c0100000 T start_kernel\n"
                             "c0400000 T operator new(unsigned long)\n");
  CHECK(idx.size() == 5);
  CHECK(idx.entries().front().name == "early_idt");
  CHECK(idx.find_by_name("init_task")->kind == symbol_kind::object);
  CHECK(idx.find_by_name("absolute_thing")->kind == symbol_kind::other);
  CHECK(idx.find_by_name("operator new(unsigned long)") != nullptr);

  try {
    load_symbol_map("c0100000 T ok\nzzzz T bad\n");
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::parse_error);
    CHECK(e.line() == std::optional<std::size_t>(2));
  }
  CHECK_THROWS_AS(load_symbol_map("c0100000 ok\n"), error);
  CHECK_THROWS_AS(load_symbol_map("c0100000 TT name\n"), error);
}

TEST_CASE("nearest-preceding symbol resolution") {
  auto idx = load_symbol_map("1000 T a\n2000 T b\n2000 T b_alias\n3000 D c\n");
  CHECK(idx.find_preceding(0xfff) == nullptr);
  CHECK(idx.find_preceding(0x1000)->name == "a");
  CHECK(idx.find_preceding(0x1fff)->name == "a");
  // Later rows win among equal addresses.
  CHECK(idx.find_preceding(0x2004)->name == "b_alias");
  CHECK(idx.find_preceding(0xffffffff)->name == "c");
  CHECK(resolve_symbol(idx, "b") == 0x2000);
  try {
    resolve_symbol(idx, "nope");
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::unknown_symbol);
  }
}

TEST_CASE("duplicate names resolve to the lowest address") {
  auto idx = load_symbol_map("5000 t helper\n1000 t helper\n");
  CHECK(resolve_symbol(idx, "helper") == 0x1000);
}

TEST_CASE("line map parsing and lookup") {
  auto lines = load_line_map("# comment\n"
                             "c000\tsys/i386/i386/machdep.c\t10\n"
                             "c004\tsys/i386/i386/machdep.c\t11\n"
                             "c004\tsys/i386/i386/machdep.c\t12\n"
                             "d000\tsys/kern/sched_ule.c\t5\n");
  CHECK(lines.rows().size() == 3);
  REQUIRE(lines.warnings().size() == 1);
  CHECK(lines.find_preceding(0xbfff) == nullptr);
  CHECK(lines.find_preceding(0xc006)->line == 12);
  CHECK(lines.address_of("machdep.c", 10) == std::optional<std::uint64_t>(0xc000));
  CHECK(lines.address_of("i386/machdep.c", 12) == std::optional<std::uint64_t>(0xc004));
  CHECK_FALSE(lines.address_of("dep.c", 10));
  CHECK_FALSE(lines.address_of("machdep.c", 11));
  CHECK(lines.files() == std::vector<std::string>{"sys/i386/i386/machdep.c", "sys/kern/sched_ule.c"});
  CHECK(resolve_line(lines, "sched_ule.c", 5) == 0xd000);
  try {
    resolve_line(lines, "sched_ule.c", 6);
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::unknown_line);
  }
  CHECK_THROWS_AS(load_line_map("c000 file 10\n"), error);
  CHECK_THROWS_AS(load_line_map("c000\tfile\tten\n"), error);
  CHECK_THROWS_AS(load_line_map("c000\t\t10\n"), error);
}

TEST_CASE("resolve_addr and format_location") {
  auto idx = fixture_symbols();
  auto lines = fixture_lines();
  auto loc = resolve_addr(*idx, *lines, 0x9004);
  REQUIRE(loc.symbol);
  CHECK(*loc.symbol == "boot2");
  CHECK(loc.offset == 4);
  REQUIRE(loc.file);
  CHECK(*loc.file == "sys/boot/i386/boot2/boot2.c");
  auto text = format_location(loc);
  CHECK(text.rfind("boot2+0x4 at sys/boot/i386/boot2/boot2.c:", 0) == 0);

  auto none = resolve_addr(*idx, *lines, 0x10);
  CHECK_FALSE(none.symbol);
  CHECK(none.offset == 0);
  CHECK(format_location(none) == "0x10 (no symbol)");

  auto exact = resolve_addr(*idx, *lines, 0xd000);
  CHECK(format_location(exact).rfind("sched_init at ", 0) == 0);
}

TEST_CASE("every fixture trace pc resolves to a symbol and a line") {
  auto script = build_boot_fixture();
  auto idx = fixture_symbols();
  auto lines = fixture_lines();
  auto sources = boot_fixture_sources();
  for (auto pc : script.trace) {
    auto loc = resolve_addr(*idx, *lines, pc);
    REQUIRE(loc.symbol);
    REQUIRE(loc.file);
    REQUIRE(sources.count(*loc.file));
    // The cited line exists in the stand-in source.
    auto& text = sources[*loc.file];
    CHECK(static_cast<unsigned>(std::count(text.begin(), text.end(), '\n')) >= *loc.line);
  }
}
