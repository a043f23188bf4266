// The built-in boot fixture. Everything here is stand-in content laid out so
// the symbol map, line map, image and trace agree with each other.

#include "bootscope/error.hpp"
#include "bootscope/mocktarget.hpp"
#include "bootscope/rsp.hpp"

#include <fstream>
#include <sstream>

namespace bootscope {

namespace {

constexpr std::uint64_t fixture_base = 0x7c00;
constexpr std::uint64_t fixture_end = 0xe000;

struct fixture_symbol {
  const char* name;
  std::uint64_t address;
  std::uint64_t size;
  char kind;
};

constexpr fixture_symbol fixture_symbols[] = {
    {"boot0", 0x7c00, 0x80, 'T'},         {"read_sector", 0x7c80, 0x13e, 'T'},
    {"partition_table", 0x7dbe, 64, 'D'}, {"boot_signature", 0x7dfe, 2, 'D'},
    {"boot2", 0x9000, 0x200, 'T'},        {"boot2_lookup", 0x9200, 0x100, 'T'},
    {"loader", 0xa000, 0x400, 'T'},       {"loader_interp", 0xa400, 0x100, 'T'},
    {"init386", 0xc000, 0x100, 'T'},      {"sched_init", 0xd000, 0x100, 'T'},
};

struct source_line {
  const char* text;
  std::uint64_t pc = 0; // 0: no code
};

struct source_file {
  const char* path;
  std::vector<source_line> lines;
};

const std::vector<source_file>& fixture_sources() {
  static const std::vector<source_file> files = {
      {"sys/boot/i386/boot0/boot0.S",
       {
           {"/*"},
           {" * boot0 stand-in: the MBR loaded by the BIOS at 0x7c00."},
           {" */"},
           {""},
           {"\t.code16"},
           {"\t.globl boot0"},
           {"boot0:"},
           {"\tcli", 0x7c00},
           {"\txorw %ax,%ax", 0x7c03},
           {"\tmovw %ax,%ds", 0x7c06},
           {"\tcall read_sector", 0x7c0a},
           {"\tjmp boot2_entry", 0x7c10},
           {""},
           {"read_sector:"},
           {"\tmovb $0x2,%ah", 0x7c80},
           {"\tint $0x13", 0x7c84},
           {"\tret", 0x7c88},
       }},
      {"sys/boot/i386/boot2/boot2.c",
       {
           {"/* boot2 stand-in: finds the loader in the UFS slice. */"},
           {""},
           {"static int boot2_lookup(const char *path);"},
           {""},
           {"void"},
           {"boot2(void)"},
           {"{"},
           {"\tint tries;"},
           {""},
           {"\ttries = 0;", 0x9000},
           {"\twhile (tries < 2) {", 0x9004},
           {"\t\tif (boot2_lookup(\"/boot/loader\") == 0)", 0x9008},
           {"\t\t\ttries++;"},
           {"\t}"},
           {"\tload();", 0x900c},
           {"\texec_loader();", 0x9010},
           {"}"},
           {""},
           {"static int"},
           {"boot2_lookup(const char *path)"},
           {"{"},
           {"\t/* directory scan elided */"},
           {"\tino = lookup_inode(path);", 0x9200},
           {"\treturn (ino == 0);", 0x9204},
           {"}"},
       }},
      {"sys/boot/i386/loader/main.c",
       {
           {"/* loader stand-in. */"},
           {""},
           {"int"},
           {"loader(void)"},
           {"{"},
           {"\tcons_probe();", 0xa000},
           {"\tloader_interp();", 0xa004},
           {"\treturn (0);", 0xa008},
           {"}"},
           {""},
           {"void"},
           {"loader_interp(void)"},
           {"{"},
           {"\tread_loader_conf();", 0xa400},
           {"\tautoboot();", 0xa404},
           {"}"},
       }},
      {"sys/i386/i386/machdep.c",
       {
           {"/* init386 stand-in: early machine-dependent setup. */"},
           {""},
           {"void"},
           {"init386(int first)"},
           {"{"},
           {"\tthread0.td_kstack = proc0kstack;", 0xc000},
           {"\tmetadata_missing = 0;", 0xc004},
           {"\tinit_param1();", 0xc008},
           {"\tsetidt_all();", 0xc00c},
           {"\tlidt(&r_idt);", 0xc010},
           {"\tinit_param2(physmem);", 0xc014},
           {"\tcninit();", 0xc018},
           {"\tgetmemsize(first);", 0xc01c},
           {"\tmi_startup();", 0xc020},
           {"}"},
       }},
      {"sys/kern/sched_ule.c",
       {
           {"/* sched_init stand-in. */"},
           {""},
           {"void"},
           {"sched_init(void)"},
           {"{"},
           {"\tsched_setup_smp();", 0xd000},
           {"\tsched_initticks(NULL);", 0xd004},
           {"\ttdq_setup(TDQ_SELF());", 0xd008},
           {"}"},
       }},
  };
  return files;
}

const std::vector<std::uint64_t>& fixture_trace() {
  static const std::vector<std::uint64_t> trace = [] {
    std::vector<std::uint64_t> t = {
        0x7c00, 0x7c03, 0x7c06, 0x7c0a, 0x7c80, 0x7c84, 0x7c88, 0x7c10,                         // boot0
        0x9000, 0x9004, 0x9008, 0x9200, 0x9204, 0x9004, 0x9008, 0x9200, 0x9204, 0x900c, 0x9010, // boot2
        0xa000, 0xa004, 0xa400, 0xa404, 0xa008,                                                 // loader
    };
    for (std::uint64_t pc = 0xc000; pc <= 0xc020; pc += 4) t.push_back(pc);
    for (std::uint64_t pc = 0xd000; pc <= 0xd008; pc += 4) t.push_back(pc);
    return t;
  }();
  return trace;
}

std::vector<std::uint8_t> fixture_image() {
  std::vector<std::uint8_t> mem(fixture_end - fixture_base);
  for (std::size_t i = 0; i < mem.size(); ++i) {
    auto b = static_cast<std::uint8_t>((i * 37 + 0x11) & 0xff);
    mem[i] = b == 0xcc ? 0x90 : b;
  }
  // MBR partition table: four 16-byte records at offset 0x1be.
  auto* table = mem.data() + 0x1be;
  std::fill(table, table + 64, 0);
  const std::uint8_t first[16] = {0x80, 0x01, 0x01, 0x00, 0xa5, 0xfe, 0xff, 0xff,
                                  0x3f, 0x00, 0x00, 0x00, 0x41, 0x9c, 0x3f, 0x00};
  std::copy(first, first + 16, table);
  mem[0x1fe] = 0x55;
  mem[0x1ff] = 0xaa;
  return mem;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::io_error, "cannot write " + path.string());
  out << text;
}

} // namespace

target_script build_boot_fixture(bool z0_supported) {
  target_script s;
  s.name = z0_supported ? "boot-fixture" : "boot-fixture-no-z0";
  s.base = fixture_base;
  s.memory = fixture_image();
  s.trace = fixture_trace();
  s.entry_pc = s.trace.front();
  s.registers.set("ESP", 0x7c00);
  s.registers.set("EFLAGS", 0x2);
  s.registers.set_pc(s.entry_pc);
  s.features.z0_supported = z0_supported;
  return s;
}

std::string boot_fixture_symbol_map() {
  std::ostringstream out;
  for (const auto& s : fixture_symbols) {
    out << std::string(8 - std::min<std::size_t>(8, rsp::hex_u64(s.address).size()), '0') << rsp::hex_u64(s.address)
        << ' ' << s.kind << ' ' << s.name << '\n';
  }
  return out.str();
}

std::string boot_fixture_line_map() {
  std::ostringstream out;
  out << "# address\tfile\tline\n";
  for (const auto& f : fixture_sources()) {
    for (std::size_t i = 0; i < f.lines.size(); ++i) {
      if (f.lines[i].pc != 0) out << "0x" << rsp::hex_u64(f.lines[i].pc) << '\t' << f.path << '\t' << i + 1 << '\n';
    }
  }
  return out.str();
}

std::map<std::string, std::string> boot_fixture_sources() {
  std::map<std::string, std::string> out;
  for (const auto& f : fixture_sources()) {
    std::string text;
    for (const auto& l : f.lines) {
      text += l.text;
      text += '\n';
    }
    out.emplace(f.path, std::move(text));
  }
  return out;
}

void export_boot_fixture(const std::filesystem::path& dir, bool z0_supported) {
  std::filesystem::create_directories(dir);
  auto script = build_boot_fixture(z0_supported);
  save_script(script, dir / "fixture.script");

  std::vector<symbol> syms;
  for (const auto& s : fixture_symbols) {
    syms.push_back({s.name, s.address, s.size, s.kind == 'T' ? symbol_kind::function : symbol_kind::object});
  }
  auto elf = write_elf32(script.base, script.memory, syms);
  std::ofstream out(dir / "fixture.elf", std::ios::binary);
  if (!out) throw error(errc::io_error, "cannot write " + (dir / "fixture.elf").string());
  out.write(reinterpret_cast<const char*>(elf.data()), static_cast<std::streamsize>(elf.size()));
  out.close();

  write_text(dir / "symbols.map", boot_fixture_symbol_map());
  write_text(dir / "lines.tsv", boot_fixture_line_map());
  for (const auto& [path, text] : boot_fixture_sources()) write_text(dir / "src" / path, text);
}

} // namespace bootscope
