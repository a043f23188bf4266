#include "bootscope/boottrace.hpp"

#include "bootscope/error.hpp"
#include "bootscope/rsp.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace bootscope {

std::string milestone::describe_target() const {
  if (const auto* name = std::get_if<std::string>(&target)) return *name;
  return "0x" + rsp::hex_u64(std::get<std::uint64_t>(target));
}

const milestone* milestone_catalog::find(std::string_view key) const noexcept {
  for (const auto& m : milestones) {
    if (m.key == key) return &m;
  }
  return nullptr;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void catalog_fail(std::size_t no, const std::string& why) {
  throw error(errc::parse_error, "catalog line " + std::to_string(no) + ": " + why, no);
}

} // namespace

milestone_catalog load_catalog(std::string_view text) {
  milestone_catalog cat;
  std::set<std::string, std::less<>> keys;
  milestone* current = nullptr;
  bool has_target = false;
  std::size_t block_line = 0;

  auto close_block = [&] {
    if (current && !has_target) catalog_fail(block_line, "milestone " + current->key + " has no symbol or address");
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t no = 0;
  while (std::getline(in, raw)) {
    ++no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') catalog_fail(no, "unterminated block header");
      auto inner = trim(line.substr(1, line.size() - 2));
      if (!inner.starts_with("milestone ")) catalog_fail(no, "expected [milestone <key>]");
      auto key = trim(inner.substr(10));
      if (key.empty() || key.find_first_of(" \t") != std::string_view::npos) catalog_fail(no, "bad milestone key");
      close_block();
      if (!keys.emplace(key).second) {
        throw error(errc::duplicate_key, "catalog line " + std::to_string(no) + ": milestone " + std::string(key) +
                                             " defined twice", no);
      }
      cat.milestones.push_back({std::string(key), std::string(), "", {}});
      current = &cat.milestones.back();
      has_target = false;
      block_line = no;
      continue;
    }

    if (!current) {
      if (line.starts_with("catalog ") || line.starts_with("catalog\t")) {
        if (!cat.name.empty()) catalog_fail(no, "catalog named twice");
        cat.name = std::string(trim(line.substr(8)));
        continue;
      }
      catalog_fail(no, "expected 'catalog <name>' or a milestone block");
    }

    auto eq = line.find('=');
    if (eq == std::string_view::npos) catalog_fail(no, "expected <field> = <value>");
    auto field = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.empty()) catalog_fail(no, "empty value for " + std::string(field));

    if (field == "symbol" || field == "address") {
      if (has_target) catalog_fail(no, "milestone " + current->key + " already has a target");
      if (field == "symbol") {
        current->target = std::string(value);
      } else {
        auto addr = rsp::parse_hex_u64(value);
        if (!addr) catalog_fail(no, "address is not hexadecimal");
        current->target = *addr;
      }
      has_target = true;
    } else if (field == "source") {
      current->source_location = std::string(value);
    } else if (field == "note") {
      current->notes.emplace_back(value);
    } else {
      catalog_fail(no, "unknown field '" + std::string(field) + "'");
    }
  }
  close_block();
  if (cat.name.empty()) throw error(errc::parse_error, "catalog has no name");
  return cat;
}

namespace {

constexpr std::string_view freebsd8_i386 = R"(catalog freebsd8-i386

[milestone boot0]
symbol = boot0
source = sys/boot/i386/boot0/boot0.S
note = MBR loaded at 0x7c00 by INT 0x19
note = partition table at offset 0x1be, 4 records x 16 bytes

[milestone boot2]
symbol = boot2
source = sys/boot/i386/boot2/boot2.c
note = locates /boot/loader on the filesystem
note = reads it in through the BIOS and jumps to its entry point

[milestone loader]
symbol = loader
source = sys/boot/i386/boot/loader
note = final bootstrap stage, calls into the loaded kernel
note = scriptable for automation and recovery

[milestone init386]
symbol = init386
source = sys/i386/i386/machdep.c
note = kernel tunables from the bootstrap
note = GDT, IDT, TSS and LDT setup
note = console and DDB init
note = proc0 pcb
)";

constexpr std::string_view linux_x86 = R"(catalog linux-x86

[milestone sched_init]
symbol = sched_init
source = init/main.c
note = scheduler setup during start_kernel
)";

} // namespace

std::vector<std::string> builtin_catalog_names() { return {"freebsd8-i386", "linux-x86"}; }

std::string builtin_catalog_text(std::string_view name) {
  if (name == "freebsd8-i386") return std::string(freebsd8_i386);
  if (name == "linux-x86") return std::string(linux_x86);
  throw error(errc::invalid_argument, "no built-in catalog named " + std::string(name));
}

milestone_catalog builtin_catalog(std::string_view name) { return load_catalog(builtin_catalog_text(name)); }

milestone_catalog open_catalog(std::string_view spec) {
  if (spec.starts_with("builtin:")) return builtin_catalog(spec.substr(8));
  std::ifstream in{std::filesystem::path(spec)};
  if (!in) throw error(errc::io_error, "cannot open catalog " + std::string(spec));
  std::stringstream buf;
  buf << in.rdbuf();
  return load_catalog(buf.str());
}

std::string_view to_string(trace_outcome o) noexcept {
  switch (o) {
  case trace_outcome::completed: return "completed";
  case trace_outcome::target_exited_early: return "target_exited_early";
  case trace_outcome::budget_exhausted: return "budget_exhausted";
  }
  return "?";
}

boot_trace trace_boot(session& s, const milestone_catalog& cat, std::size_t budget, trace_options opts,
                      const trace_progress& progress) {
  if (cat.milestones.empty()) throw error(errc::empty_catalog, "catalog " + cat.name + " has no milestones");

  boot_trace out;
  out.catalog_name = cat.name;

  // address -> catalog index of the first milestone there
  std::map<std::uint64_t, std::size_t> by_addr;
  for (std::size_t i = 0; i < cat.milestones.size(); ++i) {
    const auto& m = cat.milestones[i];
    std::uint64_t addr = 0;
    if (const auto* name = std::get_if<std::string>(&m.target)) {
      const auto* sym = s.symbols().find_by_name(*name);
      if (!sym) {
        out.warnings.push_back("milestone " + m.key + ": symbol " + *name + " not found, skipped");
        continue;
      }
      addr = sym->address;
    } else {
      addr = std::get<std::uint64_t>(m.target);
    }
    if (!by_addr.emplace(addr, i).second) {
      out.warnings.push_back("milestone " + m.key + " shares address 0x" + rsp::hex_u64(addr) + " with " +
                             cat.milestones[by_addr[addr]].key + ", skipped");
    }
  }

  std::vector<int> created;
  std::vector<int> reenable_off; // pre-existing disabled breakpoints turned on for the trace
  std::map<std::uint64_t, int> bp_at;
  auto cleanup = [&] {
    if (s.current_phase() != phase::stopped) return;
    for (int id : created) s.remove_breakpoint(id);
    for (int id : reenable_off) s.enable_breakpoint(id, false);
  };

  std::set<std::size_t> seen;
  std::size_t resumes = 0;
  std::size_t highest = 0;

  auto record = [&](std::uint64_t pc) {
    auto it = by_addr.find(pc);
    if (it == by_addr.end()) return;
    auto index = it->second;
    bool first = seen.insert(index).second;
    if (!first && !opts.record_reentry) return;
    trace_event ev{out.events.size(), cat.milestones[index].key, pc, resumes, !out.events.empty() && index < highest};
    highest = std::max(highest, index);
    out.events.push_back(ev);
    if (progress) progress(out.events.back());
  };
  auto all_seen = [&] { return seen.size() == by_addr.size(); };
  auto done = [&] {
    if (!opts.record_reentry && all_seen()) return true;
    return out.events.size() >= budget;
  };

  try {
    for (const auto& [addr, index] : by_addr) {
      std::vector<int> before;
      for (const auto& bp : s.breakpoints()) before.push_back(bp.id);
      const auto& bp = s.set_breakpoint(raw_origin{addr});
      int id = bp.id;
      if (std::find(before.begin(), before.end(), id) == before.end()) {
        created.push_back(id);
      } else if (!bp.enabled) {
        s.enable_breakpoint(id, true);
        reenable_off.push_back(id);
      }
      bp_at[addr] = id;
    }

    if (!by_addr.empty()) {
      if (s.current_phase() == phase::stopped) record(s.current_pc());
      while (!done() && s.current_phase() == phase::stopped) {
        auto stop = s.continue_run();
        ++resumes;
        if (stop.target_exited()) break;
        record(stop.pc);
        // Without re-entry recording, a seen milestone never needs to fire again.
        if (!opts.record_reentry) {
          auto it = by_addr.find(stop.pc);
          if (it != by_addr.end() && std::find(created.begin(), created.end(), bp_at[stop.pc]) != created.end()) {
            s.enable_breakpoint(bp_at[stop.pc], false);
          }
        }
      }
    }
  } catch (...) {
    try {
      cleanup();
    } catch (...) {
    }
    throw;
  }
  cleanup();

  bool exited = s.current_phase() == phase::exited;
  if (!opts.record_reentry && all_seen() && !by_addr.empty()) {
    out.outcome = trace_outcome::completed;
  } else if (out.events.size() >= budget) {
    out.outcome = trace_outcome::budget_exhausted;
  } else if (exited && (!opts.record_reentry || !all_seen())) {
    out.outcome = trace_outcome::target_exited_early;
  } else {
    out.outcome = trace_outcome::completed;
  }
  return out;
}

namespace {

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

} // namespace

std::string render_flow(const boot_trace& trace, const milestone_catalog& cat, flow_format format) {
  std::ostringstream out;
  if (format == flow_format::dot) {
    out << "digraph boot_flow {\n  rankdir=LR;\n  node [shape=box];\n";
    for (const auto& ev : trace.events) {
      out << "  e" << ev.seq << " [label=\"" << dot_escape(ev.milestone_key) << "\\n0x" << rsp::hex_u64(ev.pc)
          << "\"];\n";
    }
    for (std::size_t i = 1; i < trace.events.size(); ++i) {
      out << "  e" << trace.events[i - 1].seq << " -> e" << trace.events[i].seq << ";\n";
    }
    out << "}\n";
    return out.str();
  }

  out << "Boot flow: " << (trace.catalog_name.empty() ? cat.name : trace.catalog_name) << "\n";
  if (trace.events.empty()) {
    out << "no events recorded\n";
  } else {
    for (std::size_t i = 0; i < trace.events.size(); ++i) out << (i ? " → " : "") << trace.events[i].milestone_key;
    out << "\n";
  }
  out << "outcome: " << to_string(trace.outcome) << "\n";

  for (const auto& ev : trace.events) {
    out << "\n" << ev.seq + 1 << ". " << ev.milestone_key << "  pc 0x" << rsp::hex_u64(ev.pc) << "  after "
        << ev.step_budget_used << " resume(s)";
    if (ev.out_of_order) out << "  [out of order]";
    out << "\n";
    if (const auto* m = cat.find(ev.milestone_key)) {
      if (!m->source_location.empty()) out << "   source: " << m->source_location << "\n";
      for (const auto& note : m->notes) out << "   - " << note << "\n";
    }
  }
  for (const auto& w : trace.warnings) out << "\nwarning: " << w << "\n";
  return out.str();
}

} // namespace bootscope
