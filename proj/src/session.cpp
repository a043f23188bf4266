#include "bootscope/session.hpp"

#include "bootscope/error.hpp"

#include <algorithm>

namespace bootscope {

std::string_view to_string(phase p) noexcept {
  switch (p) {
  case phase::disconnected: return "disconnected";
  case phase::stopped: return "stopped";
  case phase::running: return "running";
  case phase::exited: return "exited";
  }
  return "unknown";
}

std::string_view to_string(bp_mechanism m) noexcept {
  return m == bp_mechanism::stub_z0 ? "stub_z0" : "patched_trap";
}

std::string_view to_string(session_event_kind k) noexcept {
  switch (k) {
  case session_event_kind::stopped: return "stopped";
  case session_event_kind::running: return "running";
  case session_event_kind::exited: return "exited";
  case session_event_kind::breakpoint_changed: return "breakpoint_changed";
  case session_event_kind::log: return "log";
  }
  return "log";
}

std::string describe(const breakpoint_origin& origin) {
  struct visitor {
    std::string operator()(const symbol_origin& o) const { return o.name; }
    std::string operator()(const line_origin& o) const { return o.file + ":" + std::to_string(o.line); }
    std::string operator()(const raw_origin& o) const { return "*0x" + rsp::hex_u64(o.address); }
  };
  return std::visit(visitor{}, origin);
}

namespace {

bool is_transport_failure(errc code) {
  return code == errc::timeout || code == errc::link_closed || code == errc::retries_exhausted;
}

} // namespace

session::session(link l, std::shared_ptr<const symbol_index> symbols, std::shared_ptr<const line_map> lines,
                 register_layout layout, session_options opts)
    : link_(std::make_unique<link>(std::move(l))),
      symbols_(symbols ? std::move(symbols) : std::make_shared<const symbol_index>()),
      lines_(lines ? std::move(lines) : std::make_shared<const line_map>()), layout_(std::move(layout)),
      opts_(opts) {}

session::session(session&&) noexcept = default;
session& session::operator=(session&&) noexcept = default;

session::~session() {
  try {
    detach();
  } catch (...) {
  }
}

session session::attach(link l, std::shared_ptr<const symbol_index> symbols, std::shared_ptr<const line_map> lines,
                        register_layout layout, session_options opts) {
  if (l.state() != link_state::idle) throw error(errc::wrong_phase, "attach needs an idle link");
  session s(std::move(l), std::move(symbols), std::move(lines), std::move(layout), opts);

  auto features = s.command("qSupported");
  if (auto pos = features.find("PacketSize="); pos != std::string::npos) {
    auto value = features.substr(pos + 11, features.find(';', pos) - pos - 11);
    if (auto size = rsp::parse_hex_u64(value); size && *size >= 64) s.stub_packet_size_ = *size;
  }

  s.last_stop_ = rsp::parse_stop_reply(s.command("?"));
  if (s.last_stop_.target_gone()) {
    s.phase_ = phase::exited;
    return s;
  }
  s.refresh_pc();
  s.phase_ = phase::stopped;
  return s;
}

void session::require_stopped(const char* what) const {
  if (!link_ || phase_ != phase::stopped) {
    throw error(errc::wrong_phase, std::string(what) + " needs a stopped target (phase is " +
                                       std::string(to_string(link_ ? phase_ : phase::disconnected)) + ")");
  }
}

std::string session::command(std::string_view payload) {
  try {
    return link_->exchange(payload).payload;
  } catch (const error& e) {
    if (is_transport_failure(e.code())) phase_ = phase::disconnected;
    throw;
  }
}

void session::refresh_pc() {
  auto reply = command("g");
  if (rsp::is_error_reply(reply)) throw error(errc::stub_error, "register read failed: " + reply);
  pc_ = decode_registers(layout_, reply).pc();
}

rsp::stop_reply session::resume(char cmd) {
  phase_ = phase::running;
  std::string reply;
  try {
    reply = link_->exchange(std::string(1, cmd), opts_.resume_timeout).payload;
  } catch (const error& e) {
    phase_ = is_transport_failure(e.code()) ? phase::disconnected : phase::stopped;
    throw;
  }
  rsp::stop_reply stop;
  try {
    stop = rsp::parse_stop_reply(reply);
  } catch (const error&) {
    phase_ = phase::stopped;
    throw error(errc::stub_error, "stub answered '" + std::string(1, cmd) + "' with '" + reply + "'");
  }
  last_stop_ = stop;
  if (stop.target_gone()) {
    phase_ = phase::exited;
  } else {
    phase_ = phase::stopped;
    refresh_pc();
  }
  return stop;
}

location session::current_location() const { return resolve_addr(*symbols_, *lines_, pc_); }

std::uint64_t session::resolve(const breakpoint_origin& origin) const {
  struct visitor {
    const session& s;
    std::uint64_t operator()(const symbol_origin& o) const { return resolve_symbol(*s.symbols_, o.name); }
    std::uint64_t operator()(const line_origin& o) const { return resolve_line(*s.lines_, o.file, o.line); }
    std::uint64_t operator()(const raw_origin& o) const { return o.address; }
  };
  return std::visit(visitor{*this}, origin);
}

breakpoint* session::find_at(std::uint64_t addr) {
  auto it = std::find_if(breakpoints_.begin(), breakpoints_.end(),
                         [&](const breakpoint& b) { return b.address == addr; });
  return it == breakpoints_.end() ? nullptr : &*it;
}

breakpoint* session::patched_at(std::uint64_t addr) {
  auto* bp = find_at(addr);
  return bp && bp->enabled && bp->mechanism == bp_mechanism::patched_trap ? bp : nullptr;
}

breakpoint& session::lookup(int id) {
  auto it = std::find_if(breakpoints_.begin(), breakpoints_.end(), [&](const breakpoint& b) { return b.id == id; });
  if (it == breakpoints_.end()) throw error(errc::unknown_breakpoint, "no breakpoint #" + std::to_string(id));
  return *it;
}

const breakpoint& session::find_breakpoint(int id) const { return const_cast<session*>(this)->lookup(id); }

void session::insert(breakpoint& bp) {
  auto where = rsp::hex_u64(bp.address);
  if (z0_supported_ != false) {
    auto reply = command("Z0," + where + ",1");
    if (reply == "OK") {
      z0_supported_ = true;
      bp.mechanism = bp_mechanism::stub_z0;
      bp.original_byte.reset();
      return;
    }
    if (!reply.empty()) throw error(errc::stub_error, "breakpoint at 0x" + where + " refused: " + reply);
    z0_supported_ = false;
    emit({.kind = session_event_kind::log, .message = "stub lacks Z0; falling back to patched traps"});
  }
  auto original = read_raw(bp.address, 1).at(0);
  const std::uint8_t trap[] = {opts_.trap_opcode};
  write_raw(bp.address, trap);
  bp.mechanism = bp_mechanism::patched_trap;
  bp.original_byte = original;
}

void session::uninsert(breakpoint& bp) {
  if (bp.mechanism == bp_mechanism::stub_z0) {
    auto reply = command("z0," + rsp::hex_u64(bp.address) + ",1");
    if (reply != "OK") throw error(errc::stub_error, "breakpoint removal refused: " + reply);
  } else {
    const std::uint8_t original[] = {*bp.original_byte};
    write_raw(bp.address, original);
  }
}

const breakpoint& session::set_breakpoint(const breakpoint_origin& origin) {
  require_stopped("set_breakpoint");
  auto addr = resolve(origin);
  if (auto* existing = find_at(addr)) return *existing;
  breakpoint bp;
  bp.address = addr;
  bp.origin = origin;
  insert(bp);
  bp.id = next_id_++;
  breakpoints_.push_back(bp);
  emit({.kind = session_event_kind::breakpoint_changed, .pc = pc_, .bp = bp, .action = "added"});
  return breakpoints_.back();
}

void session::remove_breakpoint(int id) {
  auto& bp = lookup(id);
  if (bp.enabled && link_ && phase_ == phase::stopped) uninsert(bp);
  auto gone = bp;
  std::erase_if(breakpoints_, [&](const breakpoint& b) { return b.id == id; });
  emit({.kind = session_event_kind::breakpoint_changed, .pc = pc_, .bp = gone, .action = "removed"});
}

const breakpoint& session::enable_breakpoint(int id, bool enabled) {
  auto& bp = lookup(id);
  if (bp.enabled == enabled) return bp;
  require_stopped(enabled ? "enable_breakpoint" : "disable_breakpoint");
  if (enabled) {
    insert(bp);
  } else {
    uninsert(bp);
  }
  bp.enabled = enabled;
  emit({.kind = session_event_kind::breakpoint_changed,
        .pc = pc_,
        .bp = bp,
        .action = enabled ? "enabled" : "disabled"});
  return bp;
}

stop_event session::make_stop(const rsp::stop_reply& reply, std::optional<int> bp_id) {
  stop_event ev;
  ev.reply = reply;
  ev.pc = pc_;
  ev.where = current_location();
  ev.breakpoint_id = bp_id;
  return ev;
}

void session::emit(session_event ev) {
  if (sink_) sink_(ev);
}

void session::emit_stop(const stop_event& ev) {
  session_event out;
  out.pc = ev.pc;
  out.where = ev.where;
  if (ev.target_exited()) {
    out.kind = session_event_kind::exited;
    out.exit_code = ev.reply.kind == rsp::stop_kind::exited ? ev.reply.exit_code : ev.reply.signal_no;
    out.message = std::string(rsp::to_string(ev.reply.kind));
  } else {
    out.kind = session_event_kind::stopped;
    if (ev.breakpoint_id) {
      out.bp = find_breakpoint(*ev.breakpoint_id);
      out.action = "hit";
    }
  }
  emit(std::move(out));
}

stop_event session::step() {
  require_stopped("step");
  std::optional<std::uint64_t> repatch;
  if (auto* bp = patched_at(pc_)) {
    const std::uint8_t original[] = {*bp->original_byte};
    write_raw(bp->address, original);
    repatch = bp->address;
  }
  emit({.kind = session_event_kind::running, .pc = pc_});
  auto reply = resume('s');
  if (repatch && phase_ == phase::stopped) {
    const std::uint8_t trap[] = {opts_.trap_opcode};
    write_raw(*repatch, trap);
  }
  auto ev = make_stop(reply, std::nullopt);
  emit_stop(ev);
  return ev;
}

stop_event session::continue_run() {
  require_stopped("continue");
  emit({.kind = session_event_kind::running, .pc = pc_});

  auto hit_here = [this]() -> std::optional<int> {
    auto* bp = find_at(pc_);
    if (bp == nullptr || !bp->enabled) return std::nullopt;
    ++bp->hit_count;
    return bp->id;
  };

  // Resuming from atop a patched trap: restore, single-step, re-patch, continue.
  if (auto* bp = patched_at(pc_)) {
    auto addr = bp->address;
    const std::uint8_t original[] = {*bp->original_byte};
    write_raw(addr, original);
    auto reply = resume('s');
    if (phase_ == phase::stopped) {
      const std::uint8_t trap[] = {opts_.trap_opcode};
      write_raw(addr, trap);
    }
    if (reply.target_gone()) {
      auto ev = make_stop(reply, std::nullopt);
      emit_stop(ev);
      return ev;
    }
    if (auto id = hit_here()) {
      auto ev = make_stop(reply, id);
      emit_stop(ev);
      return ev;
    }
  }

  auto reply = resume('c');
  std::optional<int> id;
  if (!reply.target_gone()) id = hit_here();
  auto ev = make_stop(reply, id);
  emit_stop(ev);
  return ev;
}

std::vector<std::uint8_t> session::read_raw(std::uint64_t addr, std::size_t len) {
  std::vector<std::uint8_t> out;
  out.reserve(len);
  const std::size_t chunk = std::max<std::size_t>(1, std::min(stub_packet_size_, link_->config().packet_limit) / 2);
  while (out.size() < len) {
    auto at = addr + out.size();
    auto n = std::min(chunk, len - out.size());
    auto reply = command("m" + rsp::hex_u64(at) + "," + rsp::hex_u64(n));
    if (rsp::is_error_reply(reply)) {
      throw error(errc::memory_unreadable, "memory at 0x" + rsp::hex_u64(at) + " unreadable (" + reply + ")");
    }
    auto bytes = rsp::from_hex(reply);
    if (!bytes) throw error(errc::stub_error, "malformed memory reply: " + reply.substr(0, 32));
    if (bytes->empty()) throw error(errc::memory_unreadable, "memory at 0x" + rsp::hex_u64(at) + " unreadable");
    if (bytes->size() > n) throw error(errc::stub_error, "stub returned more bytes than requested");
    out.insert(out.end(), bytes->begin(), bytes->end());
  }
  return out;
}

void session::write_raw(std::uint64_t addr, std::span<const std::uint8_t> bytes) {
  const std::size_t limit = std::min(stub_packet_size_, link_->config().packet_limit);
  const std::size_t chunk = std::max<std::size_t>(1, (limit - std::min<std::size_t>(limit, 40)) / 2);
  std::size_t done = 0;
  while (done < bytes.size()) {
    auto n = std::min(chunk, bytes.size() - done);
    auto at = addr + done;
    auto reply = command("M" + rsp::hex_u64(at) + "," + rsp::hex_u64(n) + ":" +
                         rsp::to_hex(bytes.subspan(done, n)));
    if (reply != "OK") throw error(errc::stub_error, "memory write at 0x" + rsp::hex_u64(at) + " refused: " + reply);
    done += n;
  }
}

std::vector<std::uint8_t> session::read_memory(std::uint64_t addr, std::size_t len) {
  require_stopped("read_memory");
  if (len == 0) return {};
  auto bytes = read_raw(addr, len);
  for (const auto& bp : breakpoints_) {
    if (bp.enabled && bp.mechanism == bp_mechanism::patched_trap && bp.address >= addr && bp.address - addr < len) {
      bytes[bp.address - addr] = *bp.original_byte;
    }
  }
  return bytes;
}

void session::write_memory(std::uint64_t addr, std::span<const std::uint8_t> bytes) {
  require_stopped("write_memory");
  if (bytes.empty()) return;
  std::vector<std::uint8_t> data(bytes.begin(), bytes.end());
  for (auto& bp : breakpoints_) {
    if (bp.enabled && bp.mechanism == bp_mechanism::patched_trap && bp.address >= addr &&
        bp.address - addr < data.size()) {
      bp.original_byte = data[bp.address - addr];
      data[bp.address - addr] = opts_.trap_opcode;
    }
  }
  write_raw(addr, data);
}

register_file session::read_registers() {
  require_stopped("read_registers");
  auto reply = command("g");
  if (rsp::is_error_reply(reply)) throw error(errc::stub_error, "register read failed: " + reply);
  auto regs = decode_registers(layout_, reply);
  pc_ = regs.pc();
  return regs;
}

void session::write_registers(const register_file& regs) {
  require_stopped("write_registers");
  auto reply = command("G" + encode_registers(regs));
  if (reply != "OK") throw error(errc::stub_error, "register write refused: " + reply);
  // Stubs may refuse to move the pc; believe what they report.
  refresh_pc();
}

void session::detach() {
  if (!link_) return;
  if (phase_ == phase::stopped && link_->state() == link_state::idle) {
    for (auto& bp : breakpoints_) {
      if (bp.enabled) uninsert(bp);
    }
  }
  breakpoints_.clear();
  link_->close();
  phase_ = phase::disconnected;
}

} // namespace bootscope
