#pragma once

#include "bootscope/registers.hpp"
#include "bootscope/rsp.hpp"
#include "bootscope/symbolics.hpp"
#include "bootscope/transport.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bootscope {

enum class phase { disconnected, stopped, running, exited };

std::string_view to_string(phase p) noexcept;

struct symbol_origin {
  std::string name;
};
struct line_origin {
  std::string file;
  unsigned line = 1;
};
struct raw_origin {
  std::uint64_t address = 0;
};
using breakpoint_origin = std::variant<symbol_origin, line_origin, raw_origin>;

std::string describe(const breakpoint_origin& origin);

enum class bp_mechanism { stub_z0, patched_trap };

std::string_view to_string(bp_mechanism m) noexcept;

struct breakpoint {
  int id = 0;
  std::uint64_t address = 0;
  breakpoint_origin origin;
  bp_mechanism mechanism = bp_mechanism::stub_z0;
  std::optional<std::uint8_t> original_byte; ///< patched_trap only
  bool enabled = true;
  unsigned hit_count = 0;
};

struct stop_event {
  rsp::stop_reply reply;
  std::uint64_t pc = 0; ///< last known pc when the target has gone
  location where;
  std::optional<int> breakpoint_id; ///< set when a continue stopped on a breakpoint

  bool target_exited() const noexcept { return reply.target_gone(); }
};

enum class session_event_kind { stopped, running, exited, breakpoint_changed, log };

std::string_view to_string(session_event_kind k) noexcept;

struct session_event {
  session_event_kind kind = session_event_kind::log;
  std::uint64_t pc = 0;
  std::optional<location> where;
  std::optional<breakpoint> bp;
  std::string action; ///< breakpoint_changed: added/removed/enabled/disabled; stopped: hit
  std::optional<std::uint8_t> exit_code;
  std::string message;
};

struct session_options {
  /// Time allowed for `c`/`s` replies; the target may run a long way.
  std::chrono::milliseconds resume_timeout{60000};
  std::uint8_t trap_opcode = 0xcc;
};

/// One debug session over one link. Run control, breakpoints and inspection
/// follow a strict request/response loop: every protocol command except the
/// resume itself is sent while the target is stopped.
///
/// Patched-trap breakpoints are shadowed: read_memory returns the original
/// bytes and write_memory over a trap updates the saved byte instead.
class session {
public:
  using event_sink = std::function<void(const session_event&)>;

  /// Negotiates qSupported, asks `?` for the initial stop, then reads
  /// registers to learn the pc. An already-exited target yields phase exited.
  static session attach(link l, std::shared_ptr<const symbol_index> symbols, std::shared_ptr<const line_map> lines,
                        register_layout layout, session_options opts = {});

  session(session&&) noexcept;
  session& operator=(session&&) noexcept;
  session(const session&) = delete;
  session& operator=(const session&) = delete;
  /// Best-effort detach().
  ~session();

  phase current_phase() const noexcept { return phase_; }
  std::uint64_t current_pc() const noexcept { return pc_; }
  const rsp::stop_reply& last_stop() const noexcept { return last_stop_; }
  location current_location() const;

  const breakpoint& set_breakpoint(const breakpoint_origin& origin);
  void remove_breakpoint(int id);
  const breakpoint& enable_breakpoint(int id, bool enabled);
  const breakpoint& find_breakpoint(int id) const;
  std::span<const breakpoint> breakpoints() const noexcept { return breakpoints_; }

  stop_event step();
  stop_event continue_run();

  std::vector<std::uint8_t> read_memory(std::uint64_t addr, std::size_t len);
  void write_memory(std::uint64_t addr, std::span<const std::uint8_t> bytes);
  register_file read_registers();
  void write_registers(const register_file& regs);

  /// Removes every breakpoint from the target and closes the link.
  void detach();

  void set_event_sink(event_sink sink) { sink_ = std::move(sink); }
  link& transport() noexcept { return *link_; }
  const symbol_index& symbols() const noexcept { return *symbols_; }
  const line_map& lines() const noexcept { return *lines_; }
  const register_layout& layout() const noexcept { return layout_; }
  std::size_t stub_packet_size() const noexcept { return stub_packet_size_; }

private:
  session(link l, std::shared_ptr<const symbol_index> symbols, std::shared_ptr<const line_map> lines,
          register_layout layout, session_options opts);

  void require_stopped(const char* what) const;
  std::string command(std::string_view payload);
  rsp::stop_reply resume(char cmd);
  void refresh_pc();
  std::uint64_t resolve(const breakpoint_origin& origin) const;
  void insert(breakpoint& bp);
  void uninsert(breakpoint& bp);
  breakpoint* find_at(std::uint64_t addr);
  breakpoint* patched_at(std::uint64_t addr);
  std::vector<std::uint8_t> read_raw(std::uint64_t addr, std::size_t len);
  void write_raw(std::uint64_t addr, std::span<const std::uint8_t> bytes);
  stop_event make_stop(const rsp::stop_reply& reply, std::optional<int> bp_id);
  void emit(session_event ev);
  void emit_stop(const stop_event& ev);
  breakpoint& lookup(int id);

  std::unique_ptr<link> link_;
  std::shared_ptr<const symbol_index> symbols_;
  std::shared_ptr<const line_map> lines_;
  register_layout layout_;
  session_options opts_;
  phase phase_ = phase::disconnected;
  std::uint64_t pc_ = 0;
  rsp::stop_reply last_stop_;
  std::vector<breakpoint> breakpoints_;
  int next_id_ = 1;
  std::optional<bool> z0_supported_;
  std::size_t stub_packet_size_ = rsp::default_packet_limit;
  event_sink sink_;
};

} // namespace bootscope
