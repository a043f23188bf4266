#pragma once

// A scripted gdbstub: serves RSP over loopback TCP against a fake target made
// of a flat memory image, a register file and a fixed pc trace. The trace is
// the execution; there are no instruction semantics.
//
// `s` advances one trace position. `c` advances to the next position whose pc
// carries an active Z0 breakpoint or a 0xCC byte in memory, or runs off the
// end of the trace and reports W00.

#include "bootscope/detail/net.hpp"
#include "bootscope/registers.hpp"
#include "bootscope/symbolics.hpp"

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace bootscope {

struct target_features {
  bool z0_supported = true;
  /// Delay before answering `c` and `s`, to make the running phase observable.
  std::chrono::milliseconds resume_latency{0};
};

/// Deliberate misbehaviour for transport tests.
struct fault_injection {
  unsigned nack_first = 0;            ///< answer the first N frames with `-`
  unsigned corrupt_first_replies = 0; ///< send the first N replies with a bad checksum
  bool silent = false;                ///< ack frames but never reply
};

struct target_script {
  std::string name = "script";
  std::uint64_t base = 0;
  std::vector<std::uint8_t> memory;
  std::uint64_t entry_pc = 0;
  std::vector<std::uint64_t> trace;
  std::set<std::uint64_t> external; ///< trace pcs allowed outside the image
  register_file registers{register_layout::i386()};
  target_features features;

  bool contains(std::uint64_t addr, std::size_t len = 1) const noexcept {
    return addr >= base && len <= memory.size() && addr - base <= memory.size() - len;
  }

  /// Throws errc::invalid_argument unless entry_pc == trace[0] and every
  /// trace pc lies inside the image or is flagged external.
  void validate() const;
};

/// Script file format, one directive per line (`#` comments):
///
///     name   <text>
///     base   <hex>
///     image  <path relative to the script file>
///     entry  <hex>
///     trace  <hex> <hex> ...        (repeatable, appends)
///     external <hex> ...            (repeatable)
///     register <name> <bits> [pc]   (repeatable; replaces the i386 default)
///     reg    <name> <hex value>
///     z0     on|off
///
/// Throws errc::parse_error (with line) or errc::io_error.
target_script load_script(std::string_view text, const std::filesystem::path& base_dir);
target_script load_script_file(const std::filesystem::path& path);

/// Writes `<stem>.bin` next to `script_path` and a script referencing it.
void save_script(const target_script& script, const std::filesystem::path& script_path);

void export_image(const target_script& script, const std::filesystem::path& path);

/// The built-in boot fixture: a boot sector at 0x7c00 carrying a 4 x 16-byte
/// partition table at offset 0x1be and the 0x55 0xAA signature at its end,
/// followed by stand-in boot2, loader, init386 and sched_init code. The
/// trace passes through boot0, boot2, loader and init386 in that order.
target_script build_boot_fixture(bool z0_supported = true);

/// `nm`-style symbol map for the boot fixture.
std::string boot_fixture_symbol_map();
/// TSV line map for the boot fixture.
std::string boot_fixture_line_map();
/// Stand-in source files the line map refers to, keyed by relative path.
std::map<std::string, std::string> boot_fixture_sources();

/// Little-endian ELF32 (i386) image with one loadable section holding
/// `memory` at `base` and a symbol table for `symbols`.
std::vector<std::uint8_t> write_elf32(std::uint64_t base, const std::vector<std::uint8_t>& memory,
                                      std::span<const symbol> symbols);

/// Writes the whole fixture: script + image, fixture.elf, symbols.map,
/// lines.tsv and the sources under `src/`.
void export_boot_fixture(const std::filesystem::path& dir, bool z0_supported = true);

/// Runs one target script behind a TCP listener. One client at a time; a
/// second connection while one is active is accepted and closed at once.
class mock_stub {
public:
  struct snapshot {
    std::vector<std::uint8_t> memory;
    std::size_t position = 0;
    bool finished = false;
    std::set<std::uint64_t> z0;
    std::size_t connections = 0;
    std::size_t refused = 0;
  };

  struct transcript {
    std::string received;
    std::string sent;
  };

  /// Listens on host:port (0 = ephemeral). Throws errc::bind_failed.
  static std::unique_ptr<mock_stub> serve(target_script script, int port = 0, std::string host = "127.0.0.1",
                                          fault_injection faults = {});

  mock_stub(const mock_stub&) = delete;
  mock_stub& operator=(const mock_stub&) = delete;
  ~mock_stub();

  int port() const noexcept { return port_; }
  snapshot state() const;
  transcript wire() const;
  const target_script& script() const noexcept { return script_; }
  void stop();

private:
  mock_stub(target_script script, fault_injection faults);
  void run();
  bool pump(int client, std::string& buffer, bool wait);
  void on_bytes(int client, std::string& buffer);
  std::string handle(std::string_view payload);
  bool active(std::uint64_t pc) const;
  void send(int client, std::string_view bytes);

  target_script script_;
  fault_injection faults_;
  detail::unique_fd listener_;
  int wake_read_ = -1;
  int wake_write_ = -1;
  int port_ = 0;
  std::thread thread_;
  std::atomic<bool> stopping_{false};

  mutable std::mutex mu_;
  std::vector<std::uint8_t> memory_;
  std::size_t position_ = 0;
  bool finished_ = false;
  std::set<std::uint64_t> z0_;
  register_file registers_;
  std::size_t connections_ = 0;
  std::size_t refused_ = 0;
  unsigned frames_seen_ = 0;
  unsigned replies_sent_ = 0;
  std::string last_reply_;
  transcript wire_;
};

} // namespace bootscope
