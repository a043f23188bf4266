#pragma once

// Opening a debug target: either a remote gdbstub plus symbol files, or the
// built-in boot fixture served by an in-process mock stub.

#include "bootscope/mocktarget.hpp"
#include "bootscope/session.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace bootscope::facade {

struct target_request {
  bool fixture = false;
  bool z0 = true; ///< fixture only
  std::chrono::milliseconds resume_latency{0}; ///< fixture only
  std::string host = "127.0.0.1";
  int port = 1234;
  std::chrono::milliseconds timeout{5000};
  std::optional<std::filesystem::path> elf;
  std::optional<std::filesystem::path> symmap;
  std::optional<std::filesystem::path> linemap;
  std::optional<std::filesystem::path> layout; ///< register layout file; i386 otherwise
};

struct opened_target {
  std::unique_ptr<mock_stub> stub; ///< declared first so the session detaches before it stops
  std::unique_ptr<session> debug;
};

/// Symbols come from the ELF image and the symbol map combined. Throws the
/// loader, transport and session errors unchanged.
opened_target open_target(const target_request& req);

std::string read_text_file(const std::filesystem::path& path);

} // namespace bootscope::facade
