#pragma once

// HTTP + server-sent-events API over debug sessions. All bodies are JSON
// except the flow and source listings, which are also offered as text.
//
//   GET    /health
//   GET    /sessions                          list
//   POST   /sessions                          {fixture?, z0?, host?, port?, elf?, symmap?, linemap?, layout?}
//   GET    /sessions/{id}                     state
//   DELETE /sessions/{id}
//   GET    /sessions/{id}/breakpoints
//   POST   /sessions/{id}/breakpoints         {symbol} | {file, line} | {address}
//   DELETE /sessions/{id}/breakpoints/{bp}
//   POST   /sessions/{id}/breakpoints/{bp}/toggle   {enabled?}
//   POST   /sessions/{id}/step
//   POST   /sessions/{id}/continue
//   GET    /sessions/{id}/registers
//   GET    /sessions/{id}/memory?addr=0x..&len=n
//   GET    /sessions/{id}/source[?file=rel/path]
//   POST   /sessions/{id}/trace               {catalog?, budget?, reentry?}
//   GET    /sessions/{id}/trace
//   GET    /sessions/{id}/flow?format=text|dot
//   GET    /sessions/{id}/events[?after=seq]  text/event-stream, `id:` = seq
//   GET    /bench?format=json|text|markdown
//   POST   /bench?format=...                  body: samples or summaries CSV
//
// Errors are {"error": <code>, "message": <text>} with status 400 (bad
// request), 404 (unknown session or resource), 409 (wrong phase) or 500.

#include "bootscope/facade/config.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace bootscope::facade {

struct api_options {
  std::string bind_host = "127.0.0.1";
  int port = 0; ///< 0 = ephemeral
  settings defaults;
  /// Create a fixture-backed session named "demo" at startup and default
  /// new sessions to the fixture.
  bool demo = false;
  /// Delay injected before fixture `c`/`s` replies.
  std::chrono::milliseconds fixture_latency{0};
};

class api_server {
public:
  explicit api_server(api_options opts);
  ~api_server();
  api_server(const api_server&) = delete;
  api_server& operator=(const api_server&) = delete;

  /// Binds and starts serving on a background thread; returns the port.
  /// Throws errc::bind_failed.
  int start();
  void stop();
  int port() const noexcept;

  /// Effective source root (the demo writes fixture sources to a temp dir).
  const std::filesystem::path& source_root() const noexcept;

private:
  struct impl;
  std::unique_ptr<impl> impl_;
};

} // namespace bootscope::facade
