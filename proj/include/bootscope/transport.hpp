#pragma once

#include "bootscope/detail/net.hpp"
#include "bootscope/error.hpp"
#include "bootscope/rsp.hpp"

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace bootscope {

/// Where the gdbstub lives. Defaults match `qemu -s -S` on the local host.
struct link_config {
  std::string host = "127.0.0.1";
  int port = 1234;
  std::chrono::milliseconds response_timeout{5000};
  unsigned max_retries = 3;
  std::size_t packet_limit = rsp::default_packet_limit;

  /// Throws errc::invalid_config unless port is 1..65535 and the timeout is positive.
  void validate() const;
};

enum class link_state { disconnected, idle, awaiting_response };

std::string_view to_string(link_state state) noexcept;

enum class direction { sent, received };

/// One TCP connection to a gdbstub carrying strictly one command at a time.
///
/// exchange() frames the payload, waits for the `+` ack (retransmitting the
/// identical frame on `-`), reads and acks the reply. A timeout or a closed
/// peer leaves the link disconnected; reconnect() re-dials the same address.
class link {
public:
  /// Invoked with the logical payload of every frame sent or accepted.
  using observer = std::function<void(direction, std::string_view payload)>;

  static link connect(link_config cfg);

  link(link&& other) noexcept;
  link& operator=(link&& other) noexcept;
  link(const link&) = delete;
  link& operator=(const link&) = delete;
  ~link() = default;

  rsp::packet exchange(std::string_view payload,
                       std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  link_state state() const noexcept { return state_; }
  const link_config& config() const noexcept { return cfg_; }

  void set_observer(observer obs) { observer_ = std::move(obs); }

  /// Frames retransmitted after a nack since the link was opened.
  std::size_t retransmissions() const noexcept { return retransmissions_; }

  void reconnect();
  void close() noexcept;

private:
  explicit link(link_config cfg);

  [[noreturn]] void drop(errc code, const std::string& message);
  void await_ack(std::chrono::steady_clock::time_point deadline);
  rsp::packet await_reply(std::chrono::steady_clock::time_point deadline);
  void fill(std::chrono::steady_clock::time_point deadline);
  void transmit(std::string_view bytes);

  link_config cfg_;
  detail::unique_fd fd_;
  std::string rx_;
  std::string last_frame_;
  link_state state_ = link_state::disconnected;
  unsigned attempts_ = 0;
  std::size_t retransmissions_ = 0;
  observer observer_;
};

} // namespace bootscope
