#pragma once

// Thin POSIX socket wrappers shared by the client link and the mock stub.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace bootscope::detail {

class unique_fd {
public:
  unique_fd() = default;
  explicit unique_fd(int fd) noexcept : fd_(fd) {}
  unique_fd(const unique_fd&) = delete;
  unique_fd& operator=(const unique_fd&) = delete;
  unique_fd(unique_fd&& other) noexcept : fd_(other.release()) {}
  unique_fd& operator=(unique_fd&& other) noexcept {
    if (this != &other) reset(other.release());
    return *this;
  }
  ~unique_fd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1) noexcept;

private:
  int fd_ = -1;
};

/// Connects with a deadline. Throws errc::connect_failed.
unique_fd connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout);

/// Binds and listens. `port` 0 picks an ephemeral port. Throws errc::bind_failed.
unique_fd listen_tcp(const std::string& host, int port);

int local_port(const unique_fd& fd);

enum class wait_result { ready, timeout, error };

/// Waits until `fd` is readable or the deadline passes.
wait_result wait_readable(int fd, std::chrono::steady_clock::time_point deadline);

/// Writes everything or returns false (peer gone).
bool send_all(int fd, std::string_view data);

/// One recv into `out` (appended). Returns bytes read, 0 on orderly close, -1 on error.
long recv_some(int fd, std::string& out);

void set_nodelay(int fd);

} // namespace bootscope::detail
