#include "bootscope/detail/net.hpp"

#include "bootscope/error.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace bootscope::detail {

void unique_fd::reset(int fd) noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

namespace {

std::string describe(const std::string& host, int port) { return host + ":" + std::to_string(port); }

bool finish_connect(int fd, std::chrono::milliseconds timeout, std::string& cause) {
  pollfd pfd{fd, POLLOUT, 0};
  int rc;
  do {
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  } while (rc < 0 && errno == EINTR);
  if (rc == 0) {
    cause = "connect timed out";
    return false;
  }
  if (rc < 0) {
    cause = std::strerror(errno);
    return false;
  }
  int so_error = 0;
  socklen_t len = sizeof so_error;
  ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &so_error, &len);
  if (so_error != 0) {
    cause = std::strerror(so_error);
    return false;
  }
  return true;
}

} // namespace

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

unique_fd connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  auto service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw error(errc::connect_failed, "connect to " + describe(host, port) + " failed: " + ::gai_strerror(rc));
  }
  std::string cause = "no usable address";
  unique_fd result;
  for (auto* ai = found; ai != nullptr && !result; ai = ai->ai_next) {
    unique_fd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!fd) {
      cause = std::strerror(errno);
      continue;
    }
    int flags = ::fcntl(fd.get(), F_GETFL);
    ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
    if (::connect(fd.get(), ai->ai_addr, ai->ai_addrlen) != 0) {
      if (errno != EINPROGRESS) {
        cause = std::strerror(errno);
        continue;
      }
      if (!finish_connect(fd.get(), timeout, cause)) continue;
    }
    ::fcntl(fd.get(), F_SETFL, flags);
    set_nodelay(fd.get());
    result = std::move(fd);
  }
  ::freeaddrinfo(found);
  if (!result) throw error(errc::connect_failed, "connect to " + describe(host, port) + " failed: " + cause);
  return result;
}

unique_fd listen_tcp(const std::string& host, int port) {
  unique_fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) throw error(errc::bind_failed, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw error(errc::bind_failed, "bind " + describe(host, port) + ": not an IPv4 address");
  }
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw error(errc::bind_failed, "bind " + describe(host, port) + ": " + std::strerror(errno));
  }
  if (::listen(fd.get(), 4) != 0) {
    throw error(errc::bind_failed, "listen " + describe(host, port) + ": " + std::strerror(errno));
  }
  return fd;
}

int local_port(const unique_fd& fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return -1;
  return ntohs(addr.sin_port);
}

wait_result wait_readable(int fd, std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0) left = std::chrono::milliseconds(0);
    pollfd pfd{fd, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc > 0) return wait_result::ready;
    if (rc == 0) return wait_result::timeout;
    if (errno != EINTR) return wait_result::error;
  }
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

long recv_some(int fd, std::string& out) {
  char buf[4096];
  for (;;) {
    auto n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n > 0) out.append(buf, static_cast<std::size_t>(n));
    return static_cast<long>(n);
  }
}

} // namespace bootscope::detail
