#include "bootscope/transport.hpp"

#include "bootscope/error.hpp"

namespace bootscope {

void link_config::validate() const {
  if (port < 1 || port > 65535) {
    throw error(errc::invalid_config, "port " + std::to_string(port) + " outside 1..65535");
  }
  if (response_timeout.count() <= 0) throw error(errc::invalid_config, "response timeout must be positive");
  if (host.empty()) throw error(errc::invalid_config, "host is empty");
}

std::string_view to_string(link_state state) noexcept {
  switch (state) {
  case link_state::disconnected: return "disconnected";
  case link_state::idle: return "idle";
  case link_state::awaiting_response: return "awaiting_response";
  }
  return "unknown";
}

link::link(link_config cfg) : cfg_(std::move(cfg)) {}

link::link(link&& other) noexcept
    : cfg_(std::move(other.cfg_)), fd_(std::move(other.fd_)), rx_(std::move(other.rx_)),
      last_frame_(std::move(other.last_frame_)), state_(other.state_), attempts_(other.attempts_),
      retransmissions_(other.retransmissions_), observer_(std::move(other.observer_)) {
  other.state_ = link_state::disconnected;
}

link& link::operator=(link&& other) noexcept {
  if (this != &other) {
    cfg_ = std::move(other.cfg_);
    fd_ = std::move(other.fd_);
    rx_ = std::move(other.rx_);
    last_frame_ = std::move(other.last_frame_);
    state_ = other.state_;
    attempts_ = other.attempts_;
    retransmissions_ = other.retransmissions_;
    observer_ = std::move(other.observer_);
    other.state_ = link_state::disconnected;
  }
  return *this;
}

link link::connect(link_config cfg) {
  cfg.validate();
  link l(std::move(cfg));
  l.reconnect();
  return l;
}

void link::reconnect() {
  if (state_ == link_state::awaiting_response) throw error(errc::busy_link, "reconnect while a command is in flight");
  close();
  fd_ = detail::connect_tcp(cfg_.host, cfg_.port, cfg_.response_timeout);
  rx_.clear();
  state_ = link_state::idle;
}

void link::close() noexcept {
  fd_.reset();
  rx_.clear();
  state_ = link_state::disconnected;
}

void link::drop(errc code, const std::string& message) {
  close();
  throw error(code, message);
}

void link::transmit(std::string_view bytes) {
  if (!detail::send_all(fd_.get(), bytes)) drop(errc::link_closed, "peer closed the connection during send");
}

void link::fill(std::chrono::steady_clock::time_point deadline) {
  switch (detail::wait_readable(fd_.get(), deadline)) {
  case detail::wait_result::timeout:
    drop(errc::timeout, "no response from " + cfg_.host + ":" + std::to_string(cfg_.port));
  case detail::wait_result::error:
    drop(errc::link_closed, "poll failed");
  case detail::wait_result::ready:
    break;
  }
  if (detail::recv_some(fd_.get(), rx_) <= 0) drop(errc::link_closed, "peer closed the connection");
}

void link::await_ack(std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    while (!rx_.empty()) {
      char c = rx_.front();
      if (c == rsp::frame_start) return; // reply without ack; treat as acked
      rx_.erase(0, 1);
      if (c == rsp::ack) return;
      if (c == rsp::nack) {
        if (++attempts_ > cfg_.max_retries) {
          state_ = link_state::idle;
          drop(errc::retries_exhausted, "stub rejected the frame " + std::to_string(attempts_) + " times");
        }
        ++retransmissions_;
        transmit(last_frame_);
      }
    }
    fill(deadline);
  }
}

rsp::packet link::await_reply(std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    auto start = rx_.find(rsp::frame_start);
    if (start != std::string::npos) {
      rx_.erase(0, start);
      try {
        auto pkt = rsp::decode_packet(rx_);
        rx_.erase(0, pkt.raw_len);
        transmit(std::string(1, rsp::ack));
        return pkt;
      } catch (const error& e) {
        switch (e.code()) {
        case errc::truncated_frame:
          break;
        case errc::checksum_mismatch: {
          rx_.erase(0, rx_.find(rsp::frame_end) + 3);
          if (++attempts_ > cfg_.max_retries) drop(errc::retries_exhausted, "reply corrupted repeatedly");
          transmit(std::string(1, rsp::nack));
          continue;
        }
        default: {
          // Well-framed but undecodable: ack it so the stub moves on, then report.
          auto end = rx_.find(rsp::frame_end);
          rx_.erase(0, end == std::string::npos ? rx_.size() : std::min(rx_.size(), end + 3));
          transmit(std::string(1, rsp::ack));
          state_ = link_state::idle;
          throw;
        }
        }
      }
    } else {
      rx_.clear();
    }
    fill(deadline);
  }
}

rsp::packet link::exchange(std::string_view payload, std::optional<std::chrono::milliseconds> timeout) {
  if (state_ == link_state::awaiting_response) throw error(errc::busy_link, "a command is already in flight");
  if (state_ == link_state::disconnected) throw error(errc::link_closed, "link is disconnected");

  last_frame_ = rsp::encode_packet(payload, cfg_.packet_limit);
  attempts_ = 0;
  state_ = link_state::awaiting_response;
  auto deadline = std::chrono::steady_clock::now() + timeout.value_or(cfg_.response_timeout);
  transmit(last_frame_);
  if (observer_) observer_(direction::sent, payload);
  await_ack(deadline);
  attempts_ = 0;
  auto reply = await_reply(deadline);
  state_ = link_state::idle;
  if (observer_) observer_(direction::received, reply.payload);
  return reply;
}

} // namespace bootscope
