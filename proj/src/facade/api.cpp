#include "bootscope/facade/api.hpp"

#include "bootscope/error.hpp"
#include "bootscope/facade/json.hpp"
#include "bootscope/facade/target.hpp"
#include "bootscope/rsp.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

#ifndef BOOTSCOPE_DATA_DIR
#define BOOTSCOPE_DATA_DIR "data"
#endif

namespace bootscope::facade {

namespace {

namespace fs = std::filesystem;

// Errors raised by the handlers themselves rather than the library.
struct http_error : std::runtime_error {
  int status;
  std::string code;
  http_error(int s, std::string c, const std::string& msg) : std::runtime_error(msg), status(s), code(std::move(c)) {}
};

int status_for(errc c) {
  switch (c) {
  case errc::wrong_phase:
  case errc::busy_link: return 409;
  case errc::unknown_symbol:
  case errc::unknown_line:
  case errc::unknown_breakpoint:
  case errc::unknown_function: return 404;
  case errc::parse_error:
  case errc::invalid_argument:
  case errc::invalid_config:
  case errc::duplicate_key:
  case errc::empty_catalog:
  case errc::span_out_of_range:
  case errc::empty_group:
  case errc::mismatched_groups:
  case errc::incomplete_matrix:
  case errc::memory_unreadable:
  case errc::not_elf:
  case errc::unsupported_endianness:
  case errc::corrupt_section_table:
  case errc::payload_too_large: return 400;
  default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

// Runs a handler body, mapping exceptions onto the documented statuses.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const http_error& e) {
    send_error(res, e.status, e.code, e.what());
  } catch (const error& e) {
    send_error(res, status_for(e.code()), to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, "invalid_json", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body);
  if (!j.is_object()) throw http_error(400, "invalid_json", "request body must be a JSON object");
  return j;
}

std::uint64_t parse_address(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_string()) {
    if (auto a = rsp::parse_hex_u64(v.get<std::string>())) return *a;
  }
  throw http_error(400, "invalid_argument", "address must be a hex string or an unsigned number");
}

std::string_view phase_name(phase p) { return to_string(p); }

// ---------------------------------------------------------------------------

class session_host {
public:
  session_host(std::string id, opened_target target, bool fixture)
      : id_(std::move(id)), fixture_(fixture), target_(std::move(target)) {
    mirror_ = target_.debug->current_phase();
    target_.debug->set_event_sink([this](const session_event& ev) { on_session_event(ev); });
    state_ = snapshot();
    worker_ = std::thread([this] { work(); });
  }

  ~session_host() { shutdown(); }

  const std::string& id() const noexcept { return id_; }

  /// Runs `fn` on the session's command thread and waits for it.
  template <typename F>
  auto run(F&& fn) -> std::decay_t<decltype(fn(std::declval<session&>()))> {
    using R = std::decay_t<decltype(fn(std::declval<session&>()))>;
    auto task = std::make_shared<std::packaged_task<R()>>([this, f = std::forward<F>(fn)]() mutable {
      struct refresh {
        session_host* h;
        ~refresh() { h->after_command(); }
      } r{this};
      return f(*target_.debug);
    });
    auto fut = task->get_future();
    {
      std::lock_guard lock(queue_mu_);
      if (quit_) throw http_error(404, "unknown_session", "session " + id_ + " is closing");
      queue_.push_back([task] { (*task)(); });
    }
    queue_cv_.notify_one();
    return fut.get();
  }

  /// Claims the resume slot; throws wrong_phase when a resume is in flight.
  void begin_resume() {
    bool expected = false;
    if (!resume_pending_.compare_exchange_strong(expected, true)) {
      throw error(errc::wrong_phase, "target is running");
    }
  }
  void end_resume() { resume_pending_ = false; }

  /// Rejects commands that need a stopped target while one is running.
  void require_idle() const {
    if (resume_pending_ || mirror_ == phase::running) throw error(errc::wrong_phase, "target is running");
  }

  json state() const {
    std::lock_guard lock(ev_mu_);
    auto s = state_;
    s["last_seq"] = next_seq_ - 1;
    return s;
  }

  void emit(json ev) {
    {
      std::lock_guard lock(ev_mu_);
      ev["seq"] = next_seq_++;
      if (!ev.contains("phase")) ev["phase"] = phase_name(mirror_);
      events_.push_back(std::move(ev));
    }
    ev_cv_.notify_all();
  }

  /// Events with seq > after, waiting up to `wait` for one to arrive.
  std::vector<json> events_after(std::uint64_t after, std::chrono::milliseconds wait, bool& closed) {
    std::unique_lock lock(ev_mu_);
    ev_cv_.wait_for(lock, wait, [&] { return closed_ || next_seq_ - 1 > after; });
    closed = closed_;
    std::vector<json> out;
    // seq n lives at index n-1
    for (auto i = after; i < events_.size(); ++i) out.push_back(events_[i]);
    return out;
  }

  void set_trace(boot_trace t, milestone_catalog c) {
    std::lock_guard lock(ev_mu_);
    trace_ = std::move(t);
    catalog_ = std::move(c);
  }
  std::optional<std::pair<boot_trace, milestone_catalog>> trace() const {
    std::lock_guard lock(ev_mu_);
    if (!trace_) return std::nullopt;
    return std::make_pair(*trace_, *catalog_);
  }

  void shutdown() {
    {
      std::lock_guard lock(queue_mu_);
      if (quit_) return;
      quit_ = true;
    }
    queue_cv_.notify_one();
    if (worker_.joinable()) worker_.join();
    try {
      target_.debug->detach();
    } catch (...) {
    }
    {
      std::lock_guard lock(ev_mu_);
      closed_ = true;
    }
    ev_cv_.notify_all();
  }

  void wake_streams() { ev_cv_.notify_all(); }

private:
  void work() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [&] { return quit_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
    }
  }

  // Runs on the worker thread after every command.
  void after_command() {
    auto& s = *target_.debug;
    if (s.current_phase() != mirror_) {
      // A phase change without its own session event: the link went away.
      mirror_ = s.current_phase();
      emit({{"kind", "log"}, {"message", "session is now " + std::string(phase_name(mirror_))}});
    }
    auto snap = snapshot();
    std::lock_guard lock(ev_mu_);
    state_ = std::move(snap);
  }

  json snapshot() const {
    const auto& s = *target_.debug;
    json bps = json::array();
    for (const auto& bp : s.breakpoints()) bps.push_back(to_json(bp));
    json j{{"id", id_},
           {"phase", phase_name(s.current_phase())},
           {"pc", hex_addr(s.current_pc())},
           {"fixture", fixture_},
           {"breakpoints", bps},
           {"stop", to_json(s.last_stop())}};
    if (s.current_phase() != phase::disconnected) j["location"] = to_json(s.current_location());
    return j;
  }

  void on_session_event(const session_event& ev) {
    json j{{"kind", std::string(to_string(ev.kind))}, {"pc", hex_addr(ev.pc)}};
    switch (ev.kind) {
    case session_event_kind::running: mirror_ = phase::running; break;
    case session_event_kind::stopped: mirror_ = phase::stopped; break;
    case session_event_kind::exited: mirror_ = phase::exited; break;
    default: break;
    }
    j["phase"] = phase_name(mirror_);
    if (ev.where) j["location"] = to_json(*ev.where);
    if (ev.bp) j["breakpoint"] = to_json(*ev.bp);
    if (!ev.action.empty()) j["action"] = ev.action;
    if (ev.exit_code) j["exit_code"] = *ev.exit_code;
    if (!ev.message.empty()) j["message"] = ev.message;
    if (ev.kind != session_event_kind::log) {
      std::lock_guard lock(ev_mu_);
      state_["phase"] = phase_name(mirror_);
    }
    emit(std::move(j));
  }

  std::string id_;
  bool fixture_;
  opened_target target_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool quit_ = false;
  std::thread worker_;

  std::atomic<bool> resume_pending_{false};
  std::atomic<phase> mirror_{phase::disconnected};

  mutable std::mutex ev_mu_;
  std::condition_variable ev_cv_;
  std::vector<json> events_;
  std::uint64_t next_seq_ = 1;
  bool closed_ = false;
  json state_;
  std::optional<boot_trace> trace_;
  std::optional<milestone_catalog> catalog_;
};

struct resume_slot {
  session_host& h;
  explicit resume_slot(session_host& host) : h(host) { h.begin_resume(); }
  ~resume_slot() { h.end_resume(); }
};

bool same_file(std::string_view a, std::string_view b) {
  if (a == b) return true;
  auto suffix = [](std::string_view longer, std::string_view shorter) {
    return longer.size() > shorter.size() && longer.ends_with(shorter) &&
           longer[longer.size() - shorter.size() - 1] == '/';
  };
  return suffix(a, b) || suffix(b, a);
}

} // namespace

// ---------------------------------------------------------------------------

struct api_server::impl {
  api_options opts;
  httplib::Server svr;
  std::thread thread;
  int port = 0;
  std::atomic<bool> stopping{false};
  fs::path source_root;
  std::optional<fs::path> demo_dir;

  std::mutex mu;
  std::map<std::string, std::shared_ptr<session_host>> sessions;
  unsigned next_id = 1;

  explicit impl(api_options o) : opts(std::move(o)) {}

  std::shared_ptr<session_host> find(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw http_error(404, "unknown_session", "no session " + id);
    return it->second;
  }

  std::shared_ptr<session_host> create(const json& body, std::optional<std::string> id = std::nullopt) {
    target_request req;
    req.fixture = body.value("fixture", opts.demo);
    req.z0 = body.value("z0", true);
    req.resume_latency = opts.fixture_latency;
    req.host = body.value("host", opts.defaults.host);
    req.port = body.value("port", opts.defaults.port);
    req.timeout = std::chrono::milliseconds(body.value("timeout_ms", opts.defaults.timeout_ms));
    for (auto [key, slot] : {std::pair{"elf", &req.elf}, std::pair{"symmap", &req.symmap},
                             std::pair{"linemap", &req.linemap}, std::pair{"layout", &req.layout}}) {
      if (body.contains(key)) *slot = fs::path(body[key].get<std::string>());
    }
    auto target = open_target(req);
    std::lock_guard lock(mu);
    auto name = id.value_or("s" + std::to_string(next_id++));
    if (sessions.contains(name)) throw http_error(400, "invalid_argument", "session " + name + " exists");
    auto host = std::make_shared<session_host>(name, std::move(target), req.fixture);
    sessions[name] = host;
    return host;
  }

  void remove(const std::string& id) {
    std::shared_ptr<session_host> host;
    {
      std::lock_guard lock(mu);
      auto it = sessions.find(id);
      if (it == sessions.end()) throw http_error(404, "unknown_session", "no session " + id);
      host = it->second;
      sessions.erase(it);
    }
    host->shutdown();
  }

  std::optional<fs::path> bench_path() const {
    if (opts.defaults.bench_summaries) return fs::path(*opts.defaults.bench_summaries);
    fs::path bundled = fs::path(BOOTSCOPE_DATA_DIR) / "freebsd8_scheduler_summaries.csv";
    if (opts.demo && fs::exists(bundled)) return bundled;
    return std::nullopt;
  }

  fs::path resolve_source(const std::string& rel) const {
    fs::path p(rel);
    if (rel.empty() || p.is_absolute()) throw http_error(400, "invalid_argument", "source path must be relative");
    for (const auto& part : p) {
      if (part == "..") throw http_error(400, "invalid_argument", "source path escapes the source root");
    }
    auto root = fs::weakly_canonical(source_root);
    auto full = fs::weakly_canonical(root / p);
    auto [r, f] = std::mismatch(root.begin(), root.end(), full.begin(), full.end());
    if (r != root.end()) throw http_error(400, "invalid_argument", "source path escapes the source root");
    if (!fs::is_regular_file(full)) throw http_error(404, "unknown_file", "no source file " + rel);
    return full;
  }

  void routes();
  void session_routes();
  void stream_route();
  void bench_routes();
};

void api_server::impl::routes() {
  svr.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    std::size_t n = 0;
    {
      std::lock_guard lock(mu);
      n = sessions.size();
    }
    send_json(res, 200, {{"status", "ok"}, {"sessions", n}, {"demo", opts.demo}});
  });

  svr.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    std::vector<std::shared_ptr<session_host>> hosts;
    {
      std::lock_guard lock(mu);
      for (auto& [id, h] : sessions) hosts.push_back(h);
    }
    json list = json::array();
    for (auto& h : hosts) list.push_back(h->state());
    send_json(res, 200, {{"sessions", list}});
  });

  svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, create(parse_body(req))->state()); });
  });

  svr.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, find(req.matches[1])->state()); });
  });

  svr.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      remove(req.matches[1]);
      send_json(res, 200, {{"deleted", std::string(req.matches[1])}});
    });
  });

  session_routes();
  stream_route();
  bench_routes();
}

void api_server::impl::session_routes() {
  svr.Get(R"(/sessions/([^/]+)/breakpoints)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, {{"breakpoints", find(req.matches[1])->state()["breakpoints"]}}); });
  });

  svr.Post(R"(/sessions/([^/]+)/breakpoints)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      auto body = parse_body(req);
      breakpoint_origin origin;
      if (body.contains("symbol")) {
        origin = symbol_origin{body["symbol"].get<std::string>()};
      } else if (body.contains("file")) {
        if (!body.contains("line")) throw http_error(400, "invalid_argument", "file breakpoints need a line");
        auto line = body["line"].get<long long>();
        if (line < 1) throw http_error(400, "invalid_argument", "line numbers start at 1");
        origin = line_origin{body["file"].get<std::string>(), static_cast<unsigned>(line)};
      } else if (body.contains("address")) {
        origin = raw_origin{parse_address(body["address"])};
      } else {
        throw http_error(400, "invalid_argument", "give symbol, file+line or address");
      }
      host->require_idle();
      auto bp = host->run([&](session& s) { return s.set_breakpoint(origin); });
      send_json(res, 200, to_json(bp));
    });
  });

  svr.Delete(R"(/sessions/([^/]+)/breakpoints/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      int id = std::stoi(req.matches[2]);
      host->require_idle();
      host->run([&](session& s) {
        s.remove_breakpoint(id);
        return 0;
      });
      send_json(res, 200, {{"deleted", id}});
    });
  });

  svr.Post(R"(/sessions/([^/]+)/breakpoints/(\d+)/toggle)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               auto host = find(req.matches[1]);
               int id = std::stoi(req.matches[2]);
               auto body = parse_body(req);
               host->require_idle();
               auto bp = host->run([&](session& s) {
                 bool want = body.contains("enabled") ? body["enabled"].get<bool>() : !s.find_breakpoint(id).enabled;
                 return s.enable_breakpoint(id, want);
               });
               send_json(res, 200, to_json(bp));
             });
           });

  auto resume = [this](bool step) {
    return [this, step](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto host = find(req.matches[1]);
        resume_slot slot(*host);
        auto ev = host->run([&](session& s) { return step ? s.step() : s.continue_run(); });
        json j{{"stop", to_json(ev.reply)}, {"pc", hex_addr(ev.pc)}, {"location", to_json(ev.where)},
               {"exited", ev.target_exited()}};
        if (ev.breakpoint_id) j["breakpoint_id"] = *ev.breakpoint_id;
        send_json(res, 200, j);
      });
    };
  };
  svr.Post(R"(/sessions/([^/]+)/step)", resume(true));
  svr.Post(R"(/sessions/([^/]+)/continue)", resume(false));

  svr.Get(R"(/sessions/([^/]+)/registers)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      host->require_idle();
      send_json(res, 200, to_json(host->run([](session& s) { return s.read_registers(); })));
    });
  });

  svr.Get(R"(/sessions/([^/]+)/memory)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      if (!req.has_param("addr") || !req.has_param("len")) {
        throw http_error(400, "invalid_argument", "memory needs addr and len");
      }
      auto addr = rsp::parse_hex_u64(req.get_param_value("addr"));
      auto len = rsp::parse_hex_u64(req.get_param_value("len")); // "0x" prefix for hex
      std::size_t n = 0;
      try {
        n = req.get_param_value("len").starts_with("0x") ? static_cast<std::size_t>(*len)
                                                         : std::stoul(req.get_param_value("len"));
      } catch (...) {
        len.reset();
      }
      if (!addr || !len || n == 0 || n > 65536) {
        throw http_error(400, "invalid_argument", "addr must be hex and len 1..65536");
      }
      host->require_idle();
      auto bytes = host->run([&](session& s) { return s.read_memory(*addr, n); });
      send_json(res, 200, {{"addr", hex_addr(*addr)}, {"len", n}, {"hex", rsp::to_hex(bytes)}});
    });
  });

  svr.Get(R"(/sessions/([^/]+)/source)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      auto state = host->state();
      std::string rel;
      if (req.has_param("file")) {
        rel = req.get_param_value("file");
      } else if (state.contains("location") && state["location"].contains("file")) {
        rel = state["location"]["file"].get<std::string>();
      } else {
        throw http_error(404, "unknown_file", "current location has no source file");
      }
      auto text = read_text_file(resolve_source(rel));

      std::optional<unsigned> current;
      if (state.contains("location") && state["location"].contains("file") &&
          same_file(state["location"]["file"].get<std::string>(), rel)) {
        current = state["location"]["line"].get<unsigned>();
      }
      std::set<unsigned> bp_lines;
      for (const auto& bp : state["breakpoints"]) {
        if (bp.contains("file") && same_file(bp["file"].get<std::string>(), rel)) {
          bp_lines.insert(bp["line"].get<unsigned>());
        }
      }

      std::istringstream in(text);
      std::ostringstream listing;
      std::string line;
      unsigned no = 0;
      while (std::getline(in, line)) {
        ++no;
        char num[16];
        std::snprintf(num, sizeof num, "%5u", no);
        listing << num << (bp_lines.contains(no) ? '*' : ' ') << (current == no ? '>' : ' ') << ' ' << line << '\n';
      }
      json j{{"file", rel}, {"text", text}, {"lines", no}, {"listing", listing.str()},
             {"breakpoint_lines", bp_lines}, {"current_line", nullptr}};
      if (current) j["current_line"] = *current;
      send_json(res, 200, j);
    });
  });

  svr.Post(R"(/sessions/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      auto body = parse_body(req);
      auto cat = open_catalog(body.value("catalog", std::string("builtin:freebsd8-i386")));
      auto budget = body.value("budget", std::size_t{64});
      trace_options topts;
      topts.record_reentry = body.value("reentry", false);
      resume_slot slot(*host);
      auto trace = host->run([&](session& s) {
        return trace_boot(s, cat, budget, topts, [&](const trace_event& ev) {
          host->emit({{"kind", "trace_progress"},
                      {"milestone", ev.milestone_key},
                      {"pc", hex_addr(ev.pc)},
                      {"trace_seq", ev.seq},
                      {"out_of_order", ev.out_of_order}});
        });
      });
      host->set_trace(trace, cat);
      auto j = to_json(trace);
      j["flow"] = render_flow(trace, cat, flow_format::text);
      send_json(res, 200, j);
    });
  });

  svr.Get(R"(/sessions/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto t = find(req.matches[1])->trace();
      if (!t) throw http_error(404, "no_trace", "no boot trace recorded yet");
      send_json(res, 200, to_json(t->first));
    });
  });

  svr.Get(R"(/sessions/([^/]+)/flow)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto t = find(req.matches[1])->trace();
      if (!t) throw http_error(404, "no_trace", "no boot trace recorded yet");
      auto format = req.has_param("format") ? req.get_param_value("format") : "text";
      if (format == "text") {
        res.set_content(render_flow(t->first, t->second, flow_format::text), "text/plain; charset=utf-8");
      } else if (format == "dot") {
        res.set_content(render_flow(t->first, t->second, flow_format::dot), "text/vnd.graphviz");
      } else {
        throw http_error(400, "invalid_argument", "format must be text or dot");
      }
    });
  });
}

void api_server::impl::stream_route() {
  svr.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto host = find(req.matches[1]);
      std::uint64_t after = 0;
      std::string cursor;
      if (req.has_param("after")) {
        cursor = req.get_param_value("after");
      } else if (req.has_header("Last-Event-ID")) {
        cursor = req.get_header_value("Last-Event-ID");
      }
      if (!cursor.empty()) {
        try {
          after = std::stoull(cursor);
        } catch (...) {
          throw http_error(400, "invalid_argument", "event cursor must be a sequence number");
        }
      }
      res.set_header("Cache-Control", "no-cache");
      auto next = std::make_shared<std::uint64_t>(after);
      res.set_chunked_content_provider("text/event-stream",
                                       [this, host, next](std::size_t, httplib::DataSink& sink) {
                                         bool closed = false;
                                         auto events = host->events_after(*next, std::chrono::milliseconds(500),
                                                                          closed);
                                         std::string out;
                                         for (const auto& ev : events) {
                                           out += "id: " + std::to_string(ev["seq"].get<std::uint64_t>()) + "\n";
                                           out += "event: " + ev["kind"].get<std::string>() + "\n";
                                           out += "data: " + ev.dump() + "\n\n";
                                           *next = ev["seq"].get<std::uint64_t>();
                                         }
                                         if (out.empty()) out = ": keepalive\n\n";
                                         if (!sink.write(out.data(), out.size())) return false;
                                         if ((closed && events.empty()) || stopping) sink.done();
                                         return true;
                                       });
    });
  });
}

void api_server::impl::bench_routes() {
  auto respond = [](const httplib::Request& req, httplib::Response& res, const std::vector<bench_summary>& sums) {
    auto format = req.has_param("format") ? req.get_param_value("format") : "json";
    if (format == "text") {
      res.set_content(render_bench_tables(sums, table_format::text), "text/plain; charset=utf-8");
      return;
    }
    if (format == "markdown") {
      res.set_content(render_bench_tables(sums, table_format::markdown), "text/markdown; charset=utf-8");
      return;
    }
    if (format != "json") throw http_error(400, "invalid_argument", "format must be json, text or markdown");
    json list = json::array();
    for (const auto& s : sums) list.push_back(to_json(s));
    json cmp = json::array();
    for (const auto& c : compare_schedulers(sums)) {
      cmp.push_back({{"metric", std::string(to_string(c.ule.key.what))},
                     {"concurrency", c.ule.key.concurrency},
                     {"ule", to_json(c.ule)},
                     {"bsd", to_json(c.bsd)},
                     {"verdict", to_json(c.result)}});
    }
    send_json(res, 200,
              {{"summaries", list},
               {"comparisons", cmp},
               {"text", render_bench_tables(sums, table_format::text)},
               {"markdown", render_bench_tables(sums, table_format::markdown)}});
  };

  svr.Get("/bench", [this, respond](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto path = bench_path();
      if (!path) throw http_error(404, "no_bench", "no bench summaries configured");
      respond(req, res, load_summaries_csv(read_text_file(*path)));
    });
  });

  svr.Post("/bench", [respond](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      bool samples = req.body.find("value_seconds") != std::string::npos;
      bool population = req.has_param("population") && req.get_param_value("population") != "0";
      respond(req, res,
              samples ? summarize_all(load_samples_csv(req.body), population) : load_summaries_csv(req.body));
    });
  });
}

// ---------------------------------------------------------------------------

api_server::api_server(api_options opts) : impl_(std::make_unique<impl>(std::move(opts))) {}

api_server::~api_server() { stop(); }

int api_server::start() {
  auto& m = *impl_;
  m.source_root = m.opts.defaults.source_root;
  if (m.opts.demo && m.opts.defaults.source_root == ".") {
    std::random_device rd;
    auto dir = fs::temp_directory_path() / ("bootscope-demo-" + std::to_string(::getpid()) + "-" +
                                            std::to_string(rd() % 100000));
    for (const auto& [rel, text] : boot_fixture_sources()) {
      fs::create_directories((dir / rel).parent_path());
      std::ofstream(dir / rel) << text;
    }
    m.demo_dir = dir;
    m.source_root = dir;
  }
  m.routes();
  if (m.opts.demo) m.create(json::object(), "demo");

  m.port = m.opts.port == 0 ? m.svr.bind_to_any_port(m.opts.bind_host) : m.opts.port;
  if (m.opts.port != 0 && !m.svr.bind_to_port(m.opts.bind_host, m.opts.port)) m.port = -1;
  if (m.port <= 0) {
    throw error(errc::bind_failed, "cannot listen on " + m.opts.bind_host + ":" + std::to_string(m.opts.port));
  }
  m.thread = std::thread([&m] { m.svr.listen_after_bind(); });
  m.svr.wait_until_ready();
  return m.port;
}

void api_server::stop() {
  if (!impl_) return;
  auto& m = *impl_;
  if (m.stopping.exchange(true)) return;
  std::vector<std::shared_ptr<session_host>> hosts;
  {
    std::lock_guard lock(m.mu);
    for (auto& [id, h] : m.sessions) hosts.push_back(h);
    m.sessions.clear();
  }
  for (auto& h : hosts) h->shutdown();
  m.svr.stop();
  if (m.thread.joinable()) m.thread.join();
  if (m.demo_dir) {
    std::error_code ec;
    fs::remove_all(*m.demo_dir, ec);
  }
}

int api_server::port() const noexcept { return impl_->port; }

const std::filesystem::path& api_server::source_root() const noexcept { return impl_->source_root; }

} // namespace bootscope::facade
