#include "bootscope/mocktarget.hpp"

#include "bootscope/error.hpp"
#include "bootscope/rsp.hpp"

#include <algorithm>
#include <cerrno>
#include <fcntl.h>
#include <fstream>
#include <poll.h>
#include <sstream>
#include <sys/socket.h>
#include <unistd.h>

namespace bootscope {

namespace {

constexpr std::size_t stub_packet_size = 0x1000;
constexpr std::size_t max_memory_chunk = stub_packet_size / 2;

std::string hex(std::uint64_t v) { return "0x" + rsp::hex_u64(v); }

} // namespace

void target_script::validate() const {
  if (trace.empty()) throw error(errc::invalid_argument, name + ": trace is empty");
  if (entry_pc != trace.front()) {
    throw error(errc::invalid_argument, name + ": entry " + hex(entry_pc) + " differs from trace start " +
                                            hex(trace.front()));
  }
  for (auto pc : trace) {
    if (!contains(pc) && !external.contains(pc)) {
      throw error(errc::invalid_argument, name + ": trace pc " + hex(pc) + " lies outside the image");
    }
  }
}

// ---------------------------------------------------------------------------
// Script files

namespace {

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void script_fail(std::size_t no, const std::string& why) {
  throw error(errc::parse_error, "script line " + std::to_string(no) + ": " + why, no);
}

std::uint64_t script_hex(std::size_t no, const std::string& text) {
  auto v = rsp::parse_hex_u64(text);
  if (!v) script_fail(no, "'" + text + "' is not a hex number");
  return *v;
}

} // namespace

target_script load_script(std::string_view text, const std::filesystem::path& base_dir) {
  target_script s;
  std::vector<register_def> layout;
  std::optional<std::size_t> pc_index;
  std::vector<std::pair<std::string, std::uint64_t>> values;
  bool have_entry = false;

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    std::vector<std::string> args;
    for (std::string a; fields >> a;) args.push_back(a);
    auto need = [&](std::size_t n) {
      if (args.size() != n) script_fail(no, key + " takes " + std::to_string(n) + " argument(s)");
    };

    if (key == "name") {
      if (args.empty()) script_fail(no, "name needs a value");
      std::string joined;
      for (const auto& a : args) joined += (joined.empty() ? "" : " ") + a;
      s.name = joined;
    } else if (key == "base") {
      need(1);
      s.base = script_hex(no, args[0]);
    } else if (key == "image") {
      need(1);
      s.memory = read_binary(base_dir / args[0]);
    } else if (key == "entry") {
      need(1);
      s.entry_pc = script_hex(no, args[0]);
      have_entry = true;
    } else if (key == "trace") {
      for (const auto& a : args) s.trace.push_back(script_hex(no, a));
    } else if (key == "external") {
      for (const auto& a : args) s.external.insert(script_hex(no, a));
    } else if (key == "register") {
      if (args.size() < 2 || args.size() > 3) script_fail(no, "register takes <name> <bits> [pc]");
      unsigned bits = static_cast<unsigned>(std::strtoul(args[1].c_str(), nullptr, 10));
      if (args.size() == 3) {
        if (args[2] != "pc") script_fail(no, "unknown register flag " + args[2]);
        pc_index = layout.size();
      }
      layout.push_back({args[0], bits});
    } else if (key == "reg") {
      need(2);
      values.emplace_back(args[0], script_hex(no, args[1]));
    } else if (key == "z0") {
      need(1);
      if (args[0] != "on" && args[0] != "off") script_fail(no, "z0 takes on|off");
      s.features.z0_supported = args[0] == "on";
    } else {
      script_fail(no, "unknown directive '" + key + "'");
    }
  }

  if (!layout.empty()) {
    if (!pc_index) throw error(errc::parse_error, "script register layout names no pc register");
    try {
      s.registers = register_file(register_layout(std::move(layout), *pc_index));
    } catch (const error& e) {
      throw error(errc::parse_error, e.what());
    }
  }
  for (const auto& [name, value] : values) {
    try {
      s.registers.set(name, value);
    } catch (const error& e) {
      throw error(errc::parse_error, e.what());
    }
  }
  if (!have_entry && !s.trace.empty()) s.entry_pc = s.trace.front();
  try {
    s.validate();
  } catch (const error& e) {
    throw error(errc::parse_error, e.what());
  }
  return s;
}

target_script load_script_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_script(buf.str(), path.parent_path());
}

void export_image(const target_script& script, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::io_error, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(script.memory.data()), static_cast<std::streamsize>(script.memory.size()));
}

void save_script(const target_script& script, const std::filesystem::path& script_path) {
  auto image = script_path;
  image.replace_extension(".bin");
  export_image(script, image);

  std::ofstream out(script_path);
  if (!out) throw error(errc::io_error, "cannot write " + script_path.string());
  out << "# bootscope mock target script\n";
  out << "name " << script.name << "\n";
  out << "base " << hex(script.base) << "\n";
  out << "image " << image.filename().string() << "\n";
  out << "entry " << hex(script.entry_pc) << "\n";
  for (std::size_t i = 0; i < script.trace.size(); i += 8) {
    out << "trace";
    for (std::size_t j = i; j < std::min(i + 8, script.trace.size()); ++j) out << " " << hex(script.trace[j]);
    out << "\n";
  }
  for (auto pc : script.external) out << "external " << hex(pc) << "\n";
  const auto& regs = script.registers.layout.registers();
  for (std::size_t i = 0; i < regs.size(); ++i) {
    out << "register " << regs[i].name << " " << regs[i].bits
        << (i == script.registers.layout.pc_index() ? " pc" : "") << "\n";
  }
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (script.registers.values[i] != 0) out << "reg " << regs[i].name << " " << hex(script.registers.values[i]) << "\n";
  }
  out << "z0 " << (script.features.z0_supported ? "on" : "off") << "\n";
}

// ---------------------------------------------------------------------------
// ELF32 writer

namespace {

void put(std::vector<std::uint8_t>& out, std::uint64_t v, unsigned width) {
  for (unsigned i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void align(std::vector<std::uint8_t>& out, std::size_t a) {
  while (out.size() % a != 0) out.push_back(0);
}

} // namespace

std::vector<std::uint8_t> write_elf32(std::uint64_t base, const std::vector<std::uint8_t>& memory,
                                      std::span<const symbol> symbols) {
  // Layout: header | .text | .symtab | .strtab | .shstrtab | section headers
  std::string shstrtab("\0.text\0.symtab\0.strtab\0.shstrtab\0", 33);
  std::string strtab(1, '\0');
  std::vector<std::uint8_t> symtab(16, 0); // null symbol
  for (const auto& s : symbols) {
    put(symtab, strtab.size(), 4);
    strtab += s.name;
    strtab.push_back('\0');
    put(symtab, s.address, 4);
    put(symtab, s.size.value_or(0), 4);
    unsigned type = s.kind == symbol_kind::function ? 2 : s.kind == symbol_kind::object ? 1 : 0;
    put(symtab, (1u << 4) | type, 1); // STB_GLOBAL
    put(symtab, 0, 1);
    put(symtab, 1, 2); // .text
  }

  std::vector<std::uint8_t> out;
  out.resize(52, 0);
  align(out, 16);
  auto text_off = out.size();
  out.insert(out.end(), memory.begin(), memory.end());
  align(out, 4);
  auto symtab_off = out.size();
  out.insert(out.end(), symtab.begin(), symtab.end());
  auto strtab_off = out.size();
  out.insert(out.end(), strtab.begin(), strtab.end());
  auto shstrtab_off = out.size();
  out.insert(out.end(), shstrtab.begin(), shstrtab.end());
  align(out, 4);
  auto shoff = out.size();

  auto section = [&](std::uint32_t name, std::uint32_t type, std::uint32_t flags, std::uint64_t addr,
                     std::uint64_t off, std::uint64_t size, std::uint32_t link, std::uint32_t info,
                     std::uint32_t entsize) {
    put(out, name, 4);
    put(out, type, 4);
    put(out, flags, 4);
    put(out, addr, 4);
    put(out, off, 4);
    put(out, size, 4);
    put(out, link, 4);
    put(out, info, 4);
    put(out, 4, 4);
    put(out, entsize, 4);
  };
  section(0, 0, 0, 0, 0, 0, 0, 0, 0);
  section(1, 1, 0x7, base, text_off, memory.size(), 0, 0, 0); // PROGBITS, WAX
  section(7, 2, 0, 0, symtab_off, symtab.size(), 3, 1, 16);   // SYMTAB -> .strtab
  section(15, 3, 0, 0, strtab_off, strtab.size(), 0, 0, 0);
  section(23, 3, 0, 0, shstrtab_off, shstrtab.size(), 0, 0, 0);

  std::vector<std::uint8_t> hdr;
  const std::uint8_t ident[16] = {0x7f, 'E', 'L', 'F', 1, 1, 1, 0};
  hdr.insert(hdr.end(), ident, ident + 16);
  put(hdr, 2, 2);    // ET_EXEC
  put(hdr, 3, 2);    // EM_386
  put(hdr, 1, 4);    // EV_CURRENT
  put(hdr, base, 4); // entry
  put(hdr, 0, 4);    // phoff
  put(hdr, shoff, 4);
  put(hdr, 0, 4);  // flags
  put(hdr, 52, 2); // ehsize
  put(hdr, 0, 2);  // phentsize
  put(hdr, 0, 2);  // phnum
  put(hdr, 40, 2); // shentsize
  put(hdr, 5, 2);  // shnum
  put(hdr, 4, 2);  // shstrndx
  std::copy(hdr.begin(), hdr.end(), out.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Server

mock_stub::mock_stub(target_script script, fault_injection faults)
    : script_(std::move(script)), faults_(faults), memory_(script_.memory), registers_(script_.registers) {}

std::unique_ptr<mock_stub> mock_stub::serve(target_script script, int port, std::string host,
                                            fault_injection faults) {
  script.validate();
  std::unique_ptr<mock_stub> stub(new mock_stub(std::move(script), faults));
  stub->listener_ = detail::listen_tcp(host, port);
  stub->port_ = detail::local_port(stub->listener_);
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw error(errc::bind_failed, "cannot create wake pipe");
  stub->wake_read_ = fds[0];
  stub->wake_write_ = fds[1];
  stub->thread_ = std::thread([s = stub.get()] { s->run(); });
  return stub;
}

mock_stub::~mock_stub() {
  stop();
  if (wake_read_ >= 0) ::close(wake_read_);
  if (wake_write_ >= 0) ::close(wake_write_);
}

void mock_stub::stop() {
  if (stopping_.exchange(true)) return;
  if (wake_write_ >= 0) {
    char c = 'x';
    [[maybe_unused]] auto n = ::write(wake_write_, &c, 1);
  }
  if (thread_.joinable()) thread_.join();
  listener_.reset();
}

mock_stub::snapshot mock_stub::state() const {
  std::lock_guard lock(mu_);
  return {memory_, position_, finished_, z0_, connections_, refused_};
}

mock_stub::transcript mock_stub::wire() const {
  std::lock_guard lock(mu_);
  return wire_;
}

void mock_stub::send(int client, std::string_view bytes) {
  {
    std::lock_guard lock(mu_);
    wire_.sent.append(bytes);
  }
  detail::send_all(client, bytes);
}

// Reads what the client has sent so far and answers it. False once the client
// has hung up. Without `wait` only already-queued bytes are consumed.
bool mock_stub::pump(int client, std::string& buffer, bool wait) {
  for (;;) {
    char chunk[4096];
    auto n = ::recv(client, chunk, sizeof chunk, wait ? 0 : MSG_DONTWAIT);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && !wait && (errno == EAGAIN || errno == EWOULDBLOCK)) return true;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
    {
      std::lock_guard lock(mu_);
      wire_.received.append(chunk, static_cast<std::size_t>(n));
    }
    on_bytes(client, buffer);
    if (wait) return true;
  }
}

void mock_stub::run() {
  detail::unique_fd client;
  std::string buffer;
  while (!stopping_) {
    pollfd fds[3] = {{wake_read_, POLLIN, 0}, {listener_.get(), POLLIN, 0}, {client.get(), POLLIN, 0}};
    int n = ::poll(fds, client ? 3 : 2, -1);
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (fds[0].revents != 0) break;
    if (client && (fds[2].revents & (POLLIN | POLLHUP | POLLERR))) {
      if (!pump(client.get(), buffer, true)) {
        client.reset();
        buffer.clear();
      }
    }
    if (fds[1].revents & POLLIN) {
      detail::unique_fd incoming(::accept4(listener_.get(), nullptr, nullptr, SOCK_CLOEXEC));
      if (!incoming) continue;
      // The current client may have hung up with its last bytes still unread.
      if (client && !pump(client.get(), buffer, false)) {
        client.reset();
        buffer.clear();
      }
      std::lock_guard lock(mu_);
      if (client) {
        ++refused_;
      } else {
        ++connections_;
        detail::set_nodelay(incoming.get());
        client = std::move(incoming);
        buffer.clear();
      }
    }
  }
}

void mock_stub::on_bytes(int client, std::string& buffer) {
  for (;;) {
    auto start = buffer.find_first_of("$+-");
    if (start == std::string::npos) {
      buffer.clear();
      return;
    }
    buffer.erase(0, start);
    if (buffer.front() == rsp::ack) {
      buffer.erase(0, 1);
      continue;
    }
    if (buffer.front() == rsp::nack) {
      buffer.erase(0, 1);
      std::string again;
      {
        std::lock_guard lock(mu_);
        again = last_reply_;
      }
      if (!again.empty()) send(client, again);
      continue;
    }

    rsp::packet pkt;
    try {
      pkt = rsp::decode_packet(buffer);
    } catch (const error& e) {
      if (e.code() == errc::truncated_frame) return;
      auto end = buffer.find(rsp::frame_end);
      buffer.erase(0, end == std::string::npos ? buffer.size() : std::min(buffer.size(), end + 3));
      send(client, "-");
      continue;
    }
    buffer.erase(0, pkt.raw_len);

    bool nack_it = false;
    bool corrupt = false;
    {
      std::lock_guard lock(mu_);
      nack_it = frames_seen_++ < faults_.nack_first;
    }
    if (nack_it) {
      send(client, "-");
      continue;
    }
    if (faults_.silent) {
      send(client, "+");
      continue;
    }
    if ((pkt.payload == "c" || pkt.payload == "s") && script_.features.resume_latency.count() > 0) {
      std::this_thread::sleep_for(script_.features.resume_latency);
    }
    std::string frame;
    {
      std::lock_guard lock(mu_);
      frame = rsp::encode_packet(handle(pkt.payload), stub_packet_size);
      last_reply_ = frame;
      corrupt = replies_sent_++ < faults_.corrupt_first_replies;
    }
    if (corrupt) {
      auto bad = frame;
      bad[bad.size() - 1] = bad[bad.size() - 1] == '0' ? '1' : '0';
      send(client, "+" + bad);
    } else {
      send(client, "+" + frame);
    }
  }
}

bool mock_stub::active(std::uint64_t pc) const {
  if (z0_.contains(pc)) return true;
  return script_.contains(pc) && memory_[pc - script_.base] == 0xcc;
}

std::string mock_stub::handle(std::string_view payload) {
  if (payload.empty()) return "";
  if (payload.starts_with("qSupported")) return "PacketSize=" + rsp::hex_u64(stub_packet_size);
  if (payload == "?") return finished_ ? "W00" : "S05";

  if (payload == "g") {
    if (finished_) return "E01";
    auto regs = registers_;
    regs.set_pc(script_.trace[position_]);
    return encode_registers(regs);
  }
  if (payload.front() == 'G') {
    try {
      auto regs = decode_registers(registers_.layout, payload.substr(1));
      auto pc = registers_.pc();
      registers_ = regs;
      registers_.set_pc(pc); // the trace owns the pc
      return "OK";
    } catch (const error&) {
      return "E01";
    }
  }

  if (payload.front() == 'm' || payload.front() == 'M') {
    auto comma = payload.find(',');
    auto colon = payload.find(':');
    if (comma == std::string_view::npos) return "E01";
    auto addr = rsp::parse_hex_u64(payload.substr(1, comma - 1));
    auto len = rsp::parse_hex_u64(payload.substr(comma + 1, colon == std::string_view::npos ? colon : colon - comma - 1));
    if (!addr || !len) return "E01";
    if (payload.front() == 'm') {
      if (*len > max_memory_chunk || !script_.contains(*addr, *len)) return "E01";
      auto begin = memory_.begin() + static_cast<std::ptrdiff_t>(*addr - script_.base);
      return rsp::to_hex(std::span<const std::uint8_t>(&*begin, *len));
    }
    if (colon == std::string_view::npos) return "E01";
    auto bytes = rsp::from_hex(payload.substr(colon + 1));
    if (!bytes || bytes->size() != *len || !script_.contains(*addr, *len)) return "E01";
    std::copy(bytes->begin(), bytes->end(), memory_.begin() + static_cast<std::ptrdiff_t>(*addr - script_.base));
    return "OK";
  }

  if (payload == "s") {
    if (finished_ || ++position_ >= script_.trace.size()) {
      finished_ = true;
      position_ = script_.trace.size() - 1;
      return "W00";
    }
    return "S05";
  }
  if (payload == "c") {
    if (finished_) return "W00";
    for (auto i = position_ + 1; i < script_.trace.size(); ++i) {
      if (active(script_.trace[i])) {
        position_ = i;
        return "S05";
      }
    }
    finished_ = true;
    position_ = script_.trace.size() - 1;
    return "W00";
  }

  if (payload.starts_with("Z0,") || payload.starts_with("z0,")) {
    if (!script_.features.z0_supported) return "";
    auto rest = payload.substr(3);
    auto addr = rsp::parse_hex_u64(rest.substr(0, rest.find(',')));
    if (!addr) return "E01";
    if (payload.front() == 'Z') {
      z0_.insert(*addr);
    } else {
      z0_.erase(*addr);
    }
    return "OK";
  }
  return "";
}

} // namespace bootscope
