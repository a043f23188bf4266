#include "bootscope/facade/target.hpp"

#include "bootscope/error.hpp"

#include <fstream>
#include <sstream>

namespace bootscope::facade {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

opened_target open_target(const target_request& req) {
  opened_target out;
  std::vector<symbol> syms;
  line_map lines;
  link_config cfg;
  cfg.host = req.host;
  cfg.port = req.port;
  cfg.response_timeout = req.timeout;

  if (req.fixture) {
    auto script = build_boot_fixture(req.z0);
    script.features.resume_latency = req.resume_latency;
    out.stub = mock_stub::serve(std::move(script));
    cfg.host = "127.0.0.1";
    cfg.port = out.stub->port();
    auto idx = load_symbol_map(boot_fixture_symbol_map());
    syms.assign(idx.entries().begin(), idx.entries().end());
    lines = load_line_map(boot_fixture_line_map());
  } else {
    if (req.elf) {
      auto text = read_text_file(*req.elf);
      auto idx = load_elf_symbols(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
      syms.assign(idx.entries().begin(), idx.entries().end());
    }
    if (req.symmap) {
      auto idx = load_symbol_map(read_text_file(*req.symmap));
      syms.insert(syms.end(), idx.entries().begin(), idx.entries().end());
    }
    if (req.linemap) lines = load_line_map(read_text_file(*req.linemap));
  }

  auto layout = req.layout ? register_layout::parse(read_text_file(*req.layout)) : register_layout::i386();
  out.debug = std::make_unique<session>(session::attach(link::connect(cfg),
                                                        std::make_shared<const symbol_index>(std::move(syms)),
                                                        std::make_shared<const line_map>(std::move(lines)), layout));
  return out;
}

} // namespace bootscope::facade
