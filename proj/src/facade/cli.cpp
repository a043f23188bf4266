#include "bootscope/facade/cli.hpp"

#include "bootscope/boottrace.hpp"
#include "bootscope/error.hpp"
#include "bootscope/facade/api.hpp"
#include "bootscope/facade/json.hpp"
#include "bootscope/facade/target.hpp"
#include "bootscope/perfmodel.hpp"
#include "bootscope/rsp.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace bootscope::facade {

namespace {

struct common_flags {
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<int> timeout_ms;
  std::optional<std::string> config;

  void add(CLI::App* cmd) {
    cmd->add_option("--host", host, "gdbstub host (env BOOTSCOPE_HOST)");
    cmd->add_option("--port", port, "gdbstub port (env BOOTSCOPE_PORT)");
    cmd->add_option("--timeout-ms", timeout_ms, "response timeout (env BOOTSCOPE_TIMEOUT_MS)");
    cmd->add_option("--config", config, "JSON config file");
  }
};

struct symbol_flags {
  std::optional<std::string> image;
  std::optional<std::string> symmap;
  std::optional<std::string> linemap;
  std::optional<std::string> layout;

  void add(CLI::App* cmd) {
    cmd->add_option("--image", image, "ELF image with a symbol table");
    cmd->add_option("--symmap", symmap, "nm-style symbol map");
    cmd->add_option("--linemap", linemap, "TSV line map: address, file, line");
    cmd->add_option("--layout", layout, "register layout file (default i386)");
  }

  void apply(target_request& req) const {
    if (image) req.elf = *image;
    if (symmap) req.symmap = *symmap;
    if (linemap) req.linemap = *linemap;
    if (layout) req.layout = *layout;
  }
};

settings resolve_settings(const settings_layer& flags, const std::optional<std::string>& config,
                          const env_lookup& env) {
  settings_layer file;
  if (config) file = layer_from_file(*config);
  return resolve(flags, layer_from_env(env), file);
}

settings_layer layer_of(const common_flags& f) {
  settings_layer l;
  l.host = f.host;
  l.port = f.port;
  l.timeout_ms = f.timeout_ms;
  return l;
}

target_request request_from(const settings& s) {
  target_request req;
  req.host = s.host;
  req.port = s.port;
  req.timeout = std::chrono::milliseconds(s.timeout_ms);
  return req;
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw error(errc::io_error, "cannot write " + path);
  f << text;
}

void wait_for_shutdown(int duration_ms) {
  if (duration_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(duration_ms));
    return;
  }
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  int sig = 0;
  sigwait(&set, &sig);
}

// ---------------------------------------------------------------------------
// connect

breakpoint_origin parse_break_spec(const std::string& spec) {
  if (spec.starts_with("*")) {
    auto addr = rsp::parse_hex_u64(spec.substr(1));
    if (!addr) throw error(errc::invalid_argument, "bad address " + spec);
    return raw_origin{*addr};
  }
  auto colon = spec.rfind(':');
  if (colon != std::string::npos && colon + 1 < spec.size() &&
      spec.find_first_not_of("0123456789", colon + 1) == std::string::npos) {
    return line_origin{spec.substr(0, colon), static_cast<unsigned>(std::stoul(spec.substr(colon + 1)))};
  }
  return symbol_origin{spec};
}

std::string describe_bp(const breakpoint& bp) {
  std::ostringstream o;
  o << "#" << bp.id << " 0x" << rsp::hex_u64(bp.address) << " " << describe(bp.origin) << " [" << to_string(bp.mechanism)
    << (bp.enabled ? "" : ", disabled") << "] hits " << bp.hit_count;
  return o.str();
}

void print_stop(const stop_event& ev, std::ostream& out) {
  if (ev.target_exited()) {
    out << "target " << (ev.reply.kind == rsp::stop_kind::exited ? "exited" : "terminated");
    if (ev.reply.exit_code) out << " with code " << unsigned(*ev.reply.exit_code);
    if (ev.reply.signal_no) out << " by signal " << unsigned(*ev.reply.signal_no);
    out << "\n";
    return;
  }
  if (ev.breakpoint_id) out << "breakpoint #" << *ev.breakpoint_id << " hit\n";
  out << "stopped at " << format_location(ev.where) << "\n";
}

void repl(session& s, std::istream& in, std::ostream& out, bool prompt) {
  out << "attached: " << to_string(s.current_phase()) << " at " << format_location(s.current_location()) << "\n";
  std::string line;
  for (;;) {
    if (prompt) out << "(bootscope) " << std::flush;
    if (!std::getline(in, line)) break;
    std::istringstream words(line);
    std::string cmd;
    if (!(words >> cmd)) continue;
    std::vector<std::string> args;
    for (std::string a; words >> a;) args.push_back(a);
    try {
      auto need = [&](std::size_t n) {
        if (args.size() < n) throw error(errc::invalid_argument, cmd + " needs " + std::to_string(n) + " argument(s)");
      };
      if (cmd == "quit" || cmd == "q" || cmd == "detach") {
        break;
      } else if (cmd == "help") {
        out << "break <symbol|file:line|*addr>, delete|enable|disable <id>, step [n], continue, regs,\n"
               "mem <addr> <len>, where, info, quit\n";
      } else if (cmd == "break" || cmd == "b") {
        need(1);
        out << "breakpoint " << describe_bp(s.set_breakpoint(parse_break_spec(args[0]))) << "\n";
      } else if (cmd == "delete") {
        need(1);
        s.remove_breakpoint(std::stoi(args[0]));
        out << "deleted #" << args[0] << "\n";
      } else if (cmd == "enable" || cmd == "disable") {
        need(1);
        out << "breakpoint " << describe_bp(s.enable_breakpoint(std::stoi(args[0]), cmd == "enable")) << "\n";
      } else if (cmd == "step" || cmd == "s") {
        int n = args.empty() ? 1 : std::stoi(args[0]);
        for (int i = 0; i < n; ++i) {
          auto ev = s.step();
          print_stop(ev, out);
          if (ev.target_exited()) break;
        }
      } else if (cmd == "continue" || cmd == "c") {
        print_stop(s.continue_run(), out);
      } else if (cmd == "regs") {
        auto regs = s.read_registers();
        for (std::size_t i = 0; i < regs.values.size(); ++i) {
          out << std::left << std::setw(8) << regs.layout.registers()[i].name << "0x" << rsp::hex_u64(regs.values[i])
              << "\n";
        }
      } else if (cmd == "mem") {
        need(2);
        auto addr = rsp::parse_hex_u64(args[0]);
        if (!addr) throw error(errc::invalid_argument, "bad address " + args[0]);
        auto len = std::stoul(args[1], nullptr, 0);
        auto bytes = s.read_memory(*addr, len);
        for (std::size_t i = 0; i < bytes.size(); i += 16) {
          out << "0x" << rsp::hex_u64(*addr + i) << ":";
          for (std::size_t j = i; j < std::min(i + 16, bytes.size()); ++j) {
            out << " " << rsp::to_hex(std::span(&bytes[j], 1));
          }
          out << "\n";
        }
      } else if (cmd == "where") {
        out << to_string(s.current_phase()) << " at " << format_location(s.current_location()) << "\n";
      } else if (cmd == "info") {
        if (s.breakpoints().empty()) out << "no breakpoints\n";
        for (const auto& bp : s.breakpoints()) out << describe_bp(bp) << "\n";
      } else {
        out << "error: unknown command '" << cmd << "' (try help)\n";
      }
    } catch (const error& e) {
      out << "error: " << e.what() << "\n";
    } catch (const std::logic_error& e) {
      out << "error: bad number in '" << line << "'\n";
    }
    if (s.current_phase() == phase::disconnected) {
      out << "link lost\n";
      break;
    }
  }
}

// ---------------------------------------------------------------------------

std::string error_line(std::string_view code, std::string_view message) {
  return json{{"error", code}, {"message", message}}.dump() + "\n";
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err,
            const env_lookup& env) {
  CLI::App app{"bootscope: boot-time kernel debugging over the GDB remote protocol"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // connect
  auto* connect = app.add_subcommand("connect", "interactive line-mode debugger");
  common_flags connect_common;
  symbol_flags connect_syms;
  bool connect_fixture = false;
  bool connect_no_z0 = false;
  connect_common.add(connect);
  connect_syms.add(connect);
  connect->add_flag("--fixture", connect_fixture, "debug the built-in boot fixture in-process");
  connect->add_flag("--no-z0", connect_no_z0, "fixture without Z0 support (patched traps)");

  // trace-boot
  auto* trace = app.add_subcommand("trace-boot", "record boot milestones");
  common_flags trace_common;
  symbol_flags trace_syms;
  std::string catalog = "builtin:freebsd8-i386";
  std::string trace_out = "-";
  std::optional<std::string> dot_out;
  std::size_t budget = 64;
  bool trace_fixture = false;
  bool trace_no_z0 = false;
  bool reentry = false;
  trace_common.add(trace);
  trace_syms.add(trace);
  trace->add_option("--catalog", catalog, "catalog file or builtin:<name>")->capture_default_str();
  trace->add_option("--out", trace_out, "report file, - for stdout")->capture_default_str();
  trace->add_option("--dot", dot_out, "also write the flow as a dot graph");
  trace->add_option("--budget", budget, "maximum events")->capture_default_str()->check(CLI::PositiveNumber);
  trace->add_flag("--fixture", trace_fixture, "trace the built-in boot fixture in-process");
  trace->add_flag("--no-z0", trace_no_z0, "fixture without Z0 support (patched traps)");
  trace->add_flag("--reentry", reentry, "record repeated milestone hits");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "LOC timing estimate");
  std::string source;
  std::vector<std::string> funcs;
  std::string t_instr = "10ns";
  estimate->add_option("--source", source, "source file")->required();
  estimate->add_option("--func", funcs, "name:start:end, repeatable")->required();
  estimate->add_option("--t-instr", t_instr, "time per line")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "scheduler benchmark tables");
  std::optional<std::string> samples, summaries;
  std::string bench_out = "-";
  std::string bench_format = "text";
  bool population = false;
  bench->add_option("--samples", samples, "CSV scheduler,metric,concurrency,value_seconds");
  bench->add_option("--summaries", summaries, "CSV scheduler,metric,concurrency,mean,stddev[,n]");
  bench->add_option("--out", bench_out, "output file, - for stdout")->capture_default_str();
  bench->add_option("--format", bench_format, "text or markdown")
      ->check(CLI::IsMember({"text", "markdown"}))
      ->capture_default_str();
  bench->add_flag("--population", population, "population stddev (n) instead of sample (n-1)");

  // mock
  auto* mock = app.add_subcommand("mock", "serve a scripted gdbstub");
  std::optional<std::string> script;
  bool mock_fixture = false;
  bool mock_no_z0 = false;
  int mock_port = 1234;
  std::string mock_host = "127.0.0.1";
  int mock_duration = 0;
  auto* script_opt = mock->add_option("--script", script, "target script file");
  mock->add_flag("--fixture", mock_fixture, "serve the built-in boot fixture")->excludes(script_opt);
  mock->add_flag("--no-z0", mock_no_z0, "disable Z0 support");
  mock->add_option("--port", mock_port, "listen port, 0 for any")->capture_default_str();
  mock->add_option("--bind", mock_host, "listen address")->capture_default_str();
  mock->add_option("--duration-ms", mock_duration, "exit after this long (0: until SIGINT)");

  // export-fixture
  auto* exportf = app.add_subcommand("export-fixture", "write the boot fixture files");
  std::string export_dir;
  bool export_no_z0 = false;
  exportf->add_option("--dir", export_dir, "output directory")->required();
  exportf->add_flag("--no-z0", export_no_z0, "script without Z0 support");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for the web UI");
  std::optional<int> api_port;
  std::string bind = "127.0.0.1";
  bool demo = false;
  std::optional<std::string> source_root, bench_summaries, serve_config;
  int serve_duration = 0;
  int latency_ms = 0;
  serve->add_option("--port", api_port, "API port (env BOOTSCOPE_API_PORT, default 8080)");
  serve->add_option("--bind", bind, "listen address")->capture_default_str();
  serve->add_flag("--demo", demo, "start a fixture session named demo");
  serve->add_option("--source-root", source_root, "directory served by /source (env BOOTSCOPE_SOURCE_ROOT)");
  serve->add_option("--bench-summaries", bench_summaries, "summaries CSV served by /bench");
  serve->add_option("--config", serve_config, "JSON config file");
  serve->add_option("--duration-ms", serve_duration, "exit after this long (0: until SIGINT)");
  serve->add_option("--fixture-latency-ms", latency_ms, "delay fixture resumes");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what());
    return exit_usage;
  }

  try {
    if (*connect) {
      auto s = resolve_settings(layer_of(connect_common), connect_common.config, env);
      auto req = request_from(s);
      req.fixture = connect_fixture;
      req.z0 = !connect_no_z0;
      connect_syms.apply(req);
      auto t = open_target(req);
      repl(*t.debug, in, out, &in == &std::cin && ::isatty(0));
      t.debug->detach();
      return exit_ok;
    }

    if (*trace) {
      auto s = resolve_settings(layer_of(trace_common), trace_common.config, env);
      auto cat = open_catalog(catalog);
      auto req = request_from(s);
      req.fixture = trace_fixture;
      req.z0 = !trace_no_z0;
      trace_syms.apply(req);
      auto t = open_target(req);
      std::vector<std::uint8_t> before;
      if (t.stub) before = t.stub->state().memory;

      trace_options topts;
      topts.record_reentry = reentry;
      auto result = trace_boot(*t.debug, cat, budget, topts);
      for (const auto& w : result.warnings) err << "warning: " << w << "\n";

      write_output(trace_out, render_flow(result, cat, flow_format::text), out);
      if (dot_out) write_output(*dot_out, render_flow(result, cat, flow_format::dot), out);

      bool identical = true;
      if (t.stub) {
        identical = t.stub->state().memory == before;
        if (identical && t.debug->current_phase() == phase::stopped) {
          const auto& sc = t.stub->script();
          identical = t.debug->read_memory(sc.base, sc.memory.size()) == before;
        }
        out << "post-run readback: " << (identical ? "identical" : "DIFFERS") << "\n";
      }
      if (trace_out != "-") {
        out << "trace: ";
        for (std::size_t i = 0; i < result.events.size(); ++i) out << (i ? " → " : "") << result.events[i].milestone_key;
        out << " (" << to_string(result.outcome) << ")\n";
      }
      t.debug->detach();
      if (!identical) {
        err << error_line("memory_changed", "target memory differs after the trace");
        return exit_failure;
      }
      return exit_ok;
    }

    if (*estimate) {
      auto text = read_text_file(source);
      loc_model model;
      model.t_instr = parse_duration(t_instr);
      std::vector<std::string> order;
      for (const auto& f : funcs) {
        auto c2 = f.rfind(':');
        auto c1 = c2 == std::string::npos || c2 == 0 ? std::string::npos : f.rfind(':', c2 - 1);
        if (c1 == std::string::npos || c1 == 0) {
          err << error_line("usage", "--func expects name:start:end, got " + f);
          return exit_usage;
        }
        line_span span;
        try {
          span = {std::stoul(f.substr(c1 + 1, c2 - c1 - 1)), std::stoul(f.substr(c2 + 1))};
        } catch (const std::logic_error&) {
          err << error_line("usage", "--func line numbers must be integers: " + f);
          return exit_usage;
        }
        auto name = f.substr(0, c1);
        model.loc_counts[name] = count_loc(text, span);
        order.push_back(name);
      }
      for (const auto& name : order) {
        out << name << ": " << model.loc_counts[name] << " LOC x " << format_number(model.t_instr.count())
            << " ns = " << format_number(estimate_time(model, name).count()) << " ns\n";
      }
      return exit_ok;
    }

    if (*bench) {
      if (!samples && !summaries) {
        err << error_line("usage", "bench needs --samples and/or --summaries");
        return exit_usage;
      }
      std::vector<bench_summary> all;
      if (samples) all = summarize_all(load_samples_csv(read_text_file(*samples)), population);
      if (summaries) {
        auto more = load_summaries_csv(read_text_file(*summaries));
        all.insert(all.end(), more.begin(), more.end());
      }
      auto format = bench_format == "markdown" ? table_format::markdown : table_format::text;
      auto doc = render_bench_tables(all, format);
      doc += format == table_format::markdown ? "\n## Comparisons\n\n" : "\nComparisons\n\n";
      for (const auto& c : compare_schedulers(all)) {
        doc += (format == table_format::markdown ? "- " : "") + std::string(to_string(c.ule.key.what)) + "/" +
               std::to_string(c.ule.key.concurrency) + ": " + c.result.faster + " faster, " + c.result.advisory +
               "\n";
      }
      write_output(bench_out, doc, out);
      return exit_ok;
    }

    if (*mock) {
      if (!script && !mock_fixture) {
        err << error_line("usage", "mock needs --script or --fixture");
        return exit_usage;
      }
      auto sc = script ? load_script_file(*script) : build_boot_fixture(!mock_no_z0);
      if (mock_no_z0) sc.features.z0_supported = false;
      auto stub = mock_stub::serve(std::move(sc), mock_port, mock_host);
      out << "mock stub '" << stub->script().name << "' listening on " << mock_host << ":" << stub->port() << std::endl;
      wait_for_shutdown(mock_duration);
      stub->stop();
      return exit_ok;
    }

    if (*exportf) {
      export_boot_fixture(export_dir, !export_no_z0);
      out << "fixture written to " << export_dir << "\n";
      return exit_ok;
    }

    if (*serve) {
      settings_layer flags;
      flags.api_port = api_port;
      flags.source_root = source_root;
      flags.bench_summaries = bench_summaries;
      auto s = resolve_settings(flags, serve_config, env);
      api_options opts;
      opts.bind_host = bind;
      opts.port = s.api_port;
      opts.defaults = s;
      opts.demo = demo;
      opts.fixture_latency = std::chrono::milliseconds(latency_ms);
      api_server server(opts);
      int port = server.start();
      out << "serving on http://" << bind << ":" << port << (demo ? " (demo session: demo)" : "") << std::endl;
      wait_for_shutdown(serve_duration);
      server.stop();
      return exit_ok;
    }
  } catch (const error& e) {
    err << error_line(to_string(e.code()), e.what());
    return exit_failure;
  } catch (const std::exception& e) {
    err << error_line("internal", e.what());
    return exit_failure;
  }
  return exit_usage;
}

} // namespace bootscope::facade
