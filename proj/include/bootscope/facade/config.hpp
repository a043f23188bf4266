#pragma once

// Settings shared by the CLI and the API server. Each source yields a layer
// of optional values; resolve() takes the first present value in the order
// flags, environment, config file, built-in default.
//
// Environment: BOOTSCOPE_HOST, BOOTSCOPE_PORT, BOOTSCOPE_TIMEOUT_MS,
// BOOTSCOPE_SOURCE_ROOT, BOOTSCOPE_API_PORT, BOOTSCOPE_BENCH_SUMMARIES.
// Config file: a JSON object with keys host, port, timeout_ms, source_root,
// api_port, bench_summaries.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace bootscope::facade {

struct settings {
  std::string host = "127.0.0.1";
  int port = 1234; ///< gdbstub port
  int timeout_ms = 5000;
  std::string source_root = ".";
  int api_port = 8080;
  std::optional<std::string> bench_summaries;
};

struct settings_layer {
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<int> timeout_ms;
  std::optional<std::string> source_root;
  std::optional<int> api_port;
  std::optional<std::string> bench_summaries;
};

using env_lookup = std::function<const char*(const char*)>;

/// Throws errc::invalid_argument on non-numeric values.
settings_layer layer_from_env(const env_lookup& getenv_fn);

/// Throws errc::io_error or errc::parse_error.
settings_layer layer_from_file(const std::filesystem::path& path);

settings resolve(const settings_layer& flags, const settings_layer& env, const settings_layer& file);

} // namespace bootscope::facade
