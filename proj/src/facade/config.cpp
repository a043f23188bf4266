#include "bootscope/facade/config.hpp"

#include "bootscope/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <json.hpp>

namespace bootscope::facade {

namespace {

int parse_int(const char* name, std::string_view text) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw error(errc::invalid_argument, std::string(name) + "='" + std::string(text) + "' is not an integer");
  }
  return v;
}

} // namespace

settings_layer layer_from_env(const env_lookup& getenv_fn) {
  settings_layer l;
  auto get = [&](const char* name) -> std::optional<std::string> {
    const char* v = getenv_fn(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  l.host = get("BOOTSCOPE_HOST");
  if (auto v = get("BOOTSCOPE_PORT")) l.port = parse_int("BOOTSCOPE_PORT", *v);
  if (auto v = get("BOOTSCOPE_TIMEOUT_MS")) l.timeout_ms = parse_int("BOOTSCOPE_TIMEOUT_MS", *v);
  l.source_root = get("BOOTSCOPE_SOURCE_ROOT");
  if (auto v = get("BOOTSCOPE_API_PORT")) l.api_port = parse_int("BOOTSCOPE_API_PORT", *v);
  l.bench_summaries = get("BOOTSCOPE_BENCH_SUMMARIES");
  return l;
}

settings_layer layer_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, "config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw error(errc::parse_error, "config " + path.string() + " is not a JSON object");

  settings_layer l;
  auto str = [&](const char* key, std::optional<std::string>& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw error(errc::parse_error, std::string("config key ") + key + " must be a string");
    out = j[key].get<std::string>();
  };
  auto num = [&](const char* key, std::optional<int>& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) {
      throw error(errc::parse_error, std::string("config key ") + key + " must be an integer");
    }
    out = j[key].get<int>();
  };
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"host", "port", "timeout_ms", "source_root", "api_port", "bench_summaries"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw error(errc::parse_error, "unknown config key " + key);
    }
  }
  str("host", l.host);
  num("port", l.port);
  num("timeout_ms", l.timeout_ms);
  str("source_root", l.source_root);
  num("api_port", l.api_port);
  str("bench_summaries", l.bench_summaries);
  return l;
}

settings resolve(const settings_layer& flags, const settings_layer& env, const settings_layer& file) {
  settings s;
  auto pick = [](auto& out, const auto& a, const auto& b, const auto& c) {
    if (a) {
      out = *a;
    } else if (b) {
      out = *b;
    } else if (c) {
      out = *c;
    }
  };
  pick(s.host, flags.host, env.host, file.host);
  pick(s.port, flags.port, env.port, file.port);
  pick(s.timeout_ms, flags.timeout_ms, env.timeout_ms, file.timeout_ms);
  pick(s.source_root, flags.source_root, env.source_root, file.source_root);
  pick(s.api_port, flags.api_port, env.api_port, file.api_port);
  if (flags.bench_summaries) {
    s.bench_summaries = flags.bench_summaries;
  } else if (env.bench_summaries) {
    s.bench_summaries = env.bench_summaries;
  } else {
    s.bench_summaries = file.bench_summaries;
  }
  return s;
}

} // namespace bootscope::facade
