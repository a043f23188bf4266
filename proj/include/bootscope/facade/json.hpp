#pragma once

// Wire shapes for the HTTP API. Addresses are "0x"-prefixed lowercase hex
// strings; absent optionals are omitted.

#include "bootscope/boottrace.hpp"
#include "bootscope/perfmodel.hpp"
#include "bootscope/session.hpp"

#include <json.hpp>

namespace bootscope::facade {

using nlohmann::json;

std::string hex_addr(std::uint64_t v);

json to_json(const location& loc);
json to_json(const breakpoint& bp);
json to_json(const rsp::stop_reply& r);
json to_json(const register_file& regs);
json to_json(const trace_event& ev);
json to_json(const boot_trace& trace);
json to_json(const bench_summary& s);
json to_json(const verdict& v);

} // namespace bootscope::facade
