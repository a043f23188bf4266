#include "bootscope/facade/json.hpp"

#include "bootscope/rsp.hpp"

namespace bootscope::facade {

std::string hex_addr(std::uint64_t v) { return "0x" + rsp::hex_u64(v); }

json to_json(const location& loc) {
  json j{{"address", hex_addr(loc.address)}, {"text", format_location(loc)}};
  if (loc.symbol) {
    j["symbol"] = *loc.symbol;
    j["offset"] = loc.offset;
  }
  if (loc.file) j["file"] = *loc.file;
  if (loc.line) j["line"] = *loc.line;
  return j;
}

json to_json(const breakpoint& bp) {
  json j{{"id", bp.id},
         {"address", hex_addr(bp.address)},
         {"origin", describe(bp.origin)},
         {"mechanism", std::string(to_string(bp.mechanism))},
         {"enabled", bp.enabled},
         {"hit_count", bp.hit_count}};
  if (const auto* l = std::get_if<line_origin>(&bp.origin)) {
    j["file"] = l->file;
    j["line"] = l->line;
  }
  return j;
}

json to_json(const rsp::stop_reply& r) {
  json j{{"kind", std::string(to_string(r.kind))}};
  if (r.signal_no) j["signal"] = *r.signal_no;
  if (r.exit_code) j["exit_code"] = *r.exit_code;
  return j;
}

json to_json(const register_file& regs) {
  json list = json::array();
  for (std::size_t i = 0; i < regs.layout.registers().size(); ++i) {
    list.push_back({{"name", regs.layout.registers()[i].name},
                    {"bits", regs.layout.registers()[i].bits},
                    {"value", hex_addr(regs.values[i])}});
  }
  return {{"registers", list}, {"pc", hex_addr(regs.pc())}};
}

json to_json(const trace_event& ev) {
  return {{"seq", ev.seq},
          {"milestone", ev.milestone_key},
          {"pc", hex_addr(ev.pc)},
          {"step_budget_used", ev.step_budget_used},
          {"out_of_order", ev.out_of_order}};
}

json to_json(const boot_trace& trace) {
  json events = json::array();
  for (const auto& ev : trace.events) events.push_back(to_json(ev));
  return {{"catalog", trace.catalog_name},
          {"outcome", std::string(to_string(trace.outcome))},
          {"events", events},
          {"warnings", trace.warnings}};
}

json to_json(const bench_summary& s) {
  json j{{"scheduler", s.key.scheduler},
         {"metric", std::string(to_string(s.key.what))},
         {"concurrency", s.key.concurrency},
         {"mean", s.mean}};
  if (s.n) j["n"] = *s.n;
  if (s.stddev) j["stddev"] = *s.stddev;
  return j;
}

json to_json(const verdict& v) {
  return {{"faster", v.faster}, {"delta_mean", v.delta_mean}, {"advisory", v.advisory}};
}

} // namespace bootscope::facade
