#pragma once

// Boot milestone catalogs and the tracer that drives a session across them.
//
// Catalog file format (`#` comments, blank lines ignored):
//
//     catalog freebsd8-i386
//
//     [milestone boot0]
//     symbol = boot0            # or: address = 0x7c00
//     source = sys/boot/i386/boot0/boot0.S
//     note   = loaded at 0x7c00  # repeatable, kept in order
//
// Milestone blocks appear in expected boot order.

#include "bootscope/session.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bootscope {

struct milestone {
  std::string key;
  std::variant<std::string, std::uint64_t> target; ///< symbol name or address
  std::string source_location;
  std::vector<std::string> notes;

  std::string describe_target() const;
};

struct milestone_catalog {
  std::string name;
  std::vector<milestone> milestones;

  const milestone* find(std::string_view key) const noexcept;
};

/// Throws errc::parse_error (with line) or errc::duplicate_key.
milestone_catalog load_catalog(std::string_view text);

/// Names accepted by builtin_catalog(), without the `builtin:` prefix.
std::vector<std::string> builtin_catalog_names();
/// Catalog file text for a built-in; throws errc::invalid_argument.
std::string builtin_catalog_text(std::string_view name);
milestone_catalog builtin_catalog(std::string_view name);

/// `builtin:<name>` or a path to a catalog file.
milestone_catalog open_catalog(std::string_view spec);

enum class trace_outcome { completed, target_exited_early, budget_exhausted };

std::string_view to_string(trace_outcome o) noexcept;

struct trace_event {
  std::size_t seq = 0;
  std::string milestone_key;
  std::uint64_t pc = 0;
  std::size_t step_budget_used = 0; ///< resumes issued when the hit was seen
  bool out_of_order = false;        ///< an earlier catalog milestone came after a later one
};

struct boot_trace {
  std::string catalog_name;
  std::vector<trace_event> events;
  trace_outcome outcome = trace_outcome::completed;
  std::vector<std::string> warnings;
};

struct trace_options {
  /// Record every hit instead of the first hit per milestone.
  bool record_reentry = false;
};

using trace_progress = std::function<void(const trace_event&)>;

/// Plants a breakpoint on every resolvable milestone and continues until
/// every milestone has been seen, the target exits, or `budget` events have
/// been recorded. The pc the session is stopped at counts as a hit. Only the
/// breakpoints the tracer created are removed afterwards.
///
/// Throws errc::empty_catalog; session errors propagate.
boot_trace trace_boot(session& s, const milestone_catalog& cat, std::size_t budget, trace_options opts = {},
                      const trace_progress& progress = {});

enum class flow_format { text, dot };

std::string render_flow(const boot_trace& trace, const milestone_catalog& cat, flow_format format);

} // namespace bootscope
