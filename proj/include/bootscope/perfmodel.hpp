#pragma once

// LOC timing estimates and scheduler benchmark statistics.
//
// Executable LOC: a line counts unless it is blank, starts (after leading
// whitespace) with `//`, `#` or `*`, or lies wholly inside a `/* */` block.
// Block-comment state is tracked from the first line of the file, so a span
// that starts inside a comment is handled correctly. Each counted source
// line is charged one t_instr.

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bootscope {

struct line_span {
  std::size_t start_line = 1; ///< 1-based, inclusive
  std::size_t end_line = 1;   ///< inclusive
};

/// Throws errc::span_out_of_range unless 1 <= start <= end <= line count.
std::size_t count_loc(std::string_view source, line_span span);

using nanoseconds_d = std::chrono::duration<double, std::nano>;

struct loc_model {
  nanoseconds_d t_instr{10.0};
  std::map<std::string, std::size_t> loc_counts;

  /// Throws errc::invalid_argument when t_instr <= 0.
  void validate() const;
};

/// loc_counts[function] * t_instr. Throws errc::unknown_function.
nanoseconds_d estimate_time(const loc_model& model, std::string_view function);

/// "10ns", "2.5us", "1ms", "1s" (a bare number means ns). Throws
/// errc::invalid_argument.
nanoseconds_d parse_duration(std::string_view text);

/// Shortest round-trip decimal form, e.g. 1000, 2.5, 25.61.
std::string format_number(double v);

enum class metric { real, user, system };

std::string_view to_string(metric m) noexcept;
std::optional<metric> parse_metric(std::string_view text) noexcept;

struct bench_sample {
  std::string scheduler;
  metric what = metric::real;
  unsigned concurrency = 1;
  double value = 0; ///< seconds
};

struct group_key {
  std::string scheduler;
  metric what = metric::real;
  unsigned concurrency = 1;

  auto operator<=>(const group_key&) const = default;
};

struct bench_summary {
  group_key key;
  std::optional<std::size_t> n; ///< absent for summaries ingested from a table
  double mean = 0;
  std::optional<double> stddev; ///< absent for n < 2
};

/// Welford mean and stddev over the samples matching `key`. The sample
/// (n-1) form is the default. Throws errc::empty_group.
bench_summary summarize(const std::vector<bench_sample>& samples, const group_key& key, bool population = false);

/// One summary per distinct group, ordered by key.
std::vector<bench_summary> summarize_all(const std::vector<bench_sample>& samples, bool population = false);

struct verdict {
  std::string faster; ///< scheduler name or "tie"
  double delta_mean = 0;
  std::string advisory;
};

/// Lower mean is faster. Throws errc::mismatched_groups unless metric and
/// concurrency agree.
verdict compare(const bench_summary& a, const bench_summary& b);

struct comparison {
  bench_summary ule;
  bench_summary bsd;
  verdict result;
};

/// Pairs ULE with 4BSD for every (metric, concurrency) present, ordered by
/// metric then concurrency. Scheduler names match ULE and 4BSD (or BSD) in
/// either case. Throws errc::incomplete_matrix naming the missing cells and
/// errc::invalid_argument for any other scheduler.
std::vector<comparison> compare_schedulers(const std::vector<bench_summary>& summaries);

/// CSV with header `scheduler,metric,concurrency,value_seconds`.
/// Throws errc::parse_error with the line number.
std::vector<bench_sample> load_samples_csv(std::string_view text);

/// CSV with header `scheduler,metric,concurrency,mean,stddev[,n]`; an empty
/// stddev field means absent.
std::vector<bench_summary> load_summaries_csv(std::string_view text);

enum class table_format { text, markdown };

/// One table per metric present, rows by concurrency, columns
/// Concurrent Processes | ULE | ULE Stddev | BSD | BSD Stddev | faster.
/// Throws errc::incomplete_matrix naming the missing cells.
std::string render_bench_tables(const std::vector<bench_summary>& summaries, table_format format);

} // namespace bootscope
