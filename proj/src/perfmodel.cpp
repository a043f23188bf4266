#include "bootscope/perfmodel.hpp"

#include "bootscope/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace bootscope {

// ---------------------------------------------------------------------------
// LOC

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    pos = nl + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Walks one line, updating the block-comment state. Returns true when any
// character outside a comment was seen.
bool has_code(std::string_view line, bool& in_block) {
  bool code = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (in_block) {
      if (line.substr(i, 2) == "*/") {
        in_block = false;
        ++i;
      }
      continue;
    }
    if (line.substr(i, 2) == "/*") {
      in_block = true;
      ++i;
      continue;
    }
    if (line.substr(i, 2) == "//") break;
    if (line[i] != ' ' && line[i] != '\t') code = true;
  }
  return code;
}

} // namespace

std::size_t count_loc(std::string_view source, line_span span) {
  auto lines = split_lines(source);
  if (span.start_line < 1 || span.start_line > span.end_line || span.end_line > lines.size()) {
    throw error(errc::span_out_of_range, "span " + std::to_string(span.start_line) + ":" +
                                             std::to_string(span.end_line) + " outside 1:" +
                                             std::to_string(lines.size()));
  }
  bool in_block = false;
  std::size_t count = 0;
  for (std::size_t i = 0; i < span.end_line; ++i) {
    bool started_in_block = in_block;
    auto t = trim(lines[i]);
    bool prefix_comment = !started_in_block && (t.starts_with("//") || t.starts_with("#") || t.starts_with("*"));
    bool code = has_code(lines[i], in_block);
    // A leading `*` line or `#` line ends no comment and opens none we track.
    if (prefix_comment) code = false;
    if (i + 1 >= span.start_line && code) ++count;
  }
  return count;
}

void loc_model::validate() const {
  if (!(t_instr.count() > 0)) throw error(errc::invalid_argument, "t_instr must be positive");
}

nanoseconds_d estimate_time(const loc_model& model, std::string_view function) {
  auto it = model.loc_counts.find(std::string(function));
  if (it == model.loc_counts.end()) throw error(errc::unknown_function, "no LOC count for " + std::string(function));
  return model.t_instr * static_cast<double>(it->second);
}

nanoseconds_d parse_duration(std::string_view text) {
  text = trim(text);
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr == text.data()) {
    throw error(errc::invalid_argument, "'" + std::string(text) + "' is not a duration");
  }
  auto unit = trim(std::string_view(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr)));
  double scale = 0;
  if (unit.empty() || unit == "ns") {
    scale = 1;
  } else if (unit == "us") {
    scale = 1e3;
  } else if (unit == "ms") {
    scale = 1e6;
  } else if (unit == "s") {
    scale = 1e9;
  } else {
    throw error(errc::invalid_argument, "unknown duration unit '" + std::string(unit) + "'");
  }
  nanoseconds_d d{value * scale};
  if (!(d.count() > 0) || !std::isfinite(d.count())) {
    throw error(errc::invalid_argument, "duration must be positive: " + std::string(text));
  }
  return d;
}

std::string format_number(double v) {
  // Round away binary noise such as 25.610000000000127 before printing.
  if (std::isfinite(v) && std::fabs(v) < 1e9) v = std::round(v * 1e9) / 1e9;
  if (v == 0) v = 0; // no "-0"
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Benchmarks

std::string_view to_string(metric m) noexcept {
  switch (m) {
  case metric::real: return "real";
  case metric::user: return "user";
  case metric::system: return "system";
  }
  return "?";
}

std::optional<metric> parse_metric(std::string_view raw) noexcept {
  std::string text(raw);
  for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (text == "real") return metric::real;
  if (text == "user") return metric::user;
  if (text == "system" || text == "sys") return metric::system;
  return std::nullopt;
}

bench_summary summarize(const std::vector<bench_sample>& samples, const group_key& key, bool population) {
  std::size_t n = 0;
  double mean = 0;
  double m2 = 0;
  for (const auto& s : samples) {
    if (s.scheduler != key.scheduler || s.what != key.what || s.concurrency != key.concurrency) continue;
    ++n;
    double d = s.value - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (s.value - mean);
  }
  if (n == 0) {
    throw error(errc::empty_group, "no samples for " + key.scheduler + "/" + std::string(to_string(key.what)) + "/" +
                                       std::to_string(key.concurrency));
  }
  bench_summary out{key, n, mean, std::nullopt};
  if (n >= 2) out.stddev = std::sqrt(m2 / static_cast<double>(population ? n : n - 1));
  return out;
}

std::vector<bench_summary> summarize_all(const std::vector<bench_sample>& samples, bool population) {
  std::set<group_key> keys;
  for (const auto& s : samples) keys.insert({s.scheduler, s.what, s.concurrency});
  std::vector<bench_summary> out;
  for (const auto& k : keys) out.push_back(summarize(samples, k, population));
  return out;
}

verdict compare(const bench_summary& a, const bench_summary& b) {
  if (a.key.what != b.key.what || a.key.concurrency != b.key.concurrency) {
    throw error(errc::mismatched_groups, "cannot compare " + std::string(to_string(a.key.what)) + "/" +
                                             std::to_string(a.key.concurrency) + " with " +
                                             std::string(to_string(b.key.what)) + "/" +
                                             std::to_string(b.key.concurrency));
  }
  verdict v;
  v.delta_mean = std::fabs(a.mean - b.mean);
  if (a.mean < b.mean) {
    v.faster = a.key.scheduler;
  } else if (b.mean < a.mean) {
    v.faster = b.key.scheduler;
  } else {
    v.faster = "tie";
  }
  if (a.stddev && b.stddev) {
    double combined = std::sqrt(*a.stddev * *a.stddev + *b.stddev * *b.stddev);
    v.advisory = "delta " + format_number(v.delta_mean) + " vs combined stddev " + format_number(combined) +
                 (v.delta_mean > combined ? ": exceeds spread" : ": within spread");
  } else {
    v.advisory = "delta " + format_number(v.delta_mean) + ", no stddev to compare against";
  }
  return v;
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    auto comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

[[noreturn]] void csv_fail(std::size_t no, const std::string& why) {
  throw error(errc::parse_error, "csv line " + std::to_string(no) + ": " + why, no);
}

double csv_number(std::size_t no, std::string_view field, const char* what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
    csv_fail(no, std::string(what) + " '" + std::string(field) + "' is not a number");
  }
  if (v < 0) csv_fail(no, std::string(what) + " is negative");
  return v;
}

unsigned csv_count(std::size_t no, std::string_view field, const char* what) {
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || v == 0) {
    csv_fail(no, std::string(what) + " must be a positive integer");
  }
  return v;
}

template <typename Row>
void for_each_row(std::string_view text, std::string_view header_prefix, Row&& row) {
  auto lines = split_lines(text);
  bool header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (!line.starts_with(header_prefix)) csv_fail(i + 1, "expected header '" + std::string(header_prefix) + "'");
      header = true;
      continue;
    }
    row(i + 1, split_csv(line));
  }
  if (!header) throw error(errc::parse_error, "csv has no header");
}

} // namespace

std::vector<bench_sample> load_samples_csv(std::string_view text) {
  std::vector<bench_sample> out;
  for_each_row(text, "scheduler,metric,concurrency,value_seconds", [&](std::size_t no, const auto& f) {
    if (f.size() != 4) csv_fail(no, "expected 4 fields");
    if (f[0].empty()) csv_fail(no, "scheduler is empty");
    auto m = parse_metric(f[1]);
    if (!m) csv_fail(no, "unknown metric '" + std::string(f[1]) + "'");
    out.push_back({std::string(f[0]), *m, csv_count(no, f[2], "concurrency"), csv_number(no, f[3], "value")});
  });
  return out;
}

std::vector<bench_summary> load_summaries_csv(std::string_view text) {
  std::vector<bench_summary> out;
  for_each_row(text, "scheduler,metric,concurrency,mean,stddev", [&](std::size_t no, const auto& f) {
    if (f.size() != 5 && f.size() != 6) csv_fail(no, "expected 5 or 6 fields");
    if (f[0].empty()) csv_fail(no, "scheduler is empty");
    auto m = parse_metric(f[1]);
    if (!m) csv_fail(no, "unknown metric '" + std::string(f[1]) + "'");
    bench_summary s{{std::string(f[0]), *m, csv_count(no, f[2], "concurrency")}, std::nullopt,
                    csv_number(no, f[3], "mean"), std::nullopt};
    if (!f[4].empty()) s.stddev = csv_number(no, f[4], "stddev");
    if (f.size() == 6 && !f[5].empty()) s.n = csv_count(no, f[5], "n");
    out.push_back(std::move(s));
  });
  return out;
}

namespace {

bool is_ule(std::string_view s) { return s == "ULE" || s == "ule"; }
bool is_bsd(std::string_view s) { return s == "4BSD" || s == "4bsd" || s == "BSD" || s == "bsd"; }

std::string title_of(metric m) {
  switch (m) {
  case metric::real: return "Real Time Statistics for Schedulers";
  case metric::user: return "User Time Statistics for Schedulers";
  case metric::system: return "System Time Statistics for Schedulers";
  }
  return "";
}

std::string render_table(const std::vector<std::vector<std::string>>& rows, table_format format) {
  std::ostringstream out;
  if (format == table_format::markdown) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out << "|";
      for (const auto& cell : rows[r]) out << " " << cell << " |";
      out << "\n";
      if (r == 0) {
        out << "|";
        for (std::size_t c = 0; c < rows[r].size(); ++c) out << " --- |";
        out << "\n";
      }
    }
    return out.str();
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      out << (c ? "  " : "") << rows[r][c];
      if (c + 1 < rows[r].size()) out << std::string(width[c] - rows[r][c].size(), ' ');
    }
    out << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    }
  }
  return out.str();
}

} // namespace

std::vector<comparison> compare_schedulers(const std::vector<bench_summary>& summaries) {
  std::map<std::pair<metric, unsigned>, const bench_summary*> ule, bsd;
  std::set<std::pair<metric, unsigned>> cells;
  for (const auto& s : summaries) {
    auto cell = std::make_pair(s.key.what, s.key.concurrency);
    if (is_ule(s.key.scheduler)) {
      ule[cell] = &s;
    } else if (is_bsd(s.key.scheduler)) {
      bsd[cell] = &s;
    } else {
      throw error(errc::invalid_argument, "tables compare ULE and 4BSD; got scheduler " + s.key.scheduler);
    }
    cells.insert(cell);
  }

  std::vector<std::string> missing;
  for (const auto& cell : cells) {
    auto name = std::string(to_string(cell.first)) + "/" + std::to_string(cell.second);
    if (!ule.contains(cell)) missing.push_back("ULE " + name);
    if (!bsd.contains(cell)) missing.push_back("4BSD " + name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw error(errc::incomplete_matrix, "missing summaries: " + list);
  }

  std::vector<comparison> out;
  for (const auto& cell : cells) out.push_back({*ule[cell], *bsd[cell], compare(*ule[cell], *bsd[cell])});
  return out;
}

std::string render_bench_tables(const std::vector<bench_summary>& summaries, table_format format) {
  auto comparisons = compare_schedulers(summaries);
  std::ostringstream out;
  out << (format == table_format::markdown ? "# " : "") << "Scheduler Benchmark Tables\n";
  for (auto m : {metric::real, metric::user, metric::system}) {
    std::vector<std::vector<std::string>> rows{
        {"Concurrent Processes", "ULE", "ULE Stddev", "BSD", "BSD Stddev", "faster"}};
    for (const auto& c : comparisons) {
      if (c.ule.key.what != m) continue;
      rows.push_back({std::to_string(c.ule.key.concurrency), format_number(c.ule.mean),
                      c.ule.stddev ? format_number(*c.ule.stddev) : "-", format_number(c.bsd.mean),
                      c.bsd.stddev ? format_number(*c.bsd.stddev) : "-", c.result.faster});
    }
    if (rows.size() == 1) continue;
    out << "\n" << (format == table_format::markdown ? "## " : "") << title_of(m) << "\n\n";
    out << render_table(rows, format);
  }
  return out.str();
}

} // namespace bootscope
