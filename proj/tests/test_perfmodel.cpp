#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bootscope/error.hpp"
#include "bootscope/perfmodel.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>

using namespace bootscope;
using namespace bootscope::testing;

namespace {

// Source lines paired with whether they count as executable.
const std::vector<std::pair<std::string, bool>> annotated = {
    {"#include <sys/param.h>", false},
    {"", false},
    {"/*", false},
    {" * Scheduler setup.", false},
    {" */", false},
    {"void", true},
    {"sched_setup(void *dummy)", true},
    {"{", true},
    {"\t// per-cpu queues", false},
    {"\tsched_setup_smp();   /* trailing */", true},
    {"\t/* one-line block */", false},
    {"\tx = 1; /* opens", true},
    {"\t   still comment", false},
    {"\t   closes */ y = 2;", true},
    {"\t/* a */ z = 3; /* b */", true},
    {"   ", false},
    {"\ttdq_setup(tdq);", true},
    {"}", true},
};

std::string annotated_text() {
  std::string out;
  for (const auto& [line, _] : annotated) out += line + "\n";
  return out;
}

std::size_t expected(std::size_t start, std::size_t end) {
  std::size_t n = 0;
  for (std::size_t i = start; i <= end; ++i) n += annotated[i - 1].second ? 1 : 0;
  return n;
}

bench_summary row(std::string sched, metric m, unsigned c, double mean, std::optional<double> sd) {
  return bench_summary{{std::move(sched), m, c}, std::nullopt, mean, sd};
}

} // namespace

TEST_CASE("count_loc on a hand-annotated file") {
  auto text = annotated_text();
  CHECK(count_loc(text, {1, annotated.size()}) == expected(1, annotated.size()));
  // Every sub-span agrees with the annotations, including spans that start
  // inside a block comment.
  for (std::size_t a = 1; a <= annotated.size(); ++a) {
    for (std::size_t b = a; b <= annotated.size(); ++b) {
      CAPTURE(a);
      CAPTURE(b);
      CHECK(count_loc(text, {a, b}) == expected(a, b));
    }
  }
}

TEST_CASE("count_loc span errors") {
  auto text = annotated_text();
  auto code = [&](line_span s) {
    try {
      count_loc(text, s);
    } catch (const error& e) {
      return e.code();
    }
    return errc::io_error;
  };
  CHECK(code({0, 3}) == errc::span_out_of_range);
  CHECK(code({5, 4}) == errc::span_out_of_range);
  CHECK(code({1, annotated.size() + 1}) == errc::span_out_of_range);
  CHECK(count_loc("a;\nb;", {2, 2}) == 1);
}

TEST_CASE("estimate_time") {
  loc_model m;
  m.loc_counts = {{"sched_init", 100}, {"empty", 0}, {"init386", 137}};
  CHECK(m.t_instr.count() == 10.0);
  CHECK(estimate_time(m, "sched_init").count() == 1000.0);
  CHECK(estimate_time(m, "empty").count() == 0.0);
  CHECK(estimate_time(m, "init386").count() == 1370.0);
  try {
    estimate_time(m, "missing");
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::unknown_function);
  }
  m.t_instr = nanoseconds_d(0);
  CHECK_THROWS_AS(m.validate(), error);
}

TEST_CASE("estimate is linear in the count") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> count(0, 1'000'000);
  loc_model m;
  for (int i = 0; i < 1000; ++i) {
    auto a = count(rng);
    auto b = count(rng);
    m.loc_counts = {{"a", a}, {"b", b}, {"ab", a + b}};
    CHECK(estimate_time(m, "ab").count() == estimate_time(m, "a").count() + estimate_time(m, "b").count());
    CHECK(estimate_time(m, "a").count() == 10.0 * static_cast<double>(a));
  }
}

TEST_CASE("parse_duration and format_number") {
  CHECK(parse_duration("10ns").count() == 10.0);
  CHECK(parse_duration("10").count() == 10.0);
  CHECK(parse_duration("2.5us").count() == 2500.0);
  CHECK(parse_duration("1ms").count() == 1e6);
  CHECK(parse_duration(" 1 s ").count() == 1e9);
  CHECK_THROWS_AS(parse_duration("fast"), error);
  CHECK_THROWS_AS(parse_duration("10 parsecs"), error);

  CHECK(format_number(1000) == "1000");
  CHECK(format_number(2.5) == "2.5");
  CHECK(format_number(2371.9 - 2346.29) == "25.61");
  CHECK(format_number(0) == "0");
  CHECK(format_number(-1.25) == "-1.25");
}

TEST_CASE("metric names") {
  for (auto m : {metric::real, metric::user, metric::system}) CHECK(parse_metric(to_string(m)) == m);
  CHECK(parse_metric("REAL") == metric::real);
  CHECK_FALSE(parse_metric("wall"));
}

TEST_CASE("summaries agree with the two-pass oracle") {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<std::size_t> size(1, 2000);
  std::normal_distribution<double> noise(0, 1);
  std::uniform_real_distribution<double> centre(-1e4, 1e4);
  std::uniform_real_distribution<double> spread(1e-3, 1e3);
  for (int g = 0; g < 50; ++g) {
    std::vector<bench_sample> samples;
    std::vector<double> xs;
    double c = centre(rng), w = spread(rng);
    for (std::size_t i = size(rng); i > 0; --i) {
      xs.push_back(c + w * noise(rng));
      samples.push_back({"ULE", metric::user, 2, xs.back()});
    }
    for (bool population : {false, true}) {
      auto s = summarize(samples, {"ULE", metric::user, 2}, population);
      auto o = oracle::two_pass(xs, population);
      CHECK(s.n == xs.size());
      CHECK(std::fabs(s.mean - o.mean) <= 1e-9 * std::max(1.0, std::fabs(o.mean)));
      REQUIRE(s.stddev.has_value() == o.stddev.has_value());
      if (o.stddev) CHECK(std::fabs(*s.stddev - *o.stddev) <= 1e-9 * std::max(1e-12, *o.stddev));
    }
  }
}

TEST_CASE("small-sample statistics") {
  std::vector<bench_sample> s = {{"ULE", metric::real, 2, 2}, {"ULE", metric::real, 2, 4}};
  auto sum = summarize(s, {"ULE", metric::real, 2});
  CHECK(sum.mean == 3.0);
  CHECK(*sum.stddev == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(*summarize(s, {"ULE", metric::real, 2}, true).stddev == doctest::Approx(1.0));

  std::vector<bench_sample> one = {{"ULE", metric::real, 2, 7}};
  auto single = summarize(one, {"ULE", metric::real, 2});
  CHECK(single.mean == 7.0);
  CHECK_FALSE(single.stddev);

  try {
    summarize(one, {"4BSD", metric::real, 2});
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::empty_group);
  }

  std::vector<bench_sample> mixed = {{"ULE", metric::real, 2, 1}, {"4BSD", metric::real, 2, 2},
                                     {"ULE", metric::real, 4, 3}, {"ULE", metric::real, 2, 5}};
  auto all = summarize_all(mixed);
  REQUIRE(all.size() == 3);
  CHECK(all[0].key < all[1].key);
  CHECK(all[1].key < all[2].key);
}

TEST_CASE("comparisons") {
  auto a = row("ULE", metric::real, 2, 10, 1);
  auto b = row("4BSD", metric::real, 2, 8, 1);
  auto v = compare(a, b);
  CHECK(v.faster == "4BSD");
  CHECK(v.delta_mean == 2.0);
  CHECK(v.advisory.find("exceeds spread") != std::string::npos);
  auto tie = compare(a, a);
  CHECK(tie.faster == "tie");
  CHECK(tie.delta_mean == 0.0);
  CHECK(compare(a, row("4BSD", metric::real, 2, 9.5, 1)).advisory.find("within spread") != std::string::npos);
  CHECK(compare(row("ULE", metric::real, 2, 1, std::nullopt), b).advisory.find("no stddev") != std::string::npos);
  try {
    compare(a, row("4BSD", metric::user, 2, 1, 1));
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::mismatched_groups);
  }
  CHECK_THROWS_AS(compare(a, row("4BSD", metric::real, 4, 1, 1)), error);
}

TEST_CASE("compare is antisymmetric and scale invariant") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mean(1, 5000);
  std::uniform_real_distribution<double> scale(0.25, 64);
  for (int i = 0; i < 1000; ++i) {
    auto a = row("ULE", metric::system, 4, mean(rng), 1);
    auto b = row("4BSD", metric::system, 4, mean(rng), 2);
    auto ab = compare(a, b);
    auto ba = compare(b, a);
    CHECK(ab.faster == ba.faster);
    CHECK(ab.delta_mean == ba.delta_mean);
    // Powers of two scale exactly.
    double k = std::exp2(std::round(std::log2(scale(rng))));
    auto as = a, bs = b;
    as.mean *= k;
    bs.mean *= k;
    auto scaled = compare(as, bs);
    CHECK(scaled.faster == ab.faster);
    CHECK(scaled.delta_mean == ab.delta_mean * k);
  }
}

TEST_CASE("scheduler matrix") {
  std::vector<bench_summary> s = {row("ule", metric::user, 4, 2, 1), row("bsd", metric::user, 4, 1, 1),
                                  row("ULE", metric::real, 2, 2, 1), row("4BSD", metric::real, 2, 3, 1)};
  auto cmp = compare_schedulers(s);
  REQUIRE(cmp.size() == 2);
  CHECK(cmp[0].ule.key.what == metric::real);
  CHECK(cmp[0].result.faster == "ULE");
  CHECK(cmp[1].result.faster == "bsd");

  auto missing = s;
  missing.pop_back();
  try {
    compare_schedulers(missing);
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::incomplete_matrix);
    CHECK(std::string(e.what()).find("real") != std::string::npos);
  }
  auto stranger = s;
  stranger.push_back(row("CFS", metric::real, 2, 1, 1));
  try {
    compare_schedulers(stranger);
    FAIL("no error");
  } catch (const error& e) {
    CHECK(e.code() == errc::invalid_argument);
  }
}

TEST_CASE("CSV ingestion") {
  auto samples = load_samples_csv("scheduler,metric,concurrency,value_seconds\n"
                                  "# comment\n"
                                  "ULE,real,2,10.5\n"
                                  "\n"
                                  "4BSD,user,4,3\n");
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].value == 10.5);
  CHECK(samples[1].what == metric::user);
  CHECK(samples[1].concurrency == 4);

  auto line_of = [](auto fn) -> std::optional<std::size_t> {
    try {
      fn();
    } catch (const error& e) {
      CHECK(e.code() == errc::parse_error);
      return e.line();
    }
    return std::nullopt;
  };
  CHECK(line_of([] { load_samples_csv("wrong,header\n"); }) == std::optional<std::size_t>(1));
  CHECK(line_of([] { load_samples_csv("scheduler,metric,concurrency,value_seconds\nULE,wall,2,1\n"); }) ==
        std::optional<std::size_t>(2));
  CHECK(line_of([] { load_samples_csv("scheduler,metric,concurrency,value_seconds\nULE,real,x,1\n"); }) ==
        std::optional<std::size_t>(2));
  CHECK(line_of([] { load_samples_csv("scheduler,metric,concurrency,value_seconds\nULE,real,2,abc\n"); }) ==
        std::optional<std::size_t>(2));
  CHECK(line_of([] { load_samples_csv("scheduler,metric,concurrency,value_seconds\nULE,real,2\n"); }) ==
        std::optional<std::size_t>(2));

  auto sums = load_summaries_csv("scheduler,metric,concurrency,mean,stddev,n\n"
                                 "ULE,real,2,5,,\n"
                                 "4BSD,real,2,4,0.5,10\n");
  REQUIRE(sums.size() == 2);
  CHECK_FALSE(sums[0].stddev);
  CHECK_FALSE(sums[0].n);
  CHECK(sums[1].n == std::optional<std::size_t>(10));
  CHECK(load_summaries_csv("scheduler,metric,concurrency,mean,stddev\nULE,real,2,5,1\n").size() == 1);
}

TEST_CASE("bundled table data reproduces the published verdicts") {
  auto sums = load_summaries_csv(read_text(std::filesystem::path(BOOTSCOPE_DATA_DIR) /
                                           "freebsd8_scheduler_summaries.csv"));
  REQUIRE(sums.size() == 12);
  auto cmp = compare_schedulers(sums);
  REQUIRE(cmp.size() == 6);
  const double deltas[] = {25.61, 8.8, 30.3, 83.77, 26.2, 34.04};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(cmp[i].result.faster == "4BSD");
    CHECK(std::fabs(cmp[i].result.delta_mean - deltas[i]) <= 1e-9);
  }
}

TEST_CASE("table rendering") {
  auto sums = load_summaries_csv(read_text(std::filesystem::path(BOOTSCOPE_DATA_DIR) /
                                           "freebsd8_scheduler_summaries.csv"));
  auto text = render_bench_tables(sums, table_format::text);
  CHECK(text.rfind("Scheduler Benchmark Tables\n", 0) == 0);
  for (const char* title :
       {"Real Time Statistics for Schedulers", "User Time Statistics for Schedulers",
        "System Time Statistics for Schedulers"}) {
    CHECK(text.find(title) != std::string::npos);
  }
  CHECK(text.find("2371.9") != std::string::npos);
  CHECK(text.find("2.228") != std::string::npos);
  CHECK(text.find("1999 ") != std::string::npos);

  auto md = render_bench_tables(sums, table_format::markdown);
  CHECK(md.find("| Concurrent Processes | ULE | ULE Stddev | BSD | BSD Stddev | faster |") != std::string::npos);
  CHECK(md.find("| 2 | 434.9 | 2.05 | 408.7 | 1.28 | 4BSD |") != std::string::npos);
  std::size_t rows = 0;
  for (auto pos = md.find("| 4BSD |"); pos != std::string::npos; pos = md.find("| 4BSD |", pos + 1)) ++rows;
  CHECK(rows == 6);

  std::vector<bench_summary> part = {row("ULE", metric::real, 2, 1, std::nullopt), row("4BSD", metric::real, 2, 2, 1)};
  auto partial = render_bench_tables(part, table_format::text);
  CHECK(partial.find("User Time") == std::string::npos);
  CHECK(partial.find(" - ") != std::string::npos);
}
