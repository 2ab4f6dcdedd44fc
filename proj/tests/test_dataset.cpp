#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "doctest.h"
#include "raus/dataset.hpp"
#include "raus/rng.hpp"

using namespace raus;

namespace {

RawPanel parse(const std::string& text) {
  std::istringstream in(text);
  return parse_panel(in);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

// Panel with `cases` subjects that have an event at every t >= 1 and
// `controls` that never do.
DiscretePanel toy_panel(int cases, int controls, int horizon = 4) {
  DiscretePanel p;
  p.variables = {"a"};
  p.cardinalities = {2};
  p.category_labels = {{"0", "1"}};
  p.horizon = horizon;
  for (int s = 0; s < cases + controls; ++s) {
    p.subject_ids.push_back("S" + std::to_string(s));
    for (int t = 0; t < horizon; ++t) {
      const int y = s < cases && t >= 1 ? 1 : 0;
      p.cells.push_back(y);
      p.labels.push_back(y);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("csv ingestion") {
  const std::string text =
      "subject_id,timestep,egfr,albumin,label\n"
      "S1,0,50,3.1,0\n"
      "S1,1,,3.3,1\n"
      "S2,0,70,4.0,0\n"
      "S2,1,72,,0\n";
  RawPanel p = parse(text);
  CHECK(p.horizon == 2);
  CHECK(p.variables == std::vector<std::string>{"egfr", "albumin"});
  REQUIRE(p.subjects.size() == 2);
  CHECK(p.has_labels);
  CHECK_FALSE(p.value(0, 0, 1).has_value());
  CHECK(p.value(0, 1, 1).value() == doctest::Approx(3.3));
  CHECK(p.subjects[0].labels[1].value() == 1);
  CHECK_FALSE(p.value(1, 1, 1).has_value());
}

TEST_CASE("the last row for a subject and timestep wins") {
  RawPanel p = parse(
      "subject_id,timestep,x\n"
      "S1,0,1\n"
      "S1,3,5\n"
      "S1,3,9\n"
      "S1,1,2\n");
  CHECK(p.horizon == 4);
  CHECK(p.value(0, 0, 3).value() == 9.0);
  CHECK_FALSE(p.value(0, 0, 2).has_value());
}

TEST_CASE("csv errors") {
  CHECK(code_of([] { parse("subject_id,timestep,x,x\nS1,0,1,2\nS1,1,1,2\n"); }) == ErrorCode::kSchema);
  CHECK(code_of([] { parse("subject_id,timestep,x\nS1,0\nS1,1,2\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse("subject_id,timestep,x\nS1,0,abc\nS1,1,2\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse("subject_id,timestep,x,label\nS1,0,1,2\nS1,1,2,0\n"); }) == ErrorCode::kParse);
  try {
    parse("subject_id,timestep,x\nS1,0,1\nS1,1,oops\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("iqr edges use linear interpolation") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8};
  BinningSpec spec = iqr_spec("x", v);
  REQUIRE(spec.edges.size() == 5);
  const double expected[] = {1, 2.75, 4.5, 6.25, 8};
  for (int i = 0; i < 5; ++i) CHECK(spec.edges[i] == doctest::Approx(expected[i]));
  CHECK(spec.bin_of(3) == 1);
  CHECK(spec.bin_of(2.75) == 1);  // interior ties go up
  CHECK(spec.bin_of(1) == 0);
  CHECK(spec.bin_of(8) == 3);
  CHECK(spec.bin_of(-100) == 0);
  CHECK(spec.bin_of(100) == 3);
}

TEST_CASE("iqr merges duplicate edges and rejects constants") {
  std::vector<double> tied{1, 1, 1, 1, 1, 1, 2, 3};
  BinningSpec spec = iqr_spec("x", tied);
  CHECK(spec.bins() >= 2);
  for (std::size_t i = 1; i < spec.edges.size(); ++i) CHECK(spec.edges[i] > spec.edges[i - 1]);
  std::vector<double> constant(10, 7.0);
  CHECK(code_of([&] { iqr_spec("x", constant); }) == ErrorCode::kDegenerateVariable);
}

TEST_CASE("staged egfr bins") {
  BinningSpec spec = egfr_staged_spec("egfr");
  REQUIRE(spec.bins() == 5);
  CHECK(spec.labels[spec.bin_of(50)] == "45–59 (Stage 3a)");
  CHECK(spec.labels[spec.bin_of(10)] == "<15 (Stage 5)");
  CHECK(spec.bin_of(60) == 4);
  CHECK(spec.bin_of(15) == 1);
  CHECK(spec.bin_of(500) == 4);
}

TEST_CASE("discretize is label free and drops degenerate variables") {
  RawPanel p = parse(
      "subject_id,timestep,egfr,flat,lab,label\n"
      "A,0,50,1,1,0\nA,1,20,1,2,1\n"
      "B,0,70,1,3,0\nB,1,10,1,4,0\n"
      "C,0,44,1,5,1\nC,1,61,1,6,0\n");
  auto result = discretize(p, BinningPolicy::defaults(p));
  CHECK(result.degenerate == std::vector<std::string>{"flat"});
  CHECK(result.panel.variables == std::vector<std::string>{"egfr", "lab"});
  CHECK(result.panel.cardinalities[0] == 5);
  CHECK(result.panel.cell(0, 0, 0) == 3);
  CHECK(result.panel.label(0, 1) == 1);

  RawPanel flipped = p;
  for (auto& s : flipped.subjects)
    for (auto& l : s.labels) l = 1 - l.value();
  auto again = discretize(flipped, BinningPolicy::defaults(flipped));
  CHECK(again.panel.cells == result.panel.cells);
}

TEST_CASE("kdigo rule") {
  using S = Series;
  SUBCASE("relative rise with low egfr") {
    std::vector<S> scr{{1.0, 1.1, 1.2, 1.6}};
    std::vector<S> egfr{{80, 80, 80, 40}};
    auto r = apply_kdigo_labels(scr, egfr);
    CHECK(r.labels[0] == std::vector<int>{0, 0, 0, 1});
  }
  SUBCASE("absolute rise within 48h") {
    std::vector<S> scr{{1.0, 1.0, 1.3}};
    std::vector<S> egfr{{90, 90, 90}};
    CHECK(apply_kdigo_labels(scr, egfr).labels[0] == std::vector<int>{0, 0, 1});
  }
  SUBCASE("no criterion met") {
    std::vector<S> scr{{1.0, 1.2, 1.2}};
    std::vector<S> egfr{{80, 80, 80}};
    CHECK(apply_kdigo_labels(scr, egfr).labels[0] == std::vector<int>{0, 0, 0});
  }
  SUBCASE("missing baseline excludes the subject") {
    std::vector<S> scr{{std::nullopt, 1.0}, {1.0, 1.0}};
    std::vector<S> egfr{{80, 80}, {80, 80}};
    auto r = apply_kdigo_labels(scr, egfr);
    CHECK(r.excluded == std::vector<std::size_t>{0});
    CHECK(r.labels[0].empty());
  }
}

TEST_CASE("stratified split sizes") {
  SUBCASE("exact halves") {
    DiscretePanel p = toy_panel(10, 10);
    SplitResult split = stratified_split(p, 0.5, 3);
    CHECK(split.train.subjects() == 10);
    CHECK(split.test.subjects() == 10);
    int train_cases = 0;
    for (std::size_t s = 0; s < split.train.subjects(); ++s) train_cases += split.train.ever_event(s);
    CHECK(train_cases == 5);
  }
  SUBCASE("large cohort test size") {
    std::vector<int> strata(67460, 0);
    std::fill(strata.begin(), strata.begin() + 8023, 1);
    std::vector<std::size_t> train, test;
    stratified_partition(strata, 0.7, 11, train, test);
    CHECK(test.size() == 20238);
    CHECK(train.size() + test.size() == strata.size());
  }
  SUBCASE("tiny stratum") {
    DiscretePanel p = toy_panel(1, 10);
    CHECK(code_of([&] { stratified_split(p, 0.7, 1); }) == ErrorCode::kStratumTooSmall);
  }
}

TEST_CASE("split is a seeded partition") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int cases = 2 + static_cast<int>(rng.index(30));
    const int controls = 2 + static_cast<int>(rng.index(60));
    DiscretePanel p = toy_panel(cases, controls);
    const std::uint64_t seed = rng.next();
    SplitResult a = stratified_split(p, 0.7, seed);
    SplitResult b = stratified_split(p, 0.7, seed);
    CHECK(a.train_rows == b.train_rows);
    std::set<std::size_t> all(a.train_rows.begin(), a.train_rows.end());
    for (auto r : a.test_rows) CHECK(all.insert(r).second);
    CHECK(all.size() == p.subjects());
    int train_cases = 0;
    for (auto r : a.train_rows) train_cases += r < static_cast<std::size_t>(cases);
    CHECK(std::abs(train_cases - 0.7 * cases) <= 1.0);
  }
}

TEST_CASE("undersampling balances every prediction timestep") {
  DiscretePanel p = toy_panel(10, 90);
  BalanceResult b = undersample_balance(p, 1, 42);
  REQUIRE(b.subsets.size() == 3);
  for (const auto& subset : b.subsets) {
    CHECK(subset.subjects.size() == 20);
    CHECK(subset.cases == 10);
    CHECK(std::is_sorted(subset.subjects.begin(), subset.subjects.end()));
  }
  BalanceResult again = undersample_balance(p, 1, 42);
  CHECK(again.subsets[1].subjects == b.subsets[1].subjects);

  CHECK_THROWS_AS(undersample_balance(p, 0, 42), Error);
  CHECK_THROWS_AS(undersample_balance(p, 4, 42), Error);
}

TEST_CASE("significance filter keeps informative variables") {
  DiscretePanel p = toy_panel(30, 30);
  p.variables.push_back("noise");
  p.cardinalities.push_back(2);
  p.category_labels.push_back({"0", "1"});
  std::vector<int> cells;
  Rng rng(9);
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    cells.push_back(p.cells[i]);
    cells.push_back(static_cast<int>(rng.index(2)));
  }
  p.cells = cells;
  auto r = significance_filter(p, 0.01);
  CHECK(std::find(r.retained.begin(), r.retained.end(), "a") != r.retained.end());
  CHECK(r.p_values.size() == 2);
  CHECK(r.p_values[0].second < 1e-10);
}

TEST_CASE("significance p-values of pure noise are uniform") {
  // Kolmogorov-Smirnov against U(0, 1); 1.95 / sqrt(m) is the 0.001 critical value.
  Rng rng(77);
  const int m = 300;
  std::vector<double> p_values;
  for (int trial = 0; trial < m; ++trial) {
    DiscretePanel p;
    p.horizon = 1;
    p.variables = {"noise"};
    p.cardinalities = {3};
    p.category_labels = {{"0", "1", "2"}};
    for (int s = 0; s < 2000; ++s) {
      p.subject_ids.push_back(std::to_string(s));
      p.cells.push_back(static_cast<int>(rng.index(3)));
      p.labels.push_back(rng.bernoulli(0.3));
    }
    p_values.push_back(significance_filter(p, 0.01).p_values[0].second);
  }
  std::sort(p_values.begin(), p_values.end());
  double d = 0.0;
  for (int i = 0; i < m; ++i)
    d = std::max({d, (i + 1.0) / m - p_values[i], p_values[i] - static_cast<double>(i) / m});
  CHECK(d < 1.95 / std::sqrt(static_cast<double>(m)));
  const auto kept = std::count_if(p_values.begin(), p_values.end(), [](double v) { return v < 0.01; });
  CHECK(kept <= 12);
}
