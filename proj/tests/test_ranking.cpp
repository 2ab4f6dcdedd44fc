#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "raus/ranking.hpp"
#include "raus/rng.hpp"

using namespace raus;

namespace {

// Upper tail of chi-squared with one degree of freedom: erfc(sqrt(x / 2)).
double chi2_df1_tail(double x) { return std::erfc(std::sqrt(x / 2.0)); }

ContingencyTable random_table(Rng& rng, int rows, int cols, int max_count) {
  ContingencyTable t(rows, cols);
  for (auto& c : t.counts) c = static_cast<std::int64_t>(rng.index(max_count + 1));
  return t;
}

DiscretePanel panel_from_columns(const std::vector<std::vector<int>>& columns, const std::vector<int>& cards,
                                 const std::vector<int>& labels) {
  DiscretePanel p;
  p.horizon = 2;
  for (std::size_t v = 0; v < columns.size(); ++v) {
    p.variables.push_back("v" + std::to_string(v));
    p.cardinalities.push_back(cards[v]);
    p.category_labels.emplace_back(cards[v], "c");
  }
  const std::size_t n = labels.size();
  for (std::size_t s = 0; s < n; ++s) {
    p.subject_ids.push_back(std::to_string(s));
    for (int t = 0; t < 2; ++t) {
      for (const auto& col : columns) p.cells.push_back(col[s]);
      p.labels.push_back(t == 1 ? labels[s] : 0);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("chi squared worked examples") {
  auto r = chi_squared(ContingencyTable{{10, 20}, {20, 10}});
  CHECK(r.statistic == doctest::Approx(20.0 / 3.0).epsilon(1e-12));
  CHECK(r.df == 1);
  CHECK(r.p_value == doctest::Approx(0.0098233).epsilon(1e-5));
  CHECK(std::abs(r.p_value - chi2_df1_tail(20.0 / 3.0)) < 1e-12);

  auto flat = chi_squared(ContingencyTable{{15, 15}, {15, 15}});
  CHECK(flat.statistic == 0.0);
  CHECK(flat.p_value == doctest::Approx(1.0));

  CHECK(chi_squared(ContingencyTable{{5, 0}, {0, 5}}).statistic == doctest::Approx(10.0));

  auto degenerate = chi_squared(ContingencyTable{{3, 4}, {0, 0}});
  CHECK(degenerate.df == 0);
  CHECK(degenerate.p_value == 1.0);
}

TEST_CASE("p values agree with the df=1 closed form") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform() * 40.0;
    CHECK(std::abs(chi2_upper_tail(x, 1) - chi2_df1_tail(x)) < 1e-12);
  }
  // df = 2 has tail exp(-x / 2).
  for (double x : {0.1, 1.0, 5.0, 30.0, 200.0})
    CHECK(chi2_upper_tail(x, 2) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-12));
  CHECK(std::isfinite(log_gamma_q(0.5, 5000.0)));
  CHECK(log_gamma_q(0.5, 5000.0) < -4000.0);
}

TEST_CASE("cramers v") {
  CHECK(cramers_v(ContingencyTable{{10, 20}, {20, 10}}) == doctest::Approx(1.0 / 3.0));
  CHECK(cramers_v(ContingencyTable{{7, 0, 0}, {0, 4, 0}, {0, 0, 9}}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cramers_v(ContingencyTable{{5, 6}}), Error);
}

TEST_CASE("information gain") {
  CHECK(info_gain(ContingencyTable{{30, 10}, {10, 30}}) == doctest::Approx(0.188722).epsilon(1e-6));
  CHECK(info_gain(ContingencyTable{{10, 20}, {30, 60}}) == doctest::Approx(0.0));
  std::vector<int> x{0, 1, 0, 1}, y{0, 1, 0, 1};
  CHECK(info_gain(x, y) == doctest::Approx(1.0));
  std::vector<int> missing{kMissing, kMissing};
  std::vector<int> y2{0, 1};
  CHECK_THROWS_AS(info_gain(missing, y2), Error);
}

TEST_CASE("statistics are bounded and invariant under category relabeling") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const int r = 2 + static_cast<int>(rng.index(4));
    ContingencyTable t = random_table(rng, r, 2, 30);
    if (t.compact().rows < 2 || t.compact().cols < 2) continue;
    ContingencyTable permuted(r, 2);
    std::vector<int> perm(r);
    for (int k = 0; k < r; ++k) perm[k] = k;
    rng.shuffle(perm);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < 2; ++b) permuted.at(perm[a], b) = t.at(a, b);
    const double v = cramers_v(t);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(chi_squared(t).statistic >= 0.0);
    const double ig = info_gain(t);
    CHECK(ig >= -1e-12);
    CHECK(std::abs(cramers_v(permuted) - v) < 1e-12);
    CHECK(std::abs(chi_squared(permuted).statistic - chi_squared(t).statistic) < 1e-9);
    CHECK(std::abs(info_gain(permuted) - ig) < 1e-12);
  }
}

TEST_CASE("selection policies") {
  CHECK(Selection::parse("all").count(7) == 7);
  CHECK(Selection::parse("best_k:3").count(7) == 3);
  CHECK(Selection::parse("best_k:30").count(7) == 7);
  CHECK(Selection::parse("percentile:0.5").count(7) == 4);
  CHECK(Selection::parse("percentile:0.25").count(8) == 2);
  CHECK_THROWS_AS(Selection::parse("top"), Error);
  CHECK(Selection::parse("best_k:3").to_string() == "best_k:3");
}

TEST_CASE("ranking orders, ties and selection prefix") {
  std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1, 0, 1};
  std::vector<int> copy = y;
  std::vector<int> noisy{0, 1, 0, 0, 1, 1, 0, 1, 0, 1};
  std::vector<int> twin = noisy;
  DiscretePanel p = panel_from_columns({noisy, copy, twin}, {2, 2, 2}, y);
  std::vector<RankRow> rows;
  for (std::size_t s = 0; s < y.size(); ++s) rows.push_back({s, 0});
  for (RankMethod m : {RankMethod::kCv, RankMethod::kChi2, RankMethod::kIg}) {
    VariableRanking r = rank_variables(p, rows, 1, m, Selection::best_k(2));
    REQUIRE(r.scores.size() == 3);
    CHECK(r.scores[0].variable == "v1");
    CHECK(r.scores[1].variable == "v0");  // identical tables keep column order
    CHECK(r.scores[2].variable == "v2");
    CHECK(r.selected == std::vector<std::string>{"v1", "v0"});
    for (int k = 0; k < 3; ++k) CHECK(r.scores[k].rank == k + 1);
  }
}

TEST_CASE("constant variables are excluded") {
  std::vector<int> y{0, 1, 0, 1};
  std::vector<int> constant{1, 1, 1, 1};
  DiscretePanel p = panel_from_columns({constant, y}, {2, 2}, y);
  std::vector<RankRow> rows;
  for (std::size_t s = 0; s < y.size(); ++s) rows.push_back({s, 0});
  VariableRanking r = rank_variables(p, rows, 1, RankMethod::kCv, Selection::all());
  CHECK(r.excluded == std::vector<std::string>{"v0"});
  CHECK(r.scores.size() == 1);
  DiscretePanel only = panel_from_columns({constant}, {2}, y);
  CHECK_THROWS_AS(rank_variables(only, rows, 1, RankMethod::kIg, Selection::all()), Error);
}

TEST_CASE("ranking does not depend on subject order") {
  Rng rng(3);
  std::vector<int> y(60), a(60), b(60);
  for (int i = 0; i < 60; ++i) {
    y[i] = static_cast<int>(rng.index(2));
    a[i] = rng.bernoulli(0.7) ? y[i] : static_cast<int>(rng.index(3));
    b[i] = static_cast<int>(rng.index(2));
  }
  DiscretePanel p = panel_from_columns({a, b}, {3, 2}, y);
  std::vector<RankRow> rows;
  for (std::size_t s = 0; s < 60; ++s) rows.push_back({s, 0});
  VariableRanking forward = rank_variables(p, rows, 1, RankMethod::kIg, Selection::all());
  std::reverse(rows.begin(), rows.end());
  VariableRanking backward = rank_variables(p, rows, 1, RankMethod::kIg, Selection::all());
  for (int k = 0; k < 2; ++k) {
    CHECK(forward.scores[k].variable == backward.scores[k].variable);
    CHECK(forward.scores[k].statistic == backward.scores[k].statistic);
  }
}
