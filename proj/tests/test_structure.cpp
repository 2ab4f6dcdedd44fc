#include <cmath>

#include "doctest.h"
#include "raus/rng.hpp"
#include "raus/structure.hpp"

using namespace raus;

namespace {

DataMatrix matrix(std::vector<std::vector<int>> columns, std::vector<int> cards) {
  return DataMatrix{std::move(columns), std::move(cards)};
}

// A -> B with B copying A with probability `fidelity`.
DataMatrix sample_pair(Rng& rng, std::size_t n, double fidelity) {
  DataMatrix d{{{}, {}}, {2, 2}};
  for (std::size_t i = 0; i < n; ++i) {
    int a = rng.bernoulli(0.5);
    int b = rng.bernoulli(fidelity) ? a : 1 - a;
    d.columns[0].push_back(a);
    d.columns[1].push_back(b);
  }
  return d;
}

}  // namespace

TEST_CASE("k2 node score closed form") {
  DataMatrix d = matrix({{1, 1, 1, 0, 0}}, {2});
  CHECK(k2_node_score(d, 0, {}) == doctest::Approx(std::log(1.0 / 60.0)).epsilon(1e-12));
  DataMatrix empty = matrix({{}}, {2});
  CHECK(k2_node_score(empty, 0, {}) == 0.0);
  // Rows with a missing family member are dropped.
  DataMatrix gaps = matrix({{1, 1, kMissing, 1, 0, 0}, {0, 0, 0, kMissing, 0, 0}}, {2, 2});
  const int parent[] = {1};
  DataMatrix clean = matrix({{1, 1, 0, 0}, {0, 0, 0, 0}}, {2, 2});
  CHECK(k2_node_score(gaps, 0, parent) == doctest::Approx(k2_node_score(clean, 0, parent)));
}

TEST_CASE("k2 parent cap") {
  DataMatrix d = matrix({{0, 1}, {0, 1}, {0, 1}}, {2, 64, 128});
  const int parents[] = {1, 2};
  CHECK_THROWS_AS(k2_node_score(d, 0, parents, 4096), Error);
  try {
    k2_node_score(d, 0, parents, 4096);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParentSpaceTooLarge);
  }
}

TEST_CASE("k2 search recovers a strong dependency") {
  Rng rng(11);
  DataMatrix d = sample_pair(rng, 2000, 0.9);
  std::vector<std::string> order{"A", "B"};
  IntraDag dag = k2_search(d, order, 3);
  CHECK(dag.parents[0].empty());
  CHECK(dag.parents[1] == std::vector<int>{0});
  const int a[] = {0};
  CHECK(k2_node_score(d, 1, a) > k2_node_score(d, 1, {}));

  IntraDag none = k2_search(d, order, 0);
  CHECK(none.parents[1].empty());
  CHECK(k2_total_score(d, none) == doctest::Approx(k2_node_score(d, 0, {}) + k2_node_score(d, 1, {})));
}

TEST_CASE("k2 search never scores below the empty graph and is rerun identical") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(5));
    DataMatrix d;
    std::vector<std::string> order;
    for (int v = 0; v < n; ++v) {
      d.cards.push_back(2 + static_cast<int>(rng.index(2)));
      order.push_back("n" + std::to_string(v));
    }
    d.columns.assign(n, {});
    for (int i = 0; i < 200; ++i)
      for (int v = 0; v < n; ++v) {
        int x = static_cast<int>(rng.index(d.cards[v]));
        if (v > 0 && rng.bernoulli(0.6)) x = d.columns[v - 1].back() % d.cards[v];
        if (rng.bernoulli(0.05)) x = kMissing;
        d.columns[v].push_back(x);
      }
    IntraDag dag = k2_search(d, order, 2);
    IntraDag empty{order, std::vector<std::vector<int>>(n)};
    CHECK(k2_total_score(d, dag) >= k2_total_score(d, empty));
    double sum = 0.0;
    for (int v = 0; v < n; ++v) {
      CHECK(dag.parents[v].size() <= 2);
      for (int p : dag.parents[v]) CHECK(p < v);
      sum += k2_node_score(d, v, dag.parents[v]);
    }
    CHECK(k2_total_score(d, dag) == doctest::Approx(sum));
    CHECK(k2_search(d, order, 2).parents == dag.parents);
  }
}

TEST_CASE("independent parents rarely help on large samples") {
  Rng rng(13);
  int improved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    DataMatrix d{{{}, {}}, {2, 2}};
    for (int i = 0; i < 5000; ++i) {
      d.columns[0].push_back(rng.bernoulli(0.4));
      d.columns[1].push_back(rng.bernoulli(0.7));
    }
    const int p[] = {1};
    improved += k2_node_score(d, 0, p) > k2_node_score(d, 0, {});
  }
  CHECK(improved <= 2);
}

TEST_CASE("mutual information of a noisy copy") {
  // Joint counts [[30, 10], [10, 30]] between source and destination.
  DataMatrix prev{{{}}, {2}}, next{{{}}, {2}};
  auto add = [&](int a, int b, int count) {
    for (int i = 0; i < count; ++i) {
      prev.columns[0].push_back(a);
      next.columns[0].push_back(b);
    }
  };
  add(0, 0, 30);
  add(0, 1, 10);
  add(1, 0, 10);
  add(1, 1, 30);
  const int src[] = {0};
  MutualInfo mi = mutual_information(prev, src, next, 0);
  CHECK(mi.mi == doctest::Approx(0.188722).epsilon(1e-6));
  CHECK(mi.h_destination == doctest::Approx(1.0));
  InterEdges edges = reveal_search(prev, next);
  REQUIRE(edges.edges.size() == 1);
  CHECK(edges.edges[0].score == doctest::Approx(0.188722).epsilon(1e-6));
}

TEST_CASE("reveal accepts deterministic copies and skips constants") {
  Rng rng(14);
  DataMatrix prev{{{}, {}, {}}, {2, 2, 2}}, next{{{}, {}, {}}, {2, 2, 2}};
  for (int i = 0; i < 500; ++i) {
    int a = rng.bernoulli(0.5), b = rng.bernoulli(0.5);
    prev.columns[0].push_back(a);
    prev.columns[1].push_back(b);
    prev.columns[2].push_back(0);
    next.columns[0].push_back(a);                      // copy of a
    next.columns[1].push_back(rng.bernoulli(0.5));     // independent
    next.columns[2].push_back(0);                      // constant
  }
  InterEdges edges = reveal_search(prev, next);
  REQUIRE(edges.edges.size() == 1);
  CHECK(edges.edges[0].source == 0);
  CHECK(edges.edges[0].destination == 0);
  CHECK(edges.edges[0].score == doctest::Approx(1.0));
  CHECK(edges.skipped == std::vector<int>{2});
}

TEST_CASE("reveal finds a pair of parents when one is not enough") {
  Rng rng(15);
  DataMatrix prev{{{}, {}}, {2, 2}}, next{{{}, {}}, {2, 2}};
  for (int i = 0; i < 2000; ++i) {
    int a = rng.bernoulli(0.5), b = rng.bernoulli(0.5);
    prev.columns[0].push_back(a);
    prev.columns[1].push_back(b);
    next.columns[0].push_back(a ^ b);
    next.columns[1].push_back(b);
  }
  InterEdges edges = reveal_search(prev, next);
  int into_zero = 0;
  for (const auto& e : edges.edges) into_zero += e.destination == 0;
  CHECK(into_zero == 2);
}

TEST_CASE("reveal can forbid the target as a feature parent") {
  Rng rng(16);
  DataMatrix prev{{{}, {}}, {2, 2}}, next{{{}, {}}, {2, 2}};
  for (int i = 0; i < 500; ++i) {
    int y = rng.bernoulli(0.5);
    prev.columns[0].push_back(rng.bernoulli(0.5));
    prev.columns[1].push_back(y);
    next.columns[0].push_back(y);
    next.columns[1].push_back(y);
  }
  RevealOptions options;
  options.target = 1;
  CHECK(reveal_search(prev, next, options).edges.size() == 2);
  options.target_may_parent_features = false;
  InterEdges edges = reveal_search(prev, next, options);
  for (const auto& e : edges.edges) CHECK_FALSE((e.source == 1 && e.destination == 0));
}

TEST_CASE("assembling two slice structures") {
  IntraDag chain{{"a", "b", "y"}, {{}, {0}, {1}}};
  const int cards[] = {2, 3, 2};
  TwoSliceStructure s = assemble_2tbn(chain, {}, cards, "y");
  CHECK(s.target == 2);
  CHECK(s.inter.empty());

  InterEdges inter;
  inter.edges = {{2, 0, 0.5, 0, 1}, {0, 0, 0.9, 0, 1}};
  s = assemble_2tbn(chain, inter, cards, "y");
  CHECK(s.inter[0].source == 0);
  CHECK(s.inter_parents(0) == std::vector<int>{0, 2});

  InterEdges backward;
  backward.edges = {{0, 1, 0.5, 1, 0}};
  CHECK_THROWS_AS(assemble_2tbn(chain, backward, cards, "y"), Error);
  IntraDag cyclic{{"a", "b", "y"}, {{1}, {0}, {}}};
  CHECK_THROWS_AS(assemble_2tbn(cyclic, {}, cards, "y"), Error);
  CHECK_THROWS_AS(assemble_2tbn(chain, {}, cards, "missing"), Error);
}
