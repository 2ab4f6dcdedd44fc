#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raus/dataset.hpp"

namespace raus {

// r x c grid of non-negative counts, row-major.
struct ContingencyTable {
  int rows = 0;
  int cols = 0;
  std::vector<std::int64_t> counts;

  ContingencyTable() = default;
  ContingencyTable(int r, int c) : rows(r), cols(c), counts(static_cast<std::size_t>(r) * c, 0) {}
  ContingencyTable(std::initializer_list<std::initializer_list<std::int64_t>> grid);

  std::int64_t& at(int r, int c) { return counts[static_cast<std::size_t>(r) * cols + c]; }
  std::int64_t at(int r, int c) const { return counts[static_cast<std::size_t>(r) * cols + c]; }
  std::int64_t total() const;

  // Copy with all-zero rows and columns removed.
  ContingencyTable compact() const;

  // Cross-tabulates paired category sequences; pairs with a missing member
  // are dropped.
  static ContingencyTable from_pairs(std::span<const int> x, int x_categories,
                                     std::span<const int> y, int y_categories);
};

struct ChiSquaredResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double log_p_value = 0.0;  // natural log, finite even when p underflows
};

// Pearson chi-squared test of independence. Zero rows/columns are dropped
// before the test; a table that collapses to one row or column has df 0.
ChiSquaredResult chi_squared(const ContingencyTable& table);

// Cramer's V; throws DegenerateVariable when the compacted table has fewer
// than two rows or columns.
double cramers_v(const ContingencyTable& table);

// Information gain H(Y) - H(Y|X) in bits with plug-in probabilities.
double info_gain(const ContingencyTable& joint);
double info_gain(std::span<const int> x, std::span<const int> y);

double entropy_bits(std::span<const double> probabilities);

// Regularized upper incomplete gamma Q(a, x), and its natural log.
double gamma_q(double a, double x);
double log_gamma_q(double a, double x);

// Upper tail P(X >= x) of a chi-squared variate with df degrees of freedom.
double chi2_upper_tail(double x, int df);

enum class RankMethod { kCv, kChi2, kIg };

const char* to_string(RankMethod m);
RankMethod parse_rank_method(const std::string& name);

struct Selection {
  enum class Kind { kAll, kBestK, kPercentile };
  Kind kind = Kind::kAll;
  int k = 0;
  double fraction = 1.0;

  static Selection all() { return {}; }
  static Selection best_k(int k) { return {Kind::kBestK, k, 1.0}; }
  static Selection percentile(double p) { return {Kind::kPercentile, 0, p}; }
  // Accepts "all", "best_k:<k>", "percentile:<p>".
  static Selection parse(const std::string& text);
  std::string to_string() const;

  std::size_t count(std::size_t available) const;
};

struct RankScore {
  std::string variable;
  RankMethod method = RankMethod::kCv;
  double statistic = 0.0;
  std::optional<double> p_value;
  int rank = 0;
};

struct VariableRanking {
  RankMethod method = RankMethod::kCv;
  std::vector<RankScore> scores;  // ordered by rank
  Selection selection;
  std::vector<std::string> selected;  // prefix of the ordering
  std::vector<std::string> excluded;  // degenerate variables
};

// Observation used for ranking: predictors at `timestep`, target label at
// `timestep + lookahead`.
struct RankRow {
  std::size_t subject = 0;
  int timestep = 0;
};

// Per-variable variable-category x target tables pooled over `rows`.
std::vector<ContingencyTable> ranking_tables(const DiscretePanel& panel,
                                             std::span<const RankRow> rows, int lookahead,
                                             TargetMode mode = TargetMode::kExact);

VariableRanking rank_from_tables(std::span<const std::string> variables,
                                 std::span<const ContingencyTable> tables, RankMethod method,
                                 Selection selection);

VariableRanking rank_variables(const DiscretePanel& panel, std::span<const RankRow> rows,
                               int lookahead, RankMethod method, Selection selection,
                               TargetMode mode = TargetMode::kExact);

// Rows of every balanced subset, in subset order.
std::vector<RankRow> rank_rows(const BalanceResult& balanced);

}  // namespace raus
