#include "raus/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace raus {

ContingencyTable::ContingencyTable(std::initializer_list<std::initializer_list<std::int64_t>> grid) {
  rows = static_cast<int>(grid.size());
  cols = rows ? static_cast<int>(grid.begin()->size()) : 0;
  for (const auto& row : grid) {
    if (static_cast<int>(row.size()) != cols)
      throw Error(ErrorCode::kInvalidArgument, "ragged contingency table");
    counts.insert(counts.end(), row.begin(), row.end());
  }
}

std::int64_t ContingencyTable::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ContingencyTable ContingencyTable::compact() const {
  std::vector<int> keep_r, keep_c;
  for (int r = 0; r < rows; ++r) {
    std::int64_t s = 0;
    for (int c = 0; c < cols; ++c) s += at(r, c);
    if (s > 0) keep_r.push_back(r);
  }
  for (int c = 0; c < cols; ++c) {
    std::int64_t s = 0;
    for (int r = 0; r < rows; ++r) s += at(r, c);
    if (s > 0) keep_c.push_back(c);
  }
  ContingencyTable out(static_cast<int>(keep_r.size()), static_cast<int>(keep_c.size()));
  for (std::size_t i = 0; i < keep_r.size(); ++i)
    for (std::size_t j = 0; j < keep_c.size(); ++j)
      out.at(static_cast<int>(i), static_cast<int>(j)) = at(keep_r[i], keep_c[j]);
  return out;
}

ContingencyTable ContingencyTable::from_pairs(std::span<const int> x, int x_categories,
                                              std::span<const int> y, int y_categories) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "paired sequences differ in length");
  ContingencyTable table(x_categories, y_categories);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == kMissing || y[i] == kMissing) continue;
    if (x[i] < 0 || x[i] >= x_categories || y[i] < 0 || y[i] >= y_categories)
      throw Error(ErrorCode::kInvalidArgument, "category index out of range");
    ++table.at(x[i], y[i]);
  }
  return table;
}

namespace {

constexpr double kGammaEps = 1e-16;
constexpr int kGammaMaxIter = 100000;

// Series for the lower regularized gamma, valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int i = 0; i < kGammaMaxIter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Log of the continued fraction (modified Lentz) for Q, valid for x >= a + 1.
double log_gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kGammaEps) break;
  }
  return -x + a * std::log(x) - std::lgamma(a) + std::log(h);
}

}  // namespace

double gamma_q(double a, double x) {
  if (a <= 0.0) throw Error(ErrorCode::kInvalidArgument, "gamma shape must be positive");
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return std::exp(log_gamma_q_fraction(a, x));
}

double log_gamma_q(double a, double x) {
  if (a <= 0.0) throw Error(ErrorCode::kInvalidArgument, "gamma shape must be positive");
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return std::log1p(-gamma_p_series(a, x));
  return log_gamma_q_fraction(a, x);
}

double chi2_upper_tail(double x, int df) {
  if (df <= 0 || x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

ChiSquaredResult chi_squared(const ContingencyTable& table) {
  ContingencyTable t = table.compact();
  ChiSquaredResult result;
  if (t.rows < 2 || t.cols < 2) return result;
  const double n = static_cast<double>(t.total());
  std::vector<double> row_sum(t.rows, 0.0), col_sum(t.cols, 0.0);
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) {
      row_sum[r] += static_cast<double>(t.at(r, c));
      col_sum[c] += static_cast<double>(t.at(r, c));
    }
  double stat = 0.0;
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) {
      double e = row_sum[r] * col_sum[c] / n;
      double d = static_cast<double>(t.at(r, c)) - e;
      stat += d * d / e;
    }
  result.statistic = stat;
  result.df = (t.rows - 1) * (t.cols - 1);
  result.log_p_value = log_gamma_q(0.5 * result.df, 0.5 * stat);
  result.p_value = std::exp(result.log_p_value);
  return result;
}

double cramers_v(const ContingencyTable& table) {
  ContingencyTable t = table.compact();
  if (t.rows < 2 || t.cols < 2)
    throw Error(ErrorCode::kDegenerateVariable, "Cramer's V needs at least a 2x2 table");
  double stat = chi_squared(t).statistic;
  double denom = static_cast<double>(t.total()) * (std::min(t.rows, t.cols) - 1);
  return std::clamp(std::sqrt(stat / denom), 0.0, 1.0);
}

double entropy_bits(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

double info_gain(const ContingencyTable& joint) {
  const auto n = joint.total();
  if (n <= 0) throw Error(ErrorCode::kEmptyInput, "information gain of an empty table");
  const double dn = static_cast<double>(n);
  std::vector<double> py(joint.cols, 0.0);
  double h_cond = 0.0;
  std::vector<double> cond(joint.cols);
  for (int r = 0; r < joint.rows; ++r) {
    double row = 0.0;
    for (int c = 0; c < joint.cols; ++c) row += static_cast<double>(joint.at(r, c));
    if (row == 0.0) continue;
    for (int c = 0; c < joint.cols; ++c) {
      cond[c] = static_cast<double>(joint.at(r, c)) / row;
      py[c] += static_cast<double>(joint.at(r, c));
    }
    h_cond += row / dn * entropy_bits(cond);
  }
  for (double& p : py) p /= dn;
  return std::max(0.0, entropy_bits(py) - h_cond);
}

double info_gain(std::span<const int> x, std::span<const int> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "paired sequences differ in length");
  int rx = 0, ry = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == kMissing || y[i] == kMissing) continue;
    rx = std::max(rx, x[i] + 1);
    ry = std::max(ry, y[i] + 1);
  }
  if (rx == 0) throw Error(ErrorCode::kEmptyInput, "no complete pairs");
  return info_gain(ContingencyTable::from_pairs(x, rx, y, ry));
}

const char* to_string(RankMethod m) {
  switch (m) {
    case RankMethod::kCv: return "cv";
    case RankMethod::kChi2: return "chi2";
    case RankMethod::kIg: return "ig";
  }
  return "cv";
}

RankMethod parse_rank_method(const std::string& name) {
  if (name == "cv") return RankMethod::kCv;
  if (name == "chi2") return RankMethod::kChi2;
  if (name == "ig") return RankMethod::kIg;
  throw Error(ErrorCode::kConfig, "unknown ranking method '" + name + "'");
}

Selection Selection::parse(const std::string& text) {
  if (text == "all") return all();
  auto colon = text.find(':');
  if (colon != std::string::npos) {
    std::string kind = text.substr(0, colon);
    std::string arg = text.substr(colon + 1);
    try {
      std::size_t used = 0;
      if (kind == "best_k" || kind == "best-k") {
        int k = std::stoi(arg, &used);
        if (used == arg.size() && k >= 1) return best_k(k);
      } else if (kind == "percentile") {
        double p = std::stod(arg, &used);
        if (used == arg.size() && p > 0.0 && p <= 1.0) return percentile(p);
      }
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::kConfig, "invalid selection '" + text +
                                      "' (expected all, best_k:<k> or percentile:<p>)");
}

std::string Selection::to_string() const {
  switch (kind) {
    case Kind::kAll: return "all";
    case Kind::kBestK: return "best_k:" + std::to_string(k);
    case Kind::kPercentile: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "percentile:%g", fraction);
      return buf;
    }
  }
  return "all";
}

std::size_t Selection::count(std::size_t available) const {
  switch (kind) {
    case Kind::kAll: return available;
    case Kind::kBestK: return std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), available);
    case Kind::kPercentile: {
      double want = std::ceil(fraction * static_cast<double>(available) - 1e-9);
      return std::min<std::size_t>(static_cast<std::size_t>(std::max(want, 0.0)), available);
    }
  }
  return available;
}

std::vector<ContingencyTable> ranking_tables(const DiscretePanel& panel,
                                             std::span<const RankRow> rows, int lookahead,
                                             TargetMode mode) {
  std::vector<ContingencyTable> tables;
  tables.reserve(panel.num_variables());
  for (std::size_t v = 0; v < panel.num_variables(); ++v)
    tables.emplace_back(panel.cardinalities[v], 2);
  for (const RankRow& row : rows) {
    if (row.timestep + lookahead >= panel.horizon)
      throw Error(ErrorCode::kHorizonExceeded, "ranking row beyond the panel horizon");
    int y = panel.target(row.subject, row.timestep, lookahead, mode);
    for (std::size_t v = 0; v < panel.num_variables(); ++v) {
      int x = panel.cell(row.subject, v, row.timestep);
      if (x != kMissing) ++tables[v].at(x, y);
    }
  }
  return tables;
}

VariableRanking rank_from_tables(std::span<const std::string> variables,
                                 std::span<const ContingencyTable> tables, RankMethod method,
                                 Selection selection) {
  struct Entry {
    std::size_t index;
    double statistic;
    double key;  // larger ranks earlier
    double tie;  // secondary key, larger first
    double p;
  };
  VariableRanking ranking;
  ranking.method = method;
  ranking.selection = selection;
  std::vector<Entry> entries;
  for (std::size_t v = 0; v < tables.size(); ++v) {
    ContingencyTable t = tables[v].compact();
    if (t.rows < 2 || t.cols < 2) {
      ranking.excluded.push_back(variables[v]);
      continue;
    }
    ChiSquaredResult chi = chi_squared(t);
    Entry e{v, 0.0, 0.0, 0.0, chi.p_value};
    switch (method) {
      case RankMethod::kCv:
        e.statistic = cramers_v(t);
        e.key = e.statistic;
        break;
      case RankMethod::kChi2:
        // Ordered by significance; the log p-value stays finite where p
        // itself underflows, and the statistic breaks exact ties.
        e.statistic = chi.statistic;
        e.key = -chi.log_p_value;
        e.tie = chi.statistic;
        break;
      case RankMethod::kIg:
        e.statistic = info_gain(t);
        e.key = e.statistic;
        break;
    }
    entries.push_back(e);
  }
  if (entries.empty()) throw Error(ErrorCode::kNoRankableVariables, "every variable is degenerate");
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.tie > b.tie;
  });
  int rank = 1;
  for (const Entry& e : entries)
    ranking.scores.push_back({variables[e.index], method, e.statistic, e.p, rank++});
  std::size_t keep = selection.count(ranking.scores.size());
  for (std::size_t i = 0; i < keep; ++i) ranking.selected.push_back(ranking.scores[i].variable);
  return ranking;
}

VariableRanking rank_variables(const DiscretePanel& panel, std::span<const RankRow> rows,
                               int lookahead, RankMethod method, Selection selection,
                               TargetMode mode) {
  auto tables = ranking_tables(panel, rows, lookahead, mode);
  return rank_from_tables(panel.variables, tables, method, selection);
}

std::vector<RankRow> rank_rows(const BalanceResult& balanced) {
  std::vector<RankRow> rows;
  for (const auto& subset : balanced.subsets)
    for (std::size_t s : subset.subjects) rows.push_back({s, subset.timestep});
  return rows;
}

}  // namespace raus
