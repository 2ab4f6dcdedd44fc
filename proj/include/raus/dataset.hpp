#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raus/common.hpp"

namespace raus {

struct SubjectRecord {
  std::string id;
  // values[t * variables + v]
  std::vector<std::optional<double>> values;
  // Present only when the source carried a label column.
  std::vector<std::optional<int>> labels;
  std::map<std::string, std::string> statics;
};

struct RawPanel {
  std::vector<std::string> variables;
  std::vector<std::string> static_names;
  int horizon = 0;
  bool has_labels = false;
  std::vector<SubjectRecord> subjects;

  std::optional<std::size_t> variable_index(const std::string& name) const;
  const std::optional<double>& value(std::size_t subject, std::size_t var, int t) const {
    return subjects[subject].values[static_cast<std::size_t>(t) * variables.size() + var];
  }
};

struct CsvOptions {
  char delimiter = ',';
  std::string label_column = "label";
  // Columns with this prefix are per-subject categorical attributes.
  std::string static_prefix = "static_";
};

// Reads `subject_id,timestep,<vars...>[,label]`. When several rows share a
// (subject, timestep) the last one read wins. Empty fields are missing.
RawPanel load_panel(const std::filesystem::path& path, const CsvOptions& options = {});
RawPanel parse_panel(std::istream& in, const CsvOptions& options = {});

enum class BinKind { kIqr, kStaged, kCategorical };

const char* to_string(BinKind kind);

struct BinningSpec {
  std::string variable;
  BinKind kind = BinKind::kIqr;
  // Full edge list including the outer bounds (which may be infinite).
  std::vector<double> edges;
  std::vector<std::string> labels;

  int bins() const { return static_cast<int>(edges.size()) - 1; }
  // Interior ties bin upward; values outside the outer edges are clamped.
  int bin_of(double value) const;
};

// Fixed CKD staging edges {15, 30, 45, 60}: <15, 15-29, 30-44, 45-59, >=60.
BinningSpec egfr_staged_spec(const std::string& variable);

// Quartile edges {min, Q1, median, Q3, max} with linear interpolation.
// Duplicate edges are merged. Throws DegenerateVariable for < 2 distinct values.
BinningSpec iqr_spec(const std::string& variable, std::span<const double> values);

// Integer-coded categories 0..r-1 kept as-is.
BinningSpec categorical_spec(const std::string& variable, int categories);

double quantile_linear(std::span<const double> sorted, double q);

struct BinningPolicy {
  enum class Default { kIqr, kCategorical };
  Default fallback = Default::kIqr;
  std::map<std::string, BinningSpec> fixed;

  // eGFR (case-insensitive name match) gets the staged spec, the rest IQR.
  static BinningPolicy defaults(const RawPanel& panel);
};

enum class TargetMode { kExact, kCumulative };

struct DiscretePanel {
  std::vector<std::string> subject_ids;
  std::vector<std::string> variables;
  std::vector<int> cardinalities;
  std::vector<std::vector<std::string>> category_labels;
  int horizon = 0;
  // cells[(s * horizon + t) * variables + v], kMissing for missing
  std::vector<int> cells;
  // labels[s * horizon + t], 0 = no-event, 1 = event
  std::vector<int> labels;
  std::vector<std::string> static_names;
  // statics[s * static_names + k], empty string for missing
  std::vector<std::string> statics;

  std::size_t subjects() const { return subject_ids.size(); }
  std::size_t num_variables() const { return variables.size(); }
  int cell(std::size_t s, std::size_t v, int t) const {
    return cells[(s * horizon + static_cast<std::size_t>(t)) * variables.size() + v];
  }
  int& cell(std::size_t s, std::size_t v, int t) {
    return cells[(s * horizon + static_cast<std::size_t>(t)) * variables.size() + v];
  }
  int label(std::size_t s, int t) const { return labels[s * horizon + static_cast<std::size_t>(t)]; }
  bool ever_event(std::size_t s) const;
  std::optional<std::size_t> variable_index(const std::string& name) const;

  // Event indicator for a prediction made at t with lookahead L.
  int target(std::size_t s, int t, int lookahead, TargetMode mode) const;

  DiscretePanel subset(std::span<const std::size_t> subject_rows) const;
  DiscretePanel select_variables(std::span<const std::string> names) const;
};

struct DiscretizeResult {
  DiscretePanel panel;  // labels copied from the raw panel when present
  std::vector<BinningSpec> specs;
  std::vector<std::string> degenerate;
};

DiscretizeResult discretize(const RawPanel& panel, const BinningPolicy& policy);

// Applies previously resolved specs (e.g. train edges onto test). Variables
// without a spec are dropped.
DiscretePanel apply_bins(const RawPanel& panel, std::span<const BinningSpec> specs);

RawPanel subset_raw(const RawPanel& panel, std::span<const std::size_t> subject_rows);

using Series = std::vector<std::optional<double>>;

struct KdigoRule {
  double ratio = 1.5;            // SCr(t) > ratio * baseline
  int ratio_window_steps = 7;    // 7 days of 24h steps from admission
  double absolute_rise = 0.3;    // mg/dL
  int absolute_window_steps = 2; // 48h
  double egfr_threshold = 60.0;
};

struct KdigoResult {
  // labels[subject][t]; empty for excluded subjects
  std::vector<std::vector<int>> labels;
  std::vector<std::size_t> excluded;  // subjects lacking a baseline SCr
};

KdigoResult apply_kdigo_labels(std::span<const Series> scr, std::span<const Series> egfr,
                               const KdigoRule& rule = {});

struct LabelReport {
  std::size_t labeled = 0;
  std::vector<std::string> excluded_subjects;
};

// Labels a raw-mode panel from its SCr and eGFR columns. Excluded subjects
// are removed and the SCr column is dropped from the predictors.
RawPanel label_raw_panel(const RawPanel& panel, const std::string& scr_column,
                         const std::string& egfr_column, const KdigoRule& rule,
                         LabelReport* report = nullptr);

struct SplitResult {
  DiscretePanel train;
  DiscretePanel test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::uint64_t seed = 0;
  double ratio = 0.7;
};

// Shuffles each stratum (0/1) independently and cuts it at `ratio`.
void stratified_partition(std::span<const int> strata, double ratio, std::uint64_t seed,
                          std::vector<std::size_t>& first, std::vector<std::size_t>& second);

SplitResult stratified_split(const DiscretePanel& panel, double ratio, std::uint64_t seed);

struct BalancedSubset {
  int timestep = 0;
  std::vector<std::size_t> subjects;  // ascending panel rows
  std::size_t cases = 0;
};

struct BalanceResult {
  std::vector<BalancedSubset> subsets;
  std::vector<int> empty_timesteps;
};

BalanceResult undersample_balance(const DiscretePanel& train, int lookahead, std::uint64_t seed,
                                  TargetMode mode = TargetMode::kExact);

struct SignificanceResult {
  std::vector<std::string> retained;
  std::vector<std::pair<std::string, double>> p_values;
};

SignificanceResult significance_filter(const DiscretePanel& panel, double alpha);

void write_panel_csv(std::ostream& out, const DiscretePanel& panel);

// Raw values in shortest round-trip form; the label column only when present.
void write_raw_panel_csv(std::ostream& out, const RawPanel& panel);

}  // namespace raus
