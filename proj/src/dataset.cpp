#include "raus/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "raus/ranking.hpp"
#include "raus/rng.hpp"

namespace raus {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string format_edge(double x) {
  if (std::isinf(x)) return x < 0 ? "-inf" : "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

std::optional<std::size_t> RawPanel::variable_index(const std::string& name) const {
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (variables[i] == name) return i;
  return std::nullopt;
}

RawPanel load_panel(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return parse_panel(in, options);
}

RawPanel parse_panel(std::istream& in, const CsvOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    header = split_record(line, options.delimiter);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::kSchema, "missing header row");
  if (!header.empty() && header[0].size() >= 3 &&
      static_cast<unsigned char>(header[0][0]) == 0xEF)  // UTF-8 BOM
    header[0] = header[0].substr(3);
  if (header.size() < 2 || header[0] != "subject_id" || header[1] != "timestep")
    throw Error(ErrorCode::kSchema, "header must start with subject_id,timestep");
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw Error(ErrorCode::kSchema, "duplicate column '" + h + "'");
  }

  RawPanel panel;
  std::vector<int> var_col, static_col;
  int label_col = -1;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == options.label_column) {
      label_col = static_cast<int>(c);
    } else if (!options.static_prefix.empty() && name.rfind(options.static_prefix, 0) == 0) {
      static_col.push_back(static_cast<int>(c));
      panel.static_names.push_back(name.substr(options.static_prefix.size()));
    } else {
      var_col.push_back(static_cast<int>(c));
      panel.variables.push_back(name);
    }
  }
  panel.has_labels = label_col >= 0;

  struct Row {
    std::vector<std::optional<double>> values;
    std::optional<int> label;
    std::vector<std::string> statics;
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> id_index;
  std::vector<std::map<int, Row>> rows;  // per subject, timestep -> last row
  int max_t = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_record(line, options.delimiter);
    if (fields.size() != header.size())
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    if (fields[0].empty())
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": empty subject_id");
    auto t = parse_number(fields[1]);
    if (!t || *t < 0 || std::floor(*t) != *t || *t > 1e6)
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(line_no) + ": invalid timestep '" + fields[1] + "'");
    int ts = static_cast<int>(*t);
    Row row;
    row.values.reserve(var_col.size());
    for (std::size_t k = 0; k < var_col.size(); ++k) {
      const std::string& f = fields[var_col[k]];
      if (f.empty()) {
        row.values.emplace_back();
        continue;
      }
      auto v = parse_number(f);
      if (!v)
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": non-numeric value '" +
                                           f + "' in column " + panel.variables[k]);
      row.values.emplace_back(*v);
    }
    if (label_col >= 0 && !fields[label_col].empty()) {
      auto v = parse_number(fields[label_col]);
      if (!v || (*v != 0.0 && *v != 1.0))
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": label must be 0 or 1");
      row.label = static_cast<int>(*v);
    }
    for (int c : static_col) row.statics.push_back(fields[c]);

    auto [it, inserted] = id_index.try_emplace(fields[0], ids.size());
    if (inserted) {
      ids.push_back(fields[0]);
      rows.emplace_back();
    }
    rows[it->second][ts] = std::move(row);
    max_t = std::max(max_t, ts);
  }

  panel.horizon = max_t + 1;
  if (panel.horizon < 2)
    throw Error(ErrorCode::kSchema, "panel needs at least 2 timesteps, found " +
                                        std::to_string(std::max(panel.horizon, 0)));
  const std::size_t V = panel.variables.size();
  panel.subjects.reserve(ids.size());
  for (std::size_t s = 0; s < ids.size(); ++s) {
    SubjectRecord rec;
    rec.id = ids[s];
    rec.values.assign(static_cast<std::size_t>(panel.horizon) * V, std::nullopt);
    if (panel.has_labels) rec.labels.assign(panel.horizon, std::nullopt);
    for (auto& [t, row] : rows[s]) {
      for (std::size_t v = 0; v < V; ++v) rec.values[static_cast<std::size_t>(t) * V + v] = row.values[v];
      if (panel.has_labels) rec.labels[t] = row.label;
      for (std::size_t k = 0; k < row.statics.size(); ++k)
        if (!row.statics[k].empty()) rec.statics[panel.static_names[k]] = row.statics[k];
    }
    panel.subjects.push_back(std::move(rec));
  }
  return panel;
}

const char* to_string(BinKind kind) {
  switch (kind) {
    case BinKind::kIqr: return "iqr";
    case BinKind::kStaged: return "staged";
    case BinKind::kCategorical: return "categorical";
  }
  return "iqr";
}

int BinningSpec::bin_of(double value) const {
  // Interior edges are edges[1 .. bins-1]; count those <= value.
  auto first = edges.begin() + 1;
  auto last = edges.end() - 1;
  return static_cast<int>(std::upper_bound(first, last, value) - first);
}

BinningSpec egfr_staged_spec(const std::string& variable) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  BinningSpec spec;
  spec.variable = variable;
  spec.kind = BinKind::kStaged;
  spec.edges = {-inf, 15, 30, 45, 60, inf};
  spec.labels = {"<15 (Stage 5)", "15–29 (Stage 4)", "30–44 (Stage 3b)",
                 "45–59 (Stage 3a)", "≥60"};
  return spec;
}

double quantile_linear(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptyInput, "quantile of empty sample");
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BinningSpec iqr_spec(const std::string& variable, std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct;
  std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(distinct));
  if (distinct.size() < 2)
    throw Error(ErrorCode::kDegenerateVariable,
                variable + " has " + std::to_string(distinct.size()) + " distinct value(s)");

  std::vector<double> edges;
  for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double e = quantile_linear(sorted, q);
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  // Heavily tied variables can collapse to a single bin; split between the
  // two lowest distinct values instead.
  if (edges.size() < 3) edges = {distinct[0], 0.5 * (distinct[0] + distinct[1]), distinct.back()};

  BinningSpec spec;
  spec.variable = variable;
  spec.kind = BinKind::kIqr;
  spec.edges = edges;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    bool last = b + 2 == edges.size();
    spec.labels.push_back("[" + format_edge(edges[b]) + ", " + format_edge(edges[b + 1]) +
                          (last ? "]" : ")"));
  }
  return spec;
}

BinningSpec categorical_spec(const std::string& variable, int categories) {
  if (categories < 2)
    throw Error(ErrorCode::kDegenerateVariable, variable + " has fewer than 2 categories");
  BinningSpec spec;
  spec.variable = variable;
  spec.kind = BinKind::kCategorical;
  for (int k = 0; k <= categories; ++k) spec.edges.push_back(k - 0.5);
  for (int k = 0; k < categories; ++k) spec.labels.push_back(std::to_string(k));
  return spec;
}

BinningPolicy BinningPolicy::defaults(const RawPanel& panel) {
  BinningPolicy policy;
  for (const auto& v : panel.variables)
    if (lower(v) == "egfr") policy.fixed.emplace(v, egfr_staged_spec(v));
  return policy;
}

bool DiscretePanel::ever_event(std::size_t s) const {
  for (int t = 0; t < horizon; ++t)
    if (label(s, t) == 1) return true;
  return false;
}

std::optional<std::size_t> DiscretePanel::variable_index(const std::string& name) const {
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (variables[i] == name) return i;
  return std::nullopt;
}

int DiscretePanel::target(std::size_t s, int t, int lookahead, TargetMode mode) const {
  if (mode == TargetMode::kExact) return label(s, t + lookahead);
  for (int k = 1; k <= lookahead; ++k)
    if (label(s, t + k) == 1) return 1;
  return 0;
}

DiscretePanel DiscretePanel::subset(std::span<const std::size_t> subject_rows) const {
  DiscretePanel out;
  out.variables = variables;
  out.cardinalities = cardinalities;
  out.category_labels = category_labels;
  out.horizon = horizon;
  out.static_names = static_names;
  const std::size_t V = variables.size();
  const std::size_t T = static_cast<std::size_t>(horizon);
  const std::size_t S = static_names.size();
  for (std::size_t s : subject_rows) {
    out.subject_ids.push_back(subject_ids[s]);
    out.cells.insert(out.cells.end(), cells.begin() + s * T * V, cells.begin() + (s + 1) * T * V);
    out.labels.insert(out.labels.end(), labels.begin() + s * T, labels.begin() + (s + 1) * T);
    out.statics.insert(out.statics.end(), statics.begin() + s * S, statics.begin() + (s + 1) * S);
  }
  return out;
}

DiscretePanel DiscretePanel::select_variables(std::span<const std::string> names) const {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto i = variable_index(n);
    if (!i) throw Error(ErrorCode::kSchema, "unknown variable " + n);
    idx.push_back(*i);
  }
  DiscretePanel out;
  out.subject_ids = subject_ids;
  out.horizon = horizon;
  out.labels = labels;
  out.static_names = static_names;
  out.statics = statics;
  for (std::size_t i : idx) {
    out.variables.push_back(variables[i]);
    out.cardinalities.push_back(cardinalities[i]);
    if (!category_labels.empty()) out.category_labels.push_back(category_labels[i]);
  }
  const std::size_t V = variables.size();
  out.cells.reserve(subjects() * horizon * idx.size());
  for (std::size_t row = 0; row < subjects() * static_cast<std::size_t>(horizon); ++row)
    for (std::size_t i : idx) out.cells.push_back(cells[row * V + i]);
  return out;
}

namespace {

DiscretePanel build_panel(const RawPanel& raw, std::span<const BinningSpec> specs) {
  DiscretePanel out;
  out.horizon = raw.horizon;
  out.static_names = raw.static_names;
  std::vector<std::size_t> cols;
  for (const auto& spec : specs) {
    auto idx = raw.variable_index(spec.variable);
    if (!idx) continue;
    cols.push_back(*idx);
    out.variables.push_back(spec.variable);
    out.cardinalities.push_back(spec.bins());
    out.category_labels.push_back(spec.labels);
  }
  const std::size_t T = static_cast<std::size_t>(raw.horizon);
  out.cells.reserve(raw.subjects.size() * T * cols.size());
  for (std::size_t s = 0; s < raw.subjects.size(); ++s) {
    const auto& rec = raw.subjects[s];
    out.subject_ids.push_back(rec.id);
    for (int t = 0; t < raw.horizon; ++t) {
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto& v = raw.value(s, cols[k], t);
        out.cells.push_back(v ? specs[k].bin_of(*v) : kMissing);
      }
      int lab = 0;
      if (raw.has_labels && rec.labels[t]) lab = *rec.labels[t];
      out.labels.push_back(lab);
    }
    for (const auto& name : raw.static_names) {
      auto it = rec.statics.find(name);
      out.statics.push_back(it == rec.statics.end() ? std::string() : it->second);
    }
  }
  return out;
}

}  // namespace

DiscretizeResult discretize(const RawPanel& panel, const BinningPolicy& policy) {
  DiscretizeResult result;
  for (std::size_t v = 0; v < panel.variables.size(); ++v) {
    const std::string& name = panel.variables[v];
    auto fixed = policy.fixed.find(name);
    if (fixed != policy.fixed.end()) {
      result.specs.push_back(fixed->second);
      continue;
    }
    std::vector<double> values;
    for (std::size_t s = 0; s < panel.subjects.size(); ++s)
      for (int t = 0; t < panel.horizon; ++t)
        if (const auto& x = panel.value(s, v, t)) values.push_back(*x);
    try {
      if (policy.fallback == BinningPolicy::Default::kCategorical) {
        double max_value = -1;
        for (double x : values) {
          if (x < 0 || std::floor(x) != x)
            throw Error(ErrorCode::kParse, name + " is not integer-coded");
          max_value = std::max(max_value, x);
        }
        result.specs.push_back(categorical_spec(name, static_cast<int>(max_value) + 1));
      } else {
        result.specs.push_back(iqr_spec(name, values));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateVariable) throw;
      result.degenerate.push_back(name);
    }
  }
  result.panel = build_panel(panel, result.specs);
  return result;
}

DiscretePanel apply_bins(const RawPanel& panel, std::span<const BinningSpec> specs) {
  return build_panel(panel, specs);
}

RawPanel subset_raw(const RawPanel& panel, std::span<const std::size_t> subject_rows) {
  RawPanel out;
  out.variables = panel.variables;
  out.static_names = panel.static_names;
  out.horizon = panel.horizon;
  out.has_labels = panel.has_labels;
  for (std::size_t s : subject_rows) out.subjects.push_back(panel.subjects[s]);
  return out;
}

KdigoResult apply_kdigo_labels(std::span<const Series> scr, std::span<const Series> egfr,
                               const KdigoRule& rule) {
  if (scr.size() != egfr.size())
    throw Error(ErrorCode::kInvalidArgument, "SCr and eGFR series counts differ");
  // Comparisons carry a small slack so that decimal boundary values such as
  // exactly +0.3 mg/dL are not lost to binary rounding.
  constexpr double eps = 1e-9;
  KdigoResult result;
  result.labels.resize(scr.size());
  for (std::size_t s = 0; s < scr.size(); ++s) {
    const Series& c = scr[s];
    const Series& g = egfr[s];
    if (c.empty() || !c[0]) {
      result.excluded.push_back(s);
      continue;
    }
    const double baseline = *c[0];
    auto& labels = result.labels[s];
    labels.assign(c.size(), 0);
    for (std::size_t t = 0; t < c.size(); ++t) {
      if (!c[t]) continue;
      const double now = *c[t];
      bool relative = static_cast<int>(t) <= rule.ratio_window_steps && t < g.size() && g[t] &&
                      *g[t] < rule.egfr_threshold && now > rule.ratio * baseline + eps;
      bool absolute = false;
      for (int k = 1; k <= rule.absolute_window_steps && !absolute; ++k) {
        if (static_cast<int>(t) - k < 0) break;
        const auto& prior = c[t - k];
        absolute = prior && now - *prior >= rule.absolute_rise - eps;
      }
      labels[t] = (relative || absolute) ? 1 : 0;
    }
  }
  return result;
}

RawPanel label_raw_panel(const RawPanel& panel, const std::string& scr_column,
                         const std::string& egfr_column, const KdigoRule& rule,
                         LabelReport* report) {
  auto scr_idx = panel.variable_index(scr_column);
  auto egfr_idx = panel.variable_index(egfr_column);
  if (!scr_idx || !egfr_idx)
    throw Error(ErrorCode::kSchema, "raw-mode labeling needs columns '" + scr_column + "' and '" +
                                        egfr_column + "'");
  std::vector<Series> scr(panel.subjects.size()), egfr(panel.subjects.size());
  for (std::size_t s = 0; s < panel.subjects.size(); ++s) {
    for (int t = 0; t < panel.horizon; ++t) {
      scr[s].push_back(panel.value(s, *scr_idx, t));
      egfr[s].push_back(panel.value(s, *egfr_idx, t));
    }
  }
  KdigoResult kd = apply_kdigo_labels(scr, egfr, rule);

  RawPanel out;
  out.horizon = panel.horizon;
  out.static_names = panel.static_names;
  out.has_labels = true;
  std::vector<std::size_t> keep;
  for (std::size_t v = 0; v < panel.variables.size(); ++v)
    if (v != *scr_idx) {
      keep.push_back(v);
      out.variables.push_back(panel.variables[v]);
    }
  std::set<std::size_t> excluded(kd.excluded.begin(), kd.excluded.end());
  LabelReport rep;
  for (std::size_t s = 0; s < panel.subjects.size(); ++s) {
    const auto& rec = panel.subjects[s];
    if (excluded.count(s)) {
      rep.excluded_subjects.push_back(rec.id);
      continue;
    }
    SubjectRecord r;
    r.id = rec.id;
    r.statics = rec.statics;
    for (int t = 0; t < panel.horizon; ++t) {
      for (std::size_t v : keep) r.values.push_back(panel.value(s, v, t));
      r.labels.emplace_back(kd.labels[s][t]);
    }
    out.subjects.push_back(std::move(r));
  }
  rep.labeled = out.subjects.size();
  if (report) *report = std::move(rep);
  return out;
}

void stratified_partition(std::span<const int> strata, double ratio, std::uint64_t seed,
                          std::vector<std::size_t>& first, std::vector<std::size_t>& second) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "split ratio must lie in (0, 1)");
  first.clear();
  second.clear();
  for (int stratum : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < strata.size(); ++i)
      if (strata[i] == stratum) members.push_back(i);
    if (members.size() < 2)
      throw Error(ErrorCode::kStratumTooSmall,
                  (stratum ? std::string("case") : std::string("control")) + " stratum has " +
                      std::to_string(members.size()) + " subject(s)");
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(stratum)}));
    rng.shuffle(members);
    auto n_second = static_cast<std::size_t>(
        std::llround((1.0 - ratio) * static_cast<double>(members.size())));
    n_second = std::clamp<std::size_t>(n_second, 1, members.size() - 1);
    std::size_t n_first = members.size() - n_second;
    first.insert(first.end(), members.begin(), members.begin() + n_first);
    second.insert(second.end(), members.begin() + n_first, members.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
}

SplitResult stratified_split(const DiscretePanel& panel, double ratio, std::uint64_t seed) {
  std::vector<int> strata(panel.subjects());
  for (std::size_t s = 0; s < panel.subjects(); ++s) strata[s] = panel.ever_event(s) ? 1 : 0;
  SplitResult result;
  stratified_partition(strata, ratio, seed, result.train_rows, result.test_rows);
  result.train = panel.subset(result.train_rows);
  result.test = panel.subset(result.test_rows);
  result.seed = seed;
  result.ratio = ratio;
  return result;
}

BalanceResult undersample_balance(const DiscretePanel& train, int lookahead, std::uint64_t seed,
                                  TargetMode mode) {
  if (lookahead < 1 || lookahead >= train.horizon)
    throw Error(ErrorCode::kInvalidArgument, "lookahead must lie in [1, horizon)");
  BalanceResult result;
  for (int t = 0; t + lookahead < train.horizon; ++t) {
    std::vector<std::size_t> cases, controls;
    for (std::size_t s = 0; s < train.subjects(); ++s)
      (train.target(s, t, lookahead, mode) == 1 ? cases : controls).push_back(s);
    if (cases.empty()) {
      result.empty_timesteps.push_back(t);
      continue;
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::size_t take = std::min(cases.size(), controls.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + rng.index(controls.size() - i);
      std::swap(controls[i], controls[j]);
    }
    BalancedSubset subset;
    subset.timestep = t;
    subset.cases = cases.size();
    subset.subjects = cases;
    subset.subjects.insert(subset.subjects.end(), controls.begin(), controls.begin() + take);
    std::sort(subset.subjects.begin(), subset.subjects.end());
    result.subsets.push_back(std::move(subset));
  }
  return result;
}

SignificanceResult significance_filter(const DiscretePanel& panel, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  SignificanceResult result;
  const std::size_t n = panel.subjects() * static_cast<std::size_t>(panel.horizon);
  std::vector<int> x(n), y(n);
  for (std::size_t v = 0; v < panel.num_variables(); ++v) {
    std::size_t i = 0;
    for (std::size_t s = 0; s < panel.subjects(); ++s)
      for (int t = 0; t < panel.horizon; ++t, ++i) {
        x[i] = panel.cell(s, v, t);
        y[i] = panel.label(s, t);
      }
    auto table = ContingencyTable::from_pairs(x, panel.cardinalities[v], y, 2);
    double p = table.total() > 0 ? chi_squared(table).p_value : 1.0;
    result.p_values.emplace_back(panel.variables[v], p);
    if (p < alpha) result.retained.push_back(panel.variables[v]);
  }
  return result;
}

void write_panel_csv(std::ostream& out, const DiscretePanel& panel) {
  out << "subject_id,timestep";
  for (const auto& v : panel.variables) out << ',' << v;
  for (const auto& s : panel.static_names) out << ",static_" << s;
  out << ",label\n";
  for (std::size_t s = 0; s < panel.subjects(); ++s) {
    for (int t = 0; t < panel.horizon; ++t) {
      out << panel.subject_ids[s] << ',' << t;
      for (std::size_t v = 0; v < panel.num_variables(); ++v) {
        out << ',';
        int c = panel.cell(s, v, t);
        if (c != kMissing) out << c;
      }
      for (std::size_t k = 0; k < panel.static_names.size(); ++k)
        out << ',' << panel.statics[s * panel.static_names.size() + k];
      out << ',' << panel.label(s, t) << '\n';
    }
  }
}

void write_raw_panel_csv(std::ostream& out, const RawPanel& panel) {
  out << "subject_id,timestep";
  for (const auto& v : panel.variables) out << ',' << v;
  for (const auto& s : panel.static_names) out << ",static_" << s;
  if (panel.has_labels) out << ",label";
  out << '\n';
  char buf[64];
  for (const auto& rec : panel.subjects) {
    for (int t = 0; t < panel.horizon; ++t) {
      out << rec.id << ',' << t;
      for (std::size_t v = 0; v < panel.variables.size(); ++v) {
        out << ',';
        if (const auto& x = rec.values[static_cast<std::size_t>(t) * panel.variables.size() + v]) {
          auto r = std::to_chars(buf, buf + sizeof buf, *x);
          out.write(buf, r.ptr - buf);
        }
      }
      for (const auto& name : panel.static_names) {
        auto it = rec.statics.find(name);
        out << ',' << (it == rec.statics.end() ? std::string() : it->second);
      }
      if (panel.has_labels) {
        out << ',';
        if (rec.labels[t]) out << *rec.labels[t];
      }
      out << '\n';
    }
  }
}

}  // namespace raus
