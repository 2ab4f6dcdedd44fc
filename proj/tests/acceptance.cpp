// Acceptance suite: one line per criterion, non-zero exit when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "raus/cli.hpp"
#include "raus/dataset.hpp"
#include "raus/eval.hpp"
#include "raus/inference.hpp"
#include "raus/params.hpp"
#include "raus/pipeline.hpp"
#include "raus/ranking.hpp"
#include "raus/report.hpp"
#include "raus/structure.hpp"
#include "raus/synthgen.hpp"

using namespace raus;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// 1. Junction tree against enumeration.
Outcome inference_oracle() {
  const auto start = Clock::now();
  Rng rng(1001);
  double worst = 0.0;
  int nets = 0;
  while (nets < 200) {
    RandomStructureOptions opt;
    opt.nodes = 2 + static_cast<int>(rng.index(9));
    opt.max_card = 2;
    opt.max_parents = 3;
    opt.edge_probability = 0.3 + 0.5 * rng.uniform();
    const TwoSliceStructure s = random_structure(rng, opt);
    const CptSet cpts = random_cpts(rng, s);
    const int slices = opt.nodes <= 5 ? 1 + static_cast<int>(rng.index(2)) : 1;
    const UnrolledNet net = UnrolledNet::unroll(s, slices);
    std::vector<int> evidence(net.size(), kMissing);
    for (int v = 0; v < net.size(); ++v)
      if (rng.bernoulli(0.3)) evidence[v] = static_cast<int>(rng.index(2));
    Marginals jt;
    try {
      jt = query_marginals(net, cpts, evidence);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kInconsistentEvidence) continue;  // zero-probability evidence
      throw;
    }
    for (int v = 0; v < net.size(); ++v) {
      if (evidence[v] != kMissing) continue;
      const std::vector<double> oracle = brute_force_joint(net, cpts, evidence, v);
      for (std::size_t k = 0; k < oracle.size(); ++k) worst = std::max(worst, std::abs(oracle[k] - jt.probabilities[v][k]));
    }
    ++nets;
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-9 && elapsed < 60.0,
          "200 nets, max |d| = " + fmt("%.2e", worst) + ", " + fmt("%.2f", elapsed) + " s"};
}

// 2. EM against MLE, the 2/3 fixed point, and monotone observed log likelihood.
Outcome em_correctness() {
  Rng rng(1002);
  double gap = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    RandomStructureOptions opt;
    opt.nodes = 4;
    opt.max_card = 3;
    const TwoSliceStructure s = random_structure(rng, opt);
    const GeneratorSpec spec{s, random_cpts(rng, s, 0.6), 300, 5, 0.0, rng.next()};
    const SequenceData data = sample_sequences(spec);
    const CptSet mle = mle_fit(s, data, 1.0);
    const EmResult em = em_fit(s, data, {1.0, 1e-4, 100, 3});
    for (std::size_t v = 0; v < mle.transition.size(); ++v) {
      for (std::size_t i = 0; i < mle.prior[v].table.size(); ++i)
        gap = std::max(gap, std::abs(mle.prior[v].table[i] - em.cpts.prior[v].table[i]));
      for (std::size_t i = 0; i < mle.transition[v].table.size(); ++i)
        gap = std::max(gap, std::abs(mle.transition[v].table[i] - em.cpts.transition[v].table[i]));
    }
  }
  const bool a = gap <= 1e-12;

  TwoSliceStructure single;
  single.nodes = {"y"};
  single.cards = {2};
  single.intra_parents = {{}};
  single.target = 0;
  EmOptions tight;
  tight.pseudocount = 0.0;
  tight.tolerance = 1e-14;
  tight.max_iterations = 500;
  const EmResult fixed = em_fit(single, SequenceData{1, 1, {1, 1, 0, kMissing}}, tight);
  const double theta = fixed.cpts.prior[0].table[1];
  const bool b = std::abs(theta - 2.0 / 3.0) <= 1e-6;

  double worst_drop = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    RandomStructureOptions opt;
    opt.nodes = 4;
    opt.max_card = 3;
    const TwoSliceStructure s = random_structure(rng, opt);
    const GeneratorSpec spec{s, random_cpts(rng, s, 0.6), 200, 5, 0.2, rng.next()};
    const SequenceData data = sample_sequences(spec);
    EmOptions options;
    options.pseudocount = 0.0;
    options.tolerance = 1e-10;
    options.max_iterations = 60;
    options.seed = static_cast<std::uint64_t>(trial);
    const EmResult r = em_fit(s, data, options);
    for (std::size_t i = 1; i < r.trace.loglik.size(); ++i)
      worst_drop = std::max(worst_drop, r.trace.loglik[i - 1] - r.trace.loglik[i]);
  }
  const bool c = worst_drop <= 1e-9;
  return {a && b && c, std::string("(a) max |em - mle| = ") + fmt("%.1e", gap) + ", (b) theta = " +
                           fmt("%.9f", theta) + ", (c) worst LL drop over 20 panels = " + fmt("%.1e", worst_drop)};
}

double auc_oracle(const ScoredSet& s) {
  std::int64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s.labels[i] != 1 || s.labels[j] != 0) continue;
      ++pairs;
      twice += s.scores[i] > s.scores[j] ? 2 : s.scores[i] == s.scores[j] ? 1 : 0;
    }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

double ap_oracle(const ScoredSet& s) {
  std::vector<double> thresholds(s.scores);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const auto positives = static_cast<double>(std::count(s.labels.begin(), s.labels.end(), 1));
  double ap = 0.0;
  std::int64_t previous = 0;
  for (double thr : thresholds) {
    std::int64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.scores[i] >= thr) (s.labels[i] ? tp : fp) += 1;
    if (tp > previous)
      ap += (static_cast<double>(tp - previous) / positives) * (static_cast<double>(tp) / static_cast<double>(tp + fp));
    previous = tp;
  }
  return ap;
}

// 3. Metric oracles.
Outcome metric_oracles() {
  Rng rng(1003);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(199);
    const int levels = 1 + static_cast<int>(rng.index(30));
    ScoredSet s;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = rng.bernoulli(0.05 + 0.9 * rng.uniform());
      s.add(static_cast<double>(rng.index(levels) + y) / (levels + 1), y);
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    if (roc_auc(s) != auc_oracle(s) || average_precision(s) != ap_oracle(s)) ++mismatches;
  }
  const ScoredSet worked{{0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}};
  const double auc = roc_auc(worked), ap = average_precision(worked);
  const bool examples = auc == 0.75 && std::abs(ap - 5.0 / 6.0) <= 1e-15;
  return {mismatches == 0 && examples, std::to_string(mismatches) + " mismatches in 1000 sets; worked AUC " +
                                           format_number(auc) + ", AP " + fmt("%.4f", ap)};
}

// 4. Operating-point arithmetic on reference counts.
Outcome operating_point_counts() {
  const ConfusionMatrix m{353, 519, 19001, 365};
  const double want[] = {0.405, 0.492, 0.973, 0.981, 0.508};
  const double got[] = {m.precision(), m.recall(), m.tnr(), m.npv(), m.fnr()};
  bool ok = true;
  std::string detail;
  const char* names[] = {"P", "R", "TNR", "NPV", "FNR"};
  for (int i = 0; i < 5; ++i) {
    ok = ok && std::abs(got[i] - want[i]) <= 0.0005;
    detail += std::string(i ? ", " : "") + names[i] + " " + fmt("%.4f", got[i]);
  }
  return {ok, detail};
}

DiscretePanel columns_panel(const std::vector<std::vector<int>>& columns, const std::vector<int>& cards,
                            const std::vector<int>& labels) {
  DiscretePanel p;
  p.horizon = 2;
  for (std::size_t v = 0; v < columns.size(); ++v) {
    p.variables.push_back("v" + std::to_string(v));
    p.cardinalities.push_back(cards[v]);
    std::vector<std::string> names;
    for (int c = 0; c < cards[v]; ++c) names.push_back(std::to_string(c));
    p.category_labels.push_back(names);
  }
  for (std::size_t s = 0; s < labels.size(); ++s) {
    p.subject_ids.push_back(std::to_string(s));
    for (int t = 0; t < 2; ++t) {
      for (const auto& col : columns) p.cells.push_back(col[s]);
      p.labels.push_back(t == 1 ? labels[s] : 0);
    }
  }
  return p;
}

std::vector<std::string> order_of(const VariableRanking& r) {
  std::vector<std::string> out;
  for (const auto& s : r.scores) out.push_back(s.variable);
  return out;
}

// 5. CV and chi-squared agree on equal cardinalities and split on mixed ones.
Outcome rank_agreement() {
  Rng rng(1005);
  int disagreements = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int card = 2 + static_cast<int>(rng.index(4));
    const int k = 3 + static_cast<int>(rng.index(6));
    const std::size_t n = 200 + rng.index(400);
    std::vector<int> y(n);
    for (auto& v : y) v = rng.bernoulli(0.4);
    std::vector<std::vector<int>> columns(k, std::vector<int>(n));
    for (int v = 0; v < k; ++v) {
      const double signal = rng.uniform() * 0.5;
      for (std::size_t i = 0; i < n; ++i)
        columns[v][i] = rng.bernoulli(signal) ? (y[i] * (card - 1)) : static_cast<int>(rng.index(card));
    }
    const DiscretePanel p = columns_panel(columns, std::vector<int>(k, card), y);
    std::vector<RankRow> rows;
    for (std::size_t s = 0; s < n; ++s) rows.push_back({s, 0});
    const auto cv = rank_variables(p, rows, 1, RankMethod::kCv, Selection::all());
    const auto chi = rank_variables(p, rows, 1, RankMethod::kChi2, Selection::all());
    if (order_of(cv) != order_of(chi)) ++disagreements;
  }

  // Binary A: chi2 = 8 (df 1). Four-level B: chi2 = 10.24 (df 3). B has the
  // larger V, A the smaller p-value.
  std::vector<int> y, a, b;
  auto add = [&](int label, int av, int bv, int count) {
    for (int i = 0; i < count; ++i) {
      y.push_back(label);
      a.push_back(av);
      b.push_back(bv);
    }
  };
  const int b0[] = {33, 25, 25, 17}, b1[] = {17, 25, 25, 33};
  const int a0[] = {40, 60}, a1[] = {60, 40};
  for (int label = 0; label < 2; ++label) {
    const int* bc = label ? b1 : b0;
    const int* ac = label ? a1 : a0;
    std::vector<int> bs;
    for (int level = 0; level < 4; ++level) bs.insert(bs.end(), bc[level], level);
    std::vector<int> as;
    for (int level = 0; level < 2; ++level) as.insert(as.end(), ac[level], level);
    for (std::size_t i = 0; i < bs.size(); ++i) add(label, as[i], bs[i], 1);
  }
  const DiscretePanel mixed = columns_panel({a, b}, {2, 4}, y);
  std::vector<RankRow> rows;
  for (std::size_t s = 0; s < y.size(); ++s) rows.push_back({s, 0});
  const auto cv = order_of(rank_variables(mixed, rows, 1, RankMethod::kCv, Selection::all()));
  const auto chi = order_of(rank_variables(mixed, rows, 1, RankMethod::kChi2, Selection::all()));
  const bool split = cv == std::vector<std::string>{"v1", "v0"} && chi == std::vector<std::string>{"v0", "v1"};
  return {disagreements == 0 && split, std::to_string(disagreements) +
                                           " disagreements in 200 equal-cardinality sets; mixed fixture CV " + cv[0] +
                                           " first, chi2 " + chi[0] + " first"};
}

// 6. REVEAL output does not depend on the ranking method.
Outcome reveal_invariance() {
  int differing = 0;
  std::size_t edges = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const DiscretePanel panel = sample_panel(default_generator(400, 7, 0.1, seed));
    const BalanceResult balance = undersample_balance(panel, 1, seed);
    RunConfig config;
    config.seed = seed;
    std::vector<ModelFit> fits;
    for (RankMethod m : {RankMethod::kCv, RankMethod::kChi2, RankMethod::kIg})
      fits.push_back(learn_model(panel, balance, 1, m, config));
    for (std::size_t i = 1; i < fits.size(); ++i) {
      const bool same = fits[i].inter.edges == fits[0].inter.edges && fits[i].inter.skipped == fits[0].inter.skipped &&
                        fits[i].reveal_order == fits[0].reveal_order;
      if (!same) ++differing;
    }
    edges += fits[0].inter.edges.size();
  }
  return {differing == 0, std::to_string(differing) + " differing pipeline pairs over 20 panels (" +
                              std::to_string(edges) + " inter edges total)"};
}

DataMatrix stack(const SequenceData& seq, const std::vector<int>& cards, int first, int last) {
  DataMatrix d;
  d.cards = cards;
  d.columns.assign(cards.size(), {});
  for (std::size_t s = 0; s < seq.subjects(); ++s)
    for (int t = first; t < last; ++t)
      for (std::size_t c = 0; c < cards.size(); ++c) d.columns[c].push_back(seq.at(s, t, static_cast<int>(c)));
  return d;
}

// 7. Recovery of a known model.
Outcome structure_recovery() {
  const auto start = Clock::now();
  const GeneratorSpec spec = default_generator(5000, 7, 0.0, 1007);
  const TwoSliceStructure& truth = spec.structure;
  double min_peak = 1.0;
  for (const auto* set : {&spec.cpts.prior, &spec.cpts.transition})
    for (const Cpt& c : *set)
      for (std::size_t r = 0; r < c.rows(); ++r) {
        const auto row = c.row(r);
        min_peak = std::min(min_peak, *std::max_element(row.begin(), row.end()));
      }
  const SequenceData seq = sample_sequences(spec);
  const DataMatrix all = stack(seq, truth.cards, 0, seq.horizon);
  const IntraDag dag = k2_search(all, truth.nodes, 3);
  IntraDag empty{truth.nodes, std::vector<std::vector<int>>(truth.size())};
  const double learned = k2_total_score(all, dag), baseline = k2_total_score(all, empty);

  RevealOptions opts;
  opts.target = truth.target;
  const InterEdges inter = reveal_search(stack(seq, truth.cards, 0, seq.horizon - 1),
                                         stack(seq, truth.cards, 1, seq.horizon), opts);
  std::set<std::pair<int, int>> found;
  for (const auto& e : inter.edges) found.insert({e.source, e.destination});
  std::size_t hits = 0;
  for (const auto& e : truth.inter) hits += found.count({e.source, e.destination});
  const double recall = static_cast<double>(hits) / static_cast<double>(truth.inter.size());
  const double elapsed = seconds_since(start);
  return {min_peak >= 0.85 && recall >= 0.8 && learned >= baseline && elapsed < 300.0,
          "inter recall " + std::to_string(hits) + "/" + std::to_string(truth.inter.size()) + ", K2 " +
              fmt("%.1f", learned) + " vs empty " + fmt("%.1f", baseline) + ", min CPT peak " + fmt("%.2f", min_peak) +
              ", " + fmt("%.1f", elapsed) + " s"};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_text(e.path());
  return files;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "raus");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (status != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return status;
}

// 8. End-to-end determinism and scale.
Outcome end_to_end() {
  const fs::path dir = fs::temp_directory_path() / "raus_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path data = dir / "panel.csv";
  std::ostringstream csv;
  write_panel_csv(csv, sample_panel(default_generator(2000, 7, 0.1, 1008)));
  write_text(data, csv.str());
  auto run = [&](const std::string& name, const std::string& threads, double& elapsed) {
    const auto start = Clock::now();
    const int status = cli({"run", "--data", data.string(), "--windows", "24,48,72", "--methods", "cv,chi2,ig",
                            "--bootstrap", "200", "--seed", "7", "--threads", threads, "--out", (dir / name).string()});
    elapsed = seconds_since(start);
    return status;
  };
  double t1 = 0, t2 = 0, t4 = 0;
  const int s1 = run("first", "1", t1), s2 = run("second", "1", t2), s4 = run("four", "4", t4);
  if (s1 || s2 || s4) return {false, "run exited with " + std::to_string(s1 | s2 | s4)};
  const auto a = tree(dir / "first");
  std::size_t leaves = 0;
  for (const auto& [path, text] : a)
    if (path.size() > 13 && path.ends_with("/metrics.json") && !path.starts_with("baselines/")) ++leaves;
  const bool same_runs = a == tree(dir / "second");
  const bool same_threads = a == tree(dir / "four");
  const double slowest = std::max({t1, t2, t4});
  fs::remove_all(dir);
  return {same_runs && same_threads && leaves == 9 && slowest < 600.0,
          std::to_string(leaves) + " leaves, " + std::to_string(a.size()) + " files, identical across runs: " +
              (same_runs ? "yes" : "no") + ", across threads 1/4: " + (same_threads ? "yes" : "no") +
              ", slowest run " + fmt("%.1f", slowest) + " s"};
}

// 9. KDIGO labels on hand-derived cases.
Outcome kdigo_fixture() {
  using S = Series;
  const std::optional<double> _;
  auto flat = [](std::vector<double> head, double tail) {
    S s(head.begin(), head.end());
    while (s.size() < 10) s.push_back(tail);
    return s;
  };
  struct Case {
    const char* name;
    S scr, egfr;
    std::vector<int> want;  // empty = excluded
  };
  const std::vector<Case> cases{
      {"relative rise with low eGFR, ends after day 7", flat({0.5, 0.6, 0.7, 0.8}, 0.8),
       flat({90, 80, 70, 55}, 55), {0, 0, 0, 1, 1, 1, 1, 1, 0, 0}},
      {"relative rise with eGFR exactly 60", flat({0.5, 0.6, 0.7, 0.8}, 0.8), flat({90, 80, 70, 60}, 65),
       {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"exactly 1.5x baseline", flat({0.4, 0.5, 0.6}, 0.6), flat({50}, 50), {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"just above 1.5x then recovery", flat({0.4, 0.5, 0.61, 0.61, 0.5}, 0.5), flat({50}, 50),
       {0, 0, 1, 1, 0, 0, 0, 0, 0, 0}},
      {"exactly +0.3 within 24h", flat({1.0, 1.3}, 1.3), flat({80}, 80), {0, 1, 1, 0, 0, 0, 0, 0, 0, 0}},
      {"+0.29 within 48h", flat({1.0, 1.1, 1.29}, 1.29), flat({80}, 80), {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"exactly +0.3 over 48h", flat({1.0, 1.15, 1.3}, 1.3), flat({80}, 80), {0, 0, 1, 0, 0, 0, 0, 0, 0, 0}},
      {"+0.3 spread over 72h", flat({1.0, 1.1, 1.2, 1.3}, 1.3), flat({80}, 80), {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"leaves and re-enters AKI", flat({1.0, 1.4, 1.0, 1.0, 1.4}, 1.4), flat({80}, 80),
       {0, 1, 0, 0, 1, 1, 0, 0, 0, 0}},
      {"missing baseline", flat({}, 1.0), flat({80}, 80), {}},
      {"gaps in the series", [&] {
         S s = flat({1.0, 0.0, 1.35, 0.0, 1.0}, 1.0);
         s[1] = _;
         s[3] = _;
         return s;
       }(),
       flat({80}, 80), {0, 0, 1, 0, 0, 0, 0, 0, 0, 0}},
      {"both criteria (1.0 -> 1.6 at eGFR 40)", flat({1.0, 1.1, 1.2, 1.6}, 1.6), flat({80, 80, 80, 40}, 40),
       {0, 0, 0, 1, 1, 1, 1, 1, 0, 0}},
  };
  std::vector<S> scr, egfr;
  for (const auto& c : cases) {
    scr.push_back(c.scr);
    egfr.push_back(c.egfr);
  }
  scr[9][0] = _;
  const KdigoResult r = apply_kdigo_labels(scr, egfr);
  int wrong = 0;
  std::string first_wrong;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const bool excluded = std::find(r.excluded.begin(), r.excluded.end(), i) != r.excluded.end();
    const bool ok = cases[i].want.empty() ? excluded : (!excluded && r.labels[i] == cases[i].want);
    if (!ok && wrong++ == 0) first_wrong = cases[i].name;
  }
  return {wrong == 0, std::to_string(cases.size() - wrong) + "/" + std::to_string(cases.size()) + " cases match" +
                          (wrong ? "; first mismatch: " + first_wrong : "")};
}

// 10. Chi-squared tail.
Outcome chi2_tail() {
  const double p = chi2_upper_tail(6.6667, 1);
  const double oracle = std::erfc(std::sqrt(6.6667 / 2.0));
  return {std::abs(p - 0.00982) <= 1e-4 && std::abs(p - oracle) <= 1e-12,
          "p = " + fmt("%.6f", p) + ", normal-tail identity " + fmt("%.6f", oracle)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"inference matches enumeration", inference_oracle},
      {"EM correctness", em_correctness},
      {"AUC and AP oracles", metric_oracles},
      {"operating-point arithmetic", operating_point_counts},
      {"CV and chi-squared rank agreement", rank_agreement},
      {"inter-slice invariance across methods", reveal_invariance},
      {"structure recovery", structure_recovery},
      {"end-to-end determinism and scale", end_to_end},
      {"KDIGO labeling fixture", kdigo_fixture},
      {"chi-squared p-value", chi2_tail},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
