#include "raus/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>

namespace raus {

namespace {

std::vector<int> cards_of(const JunctionTree& jt, std::span<const int> vars) {
  std::vector<int> out;
  out.reserve(vars.size());
  for (int v : vars) out.push_back(jt.cards[v]);
  return out;
}

std::size_t table_size(std::span<const int> cards) {
  std::size_t n = 1;
  for (int c : cards) n *= static_cast<std::size_t>(c);
  return n;
}

std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

struct DisjointSets {
  std::vector<int> up;
  explicit DisjointSets(std::size_t n) : up(n) { std::iota(up.begin(), up.end(), 0); }
  int find(int x) {
    while (up[x] != x) x = up[x] = up[up[x]];
    return x;
  }
  bool join(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    up[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

}  // namespace

std::size_t JunctionTree::max_states() const {
  return states.empty() ? 0 : *std::max_element(states.begin(), states.end());
}

JunctionTree compile_junction_tree(std::span<const int> cards,
                                   std::span<const std::vector<int>> scopes,
                                   std::size_t max_clique_states) {
  const int n = static_cast<int>(cards.size());
  JunctionTree jt;
  jt.cards.assign(cards.begin(), cards.end());
  for (const auto& scope : scopes) {
    std::vector<int> s = scope;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (int v : s)
      if (v < 0 || v >= n) throw Error(ErrorCode::kInvalidArgument, "scope references unknown variable");
    jt.scopes.push_back(std::move(s));
  }

  // Moral graph: every scope becomes a clique.
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const auto& s : jt.scopes)
    for (int a : s)
      for (int b : s)
        if (a != b) adj[a][b] = 1;

  std::vector<char> gone(n, 0);
  std::vector<int> nb;
  for (int step = 0; step < n; ++step) {
    int best = -1;
    long best_fill = -1;
    for (int v = 0; v < n; ++v) {
      if (gone[v]) continue;
      nb.clear();
      for (int u = 0; u < n; ++u)
        if (!gone[u] && adj[v][u]) nb.push_back(u);
      long fill = 0;
      for (std::size_t i = 0; i < nb.size(); ++i)
        for (std::size_t j = i + 1; j < nb.size(); ++j)
          if (!adj[nb[i]][nb[j]]) ++fill;
      if (best < 0 || fill < best_fill) {
        best = v;
        best_fill = fill;
      }
    }
    std::vector<int> clique{best};
    for (int u = 0; u < n; ++u)
      if (!gone[u] && adj[best][u]) clique.push_back(u);
    for (std::size_t i = 1; i < clique.size(); ++i)
      for (std::size_t j = i + 1; j < clique.size(); ++j) adj[clique[i]][clique[j]] = adj[clique[j]][clique[i]] = 1;
    gone[best] = 1;
    std::sort(clique.begin(), clique.end());
    bool contained = std::any_of(jt.cliques.begin(), jt.cliques.end(), [&](const std::vector<int>& c) {
      return std::includes(c.begin(), c.end(), clique.begin(), clique.end());
    });
    if (contained) continue;
    double states = 1.0;
    for (int v : clique) states *= cards[v];
    if (states > static_cast<double>(max_clique_states))
      throw Error(ErrorCode::kTreewidthTooLarge,
                  "clique of " + std::to_string(clique.size()) + " variables exceeds the state cap of " +
                      std::to_string(max_clique_states));
    jt.states.push_back(static_cast<std::size_t>(states));
    jt.cliques.push_back(std::move(clique));
  }

  // Maximum-weight spanning tree on separator sizes (Kruskal, ties by index).
  const int k = static_cast<int>(jt.cliques.size());
  std::vector<std::tuple<int, int, int>> edges;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      edges.emplace_back(-static_cast<int>(intersect(jt.cliques[i], jt.cliques[j]).size()), i, j);
  std::sort(edges.begin(), edges.end());
  DisjointSets sets(k);
  std::vector<std::vector<int>> tree_adj(k);
  for (auto [w, i, j] : edges)
    if (sets.join(i, j)) {
      tree_adj[i].push_back(j);
      tree_adj[j].push_back(i);
    }
  jt.parent.assign(k, -1);
  jt.separators.assign(k, {});
  if (k > 0) {
    std::vector<char> seen(k, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      int c = q.front();
      q.pop();
      jt.order.push_back(c);
      std::sort(tree_adj[c].begin(), tree_adj[c].end());
      for (int d : tree_adj[c])
        if (!seen[d]) {
          seen[d] = 1;
          jt.parent[d] = c;
          jt.separators[d] = intersect(jt.cliques[d], jt.cliques[c]);
          q.push(d);
        }
    }
  }

  for (const auto& s : jt.scopes) {
    int home = -1;
    for (int c = 0; c < k && home < 0; ++c)
      if (std::includes(jt.cliques[c].begin(), jt.cliques[c].end(), s.begin(), s.end())) home = c;
    jt.home.push_back(home);
  }
  jt.var_clique.assign(n, -1);
  for (int c = 0; c < k; ++c)
    for (int v : jt.cliques[c])
      if (jt.var_clique[v] < 0 || jt.states[c] < jt.states[jt.var_clique[v]]) jt.var_clique[v] = c;
  return jt;
}

JunctionTree compile_junction_tree(const UnrolledNet& net, std::size_t max_clique_states) {
  std::vector<std::vector<int>> scopes;
  for (int v = 0; v < net.size(); ++v) {
    std::vector<int> s = net.parents[v];
    s.push_back(v);
    scopes.push_back(std::move(s));
  }
  return compile_junction_tree(net.cards, scopes, max_clique_states);
}

bool satisfies_running_intersection(const JunctionTree& jt) {
  const int k = static_cast<int>(jt.size());
  if (k == 0) return true;
  // Connected tree with a single root.
  if (static_cast<int>(jt.order.size()) != k) return false;
  if (std::count(jt.parent.begin(), jt.parent.end(), -1) != 1) return false;
  // Each variable's cliques form a subtree: exactly one of them has a parent
  // that lacks the variable.
  std::vector<int> tops(jt.cards.size(), 0);
  for (int c = 0; c < k; ++c)
    for (int v : jt.cliques[c]) {
      int p = jt.parent[c];
      if (p < 0 || !std::binary_search(jt.cliques[p].begin(), jt.cliques[p].end(), v)) ++tops[v];
    }
  for (int c = 0; c < k; ++c)
    for (int v : jt.cliques[c])
      if (tops[v] != 1) return false;
  for (std::size_t s = 0; s < jt.scopes.size(); ++s) {
    int h = jt.home[s];
    if (h < 0 || !std::includes(jt.cliques[h].begin(), jt.cliques[h].end(), jt.scopes[s].begin(),
                                jt.scopes[s].end()))
      return false;
  }
  return true;
}

TreeCalibration::TreeCalibration(JunctionTree tree) : tree_(std::move(tree)) { reset(); }

void TreeCalibration::reset() {
  const std::size_t k = tree_.size();
  potentials_.resize(k);
  separator_potentials_.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    potentials_[c].assign(tree_.states[c], 1.0);
    separator_potentials_[c].assign(table_size(cards_of(tree_, tree_.separators[c])), 1.0);
  }
  log_z_ = 0.0;
}

void TreeCalibration::multiply_scope(std::size_t scope, std::span<const double> values) {
  const int c = tree_.home[scope];
  if (c < 0) throw Error(ErrorCode::kInvalidArgument, "scope has no home clique");
  auto& pot = potentials_[c];
  const auto cards = cards_of(tree_, tree_.cliques[c]);
  for_each_projection(tree_.cliques[c], cards, tree_.scopes[scope],
                      [&](std::size_t i, std::size_t j) { pot[i] *= values[j]; });
}

std::vector<double> TreeCalibration::project(std::size_t clique, std::span<const int> vars) const {
  const auto sub_cards = cards_of(tree_, vars);
  std::vector<double> out(table_size(sub_cards), 0.0);
  const auto& pot = potentials_[clique];
  for_each_projection(tree_.cliques[clique], cards_of(tree_, tree_.cliques[clique]), vars,
                      [&](std::size_t i, std::size_t j) { out[j] += pot[i]; });
  return out;
}

std::vector<double> TreeCalibration::marginal(int var) const {
  const int c = tree_.var_clique[var];
  const int vars[] = {var};
  std::vector<double> m = project(c, vars);
  double s = std::accumulate(m.begin(), m.end(), 0.0);
  for (double& x : m) x /= s;
  return m;
}

void TreeCalibration::calibrate() {
  const auto& order = tree_.order;
  auto update = [&](int target, int c, const std::vector<double>& message) {
    auto& old = separator_potentials_[c];
    auto& pot = potentials_[target];
    for_each_projection(tree_.cliques[target], cards_of(tree_, tree_.cliques[target]), tree_.separators[c],
                        [&](std::size_t i, std::size_t j) { pot[i] = old[j] > 0.0 ? pot[i] * message[j] / old[j] : 0.0; });
    old = message;
  };
  auto inconsistent = [] {
    return Error(ErrorCode::kInconsistentEvidence, "evidence has zero probability under the model");
  };
  for (std::size_t idx = order.size(); idx-- > 1;) {
    const int c = order[idx];
    std::vector<double> m = project(c, tree_.separators[c]);
    const double s = std::accumulate(m.begin(), m.end(), 0.0);
    if (!(s > 0.0) || !std::isfinite(s)) throw inconsistent();
    for (double& x : m) x /= s;
    for (double& x : potentials_[c]) x /= s;
    log_z_ += std::log(s);
    update(tree_.parent[c], c, m);
  }
  if (!order.empty()) {
    auto& root = potentials_[order.front()];
    const double s = std::accumulate(root.begin(), root.end(), 0.0);
    if (!(s > 0.0) || !std::isfinite(s)) throw inconsistent();
    for (double& x : root) x /= s;
    log_z_ += std::log(s);
  }
  for (std::size_t idx = 1; idx < order.size(); ++idx) {
    const int c = order[idx];
    update(c, c, project(tree_.parent[c], tree_.separators[c]));
  }
}

ReducedQuery::ReducedQuery(const UnrolledNet& net, std::span<const int> evidence,
                           std::span<const int> queries, bool prune, std::size_t max_clique_states)
    : net_(&net), evidence_(evidence.begin(), evidence.end()) {
  const int n = net.size();
  if (static_cast<int>(evidence_.size()) != n)
    throw Error(ErrorCode::kInvalidArgument, "evidence length does not match the network");
  for (int v = 0; v < n; ++v)
    if (evidence_[v] != kMissing && (evidence_[v] < 0 || evidence_[v] >= net.cards[v]))
      throw Error(ErrorCode::kInvalidArgument, "evidence outside the category range");

  std::vector<char> relevant(n, prune ? 0 : 1);
  if (prune) {
    std::vector<int> stack;
    for (int v = 0; v < n; ++v)
      if (evidence_[v] != kMissing) stack.push_back(v);
    for (int q : queries) {
      if (q < 0 || q >= n) throw Error(ErrorCode::kInvalidArgument, "query variable out of range");
      stack.push_back(q);
    }
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (relevant[v]) continue;
      relevant[v] = 1;
      for (int p : net.parents[v]) stack.push_back(p);
    }
  }

  local_.assign(n, -1);
  std::vector<int> hidden_cards;
  for (int v = 0; v < n; ++v)
    if (relevant[v] && evidence_[v] == kMissing) {
      local_[v] = static_cast<int>(hidden_.size());
      hidden_.push_back(v);
      hidden_cards.push_back(net.cards[v]);
    }

  family_of_.assign(n, -1);
  std::vector<std::vector<int>> scopes;
  for (int v = 0; v < n; ++v) {
    if (!relevant[v]) continue;
    Family fam;
    fam.var = v;
    const auto& ps = net.parents[v];
    std::vector<std::pair<int, std::size_t>> members;
    auto add = [&](int x, std::size_t stride) {
      if (evidence_[x] != kMissing)
        fam.base += static_cast<std::size_t>(evidence_[x]) * stride;
      else
        members.emplace_back(local_[x], stride);
    };
    std::size_t stride = static_cast<std::size_t>(net.cards[v]);
    add(v, 1);
    for (std::size_t k = ps.size(); k-- > 0;) {
      add(ps[k], stride);
      stride *= static_cast<std::size_t>(net.cards[ps[k]]);
    }
    std::sort(members.begin(), members.end());
    for (auto [id, s] : members) {
      fam.scope.push_back(id);
      fam.strides.push_back(s);
    }
    if (!fam.scope.empty()) {
      fam.scope_index = static_cast<int>(scopes.size());
      scopes.push_back(fam.scope);
    }
    family_of_[v] = static_cast<int>(families_.size());
    families_.push_back(std::move(fam));
  }
  calibration_ = TreeCalibration(compile_junction_tree(hidden_cards, scopes, max_clique_states));
}

double ReducedQuery::run(const CptSet& cpts) {
  calibration_.reset();
  log_constant_ = 0.0;
  const JunctionTree& jt = calibration_.tree();
  std::vector<double> values;
  std::vector<int> digit;
  for (const Family& fam : families_) {
    const Cpt& cpt = net_->cpt(fam.var, cpts);
    std::size_t expected = static_cast<std::size_t>(net_->cards[fam.var]);
    for (int p : net_->parents[fam.var]) expected *= static_cast<std::size_t>(net_->cards[p]);
    if (cpt.table.size() != expected)
      throw Error(ErrorCode::kInvalidArgument, "CPT shape does not match the network");
    if (fam.scope_index < 0) {
      const double p = cpt.table[fam.base];
      if (!(p > 0.0))
        throw Error(ErrorCode::kInconsistentEvidence, "evidence has zero probability under the model");
      log_constant_ += std::log(p);
      continue;
    }
    values.clear();
    digit.assign(fam.scope.size(), 0);
    std::size_t idx = fam.base;
    std::size_t total = 1;
    for (int x : fam.scope) total *= static_cast<std::size_t>(jt.cards[x]);
    for (std::size_t i = 0; i < total; ++i) {
      values.push_back(cpt.table[idx]);
      for (std::size_t d = digit.size(); d-- > 0;) {
        if (++digit[d] < jt.cards[fam.scope[d]]) {
          idx += fam.strides[d];
          break;
        }
        idx -= fam.strides[d] * static_cast<std::size_t>(jt.cards[fam.scope[d]] - 1);
        digit[d] = 0;
      }
    }
    calibration_.multiply_scope(static_cast<std::size_t>(fam.scope_index), values);
  }
  calibration_.calibrate();
  return log_constant_ + calibration_.log_partition();
}

std::vector<double> ReducedQuery::marginal(int var) const {
  if (var < 0 || var >= net_->size()) throw Error(ErrorCode::kInvalidArgument, "variable out of range");
  if (evidence_[var] != kMissing) {
    std::vector<double> m(net_->cards[var], 0.0);
    m[evidence_[var]] = 1.0;
    return m;
  }
  if (local_[var] < 0) throw Error(ErrorCode::kInvalidArgument, "variable was pruned from the query");
  return calibration_.marginal(local_[var]);
}

Marginals query_marginals(const UnrolledNet& net, const CptSet& cpts, std::span<const int> evidence,
                          std::size_t max_clique_states) {
  ReducedQuery q(net, evidence, {}, false, max_clique_states);
  Marginals out;
  out.log_evidence = q.run(cpts);
  for (int v = 0; v < net.size(); ++v) out.probabilities.push_back(q.marginal(v));
  return out;
}

Marginals brute_force_marginals(const UnrolledNet& net, const CptSet& cpts, std::span<const int> evidence,
                                std::size_t max_states) {
  const int n = net.size();
  if (static_cast<int>(evidence.size()) != n)
    throw Error(ErrorCode::kInvalidArgument, "evidence length does not match the network");
  std::vector<int> hidden;
  double states = 1.0;
  for (int v = 0; v < n; ++v)
    if (evidence[v] == kMissing) {
      hidden.push_back(v);
      states *= net.cards[v];
    }
  if (states > static_cast<double>(max_states))
    throw Error(ErrorCode::kOracleTooLarge, "joint state space exceeds " + std::to_string(max_states));
  std::vector<int> x(evidence.begin(), evidence.end());
  for (int v : hidden) x[v] = 0;
  Marginals out;
  out.probabilities.resize(n);
  for (int v = 0; v < n; ++v) out.probabilities[v].assign(net.cards[v], 0.0);
  double z = 0.0;
  const auto total = static_cast<std::size_t>(states);
  for (std::size_t i = 0; i < total; ++i) {
    double w = 1.0;
    for (int v = 0; v < n && w > 0.0; ++v) {
      std::size_t row = 0;
      for (int p : net.parents[v]) row = row * net.cards[p] + x[p];
      w *= net.cpt(v, cpts).table[row * net.cards[v] + x[v]];
    }
    z += w;
    for (int v = 0; v < n; ++v) out.probabilities[v][x[v]] += w;
    for (std::size_t d = hidden.size(); d-- > 0;) {
      int v = hidden[d];
      if (++x[v] < net.cards[v]) break;
      x[v] = 0;
    }
  }
  if (!(z > 0.0)) throw Error(ErrorCode::kInconsistentEvidence, "evidence has zero probability under the model");
  for (auto& m : out.probabilities)
    for (double& p : m) p /= z;
  out.log_evidence = std::log(z);
  return out;
}

std::vector<double> brute_force_joint(const UnrolledNet& net, const CptSet& cpts, std::span<const int> evidence,
                                      int query, std::size_t max_states) {
  if (query < 0 || query >= net.size()) throw Error(ErrorCode::kInvalidArgument, "query variable out of range");
  return brute_force_marginals(net, cpts, evidence, max_states).probabilities[query];
}

Predictor::Predictor(const TwoSliceStructure& structure, const CptSet& cpts, int horizon, PredictOptions options)
    : structure_(&structure), cpts_(&cpts), horizon_(horizon), options_(options) {
  if (horizon < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be positive");
  for (int k = 1; k <= horizon; ++k) nets_.push_back(UnrolledNet::unroll(structure, k));
}

double Predictor::event_probability(std::span<const int> sequence, int t, int step,
                                    std::span<const int> extra_zero_steps) const {
  const UnrolledNet& net = nets_[t + step];
  const int width = net.width;
  const int target = structure_->target;
  std::vector<int> evidence(net.size(), kMissing);
  for (int tt = 0; tt <= t; ++tt)
    for (int v = 0; v < width; ++v) {
      if (v == target && !options_.past_labels) continue;
      evidence[net.id(tt, v)] = sequence[static_cast<std::size_t>(tt) * width + v];
    }
  for (int k : extra_zero_steps) evidence[net.id(t + k, target)] = 0;
  const int query = net.id(t + step, target);
  const int queries[] = {query};
  ReducedQuery q(net, evidence, queries, true, options_.max_clique_states);
  q.run(*cpts_);
  auto m = q.marginal(query);
  return m.size() > 1 ? m[1] : 0.0;
}

double Predictor::predict(std::span<const int> sequence, int t, int lookahead) const {
  if (t < 0 || lookahead < 0 || t >= horizon_)
    throw Error(ErrorCode::kInvalidArgument, "prediction time out of range");
  if (t + lookahead > horizon_ - 1)
    throw Error(ErrorCode::kHorizonExceeded, "t + L = " + std::to_string(t + lookahead) +
                                                 " is beyond the last timestep " + std::to_string(horizon_ - 1));
  if (sequence.size() != static_cast<std::size_t>(horizon_) * structure_->size())
    throw Error(ErrorCode::kInvalidArgument, "sequence length does not match horizon and width");
  if (options_.mode == TargetMode::kExact || lookahead <= 1)
    return event_probability(sequence, t, lookahead, {});
  double none = 1.0;
  std::vector<int> zeros;
  for (int k = 1; k <= lookahead && none > 0.0; ++k) {
    none *= 1.0 - event_probability(sequence, t, k, zeros);
    zeros.push_back(k);
  }
  return 1.0 - none;
}

}  // namespace raus
