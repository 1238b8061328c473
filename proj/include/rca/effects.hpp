#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/discovery.hpp"
#include "rca/error.hpp"
#include "rca/log.hpp"
#include "rca/resolve.hpp"
#include "rca/stats.hpp"

namespace rca {

struct CausalPath {
  std::vector<VarId> vertices;
  double path_ace = 0.0;
  std::vector<double> edge_aces;

  VarId origin() const { return vertices.front(); }
  VarId objective() const { return vertices.back(); }

  friend bool operator==(const CausalPath&, const CausalPath&) = default;
};

struct AceEstimate {
  VarId treatment = 0;
  VarId outcome = 0;
  double value = 0.0;
  std::vector<VarId> adjustment_set;
  std::size_t n_treatment_levels = 0;
};

struct Diagnosis {
  VarId fault_objective = 0;
  std::string method = "care";
  std::vector<CausalPath> ranked_paths;
  std::vector<VarId> root_causes;
  std::vector<std::string> warnings;
};

struct EffectOptions {
  // Equal-frequency bins for continuous treatments and adjustment variables.
  std::size_t bins = 5;
};

// ---------------------------------------------------------------------------
// m-separation

// Whether x and y are m-separated by `given` in `g`. With `cut_outgoing`, the
// edges out of that vertex are removed first (the backdoor graph).
inline bool m_separated(const Admg& g, VarId x, VarId y, const std::vector<VarId>& given,
                        std::optional<VarId> cut_outgoing = std::nullopt) {
  const std::size_t n = g.size();
  std::vector<std::vector<VarId>> parents(n);
  for (const auto& [a, b] : g.directed()) {
    if (cut_outgoing && a == *cut_outgoing) continue;
    parents[b].push_back(a);
  }
  std::vector<bool> anc(n, false);
  std::vector<VarId> stack{x, y};
  stack.insert(stack.end(), given.begin(), given.end());
  while (!stack.empty()) {
    VarId v = stack.back();
    stack.pop_back();
    if (anc[v]) continue;
    anc[v] = true;
    for (auto p : parents[v]) stack.push_back(p);
  }
  std::vector<std::set<VarId>> adj(n);
  auto connect = [&](VarId a, VarId b) {
    if (a == b) return;
    adj[a].insert(b);
    adj[b].insert(a);
  };
  for (VarId v = 0; v < n; ++v) {
    if (!anc[v]) continue;
    for (auto p : parents[v]) connect(p, v);
  }
  // Districts within the ancestral set: each district plus its parents is a clique.
  std::vector<int> district(n, -1);
  int next = 0;
  for (VarId v = 0; v < n; ++v) {
    if (!anc[v] || district[v] >= 0) continue;
    std::vector<VarId> todo{v};
    district[v] = next;
    while (!todo.empty()) {
      VarId w = todo.back();
      todo.pop_back();
      for (auto s : g.spouses(w)) {
        if (anc[s] && district[s] < 0) {
          district[s] = next;
          todo.push_back(s);
        }
      }
    }
    ++next;
  }
  for (int d = 0; d < next; ++d) {
    std::set<VarId> members;
    for (VarId v = 0; v < n; ++v) {
      if (district[v] == d) {
        members.insert(v);
        for (auto p : parents[v]) members.insert(p);
      }
    }
    for (auto a : members) {
      for (auto b : members) connect(a, b);
    }
  }
  std::vector<bool> blocked(n, false);
  for (auto z : given) blocked[z] = true;
  if (blocked[x] || blocked[y]) return true;
  std::vector<bool> seen(n, false);
  std::vector<VarId> todo{x};
  seen[x] = true;
  while (!todo.empty()) {
    VarId v = todo.back();
    todo.pop_back();
    if (v == y) return false;
    for (auto w : adj[v]) {
      if (!seen[w] && !blocked[w]) {
        seen[w] = true;
        todo.push_back(w);
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Path extraction

// Backtracks from `objective` through parents and spouses until an option is
// reached. Paths that dead-end at a non-option are dropped.
inline std::vector<CausalPath> extract_paths(const Admg& g, VarId objective, std::size_t max_paths = 100000) {
  if (objective >= g.size()) throw Error(ErrorCode::UnknownVertex, "objective index out of range");
  if (g.vertices()[objective].role != Role::PerformanceObjective) {
    throw Error(ErrorCode::InvalidArgument, "'" + g.vertices()[objective].name + "' is not an objective",
                g.vertices()[objective].name);
  }
  const std::size_t n = g.size();
  std::vector<std::vector<VarId>> predecessors(n);
  for (VarId v = 0; v < n; ++v) {
    std::set<VarId> preds;
    for (auto p : g.parents(v)) preds.insert(p);
    for (auto s : g.spouses(v)) preds.insert(s);
    predecessors[v].assign(preds.begin(), preds.end());
  }
  std::vector<CausalPath> out;
  std::size_t discarded = 0;
  std::vector<VarId> reversed{objective};
  std::vector<bool> on_path(n, false);
  on_path[objective] = true;
  std::function<void(VarId)> walk = [&](VarId v) {
    if (out.size() >= max_paths) return;
    if (v != objective && g.vertices()[v].role == Role::ManipulableOption) {
      out.push_back({{reversed.rbegin(), reversed.rend()}, 0.0, {}});
      return;
    }
    bool extended = false;
    for (auto p : predecessors[v]) {
      if (on_path[p]) continue;
      extended = true;
      on_path[p] = true;
      reversed.push_back(p);
      walk(p);
      reversed.pop_back();
      on_path[p] = false;
    }
    if (!extended && v != objective) ++discarded;
  };
  walk(objective);
  if (out.size() >= max_paths) logger().warn("path enumeration stopped at {} paths", max_paths);
  if (discarded > 0) logger().info("discarded {} paths that do not start at an option", discarded);
  if (out.empty()) {
    throw Error(ErrorCode::NoPathsFound, "no causal path reaches '" + g.vertices()[objective].name + "'",
                g.vertices()[objective].name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Average causal effect

namespace detail {

// Integer codes for a column: raw values for discrete kinds, equal-frequency
// bins for continuous ones.
inline std::vector<double> level_codes(const Dataset& ds, VarId v, std::size_t bins) {
  auto col = ds.column(v);
  if (ds.meta(v).is_discrete()) return {col.begin(), col.end()};
  auto d = fit_discretization(col, ds.meta(v).name, BinStrategy::EqualFrequency, bins);
  std::vector<double> out(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) out[i] = static_cast<double>(d.bin_of(col[i]));
  return out;
}

}  // namespace detail

// E[outcome | do(treatment = t)] for every observed level t, by standardizing
// over the cells of `adjustment`. Cells lacking any treatment level are left
// out when at least one cell covers all levels.
inline std::map<double, double> interventional_means(const Dataset& ds, VarId treatment, VarId outcome,
                                                     const std::vector<VarId>& adjustment,
                                                     const EffectOptions& opt = {}) {
  const std::size_t n = ds.sample_count();
  auto t_codes = detail::level_codes(ds, treatment, opt.bins);
  std::vector<std::vector<double>> z_codes;
  for (auto z : adjustment) z_codes.push_back(detail::level_codes(ds, z, opt.bins));
  auto y = ds.column(outcome);

  struct Cell {
    std::size_t count = 0;
    std::map<double, std::pair<double, std::size_t>> by_level;  // level -> (sum, count)
  };
  std::map<std::vector<double>, Cell> cells;
  std::set<double> levels;
  std::vector<double> key(adjustment.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < adjustment.size(); ++k) key[k] = z_codes[k][r];
    auto& cell = cells[key];
    ++cell.count;
    auto& acc = cell.by_level[t_codes[r]];
    acc.first += y[r];
    ++acc.second;
    levels.insert(t_codes[r]);
  }
  bool any_common = false;
  for (const auto& [k, cell] : cells) {
    if (cell.by_level.size() == levels.size()) any_common = true;
  }
  std::map<double, double> means;
  for (double t : levels) {
    double weighted = 0.0;
    double weight = 0.0;
    for (const auto& [k, cell] : cells) {
      if (any_common && cell.by_level.size() != levels.size()) continue;
      auto it = cell.by_level.find(t);
      if (it == cell.by_level.end()) continue;
      const double w = static_cast<double>(cell.count);
      weighted += w * it->second.first / static_cast<double>(it->second.second);
      weight += w;
    }
    means[t] = weight > 0.0 ? weighted / weight : 0.0;
  }
  return means;
}

// Mean absolute difference of interventional means over unordered level pairs.
inline double mean_pairwise_gap(const std::map<double, double>& means) {
  std::vector<double> values;
  for (const auto& [t, m] : means) values.push_back(m);
  if (values.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      total += std::abs(values[j] - values[i]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

// ACE of `treatment` on `outcome` by backdoor adjustment on the treatment's
// parents. Throws UnidentifiableEffect when those parents do not block every
// backdoor route (latent confounding).
inline AceEstimate ace_edge(const Dataset& ds, const Admg& g, VarId treatment, VarId outcome,
                            const EffectOptions& opt = {}) {
  if (treatment == outcome) throw Error(ErrorCode::InvalidArgument, "treatment and outcome coincide");
  AceEstimate est;
  est.treatment = treatment;
  est.outcome = outcome;
  for (auto p : g.parents(treatment)) {
    if (p != outcome) est.adjustment_set.push_back(p);
  }
  if (!m_separated(g, treatment, outcome, est.adjustment_set, treatment)) {
    throw Error(ErrorCode::UnidentifiableEffect,
                "parents of '" + ds.meta(treatment).name + "' do not block every backdoor path to '" +
                    ds.meta(outcome).name + "'",
                ds.meta(treatment).name);
  }
  auto means = interventional_means(ds, treatment, outcome, est.adjustment_set, opt);
  est.n_treatment_levels = means.size();
  est.value = mean_pairwise_gap(means);
  return est;
}

inline double path_ace(const std::vector<double>& edge_aces) {
  if (edge_aces.empty()) return 0.0;
  double total = 0.0;
  for (double a : edge_aces) total += std::abs(a);
  return total / static_cast<double>(edge_aces.size());
}

inline double path_ace(const CausalPath& path, const std::vector<double>& edge_aces) {
  if (path.vertices.size() < 2 || edge_aces.size() != path.vertices.size() - 1) {
    throw Error(ErrorCode::InvalidArgument, "need one edge ACE per path edge");
  }
  return path_ace(edge_aces);
}

// ---------------------------------------------------------------------------
// Ranking

namespace detail {

inline bool path_name_less(const Admg& g, const CausalPath& a, const CausalPath& b) {
  return std::lexicographical_compare(
      a.vertices.begin(), a.vertices.end(), b.vertices.begin(), b.vertices.end(),
      [&](VarId x, VarId y) { return g.vertices()[x].name < g.vertices()[y].name; });
}

class EdgeAceCache {
 public:
  EdgeAceCache(const Dataset& ds, const Admg& g, const EffectOptions& opt) : ds_(ds), g_(g), opt_(opt) {}

  double get(VarId from, VarId to, std::vector<std::string>& warnings) {
    auto key = std::make_pair(from, to);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    double value = 0.0;
    const auto& name_from = ds_.meta(from).name;
    const auto& name_to = ds_.meta(to).name;
    if (g_.has_directed(from, to)) {
      try {
        value = ace_edge(ds_, g_, from, to, opt_).value;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnidentifiableEffect) throw;
        warnings.push_back("effect of " + name_from + " on " + name_to + " is not identifiable; using 0");
      }
    } else {
      warnings.push_back("edge " + name_from + " <-> " + name_to + " is a confounding edge; using 0");
    }
    cache_.emplace(key, value);
    return value;
  }

 private:
  const Dataset& ds_;
  const Admg& g_;
  EffectOptions opt_;
  std::map<std::pair<VarId, VarId>, double> cache_;
};

inline Diagnosis rank_objective(const Admg& g, VarId objective, std::size_t top_k, EdgeAceCache& cache) {
  Diagnosis diag;
  diag.fault_objective = objective;
  auto paths = extract_paths(g, objective);
  std::set<std::string> warned;
  for (auto& p : paths) {
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i + 1 < p.vertices.size(); ++i) {
      p.edge_aces.push_back(cache.get(p.vertices[i], p.vertices[i + 1], warnings));
    }
    for (auto& w : warnings) {
      if (warned.insert(w).second) diag.warnings.push_back(std::move(w));
    }
    p.path_ace = path_ace(p, p.edge_aces);
  }
  std::sort(paths.begin(), paths.end(), [&](const CausalPath& a, const CausalPath& b) {
    if (a.path_ace != b.path_ace) return a.path_ace > b.path_ace;
    return path_name_less(g, a, b);
  });
  if (paths.size() > top_k) paths.resize(top_k);
  for (const auto& p : paths) {
    if (std::find(diag.root_causes.begin(), diag.root_causes.end(), p.origin()) == diag.root_causes.end()) {
      diag.root_causes.push_back(p.origin());
    }
  }
  diag.ranked_paths = std::move(paths);
  return diag;
}

}  // namespace detail

// Scores every causal path into each objective and keeps the top_k per
// objective. Objectives without paths get an empty diagnosis and a warning.
inline std::map<VarId, Diagnosis> cpwe(const Dataset& ds, const Admg& g, const std::vector<VarId>& objectives,
                                       std::size_t top_k, const EffectOptions& opt = {}) {
  if (objectives.empty()) throw Error(ErrorCode::InvalidArgument, "no objectives given");
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  detail::EdgeAceCache cache(ds, g, opt);
  std::map<VarId, Diagnosis> out;
  for (auto y : objectives) {
    try {
      out[y] = detail::rank_objective(g, y, top_k, cache);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoPathsFound) throw;
      Diagnosis empty;
      empty.fault_objective = y;
      empty.warnings.push_back(e.what());
      out[y] = std::move(empty);
    }
  }
  return out;
}

// Root causes of a fault observed on `fault`, ordered by their best path.
inline Diagnosis diagnose(const Dataset& ds, const Admg& g, VarId fault, std::size_t top_k,
                          const EffectOptions& opt = {}) {
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  detail::EdgeAceCache cache(ds, g, opt);
  return detail::rank_objective(g, fault, top_k, cache);
}

inline nlohmann::json to_json(const Diagnosis& d, const std::vector<VariableMeta>& vs) {
  nlohmann::json doc;
  doc["objective"] = vs[d.fault_objective].name;
  doc["method"] = d.method;
  doc["paths"] = nlohmann::json::array();
  for (const auto& p : d.ranked_paths) {
    nlohmann::json names = nlohmann::json::array();
    for (auto v : p.vertices) names.push_back(vs[v].name);
    doc["paths"].push_back({{"vertices", names}, {"path_ace", p.path_ace}, {"edge_aces", p.edge_aces}});
  }
  nlohmann::json causes = nlohmann::json::array();
  for (auto c : d.root_causes) causes.push_back(vs[c].name);
  doc["root_causes"] = causes;
  doc["warnings"] = d.warnings;
  return doc;
}

inline void print_table(std::ostream& os, const Diagnosis& d, const std::vector<VariableMeta>& vs) {
  os << "objective: " << vs[d.fault_objective].name << " (" << d.method << ")\n";
  std::size_t rank = 1;
  for (const auto& p : d.ranked_paths) {
    std::ostringstream path;
    for (std::size_t i = 0; i < p.vertices.size(); ++i) path << (i ? " -> " : "") << vs[p.vertices[i]].name;
    os << "  " << rank++ << ". " << path.str() << "  ACE=" << p.path_ace << '\n';
  }
  os << "root causes:";
  for (auto c : d.root_causes) os << ' ' << vs[c].name;
  os << '\n';
}

// ---------------------------------------------------------------------------
// Learning pipeline and incremental update

struct LearnConfig {
  FciOptions fci;
  ResolveOptions resolve;
  std::size_t bins = 5;
};

struct CausalModel {
  Pag pag;
  Admg admg;
  ResolveReport report;
};

// Discovery followed by edge resolution on the binned copy of `ds`.
inline CausalModel learn_model(const Dataset& ds, const LearnConfig& cfg = {}, const Pag* warm = nullptr) {
  auto sc = build_constraints(ds.variables());
  CausalModel model;
  model.pag = fci(ds, sc, cfg.fci, WarmStart{warm});
  auto binned = discretize_default(ds, cfg.bins);
  model.admg = resolve_edges(model.pag, binned, sc, cfg.resolve, &model.report);
  return model;
}

// Refits on old + new samples, re-checking the previous separating sets
// first. An empty batch returns the model unchanged.
inline CausalModel update_model(const CausalModel& model, const Dataset& old_samples, const Dataset& new_samples,
                                const LearnConfig& cfg = {}) {
  if (new_samples.variable_count() != old_samples.variable_count()) {
    throw Error(ErrorCode::SchemaMismatch, "new samples have a different schema");
  }
  auto combined = concat(old_samples, new_samples);
  if (new_samples.sample_count() == 0) return model;
  return learn_model(combined, cfg, &model.pag);
}

}  // namespace rca
