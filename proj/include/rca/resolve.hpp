#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/discovery.hpp"
#include "rca/error.hpp"
#include "rca/log.hpp"
#include "rca/stats.hpp"

namespace rca {

// Acyclic directed mixed graph: u -> v for causation, u <-> v for a latent
// common cause. A pair may carry both.
class Admg {
 public:
  Admg() = default;
  explicit Admg(std::vector<VariableMeta> vertices) : vertices_(std::move(vertices)) {}

  const std::vector<VariableMeta>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  const std::set<VarPair>& directed() const { return directed_; }
  const std::set<VarPair>& bidirected() const { return bidirected_; }

  void add_directed(VarId u, VarId v) {
    check(u, v);
    directed_.insert({u, v});
  }
  void add_bidirected(VarId u, VarId v) {
    check(u, v);
    bidirected_.insert(unordered(u, v));
  }
  void remove_directed(VarId u, VarId v) { directed_.erase({u, v}); }

  bool has_directed(VarId u, VarId v) const { return directed_.contains({u, v}); }
  bool has_bidirected(VarId u, VarId v) const { return bidirected_.contains(unordered(u, v)); }

  std::vector<VarId> parents(VarId v) const {
    std::vector<VarId> out;
    for (const auto& [a, b] : directed_) {
      if (b == v) out.push_back(a);
    }
    return out;
  }

  std::vector<VarId> children(VarId v) const {
    std::vector<VarId> out;
    for (const auto& [a, b] : directed_) {
      if (a == v) out.push_back(b);
    }
    return out;
  }

  std::vector<VarId> spouses(VarId v) const {
    std::vector<VarId> out;
    for (const auto& [a, b] : bidirected_) {
      if (a == v) out.push_back(b);
      if (b == v) out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // True if `to` is reachable from `from` along directed edges.
  bool reaches(VarId from, VarId to) const {
    std::vector<bool> seen(size(), false);
    std::deque<VarId> queue{from};
    seen[from] = true;
    while (!queue.empty()) {
      VarId v = queue.front();
      queue.pop_front();
      if (v == to) return true;
      for (auto c : children(v)) {
        if (!seen[c]) {
          seen[c] = true;
          queue.push_back(c);
        }
      }
    }
    return false;
  }

  // Kahn order of the directed part, or nullopt when it has a cycle.
  std::optional<std::vector<VarId>> topological_order() const {
    std::vector<std::size_t> indegree(size(), 0);
    for (const auto& [a, b] : directed_) ++indegree[b];
    std::deque<VarId> ready;
    for (VarId v = 0; v < size(); ++v) {
      if (indegree[v] == 0) ready.push_back(v);
    }
    std::vector<VarId> order;
    while (!ready.empty()) {
      VarId v = ready.front();
      ready.pop_front();
      order.push_back(v);
      for (auto c : children(v)) {
        if (--indegree[c] == 0) ready.push_back(c);
      }
    }
    if (order.size() != size()) return std::nullopt;
    return order;
  }

  bool is_acyclic() const { return topological_order().has_value(); }

  std::size_t edge_count() const { return directed_.size() + bidirected_.size(); }

  friend bool operator==(const Admg& a, const Admg& b) {
    if (a.vertices_.size() != b.vertices_.size()) return false;
    for (std::size_t i = 0; i < a.vertices_.size(); ++i) {
      if (a.vertices_[i].name != b.vertices_[i].name || a.vertices_[i].role != b.vertices_[i].role) return false;
    }
    return a.directed_ == b.directed_ && a.bidirected_ == b.bidirected_;
  }

 private:
  void check(VarId u, VarId v) const {
    if (u == v) throw Error(ErrorCode::InvalidArgument, "self-loops are not allowed");
    if (u >= size() || v >= size()) throw Error(ErrorCode::UnknownVertex, "vertex index out of range");
  }

  std::vector<VariableMeta> vertices_;
  std::set<VarPair> directed_;
  std::set<VarPair> bidirected_;
};

inline nlohmann::json to_json(const Admg& g) {
  const auto& vs = g.vertices();
  nlohmann::json doc;
  doc["vertices"] = nlohmann::json::array();
  for (const auto& v : vs) {
    doc["vertices"].push_back({{"name", v.name}, {"role", to_string(v.role)}, {"kind", to_string(v.kind)}});
  }
  doc["directed"] = nlohmann::json::array();
  for (const auto& [a, b] : g.directed()) doc["directed"].push_back({vs[a].name, vs[b].name});
  doc["bidirected"] = nlohmann::json::array();
  for (const auto& [a, b] : g.bidirected()) doc["bidirected"].push_back({vs[a].name, vs[b].name});
  return doc;
}

inline Admg admg_from_json(const nlohmann::json& doc) {
  Admg g(detail::vertices_from_json(doc));
  const auto& vs = g.vertices();
  for (const auto& e : doc.at("directed")) {
    g.add_directed(detail::vertex_index(vs, e.at(0).get<std::string>()),
                   detail::vertex_index(vs, e.at(1).get<std::string>()));
  }
  for (const auto& e : doc.at("bidirected")) {
    g.add_bidirected(detail::vertex_index(vs, e.at(0).get<std::string>()),
                     detail::vertex_index(vs, e.at(1).get<std::string>()));
  }
  if (!g.is_acyclic()) throw Error(ErrorCode::InvalidArgument, "directed part of the model has a cycle");
  return g;
}

inline std::string to_dot(const Admg& g) {
  std::ostringstream os;
  os << "digraph admg {\n";
  for (const auto& v : g.vertices()) os << "  \"" << v.name << "\" [role=\"" << to_string(v.role) << "\"];\n";
  for (const auto& [a, b] : g.directed()) {
    os << "  \"" << g.vertices()[a].name << "\" -> \"" << g.vertices()[b].name << "\";\n";
  }
  for (const auto& [a, b] : g.bidirected()) {
    os << "  \"" << g.vertices()[a].name << "\" -> \"" << g.vertices()[b].name
       << "\" [style=dashed, dir=both];\n";
  }
  os << "}\n";
  return os.str();
}

// The PAG with the same edges: tails/arrows for directed edges, arrows at
// both ends for bidirected ones.
inline Pag to_pag(const Admg& g) {
  Pag pag(g.vertices());
  for (const auto& [a, b] : g.bidirected()) pag.add_edge(a, b, EdgeMark::Arrow, EdgeMark::Arrow);
  for (const auto& [a, b] : g.directed()) pag.add_edge(a, b, EdgeMark::Tail, EdgeMark::Arrow);
  return pag;
}

// ---------------------------------------------------------------------------
// Edge resolution

inline double entropy_threshold(double h_i, double h_j, double theta_ratio) {
  if (h_i < 0.0 || h_j < 0.0) throw Error(ErrorCode::InvalidArgument, "entropies must be non-negative");
  return theta_ratio * std::min(h_i, h_j);
}

enum class Resolution {
  CopiedDirected,
  CopiedBidirected,
  LatentConfounder,  // H(Z) < threshold
  Forward,           // u -> v
  Backward,          // v -> u
};

struct EdgeDecision {
  VarId u = 0;
  VarId v = 0;
  Resolution branch = Resolution::CopiedDirected;
  double h_u = 0.0;
  double h_v = 0.0;
  double h_latent = 0.0;
  double threshold = 0.0;
  double h_noise_forward = 0.0;   // H(E) for v = f(u, E)
  double h_noise_backward = 0.0;  // H(E^) for u = g(v, E^)
  std::string adjustment;         // non-empty when the emitted edge differs from `branch`
};

struct ResolveReport {
  std::vector<EdgeDecision> decisions;
  std::size_t rejected = 0;  // edges dropped because no admissible form exists
};

struct ResolveOptions {
  double theta_ratio = 0.8;
};

namespace detail {

class EdgeResolver {
 public:
  EdgeResolver(const Dataset& ds, const StructuralConstraints& sc, Admg& out, ResolveReport& report)
      : ds_(ds), sc_(sc), out_(out), report_(report) {}

  void emit_directed(VarId from, VarId to, EdgeDecision& d) {
    if (admissible(from, to)) {
      out_.add_directed(from, to);
      return;
    }
    const std::string why = sc_.direction_allowed(from, to) ? "would close a directed cycle"
                                                            : "violates a structural constraint";
    if (admissible(to, from)) {
      out_.add_directed(to, from);
      d.adjustment = name(from) + " -> " + name(to) + " " + why + "; emitted " + name(to) + " -> " + name(from);
    } else if (sc_.adjacency_allowed(from, to)) {
      out_.add_bidirected(from, to);
      d.adjustment = "neither direction admissible for " + name(from) + " - " + name(to) + "; emitted bidirected";
    } else {
      ++report_.rejected;
      d.adjustment = "edge " + name(from) + " - " + name(to) + " rejected";
    }
    logger().info("{}", d.adjustment);
  }

  void emit_bidirected(VarId u, VarId v, EdgeDecision& d) {
    if (sc_.adjacency_allowed(u, v)) {
      out_.add_bidirected(u, v);
    } else {
      ++report_.rejected;
      d.adjustment = "edge " + name(u) + " - " + name(v) + " rejected";
      logger().info("{}", d.adjustment);
    }
  }

 private:
  bool admissible(VarId from, VarId to) const { return sc_.direction_allowed(from, to) && !out_.reaches(to, from); }
  std::string name(VarId v) const { return ds_.meta(v).name; }

  const Dataset& ds_;
  const StructuralConstraints& sc_;
  Admg& out_;
  ResolveReport& report_;
};

}  // namespace detail

// Replaces every partially oriented PAG edge by a directed or bidirected one.
// `ds` must be discretized. Decided edges are copied first; the remaining
// edges are resolved in vertex order.
inline Admg resolve_edges(const Pag& pag, const Dataset& ds, const StructuralConstraints& sc,
                          const ResolveOptions& opt = {}, ResolveReport* report_out = nullptr) {
  if (!(opt.theta_ratio > 0.0 && opt.theta_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "theta_ratio must lie in (0, 1]");
  }
  if (pag.size() != ds.variable_count()) {
    throw Error(ErrorCode::SchemaMismatch, "graph and dataset have different vertex sets");
  }
  Admg out(ds.variables());
  ResolveReport local;
  ResolveReport& report = report_out ? *report_out : local;
  detail::EdgeResolver emit(ds, sc, out, report);

  auto decided = [](const Pag::Edge& e) {
    return e.mark_u != EdgeMark::Circle && e.mark_v != EdgeMark::Circle &&
           !(e.mark_u == EdgeMark::Tail && e.mark_v == EdgeMark::Tail);
  };
  const auto edges = pag.edges();
  for (const auto& e : edges) {
    if (!decided(e)) continue;
    EdgeDecision d;
    d.u = e.u;
    d.v = e.v;
    if (e.mark_u == EdgeMark::Arrow && e.mark_v == EdgeMark::Arrow) {
      d.branch = Resolution::CopiedBidirected;
      emit.emit_bidirected(e.u, e.v, d);
    } else {
      d.branch = Resolution::CopiedDirected;
      if (e.mark_v == EdgeMark::Arrow) {
        emit.emit_directed(e.u, e.v, d);
      } else {
        emit.emit_directed(e.v, e.u, d);
      }
    }
    report.decisions.push_back(std::move(d));
  }
  for (const auto& e : edges) {
    if (decided(e)) continue;
    EdgeDecision d;
    d.u = e.u;
    d.v = e.v;
    d.h_u = entropy_of(ds, {e.u});
    d.h_v = entropy_of(ds, {e.v});
    d.h_latent = min_entropy_latent(ds, e.u, e.v).latent_entropy_bits;
    d.threshold = entropy_threshold(d.h_u, d.h_v, opt.theta_ratio);
    if (d.h_latent < d.threshold) {
      d.branch = Resolution::LatentConfounder;
      emit.emit_bidirected(e.u, e.v, d);
    } else {
      d.h_noise_forward = conditional_entropy(ds, e.v, e.u);
      d.h_noise_backward = conditional_entropy(ds, e.u, e.v);
      if (d.h_noise_forward < d.h_noise_backward) {
        d.branch = Resolution::Forward;
        emit.emit_directed(e.u, e.v, d);
      } else {
        d.branch = Resolution::Backward;
        emit.emit_directed(e.v, e.u, d);
      }
    }
    report.decisions.push_back(std::move(d));
  }
  if (!out.is_acyclic()) throw Error(ErrorCode::InvalidArgument, "resolution produced a directed cycle");
  return out;
}

}  // namespace rca
