#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/error.hpp"
#include "rca/log.hpp"
#include "rca/stats.hpp"

namespace rca {

enum class EdgeMark : std::uint8_t { Tail, Arrow, Circle };

inline std::string_view to_string(EdgeMark m) {
  switch (m) {
    case EdgeMark::Tail: return "tail";
    case EdgeMark::Arrow: return "arrow";
    case EdgeMark::Circle: return "circle";
  }
  return "?";
}

inline EdgeMark parse_mark(std::string_view s) {
  if (s == "tail") return EdgeMark::Tail;
  if (s == "arrow") return EdgeMark::Arrow;
  if (s == "circle") return EdgeMark::Circle;
  throw Error(ErrorCode::InvalidArgument, "unknown edge mark '" + std::string(s) + "'");
}

using VarPair = std::pair<VarId, VarId>;

inline VarPair unordered(VarId a, VarId b) { return a < b ? VarPair{a, b} : VarPair{b, a}; }

// ---------------------------------------------------------------------------
// Structural constraints

struct StructuralConstraints {
  // Ordered pairs that may not be adjacent at all; stored in both orders.
  std::set<VarPair> forbidden_edges;
  // (u, v): u may not be a cause of v.
  std::set<VarPair> forbidden_directions;
  std::vector<std::string> required_absences;

  bool adjacency_allowed(VarId u, VarId v) const { return u != v && !forbidden_edges.contains({u, v}); }
  bool direction_allowed(VarId u, VarId v) const {
    return adjacency_allowed(u, v) && !forbidden_directions.contains({u, v});
  }
};

// Role-derived rules of the three-layer model: options are exogenous and
// unconnected, objectives cause nothing.
inline StructuralConstraints build_constraints(std::span<const VariableMeta> vars) {
  StructuralConstraints sc;
  sc.required_absences = {
      "no edge between two options",
      "no edge directed into an option",
      "no edge directed from an objective into a metric",
      "no edge directed from an objective into another objective",
  };
  for (VarId u = 0; u < vars.size(); ++u) {
    for (VarId v = 0; v < vars.size(); ++v) {
      if (u == v) continue;
      const Role ru = vars[u].role;
      const Role rv = vars[v].role;
      if (ru == Role::ManipulableOption && rv == Role::ManipulableOption) {
        sc.forbidden_edges.insert({u, v});
        continue;
      }
      if (rv == Role::ManipulableOption || ru == Role::PerformanceObjective) {
        sc.forbidden_directions.insert({u, v});
      }
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Partial ancestral graph

class Pag {
 public:
  struct Edge {
    VarId u = 0;
    VarId v = 0;
    EdgeMark mark_u = EdgeMark::Circle;
    EdgeMark mark_v = EdgeMark::Circle;
    friend bool operator==(const Edge&, const Edge&) = default;
  };

  Pag() = default;
  explicit Pag(std::vector<VariableMeta> vertices)
      : vertices_(std::move(vertices)), marks_(vertices_.size() * vertices_.size(), kNone) {}

  const std::vector<VariableMeta>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  bool adjacent(VarId u, VarId v) const { return marks_[u * size() + v] != kNone; }

  // Mark at `v` on the edge u - v.
  EdgeMark mark(VarId u, VarId v) const { return static_cast<EdgeMark>(marks_[u * size() + v]); }

  void add_edge(VarId u, VarId v, EdgeMark at_u = EdgeMark::Circle, EdgeMark at_v = EdgeMark::Circle) {
    if (u == v) throw Error(ErrorCode::InvalidArgument, "self-loops are not allowed");
    marks_[v * size() + u] = static_cast<std::int8_t>(at_u);
    marks_[u * size() + v] = static_cast<std::int8_t>(at_v);
  }

  void remove_edge(VarId u, VarId v) {
    marks_[u * size() + v] = kNone;
    marks_[v * size() + u] = kNone;
  }

  // Sets the mark at `v` on the existing edge u - v.
  void set_mark(VarId u, VarId v, EdgeMark m) { marks_[u * size() + v] = static_cast<std::int8_t>(m); }

  std::vector<VarId> neighbors(VarId v) const {
    std::vector<VarId> out;
    for (VarId w = 0; w < size(); ++w) {
      if (adjacent(v, w)) out.push_back(w);
    }
    return out;
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (VarId u = 0; u < size(); ++u) {
      for (VarId v = u + 1; v < size(); ++v) {
        if (adjacent(u, v)) out.push_back({u, v, mark(v, u), mark(u, v)});
      }
    }
    return out;
  }

  std::size_t edge_count() const { return edges().size(); }

  std::map<VarPair, std::vector<VarId>>& sepsets() { return sepsets_; }
  const std::map<VarPair, std::vector<VarId>>& sepsets() const { return sepsets_; }

  const std::vector<VarId>* sepset(VarId a, VarId b) const {
    auto it = sepsets_.find(unordered(a, b));
    return it == sepsets_.end() ? nullptr : &it->second;
  }

  std::vector<std::string>& conflicts() { return conflicts_; }
  const std::vector<std::string>& conflicts() const { return conflicts_; }

  friend bool operator==(const Pag& a, const Pag& b) {
    return a.vertices_ == b.vertices_ && a.marks_ == b.marks_ && a.sepsets_ == b.sepsets_;
  }

 private:
  static constexpr std::int8_t kNone = -1;
  std::vector<VariableMeta> vertices_;
  std::vector<std::int8_t> marks_;
  std::map<VarPair, std::vector<VarId>> sepsets_;
  std::vector<std::string> conflicts_;
};

inline nlohmann::json to_json(const Pag& pag) {
  const auto& vs = pag.vertices();
  nlohmann::json doc;
  doc["vertices"] = nlohmann::json::array();
  for (const auto& v : vs) {
    doc["vertices"].push_back({{"name", v.name}, {"role", to_string(v.role)}, {"kind", to_string(v.kind)}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : pag.edges()) {
    doc["edges"].push_back({{"u", vs[e.u].name},
                            {"v", vs[e.v].name},
                            {"mark_u", to_string(e.mark_u)},
                            {"mark_v", to_string(e.mark_v)}});
  }
  doc["sepsets"] = nlohmann::json::array();
  for (const auto& [pair, set] : pag.sepsets()) {
    nlohmann::json names = nlohmann::json::array();
    for (auto s : set) names.push_back(vs[s].name);
    doc["sepsets"].push_back({{"u", vs[pair.first].name}, {"v", vs[pair.second].name}, {"set", names}});
  }
  doc["conflicts"] = pag.conflicts();
  return doc;
}

namespace detail {

inline std::vector<VariableMeta> vertices_from_json(const nlohmann::json& doc) {
  std::vector<VariableMeta> vs;
  for (const auto& v : doc.at("vertices")) {
    VariableMeta m;
    m.name = v.at("name").get<std::string>();
    auto role = parse_role(v.at("role").get<std::string>());
    auto kind = parse_kind(v.at("kind").get<std::string>());
    if (!role || !kind) throw Error(ErrorCode::InvalidArgument, "bad vertex entry '" + m.name + "'", m.name);
    m.role = *role;
    m.kind = *kind;
    if (v.contains("levels")) m.levels = v["levels"].get<std::vector<std::string>>();
    if (m.kind == Kind::Boolean && m.levels.empty()) m.levels = {"false", "true"};
    vs.push_back(std::move(m));
  }
  return vs;
}

inline VarId vertex_index(const std::vector<VariableMeta>& vs, const std::string& name) {
  for (VarId i = 0; i < vs.size(); ++i) {
    if (vs[i].name == name) return i;
  }
  throw Error(ErrorCode::UnknownVertex, "unknown vertex '" + name + "'", name);
}

}  // namespace detail

inline Pag pag_from_json(const nlohmann::json& doc) {
  Pag pag(detail::vertices_from_json(doc));
  const auto& vs = pag.vertices();
  for (const auto& e : doc.at("edges")) {
    pag.add_edge(detail::vertex_index(vs, e.at("u").get<std::string>()),
                 detail::vertex_index(vs, e.at("v").get<std::string>()),
                 parse_mark(e.at("mark_u").get<std::string>()), parse_mark(e.at("mark_v").get<std::string>()));
  }
  if (doc.contains("sepsets")) {
    for (const auto& s : doc["sepsets"]) {
      std::vector<VarId> set;
      for (const auto& n : s.at("set")) set.push_back(detail::vertex_index(vs, n.get<std::string>()));
      pag.sepsets()[unordered(detail::vertex_index(vs, s.at("u").get<std::string>()),
                              detail::vertex_index(vs, s.at("v").get<std::string>()))] = set;
    }
  }
  if (doc.contains("conflicts")) pag.conflicts() = doc["conflicts"].get<std::vector<std::string>>();
  return pag;
}

inline std::string to_dot(const Pag& pag) {
  auto style = [](EdgeMark m) {
    switch (m) {
      case EdgeMark::Tail: return "none";
      case EdgeMark::Arrow: return "normal";
      case EdgeMark::Circle: return "odot";
    }
    return "none";
  };
  auto glyph = [](EdgeMark m, bool left) {
    switch (m) {
      case EdgeMark::Tail: return std::string("-");
      case EdgeMark::Arrow: return std::string(left ? "<" : ">");
      case EdgeMark::Circle: return std::string("o");
    }
    return std::string("-");
  };
  std::ostringstream os;
  os << "digraph pag {\n";
  for (const auto& v : pag.vertices()) os << "  \"" << v.name << "\" [role=\"" << to_string(v.role) << "\"];\n";
  for (const auto& e : pag.edges()) {
    os << "  \"" << pag.vertices()[e.u].name << "\" -> \"" << pag.vertices()[e.v].name
       << "\" [dir=both, arrowtail=" << style(e.mark_u) << ", arrowhead=" << style(e.mark_v) << ", label=\""
       << glyph(e.mark_u, true) << "-" << glyph(e.mark_v, false) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// FCI

struct FciOptions {
  double alpha = 0.05;
  std::size_t max_cond_size = 3;
  bool possible_dsep = true;
};

// Separating sets carried over from an earlier run, used by warm starts.
struct WarmStart {
  const Pag* previous = nullptr;
};

namespace detail {

// Calls `visit` for each size-k subset of `items` in lexicographic order until
// it returns true. Returns whether any call returned true.
inline bool for_each_subset(std::span<const VarId> items, std::size_t k,
                            const std::function<bool(const std::vector<VarId>&)>& visit) {
  if (k > items.size()) return false;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  std::vector<VarId> subset(k);
  while (true) {
    for (std::size_t i = 0; i < k; ++i) subset[i] = items[idx[i]];
    if (visit(subset)) return true;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == items.size() - k + (i - 1)) --i;
    if (i == 0) return false;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

class FciRunner {
 public:
  FciRunner(const Dataset& ds, const StructuralConstraints& sc, const FciOptions& opt)
      : ds_(ds), sc_(sc), opt_(opt), tester_(ds, opt.alpha), pag_(ds.variables()) {}

  Pag run(const WarmStart& warm) {
    const std::size_t n = ds_.variable_count();
    for (VarId u = 0; u < n; ++u) {
      for (VarId v = u + 1; v < n; ++v) {
        if (sc_.adjacency_allowed(u, v) && sc_.adjacency_allowed(v, u)) pag_.add_edge(u, v);
      }
    }
    if (warm.previous) retest_previous(*warm.previous);
    skeleton();
    reset_marks();
    orient_unshielded_colliders();
    if (opt_.possible_dsep) {
      if (possible_dsep_pass()) {
        reset_marks();
        orient_unshielded_colliders();
      }
    }
    apply_rules();
    apply_constraints();
    return std::move(pag_);
  }

 private:
  // Independence given `cond`; collinear conditioning sets count as dependent.
  bool separates(VarId x, VarId y, const std::vector<VarId>& cond) {
    try {
      return tester_.test(x, y, cond).independent;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SingularCovariance) return false;
      throw;
    }
  }

  void record_sepset(VarId x, VarId y, const std::vector<VarId>& cond) {
    auto set = cond;
    std::sort(set.begin(), set.end());
    pag_.sepsets()[unordered(x, y)] = std::move(set);
  }

  void retest_previous(const Pag& previous) {
    for (const auto& [pair, set] : previous.sepsets()) {
      if (pair.first >= pag_.size() || pair.second >= pag_.size()) continue;
      if (!pag_.adjacent(pair.first, pair.second)) continue;
      if (set.size() <= opt_.max_cond_size && separates(pair.first, pair.second, set)) {
        pag_.remove_edge(pair.first, pair.second);
        record_sepset(pair.first, pair.second, set);
      }
    }
  }

  // PC-stable adjacency search: neighbour sets are frozen per subset size so
  // the outcome does not depend on the order edges are visited in.
  void skeleton() {
    const std::size_t n = pag_.size();
    for (std::size_t level = 0; level <= opt_.max_cond_size; ++level) {
      std::vector<std::vector<VarId>> frozen(n);
      for (VarId v = 0; v < n; ++v) frozen[v] = pag_.neighbors(v);
      bool testable = false;
      for (VarId x = 0; x < n; ++x) {
        for (VarId y = x + 1; y < n; ++y) {
          if (!pag_.adjacent(x, y)) continue;
          for (VarId side : {x, y}) {
            const VarId other = side == x ? y : x;
            std::vector<VarId> candidates;
            for (auto w : frozen[side]) {
              if (w != other) candidates.push_back(w);
            }
            if (candidates.size() < level) continue;
            testable = true;
            bool removed = for_each_subset(candidates, level, [&](const std::vector<VarId>& s) {
              if (!separates(x, y, s)) return false;
              pag_.remove_edge(x, y);
              record_sepset(x, y, s);
              return true;
            });
            if (removed) break;
          }
        }
      }
      if (!testable) break;
    }
  }

  void reset_marks() {
    for (const auto& e : pag_.edges()) pag_.add_edge(e.u, e.v, EdgeMark::Circle, EdgeMark::Circle);
    apply_constraints();
  }

  // Background knowledge: when u may not cause v, the edge carries an
  // arrowhead at u.
  void apply_constraints() {
    for (const auto& [u, v] : sc_.forbidden_directions) {
      if (!pag_.adjacent(u, v)) continue;
      if (pag_.mark(v, u) == EdgeMark::Tail) {
        log_conflict(u, v);
      }
      pag_.set_mark(v, u, EdgeMark::Arrow);
    }
  }

  void log_conflict(VarId u, VarId v) {
    std::string msg = "orientation " + pag_.vertices()[u].name + " -> " + pag_.vertices()[v].name +
                      " violates a structural constraint; rejected";
    logger().warn("{}", msg);
    pag_.conflicts().push_back(std::move(msg));
  }

  // Pairs the constraints keep apart were never tested; as exogenous options
  // they are treated as marginally separated.
  const std::vector<VarId>* sepset_or_empty(VarId a, VarId b) const {
    static const std::vector<VarId> kEmpty;
    if (const auto* s = pag_.sepset(a, b)) return s;
    if (!sc_.adjacency_allowed(a, b)) return &kEmpty;
    return nullptr;
  }

  // Sets the mark at `v` on edge u - v, refusing tails that would make v a
  // cause of u against the constraints.
  bool orient(VarId u, VarId v, EdgeMark m) {
    if (pag_.mark(u, v) == m) return false;
    if (m == EdgeMark::Tail && !sc_.direction_allowed(v, u)) {
      log_conflict(v, u);
      return false;
    }
    pag_.set_mark(u, v, m);
    return true;
  }

  void orient_unshielded_colliders() {
    const std::size_t n = pag_.size();
    for (VarId b = 0; b < n; ++b) {
      auto nb = pag_.neighbors(b);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        for (std::size_t j = i + 1; j < nb.size(); ++j) {
          const VarId a = nb[i];
          const VarId c = nb[j];
          if (pag_.adjacent(a, c)) continue;
          const auto* sep = sepset_or_empty(a, c);
          if (!sep || std::find(sep->begin(), sep->end(), b) != sep->end()) continue;
          orient(a, b, EdgeMark::Arrow);
          orient(c, b, EdgeMark::Arrow);
        }
      }
    }
  }

  std::vector<VarId> possible_dsep(VarId a) const {
    const std::size_t n = pag_.size();
    std::vector<bool> in_set(n, false);
    std::set<VarPair> seen;
    std::deque<VarPair> queue;
    for (auto b : pag_.neighbors(a)) {
      in_set[b] = true;
      queue.push_back({a, b});
      seen.insert({a, b});
    }
    while (!queue.empty()) {
      auto [x, y] = queue.front();
      queue.pop_front();
      for (auto z : pag_.neighbors(y)) {
        if (z == x || z == a) continue;
        const bool collider = pag_.mark(x, y) == EdgeMark::Arrow && pag_.mark(z, y) == EdgeMark::Arrow;
        if (!collider && !pag_.adjacent(x, z)) continue;
        if (seen.insert({y, z}).second) {
          in_set[z] = true;
          queue.push_back({y, z});
        }
      }
    }
    std::vector<VarId> out;
    for (VarId v = 0; v < n; ++v) {
      if (in_set[v] && v != a) out.push_back(v);
    }
    return out;
  }

  bool possible_dsep_pass() {
    const std::size_t n = pag_.size();
    std::vector<std::vector<VarId>> pdsep(n);
    for (VarId v = 0; v < n; ++v) pdsep[v] = possible_dsep(v);
    bool removed_any = false;
    for (const auto& e : pag_.edges()) {
      for (VarId side : {e.u, e.v}) {
        const VarId other = side == e.u ? e.v : e.u;
        std::vector<VarId> candidates;
        for (auto w : pdsep[side]) {
          if (w != other) candidates.push_back(w);
        }
        const auto neighbors = pag_.neighbors(side);
        bool removed = false;
        for (std::size_t level = 1; level <= opt_.max_cond_size && !removed; ++level) {
          removed = for_each_subset(candidates, level, [&](const std::vector<VarId>& s) {
            // Subsets of the adjacency set were already covered by the skeleton search.
            const bool all_adjacent = std::all_of(s.begin(), s.end(), [&](VarId w) {
              return std::find(neighbors.begin(), neighbors.end(), w) != neighbors.end();
            });
            if (all_adjacent || !separates(e.u, e.v, s)) return false;
            pag_.remove_edge(e.u, e.v);
            record_sepset(e.u, e.v, s);
            return true;
          });
        }
        if (removed) {
          removed_any = true;
          break;
        }
      }
    }
    return removed_any;
  }

  bool is_arrow(VarId u, VarId v) const { return pag_.adjacent(u, v) && pag_.mark(u, v) == EdgeMark::Arrow; }
  bool is_tail(VarId u, VarId v) const { return pag_.adjacent(u, v) && pag_.mark(u, v) == EdgeMark::Tail; }
  bool is_circle(VarId u, VarId v) const { return pag_.adjacent(u, v) && pag_.mark(u, v) == EdgeMark::Circle; }
  // u -> v
  bool directed(VarId u, VarId v) const { return is_tail(v, u) && is_arrow(u, v); }

  bool rule1() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId b = 0; b < n; ++b) {
      for (auto a : pag_.neighbors(b)) {
        if (!is_arrow(a, b)) continue;
        for (auto c : pag_.neighbors(b)) {
          if (c == a || pag_.adjacent(a, c) || !is_circle(c, b)) continue;
          changed |= orient(c, b, EdgeMark::Tail);
          changed |= orient(b, c, EdgeMark::Arrow);
        }
      }
    }
    return changed;
  }

  bool rule2() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId a = 0; a < n; ++a) {
      for (auto c : pag_.neighbors(a)) {
        if (!is_circle(a, c)) continue;
        for (auto b : pag_.neighbors(a)) {
          if (b == c || !pag_.adjacent(b, c)) continue;
          const bool first = directed(a, b) && is_arrow(b, c);
          const bool second = is_arrow(a, b) && directed(b, c);
          if (first || second) {
            changed |= orient(a, c, EdgeMark::Arrow);
            break;
          }
        }
      }
    }
    return changed;
  }

  bool rule3() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId b = 0; b < n; ++b) {
      auto nb = pag_.neighbors(b);
      for (auto d : nb) {
        if (!is_circle(d, b)) continue;
        for (std::size_t i = 0; i < nb.size(); ++i) {
          for (std::size_t j = i + 1; j < nb.size(); ++j) {
            const VarId a = nb[i];
            const VarId c = nb[j];
            if (a == d || c == d || pag_.adjacent(a, c)) continue;
            if (!is_arrow(a, b) || !is_arrow(c, b)) continue;
            if (!is_circle(a, d) || !is_circle(c, d)) continue;
            changed |= orient(d, b, EdgeMark::Arrow);
          }
        }
      }
    }
    return changed;
  }

  // Discriminating paths <theta, ..., alpha, beta, gamma> for beta.
  bool rule4() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId gamma = 0; gamma < n; ++gamma) {
      for (auto beta : pag_.neighbors(gamma)) {
        if (!is_circle(gamma, beta)) continue;
        for (auto alpha : pag_.neighbors(beta)) {
          if (alpha == gamma || !directed(alpha, gamma) || !is_arrow(beta, alpha)) continue;
          auto theta = find_discriminating_start(alpha, beta, gamma);
          if (!theta) continue;
          const auto* sep = sepset_or_empty(*theta, gamma);
          if (!sep) continue;
          if (std::find(sep->begin(), sep->end(), beta) != sep->end()) {
            changed |= orient(gamma, beta, EdgeMark::Tail);
            changed |= orient(beta, gamma, EdgeMark::Arrow);
          } else {
            changed |= orient(gamma, beta, EdgeMark::Arrow);
            changed |= orient(beta, gamma, EdgeMark::Arrow);
            changed |= orient(alpha, beta, EdgeMark::Arrow);
            changed |= orient(beta, alpha, EdgeMark::Arrow);
          }
          if (changed) return true;
        }
      }
    }
    return changed;
  }

  std::optional<VarId> find_discriminating_start(VarId alpha, VarId beta, VarId gamma) const {
    const std::size_t n = pag_.size();
    std::vector<bool> visited(n, false);
    visited[alpha] = visited[beta] = visited[gamma] = true;
    std::deque<VarId> queue{alpha};
    while (!queue.empty()) {
      const VarId v = queue.front();
      queue.pop_front();
      for (auto w : pag_.neighbors(v)) {
        if (visited[w] || !is_arrow(w, v)) continue;
        if (!pag_.adjacent(w, gamma)) return w;
        if (directed(w, gamma) && is_arrow(v, w)) {
          visited[w] = true;
          queue.push_back(w);
        }
      }
    }
    return std::nullopt;
  }

  bool rule8() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId a = 0; a < n; ++a) {
      for (auto c : pag_.neighbors(a)) {
        if (!(is_circle(c, a) && is_arrow(a, c))) continue;
        for (auto b : pag_.neighbors(a)) {
          if (b == c || !directed(b, c)) continue;
          const bool a_to_b = directed(a, b);
          const bool a_circle_to_b = is_tail(b, a) && is_circle(a, b);
          if (a_to_b || a_circle_to_b) {
            changed |= orient(c, a, EdgeMark::Tail);
            break;
          }
        }
      }
    }
    return changed;
  }

  bool potentially_directed(VarId u, VarId v) const {
    return pag_.adjacent(u, v) && pag_.mark(v, u) != EdgeMark::Arrow && pag_.mark(u, v) != EdgeMark::Tail;
  }

  // Second vertices of uncovered potentially directed paths from `from` to
  // `to` that avoid `avoid`.
  std::set<VarId> uncovered_pd_starts(VarId from, VarId to, VarId avoid) const {
    std::set<VarId> starts;
    const std::size_t n = pag_.size();
    std::vector<bool> on_path(n, false);
    on_path[from] = true;
    on_path[avoid] = true;
    std::function<bool(VarId, VarId)> extend = [&](VarId prev, VarId cur) -> bool {
      if (cur == to) return true;
      for (auto next : pag_.neighbors(cur)) {
        if (on_path[next] && next != to) continue;
        if (next == prev || pag_.adjacent(prev, next) || !potentially_directed(cur, next)) continue;
        if (next == to) return true;
        on_path[next] = true;
        const bool ok = extend(cur, next);
        on_path[next] = false;
        if (ok) return true;
      }
      return false;
    };
    for (auto first : pag_.neighbors(from)) {
      if (first == avoid || !potentially_directed(from, first)) continue;
      if (first == to) {
        starts.insert(first);
        continue;
      }
      on_path[first] = true;
      if (extend(from, first)) starts.insert(first);
      on_path[first] = false;
    }
    return starts;
  }

  bool rule9() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId a = 0; a < n; ++a) {
      for (auto c : pag_.neighbors(a)) {
        if (!(is_circle(c, a) && is_arrow(a, c))) continue;
        // Uncovered p.d. path <a, b, ..., c> whose second vertex b is not adjacent to c.
        auto starts = uncovered_pd_starts(a, c, a);
        for (auto b : starts) {
          if (b != c && !pag_.adjacent(b, c)) {
            changed |= orient(c, a, EdgeMark::Tail);
            break;
          }
        }
      }
    }
    return changed;
  }

  bool rule10() {
    bool changed = false;
    const std::size_t n = pag_.size();
    for (VarId a = 0; a < n; ++a) {
      for (auto c : pag_.neighbors(a)) {
        if (!(is_circle(c, a) && is_arrow(a, c))) continue;
        std::vector<VarId> parents;
        for (auto p : pag_.neighbors(c)) {
          if (p != a && directed(p, c)) parents.push_back(p);
        }
        bool done = false;
        for (std::size_t i = 0; i < parents.size() && !done; ++i) {
          for (std::size_t j = i + 1; j < parents.size() && !done; ++j) {
            auto mus = uncovered_pd_starts(a, parents[i], c);
            auto omegas = uncovered_pd_starts(a, parents[j], c);
            for (auto mu : mus) {
              for (auto omega : omegas) {
                if (mu != omega && !pag_.adjacent(mu, omega)) {
                  changed |= orient(c, a, EdgeMark::Tail);
                  done = true;
                  break;
                }
              }
              if (done) break;
            }
          }
        }
      }
    }
    return changed;
  }

  void apply_rules() {
    bool changed = true;
    std::size_t rounds = 0;
    while (changed) {
      changed = false;
      changed |= rule1();
      changed |= rule2();
      changed |= rule3();
      changed |= rule4();
      if (!changed) {
        changed |= rule8();
        changed |= rule9();
        changed |= rule10();
      }
      if (++rounds > 10 * pag_.size() * pag_.size() + 100) {
        logger().warn("orientation rules did not reach a fixpoint; stopping");
        break;
      }
    }
  }

  const Dataset& ds_;
  const StructuralConstraints& sc_;
  FciOptions opt_;
  CiTester tester_;
  Pag pag_;
};

}  // namespace detail

// Constraint-based structure search over `ds` honouring `sc`. Continuous and
// integer-coded columns are all tested with Fisher-z.
inline Pag fci(const Dataset& ds, const StructuralConstraints& sc, const FciOptions& opt = {},
               const WarmStart& warm = {}) {
  detail::FciRunner runner(ds, sc, opt);
  return runner.run(warm);
}

}  // namespace rca
