#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rca/dataset.hpp"
#include "rca/resolve.hpp"

namespace rca::testkit {

struct Column {
  std::string name;
  Role role;
  Kind kind;
  std::vector<double> values;
};

inline Dataset make_dataset(std::vector<Column> cols) {
  std::vector<VariableMeta> vars;
  std::vector<std::vector<double>> data;
  for (auto& c : cols) {
    VariableMeta m;
    m.name = c.name;
    m.role = c.role;
    m.kind = c.kind;
    if (c.kind == Kind::Boolean) m.levels = {"false", "true"};
    vars.push_back(m);
    data.push_back(std::move(c.values));
  }
  return Dataset(std::move(vars), std::move(data));
}

inline VariableMeta meta(std::string name, Role role, Kind kind = Kind::Continuous) {
  VariableMeta m;
  m.name = std::move(name);
  m.role = role;
  m.kind = kind;
  return m;
}

// Solves a small dense system by Gauss-Jordan elimination with partial pivoting.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

// Residuals of an ordinary least-squares fit of y on the given columns plus an intercept.
inline std::vector<double> ols_residuals(const std::vector<double>& y, const std::vector<std::vector<double>>& xs) {
  const std::size_t p = xs.size() + 1;
  const std::size_t n = y.size();
  auto design = [&](std::size_t j, std::size_t r) { return j == 0 ? 1.0 : xs[j - 1][r]; };
  std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      xty[i] += design(i, r) * y[r];
      for (std::size_t j = 0; j < p; ++j) xtx[i][j] += design(i, r) * design(j, r);
    }
  }
  auto beta = solve(xtx, xty);
  std::vector<double> res(n);
  for (std::size_t r = 0; r < n; ++r) {
    double fit = 0.0;
    for (std::size_t j = 0; j < p; ++j) fit += beta[j] * design(j, r);
    res[r] = y[r] - fit;
  }
  return res;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// m-connection by enumerating simple paths: a path is open when every
// collider is an ancestor of the conditioning set (or in it) and no
// non-collider is conditioned on.
inline bool m_connected_by_paths(const Admg& g, VarId x, VarId y, const std::vector<VarId>& z) {
  const std::size_t n = g.size();
  std::vector<bool> in_z(n, false);
  for (auto v : z) in_z[v] = true;
  std::vector<bool> anc_z(n, false);
  for (VarId v = 0; v < n; ++v) {
    for (auto t : z) {
      if (v == t || g.reaches(v, t)) anc_z[v] = true;
    }
  }
  struct Step {
    VarId to;
    bool head_here;   // arrowhead at the current vertex
    bool head_there;  // arrowhead at `to`
  };
  std::vector<std::vector<Step>> adj(n);
  for (const auto& [a, b] : g.directed()) {
    adj[a].push_back({b, false, true});
    adj[b].push_back({a, true, false});
  }
  for (const auto& [a, b] : g.bidirected()) {
    adj[a].push_back({b, true, true});
    adj[b].push_back({a, true, true});
  }
  std::vector<bool> on_path(n, false);
  std::function<bool(VarId, bool)> walk = [&](VarId v, bool head_in) {
    if (v == y) return true;
    on_path[v] = true;
    for (const auto& s : adj[v]) {
      if (on_path[s.to]) continue;
      if (v != x) {
        const bool collider = head_in && s.head_here;
        if (collider && !anc_z[v]) continue;
        if (!collider && in_z[v]) continue;
      }
      if (walk(s.to, s.head_there)) {
        on_path[v] = false;
        return true;
      }
    }
    on_path[v] = false;
    return false;
  };
  return walk(x, false);
}

}  // namespace rca::testkit
