#pragma once

// Predicate-based statistical debugging, used as a correlational baseline for
// the causal diagnosis.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rca/dataset.hpp"
#include "rca/effects.hpp"
#include "rca/error.hpp"

namespace rca {

enum class Relation { GreaterThan, LessThan, Equals, InBin };

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::GreaterThan: return ">";
    case Relation::LessThan: return "<=";
    case Relation::Equals: return "==";
    case Relation::InBin: return "in";
  }
  return "?";
}

struct Predicate {
  VarId variable = 0;
  Relation relation = Relation::Equals;
  double threshold = 0.0;
  std::size_t observed_count = 0;
  std::size_t observed_true_count = 0;
  std::size_t failing_true_count = 0;
  std::size_t failing_observed_count = 0;

  bool holds(double x) const {
    switch (relation) {
      case Relation::GreaterThan: return x > threshold;
      case Relation::LessThan: return x <= threshold;
      case Relation::Equals: return x == threshold;
      case Relation::InBin: return false;
    }
    return false;
  }
};

// Faulty rows of an objective: false values for a boolean objective, values
// above the given quantile otherwise.
inline std::vector<bool> label_faults(const Dataset& ds, VarId objective, double quantile = 0.99) {
  auto col = ds.column(objective);
  std::vector<bool> out(col.size(), false);
  if (ds.meta(objective).kind == Kind::Boolean) {
    for (std::size_t r = 0; r < col.size(); ++r) out[r] = col[r] == 0.0;
    return out;
  }
  if (col.empty()) return out;
  std::vector<double> sorted(col.begin(), col.end());
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(sorted.size())));
  const double cut = sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  for (std::size_t r = 0; r < col.size(); ++r) out[r] = col[r] > cut;
  return out;
}

namespace detail {

inline void count_predicate(Predicate& p, std::span<const double> col, const std::vector<bool>& faults) {
  p.observed_count = col.size();
  for (std::size_t r = 0; r < col.size(); ++r) {
    const bool t = p.holds(col[r]);
    p.observed_true_count += t;
    p.failing_observed_count += faults[r];
    p.failing_true_count += t && faults[r];
  }
}

}  // namespace detail

// Equals predicates for each level of a discrete variable; for continuous
// variables a `> edge` predicate and its `<= edge` complement at each interior
// bin edge.
inline std::vector<Predicate> mine_predicates(const Dataset& ds, const std::vector<bool>& fault_labels,
                                              std::size_t bins = 5) {
  if (fault_labels.size() != ds.sample_count()) {
    throw Error(ErrorCode::InvalidArgument, "fault labels must have one entry per sample");
  }
  std::vector<Predicate> out;
  for (VarId v = 0; v < ds.variable_count(); ++v) {
    const auto& meta = ds.meta(v);
    if (meta.role == Role::PerformanceObjective) continue;
    auto col = ds.column(v);
    std::vector<Predicate> preds;
    if (meta.is_discrete()) {
      std::vector<double> values(col.begin(), col.end());
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      if (meta.kind == Kind::Boolean) values = {0.0, 1.0};
      for (double x : values) preds.push_back({v, Relation::Equals, x});
    } else {
      auto d = fit_discretization(col, meta.name, BinStrategy::EqualFrequency, bins);
      for (std::size_t k = 1; k + 1 < d.bin_edges.size(); ++k) {
        preds.push_back({v, Relation::GreaterThan, d.bin_edges[k]});
        preds.push_back({v, Relation::LessThan, d.bin_edges[k]});
      }
    }
    for (auto& p : preds) {
      detail::count_predicate(p, col, fault_labels);
      out.push_back(p);
    }
  }
  return out;
}

inline double failure_score(const Predicate& p) {
  if (p.observed_true_count == 0) return 0.0;
  return static_cast<double>(p.failing_true_count) / static_cast<double>(p.observed_true_count);
}

inline double context_score(const Predicate& p) {
  if (p.observed_count == 0) return 0.0;
  return static_cast<double>(p.failing_observed_count) / static_cast<double>(p.observed_count);
}

inline double increase_score(const Predicate& p) { return failure_score(p) - context_score(p); }

// Harmonic mean of Increase and log(F)/log(NumF), where F counts failing runs
// with the predicate true and NumF all failing runs. Zero unless the lower
// confidence bound on Increase is positive.
inline double importance(const Predicate& p, double ci_level = 0.95) {
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw Error(ErrorCode::InvalidArgument, "ci_level must lie in (0, 1)");
  if (p.observed_count < 5 || p.observed_true_count == 0) return 0.0;
  const double failure = failure_score(p);
  const double context = context_score(p);
  const double increase = failure - context;
  if (increase <= 0.0) return 0.0;
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + ci_level / 2.0);
  const double se = std::sqrt(failure * (1.0 - failure) / static_cast<double>(p.observed_true_count) +
                              context * (1.0 - context) / static_cast<double>(p.observed_count));
  if (increase - z * se <= 0.0) return 0.0;
  const auto f = static_cast<double>(p.failing_true_count);
  const auto num_f = static_cast<double>(p.failing_observed_count);
  double coverage = 0.0;
  if (num_f > 1.0) {
    coverage = f > 0.0 ? std::log(f) / std::log(num_f) : 0.0;
  } else if (f == num_f && f > 0.0) {
    coverage = 1.0;
  }
  if (coverage <= 0.0) return 0.0;
  return 2.0 / (1.0 / increase + 1.0 / coverage);
}

struct OptionScore {
  VarId option = 0;
  double score = 0.0;
  std::optional<Predicate> best;
};

// Options by their best predicate's Importance, highest first; ties by name.
inline std::vector<OptionScore> cbi_rank(const Dataset& ds, const std::vector<bool>& fault_labels,
                                         double ci_level = 0.95, std::size_t bins = 5) {
  auto preds = mine_predicates(ds, fault_labels, bins);
  std::vector<OptionScore> out;
  for (auto o : ds.with_role(Role::ManipulableOption)) {
    OptionScore s{o, 0.0, std::nullopt};
    for (const auto& p : preds) {
      if (p.variable != o) continue;
      double imp = importance(p, ci_level);
      if (imp > s.score) {
        s.score = imp;
        s.best = p;
      }
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [&](const OptionScore& a, const OptionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return ds.meta(a.option).name < ds.meta(b.option).name;
  });
  return out;
}

// The baseline's answer in the same shape as a causal diagnosis: each ranked
// option is a one-vertex path scored by its Importance. Options scoring 0 are
// not reported.
inline Diagnosis cbi_diagnose(const Dataset& ds, VarId objective, std::size_t top_k, double ci_level = 0.95,
                              std::size_t bins = 5, double quantile = 0.99) {
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  Diagnosis d;
  d.fault_objective = objective;
  d.method = "cbi";
  auto labels = label_faults(ds, objective, quantile);
  if (std::none_of(labels.begin(), labels.end(), [](bool b) { return b; })) {
    d.warnings.push_back("no faulty rows for '" + ds.meta(objective).name + "'");
  }
  for (const auto& s : cbi_rank(ds, labels, ci_level, bins)) {
    if (d.ranked_paths.size() >= top_k || s.score <= 0.0) break;
    d.ranked_paths.push_back({{s.option}, s.score, {}});
    d.root_causes.push_back(s.option);
  }
  return d;
}

}  // namespace rca
