#pragma once

// Synthetic structural causal models with known answers: generation,
// observational and interventional sampling, fault ground truth, scoring, and
// the end-to-end benchmark comparing causal diagnosis against the baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/cbi.hpp"
#include "rca/dataset.hpp"
#include "rca/effects.hpp"
#include "rca/error.hpp"
#include "rca/resolve.hpp"
#include "rca/stats.hpp"

namespace rca {

enum class MechanismType {
  Linear,     // intercept + sum(coef * parent) + noise
  Threshold,  // 1 if the linear score is positive, else 0
  Levels,     // linear score mapped through the normal CDF onto 0..levels-1
};

inline std::string_view to_string(MechanismType t) {
  switch (t) {
    case MechanismType::Linear: return "linear";
    case MechanismType::Threshold: return "threshold";
    case MechanismType::Levels: return "levels";
  }
  return "?";
}

struct Mechanism {
  MechanismType type = MechanismType::Linear;
  double intercept = 0.0;
  double noise_sd = 1.0;
  double scale = 1.0;  // Levels: standard deviation of the linear score
  std::size_t levels = 0;
  std::vector<std::pair<VarId, double>> parents;
  std::vector<std::pair<std::size_t, double>> hidden;  // shared N(0, 1) confounders

  friend bool operator==(const Mechanism&, const Mechanism&) = default;
};

struct Scm {
  std::vector<VariableMeta> vertices;
  std::vector<Mechanism> mechanisms;
  std::size_t hidden_count = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return vertices.size(); }

  // Directed edges from mechanism parents; a bidirected edge for every pair
  // sharing a hidden confounder.
  Admg graph() const {
    Admg g(vertices);
    std::vector<std::vector<VarId>> children_of_hidden(hidden_count);
    for (VarId v = 0; v < size(); ++v) {
      for (const auto& [p, c] : mechanisms[v].parents) g.add_directed(p, v);
      for (const auto& [h, c] : mechanisms[v].hidden) children_of_hidden[h].push_back(v);
    }
    for (const auto& kids : children_of_hidden) {
      for (std::size_t i = 0; i < kids.size(); ++i) {
        for (std::size_t j = i + 1; j < kids.size(); ++j) g.add_bidirected(kids[i], kids[j]);
      }
    }
    return g;
  }

  std::vector<VarId> order() const {
    auto o = graph().topological_order();
    if (!o) throw Error(ErrorCode::InvalidArgument, "mechanisms form a directed cycle");
    return *o;
  }

  friend bool operator==(const Scm&, const Scm&) = default;
};

inline void validate(const Scm& scm) {
  if (scm.mechanisms.size() != scm.vertices.size()) {
    throw Error(ErrorCode::InvalidArgument, "every vertex needs exactly one mechanism");
  }
  for (VarId v = 0; v < scm.size(); ++v) {
    const auto& m = scm.mechanisms[v];
    const auto& meta = scm.vertices[v];
    for (const auto& [p, c] : m.parents) {
      if (p >= scm.size() || p == v) throw Error(ErrorCode::UnknownVertex, "bad parent of '" + meta.name + "'", meta.name);
    }
    for (const auto& [h, c] : m.hidden) {
      if (h >= scm.hidden_count) throw Error(ErrorCode::UnknownVertex, "bad confounder of '" + meta.name + "'", meta.name);
    }
    const bool kind_ok = (m.type == MechanismType::Linear && meta.kind == Kind::Continuous) ||
                         (m.type == MechanismType::Threshold && meta.kind == Kind::Boolean) ||
                         (m.type == MechanismType::Levels && meta.kind == Kind::Discrete && m.levels >= 2);
    if (!kind_ok) throw Error(ErrorCode::InvalidArgument, "mechanism does not match kind of '" + meta.name + "'", meta.name);
    if (!(m.noise_sd >= 0.0) || !(m.scale > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "bad noise or scale for '" + meta.name + "'", meta.name);
    }
  }
  (void)scm.order();
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Scm& scm) {
  nlohmann::json doc;
  doc["seed"] = scm.seed;
  doc["hidden_count"] = scm.hidden_count;
  doc["vertices"] = nlohmann::json::array();
  for (const auto& v : scm.vertices) {
    nlohmann::json entry{{"name", v.name}, {"role", to_string(v.role)}, {"kind", to_string(v.kind)}};
    if (!v.levels.empty()) entry["levels"] = v.levels;
    doc["vertices"].push_back(std::move(entry));
  }
  doc["mechanisms"] = nlohmann::json::array();
  for (VarId v = 0; v < scm.size(); ++v) {
    const auto& m = scm.mechanisms[v];
    nlohmann::json parents = nlohmann::json::array();
    for (const auto& [p, c] : m.parents) parents.push_back({{"vertex", scm.vertices[p].name}, {"coef", c}});
    nlohmann::json hidden = nlohmann::json::array();
    for (const auto& [h, c] : m.hidden) hidden.push_back({{"index", h}, {"coef", c}});
    doc["mechanisms"].push_back({{"vertex", scm.vertices[v].name},
                                 {"type", std::string(to_string(m.type))},
                                 {"intercept", m.intercept},
                                 {"noise_sd", m.noise_sd},
                                 {"scale", m.scale},
                                 {"levels", m.levels},
                                 {"parents", parents},
                                 {"hidden", hidden}});
  }
  return doc;
}

inline Scm scm_from_json(const nlohmann::json& doc) {
  try {
    Scm scm;
    scm.seed = doc.at("seed").get<std::uint64_t>();
    scm.hidden_count = doc.at("hidden_count").get<std::size_t>();
    scm.vertices = detail::vertices_from_json(doc);
    auto index = [&](const std::string& name) {
      for (VarId v = 0; v < scm.size(); ++v) {
        if (scm.vertices[v].name == name) return v;
      }
      throw Error(ErrorCode::UnknownVertex, "unknown vertex '" + name + "'", name);
    };
    scm.mechanisms.resize(scm.size());
    std::vector<bool> seen(scm.size(), false);
    for (const auto& jm : doc.at("mechanisms")) {
      VarId v = index(jm.at("vertex").get<std::string>());
      seen[v] = true;
      auto& m = scm.mechanisms[v];
      const auto type = jm.at("type").get<std::string>();
      if (type == "linear") {
        m.type = MechanismType::Linear;
      } else if (type == "threshold") {
        m.type = MechanismType::Threshold;
      } else if (type == "levels") {
        m.type = MechanismType::Levels;
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown mechanism type '" + type + "'", "type");
      }
      m.intercept = jm.at("intercept").get<double>();
      m.noise_sd = jm.at("noise_sd").get<double>();
      m.scale = jm.at("scale").get<double>();
      m.levels = jm.at("levels").get<std::size_t>();
      for (const auto& jp : jm.at("parents")) {
        m.parents.emplace_back(index(jp.at("vertex").get<std::string>()), jp.at("coef").get<double>());
      }
      for (const auto& jh : jm.at("hidden")) {
        m.hidden.emplace_back(jh.at("index").get<std::size_t>(), jh.at("coef").get<double>());
      }
    }
    for (VarId v = 0; v < scm.size(); ++v) {
      if (!seen[v]) throw Error(ErrorCode::InvalidArgument, "no mechanism for '" + scm.vertices[v].name + "'", scm.vertices[v].name);
    }
    validate(scm);
    return scm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed model description: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  auto rng = make_rng(seed, index + 0x5eed);
  return rng();
}

}  // namespace detail

// n rows from the model with the vertices in `assignments` held fixed.
// Every stream draws the same noise whatever the assignments are, so two
// interventions on one stream differ only through the intervened values.
inline Dataset intervene(const Scm& scm, const std::map<VarId, double>& assignments, std::size_t n,
                         std::uint64_t stream = 0) {
  for (const auto& [v, x] : assignments) {
    if (v >= scm.size()) throw Error(ErrorCode::UnknownVertex, "no vertex with index " + std::to_string(v));
  }
  const auto order = scm.order();
  auto rng = detail::make_rng(scm.seed, stream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> cols(scm.size(), std::vector<double>(n));
  std::vector<double> hidden(scm.hidden_count);
  std::vector<double> row(scm.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& h : hidden) h = normal(rng);
    for (VarId v : order) {
      const auto& m = scm.mechanisms[v];
      const double noise = normal(rng);
      if (auto it = assignments.find(v); it != assignments.end()) {
        row[v] = it->second;
        continue;
      }
      double lin = m.intercept + m.noise_sd * noise;
      for (const auto& [p, c] : m.parents) lin += c * row[p];
      for (const auto& [h, c] : m.hidden) lin += c * hidden[h];
      switch (m.type) {
        case MechanismType::Linear: row[v] = lin; break;
        case MechanismType::Threshold: row[v] = lin > 0.0 ? 1.0 : 0.0; break;
        case MechanismType::Levels: {
          auto level = static_cast<std::size_t>(normal_cdf(lin / m.scale) * static_cast<double>(m.levels));
          row[v] = static_cast<double>(std::min(level, m.levels - 1));
          break;
        }
      }
    }
    for (VarId v = 0; v < scm.size(); ++v) cols[v][r] = row[v];
  }
  return Dataset(scm.vertices, std::move(cols));
}

inline Dataset sample(const Scm& scm, std::size_t n, std::uint64_t stream = 0) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample size must be positive");
  return intervene(scm, {}, n, stream);
}

inline Dataset intervene(const Scm& scm, const std::map<std::string, double>& assignments, std::size_t n,
                         std::uint64_t stream = 0) {
  std::map<VarId, double> by_id;
  for (const auto& [name, x] : assignments) {
    auto it = std::find_if(scm.vertices.begin(), scm.vertices.end(), [&](const auto& m) { return m.name == name; });
    if (it == scm.vertices.end()) throw Error(ErrorCode::UnknownVertex, "unknown vertex '" + name + "'", name);
    by_id[static_cast<VarId>(it - scm.vertices.begin())] = x;
  }
  return intervene(scm, by_id, n, stream);
}

// Sum over directed paths of the product of edge coefficients.
inline double total_effect(const Scm& scm, VarId from, VarId to) {
  std::vector<double> eff(scm.size(), 0.0);
  eff[from] = 1.0;
  for (VarId v : scm.order()) {
    if (v == from) continue;
    for (const auto& [p, c] : scm.mechanisms[v].parents) eff[v] += c * eff[p];
  }
  return eff[to];
}

// Values a discrete vertex can take.
inline std::vector<double> vertex_levels(const Scm& scm, VarId v) {
  const auto& m = scm.mechanisms[v];
  if (m.type == MechanismType::Threshold) return {0.0, 1.0};
  if (m.type == MechanismType::Levels) {
    std::vector<double> out(m.levels);
    std::iota(out.begin(), out.end(), 0.0);
    return out;
  }
  throw Error(ErrorCode::InvalidArgument, "'" + scm.vertices[v].name + "' is not discrete", scm.vertices[v].name);
}

// Mean absolute gap of E[outcome | do(treatment = x)] over pairs of levels,
// by simulation with shared noise.
inline double oracle_ace(const Scm& scm, VarId treatment, VarId outcome, std::size_t n = 4000,
                         std::uint64_t stream = 1) {
  std::map<double, double> means;
  for (double x : vertex_levels(scm, treatment)) {
    auto ds = intervene(scm, std::map<VarId, double>{{treatment, x}}, n, stream);
    auto col = ds.column(outcome);
    means[x] = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
  }
  return mean_pairwise_gap(means);
}

// ---------------------------------------------------------------------------
// Generators

namespace detail {

inline VariableMeta make_meta(std::string name, Role role, Kind kind) {
  VariableMeta m;
  m.name = std::move(name);
  m.role = role;
  m.kind = kind;
  if (kind == Kind::Boolean) m.levels = {"false", "true"};
  return m;
}

inline double signed_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution flip(0.5);
  double x = mag(rng);
  return flip(rng) ? -x : x;
}

}  // namespace detail

// Random layered linear-Gaussian model: options feed metrics, metrics feed
// later metrics and objectives, each edge present with probability `density`.
// `confounders` hidden variables each join a random pair of non-option vertices.
inline Scm generate_scm(std::size_t n_options, std::size_t n_metrics, std::size_t n_objectives, double density,
                        double noise_scale, std::uint64_t seed, std::size_t confounders = 0) {
  if (n_options == 0 || n_metrics == 0 || n_objectives == 0) {
    throw Error(ErrorCode::InvalidArgument, "every layer needs at least one vertex");
  }
  if (!(density > 0.0 && density <= 1.0)) throw Error(ErrorCode::InvalidArgument, "density must lie in (0, 1]");
  Scm scm;
  scm.seed = seed;
  auto rng = detail::make_rng(seed, 0);
  std::bernoulli_distribution edge(density);
  for (std::size_t i = 0; i < n_options; ++i) {
    scm.vertices.push_back(detail::make_meta("o" + std::to_string(i), Role::ManipulableOption, Kind::Continuous));
  }
  for (std::size_t i = 0; i < n_metrics; ++i) {
    scm.vertices.push_back(detail::make_meta("m" + std::to_string(i), Role::NonManipulableMetric, Kind::Continuous));
  }
  for (std::size_t i = 0; i < n_objectives; ++i) {
    scm.vertices.push_back(detail::make_meta("y" + std::to_string(i), Role::PerformanceObjective, Kind::Continuous));
  }
  scm.mechanisms.resize(scm.size());
  for (auto& m : scm.mechanisms) m.noise_sd = noise_scale;
  const VarId first_metric = n_options;
  const VarId first_objective = n_options + n_metrics;
  for (VarId m = first_metric; m < first_objective; ++m) {
    for (VarId o = 0; o < n_options; ++o) {
      if (edge(rng)) scm.mechanisms[m].parents.emplace_back(o, detail::signed_uniform(rng, 0.5, 1.5));
    }
    for (VarId p = first_metric; p < m; ++p) {
      if (edge(rng)) scm.mechanisms[m].parents.emplace_back(p, detail::signed_uniform(rng, 0.5, 1.5));
    }
  }
  for (VarId y = first_objective; y < scm.size(); ++y) {
    for (VarId p = first_metric; p < first_objective; ++p) {
      if (edge(rng)) scm.mechanisms[y].parents.emplace_back(p, detail::signed_uniform(rng, 0.5, 1.5));
    }
  }
  if (confounders > 0 && scm.size() - n_options >= 2) {
    std::uniform_int_distribution<VarId> pick(first_metric, scm.size() - 1);
    for (std::size_t h = 0; h < confounders; ++h) {
      VarId a = pick(rng);
      VarId b = pick(rng);
      while (b == a) b = pick(rng);
      scm.mechanisms[a].hidden.emplace_back(h, detail::signed_uniform(rng, 0.5, 1.0));
      scm.mechanisms[b].hidden.emplace_back(h, detail::signed_uniform(rng, 0.5, 1.0));
    }
    scm.hidden_count = confounders;
  }
  return scm;
}

struct BenchmarkModel {
  Scm scm;
  VarId energy = 0;   // continuous objective, faulty above its 99th percentile
  VarId mission = 0;  // boolean objective, faulty when false
};

// One system of the diagnosis benchmark: 10 discrete options, 6 metrics and
// the two objectives. Each objective has 2 to 4 causal options, each acting
// through one metric. One or two decoy options share a hidden cause with a
// causal option but have no effect on either objective.
inline BenchmarkModel generate_benchmark_scm(std::uint64_t seed) {
  constexpr std::size_t n_options = 10;
  constexpr std::size_t n_metrics = 6;
  auto rng = detail::make_rng(seed, 0);
  BenchmarkModel out;
  Scm& scm = out.scm;
  scm.seed = seed;
  std::uniform_int_distribution<std::size_t> level_count(2, 4);
  for (std::size_t i = 0; i < n_options; ++i) {
    scm.vertices.push_back(detail::make_meta("opt" + std::to_string(i), Role::ManipulableOption, Kind::Discrete));
  }
  for (std::size_t i = 0; i < n_metrics; ++i) {
    scm.vertices.push_back(detail::make_meta("metric" + std::to_string(i), Role::NonManipulableMetric, Kind::Continuous));
  }
  scm.vertices.push_back(detail::make_meta("energy", Role::PerformanceObjective, Kind::Continuous));
  scm.vertices.push_back(detail::make_meta("mission", Role::PerformanceObjective, Kind::Boolean));
  out.energy = n_options + n_metrics;
  out.mission = out.energy + 1;
  scm.mechanisms.resize(scm.size());
  for (VarId o = 0; o < n_options; ++o) {
    auto& m = scm.mechanisms[o];
    m.type = MechanismType::Levels;
    m.levels = level_count(rng);
  }
  for (VarId v = n_options; v < scm.size(); ++v) scm.mechanisms[v].type = MechanismType::Linear;
  scm.mechanisms[out.mission].type = MechanismType::Threshold;

  std::vector<VarId> options(n_options);
  std::iota(options.begin(), options.end(), 0);
  std::shuffle(options.begin(), options.end(), rng);
  std::uniform_int_distribution<std::size_t> cause_count(2, 4);
  const std::size_t k_energy = cause_count(rng);
  const std::size_t k_mission = cause_count(rng);
  std::vector<VarId> energy_causes(options.begin(), options.begin() + k_energy);
  std::vector<VarId> mission_causes(options.begin() + k_energy, options.begin() + k_energy + k_mission);
  std::vector<VarId> rest(options.begin() + k_energy + k_mission, options.end());

  // metric0..1 drive energy, metric2..3 drive mission, metric4..5 are side metrics
  const VarId metric0 = n_options;
  auto attach = [&](const std::vector<VarId>& causes, VarId first_metric) {
    for (std::size_t i = 0; i < causes.size(); ++i) {
      scm.mechanisms[first_metric + i % 2].parents.emplace_back(causes[i], detail::signed_uniform(rng, 0.6, 1.4));
    }
  };
  attach(energy_causes, metric0);
  attach(mission_causes, metric0 + 2);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    scm.mechanisms[metric0 + 4 + i % 2].parents.emplace_back(rest[i], detail::signed_uniform(rng, 0.6, 1.4));
  }
  for (VarId m = metric0; m < metric0 + 2; ++m) {
    scm.mechanisms[out.energy].parents.emplace_back(m, std::uniform_real_distribution<double>(0.6, 1.2)(rng));
  }
  for (VarId m = metric0 + 2; m < metric0 + 4; ++m) {
    scm.mechanisms[out.mission].parents.emplace_back(m, std::uniform_real_distribution<double>(0.6, 1.2)(rng));
  }

  // decoys: the first one or two non-causal options, each tied to a causal one
  std::vector<VarId> causal = energy_causes;
  causal.insert(causal.end(), mission_causes.begin(), mission_causes.end());
  const std::size_t decoys = std::min<std::size_t>(rest.size(), std::bernoulli_distribution(0.5)(rng) ? 2 : 1);
  for (std::size_t i = 0; i < decoys; ++i) {
    VarId partner = causal[std::uniform_int_distribution<std::size_t>(0, causal.size() - 1)(rng)];
    scm.mechanisms[rest[i]].hidden.emplace_back(scm.hidden_count, 1.5);
    scm.mechanisms[partner].hidden.emplace_back(scm.hidden_count, 1.5);
    ++scm.hidden_count;
  }
  for (VarId o = 0; o < n_options; ++o) {
    auto& m = scm.mechanisms[o];
    double var = m.noise_sd * m.noise_sd;
    for (const auto& [h, c] : m.hidden) var += c * c;
    m.scale = std::sqrt(var);
  }

  // mission succeeds about 75% of the time
  auto level_mean = [&](VarId o) { return (static_cast<double>(scm.mechanisms[o].levels) - 1.0) / 2.0; };
  auto level_var = [&](VarId o) {
    const double l = static_cast<double>(scm.mechanisms[o].levels);
    return (l * l - 1.0) / 12.0;
  };
  double mean = 0.0;
  double var = 1.0;
  for (const auto& [metric, b] : scm.mechanisms[out.mission].parents) {
    double m_mean = 0.0;
    double m_var = 1.0;
    for (const auto& [o, a] : scm.mechanisms[metric].parents) {
      m_mean += a * level_mean(o);
      m_var += a * a * level_var(o);
    }
    mean += b * m_mean;
    var += b * b * m_var;
  }
  scm.mechanisms[out.mission].intercept = -mean + 0.67 * std::sqrt(var);
  return out;
}

// Three-tier model with one objective whose causal options have clearly
// separated effect sizes, weakest first in `ordered_causes`.
struct TieredModel {
  Scm scm;
  VarId objective = 0;
  std::vector<VarId> ordered_causes;
};

inline TieredModel generate_tiered_scm(std::uint64_t seed) {
  auto rng = detail::make_rng(seed, 0);
  TieredModel out;
  Scm& scm = out.scm;
  scm.seed = seed;
  constexpr std::size_t n_causes = 4;
  constexpr std::size_t n_options = 6;
  for (std::size_t i = 0; i < n_options; ++i) {
    scm.vertices.push_back(detail::make_meta("opt" + std::to_string(i), Role::ManipulableOption, Kind::Discrete));
  }
  for (std::size_t i = 0; i < n_causes; ++i) {
    scm.vertices.push_back(detail::make_meta("metric" + std::to_string(i), Role::NonManipulableMetric, Kind::Continuous));
  }
  scm.vertices.push_back(detail::make_meta("latency", Role::PerformanceObjective, Kind::Continuous));
  out.objective = scm.size() - 1;
  scm.mechanisms.resize(scm.size());
  for (VarId o = 0; o < n_options; ++o) {
    scm.mechanisms[o].type = MechanismType::Levels;
    scm.mechanisms[o].levels = 3;
  }
  std::vector<VarId> options(n_options);
  std::iota(options.begin(), options.end(), 0);
  std::shuffle(options.begin(), options.end(), rng);
  // tier strengths grow by a factor of two or more
  const double base[n_causes] = {0.4, 0.9, 1.8, 3.6};
  for (std::size_t i = 0; i < n_causes; ++i) {
    const VarId metric = n_options + i;
    const double a = base[i] * std::uniform_real_distribution<double>(0.85, 1.15)(rng);
    scm.mechanisms[metric].parents.emplace_back(options[i], a);
    scm.mechanisms[out.objective].parents.emplace_back(metric, 1.0);
    out.ordered_causes.push_back(options[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth and scoring

struct FaultTruth {
  VarId objective = 0;
  std::vector<std::size_t> fault_rows;
  std::vector<VarId> true_root_causes;
  std::map<VarId, double> true_aces;  // oracle ACE of each root cause on the objective
};

struct GroundTruth {
  std::vector<FaultTruth> faults;
};

// Options with a nonzero total effect on `objective`.
inline std::vector<VarId> true_root_causes(const Scm& scm, VarId objective) {
  std::vector<VarId> out;
  for (VarId v = 0; v < scm.size(); ++v) {
    if (scm.vertices[v].role == Role::ManipulableOption && std::abs(total_effect(scm, v, objective)) > 1e-6) {
      out.push_back(v);
    }
  }
  return out;
}

// One fault per objective, at most n_faults of them. Boolean objectives fail
// on false, others above the 99th percentile.
inline GroundTruth curate_ground_truth(const Scm& scm, const Dataset& ds, std::size_t n_faults,
                                       std::size_t oracle_samples = 4000) {
  if (ds.variable_count() != scm.size()) throw Error(ErrorCode::SchemaMismatch, "dataset was not sampled from this model");
  GroundTruth truth;
  for (VarId y = 0; y < scm.size() && truth.faults.size() < n_faults; ++y) {
    if (scm.vertices[y].role != Role::PerformanceObjective) continue;
    FaultTruth f;
    f.objective = y;
    auto labels = label_faults(ds, y);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r]) f.fault_rows.push_back(r);
    }
    if (f.fault_rows.empty()) {
      throw Error(ErrorCode::NoFaultyRows, "no faulty rows for '" + scm.vertices[y].name + "'; sample more data",
                  scm.vertices[y].name);
    }
    f.true_root_causes = true_root_causes(scm, y);
    for (auto o : f.true_root_causes) {
      f.true_aces[o] = scm.mechanisms[o].type == MechanismType::Linear
                           ? std::abs(total_effect(scm, o, y))
                           : oracle_ace(scm, o, y, oracle_samples);
    }
    truth.faults.push_back(std::move(f));
  }
  return truth;
}

struct EvalReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  double rmse = 0.0;
  std::size_t rmse_terms = 0;

  void finish() {
    const auto total = static_cast<double>(tp + fp + tn + fn);
    accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
    precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
};

// Confusion counts over `option_universe`. The RMSE pairs the i-th true cause
// (by decreasing oracle ACE) with the i-th predicted one; a missing partner
// counts as 0.
inline EvalReport evaluate(const Diagnosis& pred, const FaultTruth& truth, const std::vector<VarId>& option_universe,
                           const std::map<VarId, double>& predicted_aces = {}) {
  if (pred.fault_objective != truth.objective) {
    throw Error(ErrorCode::ObjectiveMismatch, "diagnosis and ground truth concern different objectives");
  }
  EvalReport r;
  auto in = [](const std::vector<VarId>& xs, VarId x) { return std::find(xs.begin(), xs.end(), x) != xs.end(); };
  for (auto o : option_universe) {
    const bool p = in(pred.root_causes, o);
    const bool t = in(truth.true_root_causes, o);
    r.tp += p && t;
    r.fp += p && !t;
    r.fn += !p && t;
    r.tn += !p && !t;
  }
  r.finish();
  std::vector<double> truth_values;
  for (auto o : truth.true_root_causes) {
    auto it = truth.true_aces.find(o);
    truth_values.push_back(it == truth.true_aces.end() ? 0.0 : it->second);
  }
  std::sort(truth_values.rbegin(), truth_values.rend());
  std::vector<double> predicted_values;
  for (auto o : pred.root_causes) {
    auto it = predicted_aces.find(o);
    predicted_values.push_back(it == predicted_aces.end() ? 0.0 : it->second);
  }
  const std::size_t n = std::max(truth_values.size(), predicted_values.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i < truth_values.size() ? truth_values[i] : 0.0;
    const double p = i < predicted_values.size() ? predicted_values[i] : 0.0;
    sq += (t - p) * (t - p);
  }
  r.rmse_terms = n;
  r.rmse = n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
  return r;
}

// Pools confusion counts and squared errors.
inline EvalReport aggregate(const std::vector<EvalReport>& reports) {
  EvalReport total;
  double sq = 0.0;
  for (const auto& r : reports) {
    total.tp += r.tp;
    total.fp += r.fp;
    total.tn += r.tn;
    total.fn += r.fn;
    sq += r.rmse * r.rmse * static_cast<double>(r.rmse_terms);
    total.rmse_terms += r.rmse_terms;
  }
  total.finish();
  total.rmse = total.rmse_terms > 0 ? std::sqrt(sq / static_cast<double>(total.rmse_terms)) : 0.0;
  return total;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"tp", r.tp},           {"fp", r.fp},       {"tn", r.tn},         {"fn", r.fn},
          {"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"rmse", r.rmse}};
}

// Objective variance when only `perturbed` options vary; every other option is
// held at its middle level.
inline double perturbation_variance(const Scm& scm, const std::vector<VarId>& perturbed, VarId objective,
                                    std::size_t n, std::uint64_t stream = 7) {
  std::map<VarId, double> fixed;
  for (VarId v = 0; v < scm.size(); ++v) {
    if (scm.vertices[v].role != Role::ManipulableOption) continue;
    if (std::find(perturbed.begin(), perturbed.end(), v) != perturbed.end()) continue;
    const auto& m = scm.mechanisms[v];
    fixed[v] = m.type == MechanismType::Levels ? std::floor(static_cast<double>(m.levels - 1) / 2.0) : 0.0;
  }
  auto ds = intervene(scm, fixed, n, stream);
  auto col = ds.column(objective);
  const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : col) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(n - 1);
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchConfig {
  std::size_t systems = 10;  // two faults each
  std::size_t samples = 2000;
  std::size_t top_k = 4;
  double ci_level = 0.95;
  LearnConfig learn;
  std::size_t transfer_initial = 500;
  std::vector<std::size_t> transfer_batches{500, 1000, 2000, 4000};
};

struct FaultResult {
  std::size_t system = 0;
  std::string objective;
  std::vector<std::string> truth;
  Diagnosis care;
  Diagnosis cbi;
  std::vector<std::string> care_causes;
  std::vector<std::string> cbi_causes;
  EvalReport care_eval;
  EvalReport cbi_eval;
};

struct TransferPoint {
  std::size_t samples = 0;
  double rmse = 0.0;
};

struct BenchResult {
  std::uint64_t seed = 0;
  std::vector<FaultResult> faults;
  EvalReport care;
  EvalReport cbi;
  std::vector<TransferPoint> transfer;
};

namespace detail {

// Backdoor estimate of each root cause's effect on the objective; 0 where the
// learned model does not identify it.
inline std::map<VarId, double> estimate_cause_aces(const Dataset& ds, const Admg* g, const std::vector<VarId>& causes,
                                                   VarId objective, std::size_t bins) {
  std::map<VarId, double> out;
  EffectOptions opt{bins};
  for (auto c : causes) {
    if (g == nullptr) {
      out[c] = mean_pairwise_gap(interventional_means(ds, c, objective, {}, opt));
      continue;
    }
    try {
      out[c] = ace_edge(ds, *g, c, objective, opt).value;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnidentifiableEffect) throw;
      out[c] = 0.0;
    }
  }
  return out;
}

inline std::vector<std::string> names_of(const std::vector<VariableMeta>& vs, const std::vector<VarId>& ids) {
  std::vector<std::string> out;
  for (auto i : ids) out.push_back(vs[i].name);
  return out;
}

}  // namespace detail

// RMSE of the learned effects on the energy objective against a shifted model
// in which one causal option's effect grew, as batches from it arrive.
inline std::vector<TransferPoint> run_transfer(std::uint64_t seed, const BenchConfig& cfg = {}) {
  auto source = generate_benchmark_scm(detail::derive_seed(seed, 1000));
  Scm shifted = source.scm;
  auto rng = detail::make_rng(seed, 99);
  const VarId y = source.energy;
  auto causes = true_root_causes(shifted, y);
  const VarId moved = causes[std::uniform_int_distribution<std::size_t>(0, causes.size() - 1)(rng)];
  for (auto& m : shifted.mechanisms) {
    if (m.type != MechanismType::Linear) continue;
    for (auto& [p, c] : m.parents) {
      if (p == moved) c *= std::uniform_real_distribution<double>(2.0, 3.0)(rng);
    }
  }
  std::map<VarId, double> oracle;
  for (auto o : causes) oracle[o] = oracle_ace(shifted, o, y);

  auto data = sample(source.scm, cfg.transfer_initial, 10);
  auto model = learn_model(data, cfg.learn);
  std::vector<TransferPoint> series;
  std::uint64_t stream = 11;
  for (auto batch_size : cfg.transfer_batches) {
    auto batch = sample(shifted, batch_size, stream++);
    model = update_model(model, data, batch, cfg.learn);
    data = concat(data, batch);
    auto est = detail::estimate_cause_aces(data, &model.admg, causes, y, cfg.learn.bins);
    double sq = 0.0;
    for (auto o : causes) sq += (oracle[o] - est[o]) * (oracle[o] - est[o]);
    series.push_back({data.sample_count(), std::sqrt(sq / static_cast<double>(causes.size()))});
  }
  return series;
}

// Twenty faults from `cfg.systems` generated systems, each diagnosed by the
// causal method and the baseline, plus the transfer series.
inline BenchResult run_benchmark(std::uint64_t seed, const BenchConfig& cfg = {}) {
  BenchResult out;
  out.seed = seed;
  std::vector<EvalReport> care_reports;
  std::vector<EvalReport> cbi_reports;
  for (std::size_t s = 0; s < cfg.systems; ++s) {
    auto bm = generate_benchmark_scm(detail::derive_seed(seed, s));
    auto ds = sample(bm.scm, cfg.samples);
    auto truth = curate_ground_truth(bm.scm, ds, 2);
    auto model = learn_model(ds, cfg.learn);
    auto options = ds.with_role(Role::ManipulableOption);
    for (const auto& fault : truth.faults) {
      FaultResult fr;
      fr.system = s;
      fr.objective = ds.meta(fault.objective).name;
      fr.truth = detail::names_of(ds.variables(), fault.true_root_causes);
      try {
        fr.care = diagnose(ds, model.admg, fault.objective, cfg.top_k, EffectOptions{cfg.learn.bins});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoPathsFound) throw;
        fr.care.fault_objective = fault.objective;
        fr.care.warnings.push_back(e.what());
      }
      fr.cbi = cbi_diagnose(ds, fault.objective, cfg.top_k, cfg.ci_level, cfg.learn.bins);
      auto care_aces =
          detail::estimate_cause_aces(ds, &model.admg, fr.care.root_causes, fault.objective, cfg.learn.bins);
      auto cbi_aces = detail::estimate_cause_aces(ds, nullptr, fr.cbi.root_causes, fault.objective, cfg.learn.bins);
      fr.care_causes = detail::names_of(ds.variables(), fr.care.root_causes);
      fr.cbi_causes = detail::names_of(ds.variables(), fr.cbi.root_causes);
      fr.care_eval = evaluate(fr.care, fault, options, care_aces);
      fr.cbi_eval = evaluate(fr.cbi, fault, options, cbi_aces);
      care_reports.push_back(fr.care_eval);
      cbi_reports.push_back(fr.cbi_eval);
      out.faults.push_back(std::move(fr));
    }
  }
  out.care = aggregate(care_reports);
  out.cbi = aggregate(cbi_reports);
  if (!cfg.transfer_batches.empty()) out.transfer = run_transfer(seed, cfg);
  return out;
}

inline nlohmann::json to_json(const BenchResult& b) {
  nlohmann::json doc;
  doc["seed"] = b.seed;
  doc["care"] = to_json(b.care);
  doc["cbi"] = to_json(b.cbi);
  doc["faults"] = nlohmann::json::array();
  for (const auto& f : b.faults) {
    doc["faults"].push_back({{"system", f.system},
                             {"objective", f.objective},
                             {"truth", f.truth},
                             {"care", {{"root_causes", f.care_causes}, {"eval", to_json(f.care_eval)}}},
                             {"cbi", {{"root_causes", f.cbi_causes}, {"eval", to_json(f.cbi_eval)}}}});
  }
  doc["transfer"] = nlohmann::json::array();
  for (const auto& p : b.transfer) doc["transfer"].push_back({{"samples", p.samples}, {"rmse", p.rmse}});
  return doc;
}

}  // namespace rca
