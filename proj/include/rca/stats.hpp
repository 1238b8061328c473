#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rca/dataset.hpp"
#include "rca/error.hpp"

namespace rca {

struct CiTestResult {
  VarId x = 0;
  VarId y = 0;
  std::vector<VarId> conditioning_set;
  double statistic = 0.0;
  double p_value = 1.0;
  bool independent = true;

  friend bool operator==(const CiTestResult&, const CiTestResult&) = default;
};

struct EntropyEstimate {
  std::vector<VarId> variables;
  double value_bits = 0.0;
  std::size_t support_size = 1;
};

// Standard normal CDF. std::erfc is accurate to a few ulp over the whole real
// line, so tail probabilities keep full relative precision.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Two-sided tail 2(1 - Phi(|z|)) without cancellation.
inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

// Pearson correlation matrix of the given columns. Zero-variance columns get
// unit diagonal and zero off-diagonal entries.
inline Eigen::MatrixXd correlation_matrix(const Dataset& ds, std::span<const VarId> ids) {
  const std::size_t k = ids.size();
  const std::size_t n = ds.sample_count();
  Eigen::MatrixXd centered(n, k);
  for (std::size_t j = 0; j < k; ++j) {
    auto col = ds.column(ids[j]);
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered(r, j) = col[r] - mean;
  }
  Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double denom = sd(i) * sd(j);
      const double c = denom > 0.0 ? cov(i, j) / denom : 0.0;
      corr(i, j) = corr(j, i) = std::clamp(c, -1.0, 1.0);
    }
  }
  return corr;
}

inline Eigen::MatrixXd correlation_matrix(const Dataset& ds) {
  std::vector<VarId> all(ds.variable_count());
  for (VarId i = 0; i < all.size(); ++i) all[i] = i;
  return correlation_matrix(ds, all);
}

// Partial correlation of rows/cols (x, y) of `corr` given `cond`, via the
// Schur complement of the conditioning block.
inline double partial_correlation(const Eigen::MatrixXd& corr, VarId x, VarId y, std::span<const VarId> cond) {
  if (x == y) return 1.0;
  const auto k = static_cast<Eigen::Index>(cond.size());
  if (k == 0) return std::clamp(corr(x, y), -1.0, 1.0);
  Eigen::MatrixXd cc(k, k);
  Eigen::MatrixXd ac(2, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) cc(i, j) = corr(cond[i], cond[j]);
    ac(0, i) = corr(x, cond[i]);
    ac(1, i) = corr(y, cond[i]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cc);
  lu.setThreshold(1e-10);
  if (lu.rank() < k) {
    throw Error(ErrorCode::SingularCovariance, "conditioning set is collinear");
  }
  Eigen::MatrixXd resid = ac * lu.solve(ac.transpose());
  const double sxx = corr(x, x) - resid(0, 0);
  const double syy = corr(y, y) - resid(1, 1);
  const double sxy = corr(x, y) - resid(0, 1);
  if (sxx <= 1e-14 || syy <= 1e-14) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double partial_correlation(const Dataset& ds, VarId x, VarId y, std::span<const VarId> cond) {
  if (x == y) return 1.0;
  if (ds.sample_count() < cond.size() + 4) {
    throw Error(ErrorCode::InsufficientSamples, "too few samples for the conditioning set");
  }
  std::vector<VarId> ids{x, y};
  ids.insert(ids.end(), cond.begin(), cond.end());
  auto corr = correlation_matrix(ds, ids);
  std::vector<VarId> local(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) local[i] = i + 2;
  return partial_correlation(corr, 0, 1, local);
}

// Fisher-z transform of a (partial) correlation observed on n samples with
// a conditioning set of size k.
inline CiTestResult fisher_z(double rho, std::size_t n, std::size_t k, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (n <= k + 3) throw Error(ErrorCode::InsufficientSamples, "need more than |cond| + 3 samples");
  CiTestResult r;
  if (std::abs(rho) >= 1.0) {
    r.statistic = rho > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    r.independent = false;
    return r;
  }
  r.statistic = std::sqrt(static_cast<double>(n - k - 3)) * std::atanh(rho);
  r.p_value = std::clamp(two_sided_normal_p(r.statistic), 0.0, 1.0);
  r.independent = r.p_value > alpha;
  return r;
}

namespace detail {

inline std::vector<VarId> canonical_set(std::span<const VarId> cond) {
  std::vector<VarId> out(cond.begin(), cond.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

// Fisher-z conditional independence tests against one dataset. The
// correlation matrix is computed once; each test only touches a small block.
class CiTester {
 public:
  CiTester(const Dataset& ds, double alpha)
      : corr_(correlation_matrix(ds)), n_(ds.sample_count()), alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }

  CiTestResult test(VarId x, VarId y, std::span<const VarId> cond) const {
    auto set = detail::canonical_set(cond);
    if (x > y) std::swap(x, y);
    if (n_ <= set.size() + 3) throw Error(ErrorCode::InsufficientSamples, "need more than |cond| + 3 samples");
    const double rho = partial_correlation(corr_, x, y, set);
    auto r = fisher_z(rho, n_, set.size(), alpha_);
    r.x = x;
    r.y = y;
    r.conditioning_set = std::move(set);
    return r;
  }

  double alpha() const { return alpha_; }
  std::size_t sample_count() const { return n_; }

 private:
  Eigen::MatrixXd corr_;
  std::size_t n_;
  double alpha_;
};

inline CiTestResult fisher_z_test(const Dataset& ds, VarId x, VarId y, std::span<const VarId> cond, double alpha) {
  auto set = detail::canonical_set(cond);
  if (x > y) std::swap(x, y);
  if (ds.sample_count() <= set.size() + 3) {
    throw Error(ErrorCode::InsufficientSamples, "need more than |cond| + 3 samples");
  }
  auto r = fisher_z(partial_correlation(ds, x, y, set), ds.sample_count(), set.size(), alpha);
  r.x = x;
  r.y = y;
  r.conditioning_set = std::move(set);
  return r;
}

// ---------------------------------------------------------------------------
// Entropy

// Shannon entropy in bits of a count vector.
inline double entropy_bits(std::span<const double> masses) {
  double total = 0.0;
  for (double m : masses) total += m;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double m : masses) {
    if (m > 0.0) {
      const double p = m / total;
      h -= p * std::log2(p);
    }
  }
  return std::max(h, 0.0);
}

namespace detail {

inline void require_discrete(const Dataset& ds, std::span<const VarId> vars) {
  for (auto v : vars) {
    if (!ds.meta(v).is_discrete()) {
      throw Error(ErrorCode::NonDiscreteVariable, "'" + ds.meta(v).name + "' is continuous; discretize first",
                  ds.meta(v).name);
    }
  }
}

inline std::map<std::vector<double>, std::size_t> joint_counts(const Dataset& ds, std::span<const VarId> vars) {
  std::map<std::vector<double>, std::size_t> counts;
  std::vector<double> key(vars.size());
  for (std::size_t r = 0; r < ds.sample_count(); ++r) {
    for (std::size_t i = 0; i < vars.size(); ++i) key[i] = ds.at(r, vars[i]);
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

// Plug-in entropy of the empirical joint distribution of `vars`.
inline EntropyEstimate entropy(const Dataset& ds, std::span<const VarId> vars) {
  if (vars.empty()) throw Error(ErrorCode::InvalidArgument, "entropy needs at least one variable");
  detail::require_discrete(ds, vars);
  auto counts = detail::joint_counts(ds, vars);
  std::vector<double> masses;
  masses.reserve(counts.size());
  for (const auto& [key, c] : counts) masses.push_back(static_cast<double>(c));
  EntropyEstimate e;
  e.variables.assign(vars.begin(), vars.end());
  e.value_bits = entropy_bits(masses);
  e.support_size = std::max<std::size_t>(counts.size(), 1);
  return e;
}

inline double entropy_of(const Dataset& ds, std::initializer_list<VarId> vars) {
  std::vector<VarId> v(vars);
  return entropy(ds, v).value_bits;
}

// H(target | given) = H(target, given) - H(given).
inline double conditional_entropy(const Dataset& ds, VarId target, VarId given) {
  return std::max(entropy_of(ds, {target, given}) - entropy_of(ds, {given}), 0.0);
}

// ---------------------------------------------------------------------------
// Minimum-entropy latent construction

// Result of coupling the conditional rows p(y | x = a) through one latent Z
// independent of x. `assignment[a][z]` is the y-index row a emits in state z.
struct Coupling {
  std::vector<double> latent_mass;
  std::vector<std::vector<std::size_t>> assignment;

  double entropy() const { return entropy_bits(latent_mass); }
};

// Greedy coupling: each latent state takes the largest remaining cell of every
// row, with mass equal to the smallest of those maxima.
inline Coupling greedy_coupling(std::vector<std::vector<double>> rows, double tolerance = 1e-14) {
  Coupling out;
  out.assignment.resize(rows.size());
  if (rows.empty()) return out;
  for (auto& row : rows) {
    double total = 0.0;
    for (double v : row) total += v;
    if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "coupling rows must carry positive mass");
    for (double& v : row) v /= total;
  }
  std::vector<std::size_t> argmax(rows.size());
  while (true) {
    double step = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const auto& row = rows[a];
      argmax[a] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      step = std::min(step, row[argmax[a]]);
    }
    if (step <= tolerance) break;
    out.latent_mass.push_back(step);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      rows[a][argmax[a]] -= step;
      out.assignment[a].push_back(argmax[a]);
    }
  }
  return out;
}

struct JointCell {
  double x = 0.0;
  double y = 0.0;
  std::size_t z = 0;
  double probability = 0.0;
};

struct LatentConstruction {
  double latent_entropy_bits = 0.0;
  std::vector<JointCell> joint;  // q(x, y, Z), nonzero cells only
};

// Builds a latent Z with y = f(x, Z), Z independent of x, keeping H(Z) small.
// The joint q(x, y, Z) marginalizes back to the empirical p(x, y).
inline LatentConstruction min_entropy_latent(const Dataset& ds, VarId x, VarId y) {
  const VarId pair[2] = {x, y};
  detail::require_discrete(ds, pair);
  std::map<double, std::size_t> x_index;
  std::map<double, std::size_t> y_index;
  for (std::size_t r = 0; r < ds.sample_count(); ++r) {
    x_index.emplace(ds.at(r, x), 0);
    y_index.emplace(ds.at(r, y), 0);
  }
  std::vector<double> x_values;
  std::vector<double> y_values;
  for (auto& [v, i] : x_index) {
    i = x_values.size();
    x_values.push_back(v);
  }
  for (auto& [v, i] : y_index) {
    i = y_values.size();
    y_values.push_back(v);
  }
  LatentConstruction out;
  const double n = static_cast<double>(ds.sample_count());
  std::vector<std::vector<double>> counts(x_values.size(), std::vector<double>(y_values.size(), 0.0));
  for (std::size_t r = 0; r < ds.sample_count(); ++r) {
    counts[x_index[ds.at(r, x)]][y_index[ds.at(r, y)]] += 1.0;
  }
  if (x_values.size() < 2 || y_values.size() < 2) {
    // A constant variable needs no latent randomness.
    for (std::size_t a = 0; a < x_values.size(); ++a) {
      for (std::size_t b = 0; b < y_values.size(); ++b) {
        if (counts[a][b] > 0) out.joint.push_back({x_values[a], y_values[b], 0, counts[a][b] / n});
      }
    }
    return out;
  }
  auto coupling = greedy_coupling(counts);
  out.latent_entropy_bits = coupling.entropy();
  for (std::size_t a = 0; a < x_values.size(); ++a) {
    double row_total = 0.0;
    for (double c : counts[a]) row_total += c;
    const double px = row_total / n;
    for (std::size_t z = 0; z < coupling.latent_mass.size(); ++z) {
      out.joint.push_back({x_values[a], y_values[coupling.assignment[a][z]], z, px * coupling.latent_mass[z]});
    }
  }
  return out;
}

}  // namespace rca
