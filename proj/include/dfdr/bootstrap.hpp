#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dfdr/common.hpp"
#include "dfdr/matrix.hpp"
#include "dfdr/parallel.hpp"
#include "dfdr/rng.hpp"

namespace dfdr {

struct BootstrapPlan {
  std::size_t replications = 1000;
  /// Expected block length of the stationary bootstrap, in days.
  double mean_block = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (replications < 1) throw ConfigError("bootstrap: replications must be >= 1");
    if (!(mean_block >= 1.0)) throw ConfigError("bootstrap: mean block length must be >= 1");
  }
};

enum class Statistic { Sharpe, MeanExcess };

/// Fills `out` with one stationary-bootstrap resample of indices into [0, n).
/// Blocks start uniformly, continue circularly with probability 1 - 1/mean_block
/// and restart otherwise. The draw depends only on (seed, replication).
inline void stationary_bootstrap_row(std::span<std::uint32_t> out, std::size_t n, double mean_block,
                                     std::uint64_t seed, std::uint64_t replication) {
  if (out.empty()) return;
  Engine eng = make_engine(seed, replication);
  std::uniform_int_distribution<std::uint32_t> start(0, static_cast<std::uint32_t>(n - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double restart = 1.0 / mean_block;
  std::uint32_t idx = start(eng);
  out[0] = idx;
  for (std::size_t t = 1; t < out.size(); ++t) {
    if (unit(eng) < restart) idx = start(eng);
    else idx = static_cast<std::uint32_t>((idx + 1) % n);
    out[t] = idx;
  }
}

/// N x B matrix; column b is replication b's index sequence.
inline Matrix<std::uint32_t> stationary_bootstrap_indices(std::size_t n, double mean_block, std::uint64_t seed,
                                                          std::size_t replications) {
  if (n < 1) throw InsufficientDataError("stationary bootstrap: series is empty");
  BootstrapPlan{replications, mean_block, seed}.validate();
  Matrix<std::uint32_t> idx(n, replications);
  for (std::size_t b = 0; b < replications; ++b) stationary_bootstrap_row(idx.column(b), n, mean_block, seed, b);
  return idx;
}

/// Statistic of one sample; NaN when undefined (zero variance for Sharpe).
inline double sample_statistic(std::span<const double> x, Statistic stat) {
  const std::size_t n = x.size();
  if (n == 0) return quiet_nan();
  double s = 0.0;
  for (double v : x) s += v;
  const double mu = s / static_cast<double>(n);
  if (stat == Statistic::MeanExcess) return mu;
  if (n < 2) return quiet_nan();
  double ss = 0.0;
  bool varies = false;
  for (double v : x) {
    ss += (v - mu) * (v - mu);
    varies = varies || v != x[0];
  }
  if (!varies) return quiet_nan();
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return sd > 0.0 ? mu / sd : quiet_nan();
}

inline std::vector<double> observed_statistics(ColumnsView<double> panel, Statistic stat) {
  std::vector<double> out(panel.cols());
  for (std::size_t j = 0; j < panel.cols(); ++j) out[j] = sample_statistic(panel.column(j), stat);
  return out;
}

/// B x l matrix of resampled statistics. Every rule is resampled with the same
/// index sequence in a given replication, preserving cross-sectional dependence.
inline Matrix<double> bootstrap_statistics(ColumnsView<double> panel, const BootstrapPlan& plan, Statistic stat,
                                           unsigned threads = 1) {
  plan.validate();
  const std::size_t n = panel.rows();
  if (n < 1) throw InsufficientDataError("bootstrap_statistics: empty window");
  Matrix<double> out(plan.replications, panel.cols());

  parallel_for(plan.replications, threads, [&](std::size_t b) {
    std::vector<std::uint32_t> idx(n);
    stationary_bootstrap_row(idx, n, plan.mean_block, plan.seed, b);
    std::vector<double> sample(n);
    for (std::size_t j = 0; j < panel.cols(); ++j) {
      const auto col = panel.column(j);
      for (std::size_t t = 0; t < n; ++t) sample[t] = col[idx[t]];
      out(b, j) = sample_statistic(sample, stat);
    }
  });
  return out;
}

/// Discrete bootstrap p-values sharing the support V = {1/B, 2/B, ..., 1}.
struct PValueSet {
  std::size_t replications = 0;
  /// p_j = rank_j / B, rank_j in [1, B].
  std::vector<std::uint32_t> rank;
  std::vector<double> p;
  std::vector<int> sign;
  std::vector<double> phi;

  std::size_t size() const noexcept { return p.size(); }
  double support_point(std::size_t k) const { return static_cast<double>(k) / static_cast<double>(replications); }

  /// n_k = #{j : p_j = k/B} for k = 1..B (index 0 unused).
  std::vector<std::size_t> histogram() const {
    std::vector<std::size_t> n(replications + 1, 0);
    for (auto k : rank) ++n[k];
    return n;
  }
};

/// Builds a PValueSet from exceedance counts, flooring at one count so every
/// p-value lands on V.
inline PValueSet make_pvalue_set(std::size_t replications, std::vector<std::uint32_t> counts,
                                 std::vector<double> phi) {
  PValueSet out;
  out.replications = replications;
  out.rank = std::move(counts);
  out.p.resize(out.rank.size());
  out.sign.resize(out.rank.size());
  for (std::size_t j = 0; j < out.rank.size(); ++j) {
    out.rank[j] = std::max<std::uint32_t>(1, std::min<std::uint32_t>(out.rank[j], replications));
    out.p[j] = out.support_point(out.rank[j]);
    out.sign[j] = std::isnan(phi[j]) ? 0 : sign_of(phi[j]);
  }
  out.phi = std::move(phi);
  return out;
}

/// Two-sided p-values against the null of zero performance. Each bootstrap
/// statistic is recentred at the observed value and compared in absolute
/// terms; undefined resampled statistics count as exceedances, and an
/// undefined observed statistic yields p = 1.
inline PValueSet discrete_p_values(std::span<const double> observed, const Matrix<double>& boot) {
  if (boot.cols() != observed.size())
    throw ValidationError("discrete_p_values: bootstrap matrix does not match observed statistics");
  const std::size_t B = boot.rows();
  if (B < 1) throw ValidationError("discrete_p_values: no replications");
  std::vector<std::uint32_t> counts(observed.size(), 0);
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const double phi = observed[j];
    if (std::isnan(phi)) {
      counts[j] = static_cast<std::uint32_t>(B);
      continue;
    }
    const double a = std::abs(phi);
    std::uint32_t c = 0;
    for (double x : boot.column(j))
      if (std::isnan(x) || std::abs(x - phi) >= a) ++c;
    counts[j] = c;
  }
  return make_pvalue_set(B, std::move(counts), std::vector<double>(observed.begin(), observed.end()));
}

/// Observed statistics, bootstrap matrix and p-values for one window.
struct BootstrapResult {
  std::vector<double> observed;
  Matrix<double> replicates;
  PValueSet pvalues;
};

inline BootstrapResult bootstrap_p_values(ColumnsView<double> panel, const BootstrapPlan& plan,
                                          Statistic stat = Statistic::Sharpe, unsigned threads = 1) {
  BootstrapResult r;
  r.observed = observed_statistics(panel, stat);
  r.replicates = bootstrap_statistics(panel, plan, stat, threads);
  r.pvalues = discrete_p_values(r.observed, r.replicates);
  return r;
}

} // namespace dfdr
