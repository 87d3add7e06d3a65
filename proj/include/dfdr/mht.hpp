#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dfdr/bootstrap.hpp"
#include "dfdr/common.hpp"
#include "dfdr/matrix.hpp"

namespace dfdr {

// ---------------------------------------------------------------------------
// Null-proportion estimation
// ---------------------------------------------------------------------------

/// #{p_j > lambda} / (l (1 - lambda)), without the cap at one.
inline double pi0_raw(const PValueSet& pv, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ValidationError("pi0: lambda must lie in [0, 1)");
  if (pv.size() == 0) throw InsufficientDataError("pi0: no p-values");
  std::size_t above = 0;
  for (double p : pv.p)
    if (p > lambda) ++above;
  return static_cast<double>(above) / (static_cast<double>(pv.size()) * (1.0 - lambda));
}

inline double pi0_estimate(const PValueSet& pv, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ValidationError("pi0: lambda must lie in (0, 1)");
  return std::min(1.0, pi0_raw(pv, lambda));
}

/// Candidate tuning parameters, strictly ascending inside (0, 1).
struct LambdaGrid {
  std::vector<double> points;

  void validate() const {
    if (points.size() < 2) throw ConfigError("lambda grid: need at least 2 points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(points[i] > 0.0 && points[i] < 1.0)) throw ConfigError("lambda grid: points must lie in (0, 1)");
      if (i > 0 && !(points[i - 1] < points[i])) throw ConfigError("lambda grid: points must be strictly ascending");
    }
  }
};

/// Equally spaced points width, 2*width, ... below 1, each snapped to the
/// nearest support point k/B (1 <= k <= B-1); duplicates after snapping merge.
inline LambdaGrid make_lambda_grid(std::size_t replications, double width = 0.05) {
  if (!(width > 0.0 && width < 0.5)) throw ConfigError("lambda grid: width must lie in (0, 0.5)");
  if (replications < 3) throw ConfigError("lambda grid: need at least 3 replications");
  const double B = static_cast<double>(replications);
  LambdaGrid g;
  std::vector<std::size_t> ks;
  for (int i = 1;; ++i) {
    const double raw = width * i;
    if (raw > 1.0 - 1e-12) break;
    auto k = static_cast<std::size_t>(std::llround(raw * B));
    k = std::clamp<std::size_t>(k, 1, replications - 1);
    if (ks.empty() || ks.back() < k) ks.push_back(k);
  }
  for (auto k : ks) g.points.push_back(static_cast<double>(k) / B);
  g.validate();
  return g;
}

/// Outcome of a tuning-parameter search.
struct LambdaChoice {
  double lambda = 0.0;
  /// Position of lambda in the grid (0-based).
  std::size_t index = 0;
  /// Capped estimate at the chosen lambda.
  double pi0 = 1.0;
  /// True when no stopping point was found and the last grid point was used.
  bool fallback = false;
  /// Uncapped estimates over the grid.
  std::vector<double> path;
};

/// Index of the first entry of `path` that does not decrease relative to its
/// predecessor, where the predecessor of path[0] is `origin`. Returns
/// path.size()-1 (the last point) when the path decreases strictly throughout.
inline std::pair<std::size_t, bool> first_non_decrease(std::span<const double> path, double origin) {
  if (path.empty()) throw ValidationError("first_non_decrease: empty path");
  double previous = origin;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (path[i] >= previous) return {i, false};
    previous = path[i];
  }
  // The last point is the answer either way; flag it as a fallback unless it
  // satisfies the stopping condition itself.
  return {path.size() - 1, !(path.back() >= previous)};
}

/// Right-boundary choice: the first lambda at which the estimate stops
/// decreasing. The scan starts from lambda_0 = 0, whose estimate is 1.
inline LambdaChoice right_boundary_lambda(const PValueSet& pv, const LambdaGrid& grid) {
  grid.validate();
  LambdaChoice c;
  c.path.reserve(grid.points.size());
  for (double lambda : grid.points) c.path.push_back(pi0_raw(pv, lambda));
  const auto [i, fallback] = first_non_decrease(c.path, pi0_raw(pv, 0.0));
  c.index = i;
  c.fallback = fallback;
  c.lambda = grid.points[i];
  c.pi0 = std::min(1.0, c.path[i]);
  return c;
}

/// Bin-count form of the right-boundary rule: with bins (lambda_{i-1}, lambda_i]
/// and a final bin up to 1, pick the right edge of the first bin whose count
/// is no larger than the mean count of the bins to its right.
inline LambdaChoice right_boundary_lambda_bins(const PValueSet& pv, const LambdaGrid& grid) {
  grid.validate();
  const std::size_t n = grid.points.size();
  std::vector<double> counts(n + 1, 0.0);
  for (double p : pv.p) {
    const auto it = std::lower_bound(grid.points.begin(), grid.points.end(), p);
    counts[static_cast<std::size_t>(it - grid.points.begin())] += 1.0;
  }
  LambdaChoice c;
  for (double lambda : grid.points) c.path.push_back(pi0_raw(pv, lambda));
  c.index = n - 1;
  c.fallback = true;
  for (std::size_t i = 0; i < n; ++i) {
    double right = 0.0;
    for (std::size_t k = i + 1; k <= n; ++k) right += counts[k];
    if (counts[i] <= right / static_cast<double>(n - i)) {
      c.index = i;
      c.fallback = false;
      break;
    }
  }
  c.lambda = grid.points[c.index];
  c.pi0 = std::min(1.0, c.path[c.index]);
  return c;
}

// ---------------------------------------------------------------------------
// Selection at a target false discovery rate
// ---------------------------------------------------------------------------

enum class Tail { Positive, Negative };

struct DfdrSelection {
  Tail tail = Tail::Positive;
  std::optional<double> lambda_star;
  double pi0 = 1.0;
  /// Largest support point meeting the target; absent when none qualifies.
  std::optional<double> gamma_star;
  std::vector<std::size_t> selected;
  std::size_t r_hat = 0;
  double f_hat = 0.0;
  double fdr_hat = 0.0;
  double target = 0.0;

  bool empty() const noexcept { return selected.empty(); }
};

namespace detail {

inline bool in_tail(int sign, Tail tail) { return tail == Tail::Positive ? sign > 0 : sign < 0; }

/// cum[k] = #{j in tail : rank_j <= k}, k = 0..B.
inline std::vector<std::size_t> tail_cumulative(const PValueSet& pv, Tail tail) {
  std::vector<std::size_t> cum(pv.replications + 1, 0);
  for (std::size_t j = 0; j < pv.size(); ++j)
    if (in_tail(pv.sign[j], tail)) ++cum[pv.rank[j]];
  for (std::size_t k = 1; k < cum.size(); ++k) cum[k] += cum[k - 1];
  return cum;
}

} // namespace detail

/// Sweeps the support points and keeps the largest gamma with
/// F(gamma) / R(gamma) <= target, where R counts tail rules with p <= gamma and
/// F = pi0 * l * gamma / 2 estimates the lucky ones among them.
inline DfdrSelection dfdr_select(const PValueSet& pv, double pi0, double target, Tail tail = Tail::Positive) {
  if (!(target > 0.0 && target < 1.0)) throw ValidationError("dfdr_select: target must lie in (0, 1)");
  if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw ValidationError("dfdr_select: pi0 must lie in [0, 1]");
  DfdrSelection s;
  s.tail = tail;
  s.pi0 = pi0;
  s.target = target;
  const auto cum = detail::tail_cumulative(pv, tail);
  const double l = static_cast<double>(pv.size());

  std::size_t best = 0;
  for (std::size_t k = 1; k <= pv.replications; ++k) {
    const double gamma = pv.support_point(k);
    const std::size_t r = cum[k];
    if (r == 0) continue;
    const double f = pi0 * l * gamma / 2.0;
    if (f / static_cast<double>(r) <= target) best = k;
  }
  if (best == 0) return s;

  const double gamma = pv.support_point(best);
  s.gamma_star = gamma;
  s.r_hat = cum[best];
  s.f_hat = pi0 * l * gamma / 2.0;
  s.fdr_hat = s.f_hat / static_cast<double>(s.r_hat);
  for (std::size_t j = 0; j < pv.size(); ++j)
    if (detail::in_tail(pv.sign[j], tail) && pv.rank[j] <= best) s.selected.push_back(j);
  return s;
}

inline DfdrSelection dfdr_select_negative(const PValueSet& pv, double pi0, double target) {
  return dfdr_select(pv, pi0, target, Tail::Negative);
}

/// Right-boundary tuning followed by selection.
inline DfdrSelection dfdr_plus(const PValueSet& pv, const LambdaGrid& grid, double target,
                               Tail tail = Tail::Positive) {
  const LambdaChoice c = right_boundary_lambda(pv, grid);
  DfdrSelection s = dfdr_select(pv, c.pi0, target, tail);
  s.lambda_star = c.lambda;
  return s;
}

/// Same selection with the null proportion estimated at a fixed lambda.
inline DfdrSelection storey_fixed_select(const PValueSet& pv, double lambda, double target) {
  DfdrSelection s = dfdr_select(pv, pi0_estimate(pv, lambda), target);
  s.lambda_star = lambda;
  return s;
}

// ---------------------------------------------------------------------------
// Proportions of out-, under- and neutrally performing rules
// ---------------------------------------------------------------------------

struct ProportionEstimate {
  /// Neutral share, renormalised so the three shares sum to one.
  double pi0 = 1.0;
  double pi_plus = 0.0;
  double pi_minus = 0.0;
  double cutoff = 0.4;
  /// Null proportion supplied by the caller.
  double pi0_input = 1.0;
  /// 1 - (pi0_input + pi_plus + pi_minus) before clamping.
  double residual = 0.0;
};

inline ProportionEstimate estimate_proportions(const PValueSet& pv, double pi0, double cutoff = 0.4) {
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw ValidationError("estimate_proportions: cutoff must lie in (0, 1)");
  const double l = static_cast<double>(pv.size());
  const auto k = static_cast<std::size_t>(std::floor(cutoff * static_cast<double>(pv.replications) + 1e-9));
  std::size_t r_plus = 0, r_minus = 0;
  for (std::size_t j = 0; j < pv.size(); ++j) {
    if (pv.rank[j] > k) continue;
    if (pv.sign[j] > 0) ++r_plus;
    else if (pv.sign[j] < 0) ++r_minus;
  }
  const double lucky = pi0 * cutoff / 2.0;
  const double raw_plus = static_cast<double>(r_plus) / l - lucky;
  const double raw_minus = static_cast<double>(r_minus) / l - lucky;

  ProportionEstimate e;
  e.cutoff = cutoff;
  e.pi0_input = pi0;
  e.residual = 1.0 - (pi0 + raw_plus + raw_minus);
  e.pi_plus = std::clamp(raw_plus, 0.0, 1.0);
  e.pi_minus = std::clamp(raw_minus, 0.0, 1.0);
  if (e.pi_plus + e.pi_minus > 1.0) {
    const double scale = 1.0 / (e.pi_plus + e.pi_minus);
    e.pi_plus *= scale;
    e.pi_minus *= scale;
  }
  e.pi0 = std::max(0.0, 1.0 - e.pi_plus - e.pi_minus);
  return e;
}

// ---------------------------------------------------------------------------
// Romano-Wolf StepM
// ---------------------------------------------------------------------------

struct RwSelection {
  /// Rejections with positive observed statistic, in rejection order.
  std::vector<std::size_t> rejected;
  std::vector<std::size_t> rejected_negative;
  /// Rejected set size (both sides) after each round.
  std::vector<std::size_t> history;
  std::size_t rounds = 0;
  double alpha = 0.05;
};

/// Empirical (1 - alpha) quantile: the ceil((1 - alpha) B)-th smallest value.
inline double upper_quantile(std::vector<double> v, double alpha) {
  if (v.empty()) throw ValidationError("upper_quantile: empty sample");
  const double pos = std::ceil((1.0 - alpha) * static_cast<double>(v.size()) - 1e-9);
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(pos), 1, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

/// Two-sided step-down on statistics recentred at their observed values. Each
/// round takes the (1 - alpha) quantile of max |phi_b - phi| over the rules
/// still active, rejects every active rule whose |phi| exceeds it, and stops
/// when a round rejects nothing. Undefined resampled statistics make the
/// replication's maximum infinite; rules with undefined observed statistics
/// never enter the active set.
inline RwSelection rw_stepm_select(std::span<const double> observed, const Matrix<double>& boot, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("rw_stepm: alpha must lie in (0, 1)");
  if (boot.cols() != observed.size()) throw ValidationError("rw_stepm: bootstrap matrix does not match");
  const std::size_t B = boot.rows();
  RwSelection out;
  out.alpha = alpha;

  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < observed.size(); ++j)
    if (!std::isnan(observed[j])) active.push_back(j);

  std::size_t total = 0;
  std::vector<double> maxima(B);
  for (;;) {
    ++out.rounds;
    if (active.empty()) {
      out.history.push_back(total);
      break;
    }
    std::fill(maxima.begin(), maxima.end(), 0.0);
    for (std::size_t j : active) {
      const auto col = boot.column(j);
      for (std::size_t b = 0; b < B; ++b) {
        const double d = std::isnan(col[b]) ? INFINITY : std::abs(col[b] - observed[j]);
        if (d > maxima[b]) maxima[b] = d;
      }
    }
    const double critical = upper_quantile(maxima, alpha);

    std::vector<std::size_t> keep;
    std::size_t rejected_now = 0;
    for (std::size_t j : active) {
      if (std::abs(observed[j]) > critical) {
        ++rejected_now;
        (observed[j] > 0.0 ? out.rejected : out.rejected_negative).push_back(j);
      } else {
        keep.push_back(j);
      }
    }
    total += rejected_now;
    out.history.push_back(total);
    if (rejected_now == 0) break;
    active = std::move(keep);
  }
  return out;
}

} // namespace dfdr
