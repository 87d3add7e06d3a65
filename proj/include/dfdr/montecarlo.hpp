#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dfdr/backtest.hpp"
#include "dfdr/bootstrap.hpp"
#include "dfdr/common.hpp"
#include "dfdr/matrix.hpp"
#include "dfdr/mht.hpp"
#include "dfdr/parallel.hpp"
#include "dfdr/rng.hpp"

namespace dfdr {

struct SimDesign {
  std::size_t rules = 2000;
  std::size_t days = 155;
  double pi_plus = 0.20;
  double pi_minus = 0.30;
  /// Annualized Sharpe targets; every (positive, negative) combination is run.
  std::vector<double> sr_positive{2.0, 3.0, 4.0};
  std::vector<double> sr_negative{-2.0, -3.0, -4.0};
  std::size_t reps = 100;
  double mean_block = 10.0;
  std::size_t replications = 200;
  std::uint64_t seed = 1;
  std::vector<double> fdr_targets{0.10, 0.20};
  std::vector<double> rw_alphas{0.05, 0.20};
  double storey_lambda = 0.6;
  double proportion_cutoff = 0.4;
  double lambda_width = 0.05;

  double pi0() const { return 1.0 - pi_plus - pi_minus; }

  void validate() const {
    if (rules < 2 || days < 2) throw ConfigError("montecarlo: need at least 2 rules and 2 days");
    if (pi_plus < 0.0 || pi_minus < 0.0 || pi_plus + pi_minus > 1.0)
      throw ConfigError("montecarlo: proportions must be non-negative and sum to at most 1");
    if (reps < 1) throw ConfigError("montecarlo: reps must be >= 1");
    if (sr_positive.empty() || sr_negative.empty()) throw ConfigError("montecarlo: empty Sharpe target list");
    BootstrapPlan{replications, mean_block, seed}.validate();
  }

  /// Full-size configuration: 21,195 rules, 1,000 replications and resamples.
  static SimDesign paper_scale() {
    SimDesign d;
    d.rules = 21195;
    d.reps = 1000;
    d.replications = 1000;
    return d;
  }
};

/// Annualized Sharpe ratio to the per-day ratio.
inline double daily_sharpe(double annualized) { return annualized / std::sqrt(kTradingDaysPerYear); }

// ---------------------------------------------------------------------------
// Synthetic base panel
// ---------------------------------------------------------------------------

struct BasePanelSpec {
  std::size_t rules = 2000;
  std::size_t days = 155;
  std::size_t families = 5;
  /// Share of each rule's variance explained by its family factor.
  double family_correlation = 0.5;
  /// AR(1) coefficient of the family factors.
  double autocorrelation = 0.1;
  /// Daily volatility range across rules.
  double min_vol = 0.003;
  double max_vol = 0.010;
  std::uint64_t seed = 7;
};

/// days x rules panel of daily excess returns: rules fall into contiguous
/// family blocks sharing an autocorrelated factor, with rule-specific
/// volatility and a small rule-specific drift.
inline Matrix<double> synthetic_base_panel(const BasePanelSpec& spec) {
  if (spec.rules < 1 || spec.days < 2 || spec.families < 1) throw ConfigError("base panel: empty shape");
  Engine eng = make_engine(spec.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix<double> factors(spec.days, spec.families);
  const double innovation = std::sqrt(1.0 - spec.autocorrelation * spec.autocorrelation);
  for (std::size_t f = 0; f < spec.families; ++f) {
    double x = normal(eng);
    for (std::size_t t = 0; t < spec.days; ++t) {
      factors(t, f) = x;
      x = spec.autocorrelation * x + innovation * normal(eng);
    }
  }

  Matrix<double> out(spec.days, spec.rules);
  const double load = std::sqrt(spec.family_correlation);
  const double idio = std::sqrt(1.0 - spec.family_correlation);
  for (std::size_t j = 0; j < spec.rules; ++j) {
    const std::size_t f = j * spec.families / spec.rules;
    const double vol = spec.min_vol + (spec.max_vol - spec.min_vol) * unit(eng);
    const double drift = 0.1 * vol * normal(eng);
    auto col = out.column(j);
    for (std::size_t t = 0; t < spec.days; ++t) col[t] = drift + vol * (load * factors(t, f) + idio * normal(eng));
  }
  return out;
}

/// +1 for the top pi_plus share of rules by mean return, -1 for the bottom
/// pi_minus share, 0 otherwise. Ties break by column index.
inline std::vector<std::int8_t> rank_labels(const Matrix<double>& base, double pi_plus, double pi_minus) {
  const std::size_t l = base.cols();
  std::vector<double> means(l);
  for (std::size_t j = 0; j < l; ++j) means[j] = mean(base.column(j));
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return means[a] > means[b]; });
  const auto n_plus = static_cast<std::size_t>(std::llround(pi_plus * static_cast<double>(l)));
  const auto n_minus = static_cast<std::size_t>(std::llround(pi_minus * static_cast<double>(l)));
  std::vector<std::int8_t> labels(l, 0);
  for (std::size_t i = 0; i < n_plus && i < l; ++i) labels[order[i]] = 1;
  for (std::size_t i = 0; i < n_minus && i < l; ++i) labels[order[l - 1 - i]] = -1;
  return labels;
}

// ---------------------------------------------------------------------------
// Planted-signal panels
// ---------------------------------------------------------------------------

struct SimPanel {
  Matrix<double> returns;
  std::vector<std::int8_t> labels;
  /// Planted columns left neutral because their resampled volatility is zero.
  std::vector<std::size_t> degenerate;
};

/// Resamples `base` with one shared stationary-bootstrap index sequence,
/// recentres every column at zero mean and shifts planted columns by
/// sr_daily * sigma_j so each has exactly the target Sharpe ratio.
inline SimPanel simulate_panel(const Matrix<double>& base, std::span<const std::int8_t> labels, std::size_t days,
                               double sr_positive_daily, double sr_negative_daily, double mean_block,
                               std::uint64_t seed, std::size_t rep) {
  if (labels.size() != base.cols()) throw ValidationError("simulate_panel: labels do not match base panel");
  std::vector<std::uint32_t> idx(days);
  stationary_bootstrap_row(idx, base.rows(), mean_block, derive_seed(seed, rep), 0);

  SimPanel sim;
  sim.labels.assign(labels.begin(), labels.end());
  sim.returns = Matrix<double>(days, base.cols());
  for (std::size_t j = 0; j < base.cols(); ++j) {
    const auto src = base.column(j);
    auto col = sim.returns.column(j);
    for (std::size_t t = 0; t < days; ++t) col[t] = src[idx[t]];
    const double mu = mean(col);
    for (double& v : col) v -= mu;
    if (labels[j] == 0) continue;
    const double sd = sample_stdev(col, mean(col));
    if (!(sd > 0.0)) {
      sim.degenerate.push_back(j);
      sim.labels[j] = 0;
      continue;
    }
    const double shift = (labels[j] > 0 ? sr_positive_daily : sr_negative_daily) * sd;
    for (double& v : col) v += shift;
  }
  return sim;
}

// ---------------------------------------------------------------------------
// Power study
// ---------------------------------------------------------------------------

enum class Method { Dfdr, StoreyFdr, RomanoWolf };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::Dfdr: return "DFDR+";
    case Method::StoreyFdr: return "FDR";
    case Method::RomanoWolf: return "RW";
  }
  return "?";
}

/// Averages over replications for one (pair, method, level).
struct MethodOutcome {
  double sr_positive = 0.0;
  double sr_negative = 0.0;
  Method method = Method::Dfdr;
  double level = 0.0;
  /// pi0 * l * gamma / 2 over the selection size with the true pi0 (FDR
  /// methods); realised false share for RW. Zero when nothing is selected.
  double fdr_plus = 0.0;
  /// Realised share of selected rules that are not true outperformers.
  double false_share = 0.0;
  double power = 0.0;
  double size = 0.0;
  double nonempty = 0.0;
};

struct ProportionOutcome {
  double sr_positive = 0.0;
  double sr_negative = 0.0;
  double pi0 = 0.0;
  double pi_plus = 0.0;
  double pi_minus = 0.0;
  double lambda = 0.0;
};

/// Mean over replications of the within-replication quartiles of annualized
/// mean excess return of one planted group.
struct QuartileOutcome {
  double sr_positive = 0.0;
  double sr_negative = 0.0;
  int group = 1;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

struct SimOutcome {
  std::vector<MethodOutcome> methods;
  std::vector<ProportionOutcome> proportions;
  std::vector<QuartileOutcome> quartiles;
  std::size_t true_positives = 0;
  std::size_t degenerate = 0;
};

namespace detail {

/// Linear-interpolation quantile of a sorted sample.
inline double sorted_quantile(std::span<const double> s, double q) {
  if (s.empty()) return quiet_nan();
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

struct Score {
  double fdr_plus = 0.0, false_share = 0.0, power = 0.0, size = 0.0, nonempty = 0.0;
};

inline Score score(std::span<const std::size_t> selected, std::span<const std::int8_t> labels,
                   std::size_t positives, std::optional<double> footnote_fdr) {
  Score s;
  std::size_t tp = 0;
  for (std::size_t j : selected)
    if (labels[j] > 0) ++tp;
  s.size = static_cast<double>(selected.size());
  s.power = positives ? static_cast<double>(tp) / static_cast<double>(positives) : 0.0;
  if (!selected.empty()) {
    s.nonempty = 1.0;
    s.false_share = static_cast<double>(selected.size() - tp) / s.size;
    s.fdr_plus = footnote_fdr ? *footnote_fdr : s.false_share;
  }
  return s;
}

} // namespace detail

/// Runs every replication of every Sharpe pair. Replication r resamples the
/// base with seed derive_seed(seed, r) and bootstraps p-values with seed
/// derive_seed(seed, r, 1); results are combined in replication order.
inline SimOutcome run_power_study(const SimDesign& design, const Matrix<double>& base, unsigned threads = 1) {
  design.validate();
  if (base.cols() != design.rules) throw ValidationError("run_power_study: base panel width differs from design");
  const auto labels = rank_labels(base, design.pi_plus, design.pi_minus);
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::int8_t{1}));
  const double true_pi0 = static_cast<double>(std::count(labels.begin(), labels.end(), std::int8_t{0})) /
                          static_cast<double>(labels.size());
  const LambdaGrid grid = make_lambda_grid(design.replications, design.lambda_width);

  struct Pair {
    double pos, neg;
  };
  std::vector<Pair> pairs;
  for (double p : design.sr_positive)
    for (double n : design.sr_negative) pairs.push_back({p, n});

  const std::size_t n_levels = 2 * design.fdr_targets.size() + design.rw_alphas.size();
  // Per replication: per pair, one Score per (method, level), proportions and quartiles.
  struct RepResult {
    std::vector<detail::Score> scores;
    std::vector<std::array<double, 4>> props;
    std::vector<std::array<double, 6>> quart;
    std::size_t degenerate = 0;
  };
  std::vector<RepResult> reps(design.reps);

  parallel_for(design.reps, threads, [&](std::size_t rep) {
    RepResult rr;
    rr.scores.reserve(pairs.size() * n_levels);
    for (const Pair& pair : pairs) {
      const SimPanel sim = simulate_panel(base, labels, design.days, daily_sharpe(pair.pos), daily_sharpe(pair.neg),
                                          design.mean_block, design.seed, rep);
      rr.degenerate += sim.degenerate.size();
      const BootstrapPlan plan{design.replications, design.mean_block, derive_seed(design.seed, rep, 1)};
      const auto boot = bootstrap_p_values(sim.returns.view(), plan, Statistic::Sharpe);
      const PValueSet& pv = boot.pvalues;
      const double l = static_cast<double>(pv.size());

      auto footnote = [&](const DfdrSelection& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        return true_pi0 * l * *s.gamma_star / 2.0 / static_cast<double>(s.r_hat);
      };
      const LambdaChoice rb = right_boundary_lambda(pv, grid);
      for (double t : design.fdr_targets) {
        const auto s = dfdr_select(pv, rb.pi0, t);
        rr.scores.push_back(detail::score(s.selected, sim.labels, positives, footnote(s)));
      }
      for (double t : design.fdr_targets) {
        const auto s = storey_fixed_select(pv, design.storey_lambda, t);
        rr.scores.push_back(detail::score(s.selected, sim.labels, positives, footnote(s)));
      }
      for (double a : design.rw_alphas) {
        const auto s = rw_stepm_select(boot.observed, boot.replicates, a);
        std::vector<std::size_t> sel = s.rejected;
        std::sort(sel.begin(), sel.end());
        rr.scores.push_back(detail::score(sel, sim.labels, positives, std::nullopt));
      }

      const auto prop = estimate_proportions(pv, rb.pi0, design.proportion_cutoff);
      rr.props.push_back({prop.pi0, prop.pi_plus, prop.pi_minus, rb.lambda});

      std::array<double, 6> q{};
      for (int g = 0; g < 2; ++g) {
        const std::int8_t want = g == 0 ? 1 : -1;
        std::vector<double> ann;
        for (std::size_t j = 0; j < sim.labels.size(); ++j)
          if (sim.labels[j] == want) ann.push_back(mean(sim.returns.column(j)) * kTradingDaysPerYear);
        std::sort(ann.begin(), ann.end());
        q[3 * g + 0] = detail::sorted_quantile(ann, 0.25);
        q[3 * g + 1] = detail::sorted_quantile(ann, 0.50);
        q[3 * g + 2] = detail::sorted_quantile(ann, 0.75);
      }
      rr.quart.push_back(q);
    }
    reps[rep] = std::move(rr);
  });

  SimOutcome out;
  out.true_positives = positives;
  const double R = static_cast<double>(design.reps);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    std::size_t k = 0;
    auto push = [&](Method m, double level) {
      MethodOutcome mo;
      mo.sr_positive = pairs[p].pos;
      mo.sr_negative = pairs[p].neg;
      mo.method = m;
      mo.level = level;
      for (const auto& rr : reps) {
        const auto& s = rr.scores[p * n_levels + k];
        mo.fdr_plus += s.fdr_plus;
        mo.false_share += s.false_share;
        mo.power += s.power;
        mo.size += s.size;
        mo.nonempty += s.nonempty;
      }
      mo.fdr_plus /= R;
      mo.false_share /= R;
      mo.power /= R;
      mo.size /= R;
      mo.nonempty /= R;
      out.methods.push_back(mo);
      ++k;
    };
    for (double t : design.fdr_targets) push(Method::Dfdr, t);
    for (double t : design.fdr_targets) push(Method::StoreyFdr, t);
    for (double a : design.rw_alphas) push(Method::RomanoWolf, a);

    ProportionOutcome po{pairs[p].pos, pairs[p].neg};
    std::array<double, 6> qs{};
    for (const auto& rr : reps) {
      po.pi0 += rr.props[p][0];
      po.pi_plus += rr.props[p][1];
      po.pi_minus += rr.props[p][2];
      po.lambda += rr.props[p][3];
      for (std::size_t i = 0; i < 6; ++i) qs[i] += rr.quart[p][i];
    }
    po.pi0 /= R;
    po.pi_plus /= R;
    po.pi_minus /= R;
    po.lambda /= R;
    out.proportions.push_back(po);
    for (int g = 0; g < 2; ++g)
      out.quartiles.push_back({pairs[p].pos, pairs[p].neg, g == 0 ? 1 : -1, qs[3 * g] / R, qs[3 * g + 1] / R,
                               qs[3 * g + 2] / R});
  }
  for (const auto& rr : reps) out.degenerate += rr.degenerate;
  return out;
}

} // namespace dfdr
