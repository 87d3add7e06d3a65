#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfdr/backtest.hpp"
#include "dfdr/bootstrap.hpp"
#include "dfdr/common.hpp"
#include "dfdr/dates.hpp"
#include "dfdr/market_data.hpp"
#include "dfdr/mht.hpp"
#include "dfdr/parallel.hpp"
#include "dfdr/rng.hpp"
#include "dfdr/rules.hpp"

namespace dfdr {

// ---------------------------------------------------------------------------
// Calendar months over a trading-day calendar
// ---------------------------------------------------------------------------

/// Calendar months present in a sorted trading-day calendar. Month m covers
/// rows [begin(m), end(m)); a month starts on its first trading day.
struct MonthCalendar {
  std::vector<Month> months;
  std::vector<std::size_t> starts;
  std::size_t rows = 0;

  std::size_t size() const noexcept { return months.size(); }
  std::size_t begin(std::size_t m) const { return starts[m]; }
  std::size_t end(std::size_t m) const { return m + 1 < starts.size() ? starts[m + 1] : rows; }
};

inline MonthCalendar month_calendar(std::span<const Date> dates) {
  MonthCalendar c;
  c.rows = dates.size();
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const Month m = month_of(dates[i]);
    if (c.months.empty() || c.months.back() != m) {
      if (!c.months.empty() && !(c.months.back() < m))
        throw ValidationError("month_calendar: dates not increasing");
      c.months.push_back(m);
      c.starts.push_back(i);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Equal-weight portfolios
// ---------------------------------------------------------------------------

struct PortfolioSeries {
  std::vector<std::size_t> members;
  /// Equal-weight mean of member excess returns, one value per row.
  std::vector<double> returns;

  bool empty() const noexcept { return members.empty(); }
};

/// Rows [begin, end) of the equal-weight mean of the member columns. An empty
/// member list yields an empty portfolio (no survivors).
inline PortfolioSeries build_portfolio(std::span<const std::size_t> members, ColumnsView<double> panel,
                                       std::size_t begin, std::size_t end) {
  if (begin > end || end > panel.rows()) throw ValidationError("build_portfolio: window outside panel");
  PortfolioSeries p;
  p.members.assign(members.begin(), members.end());
  if (members.empty()) return p;
  p.returns.assign(end - begin, 0.0);
  for (std::size_t j : members) {
    if (j >= panel.cols()) throw ValidationError("build_portfolio: member outside panel");
    const auto col = panel.column(j);
    for (std::size_t t = begin; t < end; ++t) p.returns[t - begin] += col[t];
  }
  const double k = static_cast<double>(members.size());
  for (double& v : p.returns) v /= k;
  return p;
}

// ---------------------------------------------------------------------------
// Family breakdown
// ---------------------------------------------------------------------------

/// Order in which family shares are reported.
inline constexpr std::array<Family, 5> kReportFamilyOrder = {Family::RSI, Family::FR, Family::MA, Family::SR,
                                                             Family::CB};

/// Percentage of selected rules in each family (RSI, FR, MA, SR, CB order).
/// Absent for an empty selection.
inline std::optional<std::array<double, 5>> disaggregate_by_family(std::span<const std::size_t> selected,
                                                                   std::span<const Family> families) {
  if (selected.empty()) return std::nullopt;
  std::array<double, 5> counts{};
  for (std::size_t j : selected) {
    if (j >= families.size()) throw ValidationError("disaggregate_by_family: rule outside universe");
    const auto f = families[j];
    const auto pos = std::find(kReportFamilyOrder.begin(), kReportFamilyOrder.end(), f) - kReportFamilyOrder.begin();
    counts[static_cast<std::size_t>(pos)] += 1.0;
  }
  for (double& c : counts) c = 100.0 * c / static_cast<double>(selected.size());
  return counts;
}

// ---------------------------------------------------------------------------
// Rolling in-sample / out-of-sample evaluation
// ---------------------------------------------------------------------------

struct RollingConfig {
  int is_months = 24;
  int oos_months = 1;
  int step_months = 1;
  std::optional<Date> start;
  std::optional<Date> end;
  double target = 0.10;
  double cv_target = 0.20;
  double lambda_width = 0.05;
  Statistic statistic = Statistic::Sharpe;
  /// Count empty selections as a risk-free (zero excess) portfolio in annual
  /// means instead of leaving them out.
  bool empty_as_risk_free = false;

  void validate() const {
    if (is_months < 1 || oos_months < 1) throw ConfigError("rolling: window lengths must be >= 1 month");
    if (is_months < oos_months) throw ConfigError("rolling: in-sample must be at least as long as out-of-sample");
    if (step_months < 1) throw ConfigError("rolling: step must be >= 1 month");
    if (!(target > 0.0 && target < 1.0)) throw ConfigError("rolling: target must lie in (0, 1)");
    if (!(cv_target > 0.0 && cv_target < 1.0)) throw ConfigError("rolling: cv_target must lie in (0, 1)");
  }
};

struct Window {
  /// Index of the first in-sample month; stable across data edits after it.
  std::size_t id = 0;
  std::size_t is_begin = 0, is_end = 0;
  std::size_t oos_begin = 0, oos_end = 0;
  std::size_t oos_month = 0;
};

struct SkippedWindow {
  std::size_t id;
  std::string reason;
};

struct WindowPlan {
  std::vector<Window> windows;
  std::vector<SkippedWindow> skipped;
};

/// Enumerates windows stepping by whole months. Windows starting before
/// `min_row` (rule warm-up) or outside [cfg.start, cfg.end] are reported as
/// skipped.
inline WindowPlan plan_windows(const MonthCalendar& cal, const RollingConfig& cfg, std::span<const Date> dates,
                               std::size_t min_row = 0) {
  cfg.validate();
  WindowPlan plan;
  const auto is = static_cast<std::size_t>(cfg.is_months);
  const auto oos = static_cast<std::size_t>(cfg.oos_months);
  for (std::size_t m = 0; m + is + oos <= cal.size(); m += static_cast<std::size_t>(cfg.step_months)) {
    Window w;
    w.id = m;
    w.is_begin = cal.begin(m);
    w.is_end = cal.begin(m + is);
    w.oos_month = m + is;
    w.oos_begin = w.is_end;
    w.oos_end = cal.end(m + is + oos - 1);
    if (w.is_begin < min_row) {
      plan.skipped.push_back({m, "in-sample starts inside rule warm-up"});
      continue;
    }
    if (cfg.start && !dates.empty() && dates[w.is_begin] < *cfg.start) {
      plan.skipped.push_back({m, "before configured start"});
      continue;
    }
    if (cfg.end && !dates.empty() && *cfg.end < dates[w.oos_end - 1]) {
      plan.skipped.push_back({m, "after configured end"});
      continue;
    }
    if (w.oos_end - w.oos_begin < 2 || w.is_end - w.is_begin < 2) {
      plan.skipped.push_back({m, "window shorter than two days"});
      continue;
    }
    plan.windows.push_back(w);
  }
  return plan;
}

struct WindowResult {
  Window window;
  int oos_year = 0;
  DfdrSelection selection;
  std::optional<Performance> is_performance;
  std::optional<Performance> oos_performance;
  std::optional<std::array<double, 5>> families;
};

/// In-sample selection on rows [begin, end): bootstrap p-values then
/// right-boundary DFDR+ at `target`.
inline DfdrSelection select_window(ColumnsView<double> panel, std::size_t begin, std::size_t end, double target,
                                   double lambda_width, Statistic stat, const BootstrapPlan& plan,
                                   unsigned threads = 1) {
  const auto boot = bootstrap_p_values(panel.rows_between(begin, end), plan, stat, threads);
  return dfdr_plus(boot.pvalues, make_lambda_grid(plan.replications, lambda_width), target);
}

struct RollingResult {
  std::vector<WindowResult> windows;
  std::vector<SkippedWindow> skipped;
};

/// For each window: in-sample p-values, DFDR+ selection, equal-weight
/// portfolio, and its in- and out-of-sample performance. Window w bootstraps
/// with seed derive_seed(plan.seed, w.id).
inline RollingResult rolling_evaluate(const ExcessReturnPanel& panel, std::span<const Family> families,
                                      const RollingConfig& cfg, const BootstrapPlan& plan, unsigned threads = 1) {
  if (panel.dates.size() != panel.rows()) throw ValidationError("rolling_evaluate: panel has no calendar");
  if (families.size() != panel.cols()) throw ValidationError("rolling_evaluate: families do not match panel");
  const MonthCalendar cal = month_calendar(panel.dates);
  std::size_t min_row = 0;
  for (auto r : panel.first_usable) min_row = std::max(min_row, r);
  WindowPlan wp = plan_windows(cal, cfg, panel.dates, min_row);

  RollingResult out;
  out.skipped = std::move(wp.skipped);
  out.windows.resize(wp.windows.size());
  const ColumnsView<double> view = panel.excess.view();

  parallel_for(wp.windows.size(), threads, [&](std::size_t i) {
    const Window& w = wp.windows[i];
    BootstrapPlan wplan = plan;
    wplan.seed = derive_seed(plan.seed, w.id);
    WindowResult r;
    r.window = w;
    r.oos_year = year_of(panel.dates[w.oos_begin]);
    r.selection = select_window(view, w.is_begin, w.is_end, cfg.target, cfg.lambda_width, cfg.statistic, wplan);
    r.families = disaggregate_by_family(r.selection.selected, families);
    if (!r.selection.empty()) {
      r.is_performance = performance(build_portfolio(r.selection.selected, view, w.is_begin, w.is_end).returns);
      r.oos_performance = performance(build_portfolio(r.selection.selected, view, w.oos_begin, w.oos_end).returns);
    }
    out.windows[i] = std::move(r);
  });
  return out;
}

/// Builds the excess-return panel from prices and runs the rolling evaluation.
inline RollingResult rolling_evaluate(const MarketData& data, std::span<const RuleSpec> universe,
                                      const CostModel& cost, const RollingConfig& cfg, const BootstrapPlan& plan,
                                      unsigned threads = 1) {
  const SignalMatrix sm = generate_signal_matrix(universe, data.prices.prices, data.prices.dates, threads);
  const ExcessReturnPanel panel = excess_returns(sm, data.returns.values, data.rf_daily, cost, threads);
  std::vector<Family> fam;
  for (const auto& r : universe) fam.push_back(r.family());
  return rolling_evaluate(panel, fam, cfg, plan, threads);
}

// ---------------------------------------------------------------------------
// Annual aggregation
// ---------------------------------------------------------------------------

struct AnnualRow {
  int year = 0;
  double mean = 0.0;
  std::size_t windows = 0;
  std::size_t empty_windows = 0;
};

/// Mean of `metric` over the windows whose out-of-sample period starts in each
/// calendar year. Windows with an empty selection are excluded unless
/// `empty_value` is given, in which case they contribute that value.
template <class Metric>
std::vector<AnnualRow> annual_means(std::span<const WindowResult> results, Metric&& metric,
                                    std::optional<double> empty_value = std::nullopt) {
  std::map<int, std::pair<double, AnnualRow>> acc;
  for (const auto& r : results) {
    auto& [sum, row] = acc[r.oos_year];
    row.year = r.oos_year;
    if (r.selection.empty()) {
      ++row.empty_windows;
      if (!empty_value) continue;
      sum += *empty_value;
    } else {
      sum += metric(r);
    }
    ++row.windows;
  }
  std::vector<AnnualRow> out;
  for (auto& [year, entry] : acc) {
    AnnualRow row = entry.second;
    row.mean = row.windows > 0 ? entry.first / static_cast<double>(row.windows) : quiet_nan();
    out.push_back(row);
  }
  return out;
}

inline double oos_annualized_return(const WindowResult& r) { return r.oos_performance->annualized_return; }

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Number of leading blocks with positive excess return (0 if the first fails).
inline std::size_t leading_run(std::span<const double> block_excess) {
  std::size_t n = 0;
  while (n < block_excess.size() && block_excess[n] > 0.0) ++n;
  return n;
}

/// Mean leading run over portfolios, each given as its block excess returns.
inline double mean_persistence(std::span<const std::vector<double>> portfolios) {
  if (portfolios.empty()) return quiet_nan();
  double s = 0.0;
  for (const auto& blocks : portfolios) s += static_cast<double>(leading_run(blocks));
  return s / static_cast<double>(portfolios.size());
}

/// Summed excess return of the window's portfolio over consecutive blocks of
/// `horizon_months`, starting at its out-of-sample month and covering at most
/// `max_months`. Blocks running past the data are dropped.
inline std::vector<double> persistence_blocks(const WindowResult& r, ColumnsView<double> panel,
                                              const MonthCalendar& cal, int horizon_months, int max_months = 18) {
  if (horizon_months < 1) throw ConfigError("persistence: horizon must be >= 1 month");
  std::vector<double> blocks;
  if (r.selection.empty()) return blocks;
  const auto h = static_cast<std::size_t>(horizon_months);
  const std::size_t count = static_cast<std::size_t>(max_months / horizon_months);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t first = r.window.oos_month + b * h;
    if (first + h > cal.size()) break;
    const auto p = build_portfolio(r.selection.selected, panel, cal.begin(first), cal.end(first + h - 1));
    double s = 0.0;
    for (double v : p.returns) s += v;
    blocks.push_back(s);
  }
  return blocks;
}

struct PersistenceRow {
  int year = 0;
  double mean_count = 0.0;
  std::size_t portfolios = 0;
};

inline std::vector<PersistenceRow> persistence_by_year(std::span<const WindowResult> results,
                                                       const ExcessReturnPanel& panel, int horizon_months,
                                                       int max_months = 18) {
  const MonthCalendar cal = month_calendar(panel.dates);
  std::map<int, std::vector<std::vector<double>>> by_year;
  for (const auto& r : results) {
    if (r.selection.empty()) continue;
    by_year[r.oos_year].push_back(persistence_blocks(r, panel.excess.view(), cal, horizon_months, max_months));
  }
  std::vector<PersistenceRow> out;
  for (const auto& [year, blocks] : by_year) out.push_back({year, mean_persistence(blocks), blocks.size()});
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CrossValidation {
  std::size_t window_id = 0;
  int oos_year = 0;
  std::vector<std::size_t> is_selected;
  /// In-sample survivors with positive out-of-sample mean excess return.
  std::vector<std::size_t> oos_profitable;
  /// Selection at the lenient target on the joined in- and out-of-sample rows.
  std::vector<std::size_t> full_sample_selected;
  std::vector<std::size_t> intersection;
  /// |intersection| / |is_selected| in percent; absent when nothing was selected.
  std::optional<double> percent_of_is;
  std::optional<Performance> oos_performance;
};

/// Window w re-bootstraps the joined sample with seed derive_seed(plan.seed, w.id, 1).
inline std::vector<CrossValidation> cross_validate(const ExcessReturnPanel& panel,
                                                   std::span<const WindowResult> results, const RollingConfig& cfg,
                                                   const BootstrapPlan& plan, unsigned threads = 1) {
  std::vector<CrossValidation> out(results.size());
  const ColumnsView<double> view = panel.excess.view();
  parallel_for(results.size(), threads, [&](std::size_t i) {
    const WindowResult& r = results[i];
    const Window& w = r.window;
    CrossValidation cv;
    cv.window_id = w.id;
    cv.oos_year = r.oos_year;
    cv.is_selected = r.selection.selected;
    for (std::size_t j : cv.is_selected) {
      if (mean(view.column(j).subspan(w.oos_begin, w.oos_end - w.oos_begin)) > 0.0) cv.oos_profitable.push_back(j);
    }
    BootstrapPlan full = plan;
    full.seed = derive_seed(plan.seed, w.id, 1);
    cv.full_sample_selected =
        select_window(view, w.is_begin, w.oos_end, cfg.cv_target, cfg.lambda_width, cfg.statistic, full).selected;
    std::set_intersection(cv.oos_profitable.begin(), cv.oos_profitable.end(), cv.full_sample_selected.begin(),
                          cv.full_sample_selected.end(), std::back_inserter(cv.intersection));
    if (!cv.is_selected.empty())
      cv.percent_of_is = 100.0 * static_cast<double>(cv.intersection.size()) / static_cast<double>(cv.is_selected.size());
    if (!cv.intersection.empty())
      cv.oos_performance = performance(build_portfolio(cv.intersection, view, w.oos_begin, w.oos_end).returns);
    out[i] = std::move(cv);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Financial stress conditioning
// ---------------------------------------------------------------------------

enum class StressRule { Sign, MedianSplit };

struct StressSplit {
  /// Per window: true = high stress, false = low, absent = no stress data.
  std::vector<std::optional<bool>> high;
  std::vector<std::optional<double>> level;
  std::vector<AnnualRow> high_table;
  std::vector<AnnualRow> low_table;
  std::size_t unclassified = 0;
};

/// Mean stress over the calendar month before month `m`, if any observations.
inline std::optional<double> prior_month_stress(const StressSeries& stress, Month m) {
  const Month prior = m - std::chrono::months{1};
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < stress.size(); ++i) {
    if (month_of(stress.dates[i]) == prior) {
      s += stress.values[i];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

/// Classifies each window's out-of-sample month by the stress level of the
/// preceding month (above zero, or above the median of all classified
/// windows) and aggregates out-of-sample returns by year within each class.
inline StressSplit stress_split(std::span<const WindowResult> results, std::span<const Date> panel_dates,
                                const StressSeries& stress, StressRule rule = StressRule::Sign) {
  StressSplit out;
  out.level.reserve(results.size());
  for (const auto& r : results)
    out.level.push_back(prior_month_stress(stress, month_of(panel_dates[r.window.oos_begin])));

  double threshold = 0.0;
  if (rule == StressRule::MedianSplit) {
    std::vector<double> v;
    for (const auto& x : out.level)
      if (x) v.push_back(*x);
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      threshold = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
  }

  std::vector<WindowResult> high, low;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!out.level[i]) {
      out.high.push_back(std::nullopt);
      ++out.unclassified;
      continue;
    }
    const bool is_high = *out.level[i] > threshold;
    out.high.push_back(is_high);
    (is_high ? high : low).push_back(results[i]);
  }
  out.high_table = annual_means(std::span<const WindowResult>(high), oos_annualized_return);
  out.low_table = annual_means(std::span<const WindowResult>(low), oos_annualized_return);
  return out;
}

// ---------------------------------------------------------------------------
// Break-even cost of the in-sample best rule
// ---------------------------------------------------------------------------

struct BreakEven {
  std::size_t window_id = 0;
  int oos_year = 0;
  std::size_t rule = 0;
  double sharpe = 0.0;
  /// One-way cost (decimal) setting the rule's in-sample mean excess to zero.
  std::optional<double> tc;
};

/// Picks the rule with the highest in-sample Sharpe ratio at the baseline cost
/// and solves for its break-even cost over the same rows.
inline BreakEven best_rule_break_even(const ExcessReturnPanel& panel, const SignalMatrix& signals,
                                      std::span<const double> returns, std::span<const double> rf_daily,
                                      const Window& w, bool reversal_round_trip = false) {
  BreakEven be;
  be.window_id = w.id;
  be.oos_year = year_of(panel.dates[w.oos_begin]);
  double best = -INFINITY;
  for (std::size_t j = 0; j < panel.cols(); ++j) {
    const double s = sample_statistic(panel.column(j).subspan(w.is_begin, w.is_end - w.is_begin), Statistic::Sharpe);
    if (!std::isnan(s) && s > best) {
      best = s;
      be.rule = j;
    }
  }
  be.sharpe = best;
  if (std::isfinite(best))
    be.tc = break_even_tc(signals.column(be.rule), returns, rf_daily, w.is_begin, w.is_end, reversal_round_trip);
  return be;
}

} // namespace dfdr
