#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "dfdr/common.hpp"
#include "dfdr/matrix.hpp"
#include "dfdr/parallel.hpp"
#include "dfdr/rules.hpp"

namespace dfdr {

/// One-way proportional transaction cost in return units (0.0025 = 25 bps),
/// charged each time a long or short position is closed.
struct CostModel {
  double one_way = 0.0;
  /// Charge a reversal (-1 -> +1 or +1 -> -1) as close plus open.
  bool reversal_round_trip = false;

  void validate() const {
    if (!(one_way >= 0.0)) throw ValidationError("cost model: one-way cost must be >= 0");
  }
};

/// Cost multiplier at a row given the previous and current position.
inline double closure_weight(int previous, int current, bool reversal_round_trip) {
  if (previous == 0 || current == previous) return 0.0;
  if (reversal_round_trip && current == -previous) return 2.0;
  return 1.0;
}

/// Daily after-cost excess log returns, one column per rule:
///   excess(t, j) = s(t, j) * r_t - I(t, j) * tc - ln(1 + rf_t)
/// where s(t, j) is the (already lagged) position applied to r_t.
struct ExcessReturnPanel {
  std::vector<Date> dates;
  Matrix<double> excess;
  /// I(t, j): 1 on the row where a non-zero position is exited.
  Matrix<std::uint8_t> closures;
  /// First row at which each rule can trade.
  std::vector<std::size_t> first_usable;

  std::size_t rows() const noexcept { return excess.rows(); }
  std::size_t cols() const noexcept { return excess.cols(); }
  std::span<const double> column(std::size_t j) const { return excess.column(j); }
  std::size_t usable_days(std::size_t j) const { return rows() - std::min(rows(), first_usable[j]); }
};

inline ExcessReturnPanel excess_returns(const SignalMatrix& signals, std::span<const double> returns,
                                        std::span<const double> rf_daily, const CostModel& cost,
                                        unsigned threads = 1) {
  cost.validate();
  const std::size_t rows = signals.rows();
  if (returns.size() != rows || rf_daily.size() != rows)
    throw ValidationError("excess_returns: signals, returns and risk-free rates differ in length");

  std::vector<double> benchmark(rows);
  for (std::size_t t = 0; t < rows; ++t) benchmark[t] = std::log1p(rf_daily[t]);

  ExcessReturnPanel panel;
  panel.dates = signals.dates;
  panel.excess = Matrix<double>(rows, signals.cols());
  panel.closures = Matrix<std::uint8_t>(rows, signals.cols());
  panel.first_usable = signals.warmup;

  parallel_for(signals.cols(), threads, [&](std::size_t j) {
    const auto s = signals.column(j);
    auto out = panel.excess.column(j);
    auto closed = panel.closures.column(j);
    int previous = 0;
    for (std::size_t t = 0; t < rows; ++t) {
      const int pos = s[t];
      const double w = closure_weight(previous, pos, cost.reversal_round_trip);
      closed[t] = w > 0.0 ? 1 : 0;
      out[t] = pos * returns[t] - w * cost.one_way - benchmark[t];
      previous = pos;
    }
  });
  return panel;
}

/// Per-day statistics of an excess-return stream.
struct Performance {
  std::size_t days = 0;
  double mean_excess = 0.0;
  double stdev = 0.0;
  /// Absent when the stream has zero variance.
  std::optional<double> sharpe;
  double annualized_return = 0.0;
  std::optional<double> annualized_sharpe;
};

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? quiet_nan() : s / static_cast<double>(x.size());
}

/// Sample standard deviation (n-1 denominator), two-pass. Exactly zero for a
/// constant sample.
inline double sample_stdev(std::span<const double> x, double mu) {
  if (x.size() < 2) return quiet_nan();
  double ss = 0.0;
  bool varies = false;
  for (double v : x) {
    ss += (v - mu) * (v - mu);
    varies = varies || v != x[0];
  }
  if (!varies) return 0.0;
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline Performance performance(std::span<const double> excess) {
  if (excess.size() < 2) throw InsufficientDataError("performance: need at least 2 observations");
  Performance p;
  p.days = excess.size();
  p.mean_excess = mean(excess);
  p.stdev = sample_stdev(excess, p.mean_excess);
  p.annualized_return = p.mean_excess * kTradingDaysPerYear;
  if (p.stdev > 0.0) {
    p.sharpe = p.mean_excess / p.stdev;
    p.annualized_sharpe = *p.sharpe * std::sqrt(kTradingDaysPerYear);
  }
  return p;
}

/// Performance of column j over rows [begin, end).
inline Performance performance(const ExcessReturnPanel& panel, std::size_t j, std::size_t begin, std::size_t end) {
  if (begin > end || end > panel.rows()) throw ValidationError("performance: window outside panel");
  return performance(panel.column(j).subspan(begin, end - begin));
}

/// One-way cost that sets the mean excess return over rows [begin, end) to
/// zero. Mean excess is affine in the cost, so the root is closed form.
/// Absent when the window contains no closures. May be negative.
inline std::optional<double> break_even_tc(std::span<const std::int8_t> signals, std::span<const double> returns,
                                           std::span<const double> rf_daily, std::size_t begin, std::size_t end,
                                           bool reversal_round_trip = false) {
  if (signals.size() != returns.size() || returns.size() != rf_daily.size())
    throw ValidationError("break_even_tc: inputs differ in length");
  if (begin > end || end > signals.size()) throw ValidationError("break_even_tc: window outside data");
  double gross = 0.0;
  double closures = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const int previous = t == 0 ? 0 : signals[t - 1];
    gross += signals[t] * returns[t] - std::log1p(rf_daily[t]);
    closures += closure_weight(previous, signals[t], reversal_round_trip);
  }
  if (closures == 0.0) return std::nullopt;
  return gross / closures;
}

} // namespace dfdr
