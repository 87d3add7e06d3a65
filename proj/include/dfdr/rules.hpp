#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "dfdr/common.hpp"
#include "dfdr/dates.hpp"
#include "dfdr/matrix.hpp"
#include "dfdr/parallel.hpp"

namespace dfdr {

/// Rule families in enumeration order.
enum class Family : std::uint8_t { FR, RSI, MA, SR, CB };

inline constexpr std::array<Family, 5> kFamilies = {Family::FR, Family::RSI, Family::MA, Family::SR,
                                                    Family::CB};

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::FR: return "FR";
    case Family::RSI: return "RSI";
    case Family::MA: return "MA";
    case Family::SR: return "SR";
    case Family::CB: return "CB";
  }
  return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
  for (Family f : kFamilies)
    if (family_name(f) == s) return f;
  return std::nullopt;
}

/// Buy after a rise of more than `threshold` from the running low, sell after
/// a fall of more than `threshold` from the running high. hold_days > 0 exits
/// to neutral after that many days in a position.
struct FilterParams {
  double threshold = 0.01;
  int hold_days = 0;
  friend bool operator==(const FilterParams&, const FilterParams&) = default;
};

/// Contrarian oscillator on simple average gains/losses over `lookback` returns.
struct RsiParams {
  int lookback = 14;
  double overbought = 70.0;
  double oversold = 30.0;
  friend bool operator==(const RsiParams&, const RsiParams&) = default;
};

/// fast == 1 compares the raw price with the slow average.
struct MaParams {
  int fast = 1;
  int slow = 50;
  double band = 0.0;
  /// Go neutral inside the band instead of holding the last position.
  bool neutral_in_band = false;
  friend bool operator==(const MaParams&, const MaParams&) = default;
};

struct SupportResistanceParams {
  int lookback = 20;
  double threshold = 0.0;
  friend bool operator==(const SupportResistanceParams&, const SupportResistanceParams&) = default;
};

struct ChannelParams {
  int lookback = 20;
  double width = 0.05;
  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

using RuleParams = std::variant<FilterParams, RsiParams, MaParams, SupportResistanceParams, ChannelParams>;

struct RuleSpec {
  std::size_t id = 0;
  RuleParams params;

  Family family() const { return static_cast<Family>(params.index()); }

  /// First price index at which the rule can hold a position.
  int warmup() const {
    return std::visit(
        [](const auto& p) -> int {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, FilterParams>) return 1;
          else if constexpr (std::is_same_v<P, MaParams>) return p.slow - 1;
          else return p.lookback;
        },
        params);
  }

  /// Largest number of past prices the rule looks at.
  int lookback() const {
    return std::visit(
        [](const auto& p) -> int {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, FilterParams>) return 1;
          else if constexpr (std::is_same_v<P, MaParams>) return p.slow;
          else return p.lookback;
        },
        params);
  }

  std::vector<std::pair<std::string_view, double>> named_params() const {
    return std::visit(
        [](const auto& p) -> std::vector<std::pair<std::string_view, double>> {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, FilterParams>)
            return {{"threshold", p.threshold}, {"hold", p.hold_days}};
          else if constexpr (std::is_same_v<P, RsiParams>)
            return {{"lookback", p.lookback}, {"overbought", p.overbought}, {"oversold", p.oversold}};
          else if constexpr (std::is_same_v<P, MaParams>)
            return {{"fast", p.fast}, {"slow", p.slow}, {"band", p.band},
                    {"neutral_in_band", p.neutral_in_band ? 1.0 : 0.0}};
          else if constexpr (std::is_same_v<P, SupportResistanceParams>)
            return {{"lookback", p.lookback}, {"threshold", p.threshold}};
          else
            return {{"lookback", p.lookback}, {"width", p.width}};
        },
        params);
  }

  friend bool operator==(const RuleSpec&, const RuleSpec&) = default;
};

// ---------------------------------------------------------------------------
// Per-family signal generators. Each returns one position per price index:
// out[t] is the position held after observing prices[0..t].
// ---------------------------------------------------------------------------

using Signal = std::vector<std::int8_t>;

inline Signal filter_rule_signal(std::span<const double> prices, const FilterParams& p) {
  if (!(p.threshold > 0.0)) throw ConfigError("filter rule: threshold must be > 0");
  Signal out(prices.size(), 0);
  if (prices.empty()) return out;

  int state = 0;
  int held = 0;
  double low = prices[0];
  double high = prices[0];
  for (std::size_t t = 1; t < prices.size(); ++t) {
    const double px = prices[t];
    if (state != 1) low = std::min(low, px);
    if (state != -1) high = std::max(high, px);

    if (state != 0 && p.hold_days > 0 && held >= p.hold_days) {
      state = 0;
      low = high = px;
    } else if (state != 1 && px > low * (1.0 + p.threshold)) {
      state = 1;
      high = px;
      held = 0;
    } else if (state != -1 && px < high * (1.0 - p.threshold)) {
      state = -1;
      low = px;
      held = 0;
    }
    if (state != 0) ++held;
    out[t] = static_cast<std::int8_t>(state);
  }
  return out;
}

namespace detail {

/// Sliding max/min over the previous `d` values (excluding index t).
class TrailingExtremes {
public:
  explicit TrailingExtremes(std::span<const double> v, std::size_t d) : v_(v), d_(d) {}

  /// Call with t = d, d+1, ... in order. Returns {max, min} of v[t-d .. t-1].
  std::pair<double, double> at(std::size_t t) {
    while (next_ < t) {
      const std::size_t i = next_++;
      while (!maxq_.empty() && v_[maxq_.back()] <= v_[i]) maxq_.pop_back();
      maxq_.push_back(i);
      while (!minq_.empty() && v_[minq_.back()] >= v_[i]) minq_.pop_back();
      minq_.push_back(i);
    }
    while (maxq_.front() + d_ < t) maxq_.pop_front();
    while (minq_.front() + d_ < t) minq_.pop_front();
    return {v_[maxq_.front()], v_[minq_.front()]};
  }

private:
  std::span<const double> v_;
  std::size_t d_;
  std::size_t next_ = 0;
  std::deque<std::size_t> maxq_, minq_;
};

} // namespace detail

inline Signal moving_average_signal(std::span<const double> prices, const MaParams& p) {
  if (p.fast < 1 || p.fast >= p.slow) throw ConfigError("moving average: need 1 <= fast < slow");
  if (p.band < 0.0) throw ConfigError("moving average: band must be >= 0");
  const std::size_t n = prices.size();
  Signal out(n, 0);
  const auto fast = static_cast<std::size_t>(p.fast);
  const auto slow = static_cast<std::size_t>(p.slow);
  if (n < slow) return out;

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + prices[t];

  int state = 0;
  for (std::size_t t = slow - 1; t < n; ++t) {
    const double fast_ma = fast == 1 ? prices[t] : (prefix[t + 1] - prefix[t + 1 - fast]) / fast;
    const double slow_ma = (prefix[t + 1] - prefix[t + 1 - slow]) / slow;
    if (fast_ma > slow_ma * (1.0 + p.band)) state = 1;
    else if (fast_ma < slow_ma * (1.0 - p.band)) state = -1;
    else if (p.neutral_in_band && p.band > 0.0) state = 0;
    out[t] = static_cast<std::int8_t>(state);
  }
  return out;
}

inline Signal support_resistance_signal(std::span<const double> prices, const SupportResistanceParams& p) {
  if (p.lookback < 2) throw ConfigError("support/resistance: lookback must be >= 2");
  if (p.threshold < 0.0) throw ConfigError("support/resistance: threshold must be >= 0");
  const std::size_t n = prices.size();
  const auto d = static_cast<std::size_t>(p.lookback);
  Signal out(n, 0);
  detail::TrailingExtremes window(prices, d);
  int state = 0;
  for (std::size_t t = d; t < n; ++t) {
    const auto [hi, lo] = window.at(t);
    if (prices[t] > hi * (1.0 + p.threshold)) state = 1;
    else if (prices[t] < lo * (1.0 - p.threshold)) state = -1;
    out[t] = static_cast<std::int8_t>(state);
  }
  return out;
}

inline Signal channel_breakout_signal(std::span<const double> prices, const ChannelParams& p) {
  if (p.lookback < 2) throw ConfigError("channel breakout: lookback must be >= 2");
  if (!(p.width > 0.0)) throw ConfigError("channel breakout: width must be > 0");
  const std::size_t n = prices.size();
  const auto d = static_cast<std::size_t>(p.lookback);
  Signal out(n, 0);
  detail::TrailingExtremes window(prices, d);
  int state = 0;
  for (std::size_t t = d; t < n; ++t) {
    const auto [hi, lo] = window.at(t);
    if (hi - lo <= p.width * lo) {
      if (prices[t] > hi) state = 1;
      else if (prices[t] < lo) state = -1;
    }
    out[t] = static_cast<std::int8_t>(state);
  }
  return out;
}

/// RSI over the last `lookback` log returns ending at each price index, using
/// simple averages. Entries before index `lookback` are NaN; a window with no
/// movement at all reads 50.
inline std::vector<double> rsi_series(std::span<const double> prices, int lookback) {
  const std::size_t n = prices.size();
  const auto h = static_cast<std::size_t>(lookback);
  std::vector<double> out(n, quiet_nan());
  if (n <= h) return out;
  std::vector<double> gains(n + 1, 0.0), losses(n + 1, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    const double r = std::log(prices[t] / prices[t - 1]);
    gains[t + 1] = gains[t] + (r > 0.0 ? r : 0.0);
    losses[t + 1] = losses[t] + (r < 0.0 ? -r : 0.0);
  }
  for (std::size_t t = h; t < n; ++t) {
    // Returns t-h+1 .. t.
    const double g = gains[t + 1] - gains[t + 1 - h];
    const double l = losses[t + 1] - losses[t + 1 - h];
    out[t] = (g + l) > 0.0 ? 100.0 * g / (g + l) : 50.0;
  }
  return out;
}

inline Signal rsi_signal(std::span<const double> prices, const RsiParams& p) {
  if (p.lookback < 2) throw ConfigError("RSI: lookback must be >= 2");
  if (!(0.0 < p.oversold && p.oversold < p.overbought && p.overbought < 100.0))
    throw ConfigError("RSI: need 0 < oversold < overbought < 100");
  const std::vector<double> rsi = rsi_series(prices, p.lookback);
  Signal out(prices.size(), 0);
  int state = 0;
  for (std::size_t t = static_cast<std::size_t>(p.lookback); t < prices.size(); ++t) {
    const double x = rsi[t];
    if (x > p.overbought) state = -1;
    else if (x < p.oversold) state = 1;
    else if (state == -1 && x < 50.0) state = 0;
    else if (state == 1 && x > 50.0) state = 0;
    out[t] = static_cast<std::int8_t>(state);
  }
  return out;
}

/// Dispatches to the family generator for `spec`.
inline Signal rule_signal(std::span<const double> prices, const RuleSpec& spec) {
  return std::visit(
      [&](const auto& p) -> Signal {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FilterParams>) return filter_rule_signal(prices, p);
        else if constexpr (std::is_same_v<P, RsiParams>) return rsi_signal(prices, p);
        else if constexpr (std::is_same_v<P, MaParams>) return moving_average_signal(prices, p);
        else if constexpr (std::is_same_v<P, SupportResistanceParams>) return support_resistance_signal(prices, p);
        else return channel_breakout_signal(prices, p);
      },
      spec.params);
}

/// Positions aligned with returns: row i is the position formed at the close
/// of price index i and applied to the return realised at price index i+1.
struct SignalMatrix {
  std::vector<Date> dates;
  std::vector<RuleSpec> rules;
  Matrix<std::int8_t> signals;
  /// First row at which each rule can be non-zero.
  std::vector<std::size_t> warmup;

  std::size_t rows() const noexcept { return signals.rows(); }
  std::size_t cols() const noexcept { return signals.cols(); }
  std::span<const std::int8_t> column(std::size_t j) const { return signals.column(j); }
};

/// Builds the T-1 x l position matrix for `rules` over `prices` (T closes).
/// `dates` (optional) are the T price dates; the matrix carries dates[1..].
inline SignalMatrix generate_signal_matrix(std::span<const RuleSpec> rules, std::span<const double> prices,
                                           std::span<const Date> dates = {}, unsigned threads = 1) {
  if (rules.empty()) throw ConfigError("generate_signal_matrix: empty universe");
  int max_lookback = 0;
  for (const auto& r : rules) max_lookback = std::max(max_lookback, r.lookback());
  if (prices.size() <= static_cast<std::size_t>(max_lookback))
    throw InsufficientDataError("generate_signal_matrix: " + std::to_string(prices.size()) +
                                " prices do not exceed the longest lookback (" +
                                std::to_string(max_lookback) + ")");
  if (!dates.empty() && dates.size() != prices.size())
    throw ValidationError("generate_signal_matrix: dates and prices differ in length");

  SignalMatrix m;
  const std::size_t rows = prices.size() - 1;
  m.rules.assign(rules.begin(), rules.end());
  m.signals = Matrix<std::int8_t>(rows, rules.size());
  m.warmup.resize(rules.size());
  if (!dates.empty()) m.dates.assign(dates.begin() + 1, dates.end());

  parallel_for(rules.size(), threads, [&](std::size_t j) {
    const Signal s = rule_signal(prices, rules[j]);
    auto col = m.signals.column(j);
    std::copy(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(rows), col.begin());
    m.warmup[j] = static_cast<std::size_t>(rules[j].warmup());
  });
  return m;
}

} // namespace dfdr
