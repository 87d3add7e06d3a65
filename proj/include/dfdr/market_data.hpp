#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfdr/common.hpp"
#include "dfdr/dates.hpp"

namespace dfdr {

/// Dated close prices for one index.
struct PriceSeries {
  std::vector<Date> dates;
  std::vector<double> prices;

  std::size_t size() const noexcept { return prices.size(); }
  friend bool operator==(const PriceSeries&, const PriceSeries&) = default;
};

/// Quoted annual rates and their daily equivalents on the same dates.
struct RiskFreeSeries {
  std::vector<Date> dates;
  std::vector<double> annual;
  std::vector<double> daily;

  std::size_t size() const noexcept { return dates.size(); }
  friend bool operator==(const RiskFreeSeries&, const RiskFreeSeries&) = default;
};

/// Daily log returns; values[i] is the return realised on dates[i].
struct ReturnSeries {
  std::vector<Date> dates;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

/// Financial stress index, positive meaning above-average stress.
struct StressSeries {
  std::vector<Date> dates;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

namespace detail {

struct CsvRow {
  std::size_t line;
  std::string_view date;
  std::string_view value;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view text, const std::string& source, std::size_t line) {
  double v = 0.0;
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ParseError(source, line, "invalid number '" + std::string(text) + "'");
  return v;
}

/// Reads a two-column `date,<value_column>` CSV into (date, value) pairs,
/// sorted by date. Duplicate dates are rejected.
inline std::vector<std::pair<Date, double>> read_dated_csv(const std::filesystem::path& path,
                                                           std::string_view value_column) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const std::string source = path.string();

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  {
    std::string_view header = trim(line);
    if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header.remove_prefix(3);
    const std::string expected = "date," + std::string(value_column);
    if (header != expected)
      throw ParseError(source, lineno, "expected header '" + expected + "'");
  }

  std::vector<std::pair<Date, double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    const auto comma = text.find(',');
    if (comma == std::string_view::npos || text.find(',', comma + 1) != std::string_view::npos)
      throw ParseError(source, lineno, "expected exactly two fields");
    const auto date = parse_iso_date(trim(text.substr(0, comma)));
    if (!date) throw ParseError(source, lineno, "invalid ISO-8601 date");
    rows.emplace_back(*date, parse_number(text.substr(comma + 1), source, lineno));
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first)
      throw ValidationError(source + ": duplicate date " + format_date(rows[i].first));
  }
  return rows;
}

} // namespace detail

inline void validate(const PriceSeries& p) {
  if (p.dates.size() != p.prices.size()) throw ValidationError("price series: length mismatch");
  if (p.size() < 2) throw InsufficientDataError("price series: need at least 2 observations");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p.prices[i] > 0.0))
      throw ValidationError("price series: non-positive price on " + format_date(p.dates[i]));
    if (i > 0 && !(p.dates[i - 1] < p.dates[i]))
      throw ValidationError("price series: dates not strictly increasing at " + format_date(p.dates[i]));
  }
}

/// Loads a `date,close` CSV. Rows may appear in any order.
inline PriceSeries load_price_series(const std::filesystem::path& path) {
  PriceSeries out;
  for (auto& [d, v] : detail::read_dated_csv(path, "close")) {
    out.dates.push_back(d);
    out.prices.push_back(v);
  }
  try {
    validate(out);
  } catch (const Error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return out;
}

inline ReturnSeries log_returns(const PriceSeries& p) {
  if (p.size() < 2) throw InsufficientDataError("log_returns: need at least 2 prices");
  ReturnSeries r;
  r.dates.assign(p.dates.begin() + 1, p.dates.end());
  r.values.resize(p.size() - 1);
  for (std::size_t t = 1; t < p.size(); ++t) r.values[t - 1] = std::log(p.prices[t] / p.prices[t - 1]);
  return r;
}

/// Daily compounding equivalent of an annual rate: (1+S)^(1/260) - 1.
inline double daily_rate(double annual) {
  if (!(annual > -1.0)) throw ValidationError("annual rate must exceed -1");
  return std::expm1(std::log1p(annual) / kTradingDaysPerYear);
}

inline RiskFreeSeries daily_risk_free(std::vector<Date> dates, std::vector<double> annual) {
  if (dates.size() != annual.size()) throw ValidationError("risk-free series: length mismatch");
  RiskFreeSeries out;
  out.daily.reserve(annual.size());
  for (double s : annual) out.daily.push_back(daily_rate(s));
  out.dates = std::move(dates);
  out.annual = std::move(annual);
  return out;
}

/// Indices of quotes above `threshold`, which usually means a percentage was
/// supplied where a decimal fraction was expected.
inline std::vector<std::size_t> rate_sanity_warnings(const RiskFreeSeries& rf, double threshold = 0.25) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rf.annual.size(); ++i)
    if (rf.annual[i] > threshold) out.push_back(i);
  return out;
}

/// Loads a `date,annual_rate` CSV (decimal fractions per annum).
inline RiskFreeSeries load_risk_free(const std::filesystem::path& path) {
  std::vector<Date> dates;
  std::vector<double> annual;
  for (auto& [d, v] : detail::read_dated_csv(path, "annual_rate")) {
    dates.push_back(d);
    annual.push_back(v);
  }
  if (dates.empty()) throw InsufficientDataError(path.string() + ": no risk-free quotes");
  try {
    return daily_risk_free(std::move(dates), std::move(annual));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

/// Loads a `date,stress` CSV.
inline StressSeries load_stress(const std::filesystem::path& path) {
  StressSeries out;
  for (auto& [d, v] : detail::read_dated_csv(path, "stress")) {
    out.dates.push_back(d);
    out.values.push_back(v);
  }
  return out;
}

/// Carries the most recent quote forward onto `calendar`. Calendar dates that
/// precede the first quote have no value and are omitted from the result.
inline RiskFreeSeries forward_fill(const RiskFreeSeries& rf, std::span<const Date> calendar) {
  RiskFreeSeries out;
  std::size_t k = 0;
  bool have = false;
  for (const Date& d : calendar) {
    while (k < rf.size() && !(d < rf.dates[k])) {
      ++k;
      have = true;
    }
    if (!have) continue;
    out.dates.push_back(d);
    out.annual.push_back(rf.annual[k - 1]);
    out.daily.push_back(rf.daily[k - 1]);
  }
  return out;
}

/// Result of intersecting several sorted calendars.
struct Alignment {
  std::vector<Date> dates;
  /// rows[s][i] is the row of series s holding dates[i].
  std::vector<std::vector<std::size_t>> rows;
  /// Rows of each input dropped because their date is not in the intersection.
  std::vector<std::size_t> dropped;
};

inline Alignment align(std::span<const std::span<const Date>> calendars) {
  Alignment out;
  const std::size_t n = calendars.size();
  if (n == 0) throw AlignmentError("align: no series");
  for (const auto& cal : calendars)
    if (!std::is_sorted(cal.begin(), cal.end())) throw AlignmentError("align: input not sorted by date");

  out.rows.resize(n);
  std::vector<std::size_t> pos(n, 0);
  for (;;) {
    bool done = false;
    Date hi = Date{};
    for (std::size_t s = 0; s < n; ++s) {
      if (pos[s] >= calendars[s].size()) {
        done = true;
        break;
      }
      if (s == 0 || hi < calendars[s][pos[s]]) hi = calendars[s][pos[s]];
    }
    if (done) break;
    bool all_equal = true;
    for (std::size_t s = 0; s < n; ++s) {
      while (pos[s] < calendars[s].size() && calendars[s][pos[s]] < hi) ++pos[s];
      if (pos[s] >= calendars[s].size() || calendars[s][pos[s]] != hi) all_equal = false;
    }
    if (!all_equal) continue;
    out.dates.push_back(hi);
    for (std::size_t s = 0; s < n; ++s) out.rows[s].push_back(pos[s]++);
  }
  if (out.dates.empty()) throw AlignmentError("align: calendars have no date in common");
  out.dropped.resize(n);
  for (std::size_t s = 0; s < n; ++s) out.dropped[s] = calendars[s].size() - out.rows[s].size();
  return out;
}

template <class T>
std::vector<T> take(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

/// Prices, returns and daily risk-free rates on one calendar. returns and
/// rf_daily are indexed by return row i, which is realised on prices.dates[i+1].
struct MarketData {
  PriceSeries prices;
  ReturnSeries returns;
  std::vector<double> rf_daily;
  std::vector<std::size_t> dropped;
};

/// Forward-fills the risk-free quotes onto the price calendar, intersects the
/// two, and derives log returns.
inline MarketData make_market_data(const PriceSeries& prices, const RiskFreeSeries& rf) {
  validate(prices);
  const RiskFreeSeries filled = forward_fill(rf, prices.dates);
  const std::span<const Date> cals[] = {prices.dates, filled.dates};
  const Alignment a = align(cals);

  MarketData out;
  out.prices.dates = a.dates;
  out.prices.prices = take(prices.prices, a.rows[0]);
  validate(out.prices);
  out.returns = log_returns(out.prices);
  const std::vector<double> daily = take(filled.daily, a.rows[1]);
  out.rf_daily.assign(daily.begin() + 1, daily.end());
  out.dropped = a.dropped;
  return out;
}

/// Market data with a constant annual risk-free rate on the price calendar.
inline MarketData make_market_data(const PriceSeries& prices, double annual_rate) {
  RiskFreeSeries rf = daily_risk_free(prices.dates, std::vector<double>(prices.size(), annual_rate));
  return make_market_data(prices, rf);
}

} // namespace dfdr
