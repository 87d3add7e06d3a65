#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace dfdr {

/// Trading days per calendar year used for every annualization.
inline constexpr double kTradingDaysPerYear = 260.0;

/// Longest lookback any rule may use (one trading year).
inline constexpr int kMaxLookback = 260;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV rows, dates, numbers).
class ParseError : public Error {
public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Input that parsed but violates a domain invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Bad configuration: empty grid axes, out-of-range parameters, unknown keys.
class ConfigError : public Error {
public:
  using Error::Error;
};

class InsufficientDataError : public Error {
public:
  using Error::Error;
};

class AlignmentError : public Error {
public:
  using Error::Error;
};

inline double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

inline int sign_of(double x) {
  if (x > 0.0) return 1;
  if (x < 0.0) return -1;
  return 0;
}

} // namespace dfdr
