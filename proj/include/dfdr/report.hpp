#pragma once

#include <array>
#include <charconv>
#include <map>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfdr/harness.hpp"
#include "dfdr/montecarlo.hpp"
#include "dfdr/rules.hpp"

namespace dfdr {

// CSV text for the tables written by the command-line tool. Numbers use the
// shortest representation that parses back to the same double, so output is
// byte-stable for equal inputs.

inline std::string format_number(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::optional<double> x) { return x ? format_number(*x) : std::string(); }

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string_view> header) {
    for (auto h : header) field(h);
    end_row();
  }

  CsvWriter& field(std::string_view s) {
    if (!first_) text_ += ',';
    first_ = false;
    text_ += s;
    return *this;
  }
  CsvWriter& field(double x) { return field(std::string_view(format_number(x))); }
  CsvWriter& field(std::optional<double> x) { return field(std::string_view(format_number(x))); }
  CsvWriter& field(std::size_t x) { return field(std::string_view(std::to_string(x))); }
  CsvWriter& field(int x) { return field(std::string_view(std::to_string(x))); }

  void end_row() {
    text_ += '\n';
    first_ = true;
  }

  const std::string& str() const noexcept { return text_; }

 private:
  std::string text_;
  bool first_ = true;
};

// ---------------------------------------------------------------------------
// Rule universe
// ---------------------------------------------------------------------------

/// id,family,params with params as name=value pairs joined by ';', since
/// families differ in arity.
inline std::string universe_csv(std::span<const RuleSpec> rules) {
  CsvWriter w{"id", "family", "params"};
  for (const auto& r : rules) {
    w.field(r.id).field(family_name(r.family()));
    std::string params;
    for (const auto& [k, v] : r.named_params()) {
      if (!params.empty()) params += ';';
      params += std::string(k) + "=" + format_number(v);
    }
    w.field(params);
    w.end_row();
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// Monte Carlo tables
// ---------------------------------------------------------------------------

/// Quartiles of annualized mean excess return (percent) of each planted group.
inline std::string quartiles_csv(const SimOutcome& o) {
  CsvWriter w{"sr_pos", "sr_neg", "group", "q1_pct", "median_pct", "q3_pct"};
  for (const auto& q : o.quartiles) {
    w.field(q.sr_positive).field(q.sr_negative).field(q.group > 0 ? "outperforming" : "underperforming");
    w.field(100.0 * q.q1).field(100.0 * q.median).field(100.0 * q.q3);
    w.end_row();
  }
  return w.str();
}

/// Estimated neutral, positive and negative shares (percent).
inline std::string proportions_csv(const SimOutcome& o) {
  CsvWriter w{"sr_pos", "sr_neg", "pi0_pct", "pi_plus_pct", "pi_minus_pct", "lambda_star"};
  for (const auto& p : o.proportions) {
    w.field(p.sr_positive).field(p.sr_negative);
    w.field(100.0 * p.pi0).field(100.0 * p.pi_plus).field(100.0 * p.pi_minus).field(p.lambda);
    w.end_row();
  }
  return w.str();
}

/// FDR+, power (percent) and portfolio size by method and level.
inline std::string methods_csv(const SimOutcome& o) {
  CsvWriter w{"sr_pos", "sr_neg", "method", "target", "fdr_plus_pct", "false_share_pct", "power_pct",
              "portfolio_size", "nonempty_pct"};
  for (const auto& m : o.methods) {
    w.field(m.sr_positive).field(m.sr_negative).field(method_name(m.method)).field(m.level);
    w.field(100.0 * m.fdr_plus).field(100.0 * m.false_share).field(100.0 * m.power);
    w.field(m.size).field(100.0 * m.nonempty);
    w.end_row();
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// Rolling evaluation
// ---------------------------------------------------------------------------

/// One row per evaluated window.
inline std::string windows_csv(const RollingResult& r, std::span<const Date> dates) {
  CsvWriter w{"window_id", "is_start", "oos_start", "oos_end", "oos_year", "lambda_star", "pi0", "gamma_star",
              "selected", "is_annualized_return", "is_sharpe", "oos_annualized_return", "oos_sharpe"};
  for (const auto& x : r.windows) {
    const auto& win = x.window;
    w.field(win.id).field(format_date(dates[win.is_begin])).field(format_date(dates[win.oos_begin]));
    w.field(format_date(dates[win.oos_end - 1])).field(x.oos_year);
    w.field(x.selection.lambda_star).field(x.selection.pi0).field(x.selection.gamma_star);
    w.field(x.selection.selected.size());
    auto perf = [&](const std::optional<Performance>& p) {
      w.field(p ? std::optional<double>(p->annualized_return) : std::nullopt);
      w.field(p ? p->sharpe : std::nullopt);
    };
    perf(x.is_performance);
    perf(x.oos_performance);
    w.end_row();
  }
  return w.str();
}

/// Long-format annual summary: survivor share (percent of the universe), its
/// standard deviation, in- and out-of-sample annualized return and Sharpe
/// ratio, family shares and window counts.
inline std::string rolling_summary_csv(const RollingResult& r, std::string_view market, std::size_t universe_size,
                                       bool empty_as_risk_free) {
  CsvWriter w{"year", "market", "metric", "value"};
  auto emit = [&](int year, std::string_view metric, double v) {
    w.field(year).field(market).field(metric).field(v);
    w.end_row();
  };
  const std::span<const WindowResult> res(r.windows);

  std::map<int, std::vector<double>> share;
  for (const auto& x : res)
    share[x.oos_year].push_back(100.0 * static_cast<double>(x.selection.selected.size()) /
                                static_cast<double>(universe_size));
  const std::optional<double> empty = empty_as_risk_free ? std::optional<double>(0.0) : std::nullopt;
  const auto is_ret = annual_means(res, [](const WindowResult& x) { return x.is_performance->annualized_return; }, empty);
  const auto oos_ret = annual_means(res, oos_annualized_return, empty);
  const auto oos_sr = annual_means(res, [](const WindowResult& x) { return x.oos_performance->sharpe.value_or(quiet_nan()); }, empty);

  std::size_t k = 0;
  for (const auto& [year, v] : share) {
    const double mu = mean(v);
    emit(year, "survivors_pct", mu);
    emit(year, "survivors_pct_sd", v.size() > 1 ? sample_stdev(v, mu) : quiet_nan());
    emit(year, "is_annualized_return", is_ret[k].mean);
    emit(year, "oos_annualized_return", oos_ret[k].mean);
    emit(year, "oos_sharpe", oos_sr[k].mean);
    std::array<double, 5> fam{};
    std::size_t nf = 0;
    for (const auto& x : res)
      if (x.oos_year == year && x.families) {
        for (std::size_t f = 0; f < 5; ++f) fam[f] += (*x.families)[f];
        ++nf;
      }
    for (std::size_t f = 0; f < 5; ++f)
      emit(year, std::string("family_pct_") + std::string(family_name(kReportFamilyOrder[f])),
           nf ? fam[f] / static_cast<double>(nf) : quiet_nan());
    emit(year, "windows", static_cast<double>(v.size()));
    emit(year, "empty_windows", static_cast<double>(oos_ret[k].empty_windows));
    ++k;
  }
  return w.str();
}

inline std::string persistence_csv(std::span<const std::pair<int, std::vector<PersistenceRow>>> by_horizon,
                                   std::string_view market) {
  CsvWriter w{"year", "market", "metric", "value"};
  for (const auto& [h, rows] : by_horizon)
    for (const auto& row : rows) {
      w.field(row.year).field(market).field("persistence_" + std::to_string(h) + "m").field(row.mean_count);
      w.end_row();
    }
  return w.str();
}

inline std::string crossval_csv(std::span<const CrossValidation> cv, std::string_view market) {
  CsvWriter w{"year", "market", "metric", "value"};
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> acc;
  for (const auto& c : cv) {
    auto& [pct, ret] = acc[c.oos_year];
    if (c.percent_of_is) pct.push_back(*c.percent_of_is);
    if (c.oos_performance) ret.push_back(c.oos_performance->annualized_return);
  }
  for (const auto& [year, v] : acc) {
    w.field(year).field(market).field("confirmed_pct").field(v.first.empty() ? quiet_nan() : mean(v.first));
    w.end_row();
    w.field(year).field(market).field("confirmed_oos_annualized_return");
    w.field(v.second.empty() ? quiet_nan() : mean(v.second));
    w.end_row();
  }
  return w.str();
}

inline std::string stress_csv(const StressSplit& s, std::string_view market) {
  CsvWriter w{"year", "market", "metric", "value"};
  auto table = [&](const std::vector<AnnualRow>& rows, std::string_view tag) {
    for (const auto& row : rows) {
      w.field(row.year).field(market).field(std::string(tag) + "_oos_annualized_return").field(row.mean);
      w.end_row();
      w.field(row.year).field(market).field(std::string(tag) + "_windows").field(static_cast<double>(row.windows));
      w.end_row();
    }
  };
  table(s.high_table, "high");
  table(s.low_table, "low");
  return w.str();
}

} // namespace dfdr
