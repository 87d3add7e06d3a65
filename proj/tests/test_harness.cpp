#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfdr/harness.hpp"
#include "dfdr/universe.hpp"

using namespace dfdr;

namespace {

Date d(int y, unsigned m, unsigned day) { return std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{day}; }

// days x rules panel on a business-day calendar; the first `planted` columns
// carry a daily Sharpe ratio of sr_annual / sqrt(260).
ExcessReturnPanel planted_panel(std::size_t days, std::size_t rules, std::size_t planted, double sr_annual,
                                std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ExcessReturnPanel p;
  p.dates = business_days(d(2001, 1, 1), days);
  p.excess = Matrix<double>(days, rules);
  p.closures = Matrix<std::uint8_t>(days, rules);
  p.first_usable.assign(rules, 0);
  const double mu = sr_annual / std::sqrt(260.0) * 0.01;
  for (std::size_t j = 0; j < rules; ++j)
    for (auto& x : p.excess.column(j)) x = (j < planted ? mu : 0.0) + 0.01 * z(eng);
  return p;
}

std::vector<Family> all_ma(std::size_t l) { return std::vector<Family>(l, Family::MA); }

} // namespace

TEST(Portfolio, SingleMember) {
  Matrix<double> m(4, 2);
  for (std::size_t t = 0; t < 4; ++t) m(t, 1) = 0.01 * static_cast<double>(t);
  const std::vector<std::size_t> one{1};
  const auto p = build_portfolio(one, m.view(), 0, 4);
  EXPECT_EQ(p.returns, std::vector<double>(m.column(1).begin(), m.column(1).end()));
}

TEST(Portfolio, Cancellation) {
  Matrix<double> m(5, 2);
  for (std::size_t t = 0; t < 5; ++t) {
    m(t, 0) = 0.003 * static_cast<double>(t + 1);
    m(t, 1) = -m(t, 0);
  }
  const std::vector<std::size_t> both{0, 1};
  for (double x : build_portfolio(both, m.view(), 0, 5).returns) EXPECT_EQ(x, 0.0);
}

TEST(Portfolio, RowMeans) {
  Matrix<double> m(3, 4);
  const double v[3][4] = {{0.01, 0.02, 0.03, 9}, {-0.01, 0.0, 0.04, 9}, {0.0, 0.0, 0.0, 9}};
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) m(t, j) = v[t][j];
  const std::vector<std::size_t> three{0, 1, 2};
  const auto p = build_portfolio(three, m.view(), 1, 3);
  ASSERT_EQ(p.returns.size(), 2u);
  EXPECT_DOUBLE_EQ(p.returns[0], 0.01);
  EXPECT_DOUBLE_EQ(p.returns[1], 0.0);
  EXPECT_TRUE(build_portfolio({}, m.view(), 0, 3).empty());
}

TEST(Families, Percentages) {
  const std::vector<Family> fam{Family::FR, Family::RSI, Family::MA, Family::SR, Family::CB, Family::MA, Family::MA};
  const std::vector<std::size_t> mas{2, 5, 6};
  EXPECT_EQ(*disaggregate_by_family(mas, fam), (std::array<double, 5>{0, 0, 100, 0, 0}));
  const std::vector<std::size_t> each{0, 1, 2, 3, 4};
  EXPECT_EQ(*disaggregate_by_family(each, fam), (std::array<double, 5>{20, 20, 20, 20, 20}));
  const std::vector<std::size_t> mix{0, 2, 5, 6};
  EXPECT_EQ(*disaggregate_by_family(mix, fam), (std::array<double, 5>{0, 25, 75, 0, 0}));
  EXPECT_FALSE(disaggregate_by_family({}, fam).has_value());
}

TEST(Calendar, MonthsAndWindows) {
  const auto dates = business_days(d(2001, 1, 1), 300);
  const auto cal = month_calendar(dates);
  EXPECT_EQ(cal.months.front(), std::chrono::year{2001} / std::chrono::January);
  for (std::size_t m = 0; m < cal.size(); ++m) {
    EXPECT_EQ(month_of(dates[cal.begin(m)]), cal.months[m]);
    EXPECT_EQ(month_of(dates[cal.end(m) - 1]), cal.months[m]);
  }
  RollingConfig cfg;
  cfg.is_months = 3;
  const auto plan = plan_windows(cal, cfg, dates);
  ASSERT_FALSE(plan.windows.empty());
  for (const auto& w : plan.windows) {
    EXPECT_EQ(w.is_end, w.oos_begin);
    EXPECT_EQ(month_of(dates[w.oos_begin]), cal.months[w.oos_month]);
  }
  EXPECT_EQ(plan.windows.size(), cal.size() - 3);
}

TEST(Calendar, ExactlyOneWindow) {
  // Three calendar months of data with 2 IS months and 1 OOS month.
  std::vector<Date> dates;
  for (auto x : business_days(d(2002, 1, 1), 80))
    if (x < d(2002, 4, 1)) dates.push_back(x);
  RollingConfig cfg;
  cfg.is_months = 2;
  const auto plan = plan_windows(month_calendar(dates), cfg, dates);
  EXPECT_EQ(plan.windows.size(), 1u);
  EXPECT_TRUE(plan.skipped.empty());
}

TEST(Rolling, ConfigValidation) {
  RollingConfig cfg;
  cfg.is_months = 1;
  cfg.oos_months = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RollingConfig{};
  cfg.step_months = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Rolling, LookAheadExclusion) {
  const auto panel = planted_panel(900, 60, 12, 3.0, 5);
  RollingConfig cfg;
  cfg.is_months = 12;
  const BootstrapPlan plan{100, 10.0, 42};
  const auto res = rolling_evaluate(panel, all_ma(60), cfg, plan, 4);
  ASSERT_GE(res.windows.size(), 20u);
  std::mt19937_64 eng(6);
  std::normal_distribution<double> z(0.0, 0.5);
  std::uniform_int_distribution<std::size_t> pick(0, res.windows.size() - 1);
  for (int k = 0; k < 20; ++k) {
    const auto& r = res.windows[pick(eng)];
    Matrix<double> mutated = panel.excess;
    for (std::size_t j = 0; j < mutated.cols(); ++j)
      for (std::size_t t = r.window.oos_begin; t < mutated.rows(); ++t) mutated(t, j) = z(eng);
    BootstrapPlan wplan = plan;
    wplan.seed = derive_seed(plan.seed, r.window.id);
    const auto again = select_window(mutated.view(), r.window.is_begin, r.window.is_end, cfg.target,
                                     cfg.lambda_width, cfg.statistic, wplan);
    EXPECT_EQ(again.selected, r.selection.selected);
    EXPECT_EQ(again.gamma_star, r.selection.gamma_star);
    EXPECT_EQ(again.pi0, r.selection.pi0);
  }
}

TEST(Rolling, ThreadInvariant) {
  const auto panel = planted_panel(700, 40, 8, 3.0, 8);
  RollingConfig cfg;
  cfg.is_months = 6;
  const BootstrapPlan plan{100, 10.0, 3};
  const auto a = rolling_evaluate(panel, all_ma(40), cfg, plan, 1);
  const auto b = rolling_evaluate(panel, all_ma(40), cfg, plan, 8);
  ASSERT_EQ(a.windows.size(), b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    EXPECT_EQ(a.windows[i].selection.selected, b.windows[i].selection.selected);
    if (a.windows[i].oos_performance) {
      EXPECT_EQ(a.windows[i].oos_performance->mean_excess, b.windows[i].oos_performance->mean_excess);
    }
  }
}

TEST(Rolling, AnnualAggregationIdentity) {
  const auto panel = planted_panel(1000, 50, 10, 3.0, 9);
  RollingConfig cfg;
  cfg.is_months = 6;
  const auto res = rolling_evaluate(panel, all_ma(50), cfg, {100, 10.0, 4}, 4);
  const auto rows = annual_means(std::span<const WindowResult>(res.windows), oos_annualized_return);
  for (const auto& row : rows) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : res.windows)
      if (r.oos_year == row.year && !r.selection.empty()) {
        s += r.oos_performance->annualized_return;
        ++n;
      }
    EXPECT_EQ(row.windows, n);
    EXPECT_NEAR(row.mean, s / static_cast<double>(n), 1e-15);
  }
  // Full years hold twelve monthly windows.
  bool saw_full = false;
  for (const auto& row : rows) saw_full = saw_full || row.windows + row.empty_windows == 12;
  EXPECT_TRUE(saw_full);
}

TEST(Rolling, EmptyAsRiskFree) {
  std::vector<WindowResult> rs(3);
  for (auto& r : rs) r.oos_year = 2005;
  rs[0].selection.selected = {1};
  rs[0].oos_performance = Performance{};
  rs[0].oos_performance->annualized_return = 0.3;
  const auto skip = annual_means(std::span<const WindowResult>(rs), oos_annualized_return);
  const auto zero = annual_means(std::span<const WindowResult>(rs), oos_annualized_return, 0.0);
  EXPECT_DOUBLE_EQ(skip[0].mean, 0.3);
  EXPECT_EQ(skip[0].empty_windows, 2u);
  EXPECT_DOUBLE_EQ(zero[0].mean, 0.1);
}

TEST(Persistence, LeadingRun) {
  EXPECT_EQ(leading_run(std::vector<double>{-0.1, 0.2}), 0u);
  EXPECT_EQ(leading_run(std::vector<double>{0.1, 0.2, -0.1, 0.3}), 2u);
  const std::vector<std::vector<double>> ones(12, std::vector<double>{0.1, -0.1});
  EXPECT_DOUBLE_EQ(mean_persistence(ones), 1.0);
}

TEST(Persistence, Bounds) {
  const auto panel = planted_panel(1100, 40, 10, 4.0, 10);
  RollingConfig cfg;
  cfg.is_months = 6;
  const auto res = rolling_evaluate(panel, all_ma(40), cfg, {100, 10.0, 5}, 4);
  const auto cal = month_calendar(panel.dates);
  for (int h : {1, 3, 6}) {
    for (const auto& r : res.windows) {
      const auto blocks = persistence_blocks(r, panel.excess.view(), cal, h);
      EXPECT_LE(leading_run(blocks), static_cast<std::size_t>(18 / h));
    }
    for (const auto& row : persistence_by_year(std::span<const WindowResult>(res.windows), panel, h)) {
      EXPECT_GE(row.mean_count, 0.0);
      EXPECT_LE(row.mean_count, 18.0 / h);
    }
  }
}

TEST(CrossValidation, Containment) {
  const auto panel = planted_panel(800, 60, 12, 4.0, 11);
  RollingConfig cfg;
  cfg.is_months = 12;
  const BootstrapPlan plan{100, 10.0, 6};
  const auto res = rolling_evaluate(panel, all_ma(60), cfg, plan, 4);
  const auto cvs = cross_validate(panel, std::span<const WindowResult>(res.windows), cfg, plan, 4);
  ASSERT_EQ(cvs.size(), res.windows.size());
  double planted_share = 0.0;
  std::size_t total = 0;
  for (const auto& cv : cvs) {
    EXPECT_TRUE(std::includes(cv.is_selected.begin(), cv.is_selected.end(), cv.intersection.begin(),
                              cv.intersection.end()));
    EXPECT_TRUE(std::includes(cv.full_sample_selected.begin(), cv.full_sample_selected.end(),
                              cv.intersection.begin(), cv.intersection.end()));
    for (auto j : cv.intersection) {
      EXPECT_TRUE(std::binary_search(cv.oos_profitable.begin(), cv.oos_profitable.end(), j));
      planted_share += j < 12 ? 1.0 : 0.0;
      ++total;
    }
  }
  ASSERT_GT(total, 0u);
  // Planted rules are 20% of the universe but dominate the intersection.
  EXPECT_GT(planted_share / static_cast<double>(total), 0.8);
}

TEST(Stress, SignRule) {
  const auto dates = business_days(d(2003, 1, 1), 200);
  std::vector<WindowResult> rs;
  const auto cal = month_calendar(dates);
  for (std::size_t m = 1; m < cal.size(); ++m) {
    WindowResult r;
    r.window.oos_begin = cal.begin(m);
    r.oos_year = 2003;
    r.selection.selected = {0};
    r.oos_performance = Performance{};
    rs.push_back(r);
  }
  for (double level : {1.0, -1.0}) {
    const StressSeries s{dates, std::vector<double>(dates.size(), level)};
    const auto split = stress_split(std::span<const WindowResult>(rs), dates, s);
    EXPECT_EQ(split.unclassified, 0u);
    for (auto h : split.high) EXPECT_EQ(*h, level > 0);
  }
  // Alternating months: stress +1 in odd calendar months, -1 in even ones.
  std::vector<double> alt;
  for (const auto& x : dates) alt.push_back(static_cast<unsigned>(x.month()) % 2 ? 1.0 : -1.0);
  const auto split = stress_split(std::span<const WindowResult>(rs), dates, StressSeries{dates, alt});
  std::size_t highs = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const unsigned oos_month = static_cast<unsigned>(dates[rs[i].window.oos_begin].month());
    EXPECT_EQ(*split.high[i], (oos_month - 1) % 2 == 1);
    highs += *split.high[i];
  }
  EXPECT_EQ(highs, (rs.size() + 1) / 2);
  // Stress data that stops early leaves later months unclassified.
  const StressSeries short_s{std::vector<Date>(dates.begin(), dates.begin() + 30), std::vector<double>(30, 1.0)};
  EXPECT_GT(stress_split(std::span<const WindowResult>(rs), dates, short_s).unclassified, 0u);
}

TEST(BreakEvenHarness, BestRuleZeroesMean) {
  std::mt19937_64 eng(12);
  std::normal_distribution<double> z(0.0, 0.01);
  std::vector<double> px{100.0};
  for (int t = 0; t < 400; ++t) px.push_back(px.back() * std::exp(z(eng)));
  const auto dates = business_days(d(2004, 1, 1), px.size());
  UniverseGrid g;
  g.ma = MaGrid{{1, 2}, {5, 10, 20}};
  g.sr = SrGrid{{5, 10}};
  const auto u = enumerate_universe(g);
  const auto sm = generate_signal_matrix(u.rules, px, dates);
  std::vector<double> r(px.size() - 1), rf(px.size() - 1, 1e-4);
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = std::log(px[t + 1] / px[t]);
  const auto panel = excess_returns(sm, r, rf, {0.0025});
  const Window w{0, 30, 300, 300, 320, 0};
  const auto be = best_rule_break_even(panel, sm, r, rf, w);
  ASSERT_TRUE(be.tc.has_value());
  const auto again = excess_returns(sm, r, rf, {*be.tc});
  if (*be.tc >= 0.0) {
    EXPECT_LT(std::abs(mean(again.column(be.rule).subspan(30, 270))), 1e-12);
  }
}
