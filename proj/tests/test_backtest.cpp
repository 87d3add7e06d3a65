#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfdr/backtest.hpp"
#include "dfdr/universe.hpp"

using namespace dfdr;

namespace {

SignalMatrix one_column(std::vector<std::int8_t> s) {
  SignalMatrix m;
  m.signals = Matrix<std::int8_t>(s.size(), 1);
  std::copy(s.begin(), s.end(), m.signals.column(0).begin());
  m.warmup = {0};
  m.rules = {RuleSpec{0, FilterParams{}}};
  return m;
}

std::vector<std::int8_t> random_signal(std::size_t n, std::mt19937_64& eng) {
  std::uniform_int_distribution<int> u(-1, 1);
  std::bernoulli_distribution change(0.15);
  std::vector<std::int8_t> s(n);
  int cur = 0;
  for (auto& x : s) {
    if (change(eng)) cur = u(eng);
    x = static_cast<std::int8_t>(cur);
  }
  return s;
}

} // namespace

TEST(ExcessReturns, NeutralZeroRate) {
  const auto p = excess_returns(one_column({0, 0, 0}), std::vector<double>{0.01, -0.02, 0.03},
                                std::vector<double>(3, 0.0), {0.0025});
  for (double x : p.column(0)) EXPECT_EQ(x, 0.0);
}

TEST(ExcessReturns, SingleLongDay) {
  const auto p = excess_returns(one_column({1}), std::vector<double>{0.01}, std::vector<double>{0.0}, {0.0});
  EXPECT_EQ(p.column(0)[0], 0.01);
}

TEST(ExcessReturns, ClosureChargedOnExitDay) {
  const auto p = excess_returns(one_column({1, 1, 0}), std::vector<double>(3, 0.01), std::vector<double>(3, 0.0),
                                {0.0025});
  EXPECT_DOUBLE_EQ(p.column(0)[0], 0.01);
  EXPECT_DOUBLE_EQ(p.column(0)[1], 0.01);
  EXPECT_DOUBLE_EQ(p.column(0)[2], -0.0025);
  EXPECT_EQ(p.closures(2, 0), 1);
}

TEST(ExcessReturns, ReversalChargesOnceByDefault) {
  const std::vector<double> r(3, 0.0), rf(3, 0.0);
  const auto one = excess_returns(one_column({-1, 1, 1}), r, rf, {0.001, false});
  const auto two = excess_returns(one_column({-1, 1, 1}), r, rf, {0.001, true});
  EXPECT_DOUBLE_EQ(one.column(0)[1], -0.001);
  EXPECT_DOUBLE_EQ(two.column(0)[1], -0.002);
}

TEST(ExcessReturns, LengthMismatch) {
  EXPECT_THROW(excess_returns(one_column({0, 1}), std::vector<double>{0.0}, std::vector<double>{0.0, 0.0}, {}),
               ValidationError);
  EXPECT_THROW(CostModel{-0.1}.validate(), ValidationError);
}

TEST(ExcessReturns, BenchmarkIdentity) {
  std::vector<double> rf{1e-4, 2e-4, 3e-4, 4e-4};
  const auto p = excess_returns(one_column({0, 0, 0, 0}), std::vector<double>(4, 0.05), rf, {0.01});
  double expect = 0.0;
  for (double x : rf) expect -= std::log1p(x);
  EXPECT_DOUBLE_EQ(performance(p.column(0)).mean_excess, expect / 4.0);
}

TEST(ExcessReturns, ClosureRecount) {
  std::mt19937_64 eng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_signal(300, eng);
    const auto p = excess_returns(one_column(s), std::vector<double>(300, 0.0), std::vector<double>(300, 0.0),
                                  {0.001});
    std::size_t exits = 0;
    for (std::size_t t = 1; t < s.size(); ++t)
      if (s[t - 1] != 0 && s[t] != s[t - 1]) ++exits;
    std::size_t counted = 0;
    for (auto c : p.closures.column(0)) counted += c;
    EXPECT_EQ(counted, exits);
  }
}

TEST(Performance, ZeroVariance) {
  const auto p = performance(std::vector<double>(5, 0.0));
  EXPECT_EQ(p.mean_excess, 0.0);
  EXPECT_FALSE(p.sharpe.has_value());
  EXPECT_FALSE(p.annualized_sharpe.has_value());
}

TEST(Performance, Symmetric) {
  const auto p = performance(std::vector<double>{0.01, -0.01});
  EXPECT_EQ(p.mean_excess, 0.0);
  ASSERT_TRUE(p.sharpe.has_value());
  EXPECT_EQ(*p.sharpe, 0.0);
}

TEST(Performance, Annualization) {
  // Two-point series with mean 0.0005 and sample stdev 0.01.
  const double h = 0.01 / std::sqrt(2.0);
  const auto p = performance(std::vector<double>{0.0005 + h, 0.0005 - h});
  EXPECT_NEAR(p.stdev, 0.01, 1e-15);
  EXPECT_NEAR(p.annualized_return, 0.13, 1e-12);
  EXPECT_NEAR(*p.annualized_sharpe, 0.05 * std::sqrt(260.0), 1e-12);
  EXPECT_NEAR(*p.annualized_sharpe, 0.806, 1e-3);
  EXPECT_THROW(performance(std::vector<double>{0.1}), InsufficientDataError);
}

TEST(BreakEven, ClosedForm) {
  // Gross sum 0.02, two closures.
  const std::vector<std::int8_t> s{1, 0, -1, 0};
  const std::vector<double> r{0.015, 0.0, -0.005, 0.0};
  const auto tc = break_even_tc(s, r, std::vector<double>(4, 0.0), 0, 4);
  ASSERT_TRUE(tc.has_value());
  EXPECT_NEAR(*tc, 0.01, 1e-15);
}

TEST(BreakEven, ZeroGrossAndNoClosures) {
  const std::vector<std::int8_t> s{1, 0};
  EXPECT_EQ(*break_even_tc(s, std::vector<double>{0.0, 0.0}, std::vector<double>(2, 0.0), 0, 2), 0.0);
  const std::vector<std::int8_t> flat{1, 1, 1};
  EXPECT_FALSE(break_even_tc(flat, std::vector<double>(3, 0.01), std::vector<double>(3, 0.0), 0, 3).has_value());
}

TEST(BreakEven, ZeroesMeanExcess) {
  std::mt19937_64 eng(7);
  std::normal_distribution<double> z(0.0, 0.01);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 250;
    const auto s = random_signal(n, eng);
    std::vector<double> r(n), rf(n, 1e-4);
    for (auto& x : r) x = z(eng);
    for (bool flag : {false, true}) {
      const auto tc = break_even_tc(s, r, rf, 0, n, flag);
      ASSERT_TRUE(tc.has_value());
      if (*tc < 0) continue;
      const auto p = excess_returns(one_column(s), r, rf, {*tc, flag});
      EXPECT_LT(std::abs(mean(p.column(0))), 1e-12);
    }
  }
}

TEST(Cost, Monotone) {
  std::mt19937_64 eng(17);
  std::normal_distribution<double> z(0.0, 0.01);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 120;
    const auto s = random_signal(n, eng);
    std::vector<double> r(n);
    for (auto& x : r) x = z(eng);
    double prev = mean(excess_returns(one_column(s), r, std::vector<double>(n, 0.0), {0.0}).column(0));
    for (double tc : {0.0005, 0.001, 0.0025, 0.005}) {
      const auto p = excess_returns(one_column(s), r, std::vector<double>(n, 0.0), {tc});
      const double m = mean(p.column(0));
      std::size_t closures = 0;
      for (auto c : p.closures.column(0)) closures += c;
      if (closures > 0) EXPECT_LT(m, prev);
      else EXPECT_EQ(m, prev);
      prev = m;
    }
  }
}
