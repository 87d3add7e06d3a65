// Select significantly outperforming rules over one in-sample period.
//
//   select_rules data/prices.csv data/rf.csv

#include <cstdio>

#include "dfdr/backtest.hpp"
#include "dfdr/bootstrap.hpp"
#include "dfdr/market_data.hpp"
#include "dfdr/mht.hpp"
#include "dfdr/universe.hpp"

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s prices.csv rf.csv\n", argv[0]);
    return 2;
  }
  using namespace dfdr;
  const MarketData md = make_market_data(load_price_series(argv[1]), load_risk_free(argv[2]));
  const Universe u = enumerate_universe(default_grid());
  const SignalMatrix signals = generate_signal_matrix(u.rules, md.prices.prices, md.prices.dates);
  const ExcessReturnPanel panel = excess_returns(signals, md.returns.values, md.rf_daily, CostModel{0.0025});

  // Two years of rows after every rule has warmed up.
  std::size_t begin = 0;
  for (auto r : panel.first_usable) begin = std::max(begin, r);
  const std::size_t end = std::min(panel.rows(), begin + 520);

  const BootstrapPlan plan{500, 10.0, 42};
  const auto boot = bootstrap_p_values(panel.excess.view().rows_between(begin, end), plan);
  const auto sel = dfdr_plus(boot.pvalues, make_lambda_grid(plan.replications), 0.10);
  const auto prop = estimate_proportions(boot.pvalues, sel.pi0);

  std::printf("rows %zu..%zu, %zu rules\n", begin, end, u.size());
  std::printf("lambda* %.3f  pi0 %.3f  selected %zu\n", *sel.lambda_star, sel.pi0, sel.selected.size());
  std::printf("shares: neutral %.1f%%  positive %.1f%%  negative %.1f%%\n", 100 * prop.pi0, 100 * prop.pi_plus,
              100 * prop.pi_minus);
  for (std::size_t j : sel.selected) {
    const auto perf = performance(panel, j, begin, end);
    std::printf("  rule %4zu %-3s  p %.3f  annualized %.2f%%\n", j, family_name(u.rules[j].family()).data(),
                boot.pvalues.p[j], 100 * perf.annualized_return);
  }
}
