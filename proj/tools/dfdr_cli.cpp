#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "dfdr/backtest.hpp"
#include "dfdr/bootstrap.hpp"
#include "dfdr/harness.hpp"
#include "dfdr/market_data.hpp"
#include "dfdr/mht.hpp"
#include "dfdr/montecarlo.hpp"
#include "dfdr/report.hpp"
#include "dfdr/universe.hpp"

#ifndef DFDR_VERSION
#define DFDR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfdr;

namespace {

// ---------------------------------------------------------------------------
// Hashing and output directory bookkeeping
// ---------------------------------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Collects outputs, input digests and the configuration echo, and writes
/// manifest.json. A run that throws leaves status INCOMPLETE and an
/// INCOMPLETE marker file behind.
class Run {
 public:
  Run(std::string command, std::string out) : command_(std::move(command)), out_(std::move(out)) {}

  void start() {
    fs::create_directories(out_);
    std::ofstream(fs::path(out_) / "INCOMPLETE") << "run did not finish\n";
  }

  void input(const std::string& key, const std::string& path) {
    if (path.empty()) return;
    if (!fs::exists(path)) throw Error("input file not found: '" + path + "'");
    inputs_[key] = {{"path", path}, {"sha256", sha256_hex(read_file(path))}};
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(out_) / name, std::ios::binary);
    if (!f) throw Error("cannot write '" + (fs::path(out_) / name).string() + "'");
    f << text;
    outputs_[name] = sha256_hex(text);
  }

  void finish(const json& config, std::uint64_t seed, const std::string& error = {}) {
    json m;
    m["tool"] = "dfdr";
    m["version"] = DFDR_VERSION;
    m["command"] = command_;
    m["config"] = config;
    m["seed"] = seed;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["status"] = error.empty() ? "complete" : "INCOMPLETE";
    if (!error.empty()) m["error"] = error;
    std::ofstream(fs::path(out_) / "manifest.json") << m.dump(2) << '\n';
    if (error.empty()) fs::remove(fs::path(out_) / "INCOMPLETE");
  }

 private:
  std::string command_, out_;
  json inputs_ = json::object();
  json outputs_ = json::object();
};

// ---------------------------------------------------------------------------
// JSON configuration files: a flat object keyed by long flag names.
// ---------------------------------------------------------------------------

/// Long names of boolean flags; CLI11 does not expose flag-ness uniformly.
std::set<std::string>& flag_names() {
  static std::set<std::string> names;
  return names;
}

CLI::Option* add_bool_flag(CLI::App* c, const std::string& name, bool& var, const std::string& help) {
  flag_names().insert(name);
  return c->add_flag("--" + name, var, help);
}

/// Expands a config object into command-line tokens for `sub`. Keys given
/// explicitly on the command line are skipped so flags take precedence.
std::vector<std::string> config_tokens(const std::string& path, CLI::App* sub,
                                       const std::vector<std::string>& given) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt || key == "config" || key == "help")
      throw ConfigError(path + ": unknown key '" + key + "' for '" + sub->get_name() + "'");
    const std::string flag = "--" + key;
    if (std::find_if(given.begin(), given.end(), [&](const std::string& g) {
          return g == flag || g.rfind(flag + "=", 0) == 0;
        }) != given.end())
      continue;
    auto scalar = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return v.dump();
      if (v.is_number()) return format_number(v.get<double>());
      throw ConfigError(path + ": key '" + key + "' has an unsupported value type");
    };
    if (flag_names().count(key)) {
      if (!value.is_boolean()) throw ConfigError(path + ": key '" + key + "' must be true or false");
      if (value.get<bool>()) out.push_back(flag);
      continue;
    }
    if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v);
      out.push_back(flag + "=" + joined);
    } else {
      out.push_back(flag + "=" + scalar(value));
    }
  }
  return out;
}

/// JSON value for one option's final text: numbers stay numbers, so every
/// numeric flag appears in the manifest exactly as parsed.
json typed(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  double d = 0.0;
  const auto* end = s.data() + s.size();
  if (!s.empty()) {
    long long i = 0;
    auto ri = std::from_chars(s.data(), end, i);
    if (ri.ec == std::errc{} && ri.ptr == end) return i;
    auto rd = std::from_chars(s.data(), end, d);
    if (rd.ec == std::errc{} && rd.ptr == end) return d;
  }
  return s;
}

json config_echo(const CLI::App* app) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty()) continue;
    const std::string& name = names.front();
    if (name == "help" || name == "config" || name == "threads") continue;
    std::vector<std::string> values;
    if (opt->count() > 0) values = opt->results();
    else if (!opt->get_default_str().empty()) values = {opt->get_default_str()};
    const bool is_flag = flag_names().count(name) > 0;
    const bool is_list = opt->get_expected_max() > 1;
    if (is_flag) {
      out[name] = opt->count() > 0;
    } else if (is_list) {
      json arr = json::array();
      for (const auto& v : values) {
        std::stringstream ss(v);
        std::string part;
        while (std::getline(ss, part, ',')) arr.push_back(typed(part));
      }
      out[name] = arr;
    } else {
      out[name] = values.empty() ? json(nullptr) : typed(values.back());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared options
// ---------------------------------------------------------------------------

struct Options {
  std::string out = "out";
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string market = "market";

  std::string prices, rf, universe, stress;
  double rf_rate = 0.0;
  double tc_bps = 0.0;
  bool reversal_round_trip = false;
  std::string start, end;

  std::size_t replications = 1000;
  double mean_block = 10.0;
  std::string statistic = "sharpe";

  std::string method = "dfdr";
  double target = 0.10;
  double lambda = 0.6;
  double alpha = 0.05;
  double grid_width = 0.05;
  std::string pvalues;

  int is_months = 24, oos_months = 1, step_months = 1;
  double cv_target = 0.20;
  bool empty_as_risk_free = false;
  std::vector<int> horizons{1};
  std::string stress_rule = "sign";

  std::size_t mc_rules = 2000, mc_days = 155, mc_reps = 100;
  double pi_plus = 0.2, pi_minus = 0.3;
  std::vector<double> sr_pos{2, 3, 4}, sr_neg{-2, -3, -4};
  std::vector<double> fdr_targets{0.1, 0.2}, rw_alphas{0.05, 0.2};
  bool paper_scale = false;
  std::uint64_t base_seed = 7;
};

void add_common(CLI::App* c, Options& o) {
  c->add_option("--config", "JSON file of option values keyed by long flag name (see schema/config.schema.json)")
      ->check(CLI::ExistingFile);
  c->add_option("--out", o.out, "Output directory")->capture_default_str();
  c->add_option("--seed", o.seed, "Master random seed")->capture_default_str();
  c->add_option("--threads", o.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_data(CLI::App* c, Options& o, bool stress = false) {
  c->add_option("--prices", o.prices, "Price CSV (date,close)")->required()->check(CLI::ExistingFile);
  c->add_option("--rf", o.rf, "Risk-free CSV (date,annual_rate); overrides --rf-rate")->check(CLI::ExistingFile);
  c->add_option("--rf-rate", o.rf_rate, "Constant annual risk-free rate as a decimal fraction")
      ->check(CLI::Range(-0.99, 10.0))
      ->capture_default_str();
  c->add_option("--universe", o.universe, "Universe grid JSON (default: built-in 618-rule grid)")
      ->check(CLI::ExistingFile);
  c->add_option("--tc-bps", o.tc_bps, "One-way transaction cost in basis points")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  add_bool_flag(c, "reversal-round-trip", o.reversal_round_trip, "Charge a position reversal as two closures");
  c->add_option("--market", o.market, "Market label written to long-format outputs")->capture_default_str();
  if (stress) c->add_option("--stress", o.stress, "Stress CSV (date,stress)")->required()->check(CLI::ExistingFile);
}

void add_window(CLI::App* c, Options& o) {
  c->add_option("--start", o.start, "First date (YYYY-MM-DD) of the evaluated rows");
  c->add_option("--end", o.end, "Last date (YYYY-MM-DD) of the evaluated rows");
}

void add_bootstrap(CLI::App* c, Options& o) {
  c->add_option("--replications,-B", o.replications, "Bootstrap replications")
      ->check(CLI::Range(std::size_t{3}, std::size_t{1000000}))
      ->capture_default_str();
  c->add_option("--mean-block", o.mean_block, "Expected stationary-bootstrap block length (days)")
      ->check(CLI::Range(1.0, 1e6))
      ->capture_default_str();
  c->add_option("--statistic", o.statistic, "Performance statistic")
      ->check(CLI::IsMember({"sharpe", "mean"}))
      ->capture_default_str();
}

void add_rolling(CLI::App* c, Options& o) {
  c->add_option("--is-months", o.is_months, "In-sample length in months")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--oos-months", o.oos_months, "Out-of-sample length in months")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--step-months", o.step_months, "Roll step in months")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--target", o.target, "DFDR+ target rate")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c->add_option("--grid-width", o.grid_width, "Spacing of the lambda grid")
      ->check(CLI::Range(0.0, 0.5))
      ->capture_default_str();
  add_bool_flag(c, "empty-as-risk-free", o.empty_as_risk_free,
              "Count windows without survivors as zero excess return in annual means");
  c->add_option("--start", o.start, "Skip windows whose in-sample starts before this date");
  c->add_option("--end", o.end, "Skip windows whose out-of-sample ends after this date");
}

// ---------------------------------------------------------------------------
// Data assembly
// ---------------------------------------------------------------------------

std::optional<Date> parse_date_flag(const std::string& s, const char* flag) {
  if (s.empty()) return std::nullopt;
  const auto d = parse_iso_date(s);
  if (!d) throw ConfigError(std::string(flag) + ": invalid date '" + s + "'");
  return d;
}

Statistic statistic_of(const Options& o) { return o.statistic == "mean" ? Statistic::MeanExcess : Statistic::Sharpe; }

/// bps enter here and nowhere else.
CostModel cost_of(const Options& o) { return CostModel{o.tc_bps / 10000.0, o.reversal_round_trip}; }

Universe load_universe(const Options& o, Run& run) {
  if (o.universe.empty()) return enumerate_universe(default_grid());
  run.input("universe", o.universe);
  json j;
  try {
    j = json::parse(read_file(o.universe));
  } catch (const json::exception& e) {
    throw ConfigError(o.universe + ": " + e.what());
  }
  return enumerate_universe(grid_from_json(j));
}

struct Loaded {
  MarketData data;
  Universe universe;
  SignalMatrix signals;
  ExcessReturnPanel panel;
};

Loaded load(const Options& o, Run& run) {
  run.input("prices", o.prices);
  run.input("rf", o.rf);
  Loaded l;
  const PriceSeries prices = load_price_series(o.prices);
  if (o.rf.empty()) {
    l.data = make_market_data(prices, o.rf_rate);
  } else {
    const RiskFreeSeries rf = load_risk_free(o.rf);
    for (std::size_t i : rate_sanity_warnings(rf))
      std::fprintf(stderr, "warning: %s: annual rate %g on %s looks like a percentage, expected a decimal fraction\n",
                   o.rf.c_str(), rf.annual[i], format_date(rf.dates[i]).c_str());
    l.data = make_market_data(prices, rf);
  }
  l.universe = load_universe(o, run);
  l.signals = generate_signal_matrix(l.universe.rules, l.data.prices.prices, l.data.prices.dates, o.threads);
  l.panel = excess_returns(l.signals, l.data.returns.values, l.data.rf_daily, cost_of(o), o.threads);
  return l;
}

/// Rows [begin, end) of the panel within --start/--end, starting no earlier
/// than the last rule warm-up.
std::pair<std::size_t, std::size_t> row_range(const Options& o, const ExcessReturnPanel& p) {
  std::size_t warm = 0;
  for (auto r : p.first_usable) warm = std::max(warm, r);
  std::size_t begin = warm, end = p.rows();
  if (const auto s = parse_date_flag(o.start, "--start")) {
    begin = static_cast<std::size_t>(std::lower_bound(p.dates.begin(), p.dates.end(), *s) - p.dates.begin());
    if (begin < warm)
      throw ConfigError("--start " + o.start + " falls inside rule warm-up (first usable " +
                        format_date(p.dates[warm]) + ")");
  }
  if (const auto e = parse_date_flag(o.end, "--end"))
    end = static_cast<std::size_t>(std::upper_bound(p.dates.begin(), p.dates.end(), *e) - p.dates.begin());
  if (end <= begin || end - begin < 2) throw InsufficientDataError("fewer than two rows between --start and --end");
  return {begin, end};
}

RollingConfig rolling_config(const Options& o) {
  RollingConfig c;
  c.is_months = o.is_months;
  c.oos_months = o.oos_months;
  c.step_months = o.step_months;
  c.start = parse_date_flag(o.start, "--start");
  c.end = parse_date_flag(o.end, "--end");
  c.target = o.target;
  c.cv_target = o.cv_target;
  c.lambda_width = o.grid_width;
  c.statistic = statistic_of(o);
  c.empty_as_risk_free = o.empty_as_risk_free;
  c.validate();
  return c;
}

BootstrapPlan plan_of(const Options& o) {
  BootstrapPlan p{o.replications, o.mean_block, o.seed};
  p.validate();
  return p;
}

std::string skipped_csv(const RollingResult& r) {
  CsvWriter w{"window_id", "reason"};
  for (const auto& s : r.skipped) {
    w.field(s.id).field(s.reason);
    w.end_row();
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_rules(const Options& o, Run& run) {
  const Universe u = load_universe(o, run);
  run.write("rules.csv", universe_csv(u.rules));
  std::printf("%zu rules (FR %zu, RSI %zu, MA %zu, SR %zu, CB %zu)\n", u.size(), u.counts[0], u.counts[1],
              u.counts[2], u.counts[3], u.counts[4]);
}

void cmd_backtest(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  const auto [begin, end] = row_range(o, l.panel);
  CsvWriter w{"id", "mean_excess", "sharpe", "annualized_return", "breakeven_bps"};
  for (std::size_t j = 0; j < l.panel.cols(); ++j) {
    const Performance p = performance(l.panel, j, begin, end);
    const auto tc = break_even_tc(l.signals.column(j), l.data.returns.values, l.data.rf_daily, begin, end,
                                  o.reversal_round_trip);
    w.field(j).field(p.mean_excess).field(p.sharpe).field(p.annualized_return);
    w.field(tc ? std::optional<double>(*tc * 10000.0) : std::nullopt);
    w.end_row();
  }
  run.write("backtest.csv", w.str());
}

PValueSet compute_pvalues(const Options& o, const Loaded& l, std::size_t begin, std::size_t end,
                          BootstrapResult* keep = nullptr) {
  auto r = bootstrap_p_values(l.panel.excess.view().rows_between(begin, end), plan_of(o), statistic_of(o), o.threads);
  PValueSet pv = r.pvalues;
  if (keep) *keep = std::move(r);
  return pv;
}

void cmd_pvalues(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  const auto [begin, end] = row_range(o, l.panel);
  const PValueSet pv = compute_pvalues(o, l, begin, end);
  CsvWriter w{"id", "phi", "sign", "p"};
  for (std::size_t j = 0; j < pv.size(); ++j) {
    w.field(j).field(pv.phi[j]).field(pv.sign[j]).field(pv.p[j]);
    w.end_row();
  }
  run.write("pvalues.csv", w.str());
  CsvWriter s{"support_point", "count"};
  const auto hist = pv.histogram();
  for (std::size_t k = 1; k < hist.size(); ++k) {
    s.field(pv.support_point(k)).field(hist[k]);
    s.end_row();
  }
  run.write("support.csv", s.str());
}

/// Reads `id,phi,sign,p` as written by `pvalues`; every p must lie on {k/B}.
PValueSet read_pvalues(const std::string& path, std::size_t B) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (detail::trim(line) != "id,phi,sign,p") throw ParseError(path, 1, "expected header 'id,phi,sign,p'");
  std::vector<std::uint32_t> ranks;
  std::vector<double> phi;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) f.push_back(part);
    if (f.size() != 4) throw ParseError(path, lineno, "expected 4 fields");
    if (std::stoul(f[0]) != ranks.size()) throw ParseError(path, lineno, "ids must be 0, 1, 2, ... in order");
    const std::string_view ph = detail::trim(f[1]);
    phi.push_back(ph == "NaN" ? quiet_nan() : detail::parse_number(ph, path, lineno));
    const double p = detail::parse_number(f[3], path, lineno);
    const long long k = std::llround(p * static_cast<double>(B));
    if (k < 1 || k > static_cast<long long>(B) || p != static_cast<double>(k) / static_cast<double>(B))
      throw ParseError(path, lineno, "p-value " + f[3] + " is not a support point k/" + std::to_string(B));
    ranks.push_back(static_cast<std::uint32_t>(k));
  }
  return make_pvalue_set(B, std::move(ranks), std::move(phi));
}

void cmd_select(const Options& o, Run& run, bool from_file) {
  std::optional<Loaded> l;
  BootstrapResult boot;
  PValueSet pv;
  std::vector<Family> fam;
  if (from_file) {
    if (o.method == "rw") throw ConfigError("--method rw needs the bootstrap replicates: pass --prices instead of --pvalues");
    run.input("pvalues", o.pvalues);
    pv = read_pvalues(o.pvalues, o.replications);
    if (!o.universe.empty()) fam = load_universe(o, run).families();
  } else {
    l = load(o, run);
    const auto [begin, end] = row_range(o, l->panel);
    pv = compute_pvalues(o, *l, begin, end, &boot);
    fam = l->universe.families();
  }
  if (!fam.empty() && fam.size() != pv.size())
    throw ValidationError("universe has " + std::to_string(fam.size()) + " rules but p-values cover " +
                          std::to_string(pv.size()));

  std::vector<std::size_t> selected;
  json summary = json::object();
  CsvWriter s{"lambda_star", "pi0", "gamma_star", "R_plus", "F_plus", "fdr_hat"};
  if (o.method == "rw") {
    const auto r = rw_stepm_select(boot.observed, boot.replicates, o.alpha);
    selected = r.rejected;
    std::sort(selected.begin(), selected.end());
    s.field("").field("").field("").field(selected.size()).field("").field("");
  } else {
    DfdrSelection d = o.method == "dfdr" ? dfdr_plus(pv, make_lambda_grid(pv.replications, o.grid_width), o.target)
                                         : storey_fixed_select(pv, o.lambda, o.target);
    selected = d.selected;
    s.field(d.lambda_star).field(d.pi0).field(d.gamma_star).field(d.r_hat);
    s.field(d.gamma_star ? std::optional<double>(d.f_hat) : std::nullopt);
    s.field(d.gamma_star ? std::optional<double>(d.fdr_hat) : std::nullopt);
  }
  s.end_row();

  std::vector<bool> in(pv.size(), false);
  for (auto j : selected) in[j] = true;
  CsvWriter w{"id", "family", "p", "sign", "selected"};
  for (std::size_t j = 0; j < pv.size(); ++j) {
    w.field(j).field(fam.empty() ? std::string_view() : family_name(fam[j])).field(pv.p[j]).field(pv.sign[j]);
    w.field(in[j] ? 1 : 0);
    w.end_row();
  }
  run.write("selection.csv", w.str());
  run.write("summary.csv", s.str());
  std::fputs(s.str().c_str(), stdout);
}

RollingResult run_rolling(const Options& o, const Loaded& l) {
  std::vector<Family> fam = l.universe.families();
  return rolling_evaluate(l.panel, fam, rolling_config(o), plan_of(o), o.threads);
}

void cmd_rolling(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  const RollingResult r = run_rolling(o, l);
  if (r.windows.empty()) throw InsufficientDataError("no rolling window fits the data");
  run.write("windows.csv", windows_csv(r, l.panel.dates));
  run.write("skipped.csv", skipped_csv(r));
  run.write("rolling.csv", rolling_summary_csv(r, o.market, l.universe.size(), o.empty_as_risk_free));
}

void cmd_persistence(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  const RollingResult r = run_rolling(o, l);
  if (r.windows.empty()) throw InsufficientDataError("no rolling window fits the data");
  std::vector<std::pair<int, std::vector<PersistenceRow>>> rows;
  for (int h : o.horizons) rows.emplace_back(h, persistence_by_year(r.windows, l.panel, h));
  run.write("windows.csv", windows_csv(r, l.panel.dates));
  run.write("persistence.csv", persistence_csv(rows, o.market));
}

void cmd_crossval(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  const RollingResult r = run_rolling(o, l);
  if (r.windows.empty()) throw InsufficientDataError("no rolling window fits the data");
  const auto cv = cross_validate(l.panel, r.windows, rolling_config(o), plan_of(o), o.threads);
  CsvWriter w{"window_id", "oos_year", "is_selected", "oos_profitable", "full_sample_selected", "intersection",
              "percent_of_is", "oos_annualized_return"};
  for (const auto& c : cv) {
    w.field(c.window_id).field(c.oos_year).field(c.is_selected.size()).field(c.oos_profitable.size());
    w.field(c.full_sample_selected.size()).field(c.intersection.size()).field(c.percent_of_is);
    w.field(c.oos_performance ? std::optional<double>(c.oos_performance->annualized_return) : std::nullopt);
    w.end_row();
  }
  run.write("crossval_windows.csv", w.str());
  run.write("crossval.csv", crossval_csv(cv, o.market));
}

void cmd_breakeven(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  const RollingConfig cfg = rolling_config(o);
  std::size_t warm = 0;
  for (auto x : l.panel.first_usable) warm = std::max(warm, x);
  const WindowPlan plan = plan_windows(month_calendar(l.panel.dates), cfg, l.panel.dates, warm);
  if (plan.windows.empty()) throw InsufficientDataError("no rolling window fits the data");
  std::vector<BreakEven> be(plan.windows.size());
  parallel_for(plan.windows.size(), o.threads, [&](std::size_t i) {
    be[i] = best_rule_break_even(l.panel, l.signals, l.data.returns.values, l.data.rf_daily, plan.windows[i],
                                 o.reversal_round_trip);
  });
  CsvWriter w{"window_id", "oos_year", "rule", "family", "is_sharpe", "breakeven_bps"};
  std::map<int, std::vector<double>> by_year;
  for (const auto& b : be) {
    w.field(b.window_id).field(b.oos_year).field(b.rule).field(family_name(l.universe.rules[b.rule].family()));
    w.field(b.sharpe).field(b.tc ? std::optional<double>(*b.tc * 10000.0) : std::nullopt);
    w.end_row();
    if (b.tc) by_year[b.oos_year].push_back(*b.tc * 10000.0);
  }
  CsvWriter y{"year", "market", "metric", "value"};
  for (const auto& [year, v] : by_year) {
    y.field(year).field(o.market).field("breakeven_bps").field(mean(v));
    y.end_row();
  }
  run.write("breakeven_windows.csv", w.str());
  run.write("breakeven.csv", y.str());
}

void cmd_stress(const Options& o, Run& run) {
  const Loaded l = load(o, run);
  run.input("stress", o.stress);
  const StressSeries stress = load_stress(o.stress);
  const RollingResult r = run_rolling(o, l);
  if (r.windows.empty()) throw InsufficientDataError("no rolling window fits the data");
  const auto split =
      stress_split(r.windows, l.panel.dates, stress, o.stress_rule == "median" ? StressRule::MedianSplit : StressRule::Sign);
  CsvWriter w{"window_id", "oos_year", "stress_level", "regime"};
  for (std::size_t i = 0; i < r.windows.size(); ++i) {
    w.field(r.windows[i].window.id).field(r.windows[i].oos_year).field(split.level[i]);
    w.field(!split.high[i] ? "unclassified" : *split.high[i] ? "high" : "low");
    w.end_row();
  }
  run.write("stress_windows.csv", w.str());
  run.write("stress.csv", stress_csv(split, o.market));
}

void cmd_montecarlo(const Options& o, Run& run) {
  (void)run;
  SimDesign d = o.paper_scale ? SimDesign::paper_scale() : SimDesign{};
  if (!o.paper_scale) {
    d.rules = o.mc_rules;
    d.reps = o.mc_reps;
    d.replications = o.replications;
  }
  d.days = o.mc_days;
  d.pi_plus = o.pi_plus;
  d.pi_minus = o.pi_minus;
  d.sr_positive = o.sr_pos;
  d.sr_negative = o.sr_neg;
  d.mean_block = o.mean_block;
  d.seed = o.seed;
  d.fdr_targets = o.fdr_targets;
  d.rw_alphas = o.rw_alphas;
  d.storey_lambda = o.lambda;
  d.lambda_width = o.grid_width;
  d.validate();
  BasePanelSpec spec;
  spec.rules = d.rules;
  spec.days = d.days;
  spec.seed = o.base_seed;
  const auto base = synthetic_base_panel(spec);
  const SimOutcome out = run_power_study(d, base, o.threads);
  run.write("quartiles.csv", quartiles_csv(out));
  run.write("proportions.csv", proportions_csv(out));
  run.write("methods.csv", methods_csv(out));
  if (out.degenerate) std::fprintf(stderr, "warning: %zu planted columns left neutral (zero volatility)\n", out.degenerate);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Technical trading rule evaluation under discrete false discovery rate control"};
  app.set_version_flag("--version", DFDR_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Options o;

  auto* rules = app.add_subcommand("rules", "Rule universe utilities");
  rules->require_subcommand(1);
  auto* rules_export = rules->add_subcommand("export", "Write the enumerated universe as rules.csv");
  add_common(rules_export, o);
  rules_export->add_option("--universe", o.universe, "Universe grid JSON (default: built-in grid)")
      ->check(CLI::ExistingFile);

  auto* backtest = app.add_subcommand("backtest", "Per-rule performance and break-even cost");
  add_common(backtest, o);
  add_data(backtest, o);
  add_window(backtest, o);

  auto* pvalues = app.add_subcommand("pvalues", "Bootstrap p-values on the selected rows");
  add_common(pvalues, o);
  add_data(pvalues, o);
  add_window(pvalues, o);
  add_bootstrap(pvalues, o);

  auto* select = app.add_subcommand("select", "Select outperforming rules");
  add_common(select, o);
  select->add_option("--pvalues", o.pvalues, "p-value CSV written by 'pvalues' (dfdr and storey only)")
      ->check(CLI::ExistingFile);
  select->add_option("--prices", o.prices, "Price CSV (date,close); computes p-values in place")
      ->check(CLI::ExistingFile);
  select->add_option("--rf", o.rf, "Risk-free CSV (date,annual_rate)")->check(CLI::ExistingFile);
  select->add_option("--rf-rate", o.rf_rate, "Constant annual risk-free rate")->capture_default_str();
  select->add_option("--universe", o.universe, "Universe grid JSON")->check(CLI::ExistingFile);
  select->add_option("--tc-bps", o.tc_bps, "One-way transaction cost in basis points")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  add_bool_flag(select, "reversal-round-trip", o.reversal_round_trip, "Charge a reversal as two closures");
  add_window(select, o);
  add_bootstrap(select, o);
  select->add_option("--method", o.method, "Selection method")
      ->check(CLI::IsMember({"dfdr", "storey", "rw"}))
      ->capture_default_str();
  select->add_option("--target", o.target, "Target false discovery rate")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  select->add_option("--lambda", o.lambda, "Fixed lambda for --method storey")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  select->add_option("--alpha", o.alpha, "Familywise level for --method rw")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  select->add_option("--grid-width", o.grid_width, "Spacing of the lambda grid for --method dfdr")
      ->check(CLI::Range(0.0, 0.5))
      ->capture_default_str();

  std::vector<CLI::App*> rolling_like;
  for (const char* name : {"rolling", "persistence", "crossval", "breakeven", "stress"}) {
    const std::map<std::string, std::string> help = {
        {"rolling", "Rolling in-sample selection and out-of-sample performance"},
        {"persistence", "Consecutive out-of-sample horizons beating the risk-free rate"},
        {"crossval", "Intersection of out-of-sample survivors and full-sample selections"},
        {"breakeven", "Break-even cost of the in-sample best rule per window"},
        {"stress", "Out-of-sample returns split by prior-month financial stress"}};
    auto* c = app.add_subcommand(name, help.at(name));
    add_common(c, o);
    add_data(c, o, std::string(name) == "stress");
    add_rolling(c, o);
    if (std::string(name) != "breakeven") add_bootstrap(c, o);
    rolling_like.push_back(c);
  }
  app.get_subcommand("persistence")
      ->add_option("--horizons", o.horizons, "Block lengths in months")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.get_subcommand("crossval")
      ->add_option("--cv-target", o.cv_target, "Target rate for the full-sample selection")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.get_subcommand("stress")
      ->add_option("--stress-rule", o.stress_rule, "High stress: level above zero (sign) or above the median")
      ->check(CLI::IsMember({"sign", "median"}))
      ->capture_default_str();

  auto* mc = app.add_subcommand("montecarlo", "Power study on planted-signal panels");
  add_common(mc, o);
  mc->add_option("--rules", o.mc_rules, "Rules per panel")->capture_default_str();
  mc->add_option("--days", o.mc_days, "Days per panel")->capture_default_str();
  mc->add_option("--reps", o.mc_reps, "Monte Carlo replications")->capture_default_str();
  mc->add_option("--replications,-B", o.replications, "Bootstrap replications")->capture_default_str();
  mc->add_option("--mean-block", o.mean_block, "Expected block length (days)")->capture_default_str();
  mc->add_option("--pi-plus", o.pi_plus, "Share of outperforming rules")->capture_default_str();
  mc->add_option("--pi-minus", o.pi_minus, "Share of underperforming rules")->capture_default_str();
  mc->add_option("--sr-pos", o.sr_pos, "Annualized Sharpe ratios of outperformers")->delimiter(',')->capture_default_str();
  mc->add_option("--sr-neg", o.sr_neg, "Annualized Sharpe ratios of underperformers")->delimiter(',')->capture_default_str();
  mc->add_option("--fdr-targets", o.fdr_targets, "Targets for DFDR+ and fixed-lambda FDR")
      ->delimiter(',')
      ->capture_default_str();
  mc->add_option("--rw-alphas", o.rw_alphas, "Levels for Romano-Wolf StepM")->delimiter(',')->capture_default_str();
  mc->add_option("--lambda", o.lambda, "Fixed lambda of the FDR benchmark")->capture_default_str();
  mc->add_option("--grid-width", o.grid_width, "Spacing of the lambda grid")->capture_default_str();
  mc->add_option("--base-seed", o.base_seed, "Seed of the synthetic base panel")->capture_default_str();
  add_bool_flag(mc, "paper-scale", o.paper_scale, "21,195 rules, 1,000 replications and resamples (slow)");

  // Defaults captured before parsing so the manifest echoes them.
  for (auto* sub : app.get_subcommands({})) {
    for (auto* opt : sub->get_options()) opt->capture_default_str();
    for (auto* s2 : sub->get_subcommands({}))
      for (auto* opt : s2->get_options()) opt->capture_default_str();
  }

  // Splice --config values in after the subcommand name(s).
  std::vector<std::string> args(argv + 1, argv + argc);
  std::size_t head = 0;
  CLI::App* target = &app;
  while (head < args.size()) {
    CLI::App* next = target->get_subcommand_no_throw(args[head]);
    if (!next) break;
    target = next;
    ++head;
  }
  for (std::size_t i = head; i < args.size() && target != &app; ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    if (path.empty()) continue;
    try {
      const std::vector<std::string> given(args.begin() + static_cast<std::ptrdiff_t>(head), args.end());
      const auto extra = config_tokens(path, target, given);
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(head), extra.begin(), extra.end());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 2;
    }
    break;
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* active = nullptr;
  for (auto* sub : app.get_subcommands()) {
    active = sub;
    for (auto* s2 : sub->get_subcommands()) active = s2;
  }
  const std::string command = active->get_parent() != &app
                                  ? active->get_parent()->get_name() + " " + active->get_name()
                                  : active->get_name();
  Run run(command, o.out);
  json echo;
  try {
    echo = config_echo(active);
    run.start();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (command == "rules export") cmd_rules(o, run);
    else if (command == "backtest") cmd_backtest(o, run);
    else if (command == "pvalues") cmd_pvalues(o, run);
    else if (command == "select") {
      if (o.pvalues.empty() == o.prices.empty()) throw ConfigError("select: pass exactly one of --pvalues or --prices");
      cmd_select(o, run, !o.pvalues.empty());
    } else if (command == "rolling") cmd_rolling(o, run);
    else if (command == "persistence") cmd_persistence(o, run);
    else if (command == "crossval") cmd_crossval(o, run);
    else if (command == "breakeven") cmd_breakeven(o, run);
    else if (command == "stress") cmd_stress(o, run);
    else if (command == "montecarlo") cmd_montecarlo(o, run);
    run.finish(echo, o.seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    try {
      run.finish(echo, o.seed, e.what());
    } catch (...) {
    }
    return 1;
  }
  return 0;
}
