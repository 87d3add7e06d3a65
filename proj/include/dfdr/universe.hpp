#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfdr/common.hpp"
#include "dfdr/rules.hpp"

namespace dfdr {

// Parameter grids, one per family. A family whose grid is absent contributes
// no rules; a present family with an empty axis is a configuration error.

struct FilterGrid {
  std::vector<double> thresholds;
  std::vector<int> hold_days{0};
};

struct RsiGrid {
  std::vector<int> lookbacks;
  std::vector<double> overbought{70.0};
  std::vector<double> oversold{30.0};
};

struct MaGrid {
  std::vector<int> fast;
  std::vector<int> slow;
  std::vector<double> bands{0.0};
};

struct SrGrid {
  std::vector<int> lookbacks;
  std::vector<double> thresholds{0.0};
};

struct CbGrid {
  std::vector<int> lookbacks;
  std::vector<double> widths;
};

struct UniverseGrid {
  std::optional<FilterGrid> fr;
  std::optional<RsiGrid> rsi;
  std::optional<MaGrid> ma;
  std::optional<SrGrid> sr;
  std::optional<CbGrid> cb;
};

struct Universe {
  std::vector<RuleSpec> rules;
  /// Parameter combinations dropped as degenerate, per family (FR..CB order).
  std::array<std::size_t, 5> skipped{};
  std::array<std::size_t, 5> counts{};

  std::size_t size() const noexcept { return rules.size(); }

  std::vector<Family> families() const {
    std::vector<Family> out;
    out.reserve(rules.size());
    for (const auto& r : rules) out.push_back(r.family());
    return out;
  }
};

namespace detail {

template <class T>
std::vector<T> sorted_axis(std::vector<T> v, std::string_view name) {
  if (v.empty()) throw ConfigError("universe grid: axis '" + std::string(name) + "' is empty");
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline void check_lookbacks(const std::vector<int>& v, int min, std::string_view name) {
  for (int x : v)
    if (x < min || x > kMaxLookback)
      throw ConfigError("universe grid: '" + std::string(name) + "' value " + std::to_string(x) +
                        " outside [" + std::to_string(min) + ", " + std::to_string(kMaxLookback) + "]");
}

inline void check_non_negative(const std::vector<double>& v, std::string_view name, bool strict = false) {
  for (double x : v)
    if (strict ? !(x > 0.0) : !(x >= 0.0))
      throw ConfigError("universe grid: '" + std::string(name) + "' must be " +
                        (strict ? "> 0" : ">= 0"));
}

} // namespace detail

/// Cartesian product of each family grid, in family order FR, RSI, MA, SR, CB
/// and lexicographic parameter order within a family. Ids are 0..l-1.
inline Universe enumerate_universe(const UniverseGrid& grid) {
  using detail::sorted_axis;
  Universe u;
  auto add = [&](RuleParams p) {
    const auto f = static_cast<std::size_t>(RuleSpec{0, p}.family());
    ++u.counts[f];
    u.rules.push_back(RuleSpec{u.rules.size(), std::move(p)});
  };

  if (grid.fr) {
    const auto th = sorted_axis(grid.fr->thresholds, "fr.thresholds");
    const auto hold = sorted_axis(grid.fr->hold_days, "fr.hold_days");
    detail::check_non_negative(th, "fr.thresholds", true);
    for (int h : hold)
      if (h < 0 || h > kMaxLookback) throw ConfigError("universe grid: 'fr.hold_days' out of range");
    for (double x : th)
      for (int h : hold) add(FilterParams{x, h});
  }
  if (grid.rsi) {
    const auto lb = sorted_axis(grid.rsi->lookbacks, "rsi.lookbacks");
    const auto up = sorted_axis(grid.rsi->overbought, "rsi.overbought");
    const auto dn = sorted_axis(grid.rsi->oversold, "rsi.oversold");
    detail::check_lookbacks(lb, 2, "rsi.lookbacks");
    for (int h : lb)
      for (double u_ : up)
        for (double d : dn) {
          if (!(0.0 < d && d < u_ && u_ < 100.0)) {
            ++u.skipped[static_cast<std::size_t>(Family::RSI)];
            continue;
          }
          add(RsiParams{h, u_, d});
        }
  }
  if (grid.ma) {
    const auto fast = sorted_axis(grid.ma->fast, "ma.fast");
    const auto slow = sorted_axis(grid.ma->slow, "ma.slow");
    const auto bands = sorted_axis(grid.ma->bands, "ma.bands");
    detail::check_lookbacks(fast, 1, "ma.fast");
    detail::check_lookbacks(slow, 2, "ma.slow");
    detail::check_non_negative(bands, "ma.bands");
    for (int f : fast)
      for (int s : slow)
        for (double b : bands) {
          if (f >= s) {
            ++u.skipped[static_cast<std::size_t>(Family::MA)];
            continue;
          }
          add(MaParams{f, s, b});
        }
  }
  if (grid.sr) {
    const auto lb = sorted_axis(grid.sr->lookbacks, "sr.lookbacks");
    const auto th = sorted_axis(grid.sr->thresholds, "sr.thresholds");
    detail::check_lookbacks(lb, 2, "sr.lookbacks");
    detail::check_non_negative(th, "sr.thresholds");
    for (int d : lb)
      for (double x : th) add(SupportResistanceParams{d, x});
  }
  if (grid.cb) {
    const auto lb = sorted_axis(grid.cb->lookbacks, "cb.lookbacks");
    const auto w = sorted_axis(grid.cb->widths, "cb.widths");
    detail::check_lookbacks(lb, 2, "cb.lookbacks");
    detail::check_non_negative(w, "cb.widths", true);
    for (int d : lb)
      for (double c : w) add(ChannelParams{d, c});
  }
  if (u.rules.empty()) throw ConfigError("universe grid: no rules enumerated");
  return u;
}

/// Shipped default grid: 618 rules (FR 70, RSI 54, MA 354, SR 60, CB 80).
inline UniverseGrid default_grid() {
  UniverseGrid g;
  g.fr = FilterGrid{{0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.04, 0.05, 0.06, 0.08, 0.10, 0.12, 0.15, 0.20},
                    {0, 5, 10, 25, 50}};
  g.rsi = RsiGrid{{5, 10, 14, 20, 30, 50}, {70.0, 75.0, 80.0}, {20.0, 25.0, 30.0}};
  g.ma = MaGrid{{1, 2, 5, 10, 15, 20, 25, 50},
                {5, 10, 15, 20, 25, 50, 100, 150, 200, 250},
                {0.0, 0.001, 0.005, 0.01, 0.02, 0.03}};
  g.sr = SrGrid{{5, 10, 15, 20, 25, 50, 100, 150, 200, 250}, {0.0, 0.005, 0.01, 0.02, 0.03, 0.05}};
  g.cb = CbGrid{{5, 10, 15, 20, 25, 50, 100, 150, 200, 250},
                {0.005, 0.01, 0.02, 0.03, 0.05, 0.075, 0.10, 0.15}};
  return g;
}

// ---------------------------------------------------------------------------
// JSON form. Keys: "fr": {"thresholds", "hold_days"}, "rsi": {"lookbacks",
// "overbought", "oversold"}, "ma": {"fast", "slow", "bands"}, "sr":
// {"lookbacks", "thresholds"}, "cb": {"lookbacks", "widths"}. Unknown keys
// are rejected. See schema/universe.schema.json.
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, std::string_view where,
                           std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw ConfigError("universe grid: '" + std::string(where) + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("universe grid: unknown key '" + std::string(where) + (where.empty() ? "" : ".") + key + "'");
  }
}

template <class T>
void read_axis(const nlohmann::json& obj, std::string_view family, const char* key, std::vector<T>& out,
               bool required) {
  const std::string name = std::string(family) + "." + key;
  if (!obj.contains(key)) {
    if (required) throw ConfigError("universe grid: missing key '" + name + "'");
    return;
  }
  const auto& arr = obj.at(key);
  if (!arr.is_array()) throw ConfigError("universe grid: '" + name + "' must be an array");
  out.clear();
  for (const auto& v : arr) {
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("universe grid: '" + name + "' must hold integers");
    } else {
      if (!v.is_number()) throw ConfigError("universe grid: '" + name + "' must hold numbers");
    }
    out.push_back(v.get<T>());
  }
}

} // namespace detail

inline UniverseGrid grid_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, "", {"fr", "rsi", "ma", "sr", "cb"});
  UniverseGrid g;
  if (j.contains("fr")) {
    const auto& o = j.at("fr");
    detail::reject_unknown(o, "fr", {"thresholds", "hold_days"});
    FilterGrid x;
    detail::read_axis(o, "fr", "thresholds", x.thresholds, true);
    detail::read_axis(o, "fr", "hold_days", x.hold_days, false);
    g.fr = x;
  }
  if (j.contains("rsi")) {
    const auto& o = j.at("rsi");
    detail::reject_unknown(o, "rsi", {"lookbacks", "overbought", "oversold"});
    RsiGrid x;
    detail::read_axis(o, "rsi", "lookbacks", x.lookbacks, true);
    detail::read_axis(o, "rsi", "overbought", x.overbought, false);
    detail::read_axis(o, "rsi", "oversold", x.oversold, false);
    g.rsi = x;
  }
  if (j.contains("ma")) {
    const auto& o = j.at("ma");
    detail::reject_unknown(o, "ma", {"fast", "slow", "bands"});
    MaGrid x;
    detail::read_axis(o, "ma", "fast", x.fast, true);
    detail::read_axis(o, "ma", "slow", x.slow, true);
    detail::read_axis(o, "ma", "bands", x.bands, false);
    g.ma = x;
  }
  if (j.contains("sr")) {
    const auto& o = j.at("sr");
    detail::reject_unknown(o, "sr", {"lookbacks", "thresholds"});
    SrGrid x;
    detail::read_axis(o, "sr", "lookbacks", x.lookbacks, true);
    detail::read_axis(o, "sr", "thresholds", x.thresholds, false);
    g.sr = x;
  }
  if (j.contains("cb")) {
    const auto& o = j.at("cb");
    detail::reject_unknown(o, "cb", {"lookbacks", "widths"});
    CbGrid x;
    detail::read_axis(o, "cb", "lookbacks", x.lookbacks, true);
    detail::read_axis(o, "cb", "widths", x.widths, true);
    g.cb = x;
  }
  return g;
}

inline nlohmann::json grid_to_json(const UniverseGrid& g) {
  nlohmann::json j = nlohmann::json::object();
  if (g.fr) j["fr"] = {{"thresholds", g.fr->thresholds}, {"hold_days", g.fr->hold_days}};
  if (g.rsi)
    j["rsi"] = {{"lookbacks", g.rsi->lookbacks}, {"overbought", g.rsi->overbought}, {"oversold", g.rsi->oversold}};
  if (g.ma) j["ma"] = {{"fast", g.ma->fast}, {"slow", g.ma->slow}, {"bands", g.ma->bands}};
  if (g.sr) j["sr"] = {{"lookbacks", g.sr->lookbacks}, {"thresholds", g.sr->thresholds}};
  if (g.cb) j["cb"] = {{"lookbacks", g.cb->lookbacks}, {"widths", g.cb->widths}};
  return j;
}

} // namespace dfdr
