#include <gtest/gtest.h>

#include "dfdr/universe.hpp"

using namespace dfdr;

TEST(Universe, SingletonFilterGrid) {
  UniverseGrid g;
  g.fr = FilterGrid{{0.01}};
  const auto u = enumerate_universe(g);
  ASSERT_EQ(u.size(), 1u);
  EXPECT_EQ(u.rules[0].family(), Family::FR);
}

TEST(Universe, DoubleMaSkipsDegenerate) {
  UniverseGrid g;
  g.ma = MaGrid{{2, 5}, {5, 10}};
  const auto u = enumerate_universe(g);
  ASSERT_EQ(u.size(), 3u);
  EXPECT_EQ(std::get<MaParams>(u.rules[0].params).slow, 5);
  EXPECT_EQ(std::get<MaParams>(u.rules[1].params).slow, 10);
  EXPECT_EQ(std::get<MaParams>(u.rules[2].params).fast, 5);
  EXPECT_EQ(u.skipped[static_cast<std::size_t>(Family::MA)], 1u);
}

TEST(Universe, EmptyAxisIsError) {
  UniverseGrid g;
  g.sr = SrGrid{{}, {0.0}};
  EXPECT_THROW(enumerate_universe(g), ConfigError);
}

TEST(Universe, DuplicatesAndOrder) {
  UniverseGrid g;
  g.cb = CbGrid{{20, 5, 20}, {0.05, 0.01}};
  g.fr = FilterGrid{{0.02, 0.01, 0.02}};
  const auto u = enumerate_universe(g);
  ASSERT_EQ(u.size(), 6u);
  EXPECT_EQ(u.rules[0].family(), Family::FR);
  EXPECT_EQ(std::get<FilterParams>(u.rules[0].params).threshold, 0.01);
  EXPECT_EQ(std::get<ChannelParams>(u.rules[2].params), (ChannelParams{5, 0.01}));
  EXPECT_EQ(std::get<ChannelParams>(u.rules[5].params), (ChannelParams{20, 0.05}));
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(u.rules[i].id, i);
}

TEST(Universe, LookbackRange) {
  UniverseGrid g;
  g.sr = SrGrid{{261}};
  EXPECT_THROW(enumerate_universe(g), ConfigError);
  g.sr = SrGrid{{1}};
  EXPECT_THROW(enumerate_universe(g), ConfigError);
}

TEST(Universe, DefaultGridCount) {
  const auto u = enumerate_universe(default_grid());
  EXPECT_EQ(u.size(), 618u);
  EXPECT_EQ(u.counts, (std::array<std::size_t, 5>{70, 54, 354, 60, 80}));
  for (const auto& r : u.rules) EXPECT_LE(r.lookback(), 260);
}

TEST(Universe, JsonRoundTrip) {
  const auto g = default_grid();
  const auto back = grid_from_json(grid_to_json(g));
  EXPECT_EQ(enumerate_universe(back).rules, enumerate_universe(g).rules);
}

TEST(Universe, JsonRejectsUnknownKeys) {
  EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"fr":{"thresholds":[0.01]},"xx":{}})")), ConfigError);
  EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"fr":{"threshold":[0.01]}})")), ConfigError);
}
