#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ptaloc/config_io.hpp"

using namespace ptaloc;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return Errc::io_error;
}

}  // namespace

TEST(ConfigJson, RoundTripKeepsHash) {
  ScenarioConfig c;
  c.tx_power_dbm = 44.0;
  c.estimate_mode = EstimateMode::oracle;
  c.oracle_noise = {1.5, deg2rad(0.5)};
  c.failure_policy = FailurePolicy::exclude;
  c.sigmas = std::array<NoiseSigmas, 2>{NoiseSigmas{1.6, 0.0086}, NoiseSigmas{1.5, 0.0087}};
  const json j = config_to_json(c);
  const ScenarioConfig back = config_from_json(j);
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.failure_policy, FailurePolicy::exclude);
  ASSERT_TRUE(back.sigmas.has_value());
  EXPECT_NEAR((*back.sigmas)[1].sigma_theta, 0.0087, 1e-15);
}

TEST(ConfigJson, EmptyObjectGivesDefaults) {
  EXPECT_EQ(config_hash(config_from_json(json::object())), config_hash(ScenarioConfig{}));
}

TEST(ConfigJson, UnknownKeysRejected) {
  EXPECT_EQ(code_of([] { config_from_json(json{{"bogus", 1}}); }), Errc::invalid_config);
  EXPECT_EQ(code_of([] { config_from_json(json{{"link", {{"tx_power", 40}}}}); }), Errc::invalid_config);
}

TEST(ConfigJson, BadEnumsRejected) {
  EXPECT_EQ(code_of([] { config_from_json(json{{"estimation", {{"mode", "magic"}}}}); }), Errc::invalid_config);
  EXPECT_EQ(code_of([] { config_from_json(json{{"fusion", {{"failure_policy", "drop"}}}}); }), Errc::invalid_config);
  EXPECT_EQ(code_of([] { config_from_json(json{{"geometry", {{"isd_m", -5}}}}); }), Errc::invalid_config);
}

TEST(ConfigHash, StableAndFusionBlind) {
  const ScenarioConfig base;
  EXPECT_EQ(config_hash(base), config_hash(ScenarioConfig{}));
  EXPECT_EQ(hash_hex(config_hash(base)).size(), 16u);
  ScenarioConfig solver = base;
  solver.lm.max_iters = 3;
  solver.failure_policy = FailurePolicy::exclude;
  solver.sigmas = std::array<NoiseSigmas, 2>{};
  EXPECT_EQ(config_hash(solver), config_hash(base));
  ScenarioConfig louder = base;
  louder.tx_power_dbm += 1.0;
  EXPECT_NE(config_hash(louder), config_hash(base));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(ConfigFile, SaveLoadAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "ptaloc_test_config";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "c.json").string();
  ScenarioConfig c;
  c.n_subcarriers = 1024;
  c.music_subband = 31;
  save_config(c, path);
  EXPECT_EQ(config_hash(load_config(path)), config_hash(c));
  EXPECT_EQ(code_of([&] { load_config((dir / "missing.json").string()); }), Errc::invalid_config);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(code_of([&] { load_config((dir / "bad.json").string()); }), Errc::invalid_config);
  std::filesystem::remove_all(dir);
}
