#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ismscan/simulator.hpp"
#include "support/oracles.hpp"

namespace ismscan {
namespace {

const DeviceProfile& cyw() { return find_profile("cywusb6935"); }

RfEnvironment quiet_env(double spur = 0.0) {
  RfEnvironment env;
  env.noise_floor_dbm = -95.0;
  env.spur_sigma_db = spur;
  env.rng_seed = 1;
  return env;
}

Emitter wifi_at(double center, double tx, double d, double duty = 1.0) {
  return Emitter{EmitterKind::wifi, center, 20.0, tx, d, duty, 0};
}

TEST(PathLoss, ClosedFormValues) {
  EXPECT_NEAR(path_loss_db(2447, 10), 60.21, 0.01);
  EXPECT_NEAR(path_loss_db(2447, 10), oracle::fspl_db(2447, 10), 1e-9);
  EXPECT_NEAR(path_loss_db(2447, 20) - path_loss_db(2447, 10), 6.02, 0.01);
  EXPECT_NEAR(path_loss_db(2400, 1), oracle::fspl_db(2400, 1), 1e-9);
  EXPECT_NEAR(path_loss_db(2400, 1), 40.05, 0.01);
}

TEST(PathLoss, RejectsNonPositiveInputs) {
  EXPECT_THROW(path_loss_db(0, 10), DomainError);
  EXPECT_THROW(path_loss_db(2447, 0), DomainError);
  EXPECT_THROW(path_loss_db(2447, -1), DomainError);
}

TEST(PathLoss, StrictlyIncreasingInDistance) {
  double prev = -1e9;
  for (double d = 0.5; d < 500; d *= 1.37) {
    const double l = path_loss_db(2441, d);
    EXPECT_GT(l, prev);
    prev = l;
  }
}

TEST(EmitterLevel, WifiFlatTopAndSkirts) {
  const auto e = wifi_at(2447, 15, 10);
  const double top = 15 - oracle::fspl_db(2447, 10);
  EXPECT_NEAR(*emitter_level_dbm(e, 2447, 0, 1), top, 0.01);
  EXPECT_NEAR(*emitter_level_dbm(e, 2437, 0, 1), top, 1e-9);
  EXPECT_NEAR(*emitter_level_dbm(e, 2457, 0, 1), top, 1e-9);
  EXPECT_NEAR(*emitter_level_dbm(e, 2436, 0, 1), top - 20, 1e-9);
  EXPECT_NEAR(*emitter_level_dbm(e, 2459, 0, 1), top - 20, 1e-9);
  EXPECT_FALSE(emitter_level_dbm(e, 2460, 0, 1));
  EXPECT_FALSE(emitter_level_dbm(e, 2400, 0, 1));
}

TEST(EmitterLevel, InactiveFramesAreAbsent) {
  const auto e = wifi_at(2447, 15, 10, 0.0);
  for (std::uint64_t k = 0; k < 100; ++k) EXPECT_FALSE(emitter_level_dbm(e, 2447, k, 1));
}

TEST(EmitterLevel, BluetoothHopsUniformly) {
  Emitter bt{EmitterKind::bluetooth, 2441, 1.0, 4, 1, 1.0, 7};
  constexpr int kFrames = 10000;
  std::map<int, int> hits;
  for (std::uint64_t k = 0; k < kFrames; ++k) {
    const double hop = bluetooth_hop_mhz(bt, 16, k);
    ASSERT_EQ(hop, std::floor(hop));
    ASSERT_GE(hop, 2402);
    ASSERT_LE(hop, 2480);
    ++hits[static_cast<int>(hop)];
    // Exactly one 1 MHz channel carries the hop.
    int lit = 0;
    for (int f = 2400; f <= 2483; ++f) lit += emitter_level_dbm(bt, f, k, 16).has_value();
    ASSERT_EQ(lit, 1);
  }
  ASSERT_EQ(hits.size(), 79u);
  const double expected = kFrames / 79.0;
  double chi2 = 0;
  for (const auto& [f, n] : hits) {
    EXPECT_NEAR(n / double(kFrames), 1.0 / 79.0, 0.01) << f;
    chi2 += (n - expected) * (n - expected) / expected;
  }
  EXPECT_LT(chi2, 124.8);  // chi-square, 78 dof, p = 0.001
}

TEST(EmitterLevel, CwLandsInOneGridCell) {
  Emitter cw{EmitterKind::cw, 2447.0, 0.0, 0, 10, 1.0, 0};
  int lit = 0;
  for (const double f : channel_freqs(cyw())) lit += emitter_level_dbm(cw, f, 0, 1, 1.0).has_value();
  EXPECT_EQ(lit, 1);
  cw.center_mhz = 2447.5;  // cell boundary belongs to the lower channel
  EXPECT_TRUE(emitter_level_dbm(cw, 2447, 0, 1, 1.0));
  EXPECT_FALSE(emitter_level_dbm(cw, 2448, 0, 1, 1.0));
}

TEST(Sweep, QuietEnvironmentIsAllZero) {
  const auto f = sweep(quiet_env(), cyw(), 0);
  EXPECT_EQ(f.raw, std::vector<int>(84, 0));
}

TEST(Sweep, CwAtMinus50LandsAtCode25) {
  auto env = quiet_env();
  env.emitters.push_back(Emitter{EmitterKind::cw, 2447.0, 0.0, -50 + oracle::fspl_db(2447, 10), 10, 1.0, 0});
  const auto f = sweep(env, cyw(), 0);
  for (std::size_t i = 0; i < f.raw.size(); ++i) EXPECT_EQ(f.raw[i], i == 47 ? 25 : 0) << i;
}

TEST(Sweep, WifiSceneBlockShape) {
  auto env = quiet_env(0.5);
  env.shielded = true;
  env.rng_seed = 15;
  env.emitters.push_back(wifi_at(2447, 15, 10, 1.0));
  const auto f = sweep(env, cyw(), 3);
  for (std::size_t i = 0; i < f.raw.size(); ++i) {
    const double mhz = 2400.0 + i;
    if (mhz >= 2437 && mhz <= 2457)
      EXPECT_GE(f.raw[i], 26) << mhz;
    else if (mhz >= 2435 && mhz <= 2459)
      EXPECT_NEAR(f.raw[i], 17, 1) << mhz;
    else
      EXPECT_LE(f.raw[i], 1) << mhz;
  }
}

TEST(Sweep, DeterministicAndOrderIndependent) {
  auto env = load_env(oracle::slurp(ISMSCAN_SCENES_DIR "/fig16_bt.json"));
  std::vector<SweepFrame> forward;
  for (std::uint64_t k = 0; k < 50; ++k) forward.push_back(sweep(env, cyw(), k));
  for (std::uint64_t k = 50; k-- > 0;) EXPECT_EQ(sweep(env, cyw(), k), forward[k]);
}

TEST(Sweep, AddingEmitterLeavesOthersUntouched) {
  auto env = quiet_env();
  env.emitters.push_back(wifi_at(2412, 15, 10, 0.5));
  std::vector<bool> before;
  for (std::uint64_t k = 0; k < 500; ++k) before.push_back(emitter_active(env.emitters[0], env.rng_seed, k));
  env.emitters.insert(env.emitters.begin(), Emitter{EmitterKind::bluetooth, 2441, 1, 4, 1, 0.8, 3});
  for (std::uint64_t k = 0; k < 500; ++k)
    EXPECT_EQ(emitter_active(env.emitters[1], env.rng_seed, k), before[k]);
}

TEST(SweepProperty, DistanceDoublingLowersInBandBy6dB) {
  for (double d : {1.0, 3.0, 10.0, 25.0}) {
    auto near = quiet_env();
    near.noise_floor_dbm = -250;
    near.emitters.push_back(wifi_at(2447, 15, d));
    auto far = near;
    far.emitters[0].distance_m = 2 * d;
    const auto a = sweep_levels_dbm(near, cyw(), 0);
    const auto b = sweep_levels_dbm(far, cyw(), 0);
    for (int ch = 35; ch <= 59; ++ch) {
      EXPECT_NEAR(a[ch] - b[ch], 6.02, 0.1) << d << " ch " << ch;
      EXPECT_GT(a[ch], b[ch]);
    }
  }
}

TEST(SweepProperty, LevelsBoundedByPowerSum) {
  auto env = quiet_env();
  env.emitters = {wifi_at(2412, 18, 3), wifi_at(2422, 10, 2),
                  Emitter{EmitterKind::bluetooth, 2441, 1, 4, 0.5, 1.0, 9},
                  Emitter{EmitterKind::cw, 2450, 0, 0, 1, 1.0, 0},
                  Emitter{EmitterKind::wideband_noise, 2460, 30, -5, 2, 1.0, 0}};
  double bound_mw = std::pow(10.0, env.noise_floor_dbm / 10.0);
  for (const auto& e : env.emitters) {
    const double f = e.kind == EmitterKind::bluetooth ? 2402.0 : e.center_mhz;
    bound_mw += std::pow(10.0, (e.tx_dbm - oracle::fspl_db(f, e.distance_m)) / 10.0);
  }
  const double bound = 10.0 * std::log10(bound_mw) + 1e-9;
  for (std::uint64_t k = 0; k < 200; ++k)
    for (double level : sweep_levels_dbm(env, cyw(), k)) ASSERT_LE(level, bound);
}

double raw_variance_out_of_band(const RfEnvironment& env) {
  std::vector<double> xs;
  for (std::uint64_t k = 0; k < 300; ++k) {
    const auto f = sweep(env, cyw(), k);
    for (int ch = 0; ch < 30; ++ch) xs.push_back(f.raw[ch]);
  }
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return var / xs.size();
}

TEST(SweepProperty, ShieldNeverRaisesOutOfBandVariance) {
  for (std::uint64_t seed : {1u, 15u, 99u, 12345u}) {
    auto open = load_env(oracle::slurp(ISMSCAN_SCENES_DIR "/fig15.json"));
    open.rng_seed = seed;
    open.shielded = false;
    auto shielded = open;
    shielded.shielded = true;
    EXPECT_LE(raw_variance_out_of_band(shielded), raw_variance_out_of_band(open)) << seed;
  }
  RfEnvironment env;
  env.spur_sigma_db = 3;
  env.shielded = true;
  EXPECT_EQ(env.effective_spur_sigma_db(), 0.5);
  env.spur_sigma_db = 0.6;
  EXPECT_EQ(env.effective_spur_sigma_db(), 0.3);
}

TEST(SweepProperty, EveryFrameValidatesForEveryProfile) {
  auto env = load_env(oracle::slurp(ISMSCAN_SCENES_DIR "/fig15.json"));
  env.spur_sigma_db = 6;
  env.shielded = false;
  env.emitters.push_back(Emitter{EmitterKind::cw, 2420, 0, 30, 0.1, 1.0, 0});
  for (const auto& p : builtin_profiles())
    for (std::uint64_t k = 0; k < 40; ++k) {
      const auto f = sweep(env, p, k);
      EXPECT_NO_THROW(frame_from_raw(p, f.raw, f.seq, f.t_ms)) << p.id;
    }
}

TEST(LoadEnv, MinimalDocument) {
  const auto env = load_env(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[]})");
  EXPECT_TRUE(env.emitters.empty());
  EXPECT_EQ(env.spur_sigma_db, 3.0);
  EXPECT_FALSE(env.shielded);
  EXPECT_EQ(env.antenna_gain_db, 0.0);
}

TEST(LoadEnv, SchemaViolations) {
  auto path_of = [](std::string_view text) -> std::string {
    try {
      load_env(text);
    } catch (const SchemaError& e) {
      return e.path();
    }
    ADD_FAILURE() << "no SchemaError for " << text;
    return {};
  };
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[{"kind":"zigbee","center_mhz":2440,"tx_dbm":0,"distance_m":1}]})"),
            "/emitters/0/kind");
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[{"kind":"wifi","center_mhz":2440,"tx_dbm":0,"distance_m":1,"duty":1.5}]})"),
            "/emitters/0/duty");
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[{"kind":"cw","center_mhz":2440,"tx_dbm":0,"distance_m":1,"colour":"red"}]})"),
            "/emitters/0/colour");
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[],"extra":1})"), "/extra");
  EXPECT_EQ(path_of(R"({"rng_seed":1,"emitters":[]})"), "/noise_floor_dbm");
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":-1,"emitters":[]})"), "/rng_seed");
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[{"kind":"wifi","tx_dbm":0,"distance_m":1}]})"),
            "/emitters/0/center_mhz");
  EXPECT_EQ(path_of(R"({"noise_floor_dbm":-95,"rng_seed":1,"emitters":[{"kind":"wifi","center_mhz":2440,"tx_dbm":0,"distance_m":0}]})"),
            "/emitters/0/distance_m");
  EXPECT_THROW(load_env("{not json"), ParseError);
}

TEST(LoadEnv, ShippedWifiScene) {
  const auto env = load_env(oracle::slurp(ISMSCAN_SCENES_DIR "/fig15.json"));
  ASSERT_EQ(env.emitters.size(), 1u);
  EXPECT_EQ(env.emitters[0].kind, EmitterKind::wifi);
  EXPECT_EQ(env.emitters[0].center_mhz, 2447.0);
  EXPECT_EQ(env.emitters[0].distance_m, 10.0);
  EXPECT_EQ(env.emitters[0].duty, 0.6);
  EXPECT_EQ(env_from_json(env_to_json(env)), env);
}

}  // namespace
}  // namespace ismscan
