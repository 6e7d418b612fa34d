#include <gtest/gtest.h>

#include "ismscan/profiles.hpp"
#include "support/oracles.hpp"

namespace ismscan {
namespace {

TEST(Profiles, BuiltinTableValues) {
  const auto& all = builtin_profiles();
  ASSERT_EQ(all.size(), 6u);

  const auto& cyw = find_profile("cywusb6935");
  EXPECT_EQ(cyw.f_min_mhz, 2400.0);
  EXPECT_EQ(cyw.f_max_mhz, 2483.0);
  EXPECT_EQ(cyw.p_min_dbm, -95.0);
  EXPECT_EQ(cyw.p_max_dbm, -40.0);
  EXPECT_EQ(cyw.raw_max, 31);

  const auto& cc = find_profile("cc2500");
  EXPECT_EQ(cc.p_min_dbm, -104.0);
  EXPECT_EQ(cc.p_max_dbm, -13.0);
  EXPECT_EQ(cc.f_max_mhz, 2483.5);
  EXPECT_EQ(cc.step_khz, 500.0);

  EXPECT_EQ(find_profile("nrf24l01").f_max_mhz, 2525.0);
  EXPECT_EQ(find_profile("nrf24l01").step_khz, 977.0);
  EXPECT_EQ(find_profile("cc2511").p_max_dbm, -6.5);
  EXPECT_EQ(find_profile("cc2511").p_min_dbm, -110.0);
  EXPECT_EQ(find_profile("cyrf6934").p_min_dbm, -90.0);
  EXPECT_EQ(find_profile("cyrf6936").f_max_mhz, 2497.0);
  EXPECT_EQ(find_profile("cyrf6936").p_max_dbm, -47.0);
}

TEST(Profiles, RawMaxFollowsNominalResolution) {
  EXPECT_EQ(find_profile("nrf24l01").raw_max, 43);
  EXPECT_EQ(find_profile("cc2500").raw_max, 114);
  EXPECT_EQ(find_profile("cc2511").raw_max, 207);
  EXPECT_EQ(find_profile("cyrf6934").raw_max, 12);
  EXPECT_EQ(find_profile("cyrf6936").raw_max, 38);
}

TEST(Profiles, InvariantsHoldForEveryProfile) {
  for (const auto& p : builtin_profiles()) {
    EXPECT_LT(p.f_min_mhz, p.f_max_mhz) << p.id;
    EXPECT_LT(p.p_min_dbm, p.p_max_dbm) << p.id;
    EXPECT_GT(p.step_khz, 0) << p.id;
    EXPECT_GE(p.raw_max, 1) << p.id;
    EXPECT_GE(p.channel_count(), 2u) << p.id;
  }
}

TEST(Profiles, ChannelCounts) {
  EXPECT_EQ(find_profile("cywusb6935").channel_count(), 84u);
  EXPECT_EQ(find_profile("cc2500").channel_count(), 168u);
  EXPECT_EQ(find_profile("nrf24l01").channel_count(), 128u);
  EXPECT_EQ(find_profile("cyrf6936").channel_count(), 98u);
}

TEST(Profiles, UnknownIdThrows) { EXPECT_THROW(find_profile("cc1101"), UnknownProfileError); }

TEST(Profiles, ChannelSpacingIsProgrammableOnCc25xx) {
  const auto p = with_channel_spacing(find_profile("cc2500"), 812.0);
  EXPECT_EQ(p.channel_count(), 103u);  // floor(83500 / 812) + 1
  EXPECT_THROW(with_channel_spacing(find_profile("cc2500"), 57.0), RangeError);
  EXPECT_THROW(with_channel_spacing(find_profile("cc2511"), 813.0), RangeError);
  EXPECT_THROW(with_channel_spacing(find_profile("cywusb6935"), 500.0), ConfigError);
}

TEST(ChannelToFreq, GridExamples) {
  const auto& p = find_profile("cywusb6935");
  EXPECT_EQ(channel_to_freq(p, ChannelIndex{0}), 2400.0);
  EXPECT_EQ(channel_to_freq(p, ChannelIndex{47}), 2447.0);
  EXPECT_EQ(channel_to_freq(p, ChannelIndex{83}), 2483.0);
}

TEST(ChannelToFreq, OutOfRangeNamesProfileAndCount) {
  const auto& p = find_profile("cywusb6935");
  try {
    channel_to_freq(p, ChannelIndex{84});
    FAIL() << "expected RangeError";
  } catch (const RangeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("cywusb6935"), std::string::npos);
    EXPECT_NE(what.find("84"), std::string::npos);
  }
}

TEST(FreqToChannel, NearestAndMidpoints) {
  const auto& p = find_profile("cywusb6935");
  EXPECT_EQ(freq_to_channel(p, 2447.0).value, 47u);
  EXPECT_EQ(freq_to_channel(p, 2447.4).value, 47u);
  EXPECT_EQ(freq_to_channel(p, 2447.6).value, 48u);
  EXPECT_EQ(freq_to_channel(p, 2447.5).value, 47u);  // halves go down
  EXPECT_EQ(freq_to_channel(p, 2399.5).value, 0u);   // edge of tolerance band
  EXPECT_EQ(freq_to_channel(p, 2483.5).value, 83u);
  EXPECT_THROW(freq_to_channel(p, 2399.0), RangeError);
  EXPECT_THROW(freq_to_channel(p, 2483.6), RangeError);
}

TEST(FreqToChannel, InvertsChannelToFreqOnEveryGrid) {
  for (const auto& p : builtin_profiles()) {
    double prev = -1;
    for (std::size_t ch = 0; ch < p.channel_count(); ++ch) {
      const double f = channel_to_freq(p, ChannelIndex{ch});
      EXPECT_GT(f, prev) << p.id;
      prev = f;
      EXPECT_EQ(freq_to_channel(p, f).value, ch) << p.id << " ch " << ch;
    }
  }
}

TEST(RawToDbm, Examples) {
  const auto& p = find_profile("cywusb6935");
  EXPECT_EQ(raw_to_dbm(p, 0), -95.0);
  EXPECT_EQ(raw_to_dbm(p, 31), -40.0);
  EXPECT_NEAR(raw_to_dbm(p, 16), -66.6129, 1e-4);
  EXPECT_NEAR(raw_to_dbm(p, 16), oracle::linear_dbm(-95, -40, 31, 16), 1e-9);
}

TEST(RawToDbm, RejectsCodesAboveRawMax) {
  const auto& p = find_profile("cywusb6935");
  try {
    raw_to_dbm(p, 32);
    FAIL() << "expected QuantizationError";
  } catch (const QuantizationError& e) {
    EXPECT_NE(std::string(e.what()).find("31"), std::string::npos);
  }
  EXPECT_THROW(raw_to_dbm(p, -1), QuantizationError);
}

TEST(RawToDbm, EndpointsExactAndStrictlyMonotone) {
  for (const auto& p : builtin_profiles()) {
    EXPECT_EQ(raw_to_dbm(p, 0), p.p_min_dbm) << p.id;
    EXPECT_EQ(raw_to_dbm(p, p.raw_max), p.p_max_dbm) << p.id;
    for (int r = 1; r <= p.raw_max; ++r) {
      EXPECT_GT(raw_to_dbm(p, r), raw_to_dbm(p, r - 1)) << p.id << " raw " << r;
      EXPECT_NEAR(raw_to_dbm(p, r), oracle::linear_dbm(p.p_min_dbm, p.p_max_dbm, p.raw_max, r),
                  1e-9);
    }
  }
}

TEST(DbmToRaw, ClampsAndRounds) {
  const auto& p = find_profile("cywusb6935");
  EXPECT_EQ(dbm_to_raw(p, -200.0), 0);
  EXPECT_EQ(dbm_to_raw(p, -40.0), 31);
  EXPECT_EQ(dbm_to_raw(p, 10.0), 31);
  EXPECT_EQ(dbm_to_raw(p, raw_to_dbm(p, 13)), 13);
  // Half a step above code 2 rounds up to 3.
  const double step = 55.0 / 31.0;
  EXPECT_EQ(dbm_to_raw(p, -95.0 + 2.5 * step), 3);
  EXPECT_EQ(dbm_to_raw(p, -95.0 + 2.49 * step), 2);
}

TEST(DbmToRaw, ExhaustiveRoundTrip) {
  for (const auto& p : builtin_profiles())
    for (int r = 0; r <= p.raw_max; ++r) EXPECT_EQ(dbm_to_raw(p, raw_to_dbm(p, r)), r) << p.id;
}

}  // namespace
}  // namespace ismscan
