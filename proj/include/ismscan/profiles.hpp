#pragma once

// Transceiver profiles for the 2.4 GHz ISM band: the tunable channel grid
// and the RSSI code <-> dBm law of each supported chip.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ismscan/error.hpp"

namespace ismscan {

struct ChannelIndex {
  std::size_t value = 0;

  friend bool operator==(ChannelIndex, ChannelIndex) = default;
  friend auto operator<=>(ChannelIndex, ChannelIndex) = default;
};

struct DeviceProfile {
  std::string id;
  double f_min_mhz = 0;
  double f_max_mhz = 0;
  double step_khz = 0;
  double p_min_dbm = 0;
  double p_max_dbm = 0;
  int raw_max = 1;
  // Informational only; the quantizer step is (p_max - p_min) / raw_max.
  double nominal_resolution_dbm = 0;

  std::size_t channel_count() const {
    // The guard keeps grids like 83.5 MHz / 0.5 MHz from losing a channel
    // to representation error.
    return static_cast<std::size_t>(
               std::floor((f_max_mhz - f_min_mhz) * 1000.0 / step_khz + 1e-9)) +
           1;
  }

  double step_mhz() const { return step_khz / 1000.0; }
  double dbm_step() const { return (p_max_dbm - p_min_dbm) / raw_max; }

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

namespace detail {

inline void validate_profile(const DeviceProfile& p) {
  if (p.id.empty()) throw ConfigError("profile id must not be empty");
  if (!(p.f_min_mhz < p.f_max_mhz))
    throw ConfigError("profile " + p.id + ": f_min_mhz must be below f_max_mhz");
  if (!(p.p_min_dbm < p.p_max_dbm))
    throw ConfigError("profile " + p.id + ": p_min_dbm must be below p_max_dbm");
  if (!(p.step_khz > 0)) throw ConfigError("profile " + p.id + ": step_khz must be positive");
  if (p.raw_max < 1) throw ConfigError("profile " + p.id + ": raw_max must be at least 1");
  if (p.channel_count() < 2)
    throw ConfigError("profile " + p.id + ": grid must hold at least two channels");
}

}  // namespace detail

// Programmable channel spacing bounds of the CC25xx parts.
inline constexpr double kCc25xxMinStepKhz = 58.0;
inline constexpr double kCc25xxMaxStepKhz = 812.0;

inline const std::vector<DeviceProfile>& builtin_profiles() {
  // raw_max: the CYWUSB6935 reports a 5-bit RSSI; the others take
  // round(span / nominal resolution) so the step matches the datasheet figure.
  static const std::vector<DeviceProfile> profiles = [] {
    std::vector<DeviceProfile> v{
        {"nrf24l01", 2400.0, 2525.0, 977.0, -85.0, -42.0, 43, 1.0},
        {"cc2500", 2400.0, 2483.5, 500.0, -104.0, -13.0, 114, 0.8},
        {"cc2511", 2400.0, 2483.5, 500.0, -110.0, -6.5, 207, 0.5},
        {"cyrf6934", 2400.0, 2483.0, 1000.0, -90.0, -40.0, 12, 4.1},
        {"cywusb6935", 2400.0, 2483.0, 1000.0, -95.0, -40.0, 31, 3.1},
        {"cyrf6936", 2400.0, 2497.0, 1000.0, -97.0, -47.0, 38, 1.3},
    };
    for (const auto& p : v) detail::validate_profile(p);
    return v;
  }();
  return profiles;
}

inline const DeviceProfile& find_profile(std::string_view id) {
  for (const auto& p : builtin_profiles())
    if (p.id == id) return p;
  throw UnknownProfileError("unknown profile '" + std::string(id) + "'");
}

// Returns a copy of a CC25xx profile retuned to another channel spacing.
inline DeviceProfile with_channel_spacing(const DeviceProfile& base, double step_khz) {
  if (base.id != "cc2500" && base.id != "cc2511")
    throw ConfigError("profile " + base.id + " has a fixed channel spacing");
  if (step_khz < kCc25xxMinStepKhz || step_khz > kCc25xxMaxStepKhz)
    throw RangeError("channel spacing " + std::to_string(step_khz) +
                     " kHz outside 58-812 kHz for " + base.id);
  DeviceProfile p = base;
  p.step_khz = step_khz;
  detail::validate_profile(p);
  return p;
}

inline double channel_to_freq(const DeviceProfile& profile, ChannelIndex ch) {
  const auto n = profile.channel_count();
  if (ch.value >= n)
    throw RangeError("channel " + std::to_string(ch.value) + " out of range for " + profile.id +
                     " (channel_count " + std::to_string(n) + ")");
  return profile.f_min_mhz + static_cast<double>(ch.value) * profile.step_khz / 1000.0;
}

// Nearest grid channel; an exact midpoint goes to the lower channel.
inline ChannelIndex freq_to_channel(const DeviceProfile& profile, double f_mhz) {
  const double half = profile.step_mhz() / 2.0;
  if (!(f_mhz >= profile.f_min_mhz - half && f_mhz <= profile.f_max_mhz + half))
    throw RangeError("frequency " + std::to_string(f_mhz) + " MHz outside the band of " +
                     profile.id);
  const double pos = (f_mhz - profile.f_min_mhz) * 1000.0 / profile.step_khz;
  const double idx = std::ceil(pos - 0.5 - 1e-9);
  const auto last = static_cast<double>(profile.channel_count() - 1);
  return ChannelIndex{static_cast<std::size_t>(std::clamp(idx, 0.0, last))};
}

inline double raw_to_dbm(const DeviceProfile& profile, int raw) {
  if (raw < 0 || raw > profile.raw_max)
    throw QuantizationError("raw code " + std::to_string(raw) + " outside [0, raw_max=" +
                            std::to_string(profile.raw_max) + "] for " + profile.id);
  // std::lerp is exact at both ends and monotone in between.
  const double t = static_cast<double>(raw) / profile.raw_max;
  return std::lerp(profile.p_min_dbm, profile.p_max_dbm, t);
}

inline int dbm_to_raw(const DeviceProfile& profile, double dbm) {
  if (std::isnan(dbm)) return 0;
  const double clamped = std::clamp(dbm, profile.p_min_dbm, profile.p_max_dbm);
  const double code = std::floor((clamped - profile.p_min_dbm) / profile.dbm_step() + 0.5);
  return std::clamp(static_cast<int>(code), 0, profile.raw_max);
}

inline std::vector<double> channel_freqs(const DeviceProfile& profile) {
  std::vector<double> f(profile.channel_count());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = channel_to_freq(profile, ChannelIndex{i});
  return f;
}

inline std::vector<double> raw_to_dbm(const DeviceProfile& profile, std::span<const int> raw) {
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(),
                 [&](int r) { return raw_to_dbm(profile, r); });
  return out;
}

}  // namespace ismscan
