#pragma once

// RF environment simulator: a declarative set of emitters seen through a
// profile's channel grid, producing the frames a real scanner would report.
//
// All randomness is counter based (hash of seed, stream and frame index),
// so sweep() is a pure function of its arguments and frames can be produced
// in any order or concurrently.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ismscan/error.hpp"
#include "ismscan/profiles.hpp"
#include "ismscan/wire.hpp"

namespace ismscan {

enum class EmitterKind { wifi, bluetooth, cw, wideband_noise };

inline std::string_view to_string(EmitterKind k) {
  switch (k) {
    case EmitterKind::wifi: return "wifi";
    case EmitterKind::bluetooth: return "bluetooth";
    case EmitterKind::cw: return "cw";
    case EmitterKind::wideband_noise: return "wideband_noise";
  }
  return "?";
}

inline std::optional<EmitterKind> emitter_kind_from_string(std::string_view s) {
  if (s == "wifi") return EmitterKind::wifi;
  if (s == "bluetooth") return EmitterKind::bluetooth;
  if (s == "cw") return EmitterKind::cw;
  if (s == "wideband_noise") return EmitterKind::wideband_noise;
  return std::nullopt;
}

// Bluetooth classic hop set: 79 x 1 MHz channels.
inline constexpr double kBtFirstHopMhz = 2402.0;
inline constexpr int kBtHopChannels = 79;

// Wi-Fi spectral mask: skirts of this width at this level below the flat top.
inline constexpr double kWifiSkirtMhz = 2.0;
inline constexpr double kWifiSkirtDb = 20.0;

inline constexpr double kShieldedSpurCapDb = 0.5;

inline double default_bandwidth_mhz(EmitterKind k) {
  switch (k) {
    case EmitterKind::wifi: return 20.0;
    case EmitterKind::bluetooth: return 1.0;
    case EmitterKind::cw: return 0.0;
    case EmitterKind::wideband_noise: return 20.0;
  }
  return 0.0;
}

struct Emitter {
  EmitterKind kind = EmitterKind::wifi;
  double center_mhz = 2441.0;  // ignored for bluetooth, which hops
  double bandwidth_mhz = 20.0;
  double tx_dbm = 0.0;
  double distance_m = 1.0;
  double duty = 1.0;
  std::int64_t hop_seed = 0;

  friend bool operator==(const Emitter&, const Emitter&) = default;
};

struct RfEnvironment {
  std::vector<Emitter> emitters;
  double noise_floor_dbm = -95.0;
  // Receiver quality.
  double antenna_gain_db = 0.0;
  bool shielded = false;
  double spur_sigma_db = 3.0;
  std::uint64_t rng_seed = 0;

  // A shield halves spurious pickup and caps it at 0.5 dB.
  double effective_spur_sigma_db() const {
    return shielded ? std::min(spur_sigma_db / 2.0, kShieldedSpurCapDb) : spur_sigma_db;
  }

  friend bool operator==(const RfEnvironment&, const RfEnvironment&) = default;
};

// Free-space path loss with d in metres and f in MHz.
inline double path_loss_db(double f_mhz, double distance_m) {
  if (!(f_mhz > 0) || !(distance_m > 0))
    throw DomainError("path loss needs positive frequency and distance");
  return 20.0 * std::log10(distance_m / 1000.0) + 20.0 * std::log10(f_mhz) + 32.44;
}

namespace rng {

inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) { return mix(h ^ mix(v)); }

// Uniform in [0, 1) from a (stream, counter, lane) triple.
inline double uniform(std::uint64_t stream, std::uint64_t counter, std::uint64_t lane) {
  const std::uint64_t h = combine(combine(stream, counter), lane);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double gaussian(std::uint64_t stream, std::uint64_t counter, std::uint64_t lane) {
  const double u1 = 1.0 - uniform(stream, counter, 2 * lane);  // (0, 1]
  const double u2 = uniform(stream, counter, 2 * lane + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline constexpr std::uint64_t kSpurStream = 0x5350555253ULL;

}  // namespace rng

// Random stream of one emitter. Derived from the emitter's own parameters,
// so adding or reordering emitters never changes another emitter's draws.
inline std::uint64_t emitter_stream(const Emitter& e, std::uint64_t env_seed) {
  std::uint64_t h = rng::mix(env_seed);
  h = rng::combine(h, static_cast<std::uint64_t>(e.hop_seed));
  h = rng::combine(h, static_cast<std::uint64_t>(e.kind));
  h = rng::combine(h, std::bit_cast<std::uint64_t>(e.center_mhz));
  h = rng::combine(h, std::bit_cast<std::uint64_t>(e.bandwidth_mhz));
  h = rng::combine(h, std::bit_cast<std::uint64_t>(e.tx_dbm));
  h = rng::combine(h, std::bit_cast<std::uint64_t>(e.distance_m));
  return h;
}

inline bool emitter_active(const Emitter& e, std::uint64_t env_seed, std::uint64_t frame_index) {
  return rng::uniform(emitter_stream(e, env_seed), frame_index, 0) < e.duty;
}

inline double bluetooth_hop_mhz(const Emitter& e, std::uint64_t env_seed,
                                std::uint64_t frame_index) {
  const double u = rng::uniform(emitter_stream(e, env_seed), frame_index, 1);
  return kBtFirstHopMhz + std::floor(u * kBtHopChannels);
}

// Received level (dBm) of one emitter at frequency f for a given frame, or
// nullopt when the emitter is idle in that frame or f lies outside its mask.
// grid_step_mhz sets the width of a cw line.
inline std::optional<double> emitter_level_dbm(const Emitter& e, double f_mhz,
                                               std::uint64_t frame_index, std::uint64_t env_seed,
                                               double grid_step_mhz = 1.0) {
  if (!emitter_active(e, env_seed, frame_index)) return std::nullopt;
  switch (e.kind) {
    case EmitterKind::wifi: {
      const double level = e.tx_dbm - path_loss_db(e.center_mhz, e.distance_m);
      const double off = std::abs(f_mhz - e.center_mhz);
      const double half = e.bandwidth_mhz / 2.0;
      if (off <= half) return level;
      if (off <= half + kWifiSkirtMhz) return level - kWifiSkirtDb;
      return std::nullopt;
    }
    case EmitterKind::bluetooth: {
      const double hop = bluetooth_hop_mhz(e, env_seed, frame_index);
      if (std::abs(f_mhz - hop) > e.bandwidth_mhz / 2.0) return std::nullopt;
      return e.tx_dbm - path_loss_db(hop, e.distance_m);
    }
    case EmitterKind::cw: {
      // Half-open cell so a line lands in exactly one grid channel.
      const double half = grid_step_mhz / 2.0;
      if (!(e.center_mhz > f_mhz - half && e.center_mhz <= f_mhz + half)) return std::nullopt;
      return e.tx_dbm - path_loss_db(e.center_mhz, e.distance_m);
    }
    case EmitterKind::wideband_noise: {
      if (std::abs(f_mhz - e.center_mhz) > e.bandwidth_mhz / 2.0) return std::nullopt;
      return e.tx_dbm - path_loss_db(e.center_mhz, e.distance_m);
    }
  }
  return std::nullopt;
}

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

// Per-channel levels before quantization: power sum of emitters and noise,
// receive gain, then the seeded spur in the dB domain.
inline std::vector<double> sweep_levels_dbm(const RfEnvironment& env, const DeviceProfile& profile,
                                            std::uint64_t frame_index) {
  const auto freqs = channel_freqs(profile);
  const double sigma = env.effective_spur_sigma_db();
  const std::uint64_t spur_stream = rng::combine(rng::mix(env.rng_seed), rng::kSpurStream);
  const double noise_mw = dbm_to_mw(env.noise_floor_dbm);

  std::vector<double> levels(freqs.size());
  for (std::size_t ch = 0; ch < freqs.size(); ++ch) {
    double mw = noise_mw;
    for (const auto& e : env.emitters) {
      if (auto lvl = emitter_level_dbm(e, freqs[ch], frame_index, env.rng_seed, profile.step_mhz()))
        mw += dbm_to_mw(*lvl);
    }
    double dbm = mw_to_dbm(mw) + env.antenna_gain_db;
    if (sigma > 0) dbm += sigma * rng::gaussian(spur_stream, frame_index, ch);
    levels[ch] = dbm;
  }
  return levels;
}

inline SweepFrame sweep(const RfEnvironment& env, const DeviceProfile& profile,
                        std::uint64_t frame_index, std::int64_t t_ms = 0) {
  const auto levels = sweep_levels_dbm(env, profile, frame_index);
  std::vector<int> raw(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) raw[i] = dbm_to_raw(profile, levels[i]);
  return SweepFrame{frame_index, t_ms, profile.id, std::move(raw)};
}

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(path + "/" + key, "unknown key");
  }
}

inline double number_at(const json& obj, const std::string& path, const char* key,
                        std::optional<double> fallback) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw SchemaError(path + "/" + key, "required number missing");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw SchemaError(path + "/" + key, "expected a number");
  return v.get<double>();
}

inline std::int64_t integer_at(const json& obj, const std::string& path, const char* key,
                               std::optional<std::int64_t> fallback) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw SchemaError(path + "/" + key, "required integer missing");
  }
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) throw SchemaError(path + "/" + key, "expected an integer");
  return v.get<std::int64_t>();
}

inline Emitter parse_emitter(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  reject_unknown_keys(j, path, {"kind", "center_mhz", "bandwidth_mhz", "tx_dbm", "distance_m",
                                "duty", "hop_seed"});
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw SchemaError(path + "/kind", "required string missing");
  const auto kind_name = j.at("kind").get<std::string>();
  const auto kind = emitter_kind_from_string(kind_name);
  if (!kind) throw SchemaError(path + "/kind", "unknown emitter kind '" + kind_name + "'");

  Emitter e;
  e.kind = *kind;
  const bool hops = e.kind == EmitterKind::bluetooth;
  e.center_mhz = number_at(j, path, "center_mhz",
                           hops ? std::optional<double>(kBtFirstHopMhz + (kBtHopChannels - 1) / 2.0)
                                : std::nullopt);
  e.bandwidth_mhz = number_at(j, path, "bandwidth_mhz", default_bandwidth_mhz(e.kind));
  e.tx_dbm = number_at(j, path, "tx_dbm", std::nullopt);
  e.distance_m = number_at(j, path, "distance_m", std::nullopt);
  e.duty = number_at(j, path, "duty", 1.0);
  e.hop_seed = integer_at(j, path, "hop_seed", 0);

  if (!(e.duty >= 0.0 && e.duty <= 1.0)) throw SchemaError(path + "/duty", "duty outside [0, 1]");
  if (!(e.distance_m > 0.0)) throw SchemaError(path + "/distance_m", "distance must be positive");
  if (!(e.bandwidth_mhz >= 0.0))
    throw SchemaError(path + "/bandwidth_mhz", "bandwidth must be non-negative");
  if (!(e.center_mhz > 0.0)) throw SchemaError(path + "/center_mhz", "frequency must be positive");
  return e;
}

}  // namespace detail

inline RfEnvironment env_from_json(const nlohmann::json& doc) {
  using detail::integer_at;
  using detail::number_at;
  if (!doc.is_object()) throw SchemaError("", "environment must be a JSON object");
  detail::reject_unknown_keys(doc, "", {"noise_floor_dbm", "antenna_gain_db", "shielded",
                                        "spur_sigma_db", "rng_seed", "emitters"});
  RfEnvironment env;
  env.noise_floor_dbm = number_at(doc, "", "noise_floor_dbm", std::nullopt);
  env.antenna_gain_db = number_at(doc, "", "antenna_gain_db", 0.0);
  env.spur_sigma_db = number_at(doc, "", "spur_sigma_db", 3.0);
  if (doc.contains("shielded")) {
    if (!doc.at("shielded").is_boolean()) throw SchemaError("/shielded", "expected a boolean");
    env.shielded = doc.at("shielded").get<bool>();
  }
  const auto seed = integer_at(doc, "", "rng_seed", std::nullopt);
  if (seed < 0) throw SchemaError("/rng_seed", "seed must be non-negative");
  env.rng_seed = static_cast<std::uint64_t>(seed);
  if (!(env.spur_sigma_db >= 0.0))
    throw SchemaError("/spur_sigma_db", "spur sigma must be non-negative");

  if (!doc.contains("emitters")) throw SchemaError("/emitters", "required array missing");
  const auto& list = doc.at("emitters");
  if (!list.is_array()) throw SchemaError("/emitters", "expected an array");
  for (std::size_t i = 0; i < list.size(); ++i)
    env.emitters.push_back(detail::parse_emitter(list[i], "/emitters/" + std::to_string(i)));
  return env;
}

inline RfEnvironment load_env(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid environment JSON: ") + e.what(), e.byte);
  }
  return env_from_json(doc);
}

inline nlohmann::json env_to_json(const RfEnvironment& env) {
  nlohmann::json emitters = nlohmann::json::array();
  for (const auto& e : env.emitters) {
    emitters.push_back({{"kind", std::string(to_string(e.kind))},
                        {"center_mhz", e.center_mhz},
                        {"bandwidth_mhz", e.bandwidth_mhz},
                        {"tx_dbm", e.tx_dbm},
                        {"distance_m", e.distance_m},
                        {"duty", e.duty},
                        {"hop_seed", e.hop_seed}});
  }
  return {{"noise_floor_dbm", env.noise_floor_dbm},
          {"antenna_gain_db", env.antenna_gain_db},
          {"shielded", env.shielded},
          {"spur_sigma_db", env.spur_sigma_db},
          {"rng_seed", env.rng_seed},
          {"emitters", emitters}};
}

}  // namespace ismscan
