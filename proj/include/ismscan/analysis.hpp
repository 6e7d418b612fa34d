#pragma once

// Running spectrum analysis over a frame stream: latest trace, peak hold,
// exponential average, occupancy, Wi-Fi channel recommendation, emitter
// classification and CSV export.
//
// Levels are relative dBm as reported by the transceiver's RSSI law; no
// absolute calibration is attempted.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ismscan/error.hpp"
#include "ismscan/profiles.hpp"
#include "ismscan/wire.hpp"

namespace ismscan {

inline constexpr double kDefaultAlpha = 0.3;
inline constexpr std::size_t kNoiseEstimateFrames = 50;
inline constexpr double kThresholdAboveNoiseDb = 10.0;

// 10th percentile (nearest rank) of a set of readings.
inline double noise_floor_estimate(std::vector<double> readings) {
  if (readings.empty()) throw StateError("noise floor estimate needs at least one reading");
  const auto rank = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(readings.size())));
  const auto k = rank == 0 ? 0 : rank - 1;
  std::nth_element(readings.begin(), readings.begin() + static_cast<std::ptrdiff_t>(k),
                   readings.end());
  return readings[k];
}

struct AnalysisOptions {
  double alpha = kDefaultAlpha;
  // Unset: noise floor estimate over the first 50 frames + 10 dB.
  std::optional<double> threshold_dbm{};
};

struct Spectrum {
  std::string profile_id;
  std::uint64_t n_frames = 0;
  double threshold_dbm = 0;
  std::vector<double> freqs_mhz;
  std::vector<double> latest_dbm;
  std::vector<double> peak_dbm;
  std::vector<double> avg_dbm;
  std::vector<double> occupancy;
};

inline nlohmann::json to_json(const Spectrum& s) {
  return {{"profile_id", s.profile_id}, {"n_frames", s.n_frames},
          {"threshold_dbm", s.threshold_dbm}, {"freqs_mhz", s.freqs_mhz},
          {"latest_dbm", s.latest_dbm},   {"peak_dbm", s.peak_dbm},
          {"avg_dbm", s.avg_dbm},         {"occupancy", s.occupancy}};
}

class AnalysisState {
public:
  explicit AnalysisState(DeviceProfile profile, AnalysisOptions opts = {})
      : profile_(std::move(profile)), alpha_(opts.alpha), fixed_threshold_(opts.threshold_dbm) {
    if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw ConfigError("EMA alpha must lie in (0, 1]");
    const auto n = profile_.channel_count();
    latest_.assign(n, 0.0);
    peak_.assign(n, 0.0);
    avg_.assign(n, 0.0);
    above_.assign(n, 0);
    threshold_ = fixed_threshold_.value_or(profile_.p_min_dbm + kThresholdAboveNoiseDb);
  }

  void update(const SweepFrame& frame) {
    if (frame.profile_id != profile_.id)
      throw StateError("frame profile '" + frame.profile_id + "' does not match analysis profile '" +
                       profile_.id + "'");
    if (frame.raw.size() != latest_.size())
      throw ShapeError("frame has " + std::to_string(frame.raw.size()) + " values, expected " +
                       std::to_string(latest_.size()));
    for (std::size_t i = 0; i < latest_.size(); ++i) latest_[i] = raw_to_dbm(profile_, frame.raw[i]);

    if (n_frames_ == 0) {
      peak_ = latest_;
      avg_ = latest_;
    } else {
      for (std::size_t i = 0; i < latest_.size(); ++i) {
        peak_[i] = std::max(peak_[i], latest_[i]);
        avg_[i] = alpha_ * latest_[i] + (1.0 - alpha_) * avg_[i];
      }
    }
    ++n_frames_;

    if (fixed_threshold_ || settled_) {
      count_above(latest_);
      return;
    }
    // Auto threshold: while warming up, re-derive the threshold and recount
    // every frame seen so far.
    warmup_.push_back(latest_);
    std::vector<double> all;
    all.reserve(warmup_.size() * latest_.size());
    for (const auto& row : warmup_) all.insert(all.end(), row.begin(), row.end());
    threshold_ = noise_floor_estimate(std::move(all)) + kThresholdAboveNoiseDb;
    std::fill(above_.begin(), above_.end(), 0);
    for (const auto& row : warmup_) count_above(row);
    if (warmup_.size() >= kNoiseEstimateFrames) {
      settled_ = true;
      warmup_.clear();
      warmup_.shrink_to_fit();
    }
  }

  // Clears the peak-hold trace back to the latest sweep.
  void reset_peak() { peak_ = latest_; }

  const DeviceProfile& profile() const { return profile_; }
  const std::string& profile_id() const { return profile_.id; }
  std::uint64_t n_frames() const { return n_frames_; }
  double alpha() const { return alpha_; }
  double threshold_dbm() const { return threshold_; }
  bool threshold_settled() const { return fixed_threshold_.has_value() || settled_; }
  const std::vector<double>& latest_dbm() const { return latest_; }
  const std::vector<double>& peak_dbm() const { return peak_; }
  const std::vector<double>& avg_dbm() const { return avg_; }
  const std::vector<std::uint64_t>& above_count() const { return above_; }

private:
  void count_above(const std::vector<double>& row) {
    for (std::size_t i = 0; i < row.size(); ++i)
      if (row[i] > threshold_) ++above_[i];
  }

  DeviceProfile profile_;
  double alpha_;
  std::optional<double> fixed_threshold_;
  double threshold_;
  bool settled_ = false;
  std::vector<std::vector<double>> warmup_;
  std::uint64_t n_frames_ = 0;
  std::vector<double> latest_, peak_, avg_;
  std::vector<std::uint64_t> above_;
};

inline AnalysisState update(AnalysisState state, const SweepFrame& frame) {
  state.update(frame);
  return state;
}

inline std::vector<double> occupancy(const AnalysisState& state) {
  if (state.n_frames() == 0) throw StateError("occupancy needs at least one frame");
  std::vector<double> occ(state.above_count().size());
  for (std::size_t i = 0; i < occ.size(); ++i)
    occ[i] = static_cast<double>(state.above_count()[i]) / static_cast<double>(state.n_frames());
  return occ;
}

inline Spectrum snapshot(const AnalysisState& state) {
  Spectrum s;
  s.profile_id = state.profile_id();
  s.n_frames = state.n_frames();
  s.threshold_dbm = state.threshold_dbm();
  s.freqs_mhz = channel_freqs(state.profile());
  s.latest_dbm = state.latest_dbm();
  s.peak_dbm = state.peak_dbm();
  s.avg_dbm = state.avg_dbm();
  s.occupancy = state.n_frames() ? occupancy(state) : std::vector<double>(s.freqs_mhz.size(), 0.0);
  return s;
}

// ---- Wi-Fi channel recommendation ------------------------------------------

inline constexpr int kWifiChannels = 13;
inline constexpr double kWifiHalfWidthMhz = 11.0;

inline double wifi_channel_center_mhz(int channel) { return 2407.0 + 5.0 * channel; }

// Mean linear power (mW) of the averaged trace over center +/- 11 MHz, for
// channels 1..13 (index 0 is channel 1).
inline std::vector<double> wifi_channel_scores(const AnalysisState& state) {
  const auto& p = state.profile();
  if (p.f_min_mhz > 2401.0 || p.f_max_mhz < 2483.0)
    throw UnsupportedProfileError("profile " + p.id + " does not cover 2401-2483 MHz");
  if (state.n_frames() == 0) throw StateError("recommendation needs at least one frame");
  const auto freqs = channel_freqs(p);
  std::vector<double> scores;
  for (int k = 1; k <= kWifiChannels; ++k) {
    const double c = wifi_channel_center_mhz(k);
    double sum = 0;
    std::size_t bins = 0;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      if (std::abs(freqs[i] - c) <= kWifiHalfWidthMhz) {
        sum += std::pow(10.0, state.avg_dbm()[i] / 10.0);
        ++bins;
      }
    }
    scores.push_back(bins ? sum / static_cast<double>(bins) : 0.0);
  }
  return scores;
}

// Least-loaded channel in 1..13; near-equal scores go to the lower channel.
inline int recommend_wifi_channel(const AnalysisState& state) {
  const auto scores = wifi_channel_scores(state);
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] < scores[best] * (1.0 - 1e-12)) best = k;
  return static_cast<int>(best) + 1;
}

// ---- Emitter classification ------------------------------------------------

enum class EmitterClass { wifi_like, bluetooth_like, narrowband, unknown };

inline std::string_view to_string(EmitterClass c) {
  switch (c) {
    case EmitterClass::wifi_like: return "wifi_like";
    case EmitterClass::bluetooth_like: return "bluetooth_like";
    case EmitterClass::narrowband: return "narrowband";
    case EmitterClass::unknown: return "unknown";
  }
  return "?";
}

struct EmitterLabel {
  EmitterClass kind = EmitterClass::unknown;
  double low_mhz = 0;
  double high_mhz = 0;
  double confidence = 0;
};

struct ClassifyOptions {
  std::optional<double> threshold_dbm{};
  std::size_t min_window = 50;
  double band_occupancy = 0.1;      // channels above this form contiguous bands
  double wideband_mhz = 10.0;       // wider bands are Wi-Fi candidates
  double narrow_mhz = 2.0;          // hop/line width limit
  std::size_t min_hop_channels = 20;
  double min_hop_spread_mhz = 40.0;
  double stable_fraction = 0.8;     // share of consistent frames for a stable band
};

inline std::vector<EmitterLabel> classify(std::span<const SweepFrame> window,
                                          const DeviceProfile& profile,
                                          const ClassifyOptions& opts = {}) {
  const std::size_t n = window.size();
  if (n < opts.min_window)
    throw StateError("classification window has " + std::to_string(n) + " frames, needs " +
                     std::to_string(opts.min_window));
  const std::size_t m = profile.channel_count();
  const double step = profile.step_mhz();
  const auto freqs = channel_freqs(profile);

  std::vector<std::vector<double>> dbm;
  dbm.reserve(n);
  for (const auto& f : window) {
    if (f.profile_id != profile.id || f.raw.size() != m)
      throw StateError("frame " + std::to_string(f.seq) + " does not belong to profile " + profile.id);
    dbm.push_back(raw_to_dbm(profile, f.raw));
  }

  double threshold = 0;
  if (opts.threshold_dbm) {
    threshold = *opts.threshold_dbm;
  } else {
    std::vector<double> head;
    for (std::size_t t = 0; t < std::min(n, kNoiseEstimateFrames); ++t)
      head.insert(head.end(), dbm[t].begin(), dbm[t].end());
    threshold = noise_floor_estimate(std::move(head)) + kThresholdAboveNoiseDb;
  }

  std::vector<std::vector<char>> above(n, std::vector<char>(m, 0));
  std::vector<double> occ(m, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < m; ++i)
      if (dbm[t][i] > threshold) {
        above[t][i] = 1;
        occ[i] += 1.0;
      }
  for (auto& o : occ) o /= static_cast<double>(n);

  auto span_of = [&](std::size_t a, std::size_t b) {
    return std::pair{std::max(profile.f_min_mhz, freqs[a] - step / 2),
                     std::min(profile.f_max_mhz, freqs[b] + step / 2)};
  };

  std::vector<EmitterLabel> labels;
  std::vector<char> in_band(m, 0);

  for (std::size_t i = 0; i < m;) {
    if (occ[i] <= opts.band_occupancy) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < m && occ[j + 1] > opts.band_occupancy) ++j;
    for (std::size_t k = i; k <= j; ++k) in_band[k] = 1;

    const std::size_t width_ch = j - i + 1;
    const double width_mhz = static_cast<double>(width_ch) * step;
    std::size_t active = 0, quiet = 0;
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t hits = 0;
      for (std::size_t k = i; k <= j; ++k) hits += static_cast<std::size_t>(above[t][k]);
      const double frac = static_cast<double>(hits) / static_cast<double>(width_ch);
      if (frac >= 0.7) ++active;
      else if (frac <= 0.3) ++quiet;
    }
    const double consistency = static_cast<double>(active + quiet) / static_cast<double>(n);
    const double active_share = static_cast<double>(active) / static_cast<double>(n);

    EmitterLabel label;
    std::tie(label.low_mhz, label.high_mhz) = span_of(i, j);
    if (width_mhz > opts.wideband_mhz && consistency >= opts.stable_fraction) {
      label.kind = EmitterClass::wifi_like;
      label.confidence = consistency;
    } else if (width_mhz <= opts.narrow_mhz && active_share >= 0.5) {
      label.kind = EmitterClass::narrowband;
      label.confidence = active_share;
    } else {
      label.kind = EmitterClass::unknown;
      label.confidence = consistency;
    }
    labels.push_back(label);
    i = j + 1;
  }

  // Hopping: many channels outside the bands, each hit only transiently,
  // spread across a wide part of the band.
  std::vector<std::size_t> hopped;
  for (std::size_t i = 0; i < m; ++i)
    if (!in_band[i] && occ[i] > 0.0) hopped.push_back(i);
  if (hopped.size() >= opts.min_hop_channels &&
      freqs[hopped.back()] - freqs[hopped.front()] >= opts.min_hop_spread_mhz) {
    std::size_t consistent = 0;
    for (std::size_t t = 0; t < n; ++t) {
      bool narrow = true;
      for (std::size_t i = 0; i < m && narrow;) {
        if (in_band[i] || !above[t][i]) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j + 1 < m && !in_band[j + 1] && above[t][j + 1]) ++j;
        narrow = static_cast<double>(j - i + 1) * step <= opts.narrow_mhz;
        i = j + 1;
      }
      consistent += narrow ? 1 : 0;
    }
    EmitterLabel label;
    label.kind = EmitterClass::bluetooth_like;
    std::tie(label.low_mhz, label.high_mhz) = span_of(hopped.front(), hopped.back());
    label.confidence = static_cast<double>(consistent) / static_cast<double>(n);
    if (label.confidence >= opts.stable_fraction) labels.push_back(label);
  }

  std::sort(labels.begin(), labels.end(),
            [](const EmitterLabel& a, const EmitterLabel& b) { return a.low_mhz < b.low_mhz; });
  return labels;
}

inline std::vector<EmitterLabel> classify(std::span<const SweepFrame> window,
                                          const ClassifyOptions& opts = {}) {
  if (window.empty()) throw StateError("classification window is empty");
  return classify(window, find_profile(window.front().profile_id), opts);
}

// ---- CSV export --------------------------------------------------------------

inline constexpr std::string_view kCsvHeader = "freq_mhz,latest_dbm,peak_dbm,avg_dbm,occupancy";

inline std::string export_csv(const Spectrum& s) {
  if (s.n_frames == 0) throw StateError("nothing to export: no frames analysed");
  std::string out(kCsvHeader);
  out += '\n';
  char row[160];
  for (std::size_t i = 0; i < s.freqs_mhz.size(); ++i) {
    std::snprintf(row, sizeof row, "%.2f,%.2f,%.2f,%.2f,%.2f\n", s.freqs_mhz[i], s.latest_dbm[i],
                  s.peak_dbm[i], s.avg_dbm[i], s.occupancy[i]);
    out += row;
  }
  return out;
}

inline std::string export_csv(const AnalysisState& state) { return export_csv(snapshot(state)); }

// Reads a CSV produced by export_csv back into vectors.
inline Spectrum import_csv(std::string_view text) {
  Spectrum s;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    if (line_no == 0) {
      if (line != kCsvHeader) throw ParseError("unexpected CSV header", pos);
    } else if (!line.empty()) {
      double v[5];
      std::size_t k = 0, start = 0;
      for (; k < 5; ++k) {
        std::size_t comma = line.find(',', start);
        if (k < 4 && comma == std::string_view::npos) throw ParseError("short CSV row", pos + start);
        const auto field = line.substr(start, (k < 4 ? comma : line.size()) - start);
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v[k]);
        if (ec != std::errc{} || ptr != field.data() + field.size())
          throw ParseError("malformed CSV number", pos + start);
        start = comma + 1;
      }
      s.freqs_mhz.push_back(v[0]);
      s.latest_dbm.push_back(v[1]);
      s.peak_dbm.push_back(v[2]);
      s.avg_dbm.push_back(v[3]);
      s.occupancy.push_back(v[4]);
    }
    ++line_no;
    pos = end + 1;
  }
  if (line_no == 0) throw ParseError("empty CSV", 0);
  return s;
}

}  // namespace ismscan
