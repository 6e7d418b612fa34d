#pragma once

// Acquisition sessions: pull frames from a source (simulator, replayed log
// or a scanner on a serial line), pace them, and hand each one to the sinks.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ismscan/error.hpp"
#include "ismscan/profiles.hpp"
#include "ismscan/session_log.hpp"
#include "ismscan/simulator.hpp"
#include "ismscan/transport.hpp"
#include "ismscan/wire.hpp"

namespace ismscan {

enum class SourceKind { sim, replay, serial };

inline std::string_view to_string(SourceKind s) {
  switch (s) {
    case SourceKind::sim: return "sim";
    case SourceKind::replay: return "replay";
    case SourceKind::serial: return "serial";
  }
  return "?";
}

inline std::optional<SourceKind> source_kind_from_string(std::string_view s) {
  if (s == "sim") return SourceKind::sim;
  if (s == "replay") return SourceKind::replay;
  if (s == "serial") return SourceKind::serial;
  return std::nullopt;
}

inline constexpr double kDefaultRateHz = 10.0;
inline constexpr double kMaxRateHz = 100.0;

struct SessionConfig {
  SourceKind source = SourceKind::sim;
  std::string profile_id;                // sim, serial; optional check for replay
  std::optional<std::string> env_path;   // sim
  std::optional<std::string> log_path;   // replay
  std::optional<std::string> port;       // serial
  double rate_hz = kDefaultRateHz;
  std::optional<double> duration_s;
  bool max_speed = false;                // replay/sim: no pacing
  std::optional<std::uint64_t> seed;     // sim: overrides the environment seed
  std::optional<std::string> record_path;
};

inline void validate(const SessionConfig& cfg) {
  if (!(cfg.rate_hz > 0.0 && cfg.rate_hz <= kMaxRateHz))
    throw ConfigError("rate_hz must lie in (0, 100]");
  if (cfg.duration_s && !(*cfg.duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  const auto src = std::string(to_string(cfg.source));
  auto need = [&](bool present, const char* field) {
    if (!present) throw ConfigError(src + " source requires " + field);
  };
  auto forbid = [&](bool present, const char* field) {
    if (present) throw ConfigError(src + " source does not take " + field);
  };
  switch (cfg.source) {
    case SourceKind::sim:
      need(cfg.env_path.has_value(), "env_path");
      need(!cfg.profile_id.empty(), "profile_id");
      forbid(cfg.log_path.has_value(), "log_path");
      forbid(cfg.port.has_value(), "port");
      break;
    case SourceKind::replay:
      need(cfg.log_path.has_value(), "log_path");
      forbid(cfg.env_path.has_value(), "env_path");
      forbid(cfg.port.has_value(), "port");
      forbid(cfg.seed.has_value(), "seed");
      break;
    case SourceKind::serial:
      need(cfg.port.has_value(), "port");
      need(!cfg.profile_id.empty(), "profile_id");
      forbid(cfg.env_path.has_value(), "env_path");
      forbid(cfg.log_path.has_value(), "log_path");
      forbid(cfg.seed.has_value(), "seed");
      break;
  }
  if (!cfg.profile_id.empty()) find_profile(cfg.profile_id);
}

inline SessionConfig session_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("session config must be a JSON object");
  static constexpr std::string_view allowed[] = {"source",     "profile_id", "env_path",
                                                 "log_path",   "port",       "rate_hz",
                                                 "duration_s", "max_speed",  "seed",
                                                 "record_path"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(allowed), std::end(allowed), key) == std::end(allowed))
      throw ConfigError("unknown session config key '" + key + "'");
  }
  auto str = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_string()) throw ConfigError(std::string(key) + " must be a string");
    return j.at(key).get<std::string>();
  };
  auto num = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_number()) throw ConfigError(std::string(key) + " must be a number");
    return j.at(key).get<double>();
  };

  SessionConfig cfg;
  const auto source = str("source");
  if (!source) throw ConfigError("session config requires source");
  const auto kind = source_kind_from_string(*source);
  if (!kind) throw ConfigError("unknown source '" + *source + "'");
  cfg.source = *kind;
  cfg.profile_id = str("profile_id").value_or("");
  cfg.env_path = str("env_path");
  cfg.log_path = str("log_path");
  cfg.port = str("port");
  cfg.record_path = str("record_path");
  cfg.rate_hz = num("rate_hz").value_or(kDefaultRateHz);
  cfg.duration_s = num("duration_s");
  if (j.contains("max_speed")) {
    if (!j.at("max_speed").is_boolean()) throw ConfigError("max_speed must be a boolean");
    cfg.max_speed = j.at("max_speed").get<bool>();
  }
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError("seed must be a non-negative integer");
    cfg.seed = v.get<std::uint64_t>();
  }
  validate(cfg);
  return cfg;
}

enum class SessionState { idle, running, stopped, error };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::idle: return "idle";
    case SessionState::running: return "running";
    case SessionState::stopped: return "stopped";
    case SessionState::error: return "error";
  }
  return "?";
}

struct SessionStatus {
  SessionState state = SessionState::idle;
  std::string device_status;
  std::uint64_t frames_emitted = 0;
  std::string error;  // last failure message, empty otherwise

  friend bool operator==(const SessionStatus&, const SessionStatus&) = default;
};

inline nlohmann::json to_json(const SessionStatus& s) {
  nlohmann::json j{{"state", std::string(to_string(s.state))},
                   {"device_status", s.device_status},
                   {"frames_emitted", s.frames_emitted}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

inline RfEnvironment load_env_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open environment file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_env(ss.str());
}

// Frame consumers, called on the acquisition thread in order.
struct SessionSinks {
  std::vector<std::function<void(const SweepFrame&)>> frame;
  std::function<void(const SessionStatus&)> status;
};

struct SessionDeps {
  std::function<std::shared_ptr<Transport>(const std::string& port)> open_port =
      [](const std::string& port) -> std::shared_ptr<Transport> {
    return std::make_shared<FdTransport>(port);
  };
  HandshakeOptions handshake;
  // Sessions whose log is not needed by the caller (long-running service
  // sessions) skip keeping frames in memory.
  bool keep_frames = true;
  std::function<std::string()> wall_clock = [] {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
};

namespace detail {

// Sleeps until the deadline or a stop request. Returns false when stopped.
inline bool sleep_until(std::chrono::steady_clock::time_point deadline, std::stop_token stop) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  cv.wait_until(lock, stop, deadline, [] { return false; });
  return !stop.stop_requested();
}

}  // namespace detail

// Runs one session to completion: duration cap, stop request, or source
// exhaustion. Throws ConfigError for unusable inputs and StateError when
// the scanner cannot be reached (status reports "Scanner not found").
inline SessionLog run_session(const SessionConfig& cfg, SessionSinks& sinks,
                              std::stop_token stop = {}, const SessionDeps& deps = {}) {
  using clock = std::chrono::steady_clock;
  validate(cfg);

  SessionStatus status{SessionState::running, "", 0, ""};
  auto publish = [&] {
    if (sinks.status) sinks.status(status);
  };

  SessionLog log;
  log.header.source = std::string(to_string(cfg.source));
  std::unique_ptr<JsonlLogWriter> recorder;
  auto begin_log = [&] {
    if (cfg.record_path) {
      recorder = std::make_unique<JsonlLogWriter>(std::filesystem::path(*cfg.record_path));
      recorder->write_header(log.header);
    }
  };
  auto emit = [&](const SweepFrame& f) {
    if (recorder) recorder->write_frame(f);
    if (deps.keep_frames) log.frames.push_back(f);
    for (auto& sink : sinks.frame) sink(f);
    ++status.frames_emitted;
  };
  const std::int64_t cap_ms = cfg.duration_s ? std::llround(*cfg.duration_s * 1000.0)
                                             : std::numeric_limits<std::int64_t>::max();

  try {
    switch (cfg.source) {
      case SourceKind::sim: {
        const DeviceProfile& profile = find_profile(cfg.profile_id);
        RfEnvironment env = load_env_file(*cfg.env_path);
        if (cfg.seed) env.rng_seed = *cfg.seed;
        log.header.profile_id = profile.id;
        log.header.started_at = kSimulatedEpoch;
        begin_log();
        status.device_status = "Connected to simulator";
        publish();
        const auto start = clock::now();
        for (std::uint64_t seq = 0;; ++seq) {
          // Scheduled capture time: keeps t_ms, and with it the log,
          // independent of scheduling jitter.
          const auto t_ms = static_cast<std::int64_t>(
              std::llround(static_cast<double>(seq) * 1000.0 / cfg.rate_hz));
          if (t_ms >= cap_ms) break;
          if (stop.stop_requested()) break;
          if (!cfg.max_speed &&
              !detail::sleep_until(start + std::chrono::milliseconds(t_ms), stop))
            break;
          emit(sweep(env, profile, seq, t_ms));
        }
        break;
      }

      case SourceKind::replay: {
        SessionLog source = load_session_log(*cfg.log_path);
        if (!cfg.profile_id.empty() && cfg.profile_id != source.header.profile_id)
          throw ConfigError("log " + *cfg.log_path + " holds " + source.header.profile_id +
                            " frames, not " + cfg.profile_id);
        log.header = source.header;
        begin_log();
        status.device_status = "Replaying " + *cfg.log_path;
        publish();
        const auto start = clock::now();
        const std::int64_t t0 = source.frames.empty() ? 0 : source.frames.front().t_ms;
        for (const auto& f : source.frames) {
          const std::int64_t offset = f.t_ms - t0;
          if (offset >= cap_ms) break;
          if (stop.stop_requested()) break;
          if (!cfg.max_speed &&
              !detail::sleep_until(start + std::chrono::milliseconds(offset), stop))
            break;
          emit(f);
        }
        break;
      }

      case SourceKind::serial: {
        const DeviceProfile& profile = find_profile(cfg.profile_id);
        auto transport = deps.open_port(*cfg.port);
        HandshakeResult hs;
        try {
          hs = handshake(*transport, deps.handshake);
        } catch (const ProtocolError& e) {
          status = {SessionState::error, kScannerNotFound, 0, e.what()};
          publish();
          throw StateError(kScannerNotFound + ": " + e.what());
        }
        if (!hs.found()) {
          status = {SessionState::error, kScannerNotFound, 0, kScannerNotFound};
          publish();
          throw StateError(kScannerNotFound);
        }
        if (hs.identity->profile_id != profile.id) {
          status = {SessionState::error, hs.status, 0, "profile mismatch"};
          publish();
          throw ConfigError("device reports profile " + hs.identity->profile_id + ", session expects " +
                            profile.id);
        }
        log.header.profile_id = profile.id;
        log.header.started_at = deps.wall_clock();
        begin_log();
        status.device_status = hs.status;
        publish();

        const auto start = clock::now();
        std::uint64_t seq = 0;
        while (!stop.stop_requested()) {
          const auto now = clock::now();
          const auto t_ms =
              std::chrono::duration_cast<std::chrono::milliseconds>(now - start).count();
          if (t_ms >= cap_ms) break;
          auto line = transport->read_line(std::chrono::milliseconds(100));
          if (!line) {
            if (transport->closed()) break;
            continue;
          }
          if (!line->starts_with("F ")) continue;
          SweepFrame f = decode_frame(*line);
          if (f.profile_id != profile.id)
            throw ProtocolError("device sent a " + f.profile_id + " frame in a " + profile.id +
                                " session");
          // The host owns sequencing and timing: gapless seq, offsets from
          // session start on the monotonic clock.
          f.seq = seq++;
          f.t_ms = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start).count();
          if (f.t_ms >= cap_ms) break;
          emit(f);
        }
        transport->close();
        break;
      }
    }
  } catch (const std::exception& e) {
    if (status.state != SessionState::error) {
      status.state = SessionState::error;
      status.error = e.what();
      publish();
    }
    throw;
  }

  status.state = SessionState::stopped;
  publish();
  return log;
}

// Fan-out of serialized messages to independent subscribers. Each
// subscriber owns a bounded queue; one that falls behind is dropped instead
// of slowing the publisher.
class Subscription {
public:
  using Message = std::shared_ptr<const std::string>;

  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

  // False when the subscriber has been dropped (overflow or close).
  bool push(Message msg) {
    {
      std::lock_guard lock(mutex_);
      if (dropped_) return false;
      if (queue_.size() >= capacity_) {
        dropped_ = true;
        queue_.clear();
      } else {
        queue_.push_back(std::move(msg));
      }
    }
    cv_.notify_all();
    return !dropped();
  }

  std::optional<Message> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return dropped_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    Message m = std::move(queue_.front());
    queue_.pop_front();
    return m;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      dropped_ = true;
      queue_.clear();
    }
    cv_.notify_all();
  }

  bool dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

  std::size_t capacity() const { return capacity_; }

private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  bool dropped_ = false;
};

class Broadcaster {
public:
  explicit Broadcaster(std::size_t capacity = 256) : capacity_(capacity) {}

  std::shared_ptr<Subscription> subscribe() {
    auto sub = std::make_shared<Subscription>(capacity_);
    std::lock_guard lock(mutex_);
    subs_.push_back(sub);
    return sub;
  }

  void publish(std::string message) {
    auto msg = std::make_shared<const std::string>(std::move(message));
    std::lock_guard lock(mutex_);
    std::erase_if(subs_, [&](const std::shared_ptr<Subscription>& s) { return !s->push(msg); });
  }

  std::size_t subscriber_count() const {
    std::lock_guard lock(mutex_);
    return subs_.size();
  }

  void close_all() {
    std::lock_guard lock(mutex_);
    for (auto& s : subs_) s->close();
    subs_.clear();
  }

private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

}  // namespace ismscan
