#pragma once

// The acquisition service: at most one running session, its analysis
// state, and the fan-out of frames and status changes to stream
// subscribers. Transport-neutral; the HTTP/WebSocket front end lives in
// http_server.hpp.

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ismscan/analysis.hpp"
#include "ismscan/error.hpp"
#include "ismscan/profiles.hpp"
#include "ismscan/session.hpp"
#include "ismscan/session_log.hpp"

namespace ismscan {

inline nlohmann::json to_json(const DeviceProfile& p) {
  return {{"id", p.id},
          {"f_min_mhz", p.f_min_mhz},
          {"f_max_mhz", p.f_max_mhz},
          {"step_khz", p.step_khz},
          {"p_min_dbm", p.p_min_dbm},
          {"p_max_dbm", p.p_max_dbm},
          {"raw_max", p.raw_max},
          {"nominal_resolution_dbm", p.nominal_resolution_dbm},
          {"channel_count", p.channel_count()}};
}

inline std::string frame_message(const SweepFrame& f, const DeviceProfile& profile) {
  return nlohmann::json{{"type", "frame"},
                        {"seq", f.seq},
                        {"t_ms", f.t_ms},
                        {"profile_id", f.profile_id},
                        {"dbm", raw_to_dbm(profile, f.raw)}}
      .dump();
}

inline std::string status_message(const SessionStatus& s) {
  auto j = to_json(s);
  j["type"] = "status";
  return j.dump();
}

struct ServiceOptions {
  std::filesystem::path scenes_dir = "scenes";
  std::size_t subscriber_queue = 256;
  AnalysisOptions analysis;
  SessionDeps deps;
};

class AcquisitionService {
public:
  explicit AcquisitionService(ServiceOptions opts = {})
      : opts_(std::move(opts)), broadcaster_(opts_.subscriber_queue) {
    opts_.deps.keep_frames = false;
  }

  AcquisitionService(const AcquisitionService&) = delete;
  AcquisitionService& operator=(const AcquisitionService&) = delete;

  ~AcquisitionService() { stop(); }

  // Validates the configuration and launches the acquisition loop.
  // ConflictError while a session is running; ConfigError for bad input.
  void start(SessionConfig cfg) {
    std::lock_guard control(control_mutex_);
    {
      std::lock_guard lock(mutex_);
      if (status_.state == SessionState::running) throw ConflictError("a session is already running");
    }
    if (worker_.joinable()) worker_.join();

    if (cfg.env_path) cfg.env_path = resolve_scene(*cfg.env_path).string();
    validate(cfg);
    std::string profile_id = cfg.profile_id;
    if (cfg.source == SourceKind::sim) {
      load_env_file(*cfg.env_path);
    } else if (cfg.source == SourceKind::replay) {
      const auto log = load_session_log(*cfg.log_path);
      if (!profile_id.empty() && profile_id != log.header.profile_id)
        throw ConfigError("log holds " + log.header.profile_id + " frames, not " + profile_id);
      profile_id = log.header.profile_id;
    }
    const DeviceProfile& profile = find_profile(profile_id);

    {
      std::lock_guard lock(mutex_);
      analysis_ = std::make_unique<AnalysisState>(profile, opts_.analysis);
      status_ = SessionStatus{SessionState::running, "", 0, ""};
    }
    broadcaster_.publish(status_message(status()));

    worker_ = std::jthread([this, cfg, &profile](std::stop_token stop) {
      SessionSinks sinks;
      sinks.frame.push_back([this, &profile](const SweepFrame& f) {
        {
          std::lock_guard lock(mutex_);
          analysis_->update(f);
          ++status_.frames_emitted;
        }
        broadcaster_.publish(frame_message(f, profile));
      });
      sinks.status = [this](const SessionStatus& s) {
        {
          std::lock_guard lock(mutex_);
          status_.device_status = s.device_status;
          if (s.state == SessionState::error) {
            status_.state = SessionState::error;
            status_.error = s.error;
          }
        }
        broadcaster_.publish(status_message(status()));
      };
      try {
        run_session(cfg, sinks, stop, opts_.deps);
        std::lock_guard lock(mutex_);
        status_.state = SessionState::stopped;
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        status_.state = SessionState::error;
        if (status_.error.empty()) status_.error = e.what();
      }
      broadcaster_.publish(status_message(status()));
    });
  }

  void stop() {
    std::lock_guard control(control_mutex_);
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_.join();
    }
  }

  SessionStatus status() const {
    std::lock_guard lock(mutex_);
    return status_;
  }

  std::optional<Spectrum> spectrum() const {
    std::lock_guard lock(mutex_);
    if (!analysis_ || analysis_->n_frames() == 0) return std::nullopt;
    return snapshot(*analysis_);
  }

  std::string export_csv() const {
    auto s = spectrum();
    if (!s) throw StateError("nothing to export: no frames analysed");
    return ismscan::export_csv(*s);
  }

  std::shared_ptr<Subscription> subscribe() { return broadcaster_.subscribe(); }
  std::size_t subscriber_count() const { return broadcaster_.subscriber_count(); }

  // Shipped environment files: [{name, file, env}], sorted by name.
  nlohmann::json scenes() const {
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(opts_.scenes_dir, ec))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : files) {
      std::ifstream in(f);
      std::stringstream ss;
      ss << in.rdbuf();
      try {
        out.push_back({{"name", f.stem().string()},
                       {"file", f.filename().string()},
                       {"env", env_to_json(load_env(ss.str()))}});
      } catch (const Error&) {
        // not an environment document
      }
    }
    return out;
  }

  const ServiceOptions& options() const { return opts_; }

private:
  std::filesystem::path resolve_scene(const std::string& path) const {
    const std::filesystem::path p(path);
    if (std::filesystem::exists(p)) return p;
    if (p.is_relative()) {
      const auto in_scenes = opts_.scenes_dir / p;
      if (std::filesystem::exists(in_scenes)) return in_scenes;
      auto with_ext = in_scenes;
      with_ext += ".json";
      if (std::filesystem::exists(with_ext)) return with_ext;
    }
    return p;
  }

  ServiceOptions opts_;
  Broadcaster broadcaster_;
  std::mutex control_mutex_;
  mutable std::mutex mutex_;
  SessionStatus status_;
  std::unique_ptr<AnalysisState> analysis_;
  std::jthread worker_;
};

}  // namespace ismscan
