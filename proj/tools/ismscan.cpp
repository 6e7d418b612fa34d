// ismscan: command-line front end for the ISM-band scanner toolkit.

#include <charconv>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ismscan/analysis.hpp"
#include "ismscan/http_server.hpp"
#include "ismscan/profiles.hpp"
#include "ismscan/service.hpp"
#include "ismscan/session.hpp"
#include "ismscan/session_log.hpp"
#include "ismscan/wire.hpp"

#ifndef ISMSCAN_SCENES_DIR
#define ISMSCAN_SCENES_DIR "scenes"
#endif

namespace {

using namespace ismscan;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + *path + " for writing");
  out << text;
  if (!out) throw Error("write to " + *path + " failed");
}

// "84 channels, max raw 31 @ 2413.0 MHz"
std::string frame_summary(const SweepFrame& f) {
  const DeviceProfile& p = find_profile(f.profile_id);
  std::size_t best = 0;
  for (std::size_t i = 1; i < f.raw.size(); ++i)
    if (f.raw[i] > f.raw[best]) best = i;
  return std::to_string(f.raw.size()) + " channels, max raw " + std::to_string(f.raw[best]) +
         " @ " + fmt("%.1f", channel_to_freq(p, ChannelIndex{best})) + " MHz";
}

std::string live_line(const SweepFrame& f) {
  const DeviceProfile& p = find_profile(f.profile_id);
  std::size_t best = 0;
  for (std::size_t i = 1; i < f.raw.size(); ++i)
    if (f.raw[i] > f.raw[best]) best = i;
  return "seq " + std::to_string(f.seq) + "  t " + std::to_string(f.t_ms) + " ms  peak " +
         fmt("%.1f", raw_to_dbm(p, f.raw[best])) + " dBm @ " +
         fmt("%.1f", channel_to_freq(p, ChannelIndex{best})) + " MHz";
}

std::string format_range(double lo, double hi) {
  return fmt("%g", lo) + "–" + fmt("%g", hi);
}

struct AnalysisFlags {
  std::optional<double> threshold;
  double alpha = kDefaultAlpha;

  AnalysisOptions options() const { return {alpha, threshold}; }

  void add_to(CLI::App* app) {
    app->add_option("--threshold", threshold, "occupancy threshold in dBm (default: noise floor + 10 dB)");
    app->add_option("--alpha", alpha, "EMA weight in (0, 1]")->check(CLI::Range(0.0, 1.0));
  }
};

AnalysisState analyse(const SessionLog& log, const AnalysisOptions& opts) {
  AnalysisState state(find_profile(log.header.profile_id), opts);
  for (const auto& f : log.frames) state.update(f);
  return state;
}

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ismscan - 2.4 GHz ISM band spectrum scanner toolkit"};
  app.require_subcommand(1);

  // profiles
  auto* profiles = app.add_subcommand("profiles", "print the supported transceiver profiles");

  // scan
  auto* scan = app.add_subcommand("scan", "acquire a session and record it as JSONL");
  std::string scan_source = "sim";
  std::string profile_id = "cywusb6935";
  std::optional<std::string> env_path, port, out_path, in_path;
  double rate = kDefaultRateHz;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  bool max_speed = false;
  bool quiet = false;
  AnalysisFlags analysis_flags;
  scan->add_option("--source", scan_source, "sim or serial")
      ->check(CLI::IsMember({"sim", "serial"}));
  scan->add_option("--profile", profile_id, "transceiver profile id");
  scan->add_option("--env", env_path, "environment JSON (sim)");
  scan->add_option("--port", port, "serial device path (serial)");
  scan->add_option("--out", out_path, "JSONL session log to write")->required();
  scan->add_option("--rate", rate, "sweeps per second (0, 100]");
  scan->add_option("--duration", duration, "stop after this many seconds");
  scan->add_option("--seed", seed, "override the environment rng_seed");
  scan->add_flag("--max-speed", max_speed, "do not pace simulated sweeps in real time");
  scan->add_flag("--quiet", quiet, "suppress per-frame summaries");

  // replay
  auto* replay = app.add_subcommand("replay", "re-emit a recorded session");
  replay->add_option("--in", in_path, "JSONL session log")->required();
  replay->add_option("--out", out_path, "write the replayed frames to a new log");
  replay->add_option("--duration", duration, "stop after this many seconds of log time");
  replay->add_flag("--max-speed", max_speed, "ignore the logged timing");
  replay->add_flag("--quiet", quiet, "suppress per-frame summaries");

  // export
  auto* exp = app.add_subcommand("export", "analyse a session log and write the CSV");
  exp->add_option("--in", in_path, "JSONL session log")->required();
  exp->add_option("--out", out_path, "CSV file (default: stdout)");
  analysis_flags.add_to(exp);

  // recommend
  auto* rec = app.add_subcommand("recommend", "print the least-loaded Wi-Fi channel 1..13");
  rec->add_option("--in", in_path, "JSONL session log")->required();
  analysis_flags.add_to(rec);

  // classify
  auto* cls = app.add_subcommand("classify", "label the emitters visible in a session log");
  std::optional<std::size_t> window;
  cls->add_option("--in", in_path, "JSONL session log")->required();
  cls->add_option("--window", window, "classify only the last N frames (N >= 50)");
  cls->add_option("--threshold", analysis_flags.threshold, "occupancy threshold in dBm");

  // parse-lpt
  auto* lpt = app.add_subcommand("parse-lpt", "convert an LPT frame dump to a JSONL session log");
  lpt->add_option("--in", in_path, "dump file with one or more 'frame: [...]' blocks")->required();
  lpt->add_option("--profile", profile_id, "transceiver profile id");
  lpt->add_option("--out", out_path, "JSONL output (default: stdout, summaries on stderr)");

  // serve
  auto* serve = app.add_subcommand("serve", "run the acquisition service");
  std::string listen = "127.0.0.1:8080";
  std::string scenes_dir = ISMSCAN_SCENES_DIR;
  std::optional<std::string> serve_source;
  serve->add_option("--listen", listen, "host:port to bind");
  serve->add_option("--scenes", scenes_dir, "directory of environment files");
  serve->add_option("--source", serve_source, "start a session right away: sim, replay or serial")
      ->check(CLI::IsMember({"sim", "replay", "serial"}));
  serve->add_option("--profile", profile_id, "transceiver profile id");
  serve->add_option("--env", env_path, "environment JSON (sim)");
  serve->add_option("--in", in_path, "session log (replay)");
  serve->add_option("--port", port, "serial device path (serial)");
  serve->add_option("--rate", rate, "sweeps per second (0, 100]");
  serve->add_option("--duration", duration, "stop the initial session after this many seconds");
  serve->add_option("--seed", seed, "override the environment rng_seed");
  serve->add_flag("--max-speed", max_speed, "do not pace sweeps");
  analysis_flags.add_to(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (profiles->parsed()) {
      std::printf("%-12s%-18s%-14s%-18s%-12s%-9s%s\n", "id", "band", "step", "power", "resolution",
                  "raw_max", "channels");
      for (const auto& p : builtin_profiles()) {
        const std::string band = format_range(p.f_min_mhz, p.f_max_mhz) + " MHz";
        const std::string power = fmt("%g", p.p_min_dbm) + ".." + fmt("%g", p.p_max_dbm) + " dBm";
        // %-Ns pads by bytes; the en dash is three bytes wide in UTF-8.
        std::printf("%-12s%-20s%-14s%-18s%-12s%-9d%zu\n", p.id.c_str(), band.c_str(),
                    (fmt("%g", p.step_khz) + " kHz").c_str(), power.c_str(),
                    (fmt("%g", p.nominal_resolution_dbm) + " dBm").c_str(), p.raw_max,
                    p.channel_count());
      }
      return 0;
    }

    if (scan->parsed() || replay->parsed()) {
      SessionConfig cfg;
      if (scan->parsed()) {
        cfg.source = *source_kind_from_string(scan_source);
        cfg.profile_id = profile_id;
        cfg.env_path = env_path;
        cfg.port = port;
        cfg.seed = seed;
      } else {
        cfg.source = SourceKind::replay;
        cfg.log_path = in_path;
      }
      cfg.rate_hz = rate;
      cfg.duration_s = duration;
      cfg.max_speed = max_speed;
      cfg.record_path = out_path;
      try {
        validate(cfg);
      } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
      }

      SessionSinks sinks;
      if (!quiet) sinks.frame.push_back([](const SweepFrame& f) { std::cout << live_line(f) << "\n"; });
      sinks.status = [](const SessionStatus& s) {
        if (s.state == SessionState::running && !s.device_status.empty())
          std::cerr << s.device_status << "\n";
      };
      std::stop_source stop;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::jthread watcher([&stop](std::stop_token self) {
        while (!self.stop_requested()) {
          if (g_interrupted) stop.request_stop();
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
      });
      SessionDeps deps;
      deps.keep_frames = false;
      std::uint64_t frames = 0;
      sinks.frame.push_back([&frames](const SweepFrame&) { ++frames; });
      run_session(cfg, sinks, stop.get_token(), deps);
      std::cerr << frames << " frames" << (out_path ? " written to " + *out_path : "") << "\n";
      return 0;
    }

    if (exp->parsed()) {
      const auto log = load_session_log(*in_path);
      write_output(out_path, export_csv(analyse(log, analysis_flags.options())));
      return 0;
    }

    if (rec->parsed()) {
      const auto log = load_session_log(*in_path);
      std::cout << "channel " << recommend_wifi_channel(analyse(log, analysis_flags.options())) << "\n";
      return 0;
    }

    if (cls->parsed()) {
      const auto log = load_session_log(*in_path);
      std::span<const SweepFrame> frames(log.frames);
      if (window && *window < frames.size()) frames = frames.last(*window);
      ClassifyOptions opts;
      opts.threshold_dbm = analysis_flags.threshold;
      const auto labels = classify(frames, find_profile(log.header.profile_id), opts);
      if (labels.empty()) std::cout << "no emitters\n";
      for (const auto& l : labels) {
        std::cout << to_string(l.kind) << "  " << fmt("%.1f", l.low_mhz) << "–"
                  << fmt("%.1f", l.high_mhz) << " MHz  confidence " << fmt("%.2f", l.confidence)
                  << "\n";
      }
      return 0;
    }

    if (lpt->parsed()) {
      const DeviceProfile& profile = find_profile(profile_id);
      const auto blocks = parse_lpt_dump(read_file(*in_path));
      SessionLog log;
      log.header = {profile.id, kSimulatedEpoch, "lpt"};
      for (std::size_t i = 0; i < blocks.size(); ++i)
        log.frames.push_back(frame_from_raw(profile, blocks[i], i, 0));
      std::ostream& summary = out_path ? std::cout : std::cerr;
      write_output(out_path, serialize_session_log(log));
      summary << log.frames.size() << (log.frames.size() == 1 ? " frame" : " frames") << "\n";
      for (const auto& f : log.frames) summary << frame_summary(f) << "\n";
      return 0;
    }

    if (serve->parsed()) {
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) {
        std::cerr << "error: --listen expects host:port\n";
        return kExitUsage;
      }
      std::optional<SessionConfig> initial;
      if (serve_source) {
        SessionConfig cfg;
        cfg.source = *source_kind_from_string(*serve_source);
        cfg.profile_id = cfg.source == SourceKind::replay ? "" : profile_id;
        cfg.env_path = env_path;
        cfg.log_path = in_path;
        cfg.port = port;
        cfg.rate_hz = rate;
        cfg.duration_s = duration;
        cfg.max_speed = max_speed;
        cfg.seed = seed;
        initial = cfg;
      }
      const std::string port_text = listen.substr(colon + 1);
      int port_number = -1;
      const auto [ptr, ec] =
          std::from_chars(port_text.data(), port_text.data() + port_text.size(), port_number);
      if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port_number < 0 ||
          port_number > 65535) {
        std::cerr << "error: invalid port '" << port_text << "'\n";
        return kExitUsage;
      }

      ServiceOptions opts;
      opts.scenes_dir = scenes_dir;
      opts.analysis = analysis_flags.options();
      AcquisitionService service(opts);
      HttpServer server(service, listen.substr(0, colon), static_cast<unsigned short>(port_number));
      if (initial) service.start(*initial);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      std::cerr << "listening on " << listen.substr(0, colon) << ":" << server.port() << "\n";
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      service.stop();
      return 0;
    }
  } catch (const ismscan::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
