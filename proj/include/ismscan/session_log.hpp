#pragma once

// JSONL session logs: one header record followed by one record per frame,
// each frame record embedding the wire-protocol line.
//
//   {"profile_id":"cywusb6935","source":"sim","started_at":"...","type":"header"}
//   {"line":"F 0 0 cywusb6935 0,0,...","type":"frame"}

#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ismscan/error.hpp"
#include "ismscan/wire.hpp"

namespace ismscan {

// Start stamp of sessions on a synthetic time base (sim sources).
inline const std::string kSimulatedEpoch = "1970-01-01T00:00:00Z";

struct SessionHeader {
  std::string profile_id;
  std::string started_at;
  std::string source;

  friend bool operator==(const SessionHeader&, const SessionHeader&) = default;
};

struct SessionLog {
  SessionHeader header;
  std::vector<SweepFrame> frames;
};

inline std::string header_record(const SessionHeader& h) {
  nlohmann::json j{{"type", "header"}, {"profile_id", h.profile_id}, {"started_at", h.started_at}};
  if (!h.source.empty()) j["source"] = h.source;
  return j.dump() + "\n";
}

inline std::string frame_record(const SweepFrame& f) {
  std::string line = encode_frame(f);
  line.pop_back();
  return nlohmann::json{{"type", "frame"}, {"line", line}}.dump() + "\n";
}

inline std::string serialize_session_log(const SessionLog& log) {
  std::string out = header_record(log.header);
  for (const auto& f : log.frames) out += frame_record(f);
  return out;
}

// Appends records to a stream, flushing each one so a crash loses at most
// the record being written.
class JsonlLogWriter {
public:
  explicit JsonlLogWriter(std::ostream& out) : out_(&out) {}

  explicit JsonlLogWriter(const std::filesystem::path& path)
      : file_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc)),
        out_(file_.get()) {
    if (!*file_) throw ConfigError("cannot open log file " + path.string() + " for writing");
  }

  void write_header(const SessionHeader& h) { put(header_record(h)); }
  void write_frame(const SweepFrame& f) { put(frame_record(f)); }

private:
  void put(const std::string& rec) {
    *out_ << rec;
    out_->flush();
    if (!*out_) throw Error("session log write failed");
  }

  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

// Reads a session log. A final record cut short by a crash (no trailing
// newline, unparsable) is dropped; damage anywhere else is an error.
inline SessionLog read_session_log(std::istream& in) {
  SessionLog log;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t record = 0;
  bool have_header = false;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    const bool terminated = end != std::string::npos;
    if (!terminated) end = content.size();
    const std::string_view line(content.data() + pos, end - pos);
    const std::size_t line_start = pos;
    pos = end + 1;
    if (line.empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      if (!terminated && have_header) break;
      throw ParseError("session log record " + std::to_string(record) + " is not JSON",
                       line_start);
    }
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
      throw ParseError("session log record " + std::to_string(record) + " has no type", line_start);
    const auto type = j.at("type").get<std::string>();

    if (!have_header) {
      if (type != "header") throw ParseError("session log must start with a header record", 0);
      if (!j.contains("profile_id") || !j.at("profile_id").is_string())
        throw ParseError("header record lacks profile_id", line_start);
      log.header.profile_id = j.at("profile_id").get<std::string>();
      log.header.started_at = j.value("started_at", std::string{});
      log.header.source = j.value("source", std::string{});
      find_profile(log.header.profile_id);
      have_header = true;
    } else if (type == "frame") {
      if (!j.contains("line") || !j.at("line").is_string())
        throw ParseError("frame record lacks line", line_start);
      SweepFrame f = decode_frame(j.at("line").get<std::string>());
      if (f.profile_id != log.header.profile_id)
        throw StateError("frame " + std::to_string(f.seq) + " has profile " + f.profile_id +
                         ", log header says " + log.header.profile_id);
      log.frames.push_back(std::move(f));
    } else {
      throw ParseError("unexpected session log record type '" + type + "'", line_start);
    }
    ++record;
  }
  if (!have_header) throw ParseError("session log is empty", 0);
  return log;
}

inline SessionLog read_session_log(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_session_log(in);
}

inline SessionLog load_session_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open session log " + path.string());
  return read_session_log(in);
}

inline void save_session_log(const SessionLog& log, const std::filesystem::path& path) {
  JsonlLogWriter w(path);
  w.write_header(log.header);
  for (const auto& f : log.frames) w.write_frame(f);
}

}  // namespace ismscan
