#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ismscan/session_log.hpp"
#include "support/oracles.hpp"

namespace ismscan {
namespace {

SessionLog sample_log(std::size_t n) {
  SessionLog log{{"cyrf6934", "2026-01-02T03:04:05Z", "sim"}, {}};
  std::mt19937 gen(3);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> raw(84);
    for (auto& r : raw) r = static_cast<int>(gen() % 13);
    log.frames.push_back(SweepFrame{k, static_cast<std::int64_t>(k * 100), "cyrf6934", raw});
  }
  return log;
}

TEST(SessionLog, RecordShapes) {
  EXPECT_EQ(header_record({"cywusb6935", "1970-01-01T00:00:00Z", "sim"}),
            R"({"profile_id":"cywusb6935","source":"sim","started_at":"1970-01-01T00:00:00Z","type":"header"})"
            "\n");
  const SweepFrame f{2, 200, "cyrf6934", std::vector<int>(84, 1)};
  const auto rec = frame_record(f);
  EXPECT_TRUE(rec.starts_with(R"({"line":"F 2 200 cyrf6934 1,1,)"));
  EXPECT_TRUE(rec.ends_with("1\",\"type\":\"frame\"}\n"));
}

TEST(SessionLog, SerializeReadRoundTrip) {
  const auto log = sample_log(25);
  const auto back = read_session_log(serialize_session_log(log));
  EXPECT_EQ(back.header, log.header);
  EXPECT_EQ(back.frames, log.frames);
}

TEST(SessionLog, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "ismscan_session_log_test.jsonl";
  const auto log = sample_log(10);
  save_session_log(log, path);
  EXPECT_EQ(oracle::slurp(path.string()), serialize_session_log(log));
  EXPECT_EQ(load_session_log(path).frames, log.frames);
  std::filesystem::remove(path);
  EXPECT_THROW(load_session_log(path), ConfigError);
}

TEST(SessionLog, TruncatedTailIsDropped) {
  const auto text = serialize_session_log(sample_log(5));
  const auto cut = text.substr(0, text.size() - 40);
  const auto back = read_session_log(cut);
  EXPECT_EQ(back.frames.size(), 4u);
}

TEST(SessionLog, DamagedRecordsAreErrors) {
  const auto log = sample_log(3);
  auto text = serialize_session_log(log);
  EXPECT_THROW(read_session_log(""), ParseError);
  EXPECT_THROW(read_session_log(frame_record(log.frames[0])), ParseError);
  EXPECT_THROW(read_session_log(text + "{oops\n"), ParseError);
  EXPECT_THROW(read_session_log(text + R"({"type":"note"})" "\n"), ParseError);
  EXPECT_THROW(read_session_log(R"({"type":"header","profile_id":"nope"})" "\n"), UnknownProfileError);
  const SweepFrame other{9, 0, "cywusb6935", std::vector<int>(84, 0)};
  EXPECT_THROW(read_session_log(text + frame_record(other)), StateError);
}

}  // namespace
}  // namespace ismscan
