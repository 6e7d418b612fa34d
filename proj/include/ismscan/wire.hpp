#pragma once

// Sweep frames and their two text encodings: the raw LPT dump
// ("frame: [a,b,...,]") and the host line protocol
// ("F <seq> <t_ms> <profile_id> <raw0>,...,<rawN-1>\n").

#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ismscan/error.hpp"
#include "ismscan/profiles.hpp"

namespace ismscan {

struct SweepFrame {
  std::uint64_t seq = 0;
  std::int64_t t_ms = 0;
  std::string profile_id;
  std::vector<int> raw;

  friend bool operator==(const SweepFrame&, const SweepFrame&) = default;
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::size_t skip_space(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

// Parses a decimal integer (optional leading '-') starting at i.
// Returns the end position, or npos when no integer starts there.
template <typename Int>
std::size_t parse_int(std::string_view s, std::size_t i, Int& out) {
  const char* first = s.data() + i;
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr == first) return std::string_view::npos;
  return static_cast<std::size_t>(ptr - s.data());
}

// Parses one bracketed list whose '[' sits at position open.
// Returns the values and sets next to the position after ']'.
inline std::vector<int> parse_bracket_list(std::string_view text, std::size_t open,
                                           std::size_t& next) {
  std::vector<int> values;
  std::size_t i = open + 1;
  for (;;) {
    i = skip_space(text, i);
    if (i >= text.size()) throw ParseError("missing ']'", i);
    if (text[i] == ']') {
      if (values.empty()) throw ParseError("empty frame list", i);
      next = i + 1;
      return values;
    }
    int v = 0;
    const std::size_t end = parse_int(text, i, v);
    if (end == std::string_view::npos) throw ParseError("expected integer", i);
    if (end < text.size() && !is_space(text[end]) && text[end] != ',' && text[end] != ']')
      throw ParseError("expected integer", i);
    values.push_back(v);
    i = skip_space(text, end);
    if (i >= text.size()) throw ParseError("missing ']'", i);
    if (text[i] == ',') {
      ++i;
    } else if (text[i] != ']') {
      throw ParseError("expected ',' or ']'", i);
    }
  }
}

inline std::vector<int> parse_lpt_block(std::string_view text, std::size_t from,
                                        std::size_t& next) {
  constexpr std::string_view token = "frame:";
  const std::size_t at = text.find(token, from);
  if (at == std::string_view::npos) throw ParseError("missing 'frame:' token", from);
  const std::size_t open = skip_space(text, at + token.size());
  if (open >= text.size() || text[open] != '[') throw ParseError("missing '['", open);
  return parse_bracket_list(text, open, next);
}

}  // namespace detail

// Parses the first "frame: [...]" block. A trailing comma before ']' and
// line breaks inside the list are accepted.
inline std::vector<int> parse_lpt_frame(std::string_view text) {
  std::size_t next = 0;
  return detail::parse_lpt_block(text, 0, next);
}

// Parses every "frame: [...]" block of a dump file, in order.
inline std::vector<std::vector<int>> parse_lpt_dump(std::string_view text) {
  std::vector<std::vector<int>> frames;
  std::size_t pos = 0;
  while (text.find("frame:", pos) != std::string_view::npos)
    frames.push_back(detail::parse_lpt_block(text, pos, pos));
  if (frames.empty()) throw ParseError("missing 'frame:' token", 0);
  return frames;
}

inline SweepFrame frame_from_raw(const DeviceProfile& profile, std::vector<int> raw,
                                 std::uint64_t seq, std::int64_t t_ms) {
  const auto n = profile.channel_count();
  if (raw.size() != n)
    throw ShapeError("frame has " + std::to_string(raw.size()) + " values, expected " +
                     std::to_string(n) + " for " + profile.id);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0 || raw[i] > profile.raw_max)
      throw RangeError("raw value " + std::to_string(raw[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(profile.raw_max) + "] for " + profile.id);
  }
  return SweepFrame{seq, t_ms, profile.id, std::move(raw)};
}

inline std::string encode_frame(const SweepFrame& frame) {
  std::string line;
  line.reserve(32 + frame.profile_id.size() + frame.raw.size() * 4);
  line += "F ";
  line += std::to_string(frame.seq);
  line += ' ';
  line += std::to_string(frame.t_ms);
  line += ' ';
  line += frame.profile_id;
  line += ' ';
  for (std::size_t i = 0; i < frame.raw.size(); ++i) {
    if (i) line += ',';
    line += std::to_string(frame.raw[i]);
  }
  line += '\n';
  return line;
}

// Inverse of encode_frame. The trailing newline is optional.
inline SweepFrame decode_frame(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ' ') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  if (fields.size() != 5 || fields[0] != "F")
    throw ParseError("expected 'F <seq> <t_ms> <profile_id> <values>', got " +
                         std::to_string(fields.size()) + " fields",
                     0);

  auto field_offset = [&](std::size_t k) {
    return static_cast<std::size_t>(fields[k].data() - line.data());
  };
  auto whole_int = [&](std::size_t k, auto& out) {
    const std::string_view f = fields[k];
    const std::size_t end = f.empty() ? std::string_view::npos : detail::parse_int(f, 0, out);
    if (end != f.size()) throw ParseError("malformed integer field", field_offset(k));
  };

  SweepFrame frame;
  whole_int(1, frame.seq);
  whole_int(2, frame.t_ms);
  const std::string_view profile_id = fields[3];
  if (profile_id.empty()) throw ParseError("empty profile id", field_offset(3));
  const DeviceProfile& profile = find_profile(profile_id);

  const std::string_view values = fields[4];
  const std::size_t base = field_offset(4);
  std::vector<int> raw;
  std::size_t i = 0;
  for (;;) {
    int v = 0;
    const std::size_t end = detail::parse_int(values, i, v);
    if (end == std::string_view::npos) throw ParseError("expected integer", base + i);
    raw.push_back(v);
    if (end == values.size()) break;
    if (values[end] != ',') throw ParseError("expected ','", base + end);
    i = end + 1;
  }
  return frame_from_raw(profile, std::move(raw), frame.seq, frame.t_ms);
}

}  // namespace ismscan
