#pragma once

// Byte-stream transports for the host <-> scanner line protocol, and the
// identification handshake that runs over them.

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "ismscan/error.hpp"

namespace ismscan {

using namespace std::chrono_literals;

inline constexpr std::size_t kMaxLineBytes = 64 * 1024;

class Transport {
public:
  virtual ~Transport() = default;

  virtual void write(std::string_view bytes) = 0;

  // Next '\n'-terminated line without the terminator, or nullopt when the
  // timeout expires or the peer closed. Throws ProtocolError when a line
  // exceeds kMaxLineBytes.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;

  virtual void close() {}

  // True once the peer has closed and every buffered line was read.
  virtual bool closed() const { return false; }
};

// One direction of an in-memory pipe.
class ByteQueue {
public:
  void push(std::string_view bytes) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
    }
    cv_.notify_all();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool exhausted() const {
    std::lock_guard lock(mutex_);
    return closed_ && buffer_.empty();
  }

  std::optional<std::string> pop_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::unique_lock lock(mutex_);
    for (;;) {
      auto nl = std::find(buffer_.begin(), buffer_.end(), '\n');
      if (nl != buffer_.end()) {
        std::string line(buffer_.begin(), nl);
        buffer_.erase(buffer_.begin(), nl + 1);
        return line;
      }
      if (buffer_.size() > kMaxLineBytes) {
        buffer_.clear();
        throw ProtocolError("line exceeds " + std::to_string(kMaxLineBytes) + " bytes");
      }
      if (closed_) return std::nullopt;
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
        if (std::find(buffer_.begin(), buffer_.end(), '\n') == buffer_.end()) return std::nullopt;
      }
    }
  }

private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<char> buffer_;
  bool closed_ = false;
};

class MemoryTransport final : public Transport {
public:
  MemoryTransport(std::shared_ptr<ByteQueue> in, std::shared_ptr<ByteQueue> out)
      : in_(std::move(in)), out_(std::move(out)) {}

  void write(std::string_view bytes) override { out_->push(bytes); }

  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override {
    return in_->pop_line(timeout);
  }

  void close() override {
    out_->close();
    in_->close();
  }

  bool closed() const override { return in_->exhausted(); }

private:
  std::shared_ptr<ByteQueue> in_;
  std::shared_ptr<ByteQueue> out_;
};

// Two connected endpoints: bytes written to one are read from the other.
inline std::pair<std::shared_ptr<Transport>, std::shared_ptr<Transport>> make_memory_pair() {
  auto a_to_b = std::make_shared<ByteQueue>();
  auto b_to_a = std::make_shared<ByteQueue>();
  return {std::make_shared<MemoryTransport>(b_to_a, a_to_b),
          std::make_shared<MemoryTransport>(a_to_b, b_to_a)};
}

// A serial port (or any character device / FIFO) opened by path.
// TTYs are switched to raw 8N1 at 115200 baud.
class FdTransport final : public Transport {
public:
  explicit FdTransport(const std::string& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_CLOEXEC);
    if (fd_ < 0) throw ConfigError("cannot open port " + path + ": " + std::strerror(errno));
    if (::isatty(fd_)) {
      termios tio{};
      if (::tcgetattr(fd_, &tio) == 0) {
        ::cfmakeraw(&tio);
        ::cfsetispeed(&tio, B115200);
        ::cfsetospeed(&tio, B115200);
        tio.c_cflag |= CLOCAL | CREAD;
        ::tcsetattr(fd_, TCSANOW, &tio);
      }
    }
  }

  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;

  ~FdTransport() override { close(); }

  void write(std::string_view bytes) override {
    while (!bytes.empty()) {
      const auto n = ::write(fd_, bytes.data(), bytes.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(std::string("port write failed: ") + std::strerror(errno));
      }
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = pending_.find('\n'); nl != std::string::npos) {
        std::string line = pending_.substr(0, nl);
        pending_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (pending_.size() > kMaxLineBytes) {
        pending_.clear();
        throw ProtocolError("line exceeds " + std::to_string(kMaxLineBytes) + " bytes");
      }
      if (fd_ < 0) return std::nullopt;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) return std::nullopt;
      char buf[4096];
      const auto n = ::read(fd_, buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n == 0) eof_ = true;
      if (n <= 0) return std::nullopt;
      pending_.append(buf, static_cast<std::size_t>(n));
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  bool closed() const override { return (fd_ < 0 || eof_) && pending_.empty(); }

private:
  int fd_ = -1;
  bool eof_ = false;
  std::string pending_;
};

struct DeviceIdentity {
  std::string name;
  std::string profile_id;
  std::string firmware;

  friend bool operator==(const DeviceIdentity&, const DeviceIdentity&) = default;
};

inline const std::string kScannerNotFound = "Scanner not found";

inline std::string connected_status(const DeviceIdentity& id) { return "Connected to " + id.name; }

struct HandshakeResult {
  std::optional<DeviceIdentity> identity;  // empty: not found
  std::string status;

  bool found() const { return identity.has_value(); }
};

struct HandshakeOptions {
  std::chrono::milliseconds timeout = 2000ms;
  int retries = 1;
};

// Parses "ID <name>;<profile_id>;<firmware>".
inline DeviceIdentity parse_identity(std::string_view reply) {
  if (!reply.empty() && reply.back() == '\r') reply.remove_suffix(1);
  if (!reply.starts_with("ID ")) throw ProtocolError("malformed identification reply");
  reply.remove_prefix(3);
  const auto a = reply.find(';');
  const auto b = a == std::string_view::npos ? a : reply.find(';', a + 1);
  if (b == std::string_view::npos || reply.find(';', b + 1) != std::string_view::npos)
    throw ProtocolError("identification reply must carry name;profile_id;firmware");
  DeviceIdentity id{std::string(reply.substr(0, a)), std::string(reply.substr(a + 1, b - a - 1)),
                    std::string(reply.substr(b + 1))};
  if (id.name.empty()) throw ProtocolError("identification reply has an empty device name");
  return id;
}

// Sends "ID?\n" and waits for the identification line. Frame lines that a
// streaming device may already be emitting are skipped. Silence (after the
// configured retries) yields not-found; any other reply is a ProtocolError.
inline HandshakeResult handshake(Transport& transport, const HandshakeOptions& opts = {}) {
  for (int attempt = 0; attempt <= opts.retries; ++attempt) {
    transport.write("ID?\n");
    const auto deadline = std::chrono::steady_clock::now() + opts.timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      auto line = transport.read_line(left);
      if (!line) break;
      if (line->starts_with("F ") || line->empty()) continue;
      DeviceIdentity id = parse_identity(*line);
      return {id, connected_status(id)};
    }
  }
  return {std::nullopt, kScannerNotFound};
}

}  // namespace ismscan
