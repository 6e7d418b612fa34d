#pragma once

// A scanner that speaks the host line protocol on the device side of a
// transport: answers "ID?" and, once identified, streams simulated sweeps.

#include <atomic>
#include <chrono>
#include <memory>
#include <stop_token>
#include <string>
#include <thread>

#include "ismscan/simulator.hpp"
#include "ismscan/transport.hpp"
#include "ismscan/wire.hpp"

namespace ismscan {

struct EmulatorOptions {
  DeviceIdentity identity{"Geoff's 2.4GHz Scanner", "cywusb6935", "1.0"};
  RfEnvironment env{};
  double rate_hz = 50.0;
  bool stream_after_id = true;
};

class DeviceEmulator {
public:
  DeviceEmulator(std::shared_ptr<Transport> transport, EmulatorOptions opts)
      : transport_(std::move(transport)), opts_(std::move(opts)) {
    worker_ = std::jthread([this](std::stop_token stop) { run(stop); });
  }

  DeviceEmulator(const DeviceEmulator&) = delete;
  DeviceEmulator& operator=(const DeviceEmulator&) = delete;

  ~DeviceEmulator() {
    worker_.request_stop();
    if (worker_.joinable()) worker_.join();
  }

  std::uint64_t frames_sent() const { return sent_.load(); }

private:
  void run(std::stop_token stop) {
    const DeviceProfile& profile = find_profile(opts_.identity.profile_id);
    bool streaming = false;
    const auto period = std::chrono::duration<double>(1.0 / opts_.rate_hz);
    auto next = std::chrono::steady_clock::now();
    std::uint64_t k = 0;
    while (!stop.stop_requested()) {
      const auto wait = streaming ? std::chrono::duration_cast<std::chrono::milliseconds>(
                                        next - std::chrono::steady_clock::now())
                                  : std::chrono::milliseconds(20);
      auto line = transport_->read_line(std::max(wait, std::chrono::milliseconds(0)));
      if (line && *line == "ID?") {
        const auto& id = opts_.identity;
        transport_->write("ID " + id.name + ";" + id.profile_id + ";" + id.firmware + "\n");
        if (opts_.stream_after_id && !streaming) {
          streaming = true;
          next = std::chrono::steady_clock::now();
        }
        continue;
      }
      if (transport_->closed()) return;
      if (streaming && std::chrono::steady_clock::now() >= next) {
        transport_->write(encode_frame(sweep(opts_.env, profile, k, 0)));
        ++k;
        sent_.fetch_add(1);
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
      }
    }
  }

  std::shared_ptr<Transport> transport_;
  EmulatorOptions opts_;
  std::atomic<std::uint64_t> sent_{0};
  std::jthread worker_;
};

}  // namespace ismscan
