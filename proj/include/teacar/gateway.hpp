#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "teacar/actuation.hpp"
#include "teacar/bus.hpp"

namespace teacar::gateway {

enum class DriveMode { manual, autonomous };

std::string_view to_string(DriveMode m);
/// ValidationError for anything but "manual" / "autonomous".
DriveMode drive_mode_from_string(std::string_view s);

struct TeleopIn {
  std::vector<double> axes;
  std::vector<int> buttons;
};
struct ModeIn {
  DriveMode mode = DriveMode::manual;
};
struct RecordIn {
  bool enable = false;
};
using Inbound = std::variant<TeleopIn, ModeIn, RecordIn>;

/// Parses a client text frame. FormatError for non-JSON, non-objects,
/// unknown or outbound-only "type" values and malformed fields.
Inbound parse_inbound(std::string_view text);

struct Telemetry {
  std::int64_t t_ns = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double steering = 0.0;
  double throttle = 0.0;
  double battery_v = 0.0;
  bool rails_enabled = false;
  bool rails_tripped = false;
  int lap = 0;
  double latency_ms = 0.0;
  double servo_us = 0.0;
  double motor_us = 0.0;
  DriveMode mode = DriveMode::manual;
  bool recording = false;
};

std::string telemetry_json(const Telemetry& t);
/// {"type":"frame","t":..,"ppm_b64":..}
std::string frame_json(const ImageMsg& image);
std::string status_json(DriveMode mode, bool recording, std::optional<std::string> error = {});

/// Transport-independent gateway logic: bridges teleop input onto the bus
/// and applies drive-mode switches by muting actuator sources.
class Hub {
 public:
  struct Reply {
    std::optional<std::string> to_sender;
    std::optional<std::string> broadcast;
  };
  using RecordHook = std::function<bool(bool enable)>;

  Hub(Bus& bus, Topic<JoyMsg> joy_topic, std::vector<actuation::Actuator*> actuators,
      std::string joystick_source = "joystick",
      std::vector<std::string> autonomous_sources = {"nn", "cruise"});

  /// Never throws for client input; errors come back as a status reply.
  Reply handle(std::string_view text);

  void set_mode(DriveMode mode);
  DriveMode mode() const;
  bool recording() const;
  /// Called on "record"; returns the resulting recording state.
  void set_record_hook(RecordHook hook);

  std::size_t teleop_count() const { return teleop_count_.load(); }
  std::size_t error_count() const { return error_count_.load(); }

 private:
  Bus& bus_;
  Topic<JoyMsg> joy_topic_;
  std::vector<actuation::Actuator*> actuators_;
  std::string joystick_source_;
  std::vector<std::string> autonomous_sources_;
  mutable std::mutex mutex_;
  DriveMode mode_ = DriveMode::manual;
  bool recording_ = false;
  RecordHook record_hook_;
  std::atomic<std::size_t> teleop_count_{0};
  std::atomic<std::size_t> error_count_{0};
};

struct ServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::chrono::milliseconds telemetry_period{100};
  /// Minimum spacing of frames to one client (at most 30 in any second).
  std::chrono::milliseconds frame_interval{34};
  std::optional<std::filesystem::path> static_dir;
};

/// WebSocket endpoint on one I/O thread. Plain HTTP GETs are answered from
/// static_dir when set. Telemetry and frames are handed over by the
/// simulation thread and fanned out to every connected client.
class Server {
 public:
  Server(Hub& hub, ServerOptions options);
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server();

  /// Binds and starts the I/O thread. ConfigError if the port is taken.
  void start();
  void stop();
  std::uint16_t port() const;
  std::size_t clients() const;

  void update_telemetry(const Telemetry& t);
  void update_frame(const ImageMsg& image);

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace teacar::gateway
