#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "teacar/bus.hpp"
#include "teacar/nn/network.hpp"

namespace teacar::controllers {

/// Base for every controller node. Derived nodes hand target values to
/// emit(); the base stamps, clamps and publishes them as MotionCmd.
class Controller {
 public:
  Controller(Bus& bus, std::string source_name, Topic<MotionCmd> steering_topic,
             Topic<MotionCmd> throttle_topic);
  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;
  virtual ~Controller() = default;

  /// Publishes one MotionCmd per supplied value, clamped to [-1, 1].
  /// Non-finite input throws ValidationError and publishes nothing.
  /// Returns the number of messages published.
  std::size_t emit(std::optional<double> steering, std::optional<double> throttle);

  const std::string& source_name() const { return source_; }

 protected:
  Bus& bus() { return bus_; }

 private:
  Bus& bus_;
  std::string source_;
  Topic<MotionCmd> steering_topic_;
  Topic<MotionCmd> throttle_topic_;
};

struct JoyMapping {
  int steering_axis = 0;
  int throttle_axis = 1;
  int steering_sign = 1;
  int throttle_sign = 1;
  double deadzone = 0.05;
  int enable_button = 0;

  /// Throws ValidationError for negative indices, signs other than +-1 or a
  /// deadzone outside [0, 0.2].
  void validate() const;
  static JoyMapping from_json(const nlohmann::json& j);
  static JoyMapping load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct JoyCommand {
  double steering = 0.0;
  double throttle = 0.0;
  bool enabled = false;
};

/// 0 inside the deadzone, then rescaled so that |x| = 1 still maps to 1.
double deadzoned(double x, double deadzone);

/// ValidationError if an index is out of range for the message.
JoyCommand joystick_map(const JoyMsg& joy, const JoyMapping& mapping);

/// Manual control. Emits steering and throttle while the enable button is
/// held and nothing otherwise; actuator source expiry then neutralizes.
class JoystickController final : public Controller {
 public:
  JoystickController(Bus& bus, Topic<JoyMsg> joy_topic, Topic<MotionCmd> steering_topic,
                     Topic<MotionCmd> throttle_topic, JoyMapping mapping,
                     std::string source_name = "joystick");
  ~JoystickController() override;

  std::size_t messages_handled() const { return handled_; }

 private:
  JoyMapping mapping_;
  SubscriptionId subscription_ = 0;
  std::size_t handled_ = 0;
};

/// Steering from one camera frame. ValidationError on a wrong image shape.
double nn_control(const ImageMsg& image, const nn::Weights& model);

/// Autonomous steering: runs the network on every camera frame.
class NnController final : public Controller {
 public:
  NnController(Bus& bus, Topic<ImageMsg> camera_topic, Topic<MotionCmd> steering_topic,
               Topic<MotionCmd> throttle_topic, nn::Weights model, std::string source_name = "nn");
  ~NnController() override;

  /// Wall-clock duration of the last forward pass.
  double last_latency_ms() const { return last_latency_ms_; }
  std::size_t frames_processed() const { return frames_; }

 private:
  nn::Weights model_;
  SubscriptionId subscription_ = 0;
  double last_latency_ms_ = 0.0;
  std::size_t frames_ = 0;
};

/// Publishes a fixed throttle at a fixed period (autonomous cruise).
class CruiseController final : public Controller {
 public:
  CruiseController(Bus& bus, Topic<MotionCmd> steering_topic, Topic<MotionCmd> throttle_topic,
                   double throttle, std::int64_t period_ns = 33'333'333,
                   std::string source_name = "cruise");
  ~CruiseController() override;

  void set_throttle(double throttle);
  double throttle() const { return throttle_.load(); }

 private:
  std::atomic<double> throttle_;
  PeriodicId periodic_ = 0;
};

}  // namespace teacar::controllers
