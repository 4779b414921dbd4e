#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teacar/bus.hpp"
#include "teacar/devemu.hpp"

namespace teacar::actuation {

struct ServoCalibration {
  double center_us = 1500.0;
  double span_us = 500.0;
  double min_us = 1000.0;
  double max_us = 2000.0;
  bool invert = false;

  /// Throws ValidationError unless min <= center - span and center + span <= max.
  void validate() const;
};

struct EscCalibration {
  double neutral_us = 1500.0;
  double forward_span_us = 500.0;
  double reverse_span_us = 500.0;
  /// The ESC treats pulses this close to neutral as neutral.
  double deadband_us = 10.0;
  bool invert = false;

  void validate() const;
};

struct ActuationConfig {
  ServoCalibration servo;
  EscCalibration esc;
  double freq_hz = 50.0;
  int servo_channel = 0;
  int motor_channel = 1;

  void validate() const;
  static ActuationConfig from_json(const nlohmann::json& j);
  static ActuationConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// clamp(sum of values, -1, 1). Sources are summed in key order, so the
/// result does not depend on insertion order.
double aggregate(const std::map<std::string, double>& latest_by_source);

double servo_pulse(double steering, const ServoCalibration& cal);
double motor_pulse(double throttle, const EscCalibration& cal);
/// Inverses of the pulse maps on their unclamped range; used by the world to
/// read back what the actuators are doing. The throttle inverse honors the
/// ESC deadband.
double steering_from_pulse(double pulse_us, const ServoCalibration& cal);
double throttle_from_pulse(double pulse_us, const EscCalibration& cal);

struct RegisterWrite {
  std::uint8_t reg = 0;
  std::vector<std::uint8_t> bytes;

  friend bool operator==(const RegisterWrite&, const RegisterWrite&) = default;
};

/// OFF count for a pulse, computed against the frequency the device actually
/// runs at for `freq_hz` (its quantized prescaler), rounded and clamped to [0, 4095].
std::uint16_t off_count(double pulse_width_us, double freq_hz);

/// LEDn_ON_L..LEDn_OFF_H block for one channel (ON = 0), as a single
/// auto-increment write. ValidationError for channel > 15 or bad frequency.
std::vector<RegisterWrite> write_pwm(const PwmChannelCmd& cmd, double freq_hz);

struct ActuatorOptions {
  std::int64_t source_expiry_ns = 500'000'000;
  std::int64_t refresh_period_ns = 20'000'000;
};

/// Layer-1 actuator: keeps the latest value per controller source, sums the
/// live ones and hands the result to the derived class for pulse conversion.
/// The derived pulse is published on the PWM topic on every command and on a
/// periodic refresh, so expired sources drop out without new traffic.
class Actuator {
 public:
  Actuator(Bus& bus, Topic<MotionCmd> command_topic, Topic<PwmChannelCmd> pwm_topic, int channel,
           ActuatorOptions options = {});
  Actuator(const Actuator&) = delete;
  Actuator& operator=(const Actuator&) = delete;
  virtual ~Actuator();

  /// Muted sources are ignored by aggregation (gateway drive-mode switch).
  void set_muted_sources(std::set<std::string> muted);
  std::set<std::string> muted_sources() const;

  /// Current live latest-per-source table, after expiry and muting.
  std::map<std::string, double> live_sources() const;
  double combined() const;
  double last_pulse_us() const;
  int channel() const { return channel_; }

 protected:
  virtual double to_pulse(double command) const = 0;

 private:
  struct Entry {
    double value;
    std::int64_t received_ns;
  };

  std::map<std::string, double> live_sources_locked(std::int64_t now_ns) const;
  void refresh();

  Bus& bus_;
  Topic<PwmChannelCmd> pwm_topic_;
  int channel_;
  ActuatorOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> latest_;
  std::set<std::string> muted_;
  double last_pulse_us_ = 0.0;
  SubscriptionId subscription_ = 0;
  PeriodicId periodic_ = 0;
};

class ServoActuator final : public Actuator {
 public:
  ServoActuator(Bus& bus, Topic<MotionCmd> steering_topic, Topic<PwmChannelCmd> pwm_topic,
                int channel, ServoCalibration cal, ActuatorOptions options = {});

 protected:
  double to_pulse(double command) const override { return servo_pulse(command, cal_); }

 private:
  ServoCalibration cal_;
};

class MotorActuator final : public Actuator {
 public:
  MotorActuator(Bus& bus, Topic<MotionCmd> throttle_topic, Topic<PwmChannelCmd> pwm_topic,
                int channel, EscCalibration cal, ActuatorOptions options = {});

 protected:
  double to_pulse(double command) const override { return motor_pulse(command, cal_); }

 private:
  EscCalibration cal_;
};

/// Layer-2 actuator node: owns the PCA9685 on the I2C bus and turns
/// PwmChannelCmd messages into register writes.
class PwmDriver {
 public:
  PwmDriver(Bus& bus, Topic<PwmChannelCmd> pwm_topic, devemu::I2cBus& i2c,
            std::uint8_t address = devemu::pca9685::kDefaultAddress, double freq_hz = 50.0);
  PwmDriver(const PwmDriver&) = delete;
  PwmDriver& operator=(const PwmDriver&) = delete;
  ~PwmDriver();

  /// Sleep, program PRE_SCALE, wake with auto-increment, restart.
  void initialize();
  bool initialized() const { return initialized_; }

  /// StateError before initialize(); ValidationError for bad channels.
  void apply(const PwmChannelCmd& cmd);
  std::size_t writes_failed() const { return writes_failed_; }

 private:
  Bus& bus_;
  devemu::I2cBus& i2c_;
  std::uint8_t address_;
  double freq_hz_;
  bool initialized_ = false;
  std::size_t writes_failed_ = 0;
  std::mutex mutex_;
  SubscriptionId subscription_ = 0;
};

}  // namespace teacar::actuation
