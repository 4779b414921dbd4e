#include "teacar/actuation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "teacar/error.hpp"

namespace teacar::actuation {

namespace {

void require_unit(double v, const char* what) {
  if (!std::isfinite(v) || std::abs(v) > 1.0) {
    throw ValidationError(std::string(what) + " must be finite and within [-1, 1]");
  }
}

}  // namespace

void ServoCalibration::validate() const {
  if (!(span_us > 0.0) || !(min_us <= center_us - span_us) || !(center_us + span_us <= max_us)) {
    throw ValidationError("servo calibration requires span > 0 and min <= center - span, "
                          "center + span <= max");
  }
}

void EscCalibration::validate() const {
  if (!(forward_span_us > 0.0) || !(reverse_span_us > 0.0) ||
      !(neutral_us - reverse_span_us >= 0.0) || !(deadband_us >= 0.0) ||
      !(deadband_us < std::min(forward_span_us, reverse_span_us))) {
    throw ValidationError("ESC calibration requires positive spans, a non-negative floor and a "
                          "deadband narrower than either span");
  }
}

void ActuationConfig::validate() const {
  servo.validate();
  esc.validate();
  devemu::prescale_for(freq_hz);
  auto valid_channel = [](int c) { return c >= 0 && c < devemu::pca9685::kChannels; };
  if (!valid_channel(servo_channel) || !valid_channel(motor_channel) ||
      servo_channel == motor_channel) {
    throw ValidationError("servo and motor channels must be distinct and in [0, 15]");
  }
}

ActuationConfig ActuationConfig::from_json(const nlohmann::json& j) {
  ActuationConfig c;
  try {
    if (j.contains("servo")) {
      const auto& s = j.at("servo");
      c.servo.center_us = s.value("center_us", c.servo.center_us);
      c.servo.span_us = s.value("span_us", c.servo.span_us);
      c.servo.min_us = s.value("min_us", c.servo.min_us);
      c.servo.max_us = s.value("max_us", c.servo.max_us);
      c.servo.invert = s.value("invert", c.servo.invert);
    }
    if (j.contains("esc")) {
      const auto& e = j.at("esc");
      c.esc.neutral_us = e.value("neutral_us", c.esc.neutral_us);
      c.esc.forward_span_us = e.value("forward_span_us", c.esc.forward_span_us);
      c.esc.reverse_span_us = e.value("reverse_span_us", c.esc.reverse_span_us);
      c.esc.deadband_us = e.value("deadband_us", c.esc.deadband_us);
      c.esc.invert = e.value("invert", c.esc.invert);
    }
    c.freq_hz = j.value("freq_hz", c.freq_hz);
    c.servo_channel = j.value("servo_channel", c.servo_channel);
    c.motor_channel = j.value("motor_channel", c.motor_channel);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("calibration: ") + e.what());
  }
  c.validate();
  return c;
}

ActuationConfig ActuationConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open calibration file " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("calibration " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ActuationConfig::to_json() const {
  return {{"servo",
           {{"center_us", servo.center_us},
            {"span_us", servo.span_us},
            {"min_us", servo.min_us},
            {"max_us", servo.max_us},
            {"invert", servo.invert}}},
          {"esc",
           {{"neutral_us", esc.neutral_us},
            {"forward_span_us", esc.forward_span_us},
            {"reverse_span_us", esc.reverse_span_us},
            {"deadband_us", esc.deadband_us},
            {"invert", esc.invert}}},
          {"freq_hz", freq_hz},
          {"servo_channel", servo_channel},
          {"motor_channel", motor_channel}};
}

double aggregate(const std::map<std::string, double>& latest_by_source) {
  double sum = 0.0;
  for (const auto& [source, value] : latest_by_source) {
    if (!std::isfinite(value)) {
      throw ValidationError("aggregate: value from '" + source + "' is not finite");
    }
    sum += value;
  }
  return std::clamp(sum, -1.0, 1.0);
}

double servo_pulse(double steering, const ServoCalibration& cal) {
  require_unit(steering, "steering");
  const double sign = cal.invert ? -1.0 : 1.0;
  return std::clamp(cal.center_us + sign * steering * cal.span_us, cal.min_us, cal.max_us);
}

double motor_pulse(double throttle, const EscCalibration& cal) {
  require_unit(throttle, "throttle");
  const double sign = cal.invert ? -1.0 : 1.0;
  const double span = throttle >= 0.0 ? cal.forward_span_us : cal.reverse_span_us;
  return std::clamp(cal.neutral_us + sign * throttle * span, cal.neutral_us - cal.reverse_span_us,
                    cal.neutral_us + cal.forward_span_us);
}

double steering_from_pulse(double pulse_us, const ServoCalibration& cal) {
  const double sign = cal.invert ? -1.0 : 1.0;
  return std::clamp(sign * (pulse_us - cal.center_us) / cal.span_us, -1.0, 1.0);
}

double throttle_from_pulse(double pulse_us, const EscCalibration& cal) {
  const double sign = cal.invert ? -1.0 : 1.0;
  const double d = sign * (pulse_us - cal.neutral_us);
  if (std::abs(d) <= cal.deadband_us) return 0.0;
  return std::clamp(d >= 0.0 ? d / cal.forward_span_us : d / cal.reverse_span_us, -1.0, 1.0);
}

std::uint16_t off_count(double pulse_width_us, double freq_hz) {
  if (!std::isfinite(pulse_width_us) || pulse_width_us < 0.0) {
    throw ValidationError("pulse width must be finite and >= 0");
  }
  const double f = devemu::effective_frequency(devemu::prescale_for(freq_hz));
  const double counts = std::round(pulse_width_us * f * devemu::pca9685::kCounts / 1e6);
  return static_cast<std::uint16_t>(std::clamp(counts, 0.0, 4095.0));
}

std::vector<RegisterWrite> write_pwm(const PwmChannelCmd& cmd, double freq_hz) {
  if (cmd.channel < 0 || cmd.channel >= devemu::pca9685::kChannels) {
    throw ValidationError("PWM channel must be in [0, 15]");
  }
  const std::uint16_t off = off_count(cmd.pulse_width_us, freq_hz);
  return {RegisterWrite{devemu::pca9685::led_on_l(cmd.channel),
                        {0x00, 0x00, static_cast<std::uint8_t>(off & 0xFF),
                         static_cast<std::uint8_t>(off >> 8)}}};
}

// ---------------------------------------------------------------------------
// Actuator

Actuator::Actuator(Bus& bus, Topic<MotionCmd> command_topic, Topic<PwmChannelCmd> pwm_topic,
                   int channel, ActuatorOptions options)
    : bus_(bus), pwm_topic_(std::move(pwm_topic)), channel_(channel), options_(options) {
  subscription_ = bus_.subscribe<MotionCmd>(command_topic, [this](const MotionCmd& cmd) {
    {
      std::lock_guard guard(mutex_);
      latest_[cmd.source] = Entry{cmd.value, bus_.now().nanos};
    }
    refresh();
  });
  periodic_ = bus_.add_periodic(options_.refresh_period_ns, [this] { refresh(); });
}

Actuator::~Actuator() {
  bus_.remove_periodic(periodic_);
  bus_.unsubscribe(subscription_);
}

void Actuator::set_muted_sources(std::set<std::string> muted) {
  std::lock_guard guard(mutex_);
  muted_ = std::move(muted);
}

std::set<std::string> Actuator::muted_sources() const {
  std::lock_guard guard(mutex_);
  return muted_;
}

std::map<std::string, double> Actuator::live_sources_locked(std::int64_t now_ns) const {
  std::map<std::string, double> live;
  for (const auto& [source, entry] : latest_) {
    if (muted_.contains(source) || now_ns - entry.received_ns > options_.source_expiry_ns) {
      continue;
    }
    live.emplace(source, entry.value);
  }
  return live;
}

std::map<std::string, double> Actuator::live_sources() const {
  std::lock_guard guard(mutex_);
  return live_sources_locked(bus_.now().nanos);
}

double Actuator::combined() const { return aggregate(live_sources()); }

double Actuator::last_pulse_us() const {
  std::lock_guard guard(mutex_);
  return last_pulse_us_;
}

void Actuator::refresh() {
  const Timestamp now = bus_.now();
  double pulse = 0.0;
  {
    std::lock_guard guard(mutex_);
    pulse = to_pulse(aggregate(live_sources_locked(now.nanos)));
    last_pulse_us_ = pulse;
  }
  bus_.publish(pwm_topic_, PwmChannelCmd{Header{now}, channel_, pulse});
}

ServoActuator::ServoActuator(Bus& bus, Topic<MotionCmd> steering_topic,
                             Topic<PwmChannelCmd> pwm_topic, int channel, ServoCalibration cal,
                             ActuatorOptions options)
    : Actuator(bus, std::move(steering_topic), std::move(pwm_topic), channel, options), cal_(cal) {
  cal_.validate();
}

MotorActuator::MotorActuator(Bus& bus, Topic<MotionCmd> throttle_topic,
                             Topic<PwmChannelCmd> pwm_topic, int channel, EscCalibration cal,
                             ActuatorOptions options)
    : Actuator(bus, std::move(throttle_topic), std::move(pwm_topic), channel, options), cal_(cal) {
  cal_.validate();
}

// ---------------------------------------------------------------------------
// PwmDriver

PwmDriver::PwmDriver(Bus& bus, Topic<PwmChannelCmd> pwm_topic, devemu::I2cBus& i2c,
                     std::uint8_t address, double freq_hz)
    : bus_(bus), i2c_(i2c), address_(address), freq_hz_(freq_hz) {
  devemu::prescale_for(freq_hz_);
  subscription_ =
      bus_.subscribe<PwmChannelCmd>(pwm_topic, [this](const PwmChannelCmd& cmd) { apply(cmd); });
}

PwmDriver::~PwmDriver() { bus_.unsubscribe(subscription_); }

void PwmDriver::initialize() {
  using namespace devemu::pca9685;
  std::lock_guard guard(mutex_);
  const auto prescale = static_cast<std::uint8_t>(devemu::prescale_for(freq_hz_));
  const bool ok =
      i2c_.write(address_, kMode1, {kMode1Sleep | kMode1AllCall}) == devemu::I2cResult::ack &&
      i2c_.write(address_, kPreScale, {prescale}) == devemu::I2cResult::ack &&
      i2c_.write(address_, kMode1, {kMode1Ai | kMode1AllCall}) == devemu::I2cResult::ack &&
      i2c_.write(address_, kMode1, {kMode1Restart | kMode1Ai | kMode1AllCall}) ==
          devemu::I2cResult::ack;
  if (!ok) {
    throw StateError("PCA9685 not responding on the I2C bus");
  }
  initialized_ = true;
}

void PwmDriver::apply(const PwmChannelCmd& cmd) {
  std::lock_guard guard(mutex_);
  if (!initialized_) {
    throw StateError("PWM driver used before initialize()");
  }
  for (const auto& w : write_pwm(cmd, freq_hz_)) {
    if (i2c_.write(address_, w.reg, std::span(w.bytes)) != devemu::I2cResult::ack) {
      ++writes_failed_;
    }
  }
}

}  // namespace teacar::actuation
