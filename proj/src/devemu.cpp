#include "teacar/devemu.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "teacar/error.hpp"

namespace teacar::devemu {

// ---------------------------------------------------------------------------
// I2cBus

void I2cBus::attach(std::uint8_t address, std::shared_ptr<I2cDevice> device) {
  if (address > 0x7F) {
    throw ValidationError("I2C address must be 7-bit");
  }
  if (!device) {
    throw ValidationError("I2C device must be non-null");
  }
  std::lock_guard guard(mutex_);
  if (!devices_.emplace(address, std::move(device)).second) {
    throw ValidationError("I2C address already in use");
  }
}

I2cResult I2cBus::write(std::uint8_t address, std::uint8_t reg,
                        std::span<const std::uint8_t> bytes) {
  std::lock_guard guard(mutex_);
  I2cTransaction tx{address, reg, {bytes.begin(), bytes.end()}, true, I2cResult::nack};
  if (auto it = devices_.find(address); it != devices_.end() && it->second->write(reg, bytes)) {
    tx.result = I2cResult::ack;
  }
  const I2cResult result = tx.result;
  if (logging_) log_.push_back(std::move(tx));
  return result;
}

std::optional<std::vector<std::uint8_t>> I2cBus::read(std::uint8_t address, std::uint8_t reg,
                                                      std::size_t count) {
  std::lock_guard guard(mutex_);
  auto it = devices_.find(address);
  if (it == devices_.end()) {
    if (logging_) log_.push_back(I2cTransaction{address, reg, {}, false, I2cResult::nack});
    return std::nullopt;
  }
  auto bytes = it->second->read(reg, count);
  if (logging_) log_.push_back(I2cTransaction{address, reg, bytes, false, I2cResult::ack});
  return bytes;
}

void I2cBus::set_logging(bool enabled) {
  std::lock_guard guard(mutex_);
  logging_ = enabled;
}

void I2cBus::locked(const std::function<void()>& fn) const {
  std::lock_guard guard(mutex_);
  fn();
}

std::vector<I2cTransaction> I2cBus::log() const {
  std::lock_guard guard(mutex_);
  return log_;
}

std::size_t I2cBus::log_size() const {
  std::lock_guard guard(mutex_);
  return log_.size();
}

std::string I2cBus::log_jsonl() const {
  std::lock_guard guard(mutex_);
  std::ostringstream out;
  for (const auto& tx : log_) {
    nlohmann::ordered_json line;
    line["addr"] = tx.address;
    line["reg"] = tx.reg;
    line["bytes"] = tx.bytes;
    line["dir"] = tx.is_write ? "w" : "r";
    line["ack"] = tx.result == I2cResult::ack;
    out << line.dump() << '\n';
  }
  return out.str();
}

void I2cBus::clear_log() {
  std::lock_guard guard(mutex_);
  log_.clear();
}

// ---------------------------------------------------------------------------
// Pca9685

Pca9685::Pca9685() {
  using namespace pca9685;
  regs_[kMode1] = kMode1Sleep | kMode1AllCall;
  regs_[kPreScale] = 0x1E;  // 200 Hz
  for (int ch = 0; ch < kChannels; ++ch) {
    regs_[led_on_l(ch) + 3] = kFullBit;  // LEDn_OFF_H resets to full off
  }
}

void Pca9685::write_one(std::uint8_t reg, std::uint8_t value) {
  using namespace pca9685;
  if (reg == kMode1) {
    const bool was_awake = !sleeping();
    std::uint8_t next = value & static_cast<std::uint8_t>(~kMode1Restart);  // writing 1 clears RESTART
    if (was_awake && (value & kMode1Sleep) != 0) {
      bool any_active = false;
      for (int ch = 0; ch < kChannels; ++ch) {
        const auto c = channel(ch);
        any_active = any_active || (!c.full_off && c.on != c.off);
      }
      if (any_active) {
        next |= kMode1Restart;
      }
    }
    regs_[kMode1] = next;
    return;
  }
  if (reg == kPreScale) {
    if (!sleeping()) {
      diagnostics_.push_back("PRE_SCALE write ignored: SLEEP=0");
      return;
    }
    regs_[kPreScale] = value;
    return;
  }
  if (reg >= kLed0OnL && reg < kLed0OnL + 4 * kChannels && ((reg - kLed0OnL) % 2) == 1) {
    regs_[reg] = value & 0x1F;  // bits 7:5 of the H registers are reserved
    return;
  }
  regs_[reg] = value;
}

bool Pca9685::write(std::uint8_t reg, std::span<const std::uint8_t> bytes) {
  std::uint8_t r = reg;
  for (std::uint8_t b : bytes) {
    write_one(r, b);
    if ((mode1() & pca9685::kMode1Ai) != 0) {
      ++r;
    }
  }
  return true;
}

std::vector<std::uint8_t> Pca9685::read(std::uint8_t reg, std::size_t count) {
  std::vector<std::uint8_t> out;
  out.reserve(count);
  std::uint8_t r = reg;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(regs_[r]);
    if ((mode1() & pca9685::kMode1Ai) != 0) {
      ++r;
    }
  }
  return out;
}

ChannelCounts Pca9685::channel(int index) const {
  if (index < 0 || index >= pca9685::kChannels) {
    throw ValidationError("PCA9685 channel must be in [0, 15]");
  }
  const std::uint8_t base = pca9685::led_on_l(index);
  ChannelCounts c;
  c.on = static_cast<std::uint16_t>(regs_[base] | ((regs_[base + 1] & 0x0F) << 8));
  c.off = static_cast<std::uint16_t>(regs_[base + 2] | ((regs_[base + 3] & 0x0F) << 8));
  c.full_on = (regs_[base + 1] & pca9685::kFullBit) != 0;
  c.full_off = (regs_[base + 3] & pca9685::kFullBit) != 0;
  return c;
}

int prescale_for(double freq_hz) {
  if (!(freq_hz >= pca9685::kMinFrequencyHz && freq_hz <= pca9685::kMaxFrequencyHz)) {
    throw ValidationError("PWM frequency must be in [24, 1526] Hz");
  }
  const double raw = std::round(pca9685::kOscillatorHz / (pca9685::kCounts * freq_hz)) - 1.0;
  return static_cast<int>(std::clamp(raw, 3.0, 255.0));
}

double effective_frequency(int prescale) {
  return pca9685::kOscillatorHz / (pca9685::kCounts * (static_cast<double>(prescale) + 1.0));
}

double duty_of(const Pca9685& device, int channel) {
  if (device.sleeping()) {
    throw StateError("PCA9685 outputs inactive (SLEEP=1)");
  }
  const ChannelCounts c = device.channel(channel);
  const double period_us = 1e6 / effective_frequency(device.prescale());
  if (c.full_off) {
    return 0.0;
  }
  if (c.full_on) {
    return period_us;
  }
  const int high = (static_cast<int>(c.off) - static_cast<int>(c.on) + pca9685::kCounts) %
                   pca9685::kCounts;
  return high * period_us / pca9685::kCounts;
}

// ---------------------------------------------------------------------------
// Power

BatteryModel battery_step(BatteryModel battery, double load_w, double dt_s) {
  if (!(load_w >= 0.0) || !std::isfinite(load_w)) {
    throw ValidationError("battery_step: load must be finite and >= 0");
  }
  if (!(dt_s > 0.0) || !std::isfinite(dt_s)) {
    throw ValidationError("battery_step: dt must be finite and > 0");
  }
  const double energy_j = load_w * dt_s;
  battery.capacity_j = std::max(0.0, battery.capacity_j - energy_j);
  battery.voltage_v = std::max(0.0, battery.voltage_v - battery.sag_coeff_v_per_j * energy_j);
  return battery;
}

PowerBoard::PowerBoard(double input_v) : input_v_(input_v) {
  if (!std::isfinite(input_v)) {
    throw ValidationError("PowerBoard: input voltage must be finite");
  }
  if (in_range(input_v)) {
    rails_ = RailState{true, true, true, kServoRailV, kSensorRailV};
  } else {
    tripped_ = true;
  }
}

void PowerBoard::apply(bool enabled) {
  RailState next = enabled ? RailState{true, true, true, kServoRailV, kSensorRailV} : RailState{};
  if (next != rails_) {
    rails_ = next;
    if (listener_) {
      listener_(rails_);
    }
  }
}

const RailState& PowerBoard::protection_check(double input_v) {
  if (!std::isfinite(input_v)) {
    throw ValidationError("PowerBoard: input voltage must be finite");
  }
  input_v_ = input_v;
  if (!in_range(input_v)) {
    tripped_ = true;
    apply(false);
  } else if (!tripped_) {
    apply(true);
  }
  return rails_;
}

bool PowerBoard::reset() {
  if (tripped_ && in_range(input_v_)) {
    tripped_ = false;
    apply(true);
    return true;
  }
  return false;
}

}  // namespace teacar::devemu
