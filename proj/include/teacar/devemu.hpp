#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace teacar::devemu {

// ---------------------------------------------------------------------------
// I2C

/// Register-addressed I2C target.
class I2cDevice {
 public:
  virtual ~I2cDevice() = default;
  /// Writes starting at `reg`. Returns false to NACK.
  virtual bool write(std::uint8_t reg, std::span<const std::uint8_t> bytes) = 0;
  virtual std::vector<std::uint8_t> read(std::uint8_t reg, std::size_t count) = 0;
};

enum class I2cResult { ack, nack };

struct I2cTransaction {
  std::uint8_t address = 0;
  std::uint8_t reg = 0;
  std::vector<std::uint8_t> bytes;
  bool is_write = true;
  I2cResult result = I2cResult::ack;
};

/// Emulated bus: 7-bit address map plus an append-only transaction log.
/// All transactions are serialized by an internal mutex.
class I2cBus {
 public:
  /// Throws ValidationError for addresses above 0x7F or already taken.
  void attach(std::uint8_t address, std::shared_ptr<I2cDevice> device);

  I2cResult write(std::uint8_t address, std::uint8_t reg, std::span<const std::uint8_t> bytes);
  I2cResult write(std::uint8_t address, std::uint8_t reg, std::initializer_list<std::uint8_t> bytes) {
    return write(address, reg, std::span(bytes.begin(), bytes.size()));
  }
  /// nullopt on NACK.
  std::optional<std::vector<std::uint8_t>> read(std::uint8_t address, std::uint8_t reg,
                                                std::size_t count);

  std::vector<I2cTransaction> log() const;
  std::size_t log_size() const;
  /// One JSON object per line: {"addr":..,"reg":..,"bytes":[..],"dir":"w"|"r","ack":bool}.
  std::string log_jsonl() const;
  void clear_log();
  /// Long-running stacks turn the transaction log off to bound memory.
  void set_logging(bool enabled);

  /// Runs fn under the bus lock, so device state read inside it is not torn
  /// by a concurrent transaction. fn must not touch the bus itself.
  void locked(const std::function<void()>& fn) const;

 private:
  mutable std::mutex mutex_;
  std::map<std::uint8_t, std::shared_ptr<I2cDevice>> devices_;
  std::vector<I2cTransaction> log_;
  bool logging_ = true;
};

// ---------------------------------------------------------------------------
// PCA9685

namespace pca9685 {
inline constexpr std::uint8_t kDefaultAddress = 0x40;
inline constexpr std::uint8_t kMode1 = 0x00;
inline constexpr std::uint8_t kLed0OnL = 0x06;
inline constexpr std::uint8_t kPreScale = 0xFE;
inline constexpr std::uint8_t kMode1Restart = 0x80;
inline constexpr std::uint8_t kMode1Ai = 0x20;
inline constexpr std::uint8_t kMode1Sleep = 0x10;
inline constexpr std::uint8_t kMode1AllCall = 0x01;
inline constexpr std::uint8_t kFullBit = 0x10;  // bit 4 of LEDn_ON_H / LEDn_OFF_H
inline constexpr double kOscillatorHz = 25'000'000.0;
inline constexpr int kChannels = 16;
inline constexpr int kCounts = 4096;
inline constexpr double kMinFrequencyHz = 24.0;
inline constexpr double kMaxFrequencyHz = 1526.0;

constexpr std::uint8_t led_on_l(int channel) { return static_cast<std::uint8_t>(kLed0OnL + 4 * channel); }
}  // namespace pca9685

struct ChannelCounts {
  std::uint16_t on = 0;
  std::uint16_t off = 0;
  bool full_on = false;
  bool full_off = false;
};

/// 16-channel 12-bit PWM controller with the datasheet register map subset:
/// MODE1, LED0_ON_L..LED15_OFF_H, PRE_SCALE. Power-on MODE1 is 0x11 (SLEEP, ALLCALL).
class Pca9685 final : public I2cDevice {
 public:
  Pca9685();

  bool write(std::uint8_t reg, std::span<const std::uint8_t> bytes) override;
  std::vector<std::uint8_t> read(std::uint8_t reg, std::size_t count) override;

  std::uint8_t mode1() const { return regs_[pca9685::kMode1]; }
  std::uint8_t prescale() const { return regs_[pca9685::kPreScale]; }
  bool sleeping() const { return (mode1() & pca9685::kMode1Sleep) != 0; }
  ChannelCounts channel(int index) const;
  std::uint8_t reg(std::uint8_t address) const { return regs_[address]; }

  /// Writes the device rejected or ignored (e.g. PRE_SCALE while awake).
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  void write_one(std::uint8_t reg, std::uint8_t value);

  std::array<std::uint8_t, 256> regs_{};
  std::vector<std::string> diagnostics_;
};

/// round(25 MHz / (4096 f)) - 1, clamped to [3, 255]. ValidationError outside [24, 1526] Hz.
int prescale_for(double freq_hz);
/// 25 MHz / (4096 (prescale + 1)).
double effective_frequency(int prescale);
/// Pulse width currently produced on `channel`. StateError while SLEEP is set.
double duty_of(const Pca9685& device, int channel);

// ---------------------------------------------------------------------------
// Power

struct BatteryModel {
  double voltage_v = 12.6;
  double capacity_j = 91'908.0;  // 3S 2300 mAh at 11.1 V nominal
  double sag_coeff_v_per_j = 1.0 / 13'500.0;
};

/// Linear open-circuit sag: drawing E = load * dt joules lowers the voltage
/// by sag * E. Voltage and capacity floor at zero.
BatteryModel battery_step(BatteryModel battery, double load_w, double dt_s);

struct RailState {
  bool direct_batt = false;  // computing unit + motor driver
  bool servo_buck = false;
  bool sensor_5v = false;
  double servo_v = 0.0;
  double sensor_v = 0.0;

  bool all_enabled() const { return direct_batt && servo_buck && sensor_5v; }
  bool all_disabled() const { return !direct_batt && !servo_buck && !sensor_5v; }
  friend bool operator==(const RailState&, const RailState&) = default;
};

/// Power distribution board with under/over-voltage protection. A trip
/// disables every rail at once and latches until the input is back in range
/// and reset() is called.
class PowerBoard {
 public:
  static constexpr double kProtectionMinV = 9.0;
  static constexpr double kProtectionMaxV = 15.0;
  static constexpr double kServoRailV = 6.0;
  static constexpr double kSensorRailV = 5.0;

  using Listener = std::function<void(const RailState&)>;

  explicit PowerBoard(double input_v = 12.6);

  /// Updates the input voltage and re-evaluates protection.
  const RailState& protection_check(double input_v);
  /// Clears a latched trip if the input is in range. Returns true if rails came back.
  bool reset();

  const RailState& rails() const { return rails_; }
  double input_v() const { return input_v_; }
  bool tripped() const { return tripped_; }
  /// Called on every rail state change.
  void set_listener(Listener listener) { listener_ = std::move(listener); }

  static bool in_range(double v) { return v >= kProtectionMinV && v <= kProtectionMaxV; }

 private:
  void apply(bool enabled);

  double input_v_;
  bool tripped_ = false;
  RailState rails_;
  Listener listener_;
};

}  // namespace teacar::devemu
