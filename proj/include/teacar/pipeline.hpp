#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "teacar/actuation.hpp"
#include "teacar/bus.hpp"
#include "teacar/controllers.hpp"
#include "teacar/devemu.hpp"
#include "teacar/nn/network.hpp"
#include "teacar/recorder.hpp"
#include "teacar/sim/world.hpp"

namespace teacar {

struct Topics {
  Topic<ImageMsg> camera{"camera/image"};
  Topic<MotionCmd> steering{"cmd/steering"};
  Topic<MotionCmd> throttle{"cmd/throttle"};
  Topic<PwmChannelCmd> pwm{"pwm/cmd"};
  Topic<JoyMsg> joy{"joy"};
};

struct StackOptions {
  sim::TrackSpec track = sim::make_reference_track();
  sim::VehicleParams vehicle;
  sim::CameraModel camera;
  actuation::ActuationConfig actuation;
  sim::WorldOptions world;
  BusMode mode = BusMode::stepped;
  bool log_i2c = false;
};

/// Bus, emulated PCA9685 and power board, both actuator layers and the
/// simulated world, wired on the standard topics. Controllers are added on top.
class SimStack {
 public:
  explicit SimStack(StackOptions options = {});
  SimStack(const SimStack&) = delete;
  SimStack& operator=(const SimStack&) = delete;
  ~SimStack();

  Bus& bus() { return *bus_; }
  const Topics& topics() const { return topics_; }
  devemu::I2cBus& i2c() { return i2c_; }
  const devemu::Pca9685& chip() const { return *chip_; }
  devemu::PowerBoard& power() { return power_; }
  actuation::ServoActuator& servo() { return *servo_; }
  actuation::MotorActuator& motor() { return *motor_; }
  sim::World& world() { return *world_; }
  const StackOptions& options() const { return options_; }

  /// Advances the stepped bus by one physics period.
  void step();
  double sim_seconds() const;

 private:
  StackOptions options_;
  std::unique_ptr<Bus> bus_;
  Topics topics_;
  devemu::I2cBus i2c_;
  std::shared_ptr<devemu::Pca9685> chip_;
  devemu::PowerBoard power_;
  std::unique_ptr<actuation::PwmDriver> driver_;
  std::unique_ptr<actuation::ServoActuator> servo_;
  std::unique_ptr<actuation::MotorActuator> motor_;
  std::unique_ptr<sim::World> world_;
};

struct DriveOptions {
  double cruise_throttle = 0.5;
  double lookahead_m = 0.45;
  /// Steering noise added by actuator summation; 0 disables.
  double perturbation_stddev = 0.0;
  std::uint64_t seed = 0;
  int laps = 3;
  double max_sim_seconds = 600.0;
  /// Stop at the first safety violation.
  bool stop_on_violation = true;
};

struct DriveResult {
  int laps = 0;
  std::size_t violations = 0;
  std::optional<sim::Safety> first_violation;
  double sim_seconds = 0.0;
  double max_abs_lateral_m = 0.0;
  std::uint64_t frames = 0;
  double mean_latency_ms = 0.0;  // network forward passes only
};

/// Pure-pursuit expert with cruise throttle until `laps` laps are done.
DriveResult run_oracle(const StackOptions& stack, const DriveOptions& options);

/// The network steers from camera frames; cruise supplies throttle.
DriveResult drive_model(const StackOptions& stack, const nn::Weights& model,
                        const DriveOptions& options);

struct RecordResult {
  recorder::DatasetManifest manifest;
  std::size_t skipped = 0;
  DriveResult drive;
};

/// Expert drives with seeded perturbation while the recorder pairs frames with
/// the expert's steering until `samples` pairs are captured.
RecordResult record_dataset(const StackOptions& stack, const std::filesystem::path& dir,
                            std::size_t samples, const DriveOptions& options,
                            const std::function<void(std::size_t)>& progress = {});

}  // namespace teacar
