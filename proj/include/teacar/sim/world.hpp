#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "teacar/actuation.hpp"
#include "teacar/bus.hpp"
#include "teacar/controllers.hpp"
#include "teacar/devemu.hpp"
#include "teacar/sim/camera.hpp"
#include "teacar/sim/track.hpp"
#include "teacar/sim/vehicle.hpp"

namespace teacar::sim {

struct WorldOptions {
  std::int64_t physics_period_ns = 8'333'333;  // 120 Hz
  int camera_every = 4;                        // 30 FPS
  double compute_load_w = 7.5;                 // battery drain while running
};

/// Vehicle pose on the track at arc length s, heading along the tangent.
VehicleState start_state(const Track& track, double s = 0.0);

/// Owns the simulated vehicle. Each physics tick reads the servo and ESC
/// pulses back from the PCA9685, integrates the bicycle model, checks
/// safety, tracks lap progress and drains the battery; every
/// `camera_every` ticks it renders and publishes a camera frame.
class World {
 public:
  World(Bus& bus, Track track, VehicleParams vehicle, CameraModel camera,
        const devemu::I2cBus& i2c, const devemu::Pca9685& pwm_chip,
        actuation::ActuationConfig actuation,
        Topic<ImageMsg> camera_topic, devemu::PowerBoard* power = nullptr,
        WorldOptions options = {});
  World(const World&) = delete;
  World& operator=(const World&) = delete;
  ~World();

  const Track& track() const { return track_; }
  const VehicleParams& vehicle() const { return vehicle_; }
  const CameraModel& camera() const { return camera_; }
  const WorldOptions& options() const { return options_; }

  VehicleState state() const { return state_; }
  void set_state(const VehicleState& s);

  /// Normalized commands the vehicle executed on the last tick.
  double applied_steering() const { return applied_steering_; }
  double applied_throttle() const { return applied_throttle_; }

  /// Arc length covered along the track, counterclockwise positive.
  double progress_m() const { return progress_m_; }
  int laps() const;
  double lateral_offset() const { return lateral_; }

  Safety last_safety() const { return last_safety_; }
  std::size_t violations() const { return violations_; }
  std::optional<Safety> first_violation() const { return first_violation_; }

  std::uint64_t ticks() const { return ticks_; }
  std::uint64_t frames() const { return frames_; }
  const devemu::BatteryModel& battery() const { return battery_; }

 private:
  void tick();
  void read_actuators(double& steering, double& throttle) const;

  Bus& bus_;
  Track track_;
  VehicleParams vehicle_;
  CameraModel camera_;
  const devemu::I2cBus& i2c_;
  const devemu::Pca9685& chip_;
  actuation::ActuationConfig actuation_;
  Topic<ImageMsg> camera_topic_;
  devemu::PowerBoard* power_;
  WorldOptions options_;

  VehicleState state_;
  double last_s_ = 0.0;
  double progress_m_ = 0.0;
  double lateral_ = 0.0;
  double applied_steering_ = 0.0;
  double applied_throttle_ = 0.0;
  Safety last_safety_ = Safety::ok;
  std::size_t violations_ = 0;
  std::optional<Safety> first_violation_;
  std::uint64_t ticks_ = 0;
  std::uint64_t frames_ = 0;
  devemu::BatteryModel battery_;
  PeriodicId periodic_ = 0;
};

/// Scripted expert: on every camera frame, publishes the pure-pursuit
/// steering computed from the world's ground-truth pose.
class PurePursuitDriver final : public controllers::Controller {
 public:
  PurePursuitDriver(Bus& bus, const World& world, Topic<ImageMsg> camera_topic,
                    Topic<MotionCmd> steering_topic, Topic<MotionCmd> throttle_topic,
                    double lookahead_m = 0.45, std::string source_name = "pure_pursuit");
  ~PurePursuitDriver() override;

 private:
  const World& world_;
  double lookahead_m_;
  SubscriptionId subscription_ = 0;
};

/// Seeded Ornstein-Uhlenbeck steering offset. Summed with the expert by the
/// actuator, it pushes the vehicle off the ideal line so the recorded expert
/// labels include recoveries.
class SteeringPerturbation final : public controllers::Controller {
 public:
  SteeringPerturbation(Bus& bus, Topic<MotionCmd> steering_topic, Topic<MotionCmd> throttle_topic,
                       std::uint64_t seed, double stddev = 0.2, double time_constant_s = 0.5,
                       std::int64_t period_ns = 33'333'333,
                       std::string source_name = "perturbation");
  ~SteeringPerturbation() override;

  double value() const { return value_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double decay_;
  double scale_;
  double value_ = 0.0;
  PeriodicId periodic_ = 0;
};

}  // namespace teacar::sim
