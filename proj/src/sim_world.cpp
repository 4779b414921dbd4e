#include "teacar/sim/world.hpp"

#include <algorithm>
#include <cmath>

#include "teacar/error.hpp"
#include "teacar/sim/pursuit.hpp"

namespace teacar::sim {

VehicleState start_state(const Track& track, double s) {
  const Vec2 p = track.point_at(s);
  const Vec2 t = track.tangent_at(s);
  VehicleState v;
  v.x = p.x;
  v.y = p.y;
  v.heading = std::atan2(t.y, t.x);
  return v;
}

World::World(Bus& bus, Track track, VehicleParams vehicle, CameraModel camera,
             const devemu::I2cBus& i2c, const devemu::Pca9685& pwm_chip,
             actuation::ActuationConfig actuation,
             Topic<ImageMsg> camera_topic, devemu::PowerBoard* power, WorldOptions options)
    : bus_(bus),
      track_(std::move(track)),
      vehicle_(vehicle),
      camera_(camera),
      i2c_(i2c),
      chip_(pwm_chip),
      actuation_(std::move(actuation)),
      camera_topic_(std::move(camera_topic)),
      power_(power),
      options_(options) {
  vehicle_.validate();
  max_steer_angle(vehicle_);
  camera_.validate();
  actuation_.validate();
  track_.spec().validate(0.5 * vehicle_.width_m);
  if (options_.physics_period_ns <= 0 || options_.physics_period_ns > 100'000'000 ||
      options_.camera_every < 1) {
    throw ConfigError("world: physics period must lie in (0, 100 ms] and camera_every >= 1");
  }
  set_state(start_state(track_));
  periodic_ = bus_.add_periodic(options_.physics_period_ns, [this] { tick(); });
}

World::~World() { bus_.remove_periodic(periodic_); }

void World::set_state(const VehicleState& s) {
  state_ = s;
  const Projection pr = track_.project({s.x, s.y});
  last_s_ = pr.s;
  lateral_ = pr.lateral;
}

int World::laps() const {
  return std::max(0, static_cast<int>(std::floor(progress_m_ / track_.length())));
}

void World::read_actuators(double& steering, double& throttle) const {
  steering = 0.0;
  throttle = 0.0;
  if (power_ && !power_->rails().all_enabled()) return;
  std::optional<double> servo_us;
  std::optional<double> motor_us;
  i2c_.locked([&] {
    if (chip_.sleeping()) return;
    // A channel held fully off produces no pulses; servo and ESC hold neutral.
    if (!chip_.channel(actuation_.servo_channel).full_off) {
      servo_us = devemu::duty_of(chip_, actuation_.servo_channel);
    }
    if (!chip_.channel(actuation_.motor_channel).full_off) {
      motor_us = devemu::duty_of(chip_, actuation_.motor_channel);
    }
  });
  if (servo_us) {
    steering = std::clamp(actuation::steering_from_pulse(*servo_us, actuation_.servo), -1.0, 1.0);
  }
  if (motor_us) {
    throttle = std::clamp(actuation::throttle_from_pulse(*motor_us, actuation_.esc), -1.0, 1.0);
  }
}

void World::tick() {
  const double dt = options_.physics_period_ns * 1e-9;
  read_actuators(applied_steering_, applied_throttle_);
  state_ = bicycle_step(state_, applied_steering_, applied_throttle_, vehicle_, dt);

  const Projection pr = track_.project({state_.x, state_.y});
  progress_m_ += std::remainder(pr.s - last_s_, track_.length());
  last_s_ = pr.s;
  lateral_ = pr.lateral;

  last_safety_ = safety_check(state_, track_, vehicle_);
  if (last_safety_ != Safety::ok) {
    ++violations_;
    if (!first_violation_) first_violation_ = last_safety_;
  }

  battery_ = devemu::battery_step(battery_, options_.compute_load_w, dt);
  if (power_) power_->protection_check(battery_.voltage_v);

  ++ticks_;
  if (ticks_ % static_cast<std::uint64_t>(options_.camera_every) == 0) {
    bus_.publish(camera_topic_, render(camera_, track_, state_, bus_.now(), frames_));
    ++frames_;
  }
}

PurePursuitDriver::PurePursuitDriver(Bus& bus, const World& world, Topic<ImageMsg> camera_topic,
                                     Topic<MotionCmd> steering_topic,
                                     Topic<MotionCmd> throttle_topic, double lookahead_m,
                                     std::string source_name)
    : Controller(bus, std::move(source_name), std::move(steering_topic), std::move(throttle_topic)),
      world_(world),
      lookahead_m_(lookahead_m) {
  if (!(lookahead_m_ > 0.0)) {
    throw ValidationError("pure pursuit: lookahead must be positive");
  }
  subscription_ = this->bus().subscribe<ImageMsg>(camera_topic, [this](const ImageMsg&) {
    emit(pure_pursuit(world_.state(), world_.track(), lookahead_m_, world_.vehicle()),
         std::nullopt);
  });
}

PurePursuitDriver::~PurePursuitDriver() { bus().unsubscribe(subscription_); }

SteeringPerturbation::SteeringPerturbation(Bus& bus, Topic<MotionCmd> steering_topic,
                                           Topic<MotionCmd> throttle_topic, std::uint64_t seed,
                                           double stddev, double time_constant_s,
                                           std::int64_t period_ns, std::string source_name)
    : Controller(bus, std::move(source_name), std::move(steering_topic), std::move(throttle_topic)),
      rng_(seed) {
  if (!(stddev >= 0.0) || !(time_constant_s > 0.0) || period_ns <= 0) {
    throw ValidationError("perturbation: stddev >= 0, time constant and period > 0 required");
  }
  decay_ = std::exp(-period_ns * 1e-9 / time_constant_s);
  scale_ = stddev * std::sqrt(1.0 - decay_ * decay_);
  periodic_ = this->bus().add_periodic(period_ns, [this] {
    value_ = decay_ * value_ + scale_ * normal_(rng_);
    emit(value_, std::nullopt);
  });
}

SteeringPerturbation::~SteeringPerturbation() { bus().remove_periodic(periodic_); }

}  // namespace teacar::sim
