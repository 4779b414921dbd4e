#include "teacar/sim/vehicle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "teacar/error.hpp"

namespace teacar::sim {

namespace {
constexpr double kGravity = 9.81;
constexpr double kDegToRad = std::numbers::pi / 180.0;
}  // namespace

void VehicleParams::validate() const {
  const double fields[] = {wheelbase_m,  mass_kg,       length_m,      width_m,
                           height_m,     min_turn_radius_m, max_roll_deg, max_pitch_deg,
                           max_speed_mps, speed_time_constant_s};
  for (double f : fields) {
    if (!(f > 0.0) || !std::isfinite(f)) {
      throw ConfigError("vehicle parameters must all be positive and finite");
    }
  }
}

double max_steer_angle(const VehicleParams& p) {
  if (!(p.wheelbase_m >= 0.0) || !(p.wheelbase_m < p.min_turn_radius_m)) {
    throw ConfigError("vehicle: wheelbase must be shorter than the minimum turning radius");
  }
  return std::atan(p.wheelbase_m / p.min_turn_radius_m);
}

VehicleState bicycle_step(const VehicleState& s, double steering_norm, double throttle_norm,
                          const VehicleParams& p, double dt_s) {
  if (!(dt_s > 0.0 && dt_s <= 0.1)) {
    throw ValidationError("bicycle_step: dt must lie in (0, 0.1] s");
  }
  if (!(std::abs(steering_norm) <= 1.0) || !(std::abs(throttle_norm) <= 1.0)) {
    throw ValidationError("bicycle_step: normalized inputs must lie in [-1, 1]");
  }
  VehicleState n = s;
  n.steering_angle = steering_norm * max_steer_angle(p);

  const double target = throttle_norm * p.max_speed_mps;
  const double blend = 1.0 - std::exp(-dt_s / p.speed_time_constant_s);
  n.speed = std::clamp(s.speed + (target - s.speed) * blend, -p.max_speed_mps, p.max_speed_mps);

  const double curvature = std::tan(n.steering_angle) / p.wheelbase_m;
  const double ds = n.speed * dt_s;
  const double dtheta = curvature * ds;
  if (std::abs(dtheta) < 1e-12) {
    n.x += ds * std::cos(s.heading);
    n.y += ds * std::sin(s.heading);
  } else {
    const double r = 1.0 / curvature;
    n.x += r * (std::sin(s.heading + dtheta) - std::sin(s.heading));
    n.y += r * (std::cos(s.heading) - std::cos(s.heading + dtheta));
  }
  n.heading = std::remainder(s.heading + dtheta, 2.0 * std::numbers::pi);

  // Lateral and longitudinal acceleration expressed as tilt angles.
  n.roll = std::atan(n.speed * n.speed * curvature / kGravity);
  n.pitch = std::atan((n.speed - s.speed) / dt_s / kGravity);
  return n;
}

std::string_view to_string(Safety s) {
  switch (s) {
    case Safety::ok:
      return "ok";
    case Safety::wall_collision:
      return "wall_collision";
    case Safety::rollover:
      return "rollover";
  }
  return "unknown";
}

Vec2 body_center(const VehicleState& s, const VehicleParams& p) {
  const Vec2 fwd{std::cos(s.heading), std::sin(s.heading)};
  return Vec2{s.x, s.y} + fwd * (0.5 * p.wheelbase_m);
}

Safety safety_check(const VehicleState& s, const Track& track, const VehicleParams& p) {
  if (std::abs(s.roll) > p.max_roll_deg * kDegToRad ||
      std::abs(s.pitch) > p.max_pitch_deg * kDegToRad) {
    return Safety::rollover;
  }
  const Vec2 fwd{std::cos(s.heading), std::sin(s.heading)};
  const Vec2 left{-fwd.y, fwd.x};
  const Vec2 c = body_center(s, p);
  const double hl = 0.5 * p.length_m;
  const double hw = 0.5 * p.width_m;
  const std::array<Vec2, 8> probes = {
      c + fwd * hl + left * hw, c + fwd * hl - left * hw, c - fwd * hl + left * hw,
      c - fwd * hl - left * hw, c + fwd * hl,             c - fwd * hl,
      c + left * hw,            c - left * hw,
  };
  const double wall = track.spec().half_width;
  for (const Vec2& q : probes) {
    if (track.distance_to_centerline(q) >= wall) {
      return Safety::wall_collision;
    }
  }
  return Safety::ok;
}

}  // namespace teacar::sim
