#pragma once

#include <string_view>

#include "teacar/sim/track.hpp"

namespace teacar::sim {

struct VehicleParams {
  double wheelbase_m = 0.185;
  double mass_kg = 1.25;
  double length_m = 0.285;
  double width_m = 0.235;
  double height_m = 0.225;
  double min_turn_radius_m = 0.550;
  double max_roll_deg = 38.0;
  double max_pitch_deg = 49.0;
  double max_speed_mps = 2.0;
  double speed_time_constant_s = 0.3;

  /// ConfigError unless every field is positive.
  void validate() const;
};

/// Pose of the rear axle center plus kinematic roll/pitch proxies.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double steering_angle = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
};

/// atan(wheelbase / min_turn_radius). ConfigError unless wheelbase < radius.
double max_steer_angle(const VehicleParams& p);

/// Kinematic bicycle step. Speed follows throttle * max_speed through a
/// first-order lag; the pose integrates along the exact arc for the step.
/// ValidationError for dt outside (0, 0.1] or inputs outside [-1, 1].
VehicleState bicycle_step(const VehicleState& s, double steering_norm, double throttle_norm,
                          const VehicleParams& p, double dt_s);

enum class Safety { ok, wall_collision, rollover };

std::string_view to_string(Safety s);

/// Wall collision when any footprint corner or edge midpoint reaches a wall;
/// rollover when |roll| or |pitch| exceeds its limit.
Safety safety_check(const VehicleState& s, const Track& track, const VehicleParams& p);

/// Position of the footprint center (the wheelbase sits mid-body).
Vec2 body_center(const VehicleState& s, const VehicleParams& p);

}  // namespace teacar::sim
