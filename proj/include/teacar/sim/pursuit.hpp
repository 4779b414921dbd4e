#pragma once

#include "teacar/sim/track.hpp"
#include "teacar/sim/vehicle.hpp"

namespace teacar::sim {

/// clamp(atan(2 L sin(alpha) / lookahead) / delta_max, -1, 1).
double pure_pursuit_steer(double alpha, double lookahead_m, double wheelbase_m,
                          double delta_max);

/// Steers the rear axle toward the centerline point `lookahead_m` further
/// along the track. ValidationError for lookahead <= 0.
double pure_pursuit(const VehicleState& s, const Track& track, double lookahead_m,
                    const VehicleParams& p);

/// Variant over a raw spec; ConfigError for an empty centerline.
double pure_pursuit(const VehicleState& s, const TrackSpec& spec, double lookahead_m,
                    const VehicleParams& p);

}  // namespace teacar::sim
