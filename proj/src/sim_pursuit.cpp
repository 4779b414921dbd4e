#include "teacar/sim/pursuit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "teacar/error.hpp"

namespace teacar::sim {

double pure_pursuit_steer(double alpha, double lookahead_m, double wheelbase_m,
                          double delta_max) {
  if (!(lookahead_m > 0.0)) {
    throw ValidationError("pure pursuit: lookahead must be positive");
  }
  const double delta = std::atan(2.0 * wheelbase_m * std::sin(alpha) / lookahead_m);
  return std::clamp(delta / delta_max, -1.0, 1.0);
}

double pure_pursuit(const VehicleState& s, const Track& track, double lookahead_m,
                    const VehicleParams& p) {
  if (!(lookahead_m > 0.0)) {
    throw ValidationError("pure pursuit: lookahead must be positive");
  }
  const Vec2 pos{s.x, s.y};
  const Vec2 target = track.point_at(track.project(pos).s + lookahead_m);
  const Vec2 d = target - pos;
  const double alpha = std::remainder(std::atan2(d.y, d.x) - s.heading, 2.0 * std::numbers::pi);
  return pure_pursuit_steer(alpha, lookahead_m, p.wheelbase_m, max_steer_angle(p));
}

double pure_pursuit(const VehicleState& s, const TrackSpec& spec, double lookahead_m,
                    const VehicleParams& p) {
  if (spec.centerline.empty()) {
    throw ConfigError("pure pursuit: empty centerline");
  }
  return pure_pursuit(s, Track(spec), lookahead_m, p);
}

}  // namespace teacar::sim
