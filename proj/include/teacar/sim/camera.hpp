#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "teacar/messages.hpp"
#include "teacar/sim/track.hpp"
#include "teacar/sim/vehicle.hpp"

namespace teacar::sim {

/// Forward-looking pinhole camera rigidly mounted on the vehicle.
struct CameraModel {
  double mount_height_m = 0.14;
  double forward_offset_m = 0.20;  // ahead of the rear axle
  double pitch_rad = -0.20;        // negative looks down
  double hfov_deg = 160.0;
  double noise_stddev = 0.0;       // Gaussian pixel noise, 0 disables
  std::uint64_t noise_seed = 0;

  /// ConfigError for FOV outside (0, 180), non-positive height or negative noise.
  void validate() const;
  /// Focal length in pixels for the fixed 224-pixel width.
  double focal_px() const;

  static CameraModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Flat floor with the painted line, walls at the lane edges, sky above.
/// Line pixels carry line_color exactly; noise never touches them.
/// `frame_index` varies the noise pattern between frames.
ImageMsg render(const CameraModel& cam, const Track& track, const VehicleState& s,
                Timestamp stamp = {}, std::uint64_t frame_index = 0);

}  // namespace teacar::sim
