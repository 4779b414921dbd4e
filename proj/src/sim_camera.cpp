#include "teacar/sim/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "teacar/error.hpp"

namespace teacar::sim {

namespace {
constexpr double kMaxRange = 30.0;
constexpr double kMinMarch = 0.002;
constexpr double kHit = 1e-4;
}  // namespace

void CameraModel::validate() const {
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) {
    throw ConfigError("camera: horizontal FOV must lie in (0, 180) degrees");
  }
  if (!(mount_height_m > 0.0) || !std::isfinite(forward_offset_m) || !std::isfinite(pitch_rad)) {
    throw ConfigError("camera: mount height must be positive and the pose finite");
  }
  if (!(noise_stddev >= 0.0)) {
    throw ConfigError("camera: noise stddev must be >= 0");
  }
}

double CameraModel::focal_px() const {
  return 0.5 * ImageMsg::kWidth / std::tan(0.5 * hfov_deg * std::numbers::pi / 180.0);
}

CameraModel CameraModel::from_json(const nlohmann::json& j) {
  CameraModel c;
  try {
    c.mount_height_m = j.value("mount_height_m", c.mount_height_m);
    c.forward_offset_m = j.value("forward_offset_m", c.forward_offset_m);
    c.pitch_rad = j.value("pitch_rad", c.pitch_rad);
    c.hfov_deg = j.value("hfov_deg", c.hfov_deg);
    c.noise_stddev = j.value("noise_stddev", c.noise_stddev);
    c.noise_seed = j.value("noise_seed", c.noise_seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("camera: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json CameraModel::to_json() const {
  return {{"mount_height_m", mount_height_m}, {"forward_offset_m", forward_offset_m},
          {"pitch_rad", pitch_rad},           {"hfov_deg", hfov_deg},
          {"noise_stddev", noise_stddev},     {"noise_seed", noise_seed},
          {"width", ImageMsg::kWidth},        {"height", ImageMsg::kHeight}};
}

ImageMsg render(const CameraModel& cam, const Track& track, const VehicleState& s,
                Timestamp stamp, std::uint64_t frame_index) {
  cam.validate();
  const TrackSpec& spec = track.spec();
  const double f = cam.focal_px();
  const double cx = 0.5 * ImageMsg::kWidth;
  const double cy = 0.5 * ImageMsg::kHeight;
  const double h = cam.mount_height_m;
  const double wall_h = spec.wall_height;
  const double half_line = 0.5 * spec.line_width;
  const double lane = spec.half_width;

  const Vec2 fwd{std::cos(s.heading), std::sin(s.heading)};
  const Vec2 right{fwd.y, -fwd.x};
  const Vec2 eye = Vec2{s.x, s.y} + fwd * cam.forward_offset_m;
  const double cp = std::cos(cam.pitch_rad);
  const double sp = std::sin(cam.pitch_rad);

  // Distance along a horizontal bearing until the lane edge, capped at `limit`.
  auto wall_distance = [&](Vec2 dir, double limit) {
    double d = 0.0;
    while (d < limit) {
      const double margin = lane - track.field_distance(eye + dir * d);
      if (margin <= kHit) return d;
      d += std::max(margin, kMinMarch);
    }
    return kMaxRange + 1.0;
  };

  std::vector<std::uint8_t> px(ImageMsg::kBytes);
  std::mt19937_64 rng(cam.noise_seed ^ (frame_index * 0x9E3779B97F4A7C15ULL));
  std::normal_distribution<double> noise(0.0, cam.noise_stddev > 0.0 ? cam.noise_stddev : 1.0);

  for (int row = 0; row < ImageMsg::kHeight; ++row) {
    const double yn = (row + 0.5 - cy) / f;  // image down
    // Ray = forward_c + xn * right - yn * up_c, split into horizontal/vertical parts.
    const double along = cp + yn * sp;  // component along vehicle forward
    const double vz = sp - yn * cp;     // vertical component
    for (int col = 0; col < ImageMsg::kWidth; ++col) {
      const double xn = (col + 0.5 - cx) / f;
      const Vec2 horiz = fwd * along + right * xn;
      const double hn = horiz.norm();
      const Vec2 dir = horiz * (1.0 / hn);

      Rgb c = spec.sky_color;
      bool is_line = false;
      const double floor_d = vz < 0.0 ? h * hn / -vz : kMaxRange + 1.0;
      const double wall_d = wall_distance(dir, std::min(floor_d, kMaxRange));
      if (floor_d <= kMaxRange && floor_d < wall_d) {
        if (track.field_distance(eye + dir * floor_d) <= half_line) {
          c = spec.line_color;
          is_line = true;
        } else {
          c = spec.floor_color;
        }
      } else if (wall_d <= kMaxRange) {
        const double z = h + vz * wall_d / hn;
        if (z <= wall_h) c = spec.wall_color;
      }

      std::uint8_t* out = &px[(static_cast<std::size_t>(row) * ImageMsg::kWidth + col) * 3];
      if (cam.noise_stddev > 0.0 && !is_line) {
        const std::uint8_t base[3] = {c.r, c.g, c.b};
        for (int k = 0; k < 3; ++k) {
          const double v = std::round(base[k] + noise(rng));
          out[k] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
      } else {
        out[0] = c.r;
        out[1] = c.g;
        out[2] = c.b;
      }
    }
  }
  return ImageMsg(Header{stamp}, std::move(px));
}

}  // namespace teacar::sim
