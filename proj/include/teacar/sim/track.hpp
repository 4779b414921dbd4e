#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace teacar::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Walled track with a painted guide line along its centerline. The
/// centerline is a closed counterclockwise polyline (first point repeated
/// at the end); walls stand at +-half_width from it.
struct TrackSpec {
  std::vector<Vec2> centerline;
  double half_width = 0.35;
  double wall_height = 0.20;
  double line_width = 0.05;
  Rgb line_color{255, 140, 0};
  Rgb floor_color{70, 70, 78};
  Rgb wall_color{225, 225, 225};
  Rgb sky_color{30, 30, 45};
  std::string direction = "ccw";

  /// ConfigError unless closed, counterclockwise, >= 3 distinct points and
  /// half_width wider than half the vehicle.
  void validate(double vehicle_half_width = 0.1175) const;

  static TrackSpec from_json(const nlohmann::json& j);
  static TrackSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
};

/// Closed loop of straights and constant-radius arcs: a rounded rectangle
/// with an S-bend on the far straight, 1.0 m minimum radius, sampled every 2.5 cm.
TrackSpec make_reference_track();

struct Projection {
  double s = 0.0;        // arc length of the closest point
  double lateral = 0.0;  // signed offset, left of travel direction positive
  double distance = 0.0;
  Vec2 point;
};

/// Arc-length parametrized view of a TrackSpec plus a distance field for
/// the renderer.
class Track {
 public:
  explicit Track(TrackSpec spec);

  const TrackSpec& spec() const { return spec_; }
  double length() const { return length_; }
  const std::vector<Vec2>& points() const { return points_; }

  Projection project(Vec2 p) const;
  double distance_to_centerline(Vec2 p) const { return project(p).distance; }
  Vec2 point_at(double s) const;
  /// Unit tangent at arc length s.
  Vec2 tangent_at(double s) const;
  double wrap(double s) const;

  /// Unsigned distance to the centerline from a 1 cm grid; values beyond the
  /// band around the track saturate at band_limit().
  double field_distance(Vec2 p) const;
  double band_limit() const { return band_; }

 private:
  void build_field();

  TrackSpec spec_;
  std::vector<Vec2> points_;  // closed loop without the repeated end point
  std::vector<double> cumulative_;
  double length_ = 0.0;

  double cell_ = 0.01;
  double band_ = 0.0;
  Vec2 origin_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<float> field_;
};

}  // namespace teacar::sim
