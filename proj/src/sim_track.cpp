#include "teacar/sim/track.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numbers>

#include "teacar/error.hpp"

namespace teacar::sim {

namespace {

constexpr double kClosureTolerance = 1e-3;
constexpr double kSampleStep = 0.025;

Rgb rgb_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw FormatError("track: colors must be [r, g, b]");
  }
  auto channel = [](const nlohmann::json& v) {
    const int c = v.get<int>();
    if (c < 0 || c > 255) throw FormatError("track: color channel outside [0, 255]");
    return static_cast<std::uint8_t>(c);
  };
  return Rgb{channel(j[0]), channel(j[1]), channel(j[2])};
}

nlohmann::json rgb_to_json(Rgb c) { return nlohmann::json::array({c.r, c.g, c.b}); }

double signed_area(const std::vector<Vec2>& pts) {
  double a = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) a += pts[i].cross(pts[i + 1]);
  return 0.5 * a;
}

}  // namespace

void TrackSpec::validate(double vehicle_half_width) const {
  if (centerline.size() < 4) {
    throw ConfigError("track: centerline needs at least 3 distinct points plus the closing point");
  }
  if ((centerline.front() - centerline.back()).norm() > kClosureTolerance) {
    throw ConfigError("track: centerline is not closed (first point must equal last)");
  }
  if (direction != "ccw") {
    throw ConfigError("track: only counterclockwise ('ccw') tracks are supported");
  }
  if (signed_area(centerline) <= 0.0) {
    throw ConfigError("track: centerline does not run counterclockwise");
  }
  if (!(half_width > vehicle_half_width)) {
    throw ConfigError("track: half_width must exceed the vehicle half-width");
  }
  if (!(wall_height > 0.0) || !(line_width > 0.0) || line_width >= 2.0 * half_width) {
    throw ConfigError("track: wall_height and line_width must be positive, line inside the lane");
  }
}

TrackSpec TrackSpec::from_json(const nlohmann::json& j) {
  TrackSpec t;
  try {
    for (const auto& p : j.at("centerline")) {
      if (!p.is_array() || p.size() != 2) throw FormatError("track: points must be [x, y]");
      t.centerline.push_back(Vec2{p[0].get<double>(), p[1].get<double>()});
    }
    t.half_width = j.at("half_width").get<double>();
    t.wall_height = j.at("wall_height").get<double>();
    t.line_color = rgb_from_json(j.at("line_color"));
    t.direction = j.value("direction", t.direction);
    t.line_width = j.value("line_width", t.line_width);
    if (j.contains("floor_color")) t.floor_color = rgb_from_json(j["floor_color"]);
    if (j.contains("wall_color")) t.wall_color = rgb_from_json(j["wall_color"]);
    if (j.contains("sky_color")) t.sky_color = rgb_from_json(j["sky_color"]);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("track: ") + e.what());
  }
  t.validate();
  return t;
}

TrackSpec TrackSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open track file " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("track " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json TrackSpec::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : centerline) pts.push_back({p.x, p.y});
  return {{"centerline", pts},
          {"half_width", half_width},
          {"wall_height", wall_height},
          {"line_color", rgb_to_json(line_color)},
          {"direction", direction},
          {"line_width", line_width},
          {"floor_color", rgb_to_json(floor_color)},
          {"wall_color", rgb_to_json(wall_color)},
          {"sky_color", rgb_to_json(sky_color)}};
}

void TrackSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write track file " + path.string());
  }
  // One point per line keeps the file diffable.
  nlohmann::json rest = to_json();
  const nlohmann::json pts = rest["centerline"];
  rest.erase("centerline");
  out << "{\n  \"centerline\": [\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out << "    " << pts[i].dump() << (i + 1 < pts.size() ? ",\n" : "\n");
  }
  out << "  ]";
  for (const auto& [key, value] : rest.items()) {
    out << ",\n  " << nlohmann::json(key).dump() << ": " << value.dump();
  }
  out << "\n}\n";
}

TrackSpec make_reference_track() {
  struct Segment {
    double length;  // straight length, or radius for arcs
    double turn;    // signed turn angle in degrees (+ left), 0 for straights
  };
  // Rounded rectangle, S-bend on the top straight. Closes exactly at (0, 0).
  const double s_bend_rise = 2.0 * (1.0 - std::cos(std::numbers::pi / 6.0));
  const std::vector<Segment> segments = {
      {3.0, 0},  {1.0, 90},  {1.5, 0},   {1.0, 90}, {0.5, 0},
      {1.0, -30}, {1.0, 30}, {1.5, 0},   {1.0, 90}, {1.5 + s_bend_rise, 0},
      {1.0, 90},
  };
  TrackSpec t;
  Vec2 p{0.0, 0.0};
  double heading = 0.0;
  t.centerline.push_back(p);
  for (const auto& seg : segments) {
    if (seg.turn == 0.0) {
      const int n = std::max(1, static_cast<int>(std::ceil(seg.length / kSampleStep)));
      const Vec2 start = p;
      const Vec2 dir{std::cos(heading), std::sin(heading)};
      for (int i = 1; i <= n; ++i) {
        p = start + dir * (seg.length * i / n);
        t.centerline.push_back(p);
      }
      continue;
    }
    const double radius = seg.length;
    const double turn = seg.turn * std::numbers::pi / 180.0;
    const double side = turn > 0 ? 1.0 : -1.0;
    const Vec2 center = p + Vec2{-std::sin(heading), std::cos(heading)} * (side * radius);
    const double start_angle = heading - side * std::numbers::pi / 2.0;
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(turn) * radius / kSampleStep)));
    for (int i = 1; i <= n; ++i) {
      const double a = start_angle + turn * i / n;
      p = center + Vec2{std::cos(a), std::sin(a)} * radius;
      t.centerline.push_back(p);
    }
    heading += turn;
  }
  t.centerline.back() = t.centerline.front();
  return t;
}

// ---------------------------------------------------------------------------
// Track

Track::Track(TrackSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  points_.assign(spec_.centerline.begin(), spec_.centerline.end() - 1);
  // Drop zero-length segments.
  std::vector<Vec2> clean;
  for (const auto& p : points_) {
    if (clean.empty() || (p - clean.back()).norm() > 1e-9) clean.push_back(p);
  }
  if (clean.size() > 1 && (clean.front() - clean.back()).norm() <= 1e-9) clean.pop_back();
  points_ = std::move(clean);
  cumulative_.resize(points_.size() + 1);
  cumulative_[0] = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cumulative_[i + 1] = cumulative_[i] + (points_[(i + 1) % points_.size()] - points_[i]).norm();
  }
  length_ = cumulative_.back();
  build_field();
}

double Track::wrap(double s) const {
  double r = std::fmod(s, length_);
  if (r < 0.0) r += length_;
  return r;
}

Projection Track::project(Vec2 p) const {
  Projection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  const std::size_t n = points_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = points_[i];
    const Vec2 d = points_[(i + 1) % n] - a;
    const double len2 = d.dot(d);
    const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
    const Vec2 q = a + d * t;
    const double d2 = (p - q).dot(p - q);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.s = cumulative_[i] + t * std::sqrt(len2);
      best.point = q;
      best.distance = std::sqrt(d2);
      best.lateral = d.cross(p - a) >= 0.0 ? best.distance : -best.distance;
    }
  }
  best.s = wrap(best.s);
  return best;
}

Vec2 Track::point_at(double s) const {
  s = wrap(s);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = std::min<std::size_t>(
      static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - cumulative_.begin() - 1)),
      points_.size() - 1);
  const Vec2 a = points_[i];
  const Vec2 b = points_[(i + 1) % points_.size()];
  const double seg = cumulative_[i + 1] - cumulative_[i];
  return a + (b - a) * ((s - cumulative_[i]) / seg);
}

Vec2 Track::tangent_at(double s) const {
  s = wrap(s);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = std::min<std::size_t>(
      static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - cumulative_.begin() - 1)),
      points_.size() - 1);
  const Vec2 d = points_[(i + 1) % points_.size()] - points_[i];
  return d * (1.0 / d.norm());
}

void Track::build_field() {
  band_ = spec_.half_width + 0.15;
  Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Vec2 hi{-lo.x, -lo.y};
  for (const auto& p : points_) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  origin_ = lo - Vec2{band_ + cell_, band_ + cell_};
  nx_ = static_cast<int>(std::ceil((hi.x - lo.x + 2 * (band_ + cell_)) / cell_)) + 1;
  ny_ = static_cast<int>(std::ceil((hi.y - lo.y + 2 * (band_ + cell_)) / cell_)) + 1;
  field_.assign(static_cast<std::size_t>(nx_) * ny_, static_cast<float>(band_));

  const std::size_t n = points_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = points_[i];
    const Vec2 b = points_[(i + 1) % n];
    const Vec2 d = b - a;
    const double len2 = d.dot(d);
    const int ix0 = std::max(0, static_cast<int>((std::min(a.x, b.x) - band_ - origin_.x) / cell_));
    const int ix1 = std::min(nx_ - 1, static_cast<int>((std::max(a.x, b.x) + band_ - origin_.x) / cell_) + 1);
    const int iy0 = std::max(0, static_cast<int>((std::min(a.y, b.y) - band_ - origin_.y) / cell_));
    const int iy1 = std::min(ny_ - 1, static_cast<int>((std::max(a.y, b.y) + band_ - origin_.y) / cell_) + 1);
    for (int iy = iy0; iy <= iy1; ++iy) {
      for (int ix = ix0; ix <= ix1; ++ix) {
        const Vec2 p = origin_ + Vec2{ix * cell_, iy * cell_};
        const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
        const double dist = (p - (a + d * t)).norm();
        float& cell = field_[static_cast<std::size_t>(iy) * nx_ + ix];
        cell = std::min(cell, static_cast<float>(std::min(dist, band_)));
      }
    }
  }
}

double Track::field_distance(Vec2 p) const {
  const double fx = (p.x - origin_.x) / cell_;
  const double fy = (p.y - origin_.y) / cell_;
  if (!(fx >= 0.0 && fy >= 0.0 && fx < nx_ - 1 && fy < ny_ - 1)) {
    return band_;
  }
  const int ix = static_cast<int>(fx);
  const int iy = static_cast<int>(fy);
  const double tx = fx - ix;
  const double ty = fy - iy;
  const float* row0 = &field_[static_cast<std::size_t>(iy) * nx_ + ix];
  const float* row1 = row0 + nx_;
  const double top = row0[0] + (row0[1] - row0[0]) * tx;
  const double bottom = row1[0] + (row1[1] - row1[0]) * tx;
  return top + (bottom - top) * ty;
}

}  // namespace teacar::sim
