#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "teacar/error.hpp"
#include "teacar/pipeline.hpp"
#include "teacar/sim/camera.hpp"
#include "teacar/sim/pursuit.hpp"
#include "teacar/sim/track.hpp"
#include "teacar/sim/vehicle.hpp"
#include "teacar/sim/world.hpp"

using namespace teacar;
using namespace teacar::sim;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const Track& reference() {
  static const Track track(make_reference_track());
  return track;
}

// Mean column of line-colored pixels in one image row; -1 when none.
double line_centroid(const ImageMsg& img, int row, Rgb line) {
  double sum = 0.0;
  int count = 0;
  for (int c = 0; c < ImageMsg::kWidth; ++c) {
    if (img.at(row, c, 0) == line.r && img.at(row, c, 1) == line.g && img.at(row, c, 2) == line.b) {
      sum += c;
      ++count;
    }
  }
  return count ? sum / count : -1.0;
}

VehicleState on_first_straight(double lateral = 0.0) {
  VehicleState s;
  s.x = 1.0;
  s.y = lateral;
  return s;
}

TrackSpec square_track() {
  TrackSpec t;
  t.centerline = {{0, 0}, {4, 0}, {4, 4}, {0, 4}, {0, 0}};
  return t;
}

}  // namespace

TEST(Track, ReferenceLoop) {
  const Track& t = reference();
  EXPECT_NO_THROW(t.spec().validate());
  EXPECT_NEAR(t.length(), 15.598, 0.01);
  EXPECT_EQ(t.spec().centerline.front(), t.spec().centerline.back());
  const auto p = t.project({1.0, 0.1});
  EXPECT_NEAR(p.s, 1.0, 1e-9);
  EXPECT_NEAR(p.lateral, 0.1, 1e-9);
  EXPECT_NEAR(t.project({1.0, -0.1}).lateral, -0.1, 1e-9);
  EXPECT_NEAR(t.field_distance({1.0, 0.2}), 0.2, 0.01);
  EXPECT_NEAR(t.tangent_at(0.5).x, 1.0, 1e-9);
  EXPECT_NEAR(t.wrap(t.length() + 0.25), 0.25, 1e-9);
}

TEST(Track, Validation) {
  TrackSpec open = square_track();
  open.centerline.pop_back();
  EXPECT_THROW(open.validate(), ConfigError);
  TrackSpec cw = square_track();
  std::reverse(cw.centerline.begin(), cw.centerline.end());
  EXPECT_THROW(cw.validate(), ConfigError);
  TrackSpec narrow = square_track();
  narrow.half_width = 0.1;
  EXPECT_THROW(narrow.validate(), ConfigError);
  TrackSpec tiny;
  tiny.centerline = {{0, 0}, {1, 0}, {0, 0}};
  EXPECT_THROW(tiny.validate(), ConfigError);
  EXPECT_NO_THROW(square_track().validate());
}

TEST(Track, JsonRoundTrip) {
  const TrackSpec spec = make_reference_track();
  const auto path = std::filesystem::temp_directory_path() / "teacar_track_test.json";
  spec.save(path);
  const TrackSpec back = TrackSpec::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.to_json(), spec.to_json());
  EXPECT_THROW(TrackSpec::load("/nonexistent/track.json"), ConfigError);
}

TEST(Vehicle, MaxSteerAngle) {
  const VehicleParams p;
  EXPECT_NEAR(max_steer_angle(p), std::atan(0.185 / 0.550), 1e-12);
  EXPECT_NEAR(max_steer_angle(p) / kDeg, 18.6, 0.05);
  VehicleParams short_wb;
  short_wb.wheelbase_m = 1e-6;
  EXPECT_LT(max_steer_angle(short_wb), 1e-5);
  VehicleParams degenerate;
  degenerate.min_turn_radius_m = degenerate.wheelbase_m;
  EXPECT_THROW(max_steer_angle(degenerate), ConfigError);
}

TEST(Vehicle, StraightLine) {
  const VehicleParams p;
  VehicleState s;
  s.heading = 0.3;
  for (int i = 0; i < 300; ++i) s = bicycle_step(s, 0.0, 0.5, p, 1.0 / 120);
  EXPECT_DOUBLE_EQ(s.heading, 0.3);
  EXPECT_NEAR(std::atan2(s.y, s.x), 0.3, 1e-12);
  EXPECT_GT(s.speed, 0.9);
  EXPECT_LT(s.speed, 1.0);
}

TEST(Vehicle, StationaryWithoutThrottle) {
  const VehicleParams p;
  VehicleState s;
  for (int i = 0; i < 100; ++i) s = bicycle_step(s, 1.0, 0.0, p, 0.01);
  EXPECT_EQ(s.x, 0.0);
  EXPECT_EQ(s.y, 0.0);
  EXPECT_EQ(s.heading, 0.0);
  EXPECT_EQ(s.speed, 0.0);
}

TEST(Vehicle, InputValidation) {
  const VehicleParams p;
  EXPECT_THROW(bicycle_step({}, 1.1, 0.0, p, 0.01), ValidationError);
  EXPECT_THROW(bicycle_step({}, 0.0, 0.0, p, 0.0), ValidationError);
  EXPECT_THROW(bicycle_step({}, 0.0, 0.0, p, 0.2), ValidationError);
}

TEST(Vehicle, FullLockTurningCircle) {
  const VehicleParams p;
  VehicleState s;
  const double dt = 1.0 / 120;
  for (int i = 0; i < 240; ++i) s = bicycle_step(s, 1.0, 0.4, p, dt);  // settle speed
  // Record one full revolution and fit the center as the centroid.
  std::vector<Vec2> pts;
  double turned = 0.0;
  while (turned < 2 * std::numbers::pi) {
    const double h = s.heading;
    s = bicycle_step(s, 1.0, 0.4, p, dt);
    turned += std::remainder(s.heading - h, 2 * std::numbers::pi);
    pts.push_back({s.x, s.y});
  }
  Vec2 c;
  for (const auto& q : pts) c = c + q * (1.0 / pts.size());
  double mean_r = 0.0, max_dev = 0.0;
  for (const auto& q : pts) mean_r += (q - c).norm() / pts.size();
  for (const auto& q : pts) max_dev = std::max(max_dev, std::abs((q - c).norm() - mean_r));
  EXPECT_NEAR(mean_r, 0.550, 0.0055);
  EXPECT_LT(max_dev, 0.0055);
}

TEST(Vehicle, SafetyCheck) {
  const VehicleParams p;
  const Track& t = reference();
  EXPECT_EQ(safety_check(on_first_straight(), t, p), Safety::ok);
  EXPECT_EQ(safety_check(on_first_straight(0.2), t, p), Safety::ok);
  EXPECT_EQ(safety_check(on_first_straight(0.35 + 0.1175), t, p), Safety::wall_collision);
  EXPECT_EQ(safety_check(on_first_straight(-0.35 - 0.1175), t, p), Safety::wall_collision);
  VehicleState rolled = on_first_straight();
  rolled.roll = 39.0 * kDeg;
  EXPECT_EQ(safety_check(rolled, t, p), Safety::rollover);
  rolled.roll = 37.0 * kDeg;
  EXPECT_EQ(safety_check(rolled, t, p), Safety::ok);
  VehicleState pitched = on_first_straight();
  pitched.pitch = -50.0 * kDeg;
  EXPECT_EQ(safety_check(pitched, t, p), Safety::rollover);
}

TEST(Render, CenteredLineAtImageCenter) {
  const CameraModel cam;
  const Track& t = reference();
  const ImageMsg img = render(cam, t, on_first_straight());
  EXPECT_EQ(img.data().size(), 96'768u);
  const double c = line_centroid(img, ImageMsg::kHeight - 1, t.spec().line_color);
  EXPECT_NEAR(c, 112.0, 1.0);
}

TEST(Render, OffsetLeftShiftsLineRight) {
  const CameraModel cam;
  const Track& t = reference();
  const int row = ImageMsg::kHeight - 1;
  const double centered = line_centroid(render(cam, t, on_first_straight()), row, t.spec().line_color);
  const double left = line_centroid(render(cam, t, on_first_straight(0.08)), row, t.spec().line_color);
  const double right = line_centroid(render(cam, t, on_first_straight(-0.08)), row, t.spec().line_color);
  EXPECT_GT(left, centered + 5);
  EXPECT_LT(right, centered - 5);
}

TEST(Render, DeterministicAndNoiseSparesLine) {
  CameraModel cam;
  const Track& t = reference();
  const VehicleState s = on_first_straight(0.03);
  EXPECT_EQ(render(cam, t, s), render(cam, t, s));
  const ImageMsg clean = render(cam, t, s);
  cam.noise_stddev = 8.0;
  cam.noise_seed = 3;
  const ImageMsg noisy = render(cam, t, s, {}, 7);
  EXPECT_EQ(noisy, render(cam, t, s, {}, 7));
  EXPECT_NE(noisy, render(cam, t, s, {}, 8));
  std::size_t line_px = 0, changed = 0;
  const Rgb line = t.spec().line_color;
  for (int r = 0; r < ImageMsg::kHeight; ++r) {
    for (int c = 0; c < ImageMsg::kWidth; ++c) {
      const bool is_line =
          clean.at(r, c, 0) == line.r && clean.at(r, c, 1) == line.g && clean.at(r, c, 2) == line.b;
      if (is_line) {
        ++line_px;
        for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(noisy.at(r, c, ch), clean.at(r, c, ch));
      } else if (noisy.at(r, c, 0) != clean.at(r, c, 0)) {
        ++changed;
      }
    }
  }
  EXPECT_GT(line_px, 100u);
  EXPECT_GT(changed, 1000u);
}

TEST(Render, SeesWallsAndSky) {
  const CameraModel cam;
  const Track& t = reference();
  const ImageMsg img = render(cam, t, on_first_straight());
  const Rgb wall = t.spec().wall_color, sky = t.spec().sky_color;
  std::size_t walls = 0, skies = 0;
  for (int r = 0; r < ImageMsg::kHeight; ++r) {
    for (int c = 0; c < ImageMsg::kWidth; ++c) {
      const Rgb px{img.at(r, c, 0), img.at(r, c, 1), img.at(r, c, 2)};
      walls += px == wall;
      skies += px == sky;
    }
  }
  EXPECT_GT(walls, 500u);
  EXPECT_GT(skies, 500u);
}

TEST(Camera, Validation) {
  CameraModel cam;
  cam.hfov_deg = 180.0;
  EXPECT_THROW(cam.validate(), ConfigError);
  EXPECT_NEAR(CameraModel{}.focal_px(), 112.0 / std::tan(80.0 * kDeg), 1e-9);
  const auto j = CameraModel{}.to_json();
  EXPECT_EQ(CameraModel::from_json(j).to_json(), j);
}

TEST(PurePursuit, Formula) {
  const double L = 0.185, dmax = std::atan(0.185 / 0.55);
  EXPECT_DOUBLE_EQ(pure_pursuit_steer(0.0, 0.5, L, dmax), 0.0);
  // atan(2 * 0.185 / 0.5) = atan(0.74) exceeds the steering limit.
  EXPECT_NEAR(std::atan(2 * L * 1.0 / 0.5), 0.637, 1e-3);
  EXPECT_DOUBLE_EQ(pure_pursuit_steer(std::numbers::pi / 2, 0.5, L, dmax), 1.0);
  EXPECT_DOUBLE_EQ(pure_pursuit_steer(-std::numbers::pi / 2, 0.5, L, dmax), -1.0);
  EXPECT_NEAR(pure_pursuit_steer(0.05, 0.5, L, dmax), std::atan(2 * L * std::sin(0.05) / 0.5) / dmax,
              1e-12);
}

TEST(PurePursuit, OnTrack) {
  const VehicleParams p;
  const Track& t = reference();
  EXPECT_NEAR(pure_pursuit(on_first_straight(), t, 0.45, p), 0.0, 1e-12);
  const double left = pure_pursuit(on_first_straight(0.1), t, 0.45, p);
  const double right = pure_pursuit(on_first_straight(-0.1), t, 0.45, p);
  EXPECT_LT(left, 0.0);  // right of travel brings it back
  EXPECT_NEAR(left, -right, 1e-12);
  EXPECT_THROW(pure_pursuit(on_first_straight(), t, 0.0, p), ValidationError);
  EXPECT_THROW(pure_pursuit(on_first_straight(), TrackSpec{}, 0.45, p), ConfigError);
}

TEST(World, IdleStackStaysPutAndFramesAt30Hz) {
  SimStack stack;
  int frames = 0;
  stack.bus().subscribe<ImageMsg>(stack.topics().camera, [&](const ImageMsg&) { ++frames; });
  const VehicleState before = stack.world().state();
  for (int i = 0; i < 120; ++i) stack.step();
  EXPECT_EQ(frames, 30);
  EXPECT_NEAR(stack.sim_seconds(), 120 * 8'333'333e-9, 1e-9);
  EXPECT_EQ(stack.world().state().x, before.x);
  EXPECT_EQ(stack.world().state().y, before.y);
  EXPECT_EQ(stack.world().violations(), 0u);
  EXPECT_LT(stack.world().battery().voltage_v, 12.6);
}

TEST(World, CommandsReachTheVehicleThroughThePwmChip) {
  SimStack stack;
  controllers::CruiseController cruise(stack.bus(), stack.topics().steering,
                                       stack.topics().throttle, 0.5);
  for (int i = 0; i < 60; ++i) stack.step();
  // Commands pass through the 12-bit counter, so they come back within a count.
  EXPECT_NEAR(stack.world().applied_throttle(), 0.5, 0.02);
  EXPECT_GT(stack.world().state().speed, 0.3);
  EXPECT_GT(stack.world().progress_m(), 0.05);
}

TEST(World, RailTripStopsTheVehicle) {
  SimStack stack;
  controllers::CruiseController cruise(stack.bus(), stack.topics().steering,
                                       stack.topics().throttle, 0.5);
  for (int i = 0; i < 60; ++i) stack.step();
  stack.power().protection_check(8.0);
  for (int i = 0; i < 240; ++i) stack.step();
  EXPECT_EQ(stack.world().applied_throttle(), 0.0);
  EXPECT_LT(stack.world().state().speed, 0.01);
}

TEST(World, OracleCompletesALap) {
  DriveOptions o;
  o.laps = 1;
  const DriveResult r = run_oracle(StackOptions{}, o);
  EXPECT_EQ(r.laps, 1);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_LT(r.max_abs_lateral_m, 0.1);
}
