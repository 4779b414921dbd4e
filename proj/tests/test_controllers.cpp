#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "teacar/controllers.hpp"
#include "teacar/error.hpp"

using namespace teacar;
using namespace teacar::controllers;

namespace {

struct Rig {
  Bus bus;
  Topic<MotionCmd> steering = bus.advertise<MotionCmd>("cmd/steering");
  Topic<MotionCmd> throttle = bus.advertise<MotionCmd>("cmd/throttle");
  std::vector<MotionCmd> steer_log;
  std::vector<MotionCmd> throttle_log;

  Rig() {
    bus.subscribe<MotionCmd>(steering, [this](const MotionCmd& m) { steer_log.push_back(m); });
    bus.subscribe<MotionCmd>(throttle, [this](const MotionCmd& m) { throttle_log.push_back(m); });
  }
};

class Probe : public Controller {
 public:
  using Controller::Controller;
};

JoyMsg joy(std::vector<double> axes, std::vector<int> buttons) {
  JoyMsg j;
  j.axes = std::move(axes);
  j.buttons = std::move(buttons);
  return j;
}

}  // namespace

TEST(Emit, SteeringOnly) {
  Rig rig;
  Probe p(rig.bus, "probe", rig.steering, rig.throttle);
  EXPECT_EQ(p.emit(0.5, std::nullopt), 1u);
  rig.bus.step(1);
  ASSERT_EQ(rig.steer_log.size(), 1u);
  EXPECT_TRUE(rig.throttle_log.empty());
  EXPECT_DOUBLE_EQ(rig.steer_log[0].value, 0.5);
  EXPECT_EQ(rig.steer_log[0].source, "probe");
}

TEST(Emit, ClampsAndRejectsNonFinite) {
  Rig rig;
  Probe p(rig.bus, "probe", rig.steering, rig.throttle);
  p.emit(1.7, -3.0);
  EXPECT_THROW(p.emit(std::numeric_limits<double>::quiet_NaN(), 0.1), ValidationError);
  EXPECT_THROW(p.emit(0.1, std::numeric_limits<double>::infinity()), ValidationError);
  rig.bus.step(1);
  ASSERT_EQ(rig.steer_log.size(), 1u);
  EXPECT_DOUBLE_EQ(rig.steer_log[0].value, 1.0);
  EXPECT_DOUBLE_EQ(rig.throttle_log[0].value, -1.0);
  EXPECT_THROW(Probe(rig.bus, "", rig.steering, rig.throttle), ValidationError);
}

TEST(Joystick, DeadzoneKnots) {
  EXPECT_DOUBLE_EQ(deadzoned(0.0, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(deadzoned(0.1, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(deadzoned(0.05, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(deadzoned(1.0, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(deadzoned(-1.0, 0.1), -1.0);
  EXPECT_NEAR(deadzoned(0.55, 0.1), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(deadzoned(-0.37, 0.0), -0.37);
}

TEST(Joystick, Mapping) {
  JoyMapping m;
  m.deadzone = 0.1;
  m.throttle_sign = -1;
  const auto c = joystick_map(joy({0.0, 1.0}, {1}), m);
  EXPECT_DOUBLE_EQ(c.steering, 0.0);
  EXPECT_DOUBLE_EQ(c.throttle, -1.0);
  EXPECT_TRUE(c.enabled);
  EXPECT_FALSE(joystick_map(joy({0.3, 0.3}, {0}), m).enabled);
  EXPECT_THROW(joystick_map(joy({0.3}, {1}), m), ValidationError);
  EXPECT_THROW(joystick_map(joy({0.3, 0.1}, {}), m), ValidationError);
  JoyMapping bad;
  bad.deadzone = 0.3;
  EXPECT_THROW(bad.validate(), ValidationError);
  EXPECT_EQ(JoyMapping::from_json(m.to_json()).to_json(), m.to_json());
}

TEST(Joystick, DeadManReleaseEmitsNothing) {
  Rig rig;
  auto joy_topic = rig.bus.advertise<JoyMsg>("joy");
  JoystickController ctl(rig.bus, joy_topic, rig.steering, rig.throttle, JoyMapping{});
  rig.bus.publish(joy_topic, joy({0.5, 0.6}, {1}));
  rig.bus.step(1);
  ASSERT_EQ(rig.steer_log.size(), 1u);
  EXPECT_EQ(rig.steer_log[0].source, "joystick");
  EXPECT_NEAR(rig.steer_log[0].value, (0.5 - 0.05) / 0.95, 1e-12);
  rig.bus.publish(joy_topic, joy({0.5, 0.6}, {0}));
  rig.bus.step(1);
  EXPECT_EQ(rig.steer_log.size(), 1u);
  EXPECT_EQ(rig.throttle_log.size(), 1u);
  EXPECT_EQ(ctl.messages_handled(), 2u);
}

TEST(Cruise, PeriodicThrottle) {
  Rig rig;
  CruiseController cruise(rig.bus, rig.steering, rig.throttle, 0.4, 10'000'000);
  rig.bus.step(35'000'000);
  ASSERT_EQ(rig.throttle_log.size(), 3u);
  EXPECT_DOUBLE_EQ(rig.throttle_log.back().value, 0.4);
  EXPECT_EQ(rig.throttle_log.back().source, "cruise");
  EXPECT_TRUE(rig.steer_log.empty());
}

TEST(NnControl, ZeroNetworkGivesZero) {
  const auto w = nn::Weights::zeros(nn::ModelArch::small());
  EXPECT_EQ(nn_control(ImageMsg{}, w), 0.0);
}

TEST(NnControl, DeterministicBitPattern) {
  const auto w = nn::init_weights<float>(nn::ModelArch::small(), 42);
  std::vector<std::uint8_t> px(ImageMsg::kBytes);
  std::mt19937 rng(5);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng());
  const ImageMsg img(Header{}, px);
  const double a = nn_control(img, w);
  const double b = nn_control(img, nn::init_weights<float>(nn::ModelArch::small(), 42));
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
  EXPECT_LE(std::abs(a), 1.0);
}

TEST(NnControl, ControllerPublishesPerFrame) {
  Rig rig;
  auto cam = rig.bus.advertise<ImageMsg>("camera/image");
  NnController nn(rig.bus, cam, rig.steering, rig.throttle,
                  nn::Weights::zeros(nn::ModelArch::small()));
  rig.bus.publish(cam, ImageMsg{});
  rig.bus.publish(cam, ImageMsg{});
  rig.bus.step(1);
  EXPECT_EQ(nn.frames_processed(), 2u);
  ASSERT_EQ(rig.steer_log.size(), 2u);
  EXPECT_EQ(rig.steer_log[0].source, "nn");
  EXPECT_GT(nn.last_latency_ms(), 0.0);
  auto wrong = nn::Weights::zeros(nn::ModelArch::small());
  wrong.layers[0].kernel.pop_back();
  EXPECT_THROW(NnController(rig.bus, cam, rig.steering, rig.throttle, wrong), ValidationError);
}
