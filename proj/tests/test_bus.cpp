#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "teacar/bus.hpp"

using namespace teacar;

namespace {

MotionCmd cmd(double v, std::string source = "test") {
  MotionCmd m;
  m.source = std::move(source);
  m.value = v;
  return m;
}

}  // namespace

TEST(Bus, PublishReturnsSubscriberCount) {
  Bus bus;
  auto t = bus.advertise<MotionCmd>("motion/steering");
  bus.subscribe<MotionCmd>(t, [](const MotionCmd&) {});
  bus.subscribe<MotionCmd>(t, [](const MotionCmd&) {});
  EXPECT_EQ(bus.publish(t, cmd(0.1)), 2u);
}

TEST(Bus, NoSubscribersDropsMessage) {
  Bus bus;
  auto t = bus.advertise<MotionCmd>("motion/steering");
  EXPECT_EQ(bus.publish(t, cmd(0.1)), 0u);
  EXPECT_EQ(bus.step(1'000'000), 0u);
}

TEST(Bus, KindMismatch) {
  Bus bus;
  bus.advertise<MotionCmd>("motion/steering");
  EXPECT_THROW(bus.publish("motion/steering", Message{ImageMsg{}}), KindMismatchError);
  EXPECT_THROW(bus.advertise<ImageMsg>("motion/steering"), KindMismatchError);
  EXPECT_NO_THROW(bus.advertise<MotionCmd>("motion/steering"));
  EXPECT_THROW(bus.publish("nowhere", Message{cmd(0.0)}), NotFoundError);
}

TEST(Bus, HandlerInvokedPerMessage) {
  Bus bus;
  auto t = bus.advertise<MotionCmd>("a");
  int calls = 0;
  bus.subscribe<MotionCmd>(t, [&](const MotionCmd&) { ++calls; });
  for (int i = 0; i < 3; ++i) bus.publish(t, cmd(0.0));
  EXPECT_EQ(calls, 0);  // stepped mode delivers inside step()
  EXPECT_EQ(bus.step(1), 3u);
  EXPECT_EQ(calls, 3);
}

TEST(Bus, SubscriberOrderIsRegistrationOrder) {
  Bus bus;
  auto t = bus.advertise<MotionCmd>("a");
  std::string trace;
  bus.subscribe<MotionCmd>(t, [&](const MotionCmd& m) { trace += "A" + m.source; });
  bus.subscribe<MotionCmd>(t, [&](const MotionCmd& m) { trace += "B" + m.source; });
  bus.publish(t, cmd(0, "1"));
  bus.publish(t, cmd(0, "2"));
  bus.step(1);
  EXPECT_EQ(trace, "A1B1A2B2");
}

TEST(Bus, TopicsDrainInRegistrationOrder) {
  Bus bus;
  auto first = bus.advertise<MotionCmd>("first");
  auto second = bus.advertise<MotionCmd>("second");
  std::string trace;
  bus.subscribe<MotionCmd>(second, [&](const MotionCmd&) { trace += "s"; });
  bus.subscribe<MotionCmd>(first, [&](const MotionCmd&) {
    trace += "f";
  });
  bus.publish(second, cmd(0));
  bus.publish(first, cmd(0));
  bus.step(1);
  EXPECT_EQ(trace, "fs");
}

TEST(Bus, MessagesPublishedWhileDrainingArriveSameStep) {
  Bus bus;
  auto a = bus.advertise<MotionCmd>("a");
  auto b = bus.advertise<MotionCmd>("b");
  int got_b = 0;
  bus.subscribe<MotionCmd>(a, [&](const MotionCmd& m) { bus.publish(b, m); });
  bus.subscribe<MotionCmd>(b, [&](const MotionCmd&) { ++got_b; });
  bus.publish(a, cmd(0));
  EXPECT_EQ(bus.step(1), 2u);
  EXPECT_EQ(got_b, 1);
}

TEST(Bus, Unsubscribe) {
  Bus bus;
  auto t = bus.advertise<MotionCmd>("a");
  int calls = 0;
  const auto id = bus.subscribe<MotionCmd>(t, [&](const MotionCmd&) { ++calls; });
  bus.unsubscribe(id);
  EXPECT_EQ(bus.publish(t, cmd(0)), 0u);
  bus.step(1);
  EXPECT_EQ(calls, 0);
}

TEST(Bus, PeriodicFirstFiresOnePeriodIn) {
  Bus bus;
  int frames = 0;
  bus.add_periodic(33'333'333, [&] { ++frames; });
  bus.step(100'000'000);
  EXPECT_EQ(frames, 3);
  EXPECT_EQ(bus.now().nanos, 100'000'000);
}

TEST(Bus, PeriodicsOrderedByDueTimeThenRegistration) {
  Bus bus;
  std::string trace;
  bus.add_periodic(20, [&] { trace += "b"; });
  bus.add_periodic(10, [&] { trace += "a"; });
  bus.step(40);
  // due: a@10, b@20, a@20, a@30, b@40, a@40
  EXPECT_EQ(trace, "abaaba");
}

TEST(Bus, EmptyStepProcessesNothing) {
  Bus bus;
  EXPECT_EQ(bus.step(1'000'000), 0u);
}

TEST(Bus, ModeErrors) {
  Bus stepped;
  EXPECT_THROW(stepped.spin(std::stop_token{}, std::chrono::milliseconds(1)), ModeError);
  Bus live(BusMode::live);
  EXPECT_THROW(live.step(1), ModeError);
  EXPECT_THROW(stepped.step(0), ValidationError);
  EXPECT_THROW(stepped.add_periodic(0, [] {}), ValidationError);
}

TEST(Bus, InvalidMessagesRejected) {
  Bus bus;
  auto t = bus.advertise<MotionCmd>("a");
  EXPECT_THROW(bus.publish(t, cmd(std::numeric_limits<double>::quiet_NaN())), ValidationError);
  EXPECT_THROW(bus.publish(t, cmd(0.0, "")), ValidationError);
  auto p = bus.advertise<PwmChannelCmd>("pwm");
  PwmChannelCmd bad;
  bad.channel = 16;
  EXPECT_THROW(bus.publish(p, bad), ValidationError);
  EXPECT_THROW(ImageMsg(Header{}, std::vector<std::uint8_t>(10)), ValidationError);
}

TEST(Bus, MessageLogIsDeterministic) {
  auto run = [] {
    Bus bus;
    std::string log;
    bus.set_log_sink([&](std::string_view line) {
      log += line;
      log += '\n';
    });
    auto t = bus.advertise<MotionCmd>("a");
    auto img = bus.advertise<ImageMsg>("img");
    bus.subscribe<MotionCmd>(t, [](const MotionCmd&) {});
    bus.subscribe<ImageMsg>(img, [](const ImageMsg&) {});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    bus.add_periodic(5'000'000, [&] {
      MotionCmd m;
      m.header.stamp = bus.now();
      m.source = "p";
      m.value = u(rng);
      bus.publish(t, m);
      std::vector<std::uint8_t> px(ImageMsg::kBytes, static_cast<std::uint8_t>(rng()));
      bus.publish(img, ImageMsg(Header{bus.now()}, std::move(px)));
    });
    for (int i = 0; i < 20; ++i) bus.step(3'000'000);
    return log;
  };
  const std::string a = run();
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, run());
  EXPECT_NE(a.find("\"sha256\""), std::string::npos);
}

TEST(Bus, LiveModeDeliversSynchronouslyAcrossThreads) {
  Bus bus(BusMode::live);
  auto t = bus.advertise<MotionCmd>("a");
  std::atomic<int> calls{0};
  bus.subscribe<MotionCmd>(t, [&](const MotionCmd&) { ++calls; });
  std::vector<std::jthread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&] {
      for (int j = 0; j < 250; ++j) bus.publish(t, cmd(0.0));
    });
  }
  threads.clear();
  EXPECT_EQ(calls.load(), 1000);
}

TEST(Bus, LiveSpinFiresPeriodics) {
  Bus bus(BusMode::live);
  std::atomic<int> fired{0};
  bus.add_periodic(10'000'000, [&] { ++fired; });
  std::stop_source stop;
  bus.spin(stop.get_token(), std::chrono::milliseconds(105));
  EXPECT_GE(fired.load(), 5);
  EXPECT_LE(fired.load(), 11);
}
