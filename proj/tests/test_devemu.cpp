#include <gtest/gtest.h>

#include <cmath>

#include "teacar/devemu.hpp"
#include "teacar/error.hpp"

using namespace teacar;
using namespace teacar::devemu;

namespace {

std::shared_ptr<Pca9685> attach_chip(I2cBus& bus) {
  auto chip = std::make_shared<Pca9685>();
  bus.attach(pca9685::kDefaultAddress, chip);
  return chip;
}

}  // namespace

TEST(I2c, EmptyAddressNacks) {
  I2cBus bus;
  EXPECT_EQ(bus.write(0x55, 0x00, {0x01}), I2cResult::nack);
  EXPECT_FALSE(bus.read(0x55, 0x00, 1).has_value());
  ASSERT_EQ(bus.log_size(), 2u);
  EXPECT_EQ(bus.log()[0].result, I2cResult::nack);
}

TEST(I2c, AttachValidatesAddress) {
  I2cBus bus;
  attach_chip(bus);
  EXPECT_THROW(bus.attach(0x80, std::make_shared<Pca9685>()), ValidationError);
  EXPECT_THROW(bus.attach(pca9685::kDefaultAddress, std::make_shared<Pca9685>()), ValidationError);
}

TEST(I2c, LogJsonLines) {
  I2cBus bus;
  attach_chip(bus);
  bus.write(0x40, 0x00, {0x11});
  EXPECT_EQ(bus.log_jsonl(), "{\"addr\":64,\"reg\":0,\"bytes\":[17],\"dir\":\"w\",\"ack\":true}\n");
  bus.set_logging(false);
  bus.write(0x40, 0x00, {0x11});
  EXPECT_EQ(bus.log_size(), 1u);
}

TEST(Pca9685, PowerOnState) {
  Pca9685 chip;
  EXPECT_EQ(chip.mode1(), 0x11);
  EXPECT_TRUE(chip.sleeping());
  EXPECT_TRUE(chip.channel(0).full_off);
  EXPECT_THROW(duty_of(chip, 0), StateError);
}

TEST(Pca9685, PrescaleAcceptedWhileAsleep) {
  I2cBus bus;
  auto chip = attach_chip(bus);
  EXPECT_EQ(bus.write(0x40, pca9685::kMode1, {0x11}), I2cResult::ack);
  EXPECT_EQ(bus.write(0x40, pca9685::kPreScale, {121}), I2cResult::ack);
  EXPECT_EQ(chip->prescale(), 121);
  EXPECT_TRUE(chip->diagnostics().empty());
}

TEST(Pca9685, PrescaleIgnoredWhileAwake) {
  I2cBus bus;
  auto chip = attach_chip(bus);
  bus.write(0x40, pca9685::kMode1, {0x11});
  bus.write(0x40, pca9685::kPreScale, {121});
  bus.write(0x40, pca9685::kMode1, {pca9685::kMode1Ai});
  EXPECT_FALSE(chip->sleeping());
  bus.write(0x40, pca9685::kPreScale, {30});
  EXPECT_EQ(chip->prescale(), 121);
  ASSERT_EQ(chip->diagnostics().size(), 1u);
}

TEST(Pca9685, RegisterRoundTripWithAutoIncrement) {
  I2cBus bus;
  auto chip = attach_chip(bus);
  bus.write(0x40, pca9685::kMode1, {pca9685::kMode1Ai});
  const std::uint8_t reg = pca9685::led_on_l(3);
  bus.write(0x40, reg, {0x10, 0x01, 0x33, 0x02});
  const auto back = bus.read(0x40, reg, 4);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(*back, (std::vector<std::uint8_t>{0x10, 0x01, 0x33, 0x02}));
  const auto c = chip->channel(3);
  EXPECT_EQ(c.on, 0x110);
  EXPECT_EQ(c.off, 0x233);
  EXPECT_FALSE(c.full_on);
  EXPECT_FALSE(c.full_off);
}

TEST(Pca9685, PrescaleFormula) {
  EXPECT_EQ(prescale_for(50.0), 121);
  EXPECT_EQ(prescale_for(60.0), 101);
  EXPECT_EQ(prescale_for(1526.0), 3);
  EXPECT_EQ(prescale_for(24.0), 253);
  EXPECT_THROW(prescale_for(23.9), ValidationError);
  EXPECT_THROW(prescale_for(2000.0), ValidationError);
  // Independent oracle: round(osc / (4096 f)) - 1.
  for (double f = 24.0; f <= 1526.0; f += 7.3) {
    EXPECT_EQ(prescale_for(f), static_cast<int>(std::lround(25e6 / (4096.0 * f))) - 1) << f;
  }
}

TEST(Pca9685, DutyOfInvertsCounts) {
  I2cBus bus;
  auto chip = attach_chip(bus);
  bus.write(0x40, pca9685::kMode1, {0x11});
  bus.write(0x40, pca9685::kPreScale, {121});
  bus.write(0x40, pca9685::kMode1, {pca9685::kMode1Ai});
  bus.write(0x40, pca9685::led_on_l(0), {0, 0, 307 & 0xFF, 307 >> 8});
  // 307 counts of a 4096-count period at 25 MHz / (4096 * 122): 307 * 122 / 25 us.
  EXPECT_NEAR(duty_of(*chip, 0), 307.0 * 122.0 / 25.0, 1e-9);
  EXPECT_NEAR(duty_of(*chip, 0), 1498.16, 0.01);
  bus.write(0x40, pca9685::led_on_l(1), {0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(duty_of(*chip, 1), 0.0);
  // Default full-off channel.
  EXPECT_DOUBLE_EQ(duty_of(*chip, 5), 0.0);
}

TEST(Battery, CalibratedSag) {
  const auto small = battery_step(BatteryModel{}, 7.5, 1800.0);
  EXPECT_NEAR(small.voltage_v, 11.6, 0.05);
  EXPECT_NEAR(small.voltage_v, 12.6 - 7.5 * 1800.0 / 13'500.0, 1e-12);
  const auto large = battery_step(BatteryModel{}, 7.6, 1800.0);
  EXPECT_NEAR(large.voltage_v, 12.6 - 7.6 * 1800.0 / 13'500.0, 1e-12);
  EXPECT_NEAR(large.voltage_v, 11.5, 0.1);
}

TEST(Battery, ZeroLoadAndStepping) {
  EXPECT_DOUBLE_EQ(battery_step(BatteryModel{}, 0.0, 100.0).voltage_v, 12.6);
  BatteryModel b;
  for (int i = 0; i < 1800; ++i) b = battery_step(b, 7.5, 1.0);
  EXPECT_NEAR(b.voltage_v, 11.6, 1e-9);
  EXPECT_THROW(battery_step(b, -1.0, 1.0), ValidationError);
  EXPECT_THROW(battery_step(b, 1.0, 0.0), ValidationError);
}

TEST(Power, RailsFollowRange) {
  EXPECT_TRUE(PowerBoard(12.6).rails().all_enabled());
  EXPECT_TRUE(PowerBoard(8.9).rails().all_disabled());
  EXPECT_TRUE(PowerBoard(15.0).rails().all_enabled());
  EXPECT_TRUE(PowerBoard(9.0).rails().all_enabled());
  EXPECT_TRUE(PowerBoard(15.01).rails().all_disabled());
  const PowerBoard on(12.0);
  EXPECT_DOUBLE_EQ(on.rails().servo_v, 6.0);
  EXPECT_DOUBLE_EQ(on.rails().sensor_v, 5.0);
}

TEST(Power, TripLatchesUntilReset) {
  PowerBoard board(12.6);
  std::vector<bool> changes;
  board.set_listener([&](const RailState& r) { changes.push_back(r.all_enabled()); });
  EXPECT_TRUE(board.protection_check(8.9).all_disabled());
  EXPECT_TRUE(board.tripped());
  EXPECT_TRUE(board.protection_check(12.0).all_disabled());
  EXPECT_TRUE(board.protection_check(16.0).all_disabled());
  EXPECT_FALSE(board.reset());
  board.protection_check(11.0);
  EXPECT_TRUE(board.reset());
  EXPECT_TRUE(board.rails().all_enabled());
  EXPECT_EQ(changes, (std::vector<bool>{false, true}));
}
