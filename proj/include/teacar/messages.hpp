#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace teacar {

/// Nanoseconds since the bus epoch (virtual in stepped mode, steady clock in live mode).
struct Timestamp {
  std::int64_t nanos = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct Header {
  Timestamp stamp;

  friend bool operator==(const Header&, const Header&) = default;
};

/// Normalized command sent by a controller. Steering and throttle both live in
/// [-1, 1]; +1 is full left / full forward.
struct MotionCmd {
  Header header;
  std::string source;
  double value = 0.0;

  friend bool operator==(const MotionCmd&, const MotionCmd&) = default;
};

struct JoyMsg {
  Header header;
  std::vector<double> axes;
  std::vector<int> buttons;

  friend bool operator==(const JoyMsg&, const JoyMsg&) = default;
};

/// 144x224 RGB8 frame, row-major, interleaved channels.
class ImageMsg {
 public:
  static constexpr int kHeight = 144;
  static constexpr int kWidth = 224;
  static constexpr int kChannels = 3;
  static constexpr std::size_t kBytes =
      static_cast<std::size_t>(kHeight) * kWidth * kChannels;  // 96,768

  /// Black frame.
  ImageMsg();
  /// Throws ValidationError unless data.size() == kBytes.
  ImageMsg(Header header, std::vector<std::uint8_t> data);

  Header header;

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::uint8_t at(int row, int col, int channel) const {
    return data_[(static_cast<std::size_t>(row) * kWidth + col) * kChannels + channel];
  }

  friend bool operator==(const ImageMsg&, const ImageMsg&) = default;

 private:
  std::vector<std::uint8_t> data_;
};

struct ImuMsg {
  Header header;
  std::array<double, 3> accel{};  // m/s^2
  std::array<double, 3> gyro{};   // rad/s

  friend bool operator==(const ImuMsg&, const ImuMsg&) = default;
};

struct PwmChannelCmd {
  Header header;
  int channel = 0;
  double pulse_width_us = 0.0;

  friend bool operator==(const PwmChannelCmd&, const PwmChannelCmd&) = default;
};

enum class MessageKind : std::uint8_t { motion_cmd, joy, image, imu, pwm_channel_cmd };

using Message = std::variant<MotionCmd, JoyMsg, ImageMsg, ImuMsg, PwmChannelCmd>;

template <class T>
constexpr MessageKind kind_of();
template <>
constexpr MessageKind kind_of<MotionCmd>() { return MessageKind::motion_cmd; }
template <>
constexpr MessageKind kind_of<JoyMsg>() { return MessageKind::joy; }
template <>
constexpr MessageKind kind_of<ImageMsg>() { return MessageKind::image; }
template <>
constexpr MessageKind kind_of<ImuMsg>() { return MessageKind::imu; }
template <>
constexpr MessageKind kind_of<PwmChannelCmd>() { return MessageKind::pwm_channel_cmd; }

MessageKind kind_of(const Message& msg) noexcept;
std::string_view to_string(MessageKind kind) noexcept;
const Header& header_of(const Message& msg) noexcept;
Header& header_of(Message& msg) noexcept;

/// Throws ValidationError when a message violates its type invariants
/// (non-finite values, empty source, channel out of range, ...).
void validate(const Message& msg);

}  // namespace teacar
