#include "teacar/messages.hpp"

#include <cmath>
#include <string>

#include "teacar/error.hpp"

namespace teacar {

ImageMsg::ImageMsg() : data_(kBytes, 0) {}

ImageMsg::ImageMsg(Header h, std::vector<std::uint8_t> data) : header(h), data_(std::move(data)) {
  if (data_.size() != kBytes) {
    throw ValidationError("ImageMsg: expected " + std::to_string(kBytes) + " bytes, got " +
                          std::to_string(data_.size()));
  }
}

MessageKind kind_of(const Message& msg) noexcept {
  return static_cast<MessageKind>(msg.index());
}

std::string_view to_string(MessageKind kind) noexcept {
  switch (kind) {
    case MessageKind::motion_cmd: return "MotionCmd";
    case MessageKind::joy: return "JoyMsg";
    case MessageKind::image: return "ImageMsg";
    case MessageKind::imu: return "ImuMsg";
    case MessageKind::pwm_channel_cmd: return "PwmChannelCmd";
  }
  return "unknown";
}

const Header& header_of(const Message& msg) noexcept {
  return std::visit([](const auto& m) -> const Header& { return m.header; }, msg);
}

Header& header_of(Message& msg) noexcept {
  return std::visit([](auto& m) -> Header& { return m.header; }, msg);
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

struct Validator {
  void operator()(const MotionCmd& m) const {
    require(std::isfinite(m.value), "MotionCmd: value must be finite");
    require(!m.source.empty(), "MotionCmd: source must be non-empty");
    require(std::abs(m.value) <= 1.0, "MotionCmd: |value| must be <= 1");
  }
  void operator()(const JoyMsg& m) const {
    for (double a : m.axes) {
      require(std::isfinite(a) && std::abs(a) <= 1.0, "JoyMsg: axes must lie in [-1, 1]");
    }
    for (int b : m.buttons) {
      require(b == 0 || b == 1, "JoyMsg: buttons must be 0 or 1");
    }
  }
  void operator()(const ImageMsg& m) const {
    require(m.data().size() == ImageMsg::kBytes, "ImageMsg: wrong payload size");
  }
  void operator()(const ImuMsg& m) const {
    for (int i = 0; i < 3; ++i) {
      require(std::isfinite(m.accel[i]) && std::isfinite(m.gyro[i]),
              "ImuMsg: components must be finite");
    }
  }
  void operator()(const PwmChannelCmd& m) const {
    require(m.channel >= 0 && m.channel <= 15, "PwmChannelCmd: channel must be in [0, 15]");
    require(std::isfinite(m.pulse_width_us) && m.pulse_width_us >= 0.0,
            "PwmChannelCmd: pulse width must be finite and >= 0");
  }
};

}  // namespace

void validate(const Message& msg) { std::visit(Validator{}, msg); }

}  // namespace teacar
