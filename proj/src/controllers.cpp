#include "teacar/controllers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "teacar/error.hpp"

namespace teacar::controllers {

Controller::Controller(Bus& bus, std::string source_name, Topic<MotionCmd> steering_topic,
                       Topic<MotionCmd> throttle_topic)
    : bus_(bus),
      source_(std::move(source_name)),
      steering_topic_(std::move(steering_topic)),
      throttle_topic_(std::move(throttle_topic)) {
  if (source_.empty()) {
    throw ValidationError("controller source name must be non-empty");
  }
}

std::size_t Controller::emit(std::optional<double> steering, std::optional<double> throttle) {
  if ((steering && !std::isfinite(*steering)) || (throttle && !std::isfinite(*throttle))) {
    throw ValidationError("controller '" + source_ + "': command must be finite");
  }
  const Header header{bus_.now()};
  std::size_t published = 0;
  if (steering) {
    bus_.publish(steering_topic_, MotionCmd{header, source_, std::clamp(*steering, -1.0, 1.0)});
    ++published;
  }
  if (throttle) {
    bus_.publish(throttle_topic_, MotionCmd{header, source_, std::clamp(*throttle, -1.0, 1.0)});
    ++published;
  }
  return published;
}

// ---------------------------------------------------------------------------
// Joystick

void JoyMapping::validate() const {
  if (steering_axis < 0 || throttle_axis < 0 || enable_button < 0) {
    throw ValidationError("joystick mapping: indices must be >= 0");
  }
  if (std::abs(steering_sign) != 1 || std::abs(throttle_sign) != 1) {
    throw ValidationError("joystick mapping: signs must be +1 or -1");
  }
  if (!(deadzone >= 0.0 && deadzone <= 0.2)) {
    throw ValidationError("joystick mapping: deadzone must lie in [0, 0.2]");
  }
}

JoyMapping JoyMapping::from_json(const nlohmann::json& j) {
  JoyMapping m;
  try {
    m.steering_axis = j.value("steering_axis", m.steering_axis);
    m.throttle_axis = j.value("throttle_axis", m.throttle_axis);
    m.steering_sign = j.value("steering_sign", m.steering_sign);
    m.throttle_sign = j.value("throttle_sign", m.throttle_sign);
    m.deadzone = j.value("deadzone", m.deadzone);
    m.enable_button = j.value("enable_button", m.enable_button);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("joystick profile: ") + e.what());
  }
  m.validate();
  return m;
}

JoyMapping JoyMapping::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open joystick profile " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("joystick profile " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json JoyMapping::to_json() const {
  return {{"steering_axis", steering_axis}, {"throttle_axis", throttle_axis},
          {"steering_sign", steering_sign}, {"throttle_sign", throttle_sign},
          {"deadzone", deadzone},           {"enable_button", enable_button}};
}

double deadzoned(double x, double deadzone) {
  const double mag = std::abs(x);
  if (mag < deadzone || mag == 0.0) {
    return 0.0;
  }
  return std::copysign((mag - deadzone) / (1.0 - deadzone), x);
}

JoyCommand joystick_map(const JoyMsg& joy, const JoyMapping& m) {
  const auto axes = static_cast<int>(joy.axes.size());
  const auto buttons = static_cast<int>(joy.buttons.size());
  if (m.steering_axis >= axes || m.throttle_axis >= axes || m.enable_button >= buttons) {
    throw ValidationError("joystick_map: mapped index out of range for this device");
  }
  JoyCommand c;
  c.steering = m.steering_sign * deadzoned(joy.axes[m.steering_axis], m.deadzone);
  c.throttle = m.throttle_sign * deadzoned(joy.axes[m.throttle_axis], m.deadzone);
  c.enabled = joy.buttons[m.enable_button] == 1;
  return c;
}

JoystickController::JoystickController(Bus& bus, Topic<JoyMsg> joy_topic,
                                       Topic<MotionCmd> steering_topic,
                                       Topic<MotionCmd> throttle_topic, JoyMapping mapping,
                                       std::string source_name)
    : Controller(bus, std::move(source_name), std::move(steering_topic), std::move(throttle_topic)),
      mapping_(mapping) {
  mapping_.validate();
  subscription_ = this->bus().subscribe<JoyMsg>(joy_topic, [this](const JoyMsg& joy) {
    ++handled_;
    const JoyCommand c = joystick_map(joy, mapping_);
    if (c.enabled) {
      emit(c.steering, c.throttle);
    }
  });
}

JoystickController::~JoystickController() { bus().unsubscribe(subscription_); }

// ---------------------------------------------------------------------------
// Neural network

double nn_control(const ImageMsg& image, const nn::Weights& model) {
  const nn::Shape3& in = model.arch.input;
  if (in.channels != ImageMsg::kChannels || in.height != ImageMsg::kHeight ||
      in.width != ImageMsg::kWidth || image.data().size() != ImageMsg::kBytes) {
    throw ValidationError("nn_control: model input must be 3x144x224 and match the image");
  }
  const auto input = nn::preprocess<float>(image.data(), in);
  return static_cast<double>(nn::forward<float>(model, input));
}

NnController::NnController(Bus& bus, Topic<ImageMsg> camera_topic, Topic<MotionCmd> steering_topic,
                           Topic<MotionCmd> throttle_topic, nn::Weights model,
                           std::string source_name)
    : Controller(bus, std::move(source_name), std::move(steering_topic), std::move(throttle_topic)),
      model_(std::move(model)) {
  model_.check();
  subscription_ = this->bus().subscribe<ImageMsg>(camera_topic, [this](const ImageMsg& image) {
    const auto t0 = std::chrono::steady_clock::now();
    const double steering = nn_control(image, model_);
    last_latency_ms_ =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    ++frames_;
    emit(steering, std::nullopt);
  });
}

NnController::~NnController() { bus().unsubscribe(subscription_); }

// ---------------------------------------------------------------------------
// Cruise

CruiseController::CruiseController(Bus& bus, Topic<MotionCmd> steering_topic,
                                   Topic<MotionCmd> throttle_topic, double throttle,
                                   std::int64_t period_ns, std::string source_name)
    : Controller(bus, std::move(source_name), std::move(steering_topic), std::move(throttle_topic)),
      throttle_(throttle) {
  set_throttle(throttle);
  periodic_ = this->bus().add_periodic(period_ns, [this] { emit(std::nullopt, throttle_.load()); });
}

CruiseController::~CruiseController() { bus().remove_periodic(periodic_); }

void CruiseController::set_throttle(double throttle) {
  if (!std::isfinite(throttle)) {
    throw ValidationError("cruise throttle must be finite");
  }
  throttle_ = std::clamp(throttle, -1.0, 1.0);
}

}  // namespace teacar::controllers
