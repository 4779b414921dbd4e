#include "teacar/pipeline.hpp"

#include <cmath>

#include "teacar/digest.hpp"
#include "teacar/error.hpp"

namespace teacar {

SimStack::SimStack(StackOptions options)
    : options_(std::move(options)),
      bus_(std::make_unique<Bus>(options_.mode)),
      chip_(std::make_shared<devemu::Pca9685>()),
      power_(devemu::BatteryModel{}.voltage_v) {
  Bus& bus = *bus_;
  bus.register_topic(topics_.camera.name, MessageKind::image);
  bus.register_topic(topics_.steering.name, MessageKind::motion_cmd);
  bus.register_topic(topics_.throttle.name, MessageKind::motion_cmd);
  bus.register_topic(topics_.pwm.name, MessageKind::pwm_channel_cmd);
  bus.register_topic(topics_.joy.name, MessageKind::joy);

  i2c_.set_logging(options_.log_i2c);
  i2c_.attach(devemu::pca9685::kDefaultAddress, chip_);
  const auto& ac = options_.actuation;
  ac.validate();
  driver_ = std::make_unique<actuation::PwmDriver>(bus, topics_.pwm, i2c_,
                                                   devemu::pca9685::kDefaultAddress, ac.freq_hz);
  driver_->initialize();
  servo_ = std::make_unique<actuation::ServoActuator>(bus, topics_.steering, topics_.pwm,
                                                      ac.servo_channel, ac.servo);
  motor_ = std::make_unique<actuation::MotorActuator>(bus, topics_.throttle, topics_.pwm,
                                                      ac.motor_channel, ac.esc);
  world_ = std::make_unique<sim::World>(bus, sim::Track(options_.track), options_.vehicle,
                                        options_.camera, i2c_, *chip_, ac, topics_.camera, &power_,
                                        options_.world);
}

SimStack::~SimStack() {
  world_.reset();
  motor_.reset();
  servo_.reset();
  driver_.reset();
}

void SimStack::step() { bus_->step(options_.world.physics_period_ns); }

double SimStack::sim_seconds() const { return bus_->now().nanos * 1e-9; }

namespace {

// Steps until the lap target, a violation or the time limit; `done` can end early.
void run_loop(SimStack& stack, const DriveOptions& o, DriveResult& r,
              const std::function<bool()>& done = {}, const std::function<void()>& after_step = {}) {
  sim::World& w = stack.world();
  while (stack.sim_seconds() < o.max_sim_seconds) {
    stack.step();
    if (after_step) after_step();
    r.max_abs_lateral_m = std::max(r.max_abs_lateral_m, std::abs(w.lateral_offset()));
    if (o.stop_on_violation && w.violations() > 0) break;
    if (done ? done() : w.laps() >= o.laps) break;
  }
  r.laps = w.laps();
  r.violations = w.violations();
  r.first_violation = w.first_violation();
  r.sim_seconds = stack.sim_seconds();
  r.frames = w.frames();
}

}  // namespace

DriveResult run_oracle(const StackOptions& stack_options, const DriveOptions& o) {
  SimStack stack(stack_options);
  const Topics& t = stack.topics();
  sim::PurePursuitDriver expert(stack.bus(), stack.world(), t.camera, t.steering, t.throttle,
                                o.lookahead_m);
  controllers::CruiseController cruise(stack.bus(), t.steering, t.throttle, o.cruise_throttle);
  std::unique_ptr<sim::SteeringPerturbation> noise;
  if (o.perturbation_stddev > 0.0) {
    noise = std::make_unique<sim::SteeringPerturbation>(stack.bus(), t.steering, t.throttle, o.seed,
                                                        o.perturbation_stddev);
  }
  DriveResult r;
  run_loop(stack, o, r);
  return r;
}

DriveResult drive_model(const StackOptions& stack_options, const nn::Weights& model,
                        const DriveOptions& o) {
  SimStack stack(stack_options);
  const Topics& t = stack.topics();
  controllers::NnController nn(stack.bus(), t.camera, t.steering, t.throttle, model);
  controllers::CruiseController cruise(stack.bus(), t.steering, t.throttle, o.cruise_throttle);
  DriveResult r;
  double latency_sum = 0.0;
  std::size_t seen = 0;
  run_loop(stack, o, r, {}, [&] {
    if (nn.frames_processed() != seen) {
      seen = nn.frames_processed();
      latency_sum += nn.last_latency_ms();
    }
  });
  r.mean_latency_ms = seen ? latency_sum / static_cast<double>(seen) : 0.0;
  return r;
}

RecordResult record_dataset(const StackOptions& stack_options, const std::filesystem::path& dir,
                            std::size_t samples, const DriveOptions& o,
                            const std::function<void(std::size_t)>& progress) {
  SimStack stack(stack_options);
  const Topics& t = stack.topics();
  recorder::RecorderOptions ropts;
  ropts.max_samples = samples;
  recorder::Recorder rec(stack.bus(), t.camera, t.steering, ropts);
  sim::PurePursuitDriver expert(stack.bus(), stack.world(), t.camera, t.steering, t.throttle,
                                o.lookahead_m, ropts.label_source);
  controllers::CruiseController cruise(stack.bus(), t.steering, t.throttle, o.cruise_throttle);
  std::unique_ptr<sim::SteeringPerturbation> noise;
  if (o.perturbation_stddev > 0.0) {
    noise = std::make_unique<sim::SteeringPerturbation>(stack.bus(), t.steering, t.throttle, o.seed,
                                                        o.perturbation_stddev);
  }

  recorder::DatasetManifest meta;
  meta.camera = stack_options.camera.to_json();
  meta.track_sha256 = sha256_hex(stack_options.track.to_json().dump());
  meta.seed = o.seed;
  rec.start(dir, meta);

  RecordResult result;
  std::size_t reported = 0;
  run_loop(
      stack, o, result.drive, [&] { return rec.full(); },
      [&] {
        rec.flush();
        if (progress && rec.recorded() / 1000 != reported / 1000) {
          reported = rec.recorded();
          progress(reported);
        }
      });
  result.skipped = rec.skipped();
  result.manifest = rec.stop();
  return result;
}

}  // namespace teacar
