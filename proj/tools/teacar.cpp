// teacar: simulation, data collection, training, benchmarking and the
// teleoperation gateway from one binary.

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "teacar/bench.hpp"
#include "teacar/digest.hpp"
#include "teacar/error.hpp"
#include "teacar/gateway.hpp"
#include "teacar/nn/train.hpp"
#include "teacar/nn/weights_io.hpp"
#include "teacar/pipeline.hpp"
#include "teacar/recorder.hpp"

namespace fs = std::filesystem;
using namespace teacar;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void configure_logging() {
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  if (const char* env = std::getenv("TEACAR_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

StackOptions stack_from(const std::optional<std::string>& track_path,
                        const std::optional<std::string>& camera_path) {
  StackOptions so;
  if (track_path) so.track = sim::TrackSpec::load(*track_path);
  if (camera_path) {
    std::ifstream in(*camera_path);
    if (!in) throw ConfigError("cannot open camera config " + *camera_path);
    so.camera = sim::CameraModel::from_json(nlohmann::json::parse(in));
  }
  return so;
}

nlohmann::json drive_json(const DriveResult& r) {
  nlohmann::json j = {{"laps", r.laps},
                      {"violations", r.violations},
                      {"sim_seconds", r.sim_seconds},
                      {"max_abs_lateral_m", r.max_abs_lateral_m},
                      {"frames", r.frames}};
  j["first_violation"] =
      r.first_violation ? nlohmann::json(std::string(sim::to_string(*r.first_violation))) : nlohmann::json();
  if (r.mean_latency_ms > 0.0) j["mean_latency_ms"] = r.mean_latency_ms;
  return j;
}

// ---------------------------------------------------------------------------

struct SimArgs {
  std::optional<std::string> track, camera, model, frames_dir, bus_log;
  bool headless = false;
  std::uint64_t seed = 0;
  int laps = 3;
  double cruise = 0.5;
  double lookahead = 0.45;
  double perturbation = 0.0;
  double max_seconds = 600.0;
};

int cmd_sim(const SimArgs& a) {
  SimStack stack(stack_from(a.track, a.camera));
  const Topics& t = stack.topics();
  std::ofstream log;
  if (a.bus_log) {
    log.open(*a.bus_log);
    if (!log) throw ConfigError("cannot write " + *a.bus_log);
    stack.bus().set_log_sink([&log](std::string_view line) { log << line << '\n'; });
  }
  std::unique_ptr<sim::PurePursuitDriver> expert;
  std::unique_ptr<controllers::NnController> nn;
  if (a.model) {
    nn = std::make_unique<controllers::NnController>(stack.bus(), t.camera, t.steering, t.throttle,
                                                     nn::load_weights(*a.model));
  } else {
    expert = std::make_unique<sim::PurePursuitDriver>(stack.bus(), stack.world(), t.camera,
                                                      t.steering, t.throttle, a.lookahead);
  }
  controllers::CruiseController cruise(stack.bus(), t.steering, t.throttle, a.cruise);
  std::unique_ptr<sim::SteeringPerturbation> noise;
  if (a.perturbation > 0.0) {
    noise = std::make_unique<sim::SteeringPerturbation>(stack.bus(), t.steering, t.throttle, a.seed,
                                                        a.perturbation);
  }
  std::size_t frame_index = 0;
  SubscriptionId frames_sub = 0;
  if (a.frames_dir) {
    fs::create_directories(*a.frames_dir);
    frames_sub = stack.bus().subscribe<ImageMsg>(t.camera, [&](const ImageMsg& img) {
      const auto ppm = recorder::encode_ppm(img.data());
      std::ofstream out(fs::path(*a.frames_dir) / recorder::frame_name(frame_index++).substr(7),
                        std::ios::binary);
      out.write(reinterpret_cast<const char*>(ppm.data()), static_cast<std::streamsize>(ppm.size()));
    });
  }

  sim::World& w = stack.world();
  int reported = 0;
  double max_lateral = 0.0;
  while (stack.sim_seconds() < a.max_seconds && w.laps() < a.laps && w.violations() == 0 &&
         !g_interrupted) {
    stack.step();
    max_lateral = std::max(max_lateral, std::abs(w.lateral_offset()));
    if (w.laps() != reported) {
      reported = w.laps();
      if (!a.headless) spdlog::info("lap {} at t = {:.2f} s", reported, stack.sim_seconds());
    }
  }
  if (frames_sub) stack.bus().unsubscribe(frames_sub);
  DriveResult r;
  r.laps = w.laps();
  r.violations = w.violations();
  r.first_violation = w.first_violation();
  r.sim_seconds = stack.sim_seconds();
  r.frames = w.frames();
  r.max_abs_lateral_m = max_lateral;
  std::cout << drive_json(r).dump(2) << '\n';
  return r.violations == 0 && r.laps >= a.laps ? 0 : 1;
}

struct RecordArgs {
  std::string out;
  std::optional<std::string> track, camera;
  std::size_t samples = 10'000;
  std::uint64_t seed = 0;
  double cruise = 0.5;
  double lookahead = 0.45;
  double perturbation = 0.12;
};

int cmd_record(const RecordArgs& a) {
  DriveOptions o;
  o.seed = a.seed;
  o.cruise_throttle = a.cruise;
  o.lookahead_m = a.lookahead;
  o.perturbation_stddev = a.perturbation;
  // Expected frames at 30 FPS plus margin.
  o.max_sim_seconds = static_cast<double>(a.samples) / 30.0 * 1.5 + 10.0;
  const auto r = record_dataset(stack_from(a.track, a.camera), a.out, a.samples, o,
                                [](std::size_t n) { spdlog::info("recorded {} pairs", n); });
  nlohmann::json j = {{"count", r.manifest.count},
                      {"skipped", r.skipped},
                      {"index_sha256", r.manifest.index_sha256},
                      {"drive", drive_json(r.drive)}};
  std::cout << j.dump(2) << '\n';
  return r.manifest.count == a.samples && r.drive.violations == 0 ? 0 : 1;
}

struct TrainArgs {
  std::string arch = "small";
  std::string data;
  std::string out;
  nn::TrainConfig config;
  std::string optimizer = "adam";
  std::optional<double> target;
};

int cmd_train(TrainArgs a) {
  a.config.optimizer = nn::optimizer_from_string(a.optimizer);
  a.config.target_val_mse = a.target;
  const auto arch = nn::ModelArch::by_name(a.arch);
  spdlog::info("loading dataset {}", a.data);
  auto ds = recorder::read_dataset(a.data);
  std::vector<std::vector<std::uint8_t>> images;
  std::vector<float> labels;
  images.reserve(ds.samples.size());
  for (auto& s : ds.samples) {
    images.push_back(std::move(s.image));
    labels.push_back(static_cast<float>(s.steering));
  }
  ds.samples.clear();
  spdlog::info("training {} on {} samples", arch.name, images.size());
  const auto r = nn::train(arch, images, labels, a.config, [](const nn::EpochStats& e) {
    spdlog::info("epoch {}: train mse {:.6f}, val mse {:.6f} ({:.1f} s)", e.epoch, e.train_mse,
                 e.val_mse, e.seconds);
  });
  nn::save_weights(a.out, r.weights);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : r.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse}});
  }
  std::cout << nlohmann::json{{"weights", a.out}, {"history", hist}}.dump(2) << '\n';
  return 0;
}

struct DriveArgs {
  std::string model;
  std::optional<std::string> track, camera;
  int laps = 1;
  double cruise = 0.5;
  double max_seconds = 300.0;
};

int cmd_drive(const DriveArgs& a) {
  DriveOptions o;
  o.laps = a.laps;
  o.cruise_throttle = a.cruise;
  o.max_sim_seconds = a.max_seconds;
  const auto r = drive_model(stack_from(a.track, a.camera), nn::load_weights(a.model), o);
  std::cout << drive_json(r).dump(2) << '\n';
  return r.violations == 0 && r.laps >= a.laps ? 0 : 1;
}

struct BenchArgs {
  std::string arch = "all";
  int iters = 2000;
  double duration = 1800.0;
  std::optional<double> power;
  std::optional<std::string> weights;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  std::vector<std::string> archs = {a.arch};
  if (a.arch == "all") {
    if (a.weights) throw ConfigError("--weights needs a single --arch");
    archs = {"small", "medium", "large"};
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& name : archs) {
    gateway::BenchOptions o;
    o.arch = name;
    o.iterations = a.iters;
    o.duration_s = a.duration;
    o.power_w = a.power;
    o.seed = a.seed;
    if (a.weights) o.weights = fs::path(*a.weights);
    const auto r = gateway::bench(o);
    spdlog::info("{}: mean {:.3f} ms (min {:.3f}, p99 {:.3f}, max {:.3f}), battery {:.2f} -> {:.2f} V",
                 r.arch, r.mean_ms, r.min_ms, r.p99_ms, r.max_ms, r.battery_initial_v,
                 r.battery_final_v);
    out.push_back(r.to_json());
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct ServeArgs {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;
  std::optional<std::string> track, camera, model, ui_dir, joy_profile;
  std::string record_dir = "recordings";
  double cruise = 0.5;
  double duration = 0.0;  // 0 runs until interrupted
};

int cmd_serve(const ServeArgs& a) {
  StackOptions so = stack_from(a.track, a.camera);
  so.mode = BusMode::live;
  SimStack stack(so);
  Bus& bus = stack.bus();
  const Topics& t = stack.topics();

  const auto mapping = a.joy_profile ? controllers::JoyMapping::load(*a.joy_profile)
                                     : controllers::JoyMapping{};
  controllers::JoystickController joystick(bus, t.joy, t.steering, t.throttle, mapping);
  controllers::CruiseController cruise(bus, t.steering, t.throttle, a.cruise);
  std::unique_ptr<controllers::NnController> nn;
  if (a.model) {
    nn = std::make_unique<controllers::NnController>(bus, t.camera, t.steering, t.throttle,
                                                     nn::load_weights(*a.model));
  }

  recorder::RecorderOptions ropts;
  ropts.label_source = "joystick";
  recorder::Recorder rec(bus, t.camera, t.steering, ropts);
  int session = 0;

  gateway::Hub hub(bus, t.joy, {&stack.servo(), &stack.motor()});
  hub.set_record_hook([&](bool enable) {
    if (enable && !rec.active()) {
      fs::path dir;
      do {
        dir = fs::path(a.record_dir) / ("session_" + std::to_string(session++));
      } while (fs::exists(dir));
      recorder::DatasetManifest meta;
      meta.camera = so.camera.to_json();
      meta.track_sha256 = sha256_hex(so.track.to_json().dump());
      rec.start(dir, meta);
      spdlog::info("recording to {}", dir.string());
    } else if (!enable && rec.active()) {
      const auto m = rec.stop();
      spdlog::info("recording stopped, {} pairs", m.count);
    }
    return rec.active();
  });

  gateway::ServerOptions sopts;
  sopts.address = a.address;
  sopts.port = a.port;
  if (a.ui_dir) sopts.static_dir = fs::path(*a.ui_dir);
  gateway::Server server(hub, sopts);

  bus.subscribe<ImageMsg>(t.camera, [&](const ImageMsg& img) { server.update_frame(img); });
  bus.add_periodic(100'000'000, [&] {
    const sim::World& w = stack.world();
    const auto s = w.state();
    gateway::Telemetry tel;
    tel.t_ns = bus.now().nanos;
    tel.x = s.x;
    tel.y = s.y;
    tel.heading = s.heading;
    tel.speed = s.speed;
    tel.steering = w.applied_steering();
    tel.throttle = w.applied_throttle();
    tel.battery_v = w.battery().voltage_v;
    tel.rails_enabled = stack.power().rails().all_enabled();
    tel.rails_tripped = stack.power().tripped();
    tel.lap = w.laps();
    tel.latency_ms = nn ? nn->last_latency_ms() : 0.0;
    stack.i2c().locked([&] {
      if (stack.chip().sleeping()) return;
      tel.servo_us = devemu::duty_of(stack.chip(), so.actuation.servo_channel);
      tel.motor_us = devemu::duty_of(stack.chip(), so.actuation.motor_channel);
    });
    tel.mode = hub.mode();
    tel.recording = rec.active();
    server.update_telemetry(tel);
  });

  server.start();
  spdlog::info("serving on ws://{}:{}", a.address, server.port());

  std::jthread writer([&](std::stop_token st) {
    while (!st.stop_requested()) {
      rec.flush();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });

  const auto started = std::chrono::steady_clock::now();
  std::stop_source stop;
  while (!g_interrupted) {
    if (a.duration > 0.0 &&
        std::chrono::steady_clock::now() - started >= std::chrono::duration<double>(a.duration)) {
      break;
    }
    bus.spin(stop.get_token(), std::chrono::milliseconds(200));
  }
  server.stop();
  writer.request_stop();
  writer.join();
  if (rec.active()) rec.stop();
  spdlog::info("gateway stopped");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"TEACar simulation and training toolkit"};
  app.require_subcommand(1);

  SimArgs sim_args;
  auto* sim = app.add_subcommand("sim", "Run the closed loop with the pure-pursuit expert or a model");
  sim->add_option("--track", sim_args.track, "Track JSON (default: built-in reference track)");
  sim->add_option("--camera", sim_args.camera, "Camera JSON");
  sim->add_flag("--headless", sim_args.headless, "No per-lap progress output");
  sim->add_option("--seed", sim_args.seed, "Seed for steering perturbation");
  sim->add_option("--laps", sim_args.laps, "Laps to drive")->check(CLI::PositiveNumber);
  sim->add_option("--model", sim_args.model, "Drive with these weights instead of the expert");
  sim->add_option("--cruise", sim_args.cruise, "Cruise throttle")->check(CLI::Range(-1.0, 1.0));
  sim->add_option("--lookahead", sim_args.lookahead, "Pure-pursuit lookahead, m");
  sim->add_option("--perturbation", sim_args.perturbation, "Steering noise stddev");
  sim->add_option("--max-seconds", sim_args.max_seconds, "Simulated time limit");
  sim->add_option("--frames", sim_args.frames_dir, "Write every camera frame as PPM here");
  sim->add_option("--bus-log", sim_args.bus_log, "Write the JSONL message log here");

  RecordArgs rec_args;
  auto* rec = app.add_subcommand("record", "Record a synchronized image/steering dataset");
  rec->add_option("--out", rec_args.out, "Dataset directory")->required();
  rec->add_option("--samples", rec_args.samples, "Pairs to capture");
  rec->add_option("--seed", rec_args.seed, "Perturbation seed");
  rec->add_option("--track", rec_args.track, "Track JSON");
  rec->add_option("--camera", rec_args.camera, "Camera JSON");
  rec->add_option("--cruise", rec_args.cruise, "Cruise throttle")->check(CLI::Range(-1.0, 1.0));
  rec->add_option("--lookahead", rec_args.lookahead, "Pure-pursuit lookahead, m");
  rec->add_option("--perturbation", rec_args.perturbation, "Steering noise stddev");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a steering network on a dataset");
  train->add_option("--arch", train_args.arch, "small | medium | large");
  train->add_option("--data", train_args.data, "Dataset directory")->required();
  train->add_option("--out", train_args.out, "Output weights file")->required();
  train->add_option("--epochs", train_args.config.epochs, "Epochs");
  train->add_option("--seed", train_args.config.seed, "Seed");
  train->add_option("--batch", train_args.config.batch_size, "Batch size");
  train->add_option("--lr", train_args.config.learning_rate, "Learning rate");
  train->add_option("--optimizer", train_args.optimizer, "adam | sgd");
  train->add_option("--val-fraction", train_args.config.val_fraction, "Validation share");
  train->add_option("--target-mse", train_args.target, "Stop once validation MSE reaches this");

  DriveArgs drive_args;
  auto* drive = app.add_subcommand("drive", "Drive the track with a trained model");
  drive->add_option("--model", drive_args.model, "Weights file")->required();
  drive->add_option("--track", drive_args.track, "Track JSON");
  drive->add_option("--camera", drive_args.camera, "Camera JSON");
  drive->add_option("--laps", drive_args.laps, "Laps to drive")->check(CLI::PositiveNumber);
  drive->add_option("--cruise", drive_args.cruise, "Cruise throttle")->check(CLI::Range(-1.0, 1.0));
  drive->add_option("--max-seconds", drive_args.max_seconds, "Simulated time limit");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Inference latency and modeled battery benchmark");
  bench->add_option("--arch", bench_args.arch, "small | medium | large | all");
  bench->add_option("--iters", bench_args.iters, "Timed forward passes (>= 1000)");
  bench->add_option("--duration", bench_args.duration, "Modeled run time, s");
  bench->add_option("--power", bench_args.power, "Modeled compute load, W");
  bench->add_option("--weights", bench_args.weights, "Weights (default: seeded random)");
  bench->add_option("--seed", bench_args.seed, "Seed for input image and random weights");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Live simulation behind the WebSocket gateway");
  serve->add_option("--port", serve_args.port, "TCP port");
  serve->add_option("--address", serve_args.address, "Bind address");
  serve->add_option("--track", serve_args.track, "Track JSON");
  serve->add_option("--camera", serve_args.camera, "Camera JSON");
  serve->add_option("--model", serve_args.model, "Weights for autonomous mode");
  serve->add_option("--ui", serve_args.ui_dir, "Directory of static UI files");
  serve->add_option("--joy-profile", serve_args.joy_profile, "Joystick mapping JSON");
  serve->add_option("--record-dir", serve_args.record_dir, "Where recordings go");
  serve->add_option("--cruise", serve_args.cruise, "Cruise throttle in autonomous mode");
  serve->add_option("--duration", serve_args.duration, "Stop after this many seconds (0 = never)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_sim(sim_args);
    if (*rec) return cmd_record(rec_args);
    if (*train) return cmd_train(train_args);
    if (*drive) return cmd_drive(drive_args);
    if (*bench) return cmd_bench(bench_args);
    if (*serve) return cmd_serve(serve_args);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
