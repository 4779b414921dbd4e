#include "teacar/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "teacar/devemu.hpp"
#include "teacar/error.hpp"
#include "teacar/nn/weights_io.hpp"

namespace teacar::gateway {

double default_power_w(nn::ArchId arch) {
  switch (arch) {
    case nn::ArchId::small:
    case nn::ArchId::medium:
      return 7.5;
    case nn::ArchId::large:
      return 7.6;
  }
  throw ValidationError("unknown architecture id");
}

nlohmann::json BenchReport::to_json() const {
  return {{"arch", arch},
          {"iterations", iterations},
          {"mean_ms", mean_ms},
          {"min_ms", min_ms},
          {"max_ms", max_ms},
          {"p99_ms", p99_ms},
          {"modeled_power_w", power_w},
          {"duration_s", duration_s},
          {"battery_initial_v", battery_initial_v},
          {"battery_final_v", battery_final_v}};
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw ValidationError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw ValidationError("percentile must lie in (0, 100]");
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * samples.size()));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

namespace {

void check_options(const BenchOptions& o) {
  if (o.iterations < 1000) throw ValidationError("bench needs at least 1000 iterations");
  if (o.warmup < 0) throw ValidationError("bench warm-up must be >= 0");
  if (!(o.duration_s > 0.0) || !std::isfinite(o.duration_s)) {
    throw ValidationError("bench duration must be positive");
  }
  if (o.power_w && !(*o.power_w >= 0.0)) throw ValidationError("bench power must be >= 0");
}

}  // namespace

BenchReport bench(const BenchOptions& options) {
  check_options(options);
  const nn::ModelArch arch = nn::ModelArch::by_name(options.arch);
  nn::Weights w = options.weights ? nn::load_weights(*options.weights, arch.id)
                                  : nn::init_weights<float>(arch, options.seed);
  return bench(w, options);
}

BenchReport bench(const nn::Weights& weights, const BenchOptions& options) {
  check_options(options);
  weights.check();
  const auto& shape = weights.arch.input;
  std::vector<std::uint8_t> image(static_cast<std::size_t>(shape.channels) * shape.height *
                                  shape.width);
  std::mt19937_64 rng(options.seed ^ 0xBE0C4ULL);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& b : image) b = static_cast<std::uint8_t>(byte(rng));
  const auto input = nn::preprocess<float>(image, shape);

  volatile float sink = 0.0f;
  for (int i = 0; i < options.warmup; ++i) sink = sink + nn::forward<float>(weights, input);

  std::vector<double> ms(static_cast<std::size_t>(options.iterations));
  for (auto& m : ms) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + nn::forward<float>(weights, input);
    m = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  BenchReport r;
  r.arch = weights.arch.name;
  r.iterations = options.iterations;
  r.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  r.min_ms = *std::min_element(ms.begin(), ms.end());
  r.max_ms = *std::max_element(ms.begin(), ms.end());
  r.p99_ms = percentile(ms, 99.0);
  r.power_w = options.power_w.value_or(
      weights.arch.id ? default_power_w(*weights.arch.id) : default_power_w(nn::ArchId::small));
  r.duration_s = options.duration_s;

  devemu::BatteryModel battery;
  r.battery_initial_v = battery.voltage_v;
  double remaining = options.duration_s;
  while (remaining > 0.0) {
    const double dt = std::min(1.0, remaining);
    battery = devemu::battery_step(battery, r.power_w, dt);
    remaining -= dt;
  }
  r.battery_final_v = battery.voltage_v;
  return r;
}

}  // namespace teacar::gateway
