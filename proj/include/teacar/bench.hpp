#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "teacar/nn/arch.hpp"
#include "teacar/nn/network.hpp"

namespace teacar::gateway {

/// Modeled compute load per architecture, W.
double default_power_w(nn::ArchId arch);

struct BenchOptions {
  std::string arch = "small";
  int iterations = 2000;
  int warmup = 100;
  double duration_s = 1800.0;
  std::optional<double> power_w;  // defaults per architecture
  std::optional<std::filesystem::path> weights;  // random seeded weights when unset
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::string arch;
  int iterations = 0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double p99_ms = 0.0;
  double power_w = 0.0;  // modeled
  double duration_s = 0.0;
  double battery_initial_v = 0.0;
  double battery_final_v = 0.0;

  nlohmann::json to_json() const;
};

/// Nearest-rank percentile of the samples (p in (0, 100]).
double percentile(std::vector<double> samples, double p);

/// Times forward() on a fixed seeded random image after discarding warm-up
/// passes, then runs the battery model at the compute load for duration_s.
/// ValidationError for iterations < 1000; ConfigError for missing weights.
BenchReport bench(const BenchOptions& options);
/// Same, with weights supplied directly.
BenchReport bench(const nn::Weights& weights, const BenchOptions& options);

}  // namespace teacar::gateway
