#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "teacar/nn/network.hpp"
#include "teacar/nn/optimizer.hpp"

namespace teacar::nn {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double val_fraction = 0.1;
  /// Stop after the first epoch whose validation MSE is at or below this.
  std::optional<double> target_val_mse;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Weights weights;
  std::vector<EpochStats> history;
  bool reached_target = false;
};

/// One optimizer step on a batch of preprocessed inputs (N x input_size).
/// Returns the batch MSE measured before the step.
float backward_and_step(Weights& weights, Optimizer<float>& optimizer,
                        std::span<const float> inputs, std::span<const float> labels,
                        Weights& grad_scratch);

/// Seeded shuffle of [0, n) split into (train, validation); the validation
/// part holds round(n * val_fraction) indices, at least one when n > 1.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double val_fraction, std::uint64_t seed);

/// MSE of the network on the selected HWC byte images.
double evaluate_mse(const Weights& weights, std::span<const std::vector<std::uint8_t>> images,
                    std::span<const float> labels, std::span<const std::size_t> indices);

/// Behavioral-cloning training on HWC byte images with steering labels.
TrainResult train(const ModelArch& arch, std::span<const std::vector<std::uint8_t>> images,
                  std::span<const float> labels, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Network output for one HWC byte image.
float predict(const Weights& weights, std::span<const std::uint8_t> image_hwc);

}  // namespace teacar::nn
