#include "teacar/nn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "teacar/error.hpp"

namespace teacar::nn {

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be finite and >= 0");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ValidationError("val_fraction must lie in (0, 1)");
  }
}

float backward_and_step(Weights& weights, Optimizer<float>& optimizer,
                        std::span<const float> inputs, std::span<const float> labels,
                        Weights& grad_scratch) {
  for (float label : labels) {
    if (!(std::abs(label) <= 1.0f)) {
      throw ValidationError("steering labels must lie in [-1, 1]");
    }
  }
  const float loss = batch_loss_and_grad<float>(weights, inputs, labels, grad_scratch);
  optimizer.step(weights, grad_scratch);
  return loss;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  if (n > 1) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  else n_val = 0;
  std::vector<std::size_t> val(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
  idx.resize(n - n_val);
  return {std::move(idx), std::move(val)};
}

float predict(const Weights& weights, std::span<const std::uint8_t> image_hwc) {
  const auto input = preprocess<float>(image_hwc, weights.arch.input);
  return forward<float>(weights, input);
}

double evaluate_mse(const Weights& weights, std::span<const std::vector<std::uint8_t>> images,
                    std::span<const float> labels, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i : indices) {
    const double e = static_cast<double>(predict(weights, images[i])) - labels[i];
    sum += e * e;
  }
  return sum / static_cast<double>(indices.size());
}

TrainResult train(const ModelArch& arch, std::span<const std::vector<std::uint8_t>> images,
                  std::span<const float> labels, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  if (images.size() != labels.size()) {
    throw ValidationError("train: image and label counts differ");
  }
  if (images.size() < 2) {
    throw ValidationError("train: need at least two samples");
  }
  auto [train_idx, val_idx] = split_indices(images.size(), config.val_fraction, config.seed);

  TrainResult result;
  result.weights = init_weights<float>(arch, config.seed);
  Weights grads = Weights::zeros(arch);
  Optimizer<float> optimizer(config.optimizer, config.learning_rate);
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  const std::size_t in = static_cast<std::size_t>(arch.input_size());
  std::vector<float> batch_inputs;
  std::vector<float> batch_labels;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(train_idx.size(), start + static_cast<std::size_t>(config.batch_size));
      batch_inputs.resize((end - start) * in);
      batch_labels.resize(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto x = preprocess<float>(images[train_idx[b]], arch.input);
        std::copy(x.begin(), x.end(), batch_inputs.begin() + static_cast<std::ptrdiff_t>((b - start) * in));
        batch_labels[b - start] = labels[train_idx[b]];
      }
      const float loss =
          backward_and_step(result.weights, optimizer, batch_inputs, batch_labels, grads);
      loss_sum += static_cast<double>(loss) * static_cast<double>(end - start);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = loss_sum / static_cast<double>(train_idx.size());
    stats.val_mse = evaluate_mse(result.weights, images, labels, val_idx);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (config.target_val_mse && stats.val_mse <= *config.target_val_mse) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

}  // namespace teacar::nn
