#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace teacar::nn {

enum class LayerKind : std::uint8_t { conv, relu, fc, tanh, flatten };

/// Valid (unpadded) convolution.
struct ConvSpec {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
};

struct FcSpec {
  int in_features = 0;
  int out_features = 0;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  ConvSpec conv;
  FcSpec fc;

  static LayerSpec make_conv(int in_ch, int out_ch, int kernel, int stride) {
    return {LayerKind::conv, {in_ch, out_ch, kernel, stride}, {}};
  }
  static LayerSpec make_fc(int in_features, int out_features) {
    return {LayerKind::fc, {}, {in_features, out_features}};
  }
  static LayerSpec make_relu() { return {LayerKind::relu, {}, {}}; }
  static LayerSpec make_tanh() { return {LayerKind::tanh, {}, {}}; }
  static LayerSpec make_flatten() { return {LayerKind::flatten, {}, {}}; }

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::fc; }
  std::int64_t kernel_size() const;
  std::int64_t bias_size() const;
  /// Fan-in used for weight initialization.
  std::int64_t fan_in() const;
};

/// Identifier stored in weight files.
enum class ArchId : std::uint8_t { small = 0, medium = 1, large = 2 };

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Activation shape after a layer: rank 3 (C,H,W) before flattening, rank 1 after.
using Shape = std::vector<int>;

struct ModelArch {
  std::string name;
  std::optional<ArchId> id;
  Shape3 input{3, 144, 224};
  std::vector<LayerSpec> layers;

  /// The three steering controllers: five conv layers (5x5 stride 2 three
  /// times, then 3x3 stride 1 twice), flatten, four fully connected layers,
  /// ReLU between all layers and tanh on the single output.
  static ModelArch small();
  static ModelArch medium();
  static ModelArch large();
  /// "small" | "medium" | "large"; ValidationError otherwise.
  static ModelArch by_name(std::string_view name);
  static ModelArch by_id(ArchId id);

  std::int64_t input_size() const {
    return static_cast<std::int64_t>(input.channels) * input.height * input.width;
  }
};

std::string_view to_string(ArchId id);

/// Shape after each layer, in order. ValidationError if the chain is
/// inconsistent (channel mismatch, kernel larger than input, fc width).
std::vector<Shape> output_shapes(const ModelArch& arch);

/// Sum of kernel and bias scalars over all layers.
std::int64_t param_count(const ModelArch& arch);

/// Valid-convolution output extent: floor((n - k) / stride) + 1.
constexpr int conv_out_extent(int n, int kernel, int stride) { return (n - kernel) / stride + 1; }

}  // namespace teacar::nn
