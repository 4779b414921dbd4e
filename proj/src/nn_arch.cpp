#include "teacar/nn/arch.hpp"

#include <string>

#include "teacar/error.hpp"

namespace teacar::nn {

std::int64_t LayerSpec::kernel_size() const {
  switch (kind) {
    case LayerKind::conv:
      return static_cast<std::int64_t>(conv.in_ch) * conv.out_ch * conv.kernel * conv.kernel;
    case LayerKind::fc:
      return static_cast<std::int64_t>(fc.in_features) * fc.out_features;
    default:
      return 0;
  }
}

std::int64_t LayerSpec::bias_size() const {
  switch (kind) {
    case LayerKind::conv: return conv.out_ch;
    case LayerKind::fc: return fc.out_features;
    default: return 0;
  }
}

std::int64_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::conv: return static_cast<std::int64_t>(conv.in_ch) * conv.kernel * conv.kernel;
    case LayerKind::fc: return fc.in_features;
    default: return 0;
  }
}

namespace {

// conv channels c0..c5, fully connected widths f1..f3.
ModelArch steering_cnn(std::string name, ArchId id, int c1, int c2, int c3, int c4, int c5, int f1,
                       int f2, int f3) {
  using L = LayerSpec;
  ModelArch a;
  a.name = std::move(name);
  a.id = id;
  a.input = Shape3{3, 144, 224};
  const int flat = c5 * 11 * 21;
  a.layers = {
      L::make_conv(3, c1, 5, 2),  L::make_relu(), L::make_conv(c1, c2, 5, 2), L::make_relu(),
      L::make_conv(c2, c3, 5, 2), L::make_relu(), L::make_conv(c3, c4, 3, 1), L::make_relu(),
      L::make_conv(c4, c5, 3, 1), L::make_relu(), L::make_flatten(),
      L::make_fc(flat, f1),       L::make_relu(), L::make_fc(f1, f2),        L::make_relu(),
      L::make_fc(f2, f3),         L::make_relu(), L::make_fc(f3, 1),         L::make_tanh(),
  };
  return a;
}

}  // namespace

ModelArch ModelArch::small() {
  return steering_cnn("small", ArchId::small, 24, 24, 36, 48, 48, 64, 32, 8);
}

ModelArch ModelArch::medium() {
  return steering_cnn("medium", ArchId::medium, 24, 36, 48, 64, 64, 100, 50, 10);
}

ModelArch ModelArch::large() {
  return steering_cnn("large", ArchId::large, 36, 48, 64, 96, 96, 200, 100, 20);
}

ModelArch ModelArch::by_name(std::string_view name) {
  if (name == "small") return small();
  if (name == "medium") return medium();
  if (name == "large") return large();
  throw ValidationError("unknown architecture '" + std::string(name) +
                        "' (expected small, medium or large)");
}

ModelArch ModelArch::by_id(ArchId id) {
  switch (id) {
    case ArchId::small: return small();
    case ArchId::medium: return medium();
    case ArchId::large: return large();
  }
  throw ValidationError("unknown architecture id");
}

std::string_view to_string(ArchId id) {
  switch (id) {
    case ArchId::small: return "small";
    case ArchId::medium: return "medium";
    case ArchId::large: return "large";
  }
  return "unknown";
}

std::vector<Shape> output_shapes(const ModelArch& arch) {
  std::vector<Shape> trace;
  Shape cur{arch.input.channels, arch.input.height, arch.input.width};
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3 || cur[0] != l.conv.in_ch) {
          throw ValidationError(where + "conv input channels do not match");
        }
        if (l.conv.kernel <= 0 || l.conv.stride <= 0 || cur[1] < l.conv.kernel ||
            cur[2] < l.conv.kernel) {
          throw ValidationError(where + "conv kernel does not fit the input");
        }
        cur = {l.conv.out_ch, conv_out_extent(cur[1], l.conv.kernel, l.conv.stride),
               conv_out_extent(cur[2], l.conv.kernel, l.conv.stride)};
        break;
      }
      case LayerKind::flatten: {
        int n = 1;
        for (int d : cur) n *= d;
        cur = {n};
        break;
      }
      case LayerKind::fc: {
        if (cur.size() != 1 || cur[0] != l.fc.in_features) {
          throw ValidationError(where + "fc input width does not match");
        }
        cur = {l.fc.out_features};
        break;
      }
      case LayerKind::relu:
      case LayerKind::tanh:
        break;
    }
    trace.push_back(cur);
  }
  return trace;
}

std::int64_t param_count(const ModelArch& arch) {
  std::int64_t total = 0;
  for (const auto& l : arch.layers) {
    total += l.kernel_size() + l.bias_size();
  }
  return total;
}

}  // namespace teacar::nn
