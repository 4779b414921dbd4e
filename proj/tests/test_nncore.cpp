#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "teacar/error.hpp"
#include "teacar/nn/arch.hpp"
#include "teacar/nn/network.hpp"
#include "teacar/nn/train.hpp"
#include "teacar/nn/weights_io.hpp"

using namespace teacar;
using namespace teacar::nn;

namespace {

// Hand-tallied from the per-layer table: conv(in*out*k*k + out), fc(in*out + out).
std::int64_t tally(int c1, int c2, int c3, int c4, int c5, int f1, int f2, int f3) {
  auto conv = [](std::int64_t i, std::int64_t o, std::int64_t k) { return i * o * k * k + o; };
  auto fc = [](std::int64_t i, std::int64_t o) { return i * o + o; };
  return conv(3, c1, 5) + conv(c1, c2, 5) + conv(c2, c3, 5) + conv(c3, c4, 3) + conv(c4, c5, 3) +
         fc(static_cast<std::int64_t>(c5) * 11 * 21, f1) + fc(f1, f2) + fc(f2, f3) + fc(f3, 1);
}

BasicTensor<float> random_tensor(std::vector<int> shape, std::mt19937_64& rng) {
  BasicTensor<float> t(std::move(shape));
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : t.data) v = u(rng);
  return t;
}

std::vector<float> random_image(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::uint8_t> px(n);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng());
  return preprocess<float>(px, Shape3{3, 144, 224});
}

}  // namespace

TEST(Arch, ParameterCounts) {
  EXPECT_EQ(param_count(ModelArch::small()), 786'317);
  EXPECT_EQ(param_count(ModelArch::medium()), 1'615'419);
  EXPECT_EQ(param_count(ModelArch::large()), 4'718'821);
  EXPECT_EQ(param_count(ModelArch::small()), tally(24, 24, 36, 48, 48, 64, 32, 8));
  EXPECT_EQ(param_count(ModelArch::medium()), tally(24, 36, 48, 64, 64, 100, 50, 10));
  EXPECT_EQ(param_count(ModelArch::large()), tally(36, 48, 64, 96, 96, 200, 100, 20));
  EXPECT_EQ(Weights::zeros(ModelArch::small()).scalar_count(), 786'317);
}

TEST(Arch, ShapeChain) {
  const std::vector<std::pair<int, int>> spatial{{70, 110}, {33, 53}, {15, 25}, {13, 23}, {11, 21}};
  const std::vector<std::pair<ModelArch, int>> cases{
      {ModelArch::small(), 11'088}, {ModelArch::medium(), 14'784}, {ModelArch::large(), 22'176}};
  for (const auto& [arch, flat] : cases) {
    const auto shapes = output_shapes(arch);
    ASSERT_EQ(shapes.size(), arch.layers.size());
    std::size_t conv_i = 0;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
      if (arch.layers[i].kind == LayerKind::conv) {
        ASSERT_EQ(shapes[i].size(), 3u);
        EXPECT_EQ(shapes[i][1], spatial[conv_i].first) << arch.name << " conv " << conv_i;
        EXPECT_EQ(shapes[i][2], spatial[conv_i].second) << arch.name << " conv " << conv_i;
        ++conv_i;
      }
      if (arch.layers[i].kind == LayerKind::flatten) {
        EXPECT_EQ(shapes[i], Shape{flat});
      }
    }
    EXPECT_EQ(conv_i, 5u);
    EXPECT_EQ(shapes.back(), Shape{1});
  }
  EXPECT_EQ(conv_out_extent(144, 5, 2), (144 - 5) / 2 + 1);
}

TEST(Arch, InconsistentChainsRejected) {
  ModelArch a = ModelArch::small();
  a.layers[2].conv.in_ch = 7;
  EXPECT_THROW(output_shapes(a), ValidationError);
  ModelArch b = ModelArch::small();
  b.layers[11].fc.in_features = 100;
  EXPECT_THROW(output_shapes(b), ValidationError);
  ModelArch c;
  c.input = {1, 2, 2};
  c.layers = {LayerSpec::make_conv(1, 1, 3, 1)};
  EXPECT_THROW(output_shapes(c), ValidationError);
  EXPECT_THROW(ModelArch::by_name("huge"), ValidationError);
}

TEST(Conv, OutputShapeFirstLayer) {
  std::mt19937_64 rng(1);
  const auto in = random_tensor({3, 144, 224}, rng);
  const auto k = random_tensor({4, 3, 5, 5}, rng);
  const std::vector<float> bias(4, 0.0f);
  const auto out = conv2d_valid<float>(in, k, bias, 2);
  EXPECT_EQ(out.shape, (std::vector<int>{4, 70, 110}));
}

TEST(Conv, IdentityKernel) {
  std::mt19937_64 rng(2);
  const auto in = random_tensor({1, 5, 6}, rng);
  const BasicTensor<float> k({1, 1, 1, 1}, 1.0f);
  const std::vector<float> bias{0.0f};
  EXPECT_EQ(conv2d_valid<float>(in, k, bias, 1).data, in.data);
}

TEST(Conv, OnesSum) {
  const BasicTensor<float> in({1, 3, 3}, 1.0f);
  const BasicTensor<float> k({1, 1, 2, 2}, 1.0f);
  const std::vector<float> bias{0.0f};
  const auto out = conv2d_valid<float>(in, k, bias, 1);
  EXPECT_EQ(out.shape, (std::vector<int>{1, 2, 2}));
  for (float v : out.data) EXPECT_FLOAT_EQ(v, 4.0f);
  EXPECT_THROW(conv2d_valid<float>(in, BasicTensor<float>({1, 1, 4, 4}), bias, 1), ValidationError);
}

TEST(Forward, ZeroWeightsGiveZero) {
  const auto w = Weights::zeros(ModelArch::small());
  std::mt19937_64 rng(3);
  EXPECT_EQ(forward<float>(w, random_image(rng, 96'768)), 0.0f);
  EXPECT_THROW(forward<float>(w, std::vector<float>(10)), ValidationError);
}

TEST(Forward, MatchesNaiveConvolutionOnTenSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto w = init_weights<float>(ModelArch::small(), seed);
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<float> ub(-0.05f, 0.05f);
    w.for_each_param([&](std::size_t, bool is_bias, std::size_t, float& v) {
      if (is_bias) v = ub(rng);
    });
    // Shrink the last layer so tanh stays in its sensitive range.
    for (auto& v : w.layers[17].kernel) v *= 0.05f;
    const auto input = random_image(rng, 96'768);
    Activations<float> acts;
    const float got = forward<float>(w, input, &acts);
    const double want = oracle::naive_forward(w, std::vector<double>(input.begin(), input.end()));
    EXPECT_NEAR(got, want, 1e-5) << "seed " << seed;
    EXPECT_LT(std::abs(want), 0.99) << "seed " << seed;
  }
}

TEST(Forward, BatchLossMatchesSingleForwards) {
  ModelArch arch = oracle::tiny_arch();
  const auto w = init_weights<float>(arch, 9);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const std::size_t n = 5, in = static_cast<std::size_t>(arch.input_size());
  std::vector<float> inputs(n * in), labels(n);
  for (auto& v : inputs) v = u(rng);
  for (auto& v : labels) v = u(rng) - 0.5f;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float e = forward<float>(w, std::span<const float>(inputs).subspan(i * in, in)) - labels[i];
    sum += static_cast<double>(e) * e;
  }
  EXPECT_NEAR(batch_loss<float>(w, inputs, labels), sum / n, 1e-6);
}

TEST(Backward, GradientCheckTinyNet) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto check = oracle::gradient_check(seed);
    EXPECT_LT(check.max_param_rel_error, 1e-4) << "seed " << seed;
    EXPECT_LT(check.loss_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Backward, GradientCheckThroughReluAndStride) {
  // Double-precision check on a strided two-conv net with ReLU.
  ModelArch arch;
  arch.input = {2, 9, 9};
  arch.layers = {LayerSpec::make_conv(2, 3, 3, 2), LayerSpec::make_relu(),
                 LayerSpec::make_conv(3, 2, 2, 1), LayerSpec::make_relu(),
                 LayerSpec::make_flatten(),        LayerSpec::make_fc(2 * 3 * 3, 4),
                 LayerSpec::make_relu(),           LayerSpec::make_fc(4, 1),
                 LayerSpec::make_tanh()};
  auto w = init_weights<double>(arch, 77);
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  w.for_each_param([&](std::size_t, bool is_bias, std::size_t, double& v) {
    if (is_bias) v = 0.2 + 0.1 * u(rng);
  });
  std::vector<double> inputs(2 * 162), labels{0.3, -0.2};
  for (auto& v : inputs) v = u(rng);
  BasicWeights<double> g;
  batch_loss_and_grad<double>(w, inputs, labels, g);
  const double eps = 1e-6;
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    for (std::size_t j = 0; j < w.layers[li].kernel.size(); ++j) {
      double& p = w.layers[li].kernel[j];
      const double saved = p;
      p = saved + eps;
      const double up = batch_loss<double>(w, inputs, labels);
      p = saved - eps;
      const double down = batch_loss<double>(w, inputs, labels);
      p = saved;
      EXPECT_NEAR(g.layers[li].kernel[j], (up - down) / (2 * eps), 1e-6) << li << ":" << j;
    }
  }
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  const ModelArch arch = oracle::tiny_arch();
  Weights w = init_weights<float>(arch, 5);
  const Weights before = w;
  std::vector<float> inputs(4 * static_cast<std::size_t>(arch.input_size()), 0.5f);
  std::vector<float> labels{0.1f, -0.1f, 0.2f, 0.0f};
  Optimizer<float> sgd(OptimizerKind::sgd, 0.0);
  Weights scratch;
  const float loss = backward_and_step(w, sgd, inputs, labels, scratch);
  EXPECT_EQ(w, before);
  EXPECT_FLOAT_EQ(loss, batch_loss<float>(w, inputs, labels));
  std::vector<float> bad{2.0f, 0.0f, 0.0f, 0.0f};
  EXPECT_THROW(backward_and_step(w, sgd, inputs, bad, scratch), ValidationError);
}

TEST(Train, ConvergesOnSyntheticLinearSteering) {
  // A bright vertical stripe; the label is linear in its column.
  ModelArch arch;
  arch.name = "stripe";
  arch.input = {3, 12, 24};
  arch.layers = {LayerSpec::make_conv(3, 4, 3, 1), LayerSpec::make_relu(),
                 LayerSpec::make_conv(4, 4, 3, 2), LayerSpec::make_relu(),
                 LayerSpec::make_flatten(),        LayerSpec::make_fc(4 * 4 * 10, 16),
                 LayerSpec::make_relu(),           LayerSpec::make_fc(16, 1),
                 LayerSpec::make_tanh()};
  const std::size_t n = 50, in = static_cast<std::size_t>(arch.input_size());
  std::vector<float> inputs(n * in), labels(n);
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> col(0, 23);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = col(rng);
    labels[i] = 0.8f * (static_cast<float>(c) - 11.5f) / 11.5f;
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < 12; ++y) inputs[i * in + (ch * 12 + y) * 24 + c] = 1.0f;
    }
  }
  Weights w = init_weights<float>(arch, 32);
  Optimizer<float> adam(OptimizerKind::adam, 3e-3);
  Weights scratch;
  const float initial = batch_loss<float>(w, inputs, labels);
  for (int step = 0; step < 200; ++step) backward_and_step(w, adam, inputs, labels, scratch);
  const float final_loss = batch_loss<float>(w, inputs, labels);
  EXPECT_LT(final_loss, 0.1f * initial) << initial << " -> " << final_loss;
}

TEST(Train, SplitIndices) {
  const auto [train_idx, val_idx] = split_indices(100, 0.1, 3);
  EXPECT_EQ(train_idx.size(), 90u);
  EXPECT_EQ(val_idx.size(), 10u);
  std::vector<std::size_t> all(train_idx);
  all.insert(all.end(), val_idx.begin(), val_idx.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_indices(100, 0.1, 3), split_indices(100, 0.1, 3));
  EXPECT_EQ(split_indices(2, 0.01, 0).second.size(), 1u);
}

TEST(WeightsIo, RoundTripBitwise) {
  const auto w = init_weights<float>(ModelArch::small(), 42);
  const auto path = std::filesystem::temp_directory_path() / "teacar_test_small.teaw";
  save_weights(path, w);
  const auto back = load_weights(path, ArchId::small);
  std::filesystem::remove(path);
  EXPECT_EQ(back, w);
  EXPECT_EQ(encode_weights(back), encode_weights(w));
}

TEST(WeightsIo, Errors) {
  const auto bytes = encode_weights(Weights::zeros(ModelArch::small()));
  EXPECT_THROW(decode_weights(std::span(bytes).first(bytes.size() / 2)), FormatError);
  EXPECT_THROW(decode_weights(std::span(bytes).first(5)), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_weights(trailing), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_weights(magic), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_weights(version), FormatError);

  const auto medium = encode_weights(Weights::zeros(ModelArch::medium()));
  EXPECT_NO_THROW(decode_weights(medium));
  EXPECT_THROW(decode_weights(medium, ArchId::small), FormatError);
  EXPECT_THROW(load_weights("/nonexistent/teacar.teaw"), Error);
}
