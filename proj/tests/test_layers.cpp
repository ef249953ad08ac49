#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bct/error.hpp"
#include "bct/layers.hpp"
#include "support.hpp"

using namespace bct;

namespace {

ModelConfig small(Architecture arch, std::size_t side = 16) {
  ModelConfig c;
  c.arch = arch;
  c.height = c.width = side;
  return c;
}

std::size_t count_by_shapes(const Model& m) {
  std::size_t total = 0;
  for (const auto& p : m.parameters()) total += numel(p.tensor.shape());
  return total;
}

}  // namespace

TEST(Fig1, DefaultShapes) {
  ModelConfig c;  // 64x64x3, [8,16,32], dense 64
  const Model m = build_fig1_cnn(c, 1);
  EXPECT_EQ(m.input_shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(m.output_shape(), (Shape{2}));
  const Tensor out = m.forward(Tensor::zeros({2, 3, 64, 64}));
  EXPECT_EQ(out.shape(), (Shape{2, 2}));
  std::vector<std::string> names;
  for (const auto& p : m.parameters()) names.push_back(p.name);
  const std::vector<std::string> expected = {"conv1.weight", "conv1.bias",  "conv2.weight", "conv2.bias",
                                             "conv3.weight", "conv3.bias",  "dense1.weight", "dense1.bias",
                                             "dense2.weight", "dense2.bias"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(m.parameter("dense1.weight").shape(), (Shape{64, 32 * 8 * 8}));
}

TEST(Fig1, LayerOrder) {
  const Model m = build_fig1_cnn(small(Architecture::fig1), 1);
  std::vector<std::string> kinds;
  for (const auto& s : m.specs()) {
    kinds.push_back(s.kind == LayerKind::activation ? to_string(s.activation) : to_string(s.kind));
  }
  const std::vector<std::string> expected = {"conv2d", "sigmoid", "maxpool2d", "conv2d", "sigmoid", "maxpool2d",
                                             "conv2d", "sigmoid", "maxpool2d", "flatten", "dense",  "relu",
                                             "dense",  "softmax"};
  EXPECT_EQ(kinds, expected);
}

TEST(Fig1, SameSeedSameParameters) {
  const Model a = build_fig1_cnn(small(Architecture::fig1), 7);
  const Model b = build_fig1_cnn(small(Architecture::fig1), 7);
  const Model c = build_fig1_cnn(small(Architecture::fig1), 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto x = a.parameters()[i].tensor.data(), y = b.parameters()[i].tensor.data(),
               z = c.parameters()[i].tensor.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    if (!std::equal(x.begin(), x.end(), z.begin())) differs = true;
  }
  EXPECT_TRUE(differs);
}

TEST(Fig1, OddInputRejected) {
  ModelConfig c;
  c.height = c.width = 65;
  EXPECT_THROW(build_fig1_cnn(c, 1), ConfigError);
}

TEST(Init, GlorotLimitsAndZeroBias) {
  const Model m = build_fig1_cnn(small(Architecture::fig1), 3);
  for (const auto& p : m.parameters()) {
    const auto d = p.tensor.data();
    if (p.name.ends_with(".bias")) {
      for (float v : d) EXPECT_EQ(v, 0.0f);
      continue;
    }
    const auto& s = p.tensor.shape();
    const double receptive = s.size() == 4 ? static_cast<double>(s[2] * s[3]) : 1.0;
    const double fan_in = static_cast<double>(s[1]) * receptive, fan_out = static_cast<double>(s[0]) * receptive;
    // conv layers feed a sigmoid in this architecture
    const double gain = p.name.starts_with("conv") ? 4.0 : 1.0;
    const double limit = gain * std::sqrt(6.0 / (fan_in + fan_out));
    double peak = 0.0;
    for (float v : d) peak = std::max(peak, std::abs(static_cast<double>(v)));
    EXPECT_LE(peak, limit * (1 + 1e-6)) << p.name;
    EXPECT_GT(peak, 0.5 * limit) << p.name;
  }
}

TEST(Backbone, NamesPartitionIntoBackboneAndHead) {
  const Model m = build_backbone(small(Architecture::backbone, 32), 1);
  std::size_t backbone = 0, head = 0;
  for (const auto& p : m.parameters()) {
    if (p.name.starts_with("backbone.")) {
      ++backbone;
    } else if (p.name.starts_with("head.")) {
      ++head;
    } else {
      ADD_FAILURE() << p.name;
    }
  }
  EXPECT_EQ(backbone, 8u);  // four conv blocks
  EXPECT_EQ(head, 4u);      // two dense layers
}

TEST(Backbone, ForwardOnZerosIsDistribution) {
  const Model m = build_backbone(small(Architecture::backbone, 32), 2);
  const Tensor out = m.forward(Tensor::zeros({3, 3, 32, 32}));
  ASSERT_EQ(out.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(std::isfinite(out.data()[2 * i]));
    EXPECT_NEAR(out.data()[2 * i] + out.data()[2 * i + 1], 1.0, 1e-6);
  }
}

TEST(Backbone, ParameterCountFromShapes) {
  ModelConfig c = small(Architecture::backbone, 32);
  const Model m = build_backbone(c, 1);
  // channels 8,16,32,32 with 3x3 kernels, 32->2x2 after four pools
  const std::size_t conv = (3 * 9 * 8 + 8) + (8 * 9 * 16 + 16) + (16 * 9 * 32 + 32) + (32 * 9 * 32 + 32);
  const std::size_t dense = (32 * 2 * 2 * 64 + 64) + (64 * 2 + 2);
  EXPECT_EQ(m.parameter_count(), conv + dense);
  EXPECT_EQ(count_by_shapes(m), conv + dense);
  EXPECT_EQ(build_backbone(c, 9).parameter_count(), conv + dense);
}

TEST(Backbone, ConvsPerBlock) {
  ModelConfig c = small(Architecture::backbone, 32);
  c.convs_per_block = 2;
  const Model m = build_backbone(c, 1);
  EXPECT_TRUE(m.has_parameter("backbone.conv1_2.weight") || m.parameters().size() == 20u);
  EXPECT_EQ(m.parameters().size(), 20u);
}

TEST(Model, ForwardIsDeterministic) {
  const Model m = build_fig1_cnn(small(Architecture::fig1), 4);
  SplitMix64 rng(1);
  const Tensor x = bct::testing::random32({4, 3, 16, 16}, rng, 0.0, 1.0);
  const Tensor a = m.forward(x), b = m.forward(x);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Model, CloneSharesNothing) {
  Model m = build_fig1_cnn(small(Architecture::fig1), 4);
  Model c = m.clone();
  c.parameter("dense2.bias").mutable_data()[0] = 42.0f;
  EXPECT_EQ(m.parameter("dense2.bias").data()[0], 0.0f);
  m.copy_parameters_from(c);
  EXPECT_EQ(m.parameter("dense2.bias").data()[0], 42.0f);
}

TEST(Model, UnknownParameterAndBadInput) {
  Model m = build_fig1_cnn(small(Architecture::fig1), 4);
  EXPECT_THROW(m.parameter("nope"), ConfigError);
  EXPECT_THROW(m.forward(Tensor::zeros({1, 3, 8, 8})), ConfigError);
}

TEST(Model, ShapeMismatchBetweenLayers) {
  std::vector<LayerSpec> specs = {LayerSpec::flatten_layer(), LayerSpec::dense("d", 10, 2)};
  EXPECT_THROW(Model(specs, {1, 3, 3}, 1), ConfigError);
}

TEST(Model, WholeModelGradientMatchesFiniteDifferences) {
  // tiny fig1-shaped stack in double precision through the layer ops
  SplitMix64 rng(21);
  const Tensor64 x = bct::testing::random64({2, 1, 4, 4}, rng, 0.0, 1.0);
  const auto targets = bct::testing::one_hot<double>({0, 1}, 2);
  const auto r = bct::testing::gradcheck(
      [&](const std::vector<Tensor64>& p) {
        Tensor64 h = maxpool2d(sigmoid(conv2d(x, p[0], p[1], {1, 1})), 2, 2);
        h = reshape(h, Shape{2, 2 * 2 * 2});
        h = relu(linear(h, p[2], p[3]));
        return focal_loss(softmax(linear(h, p[4], p[5])), targets, 2.0);
      },
      {bct::testing::random64({2, 1, 3, 3}, rng), bct::testing::random64({2}, rng),
       bct::testing::random64({4, 8}, rng), bct::testing::random64({4}, rng, 0.1, 0.5),
       bct::testing::random64({2, 4}, rng), bct::testing::random64({2}, rng)});
  EXPECT_TRUE(r.ok()) << r.first_failure;
}
