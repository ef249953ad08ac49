#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bct/tensor.hpp"

namespace bct {

enum class LayerKind { conv2d, maxpool2d, flatten, dense, activation };
enum class Activation { sigmoid, relu, softmax };

const char* to_string(LayerKind kind);
const char* to_string(Activation act);

struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  // Parameter prefix, e.g. "conv1" or "backbone.conv1". Unused for
  // parameter-free layers.
  std::string name;

  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t window = 2;  // maxpool2d; shares `stride`

  std::size_t in_features = 0;
  std::size_t out_features = 0;

  Activation activation = Activation::relu;

  static LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                        std::size_t padding);
  static LayerSpec pool(std::size_t window, std::size_t stride);
  static LayerSpec flatten_layer();
  static LayerSpec dense(std::string name, std::size_t in, std::size_t out);
  static LayerSpec act(Activation a);
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Ordered layer stack with a registry of uniquely named trainable tensors.
// Weights use Glorot-uniform initialization from the seed (limit scaled by 4
// when the layer feeds a sigmoid), biases start at 0.
class Model {
 public:
  // `input_shape` is per-sample [C,H,W]. Throws ConfigError when consecutive
  // layer shapes do not line up.
  Model(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed);

  // batch[N,C,H,W] -> [N,classes]
  Tensor forward(const Tensor& batch) const;

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  // Throws ConfigError for unknown names.
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;
  bool has_parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  void zero_grad();
  // Deep copy; the clone shares no storage with this model.
  Model clone() const;
  // Copies parameter values from a model of identical layout.
  void copy_parameters_from(const Model& other);

 private:
  std::vector<LayerSpec> specs_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<NamedParam> params_;
  // Per layer, index of its weight in params_ (bias follows), or -1.
  std::vector<long> param_index_;
};

enum class Architecture { fig1, backbone };

const char* to_string(Architecture arch);

struct ModelConfig {
  Architecture arch = Architecture::fig1;
  std::size_t in_channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  // Conv channels per block; empty selects the architecture default
  // ([8,16,32] for fig1, [8,16,32,32] for backbone).
  std::vector<std::size_t> channels;
  std::size_t dense_width = 64;
  std::size_t num_classes = 2;
  std::size_t kernel = 3;
  std::size_t conv_stride = 1;
  std::size_t padding = 1;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  std::size_t convs_per_block = 1;  // backbone only
};

std::vector<std::size_t> resolved_channels(const ModelConfig& config);

// conv(sigmoid)+maxpool per block, flatten, dense(relu), dense(classes),
// softmax. Parameters: conv1..convK, dense1, dense2.
Model build_fig1_cnn(const ModelConfig& config, std::uint64_t seed);

// VGG-style stack: blocks of conv(relu) x convs_per_block + maxpool under
// backbone.*, and a dense(relu) -> dense(classes) -> softmax classifier under
// head.*.
Model build_backbone(const ModelConfig& config, std::uint64_t seed);

Model build_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace bct
