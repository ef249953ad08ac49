#include "bct/layers.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "bct/error.hpp"
#include "bct/nn_ops.hpp"
#include "bct/rng.hpp"

namespace bct {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::activation: return "activation";
  }
  return "?";
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

const char* to_string(Architecture arch) { return arch == Architecture::fig1 ? "fig1" : "backbone"; }

LayerSpec LayerSpec::conv(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.name = std::move(name);
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::pool(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  s.window = window;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::flatten_layer() { return LayerSpec{}; }

LayerSpec LayerSpec::dense(std::string name, std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = std::move(name);
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::act(Activation a) {
  LayerSpec s;
  s.kind = LayerKind::activation;
  s.activation = a;
  return s;
}

namespace {

void require_positive(std::size_t v, const std::string& what) {
  if (v == 0) throw ConfigError(what + " must be positive");
}

// Per-sample output shape of one layer.
Shape propagate(const LayerSpec& s, const Shape& in, std::size_t index) {
  const std::string where = "layer " + std::to_string(index) + " (" + to_string(s.kind) + ")";
  switch (s.kind) {
    case LayerKind::conv2d: {
      require_positive(s.in_channels, where + " in_channels");
      require_positive(s.out_channels, where + " out_channels");
      require_positive(s.kernel_h, where + " kernel height");
      require_positive(s.kernel_w, where + " kernel width");
      require_positive(s.stride, where + " stride");
      if (in.size() != 3 || in[0] != s.in_channels) {
        throw ConfigError(where + " expects [" + std::to_string(s.in_channels) + ",H,W] input, got " + shape_str(in));
      }
      return {s.out_channels, window_output_extent(in[1], s.kernel_h, s.stride, s.padding, where.c_str()),
              window_output_extent(in[2], s.kernel_w, s.stride, s.padding, where.c_str())};
    }
    case LayerKind::maxpool2d: {
      require_positive(s.window, where + " window");
      require_positive(s.stride, where + " stride");
      if (in.size() != 3) throw ConfigError(where + " expects [C,H,W] input, got " + shape_str(in));
      return {in[0], window_output_extent(in[1], s.window, s.stride, 0, where.c_str()),
              window_output_extent(in[2], s.window, s.stride, 0, where.c_str())};
    }
    case LayerKind::flatten: return {numel(in)};
    case LayerKind::dense: {
      require_positive(s.in_features, where + " in_features");
      require_positive(s.out_features, where + " out_features");
      if (in.size() != 1 || in[0] != s.in_features) {
        throw ConfigError(where + " expects [" + std::to_string(s.in_features) + "] input, got " + shape_str(in));
      }
      return {s.out_features};
    }
    case LayerKind::activation: return in;
  }
  return in;
}

// gain 4 for layers feeding a sigmoid, 1 otherwise
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, double gain, SplitMix64& rng) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<float> values(numel(shape));
  for (auto& v : values) v = static_cast<float>(rng.uniform(-limit, limit));
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

Model::Model(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
  if (specs_.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t d : input_shape_) require_positive(d, "input dimension");
  SplitMix64 rng(seed);
  std::set<std::string> names;
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    shape = propagate(s, shape, i);
    if (s.kind != LayerKind::conv2d && s.kind != LayerKind::dense) {
      param_index_.push_back(-1);
      continue;
    }
    if (s.name.empty()) throw ConfigError("layer " + std::to_string(i) + " needs a parameter name");
    for (const char* suffix : {".weight", ".bias"}) {
      if (!names.insert(s.name + suffix).second) throw ConfigError("duplicate parameter name " + s.name + suffix);
    }
    param_index_.push_back(static_cast<long>(params_.size()));
    const bool feeds_sigmoid = i + 1 < specs_.size() && specs_[i + 1].kind == LayerKind::activation &&
                               specs_[i + 1].activation == Activation::sigmoid;
    const double gain = feeds_sigmoid ? 4.0 : 1.0;
    if (s.kind == LayerKind::conv2d) {
      const std::size_t area = s.kernel_h * s.kernel_w;
      params_.push_back({s.name + ".weight",
                         glorot_uniform({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w},
                                        s.in_channels * area, s.out_channels * area, gain, rng)});
      params_.push_back({s.name + ".bias", Tensor::zeros({s.out_channels}, true)});
    } else {
      params_.push_back({s.name + ".weight",
                         glorot_uniform({s.out_features, s.in_features}, s.in_features, s.out_features, gain, rng)});
      params_.push_back({s.name + ".bias", Tensor::zeros({s.out_features}, true)});
    }
  }
  output_shape_ = shape;
}

Tensor Model::forward(const Tensor& batch) const {
  if (batch.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1)) {
    throw ConfigError("model expects batches of [N," + shape_str(input_shape_).substr(1) + ", got " +
                      shape_str(batch.shape()));
  }
  Tensor x = batch;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    switch (s.kind) {
      case LayerKind::conv2d: {
        const auto& w = params_[static_cast<std::size_t>(param_index_[i])].tensor;
        const auto& b = params_[static_cast<std::size_t>(param_index_[i]) + 1].tensor;
        x = conv2d(x, w, b, {s.stride, s.padding});
        break;
      }
      case LayerKind::maxpool2d: x = maxpool2d(x, s.window, s.stride); break;
      case LayerKind::flatten: x = reshape(x, {x.dim(0), x.size() / x.dim(0)}); break;
      case LayerKind::dense: {
        const auto& w = params_[static_cast<std::size_t>(param_index_[i])].tensor;
        const auto& b = params_[static_cast<std::size_t>(param_index_[i]) + 1].tensor;
        x = linear(x, w, b);
        break;
      }
      case LayerKind::activation:
        switch (s.activation) {
          case Activation::sigmoid: x = sigmoid(x); break;
          case Activation::relu: x = relu(x); break;
          case Activation::softmax: x = softmax(x); break;
        }
        break;
    }
  }
  return x;
}

Tensor& Model::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("unknown parameter " + name);
}

const Tensor& Model::parameter(const std::string& name) const {
  return const_cast<Model*>(this)->parameter(name);
}

bool Model::has_parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Model Model::clone() const {
  Model copy = *this;
  for (auto& p : copy.params_) {
    Tensor fresh = p.tensor.detach();
    fresh.set_requires_grad(p.tensor.requires_grad());
    p.tensor = fresh;
  }
  return copy;
}

void Model::copy_parameters_from(const Model& other) {
  if (other.params_.size() != params_.size()) throw ConfigError("copy_parameters_from: layout mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw ConfigError("copy_parameters_from: parameter " + src.name + " does not match " + dst.name);
    }
    auto out = dst.tensor.mutable_data();
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), out.begin());
  }
}

std::vector<std::size_t> resolved_channels(const ModelConfig& config) {
  if (!config.channels.empty()) return config.channels;
  if (config.arch == Architecture::fig1) return {8, 16, 32};
  return {8, 16, 32, 32};
}

namespace {

Model assemble(std::vector<LayerSpec> specs, const ModelConfig& config, std::uint64_t seed) {
  return Model(std::move(specs), {config.in_channels, config.height, config.width}, seed);
}

// Per-sample shape after the conv/pool blocks; throws naming the offending
// layer when a dimension does not divide.
Shape conv_stack_output(const std::vector<LayerSpec>& specs, const ModelConfig& config) {
  Shape shape{config.in_channels, config.height, config.width};
  for (std::size_t i = 0; i < specs.size(); ++i) shape = propagate(specs[i], shape, i);
  return shape;
}

}  // namespace

Model build_fig1_cnn(const ModelConfig& config, std::uint64_t seed) {
  const auto channels = resolved_channels(config);
  if (config.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  std::vector<LayerSpec> specs;
  std::size_t in = config.in_channels;
  for (std::size_t b = 0; b < channels.size(); ++b) {
    specs.push_back(LayerSpec::conv("conv" + std::to_string(b + 1), in, channels[b], config.kernel,
                                    config.conv_stride, config.padding));
    specs.push_back(LayerSpec::act(Activation::sigmoid));
    specs.push_back(LayerSpec::pool(config.pool_window, config.pool_stride));
    in = channels[b];
  }
  specs.push_back(LayerSpec::flatten_layer());
  const std::size_t features = numel(conv_stack_output(specs, config));
  specs.push_back(LayerSpec::dense("dense1", features, config.dense_width));
  specs.push_back(LayerSpec::act(Activation::relu));
  specs.push_back(LayerSpec::dense("dense2", config.dense_width, config.num_classes));
  specs.push_back(LayerSpec::act(Activation::softmax));
  return assemble(std::move(specs), config, seed);
}

Model build_backbone(const ModelConfig& config, std::uint64_t seed) {
  const auto channels = resolved_channels(config);
  if (config.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (config.convs_per_block < 1) throw ConfigError("convs_per_block must be >= 1");
  std::vector<LayerSpec> specs;
  std::size_t in = config.in_channels;
  std::size_t index = 1;
  for (std::size_t out : channels) {
    for (std::size_t r = 0; r < config.convs_per_block; ++r) {
      specs.push_back(LayerSpec::conv("backbone.conv" + std::to_string(index++), in, out, config.kernel,
                                      config.conv_stride, config.padding));
      specs.push_back(LayerSpec::act(Activation::relu));
      in = out;
    }
    specs.push_back(LayerSpec::pool(config.pool_window, config.pool_stride));
  }
  specs.push_back(LayerSpec::flatten_layer());
  const std::size_t features = numel(conv_stack_output(specs, config));
  specs.push_back(LayerSpec::dense("head.dense1", features, config.dense_width));
  specs.push_back(LayerSpec::act(Activation::relu));
  specs.push_back(LayerSpec::dense("head.dense2", config.dense_width, config.num_classes));
  specs.push_back(LayerSpec::act(Activation::softmax));
  return assemble(std::move(specs), config, seed);
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  return config.arch == Architecture::fig1 ? build_fig1_cnn(config, seed) : build_backbone(config, seed);
}

}  // namespace bct
