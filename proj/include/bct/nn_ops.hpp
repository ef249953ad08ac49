#pragma once

#include <cstddef>

#include "bct/tensor.hpp"

namespace bct {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Output extent of a sliding window; throws ConfigError unless
// (extent + 2*padding - window) is a non-negative multiple of stride.
std::size_t window_output_extent(std::size_t extent, std::size_t window, std::size_t stride, std::size_t padding,
                                 const char* what);

// Cross-correlation of input[N,C,H,W] with weight[C',C,KH,KW] plus bias[C'].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dGeometry geometry);

// Per-window maximum over input[N,C,H,W]. Gradient goes to the first maximal
// element of each window in row-major scan order.
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

// input[N,F] * weight[F',F]^T + bias[F'].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Softmax over the last axis, max-subtracted.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input);

}  // namespace bct
