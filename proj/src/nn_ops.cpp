#include "bct/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bct/error.hpp"

namespace bct {

std::size_t window_output_extent(std::size_t extent, std::size_t window, std::size_t stride, std::size_t padding,
                                 const char* what) {
  if (stride < 1) throw ConfigError(std::string(what) + ": stride must be >= 1");
  const std::size_t padded = extent + 2 * padding;
  if (window > padded) {
    throw ConfigError(std::string(what) + ": window " + std::to_string(window) + " exceeds padded extent " +
                      std::to_string(padded));
  }
  if ((padded - window) % stride != 0) {
    throw ConfigError(std::string(what) + ": extent " + std::to_string(extent) + " with window " +
                      std::to_string(window) + ", stride " + std::to_string(stride) + ", padding " +
                      std::to_string(padding) + " gives a non-integer output size");
  }
  return (padded - window) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t n, c, h, w;
  std::size_t oc, kh, kw;
  std::size_t oh, ow;
  std::size_t stride, pad;

  std::size_t k() const { return c * kh * kw; }
  std::size_t p() const { return oh * ow; }
};

// Unfolds one sample [C,H,W] into cols[C*KH*KW][OH*OW].
template <typename T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const std::size_t P = d.p();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        T* row = cols + ((c * d.kh + i) * d.kw + j) * P;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const long iy = static_cast<long>(oy * d.stride + i) - static_cast<long>(d.pad);
          T* dst = row + oy * d.ow;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill(dst, dst + d.ow, T(0));
            continue;
          }
          const T* src = x + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const long ix = static_cast<long>(ox * d.stride + j) - static_cast<long>(d.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters cols back into a [C,H,W] gradient.
template <typename T>
void col2im_add(const T* cols, const ConvDims& d, T* gx) {
  const std::size_t P = d.p();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const T* row = cols + ((c * d.kh + i) * d.kw + j) * P;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const long iy = static_cast<long>(oy * d.stride + i) - static_cast<long>(d.pad);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          T* dst = gx + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const long ix = static_cast<long>(ox * d.stride + j) - static_cast<long>(d.pad);
            if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ix] += row[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dGeometry geometry) {
  if (input.rank() != 4 || weight.rank() != 4 || bias.rank() != 1) {
    throw ConfigError("conv2d: expected input[N,C,H,W], weight[C',C,KH,KW], bias[C'], got " +
                      shape_str(input.shape()) + ", " + shape_str(weight.shape()) + ", " + shape_str(bias.shape()));
  }
  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.oc = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  d.stride = geometry.stride;
  d.pad = geometry.padding;
  if (weight.dim(1) != d.c) {
    throw ConfigError("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                      std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != d.oc) throw ConfigError("conv2d: bias length does not match output channels");
  d.oh = window_output_extent(d.h, d.kh, d.stride, d.pad, "conv2d");
  d.ow = window_output_extent(d.w, d.kw, d.stride, d.pad, "conv2d");

  const std::size_t K = d.k(), P = d.p();
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  const T* b = bias.data().data();
  std::vector<T> out(d.n * d.oc * P);
  std::vector<T> cols(K * P);
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(x + n * d.c * d.h * d.w, d, cols.data());
    for (std::size_t o = 0; o < d.oc; ++o) {
      T* row = out.data() + (n * d.oc + o) * P;
      std::fill(row, row + P, b[o]);
      for (std::size_t k = 0; k < K; ++k) {
        const T wv = wt[o * K + k];
        const T* crow = cols.data() + k * P;
        for (std::size_t p = 0; p < P; ++p) row[p] += wv * crow[p];
      }
    }
  }

  return make_result<T>({d.n, d.oc, d.oh, d.ow}, std::move(out), {input, weight, bias}, "conv2d",
                        [d](const detail::TensorImpl<T>& res, const auto& in) {
                          auto& ix = *in[0];
                          auto& iw = *in[1];
                          auto& ib = *in[2];
                          const std::size_t K = d.k(), P = d.p();
                          std::vector<T> cols(K * P);
                          std::vector<T> dcols;
                          if (ix.requires_grad) dcols.resize(K * P);
                          T* gw = iw.requires_grad ? detail::grad_buffer(iw).data() : nullptr;
                          T* gb = ib.requires_grad ? detail::grad_buffer(ib).data() : nullptr;
                          T* gx = ix.requires_grad ? detail::grad_buffer(ix).data() : nullptr;
                          const T* wt = iw.data.data();
                          for (std::size_t n = 0; n < d.n; ++n) {
                            const T* g = res.grad.data() + n * d.oc * P;
                            if (gb) {
                              for (std::size_t o = 0; o < d.oc; ++o) {
                                T acc = T(0);
                                for (std::size_t p = 0; p < P; ++p) acc += g[o * P + p];
                                gb[o] += acc;
                              }
                            }
                            if (gw) {
                              im2col(ix.data.data() + n * d.c * d.h * d.w, d, cols.data());
                              for (std::size_t o = 0; o < d.oc; ++o) {
                                const T* grow = g + o * P;
                                for (std::size_t k = 0; k < K; ++k) {
                                  const T* crow = cols.data() + k * P;
                                  T acc = T(0);
                                  for (std::size_t p = 0; p < P; ++p) acc += grow[p] * crow[p];
                                  gw[o * K + k] += acc;
                                }
                              }
                            }
                            if (gx) {
                              std::fill(dcols.begin(), dcols.end(), T(0));
                              for (std::size_t o = 0; o < d.oc; ++o) {
                                const T* grow = g + o * P;
                                for (std::size_t k = 0; k < K; ++k) {
                                  const T wv = wt[o * K + k];
                                  T* drow = dcols.data() + k * P;
                                  for (std::size_t p = 0; p < P; ++p) drow[p] += wv * grow[p];
                                }
                              }
                              col2im_add(dcols.data(), d, gx + n * d.c * d.h * d.w);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
  if (input.rank() != 4) throw ConfigError("maxpool2d: expected input[N,C,H,W], got " + shape_str(input.shape()));
  if (window < 1) throw ConfigError("maxpool2d: window must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = window_output_extent(h, window, stride, 0, "maxpool2d");
  const std::size_t ow = window_output_extent(w, window, stride, 0, "maxpool2d");
  const T* x = input.data().data();
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> picks(out.size());
  std::size_t slot = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++slot) {
        std::size_t best = base + (oy * stride) * w + ox * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oy * stride + i) * w + ox * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        picks[slot] = best;
        out[slot] = x[best];
      }
    }
  }
  return make_result<T>({n, c, oh, ow}, std::move(out), {input}, "maxpool2d",
                        [picks = std::move(picks)](const detail::TensorImpl<T>& res, const auto& in) {
                          auto& gx = detail::grad_buffer(*in[0]);
                          for (std::size_t s = 0; s < picks.size(); ++s) gx[picks[s]] += res.grad[s];
                        });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || input.dim(1) != weight.dim(1) ||
      bias.dim(0) != weight.dim(0)) {
    throw ConfigError("dense: shape mismatch input " + shape_str(input.shape()) + ", weight " +
                      shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t n = input.dim(0), f = input.dim(1), o = weight.dim(0);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  const T* b = bias.data().data();
  std::vector<T> out(n * o);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < o; ++j) {
      T acc = b[j];
      const T* xr = x + r * f;
      const T* wr = wt + j * f;
      for (std::size_t k = 0; k < f; ++k) acc += xr[k] * wr[k];
      out[r * o + j] = acc;
    }
  }
  return make_result<T>({n, o}, std::move(out), {input, weight, bias}, "dense",
                        [n, f, o](const detail::TensorImpl<T>& res, const auto& in) {
                          auto& ix = *in[0];
                          auto& iw = *in[1];
                          auto& ib = *in[2];
                          const T* g = res.grad.data();
                          if (ix.requires_grad) {
                            T* gx = detail::grad_buffer(ix).data();
                            for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t j = 0; j < o; ++j) {
                                const T gv = g[r * o + j];
                                const T* wr = iw.data.data() + j * f;
                                for (std::size_t k = 0; k < f; ++k) gx[r * f + k] += gv * wr[k];
                              }
                            }
                          }
                          if (iw.requires_grad) {
                            T* gw = detail::grad_buffer(iw).data();
                            for (std::size_t r = 0; r < n; ++r) {
                              const T* xr = ix.data.data() + r * f;
                              for (std::size_t j = 0; j < o; ++j) {
                                const T gv = g[r * o + j];
                                for (std::size_t k = 0; k < f; ++k) gw[j * f + k] += gv * xr[k];
                              }
                            }
                          }
                          if (ib.requires_grad) {
                            T* gb = detail::grad_buffer(ib).data();
                            for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t j = 0; j < o; ++j) gb[j] += g[r * o + j];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x[i]));
    } else {
      const T e = std::exp(x[i]);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(input.shape(), std::move(out), {input}, "sigmoid",
                        [](const detail::TensorImpl<T>& res, const auto& in) {
                          auto& gx = detail::grad_buffer(*in[0]);
                          for (std::size_t i = 0; i < res.grad.size(); ++i) {
                            const T s = res.data[i];
                            gx[i] += res.grad[i] * s * (T(1) - s);
                          }
                        });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return make_result<T>(input.shape(), std::move(out), {input}, "relu",
                        [](const detail::TensorImpl<T>& res, const auto& in) {
                          auto& ix = *in[0];
                          auto& gx = detail::grad_buffer(ix);
                          for (std::size_t i = 0; i < res.grad.size(); ++i) {
                            if (ix.data[i] > T(0)) gx[i] += res.grad[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input) {
  if (input.rank() < 1) throw ConfigError("softmax: needs at least one axis");
  const std::size_t cols = input.shape().back();
  const std::size_t rows = input.size() / cols;
  auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * cols;
    T* yr = out.data() + r * cols;
    const T top = *std::max_element(xr, xr + cols);
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - top);
      total += yr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= total;
  }
  return make_result<T>(input.shape(), std::move(out), {input}, "softmax",
                        [rows, cols](const detail::TensorImpl<T>& res, const auto& in) {
                          auto& gx = detail::grad_buffer(*in[0]);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* y = res.data.data() + r * cols;
                            const T* g = res.grad.data() + r * cols;
                            T dot = T(0);
                            for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
                            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[c] * (g[c] - dot);
                          }
                        });
}

#define BCT_INSTANTIATE_NN(T)                                                                                   \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,        \
                                    Conv2dGeometry);                                                            \
  template BasicTensor<T> maxpool2d<T>(const BasicTensor<T>&, std::size_t, std::size_t);                        \
  template BasicTensor<T> linear<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> softmax<T>(const BasicTensor<T>&);

BCT_INSTANTIATE_NN(float)
BCT_INSTANTIATE_NN(double)

}  // namespace bct
