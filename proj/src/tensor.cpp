#include "bct/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "bct/error.hpp"

namespace bct {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ConfigError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
    case BinaryOp::pow: return "pow";
    case BinaryOp::max: return "max";
  }
  return "?";
}

template <typename T>
T apply(BinaryOp op, T x, T y) {
  switch (op) {
    case BinaryOp::add: return x + y;
    case BinaryOp::sub: return x - y;
    case BinaryOp::mul: return x * y;
    case BinaryOp::div:
      if (y == T(0)) throw NumericError("div: division by zero");
      return x / y;
    case BinaryOp::pow: return std::pow(x, y);
    case BinaryOp::max: return x >= y ? x : y;
  }
  return T(0);
}

// d(x^y)/dx, with the conventions 0*x^-1 = 0 and d/dx x^y at x=0 for y>1 = 0.
template <typename T>
T pow_dx(T x, T y) {
  if (y == T(0)) return T(0);
  if (y == T(1)) return T(1);
  if (x == T(0)) {
    if (y > T(1)) return T(0);
    throw NumericError("pow: gradient undefined at 0 for exponent < 1");
  }
  return y * std::pow(x, y - T(1));
}

// Partial derivatives of op at (x, y) given output z.
template <typename T>
std::pair<T, T> partials(BinaryOp op, T x, T y, T z) {
  switch (op) {
    case BinaryOp::add: return {T(1), T(1)};
    case BinaryOp::sub: return {T(1), T(-1)};
    case BinaryOp::mul: return {y, x};
    case BinaryOp::div: return {T(1) / y, -x / (y * y)};
    case BinaryOp::pow: return {pow_dx(x, y), x > T(0) ? z * std::log(x) : T(0)};
    case BinaryOp::max: return x >= y ? std::pair<T, T>{T(1), T(0)} : std::pair<T, T>{T(0), T(1)};
  }
  return {T(0), T(0)};
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
BasicTensor<T>::BasicTensor() : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  impl_->data.assign(1, T(0));
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  check_shape(shape);
  if (numel(shape) != data.size()) {
    throw ConfigError("tensor shape " + shape_str(shape) + " needs " + std::to_string(numel(shape)) +
                      " values, got " + std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::size_t n = numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) throw ConfigError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[axis];
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!is_leaf()) throw ConfigError("cannot mutate the result of a recorded op");
  return impl_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw ConfigError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (size() != 1) throw ConfigError("backward() needs a scalar, got shape " + shape_str(shape()));
  if (!requires_grad()) throw ConfigError("backward() on a tensor that does not require grad");
  detail::grad_buffer(*impl_)[0] += T(1);
  Tape<T>::build(*this).run_backward();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), impl_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_impl(detail::ImplPtr<T> impl) {
  BasicTensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
Tape<T> Tape<T>::build(const BasicTensor<T>& root) {
  Tape tape;
  if (!root.impl()->grad_fn) return tape;
  std::unordered_set<const detail::TensorImpl<T>*> visited;
  // Iterative post-order DFS: (node, next input to visit).
  std::vector<std::pair<detail::ImplPtr<T>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->grad_fn->inputs;
    if (next < inputs.size()) {
      const auto& in = inputs[next++];
      if (in->grad_fn && visited.insert(in.get()).second) stack.emplace_back(in, 0);
      continue;
    }
    tape.nodes_.push_back(impl);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
void Tape<T>::run_backward() const {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const auto& impl = *it;
    if (impl->grad.empty()) continue;
    impl->grad_fn->backward(*impl, impl->grad_fn->inputs);
  }
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::vector<BasicTensor<T>> inputs, const char* op,
                           detail::BackwardFn<T> backward) {
  BasicTensor<T> out(std::move(shape), std::move(data));
  bool record = grad_enabled() && backward &&
                std::any_of(inputs.begin(), inputs.end(), [](const auto& t) { return t.requires_grad(); });
  if (record) {
    auto node = std::make_shared<detail::Node<T>>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    out.impl()->requires_grad = true;
    out.impl()->grad_fn = std::move(node);
  }
  return out;
}

template <typename T>
BasicTensor<T> elementwise(BinaryOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const bool broadcast = b.size() == 1 && a.shape() != b.shape();
  if (!broadcast && a.shape() != b.shape()) {
    throw ConfigError(std::string(binary_name(op)) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  auto x = a.data();
  auto y = b.data();
  std::vector<T> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = apply(op, x[i], y[broadcast ? 0 : i]);
  check_finite<T>(z, binary_name(op));
  return make_result<T>(a.shape(), std::move(z), {a, b}, binary_name(op),
                        [op, broadcast](const detail::TensorImpl<T>& out, const auto& in) {
                          auto& ia = *in[0];
                          auto& ib = *in[1];
                          std::vector<T>* ga = ia.requires_grad ? &detail::grad_buffer(ia) : nullptr;
                          std::vector<T>* gb = ib.requires_grad ? &detail::grad_buffer(ib) : nullptr;
                          for (std::size_t i = 0; i < out.data.size(); ++i) {
                            std::size_t j = broadcast ? 0 : i;
                            auto [dx, dy] = partials(op, ia.data[i], ib.data[j], out.data[i]);
                            if (ga) (*ga)[i] += out.grad[i] * dx;
                            if (gb) (*gb)[j] += out.grad[i] * dy;
                          }
                        });
}

template <typename T>
BasicTensor<T> elementwise(BinaryOp op, const BasicTensor<T>& a, T b) {
  auto x = a.data();
  std::vector<T> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = apply(op, x[i], b);
  check_finite<T>(z, binary_name(op));
  return make_result<T>(a.shape(), std::move(z), {a}, binary_name(op),
                        [op, b](const detail::TensorImpl<T>& out, const auto& in) {
                          auto& ia = *in[0];
                          auto& ga = detail::grad_buffer(ia);
                          for (std::size_t i = 0; i < out.data.size(); ++i) {
                            ga[i] += out.grad[i] * partials(op, ia.data[i], b, out.data[i]).first;
                          }
                        });
}

template <typename T>
BasicTensor<T> elementwise(UnaryOp op, const BasicTensor<T>& a) {
  auto x = a.data();
  std::vector<T> z(x.size());
  const char* name = op == UnaryOp::log ? "log" : op == UnaryOp::exp ? "exp" : "neg";
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (op) {
      case UnaryOp::log:
        if (!(x[i] > T(0))) throw NumericError("log: non-positive argument");
        z[i] = std::log(x[i]);
        break;
      case UnaryOp::exp: z[i] = std::exp(x[i]); break;
      case UnaryOp::neg: z[i] = -x[i]; break;
    }
  }
  check_finite<T>(z, name);
  return make_result<T>(a.shape(), std::move(z), {a}, name, [op](const detail::TensorImpl<T>& out, const auto& in) {
    auto& ia = *in[0];
    auto& ga = detail::grad_buffer(ia);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      switch (op) {
        case UnaryOp::log: ga[i] += out.grad[i] / ia.data[i]; break;
        case UnaryOp::exp: ga[i] += out.grad[i] * out.data[i]; break;
        case UnaryOp::neg: ga[i] -= out.grad[i]; break;
      }
    }
  });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto x = a.data();
  auto y = b.data();
  std::vector<T> z(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* row = z.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = x[i * k + p];
      const T* brow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  check_finite<T>(z, "matmul");
  return make_result<T>({m, n}, std::move(z), {a, b}, "matmul",
                        [m, k, n](const detail::TensorImpl<T>& out, const auto& in) {
                          auto& ia = *in[0];
                          auto& ib = *in[1];
                          const T* g = out.grad.data();
                          if (ia.requires_grad) {
                            auto& ga = detail::grad_buffer(ia);
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                T acc = T(0);
                                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * ib.data[p * n + j];
                                ga[i * k + p] += acc;
                              }
                            }
                          }
                          if (ib.requires_grad) {
                            auto& gb = detail::grad_buffer(ib);
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                const T av = ia.data[i * k + p];
                                for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& a, std::optional<std::size_t> axis) {
  std::size_t outer = 1, len = a.size(), inner = 1;
  Shape out_shape;
  if (axis) {
    if (*axis >= a.rank()) {
      throw ConfigError("reduce: invalid axis " + std::to_string(*axis) + " for shape " + shape_str(a.shape()));
    }
    const Shape& s = a.shape();
    for (std::size_t d = 0; d < *axis; ++d) outer *= s[d];
    len = s[*axis];
    for (std::size_t d = *axis + 1; d < s.size(); ++d) inner *= s[d];
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != *axis) out_shape.push_back(s[d]);
    }
  }
  auto x = a.data();
  std::vector<T> z(outer * inner);
  // Index of the selected element per output slot (max / argmax).
  std::vector<std::size_t> picks;
  if (op == ReduceOp::max || op == ReduceOp::argmax) picks.resize(z.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t slot = o * inner + i;
      const std::size_t base = o * len * inner + i;
      if (op == ReduceOp::sum || op == ReduceOp::mean) {
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) acc += static_cast<double>(x[base + l * inner]);
        if (op == ReduceOp::mean) acc /= static_cast<double>(len);
        z[slot] = static_cast<T>(acc);
      } else {
        std::size_t best = 0;
        for (std::size_t l = 1; l < len; ++l) {
          if (x[base + l * inner] > x[base + best * inner]) best = l;
        }
        picks[slot] = base + best * inner;
        z[slot] = op == ReduceOp::max ? x[picks[slot]] : static_cast<T>(best);
      }
    }
  }
  if (op == ReduceOp::argmax) return BasicTensor<T>(std::move(out_shape), std::move(z));
  const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : "max";
  return make_result<T>(std::move(out_shape), std::move(z), {a}, name,
                        [op, outer, len, inner, picks = std::move(picks)](const detail::TensorImpl<T>& out,
                                                                          const auto& in) {
                          auto& ga = detail::grad_buffer(*in[0]);
                          if (op == ReduceOp::max) {
                            for (std::size_t s = 0; s < picks.size(); ++s) ga[picks[s]] += out.grad[s];
                            return;
                          }
                          const T scale = op == ReduceOp::mean ? T(1) / static_cast<T>(len) : T(1);
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t i = 0; i < inner; ++i) {
                              const T g = out.grad[o * inner + i] * scale;
                              const std::size_t base = o * len * inner + i;
                              for (std::size_t l = 0; l < len; ++l) ga[base + l * inner] += g;
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ConfigError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> z(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(z), {a}, "reshape",
                        [](const detail::TensorImpl<T>& out, const auto& in) {
                          auto& ga = detail::grad_buffer(*in[0]);
                          for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i];
                        });
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi) {
  auto x = a.data();
  std::vector<T> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = std::min(std::max(x[i], lo), hi);
  return make_result<T>(a.shape(), std::move(z), {a}, "clamp",
                        [lo, hi](const detail::TensorImpl<T>& out, const auto& in) {
                          auto& ia = *in[0];
                          auto& ga = detail::grad_buffer(ia);
                          for (std::size_t i = 0; i < out.grad.size(); ++i) {
                            if (ia.data[i] >= lo && ia.data[i] <= hi) ga[i] += out.grad[i];
                          }
                        });
}

#define BCT_INSTANTIATE_TENSOR(T)                                                                             \
  template class BasicTensor<T>;                                                                              \
  template class Tape<T>;                                                                                     \
  template BasicTensor<T> make_result<T>(Shape, std::vector<T>, std::vector<BasicTensor<T>>, const char*,     \
                                         detail::BackwardFn<T>);                                              \
  template BasicTensor<T> elementwise<T>(BinaryOp, const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> elementwise<T>(BinaryOp, const BasicTensor<T>&, T);                                 \
  template BasicTensor<T> elementwise<T>(UnaryOp, const BasicTensor<T>&);                                     \
  template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> reduce<T>(ReduceOp, const BasicTensor<T>&, std::optional<std::size_t>);             \
  template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);                                           \
  template BasicTensor<T> clamp<T>(const BasicTensor<T>&, T, T);

BCT_INSTANTIATE_TENSOR(float)
BCT_INSTANTIATE_TENSOR(double)

}  // namespace bct
