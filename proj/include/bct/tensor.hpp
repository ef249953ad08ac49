#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bct {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class BasicTensor;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
using BackwardFn = std::function<void(const TensorImpl<T>& out, const std::vector<ImplPtr<T>>& inputs)>;

template <typename T>
struct Node {
  const char* op = "";
  std::vector<ImplPtr<T>> inputs;
  // Reads out.grad and accumulates into every input that requires grad.
  BackwardFn<T> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;
};

// Gradient buffer of `in`, allocated as zeros on first use.
template <typename T>
std::vector<T>& grad_buffer(TensorImpl<T>& in) {
  if (in.grad.empty()) in.grad.assign(in.data.size(), T(0));
  return in.grad;
}

}  // namespace detail

// Dense row-major array with optional reverse-mode gradient tracking.
//
// A tensor is a shared handle: copies alias the same storage. Forward ops never
// write to their inputs; the only in-place mutations are gradient accumulation
// during backward and optimizer updates on leaf parameters.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor();
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Leaf tensors only; op results are immutable.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and propagates to every reachable tensor that
  // requires grad. Gradients accumulate additively.
  void backward() const;

  // Fresh leaf holding a copy of the values.
  BasicTensor detach() const;

  const detail::ImplPtr<T>& impl() const { return impl_; }
  static BasicTensor from_impl(detail::ImplPtr<T> impl);

 private:
  detail::ImplPtr<T> impl_;
};

using Tensor = BasicTensor<float>;
// Verification precision for gradient checks and optimizer oracles.
using Tensor64 = BasicTensor<double>;

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered list of the op results reachable from a root:
// every entry's recorded inputs appear before it.
template <typename T>
class Tape {
 public:
  static Tape build(const BasicTensor<T>& root);

  const std::vector<detail::ImplPtr<T>>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  // Runs each backward rule once, in reverse order.
  void run_backward() const;

 private:
  std::vector<detail::ImplPtr<T>> nodes_;
};

// Builds an op result, attaching `backward` when recording is enabled and any
// input requires grad.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::vector<BasicTensor<T>> inputs,
                           const char* op, detail::BackwardFn<T> backward);

enum class BinaryOp { add, sub, mul, div, pow, max };
enum class UnaryOp { log, exp, neg };
enum class ReduceOp { sum, mean, max, argmax };

// `b` must have the shape of `a` or hold a single element (broadcast).
template <typename T>
BasicTensor<T> elementwise(BinaryOp op, const BasicTensor<T>& a, const BasicTensor<T>& b);
// Constant right operand; no gradient flows to it.
template <typename T>
BasicTensor<T> elementwise(BinaryOp op, const BasicTensor<T>& a, T b);
template <typename T>
BasicTensor<T> elementwise(UnaryOp op, const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// No axis reduces everything to a rank-0 tensor. argmax yields indices
// (as values, no gradient) and breaks ties toward the lowest index.
template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& a, std::optional<std::size_t> axis = std::nullopt);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

// Gradient passes where lo <= a <= hi, zero elsewhere.
template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }
template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) { return elementwise(BinaryOp::div, a, b); }
template <typename T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b) { return elementwise(BinaryOp::max, a, b); }
template <typename T>
BasicTensor<T> pow(const BasicTensor<T>& a, T exponent) { return elementwise(BinaryOp::pow, a, exponent); }
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a) { return elementwise(UnaryOp::log, a); }
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a) { return elementwise(UnaryOp::exp, a); }
template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& a) { return elementwise(UnaryOp::neg, a); }
// c - a
template <typename T>
BasicTensor<T> rsub(T c, const BasicTensor<T>& a) { return elementwise(BinaryOp::add, neg(a), c); }

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(ReduceOp::sum, a, axis);
}
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(ReduceOp::mean, a, axis);
}

}  // namespace bct
