#include "bct/losses.hpp"

#include <cmath>

#include "bct/error.hpp"

namespace bct {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::binary_cross_entropy: return "binary_cross_entropy";
    case LossKind::focal: return "focal";
  }
  return "?";
}

const char* to_string(Reduction reduction) { return reduction == Reduction::mean ? "mean" : "sum"; }

void validate(const LossSpec& spec) {
  if (!(spec.gamma >= 0.0) || !std::isfinite(spec.gamma)) {
    throw ConfigError("focal gamma must be a finite value >= 0, got " + std::to_string(spec.gamma));
  }
}

template <typename T>
void validate_batch(const BasicTensor<T>& scores, const BasicTensor<T>& targets) {
  if (scores.rank() != 2 || scores.shape() != targets.shape()) {
    throw ConfigError("loss: scores " + shape_str(scores.shape()) + " and targets " + shape_str(targets.shape()) +
                      " must both be [N,C]");
  }
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  auto s = scores.data();
  auto t = targets.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    std::size_t ones = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      total += static_cast<double>(s[r * cols + c]);
      const T tv = t[r * cols + c];
      if (tv == T(1)) {
        ++ones;
      } else if (tv != T(0)) {
        throw DataError("loss: target row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) throw DataError("loss: target row " + std::to_string(r) + " is not one-hot");
    if (std::abs(total - 1.0) > 1e-5) {
      throw DataError("loss: score row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
  }
}

namespace {

template <typename T>
BasicTensor<T> reduce_samples(const BasicTensor<T>& terms, Reduction reduction) {
  BasicTensor<T> per_sample = sum(terms, std::size_t{1});
  return neg(reduction == Reduction::mean ? mean(per_sample) : sum(per_sample));
}

template <typename T>
BasicTensor<T> clamped(const BasicTensor<T>& scores) {
  return clamp(scores, static_cast<T>(kScoreFloor), T(1));
}

template <typename T>
void require_two_classes(const BasicTensor<T>& scores, const char* what) {
  if (scores.dim(1) != 2) {
    throw ConfigError(std::string(what) + " needs exactly 2 classes, got " + std::to_string(scores.dim(1)));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& scores, const BasicTensor<T>& targets, Reduction reduction) {
  validate_batch(scores, targets);
  return reduce_samples(mul(targets, log(clamped(scores))), reduction);
}

template <typename T>
BasicTensor<T> binary_cross_entropy(const BasicTensor<T>& scores, const BasicTensor<T>& targets,
                                    Reduction reduction) {
  validate_batch(scores, targets);
  require_two_classes(scores, "binary_cross_entropy");
  // -t1 log s1 - (1 - t1) log(1 - s1), written over both score columns.
  return reduce_samples(mul(targets, log(clamped(scores))), reduction);
}

template <typename T>
BasicTensor<T> focal_loss(const BasicTensor<T>& scores, const BasicTensor<T>& targets, double gamma,
                          Reduction reduction) {
  validate(LossSpec{LossKind::focal, gamma, reduction});
  validate_batch(scores, targets);
  require_two_classes(scores, "focal_loss");
  const BasicTensor<T> s = clamped(scores);
  const BasicTensor<T> modulating = pow(rsub(T(1), s), static_cast<T>(gamma));
  return reduce_samples(mul(modulating, mul(targets, log(s))), reduction);
}

template <typename T>
BasicTensor<T> compute_loss(const LossSpec& spec, const BasicTensor<T>& scores, const BasicTensor<T>& targets) {
  switch (spec.kind) {
    case LossKind::cross_entropy: return cross_entropy(scores, targets, spec.reduction);
    case LossKind::binary_cross_entropy: return binary_cross_entropy(scores, targets, spec.reduction);
    case LossKind::focal: return focal_loss(scores, targets, spec.gamma, spec.reduction);
  }
  throw ConfigError("unknown loss kind");
}

#define BCT_INSTANTIATE_LOSS(T)                                                                                   \
  template void validate_batch<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
  template BasicTensor<T> cross_entropy<T>(const BasicTensor<T>&, const BasicTensor<T>&, Reduction);              \
  template BasicTensor<T> binary_cross_entropy<T>(const BasicTensor<T>&, const BasicTensor<T>&, Reduction);       \
  template BasicTensor<T> focal_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, double, Reduction);         \
  template BasicTensor<T> compute_loss<T>(const LossSpec&, const BasicTensor<T>&, const BasicTensor<T>&);

BCT_INSTANTIATE_LOSS(float)
BCT_INSTANTIATE_LOSS(double)

}  // namespace bct
