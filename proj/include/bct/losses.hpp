#pragma once

#include <string>

#include "bct/tensor.hpp"

namespace bct {

enum class LossKind { cross_entropy, binary_cross_entropy, focal };
enum class Reduction { mean, sum };

const char* to_string(LossKind kind);
const char* to_string(Reduction reduction);

struct LossSpec {
  LossKind kind = LossKind::focal;
  double gamma = 2.0;  // focusing parameter, focal only
  Reduction reduction = Reduction::mean;
};

// Scores below this are clamped before taking the log.
inline constexpr double kScoreFloor = 1e-12;

// Checks scores[N,C] against one-hot targets[N,C]; score rows must sum to 1
// within 1e-5. Throws ConfigError on shape problems, DataError otherwise.
template <typename T>
void validate_batch(const BasicTensor<T>& scores, const BasicTensor<T>& targets);

// Per sample: -sum_i t_i log(s_i).
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& scores, const BasicTensor<T>& targets,
                             Reduction reduction = Reduction::mean);

// Two-class cross-entropy; throws ConfigError unless C == 2.
template <typename T>
BasicTensor<T> binary_cross_entropy(const BasicTensor<T>& scores, const BasicTensor<T>& targets,
                                    Reduction reduction = Reduction::mean);

// Per sample: -sum_i (1 - s_i)^gamma t_i log(s_i), C == 2. gamma = 0 gives
// values and gradients identical to binary_cross_entropy.
template <typename T>
BasicTensor<T> focal_loss(const BasicTensor<T>& scores, const BasicTensor<T>& targets, double gamma,
                          Reduction reduction = Reduction::mean);

template <typename T>
BasicTensor<T> compute_loss(const LossSpec& spec, const BasicTensor<T>& scores, const BasicTensor<T>& targets);

void validate(const LossSpec& spec);

}  // namespace bct
