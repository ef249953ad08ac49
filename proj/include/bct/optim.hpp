#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bct/layers.hpp"

namespace bct {

enum class OptimizerKind { sgd, adam, rectadam };

const char* to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  // Unset picks 1e-2 for sgd and 1e-3 for the adam family.
  std::optional<double> learning_rate;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  double lr() const;
};

void validate(const OptimizerConfig& config);

// Single-tensor update rules. `step` is the 1-based count of updates applied
// to this tensor, including the current one.

// m <- momentum*m + g;  theta <- theta - lr*m
template <typename T>
void sgd_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, const OptimizerConfig& config);

// theta <- theta - lr * mhat / (sqrt(vhat) + eps)
template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::size_t step,
                 const OptimizerConfig& config);

// Adam moments; the adaptive denominator (scaled by the rectifier r_t) is used
// only once rho_t > 4, otherwise theta <- theta - lr * mhat.
template <typename T>
void rectadam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                     std::size_t step, const OptimizerConfig& config);

// rho_inf = 2/(1 - beta2) - 1
double rectadam_rho_inf(double beta2);
// rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t)
double rectadam_rho(std::size_t step, double beta2);
// r_t, or nullopt while rho_t <= 4 (variance not tractable yet).
std::optional<double> rectadam_rectifier(std::size_t step, double beta2);

struct ParamState {
  std::vector<float> m;
  std::vector<float> v;
  std::size_t steps = 0;
};

// Optimizer bound to one model's parameter registry. Frozen parameters are
// skipped entirely: their values, moments and step counts stay untouched.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const std::vector<NamedParam>& params);

  // Throws ConfigError if an unfrozen parameter has no gradient.
  void step(std::vector<NamedParam>& params);

  // Replaces the freeze set. Unknown names throw ConfigError.
  void set_freeze(const std::set<std::string>& names);
  const std::set<std::string>& frozen() const { return frozen_; }
  bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }

  const OptimizerConfig& config() const { return config_; }
  std::size_t step_count() const { return step_count_; }
  const ParamState& state(const std::string& name) const;

 private:
  OptimizerConfig config_;
  std::map<std::string, ParamState> states_;
  std::set<std::string> frozen_;
  std::size_t step_count_ = 0;
};

}  // namespace bct
