#include "bct/optim.hpp"

#include <cmath>
#include <utility>

#include "bct/error.hpp"

namespace bct {

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rectadam: return "rectadam";
  }
  return "?";
}

double OptimizerConfig::lr() const {
  if (learning_rate) return *learning_rate;
  return kind == OptimizerKind::sgd ? 1e-2 : 1e-3;
}

void validate(const OptimizerConfig& config) {
  if (!(config.lr() > 0.0)) throw ConfigError("optim.learning_rate must be > 0");
  if (!(config.momentum >= 0.0)) throw ConfigError("optim.momentum must be >= 0");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0)) throw ConfigError("optim.beta1 must lie in (0,1)");
  if (!(config.beta2 > 0.0 && config.beta2 < 1.0)) throw ConfigError("optim.beta2 must lie in (0,1)");
  if (!(config.epsilon > 0.0)) throw ConfigError("optim.epsilon must be > 0");
}

template <typename T>
void sgd_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, const OptimizerConfig& config) {
  const T lr = static_cast<T>(config.lr());
  const T mu = static_cast<T>(config.momentum);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = mu * m[i] + grad[i];
    theta[i] -= lr * m[i];
  }
}

namespace {

template <typename T>
void update_moments(std::span<const T> grad, std::span<T> m, std::span<T> v, const OptimizerConfig& config) {
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
    v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
  }
}

}  // namespace

template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::size_t step,
                 const OptimizerConfig& config) {
  update_moments(grad, m, v, config);
  const double t = static_cast<double>(step);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.lr());
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double rectadam_rho_inf(double beta2) { return 2.0 / (1.0 - beta2) - 1.0; }

double rectadam_rho(std::size_t step, double beta2) {
  const double t = static_cast<double>(step);
  const double bt = std::pow(beta2, t);
  return rectadam_rho_inf(beta2) - 2.0 * t * bt / (1.0 - bt);
}

std::optional<double> rectadam_rectifier(std::size_t step, double beta2) {
  const double rho = rectadam_rho(step, beta2);
  if (rho <= 4.0) return std::nullopt;
  const double inf = rectadam_rho_inf(beta2);
  return std::sqrt(((rho - 4.0) * (rho - 2.0) * inf) / ((inf - 4.0) * (inf - 2.0) * rho));
}

template <typename T>
void rectadam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                     std::size_t step, const OptimizerConfig& config) {
  update_moments(grad, m, v, config);
  const double t = static_cast<double>(step);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T lr = static_cast<T>(config.lr());
  const auto rect = rectadam_rectifier(step, config.beta2);
  if (!rect) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * (m[i] / c1);
    return;
  }
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T r = static_cast<T>(*rect);
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    theta[i] -= lr * r * mhat / (std::sqrt(vhat) + eps);
  }
}

Optimizer::Optimizer(OptimizerConfig config, const std::vector<NamedParam>& params) : config_(std::move(config)) {
  validate(config_);
  for (const auto& p : params) {
    ParamState st;
    st.m.assign(p.tensor.size(), 0.0f);
    if (config_.kind != OptimizerKind::sgd) st.v.assign(p.tensor.size(), 0.0f);
    if (!states_.emplace(p.name, std::move(st)).second) throw ConfigError("duplicate parameter " + p.name);
  }
}

void Optimizer::step(std::vector<NamedParam>& params) {
  for (auto& p : params) {
    if (is_frozen(p.name)) continue;
    auto it = states_.find(p.name);
    if (it == states_.end()) throw ConfigError("optimizer does not track parameter " + p.name);
    if (!p.tensor.has_grad()) throw ConfigError("missing gradient for parameter " + p.name);
    ParamState& st = it->second;
    ++st.steps;
    auto theta = p.tensor.mutable_data();
    std::span<const float> grad = p.tensor.grad();
    switch (config_.kind) {
      case OptimizerKind::sgd: sgd_update<float>(theta, grad, st.m, config_); break;
      case OptimizerKind::adam: adam_update<float>(theta, grad, st.m, st.v, st.steps, config_); break;
      case OptimizerKind::rectadam: rectadam_update<float>(theta, grad, st.m, st.v, st.steps, config_); break;
    }
  }
  ++step_count_;
}

void Optimizer::set_freeze(const std::set<std::string>& names) {
  for (const auto& n : names) {
    if (!states_.count(n)) throw ConfigError("cannot freeze unknown parameter " + n);
  }
  frozen_ = names;
}

const ParamState& Optimizer::state(const std::string& name) const {
  auto it = states_.find(name);
  if (it == states_.end()) throw ConfigError("optimizer does not track parameter " + name);
  return it->second;
}

#define BCT_INSTANTIATE_OPTIM(T)                                                                               \
  template void sgd_update<T>(std::span<T>, std::span<const T>, std::span<T>, const OptimizerConfig&);         \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, std::size_t,      \
                               const OptimizerConfig&);                                                        \
  template void rectadam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, std::size_t,  \
                                   const OptimizerConfig&);

BCT_INSTANTIATE_OPTIM(float)
BCT_INSTANTIATE_OPTIM(double)

}  // namespace bct
