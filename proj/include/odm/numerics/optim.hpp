#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "odm/numerics/parameters.hpp"

namespace odm::nn {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
};

inline double global_grad_norm(const GradientMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

/// One Adam step with bias correction and decoupled weight decay
/// (p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)). Frozen parameters
/// are not touched at all.
inline void adam_step(ParameterStore& store, const GradientMap& grads, const AdamConfig& cfg) {
  double clip = 1.0;
  if (cfg.max_grad_norm > 0.0) {
    const double norm = global_grad_norm(grads);
    if (norm > cfg.max_grad_norm) clip = cfg.max_grad_norm / norm;
  }
  for (auto& e : store.entries()) {
    if (e.frozen) continue;
    auto it = grads.find(e.name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: missing gradient for '" + e.name + "'");
    const Tensor& g = it->second;
    if (g.size() != e.value.size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + e.name + "'");
    ++e.updates;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.updates));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.updates));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] * clip;
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gi;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * gi * gi;
      const double step = (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      e.value[i] -= cfg.lr * (step + cfg.weight_decay * e.value[i]);
    }
  }
  store.increment_step();
}

}  // namespace odm::nn
