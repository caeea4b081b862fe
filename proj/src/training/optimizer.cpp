#include "mvkd/training/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "mvkd/errors.hpp"

namespace mvkd {

void adam_step(NamedParams& params, std::span<const std::vector<double>> grads, AdamState& state, double lr,
               double weight_decay, const AdamOptions& options) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  const std::size_t next_step = state.step + 1;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].second.numel()) {
      throw DimensionError("adam_step: gradient size mismatch for " + params[p].first);
    }
    for (double g : grads[p]) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient at step " + std::to_string(next_step) + " in " + params[p].first);
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  state.step = next_step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  const double shrink = 1.0 - lr * weight_decay;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].second.mutable_data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] = w[i] * shrink - lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0) return lr_max;
  if (step > total_steps) throw ContractError("cosine_lr: step beyond total_steps");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace mvkd
