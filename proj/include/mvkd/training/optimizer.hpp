#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvkd/model/networks.hpp"

namespace mvkd {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

// One Adam step with decoupled weight decay: each parameter is first shrunk
// by (1 - lr * weight_decay), then moved by the bias-corrected Adam update.
// A non-finite gradient throws NumericalError naming the step and parameter;
// parameters are left untouched in that case.
void adam_step(NamedParams& params, std::span<const std::vector<double>> grads, AdamState& state, double lr,
               double weight_decay, const AdamOptions& options = {});

// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

}  // namespace mvkd
