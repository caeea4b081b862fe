#pragma once

#include <functional>
#include <vector>

#include "mvkd/numerics/tensor.hpp"

namespace mvkd {

// Central-difference gradient estimate of `f` with respect to every element
// of every tensor in `params`. `f` reads the parameters' current values; each
// coordinate is perturbed in place by +/-eps and restored afterwards.
std::vector<std::vector<double>> finite_diff(const std::function<double()>& f,
                                             std::vector<Tensor> params, double eps = 1e-5);

// Reverse-mode gradients of the scalar produced by `f` with respect to
// `params`, recorded on a fresh tape.
std::vector<std::vector<double>> reverse_grad(const std::function<Tensor()>& f,
                                              std::vector<Tensor> params);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b, double floor = 1e-3);

}  // namespace mvkd
