#include "mvkd/numerics/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "mvkd/errors.hpp"

namespace mvkd {

std::vector<std::vector<double>> finite_diff(const std::function<double()>& f,
                                             std::vector<Tensor> params, double eps) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (auto& p : params) {
    auto data = p.mutable_data();
    std::vector<double> g(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double hi = f();
      data[i] = orig - eps;
      const double lo = f();
      data[i] = orig;
      g[i] = (hi - lo) / (2.0 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::vector<double>> reverse_grad(const std::function<Tensor()>& f,
                                              std::vector<Tensor> params) {
  for (auto& p : params) p.zero_grad();
  Tape tape;
  Tensor root;
  {
    TapeScope scope(tape);
    root = f();
  }
  tape.backward(root);
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.grad());
  return out;
}

double max_relative_error(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b, double floor) {
  if (a.size() != b.size()) throw DimensionError("gradient maps differ in parameter count");
  double worst = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p].size() != b[p].size()) throw DimensionError("gradient maps differ in parameter size");
    for (std::size_t i = 0; i < a[p].size(); ++i) {
      const double denom = std::max({std::abs(a[p][i]), std::abs(b[p][i]), floor});
      worst = std::max(worst, std::abs(a[p][i] - b[p][i]) / denom);
    }
  }
  return worst;
}

}  // namespace mvkd
