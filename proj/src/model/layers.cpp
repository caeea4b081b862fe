#include "mvkd/model/layers.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "mvkd/errors.hpp"
#include "mvkd/numerics/ops.hpp"

namespace mvkd {

Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::parameter({fan_in, fan_out}, std::move(w));
}

Linear Linear::create(Rng& rng, std::size_t in, std::size_t out) {
  return Linear{init_weight(rng, in, out), Tensor::parameter({1, out}, std::vector<double>(out, 0.0))};
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.cols() != in_dim()) {
    throw ConfigError("linear layer expects " + std::to_string(in_dim()) + " input features, got " +
                      shape_str(x.shape()));
  }
  return ops::add_row(ops::matmul(x, weight), bias);
}

void Linear::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".weight", weight);
  f(prefix + ".bias", bias);
}

Mlp Mlp::create(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  Mlp m;
  m.first = Linear::create(rng, in, hidden);
  m.second = Linear::create(rng, hidden, out);
  return m;
}

Tensor Mlp::forward(const Tensor& x) const { return second.forward(ops::relu(first.forward(x))); }

void Mlp::visit(const std::string& prefix, const ParamVisitor& f) {
  first.visit(prefix + ".first", f);
  second.visit(prefix + ".second", f);
}

AttentionParams AttentionParams::create(Rng& rng, std::size_t dim) {
  AttentionParams p;
  p.query = init_weight(rng, dim, dim);
  p.key = init_weight(rng, dim, dim);
  p.value = init_weight(rng, dim, dim);
  p.output = init_weight(rng, dim, dim);
  return p;
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".query", query);
  f(prefix + ".key", key);
  f(prefix + ".value", value);
  f(prefix + ".output", output);
}

AttentionResult attend(const Tensor& queries, const Tensor& keys, const Tensor& values,
                       const AttentionParams& params) {
  const std::size_t d = params.dim();
  for (const Tensor* t : {&queries, &keys, &values}) {
    if (t->rank() != 2 || t->cols() != d) {
      throw ConfigError("attention expects T x " + std::to_string(d) + " inputs, got " +
                        shape_str(t->shape()));
    }
  }
  if (keys.rows() != values.rows()) {
    throw ConfigError("attention keys " + shape_str(keys.shape()) + " and values " +
                      shape_str(values.shape()) + " differ in length");
  }
  auto q = ops::matmul(queries, params.query);
  auto k = ops::matmul(keys, params.key);
  auto v = ops::matmul(values, params.value);
  auto scores = ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  auto weights = ops::softmax(scores, 1);
  auto out = ops::matmul(ops::matmul(weights, v), params.output);
  return AttentionResult{out, weights};
}

}  // namespace mvkd
