#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "mvkd/numerics/tensor.hpp"
#include "mvkd/rng.hpp"

namespace mvkd {

using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

// Glorot-uniform weight of shape fan_in x fan_out.
Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out);

// Affine map x * weight + bias applied row-wise.
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static Linear create(Rng& rng, std::size_t in, std::size_t out);
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// second(relu(first(x))), applied independently to every row.
struct Mlp {
  Linear first;
  Linear second;

  static Mlp create(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out);
  std::size_t in_dim() const { return first.in_dim(); }
  std::size_t out_dim() const { return second.out_dim(); }
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// Single-head attention projections, each dim x dim.
struct AttentionParams {
  Tensor query;
  Tensor key;
  Tensor value;
  Tensor output;

  static AttentionParams create(Rng& rng, std::size_t dim);
  std::size_t dim() const { return query.rows(); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct AttentionResult {
  Tensor output;   // T_q x D
  Tensor weights;  // T_q x T_kv, rows sum to one
};

// softmax((Q Wq)(K Wk)^T / sqrt(D)) (V Wv) Wo
AttentionResult attend(const Tensor& queries, const Tensor& keys, const Tensor& values,
                       const AttentionParams& params);

}  // namespace mvkd
