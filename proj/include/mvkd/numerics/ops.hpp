#pragma once

#include <cstddef>
#include <vector>

#include "mvkd/numerics/tensor.hpp"

namespace mvkd::ops {

// Floor applied to every argument of log().
inline constexpr double kLogFloor = 1e-12;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// Elementwise arithmetic. Shapes must match, or one side must hold a single
// element (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

// x[r, :] + bias[0, :] for every row r.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // clamps inputs to kLogFloor
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reductions of a rank-2 tensor along an axis; the reduced axis keeps size 1.
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// Mean binary cross-entropy of sigmoid(logits) against constant targets.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Vertical concatenation of rank-2 tensors with equal column counts.
Tensor concat_rows(const std::vector<Tensor>& parts);

}  // namespace mvkd::ops
