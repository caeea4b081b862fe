#include "mvkd/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mvkd/errors.hpp"

namespace mvkd::ops {
namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// Wraps a computed value into a Tensor and, when any input is tracked on an
// active tape, records the backward closure produced by `make_backward(out)`.
template <class MakeBackward>
Tensor finish(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
              MakeBackward&& make_backward) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  Tape* tape = active_tape();
  bool tracked = false;
  for (const Tensor* in : inputs) tracked = tracked || in->requires_grad();
  if (tape && tracked) {
    out->requires_grad = true;
    std::vector<NodePtr> ins;
    ins.reserve(inputs.size());
    for (const Tensor* in : inputs) ins.push_back(in->node());
    tape->record(std::move(ins), out, make_backward(out.get()));
  }
  return Tensor::from_node(std::move(out));
}

// Gradient buffer of an input, or nullptr when the input is not tracked.
double* grad_of(Node* n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + shape_str(x.shape()));
  }
}

enum class Broadcast { kSame, kScalarA, kScalarB };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kScalarB;
  if (a.numel() == 1) return Broadcast::kScalarA;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Shared driver for add/sub/mul. `f` computes the value, `da`/`db` the local
// partial derivatives given (a_i, b_i).
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da, DB db) {
  const auto mode = broadcast_mode(a, b, op);
  const Shape out_shape = mode == Broadcast::kScalarA ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto av = a.data();
  auto bv = b.data();
  auto ia = [mode](std::size_t i) { return mode == Broadcast::kScalarA ? std::size_t{0} : i; };
  auto ib = [mode](std::size_t i) { return mode == Broadcast::kScalarB ? std::size_t{0} : i; };
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(av[ia(i)], bv[ib(i)]);
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return finish(out_shape, std::move(v), {&a, &b}, [=](Node* out) {
    return [=]() {
      const double* g = out->grad.data();
      double* ga = grad_of(an);
      double* gb = grad_of(bn);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = an->value[ia(i)];
        const double y = bn->value[ib(i)];
        if (ga) ga[ia(i)] += g[i] * da(x, y);
        if (gb) gb[ib(i)] += g[i] * db(x, y);
      }
    };
  });
}

// Shared driver for pointwise unary ops; `d(x, y)` is dy/dx given input x
// and output y.
template <class F, class D>
Tensor unary(const Tensor& x, F f, D d) {
  const std::size_t n = x.numel();
  auto xv = x.data();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(xv[i]);
  Node* xn = x.node().get();
  return finish(x.shape(), std::move(v), {&x}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      const double* g = out->grad.data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * d(xn->value[i], out->value[i]);
    };
  });
}

// Layout of an axis reduction over a rank<=2 tensor: `groups` independent
// runs of `length` elements spaced `stride` apart, group g starting at
// `start(g)`.
struct AxisLayout {
  std::size_t groups;
  std::size_t length;
  std::size_t stride;
  std::size_t group_step;  // start offset multiplier for row-wise groups
  bool row_wise;           // reduces along a row (axis 1 or rank 1)
  std::size_t start(std::size_t g) const { return row_wise ? g * group_step : g; }
};

AxisLayout axis_layout(const Tensor& x, int axis, const char* op) {
  const auto rank = static_cast<int>(x.rank());
  if (rank < 1 || rank > 2) {
    throw DimensionError(std::string(op) + " supports rank 1 or 2, got " + shape_str(x.shape()));
  }
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError(std::string(op) + ": axis out of range for " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (rank == 1 || axis == 1) return AxisLayout{r, c, 1, c, true};
  return AxisLayout{c, r, c, 0, false};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return finish(Shape{m, n}, std::move(c), {&a, &b}, [=](Node* out) {
    return [=]() {
      const double* g = out->grad.data();
      if (double* ga = grad_of(an)) {
        const double* Bv = bn->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = Bv + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (double* gb = grad_of(bn)) {
        const double* Av = an->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = Av[i * k + p];
            double* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    };
  });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  auto xv = x.data();
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = xv[i * c + j];
  Node* xn = x.node().get();
  return finish(Shape{c, r}, std::move(v), {&x}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      const double* g = out->grad.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    };
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_row");
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.numel() != c || bias.rows() != 1) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not match rows of " +
                         shape_str(x.shape()));
  }
  auto xv = x.data();
  auto bv = bias.data();
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = xv[i * c + j] + bv[j];
  Node* xn = x.node().get();
  Node* bn = bias.node().get();
  return finish(x.shape(), std::move(v), {&x, &bias}, [=](Node* out) {
    return [=]() {
      const double* g = out->grad.data();
      if (double* gx = grad_of(xn))
        for (std::size_t i = 0; i < r * c; ++i) gx[i] += g[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    };
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogFloor)); },
      [](double v, double) { return v > kLogFloor ? 1.0 / v : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.numel();
  Node* xn = x.node().get();
  return finish(Shape{1}, {s}, {&x}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      const double g = out->grad[0];
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    };
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, int axis) {
  const auto lay = axis_layout(x, axis, "sum");
  auto xv = x.data();
  std::vector<double> v(lay.groups, 0.0);
  for (std::size_t gi = 0; gi < lay.groups; ++gi) {
    const std::size_t s = lay.start(gi);
    double acc = 0.0;
    for (std::size_t l = 0; l < lay.length; ++l) acc += xv[s + l * lay.stride];
    v[gi] = acc;
  }
  Shape out_shape;
  if (x.rank() == 1) {
    out_shape = {1};
  } else {
    out_shape = lay.row_wise ? Shape{x.rows(), 1} : Shape{1, x.cols()};
  }
  Node* xn = x.node().get();
  return finish(out_shape, std::move(v), {&x}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      for (std::size_t gi = 0; gi < lay.groups; ++gi) {
        const std::size_t s = lay.start(gi);
        const double g = out->grad[gi];
        for (std::size_t l = 0; l < lay.length; ++l) gx[s + l * lay.stride] += g;
      }
    };
  });
}

Tensor mean(const Tensor& x, int axis) {
  const auto lay = axis_layout(x, axis, "mean");
  return scale(sum(x, axis), 1.0 / static_cast<double>(lay.length));
}

Tensor softmax(const Tensor& x, int axis) {
  const auto lay = axis_layout(x, axis, "softmax");
  auto xv = x.data();
  std::vector<double> v(x.numel());
  for (std::size_t gi = 0; gi < lay.groups; ++gi) {
    const std::size_t s = lay.start(gi);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < lay.length; ++l) mx = std::max(mx, xv[s + l * lay.stride]);
    double z = 0.0;
    for (std::size_t l = 0; l < lay.length; ++l) {
      const std::size_t i = s + l * lay.stride;
      v[i] = std::exp(xv[i] - mx);
      z += v[i];
    }
    for (std::size_t l = 0; l < lay.length; ++l) v[s + l * lay.stride] /= z;
  }
  Node* xn = x.node().get();
  return finish(x.shape(), std::move(v), {&x}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      const double* g = out->grad.data();
      const double* y = out->value.data();
      for (std::size_t gi = 0; gi < lay.groups; ++gi) {
        const std::size_t s = lay.start(gi);
        double dot = 0.0;
        for (std::size_t l = 0; l < lay.length; ++l) {
          const std::size_t i = s + l * lay.stride;
          dot += g[i] * y[i];
        }
        for (std::size_t l = 0; l < lay.length; ++l) {
          const std::size_t i = s + l * lay.stride;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    };
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  const auto lay = axis_layout(x, axis, "log_softmax");
  auto xv = x.data();
  std::vector<double> v(x.numel());
  for (std::size_t gi = 0; gi < lay.groups; ++gi) {
    const std::size_t s = lay.start(gi);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < lay.length; ++l) mx = std::max(mx, xv[s + l * lay.stride]);
    double z = 0.0;
    for (std::size_t l = 0; l < lay.length; ++l) z += std::exp(xv[s + l * lay.stride] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t l = 0; l < lay.length; ++l) {
      const std::size_t i = s + l * lay.stride;
      v[i] = xv[i] - lz;
    }
  }
  Node* xn = x.node().get();
  return finish(x.shape(), std::move(v), {&x}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      const double* g = out->grad.data();
      const double* y = out->value.data();
      for (std::size_t gi = 0; gi < lay.groups; ++gi) {
        const std::size_t s = lay.start(gi);
        double gsum = 0.0;
        for (std::size_t l = 0; l < lay.length; ++l) gsum += g[s + l * lay.stride];
        for (std::size_t l = 0; l < lay.length; ++l) {
          const std::size_t i = s + l * lay.stride;
          gx[i] += g[i] - std::exp(y[i]) * gsum;
        }
      }
    };
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  }
  const std::size_t n = logits.numel();
  if (n == 0) throw DimensionError("bce_with_logits on empty tensor");
  auto xv = logits.data();
  auto yv = targets.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xv[i];
    acc += std::max(x, 0.0) - x * yv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Node* xn = logits.node().get();
  // Targets are not a tape input, so the closure keeps them alive itself.
  std::shared_ptr<const Node> yn = targets.node();
  return finish(Shape{1}, {acc * inv_n}, {&logits}, [=](Node* out) {
    return [=]() {
      double* gx = grad_of(xn);
      if (!gx) return;
      const double g = out->grad[0] * inv_n;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = xn->value[i];
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        gx[i] += g * (s - yn->value[i]);
      }
    };
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    r += p.rows();
  }
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());

  auto out = std::make_shared<Node>();
  out->shape = Shape{r, c};
  out->value = std::move(v);
  Tape* tape = active_tape();
  bool tracked = false;
  for (const auto& p : parts) tracked = tracked || p.requires_grad();
  if (tape && tracked) {
    out->requires_grad = true;
    std::vector<NodePtr> ins;
    for (const auto& p : parts) ins.push_back(p.node());
    Node* o = out.get();
    tape->record(ins, out, [ins, o]() {
      std::size_t offset = 0;
      for (const auto& in : ins) {
        const std::size_t n = in->value.size();
        if (double* g = grad_of(in.get()))
          for (std::size_t i = 0; i < n; ++i) g[i] += o->grad[offset + i];
        offset += n;
      }
    });
  }
  return Tensor::from_node(std::move(out));
}

}  // namespace mvkd::ops
