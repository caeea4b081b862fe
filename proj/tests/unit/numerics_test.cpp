#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mvkd/errors.hpp"
#include "mvkd/numerics/finite_diff.hpp"
#include "mvkd/numerics/ops.hpp"

namespace mvkd {
namespace {

Tensor random_param(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

void expect_values(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t.at(i), expected[i], tol) << i;
}

// Checks reverse-mode against central differences for a scalar function of params.
void expect_grad_matches(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double tol = 1e-5) {
  auto analytic = reverse_grad(f, params);
  auto numeric = finite_diff([&] { return f().item(); }, params, 1e-5);
  EXPECT_LT(max_relative_error(analytic, numeric), tol);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  auto x = Tensor::matrix({{1.5, -2}, {3, 4.25}});
  expect_values(ops::matmul(eye, x), {1.5, -2, 3, 4.25}, 0.0);
}

TEST(Matmul, HandProduct) {
  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  auto b = Tensor::matrix({{1}, {1}});
  auto c = ops::matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  expect_values(c, {3, 7}, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 2});
  try {
    ops::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[2x2]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(11);
  auto a = random_param(rng, {3, 4});
  auto b = random_param(rng, {4, 2});
  expect_grad_matches([&] { return ops::sum(ops::matmul(a, b)); }, {a, b}, 1e-6);
}

TEST(Softmax, UniformOnEqualInputs) { expect_values(ops::softmax(Tensor::vector({0, 0}), 0), {0.5, 0.5}); }

TEST(Softmax, HandEvaluation) {
  expect_values(ops::softmax(Tensor::vector({std::log(1.0), std::log(3.0)}), 0), {0.25, 0.75});
}

TEST(Softmax, ShiftInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(5), xs(5);
    const double c = u(rng) * 10;
    for (int i = 0; i < 5; ++i) {
      x[i] = u(rng);
      xs[i] = x[i] + c;
    }
    auto p = ops::softmax(Tensor({5}, x), 0);
    auto q = ops::softmax(Tensor({5}, xs), 0);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(p.at(i), q.at(i), 1e-12);
  }
}

TEST(Softmax, RowsAreProbabilityVectors) {
  std::mt19937_64 rng(5);
  auto x = random_param(rng, {6, 4}, -30, 30);
  for (int axis : {0, 1}) {
    auto p = ops::softmax(x, axis);
    auto s = ops::sum(p, axis);
    for (double v : p.data()) EXPECT_GE(v, 0.0);
    for (double v : s.data()) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Elementwise, BasicValues) {
  expect_values(ops::relu(Tensor::vector({-1, 2})), {0, 2});
  expect_values(ops::sigmoid(Tensor::scalar(0)), {0.5});
  expect_values(ops::mean(Tensor::vector({1, 2, 3})), {2});
  expect_values(ops::scale(Tensor::vector({1, -2}), 3), {3, -6});
  expect_values(ops::log(Tensor::vector({0.0})), {std::log(1e-12)});
  expect_values(ops::add(Tensor::vector({1, 2}), Tensor::scalar(1)), {2, 3});
  expect_values(ops::sub(Tensor::scalar(1), Tensor::vector({1, 2})), {0, -1});
}

TEST(Elementwise, IncompatibleShapesThrow) {
  EXPECT_THROW(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(ops::mul(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(ops::add_row(Tensor::zeros({2, 3}), Tensor::zeros({1, 2})), DimensionError);
}

TEST(Elementwise, AxisReductions) {
  auto x = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  auto r = ops::sum(x, 1);
  EXPECT_EQ(r.shape(), (Shape{2, 1}));
  expect_values(r, {6, 15});
  auto c = ops::mean(x, 0);
  EXPECT_EQ(c.shape(), (Shape{1, 3}));
  expect_values(c, {2.5, 3.5, 4.5});
}

TEST(Elementwise, AxisReductionsOnSingleRowOrColumn) {
  auto col = Tensor::matrix({{1}, {2}, {6}});
  EXPECT_EQ(ops::mean(col, 0).shape(), (Shape{1, 1}));
  expect_values(ops::mean(col, 0), {3});
  EXPECT_EQ(ops::sum(col, 1).shape(), (Shape{3, 1}));
  expect_values(ops::sum(col, 1), {1, 2, 6});
  auto row = Tensor::matrix({{1, 2, 6}});
  EXPECT_EQ(ops::sum(row, 0).shape(), (Shape{1, 3}));
  EXPECT_EQ(ops::sum(row, 1).shape(), (Shape{1, 1}));
  expect_values(ops::sum(row, 1), {9});
}

TEST(Backward, SumGivesOnes) {
  std::mt19937_64 rng(1);
  auto x = random_param(rng, {3, 2});
  auto g = reverse_grad([&] { return ops::sum(x); }, {x});
  for (double v : g[0]) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SumOfSquares) {
  auto x = Tensor::parameter({2}, {1, 2});
  auto g = reverse_grad([&] { return ops::sum(ops::mul(x, x)); }, {x});
  EXPECT_EQ(g[0], (std::vector<double>{2, 4}));
}

TEST(Backward, NonScalarRootIsContractError) {
  auto x = Tensor::parameter({2}, {1, 2});
  Tape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = ops::scale(x, 2);
  }
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, DisconnectedParameterGetsExactZero) {
  auto x = Tensor::parameter({2}, {1, 2});
  auto unused = Tensor::parameter({3}, {4, 5, 6});
  auto g = reverse_grad([&] { return ops::sum(ops::square(x)); }, {x, unused});
  EXPECT_EQ(g[1], (std::vector<double>{0, 0, 0}));
}

TEST(Backward, NoActiveTapeYieldsDetachedResults) {
  auto x = Tensor::parameter({2}, {1, 2});
  auto y = ops::sum(ops::square(x));
  EXPECT_FALSE(y.requires_grad());
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradGuard guard;
    EXPECT_FALSE(ops::relu(x).requires_grad());
  }
  EXPECT_TRUE(ops::relu(x).requires_grad());
  EXPECT_FALSE(ops::relu(x.detach()).requires_grad());
}

TEST(Backward, ParameterGradientsAccumulateAcrossPasses) {
  auto x = Tensor::parameter({1}, {3});
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    Tensor y;
    {
      TapeScope scope(tape);
      y = ops::square(x);
    }
    tape.backward(y);
  }
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(FiniteDiff, SquareAtThree) {
  auto x = Tensor::parameter({1}, {3});
  auto g = finite_diff([&] { return x.at(0) * x.at(0); }, {x}, 1e-5);
  EXPECT_NEAR(g[0][0], 6.0, 1e-6);
}

TEST(FiniteDiff, SoftmaxSumIsFlat) {
  std::mt19937_64 rng(2);
  auto x = random_param(rng, {5});
  auto g = finite_diff([&] { return ops::sum(ops::softmax(x, 0)).item(); }, {x}, 1e-5);
  for (double v : g[0]) EXPECT_NEAR(v, 0.0, 1e-9);
}

// Every differentiable op against central differences on seeded small shapes.
TEST(GradientCheck, EveryOpOnRandomShapes) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng), k = dim(rng);
    auto a = random_param(rng, {r, c});
    auto b = random_param(rng, {r, c});
    auto w = random_param(rng, {c, k});
    auto bias = random_param(rng, {1, c});
    auto s = random_param(rng, {1});
    auto pos = random_param(rng, {r, c}, 0.1, 2.0);
    auto targets = Tensor({r, c}, std::vector<double>(r * c, 1.0));
    for (std::size_t i = 0; i < r * c; i += 2) targets.mutable_data()[i] = 0.0;
    // Weighted sums keep symmetric reductions from hiding gradient errors.
    auto weights = random_param(rng, {r, c}).detach();
    auto wsum = [&](const Tensor& x) { return ops::sum(ops::mul(x, weights)); };

    expect_grad_matches([&] { return ops::sum(ops::matmul(a, w)); }, {a, w});
    expect_grad_matches([&] { return wsum(ops::add(a, b)); }, {a, b});
    expect_grad_matches([&] { return wsum(ops::sub(a, s)); }, {a, s});
    expect_grad_matches([&] { return wsum(ops::mul(a, b)); }, {a, b});
    expect_grad_matches([&] { return wsum(ops::mul(s, a)); }, {a, s});
    expect_grad_matches([&] { return wsum(ops::add_row(a, bias)); }, {a, bias});
    expect_grad_matches([&] { return wsum(ops::sigmoid(a)); }, {a});
    expect_grad_matches([&] { return wsum(ops::exp(a)); }, {a});
    expect_grad_matches([&] { return wsum(ops::log(pos)); }, {pos});
    expect_grad_matches([&] { return wsum(ops::square(a)); }, {a});
    expect_grad_matches([&] { return wsum(ops::scale(a, -1.7)); }, {a});
    expect_grad_matches([&] { return ops::mean(ops::mul(a, weights)); }, {a});
    expect_grad_matches([&] { return ops::sum(ops::transpose(ops::mul(a, weights))); }, {a});
    expect_grad_matches([&] { return wsum(ops::softmax(a, 1)); }, {a});
    expect_grad_matches([&] { return wsum(ops::softmax(a, 0)); }, {a});
    expect_grad_matches([&] { return wsum(ops::log_softmax(a, 1)); }, {a});
    expect_grad_matches([&] { return wsum(ops::log_softmax(a, 0)); }, {a});
    expect_grad_matches([&] { return ops::bce_with_logits(a, targets); }, {a});
    expect_grad_matches(
        [&] { return ops::sum(ops::mul(ops::mean(a, 0), ops::mean(b, 0))); }, {a, b});
    expect_grad_matches(
        [&] { return ops::sum(ops::square(ops::sum(ops::mul(a, weights), 1))); }, {a});
    expect_grad_matches(
        [&] { return ops::sum(ops::square(ops::concat_rows({a, ops::scale(b, 2)}))); }, {a, b});
  }
}

TEST(GradientCheck, ReluAwayFromKink) {
  auto x = Tensor::parameter({4}, {-1.0, -0.3, 0.4, 2.0});
  expect_grad_matches([&] { return ops::sum(ops::square(ops::relu(x))); }, {x});
}

TEST(GradientCheck, BceTargetsMayBeTemporaries) {
  auto x = Tensor::parameter({2, 3}, {0.5, -1.0, 2.0, -0.2, 0.1, 1.5});
  auto make_targets = [] { return Tensor({2, 3}, {1, 0, 1, 0, 0, 1}); };
  expect_grad_matches([&] { return ops::bce_with_logits(x, make_targets()); }, {x});
  x.zero_grad();
  // Churn the allocator between the forward and backward passes.
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::bce_with_logits(x, make_targets());
  }
  std::vector<Tensor> churn;
  for (int i = 0; i < 64; ++i) churn.push_back(Tensor::full({2, 3}, 9.0));
  tape.backward(loss);
  const auto g = x.grad();
  x.zero_grad();
  const std::vector<double> y = {1, 0, 1, 0, 0, 1};
  for (std::size_t i = 0; i < 6; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x.at(i)));
    EXPECT_NEAR(g[i], (s - y[i]) / 6.0, 1e-12) << i;
  }
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalGradients) {
  auto run = [] {
    std::mt19937_64 rng(77);
    auto a = random_param(rng, {4, 3});
    auto w = random_param(rng, {3, 5});
    auto g = reverse_grad(
        [&] { return ops::sum(ops::log_softmax(ops::matmul(a, w), 1)); }, {a, w});
    return g;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mvkd
