#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pcp/ad/grad_check.hpp"
#include "pcp/ad/ops.hpp"
#include "pcp/ad/optim.hpp"
#include "op_cases.hpp"

using namespace pcp::ad;
using namespace pcp::testing_ops;

TEST(DiffForward, AddElementwise) {
  auto y = add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}));
  EXPECT_EQ(y.data(), (std::vector<double>{4, 6}));
}

TEST(DiffForward, ActivationsAtZero) {
  auto z = Tensor::scalar(0.0);
  EXPECT_DOUBLE_EQ(silu(z).item(), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(z).item(), 0.5);
}

TEST(DiffForward, IdentityMatmul) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 3}, rng);
  auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(matmul(eye, a).data(), a.data());
}

TEST(DiffForward, ShapeMismatchNamesBothShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL();
  } catch (const ShapeError& e) {
    std::string m = e.what();
    EXPECT_NE(m.find("[2,3]"), std::string::npos);
    EXPECT_NE(m.find("[4]"), std::string::npos);
  }
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(DiffForward, NonFiniteRejected) {
  EXPECT_THROW(Tensor::from({1}, {std::nan("")}), NumericError);
  auto t = Tensor::zeros({2});
  t.mutable_data()[1] = INFINITY;
  EXPECT_THROW(square(t), NumericError);
}

TEST(DiffForward, BroadcastTrailing) {
  auto y = add(Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5}), Tensor::from({3}, {10, 20, 30}));
  EXPECT_EQ(y.data(), (std::vector<double>{10, 21, 32, 13, 24, 35}));
  auto z = mul(Tensor::from({2, 1}, {2, 3}), Tensor::from({1, 2}, {1, 10}));
  EXPECT_EQ(z.data(), (std::vector<double>{2, 20, 3, 30}));
}

TEST(DiffForward, ResultIndependentOfRequiresGrad) {
  std::mt19937_64 rng(2);
  auto a = random_tensor({4, 3}, rng);
  auto b = random_tensor({3, 2}, rng);
  auto plain = silu(matmul(a, b));
  auto ga = Tensor::from(a.shape(), a.data(), true);
  auto tracked = silu(matmul(ga, b));
  EXPECT_EQ(plain.data(), tracked.data());
  reset_graph();
}

TEST(Scan, ZeroDecayIsDrive) {
  auto d = Tensor::from({3, 1}, {4, 5, 6});
  EXPECT_EQ(scan(Tensor::zeros({3, 1}), d).data(), d.data());
}

TEST(Scan, RunningSum) {
  auto y = scan(Tensor::full({4, 1}, 1.0), Tensor::full({4, 1}, 1.0));
  EXPECT_EQ(y.data(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Scan, MatchesLoopBitForBit) {
  std::mt19937_64 rng(3);
  for (Shape s : {Shape{3, 2}, Shape{17, 5}}) {
    auto a = random_tensor(s, rng);
    auto b = random_tensor(s, rng);
    auto y = scan(a, b);
    std::vector<double> h(s[1], 0.0);
    for (std::size_t t = 0; t < s[0]; ++t)
      for (std::size_t n = 0; n < s[1]; ++n) {
        h[n] = a[t * s[1] + n] * h[n] + b[t * s[1] + n];
        EXPECT_EQ(y[t * s[1] + n], h[n]);
      }
  }
}

TEST(Backward, MeanSquare) {
  reset_graph();
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  backward(mean(square(x)));
  EXPECT_NEAR(x.grad()[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(x.grad()[1], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(x.grad()[2], 2.0, 1e-15);
  reset_graph();
}

TEST(Backward, Bilinear) {
  reset_graph();
  auto a = Tensor::from({3}, {1, -2, 5}, true);
  auto b = Tensor::from({3}, {0.5, 4, -1}, true);
  backward(sum(mul(a, b)));
  EXPECT_EQ(a.grad(), b.data());
  EXPECT_EQ(b.grad(), a.data());
  reset_graph();
}

TEST(Backward, NonScalarRootRejected) {
  auto x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(square(x)), ShapeError);
  reset_graph();
}

TEST(Backward, TwiceAccumulates) {
  reset_graph();
  std::mt19937_64 rng(4);
  auto x = Tensor::from({5}, random_tensor({5}, rng).data(), true);
  auto w = random_tensor({5, 5}, rng);
  auto y = mean(silu(matmul(reshape(x, {1, 5}), w)));
  backward(y);
  const auto once = x.grad();
  backward(y);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(x.grad()[i], 2.0 * once[i], 1e-15);
  reset_graph();
}

TEST(Backward, SharedInputAccumulates) {
  reset_graph();
  auto x = Tensor::from({1}, {3.0}, true);
  backward(sum(add(mul(x, x), x)));  // d/dx (x^2 + x) = 2x + 1
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
  reset_graph();
}

TEST(GradCheck, SumIsExact) {
  std::mt19937_64 rng(5);
  EXPECT_LT(grad_check([](const Tensor& x) { return sum(x); }, random_tensor({7}, rng)), 1e-8);
}

TEST(GradCheck, MeanSiluLinear) {
  std::mt19937_64 rng(6);
  auto w = random_tensor({4, 4}, rng);
  auto f = [&](const Tensor& x) { return mean(silu(matmul(w, x))); };
  EXPECT_LT(grad_check(f, random_tensor({4, 1}, rng)), 1e-4);
}

class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = op_cases();
  const auto& c = cases[static_cast<std::size_t>(GetParam())];
  std::mt19937_64 rng(100 + static_cast<unsigned>(GetParam()));
  ASSERT_LE(numel(c.shape), 256u);
  const double err = grad_check(c.f, random_tensor(c.shape, rng, c.lo, c.hi), 1e-4);
  EXPECT_LT(err, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, static_cast<int>(op_cases().size())),
                         [](const auto& info) { return std::string(op_cases()[static_cast<std::size_t>(info.param)].name); });

TEST(GradCheck, ScanSiluComposite) {
  std::mt19937_64 rng(8);
  auto drive = random_tensor({10, 2}, rng);
  auto f = [&](const Tensor& a) { return mean(square(silu(scan(sigmoid(a), drive)))); };
  EXPECT_LT(grad_check(f, random_tensor({10, 2}, rng)), 1e-4);
}

TEST(Optim, AdamWMinimisesQuadratic) {
  ParamSet ps;
  auto& x = ps.add("x", Tensor::from({2}, {3.0, -2.0}));
  AdamW opt(ps, {.lr = 0.05, .weight_decay = 0.0});
  for (int i = 0; i < 500; ++i) {
    reset_graph();
    ps.zero_grad();
    backward(sum(square(add_scalar(x, -1.0))));
    opt.step();
  }
  reset_graph();
  EXPECT_NEAR(x[0], 1.0, 1e-2);
  EXPECT_NEAR(x[1], 1.0, 1e-2);
}

TEST(Optim, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 50, 100), 5e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100), 0.0, 1e-18);
}
