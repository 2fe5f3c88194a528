#pragma once

// Random inputs and the per-op gradient cases shared by the unit tests and
// the acceptance run.

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pcp/ad/ops.hpp"
#include "pcp/signal/diff.hpp"

namespace pcp::testing_ops {

using namespace pcp::ad;

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> d(numel(s));
  for (auto& v : d) v = u(rng);
  return Tensor::from(std::move(s), std::move(d));
}

// Weighted sum so every output coordinate gets a distinct cotangent.
inline Tensor probe(const Tensor& y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  return sum(mul(y, Tensor::from(y.shape(), w)));
}

// Every op, checked on random inputs of at most 256 elements.
struct OpCase {
  const char* name;
  Shape shape;
  std::function<Tensor(const Tensor&)> f;
  double lo = -1.0, hi = 1.0;
};

inline std::vector<OpCase> op_cases() {
  std::mt19937_64 rng(7);
  auto c34 = random_tensor({3, 4}, rng);
  auto c4 = random_tensor({4}, rng);
  auto m45 = random_tensor({4, 5}, rng);
  auto decay = random_tensor({6, 3}, rng, 0.1, 0.9);
  auto drive = random_tensor({6, 3}, rng);
  auto dw = random_tensor({3, 4}, rng);
  auto w3 = random_tensor({2, 2, 3, 3, 3}, rng, -0.3, 0.3);
  auto b3 = random_tensor({2}, rng);
  auto x3 = random_tensor({2, 3, 4, 4}, rng);
  auto w2 = random_tensor({3, 2, 3, 3}, rng, -0.3, 0.3);
  auto b2 = random_tensor({3}, rng);
  auto c64 = random_tensor({64}, rng);
  auto pos16 = random_tensor({16}, rng, 0.5, 2.0);
  std::vector<double> fir = {0.1, -0.3, 0.5, 0.2, -0.1};
  namespace sd = pcp::signal::diff;
  using pcp::signal::TransformSpec;
  return {
      {"add", {3, 4}, [=](const Tensor& x) { return probe(add(x, c4)); }},
      {"add_rhs", {4}, [=](const Tensor& x) { return probe(add(c34, x)); }},
      {"sub", {3, 4}, [=](const Tensor& x) { return probe(sub(c34, x)); }},
      {"mul", {3, 4}, [=](const Tensor& x) { return probe(mul(x, c34)); }},
      {"mul_bcast", {3, 1}, [=](const Tensor& x) { return probe(mul(x, c34)); }},
      {"div", {3, 4}, [=](const Tensor& x) { return probe(div(c34, x)); }, 0.5, 2.0},
      {"div_num", {3, 4}, [=](const Tensor& x) { return probe(div(x, add_scalar(square(c34), 1.0))); }},
      {"neg", {5}, [](const Tensor& x) { return probe(neg(x)); }},
      {"scale", {5}, [](const Tensor& x) { return probe(scale(x, -2.5)); }},
      {"square", {5}, [](const Tensor& x) { return probe(square(x)); }},
      {"exp", {5}, [](const Tensor& x) { return probe(exp(x)); }},
      {"log", {5}, [](const Tensor& x) { return probe(log(x)); }, 0.5, 2.0},
      {"sqrt", {5}, [](const Tensor& x) { return probe(sqrt(x)); }, 0.5, 2.0},
      {"abs", {5}, [](const Tensor& x) { return probe(abs(x)); }, 0.2, 1.0},
      {"sigmoid", {5}, [](const Tensor& x) { return probe(sigmoid(x)); }},
      {"silu", {5}, [](const Tensor& x) { return probe(silu(x)); }},
      {"softplus", {5}, [](const Tensor& x) { return probe(softplus(x)); }},
      {"sum", {3, 4}, [](const Tensor& x) { return square(sum(x)); }},
      {"mean", {3, 4}, [](const Tensor& x) { return square(mean(x)); }},
      {"sum_axis0", {3, 4}, [](const Tensor& x) { return probe(sum_axis(x, 0)); }},
      {"sum_axis1", {3, 4}, [](const Tensor& x) { return probe(sum_axis(x, 1, true)); }},
      {"mean_axis", {3, 4}, [](const Tensor& x) { return probe(mean_axis(x, 1)); }},
      {"reshape", {3, 4}, [](const Tensor& x) { return probe(square(reshape(x, {2, 6}))); }},
      {"permute", {2, 3, 4}, [](const Tensor& x) { return probe(square(permute(x, {2, 0, 1}))); }},
      {"slice", {3, 4}, [](const Tensor& x) { return probe(square(slice(x, 1, 1, 2))); }},
      {"concat", {3, 4}, [=](const Tensor& x) { return probe(square(concat({x, c34, x}, 1))); }},
      {"broadcast", {1, 4}, [](const Tensor& x) { return probe(square(broadcast_to(x, {3, 4}))); }},
      {"transpose", {3, 4}, [](const Tensor& x) { return probe(square(transpose(x))); }},
      {"matmul_lhs", {3, 4}, [=](const Tensor& x) { return probe(matmul(x, m45)); }},
      {"matmul_rhs", {4, 5}, [=](const Tensor& x) { return probe(matmul(c34, x)); }},
      {"softmax", {3, 4}, [](const Tensor& x) { return probe(softmax(x)); }},
      {"conv1d", {2, 12}, [=](const Tensor& x) { return probe(square(conv1d_fixed(x, fir))); }},
      {"depthwise_x", {6, 4}, [=](const Tensor& x) { return probe(depthwise_conv_time(x, dw)); }},
      {"depthwise_w", {3, 4}, [](const Tensor& w) {
         return probe(depthwise_conv_time(Tensor::from({5, 4}, std::vector<double>(20, 0.5)), w));
       }},
      {"scan_decay", {6, 3}, [=](const Tensor& a) { return probe(scan(a, drive)); }, 0.1, 0.9},
      {"scan_drive", {6, 3}, [=](const Tensor& b) { return probe(scan(decay, b)); }},
      {"conv3d_x", {2, 3, 4, 4}, [=](const Tensor& x) { return probe(conv3d(x, w3, b3)); }},
      {"conv3d_w", {2, 2, 3, 3, 3}, [=](const Tensor& w) { return probe(conv3d(x3, w, b3)); }},
      {"conv3d_b", {2}, [=](const Tensor& b) { return probe(conv3d(x3, w3, b)); }},
      {"conv2d_x", {1, 2, 4, 4}, [=](const Tensor& x) { return probe(conv2d(x, w2, b2)); }},
      {"conv2d_w", {3, 2, 3, 3}, [=](const Tensor& w) {
         return probe(conv2d(reshape(x3, {2, 2, 4, 6}), w, b2));
       }},
      {"avg_pool2d", {1, 2, 4, 4}, [](const Tensor& x) { return probe(square(avg_pool2d(x, 2))); }},
      {"upsample", {1, 2, 2, 2}, [](const Tensor& x) { return probe(square(upsample_nearest2d(x, 2))); }},
      {"linear_map", {4}, [](const Tensor& x) {
         // y = [x0 + x1, 2 x3]
         auto fwd = [](std::span<const double> a, std::span<double> o) { o[0] = a[0] + a[1]; o[1] = 2 * a[3]; };
         auto adj = [](std::span<const double> g, std::span<double> o) { o[0] = g[0]; o[1] = g[0]; o[3] = 2 * g[1]; };
         return probe(square(linear_map("pair", x, {2}, fwd, adj)));
       }},
      {"bandpass", {128}, [](const Tensor& x) { return probe(sd::bandpass(x, 30.0)); }},
      {"transform_phase", {64}, [](const Tensor& x) { return probe(sd::transform(x, TransformSpec::phase(5))); }},
      {"transform_freq", {64}, [](const Tensor& x) { return probe(sd::transform(x, TransformSpec::frequency(1.3))); }},
      {"transform_amp", {64}, [](const Tensor& x) { return probe(sd::transform(x, TransformSpec::amplitude(0.7))); }},
      {"pearson", {64}, [=](const Tensor& x) { return sd::pearson(x, c64); }},
      {"mean_abs_diff", {64}, [=](const Tensor& x) { return sd::mean_abs_diff(x, c64); }},
      {"psd", {64}, [](const Tensor& x) { return probe(sd::psd(x, 30.0)); }},
      {"spectral_entropy", {16}, [](const Tensor& p) { return sd::spectral_entropy(p); }, 0.5, 2.0},
      {"js_divergence", {16}, [=](const Tensor& p) { return sd::js_divergence(p, pos16); }, 0.5, 2.0},
  };
}

}  // namespace pcp::testing_ops
