#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pcp/ad/tensor.hpp"

namespace pcp::ad {

inline double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / (std::fabs(analytic) + std::fabs(numeric) + 1e-8);
}

// Largest relative error between the backward-pass gradient of f at x and
// central differences of step eps. `coords` restricts the probe to a subset
// of flat indices; empty means every coordinate.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps = 1e-4, std::vector<std::size_t> coords = {}) {
  reset_graph();
  Tensor leaf = Tensor::from(x.shape(), x.data(), true);
  Tensor y = f(leaf);
  backward(y);
  std::vector<double> analytic = leaf.has_grad() ? leaf.grad() : std::vector<double>(leaf.size(), 0.0);
  reset_graph();

  if (coords.empty()) {
    coords.resize(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }
  NoGradGuard ng;
  double worst = 0.0;
  for (std::size_t i : coords) {
    std::vector<double> d = x.data();
    d[i] = x.data()[i] + eps;
    const double fp = f(Tensor::from(x.shape(), d)).item();
    d[i] = x.data()[i] - eps;
    const double fm = f(Tensor::from(x.shape(), d)).item();
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

// Same probe for a closure over several parameter tensors, which are
// perturbed in place. Each probe is (parameter index, flat index).
struct ProbePoint {
  std::size_t param;
  std::size_t index;
};

inline double grad_check_params(const std::function<Tensor()>& f, std::vector<Tensor>& params,
                                const std::vector<ProbePoint>& probes, double eps = 1e-4) {
  reset_graph();
  for (auto& p : params) p.zero_grad();
  backward(f());
  std::vector<double> analytic;
  for (const auto& pp : probes) analytic.push_back(params[pp.param].grad()[pp.index]);
  reset_graph();

  NoGradGuard ng;
  double worst = 0.0;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    double& v = params[probes[k].param].mutable_data()[probes[k].index];
    const double orig = v;
    v = orig + eps;
    const double fp = f().item();
    v = orig - eps;
    const double fm = f().item();
    v = orig;
    worst = std::max(worst, relative_error(analytic[k], (fp - fm) / (2.0 * eps)));
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace pcp::ad
