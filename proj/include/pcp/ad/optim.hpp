#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pcp/ad/tensor.hpp"

namespace pcp::ad {

// Named trainable tensors in registration order.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor t) {
    if (!t.requires_grad()) t = Tensor::from(t.shape(), t.data(), true);
    items_.emplace_back(std::move(name), std::move(t));
    return items_.back().second;
  }
  std::size_t size() const { return items_.size(); }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  void zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
  }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }
  double grad_norm() const {
    double s = 0.0;
    for (const auto& [n, t] : items_)
      if (t.has_grad())
        for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
  }
  void scale_grad(double c) {
    for (auto& [n, t] : items_)
      if (t.has_grad())
        for (double& g : t.mutable_grad()) g *= c;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(ParamSet& params, Options opt) : params_(params), opt_(opt) {
    for (const auto& [n, t] : params_.items()) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    auto& items = params_.items();
    for (std::size_t k = 0; k < items.size(); ++k) {
      Tensor& p = items[k].second;
      if (!p.has_grad()) continue;
      auto& w = p.mutable_data();
      const auto& g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g[i];
        v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g[i] * g[i];
        const double mh = m_[k][i] / bc1;
        const double vh = v_[k][i] / bc2;
        w[i] -= lr * (mh / (std::sqrt(vh) + opt_.eps) + opt_.weight_decay * w[i]);
      }
    }
  }
  void step() { step(opt_.lr); }
  long steps() const { return t_; }

 private:
  ParamSet& params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Cosine annealing from base to floor over total steps.
inline double cosine_lr(double base, long step, long total, double floor = 0.0) {
  if (total <= 0) return base;
  const double p = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * p));
}

}  // namespace pcp::ad
