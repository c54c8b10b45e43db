#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vfgs/nn/module.hpp"

namespace vfgs::train {

// Adam with bias correction. Parameters without a gradient this step are
// left untouched.
template <typename T>
class Adam {
 public:
  struct Slot {
    std::string name;
    Var<T>* param;
    Tensor<T> m, v;
  };

  Adam() = default;
  Adam(std::vector<std::pair<std::string, Var<T>*>> params, double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, p] : params)
      slots_.push_back({name, p, Tensor<T>::zeros_like(p->value()), Tensor<T>::zeros_like(p->value())});
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
      const auto& g = s.param->grad();
      if (g.empty()) continue;
      auto& w = s.param->mutable_value();
      for (Index i = 0; i < w.numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double m = beta1_ * static_cast<double>(s.m[i]) + (1 - beta1_) * gi;
        const double v = beta2_ * static_cast<double>(s.v[i]) + (1 - beta2_) * gi * gi;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  std::vector<Slot>& slots() { return slots_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace vfgs::train
