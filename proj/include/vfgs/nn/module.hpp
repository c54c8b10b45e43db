#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "vfgs/nn/ops.hpp"

namespace vfgs::nn {

using Rng = std::mt19937_64;

// Walks the named state of a module tree. Parameters are trainable; buffers
// (normalization running statistics) are persisted but not optimized.
template <typename T>
struct StateVisitor {
  std::function<void(const std::string&, Var<T>&)> param;
  std::function<void(const std::string&, Tensor<T>&)> buffer;
};

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
Var<T> make_param(Shape s, T fill = T(0)) {
  return Var<T>(Tensor<T>(std::move(s), fill), true);
}

template <typename T>
void fill_normal(Var<T>& v, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : v.mutable_value().vec()) x = static_cast<T>(dist(rng));
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index cin, Index cout, Index kernel, Index padding, Index dilation, bool bias, Rng& rng)
      : weight_(make_param<T>(Shape{cout, cin, kernel, kernel})), opt_{padding, dilation} {
    // He-normal: fan-in scaled for ReLU networks.
    fill_normal(weight_, rng, std::sqrt(2.0 / static_cast<double>(cin * kernel * kernel)));
    if (bias) bias_ = make_param<T>(Shape{cout});
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight_, bias_, opt_); }

  void visit(const std::string& prefix, StateVisitor<T>& v) {
    v.param(join(prefix, "weight"), weight_);
    if (bias_) v.param(join(prefix, "bias"), *bias_);
  }

  Var<T>& weight() { return weight_; }
  std::optional<Var<T>>& bias() { return bias_; }
  Index in_channels() const { return weight_.dim(1); }
  Index out_channels() const { return weight_.dim(0); }

 private:
  Var<T> weight_;
  std::optional<Var<T>> bias_;
  ops::Conv2dOptions opt_;
};

template <typename T>
class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  explicit BatchNorm2d(Index c)
      : gamma_(make_param<T>(Shape{c}, T(1))),
        beta_(make_param<T>(Shape{c})),
        running_mean_(Shape{c}),
        running_var_(Shape{c}, T(1)) {}

  Var<T> operator()(const Var<T>& x, bool training) {
    return ops::batch_norm2d(x, gamma_, beta_, running_mean_, running_var_,
                             {training, kMomentum, kEps});
  }

  void visit(const std::string& prefix, StateVisitor<T>& v) {
    v.param(join(prefix, "gamma"), gamma_);
    v.param(join(prefix, "beta"), beta_);
    v.buffer(join(prefix, "running_mean"), running_mean_);
    v.buffer(join(prefix, "running_var"), running_var_);
  }

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }

 private:
  Var<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(Index din, Index dout, bool bias, Rng& rng) : weight_(make_param<T>(Shape{dout, din})) {
    fill_normal(weight_, rng, 1.0 / std::sqrt(static_cast<double>(din)));
    if (bias) bias_ = make_param<T>(Shape{dout});
  }

  Var<T> operator()(const Var<T>& x) const { return ops::linear(x, weight_, bias_); }

  void visit(const std::string& prefix, StateVisitor<T>& v) {
    v.param(join(prefix, "weight"), weight_);
    if (bias_) v.param(join(prefix, "bias"), *bias_);
  }

  Var<T>& weight() { return weight_; }

 private:
  Var<T> weight_;
  std::optional<Var<T>> bias_;
};

// Counts trainable scalars of any module exposing visit().
template <typename T, typename M>
Index parameter_count(M& module) {
  Index n = 0;
  StateVisitor<T> v{[&](const std::string&, Var<T>& p) { n += p.value().numel(); },
                    [](const std::string&, Tensor<T>&) {}};
  module.visit("", v);
  return n;
}

template <typename T, typename M>
std::vector<std::pair<std::string, Var<T>*>> named_parameters(M& module) {
  std::vector<std::pair<std::string, Var<T>*>> out;
  StateVisitor<T> v{[&](const std::string& n, Var<T>& p) { out.emplace_back(n, &p); },
                    [](const std::string&, Tensor<T>&) {}};
  module.visit("", v);
  return out;
}

template <typename T, typename M>
void zero_grad(M& module) {
  StateVisitor<T> v{[](const std::string&, Var<T>& p) { p.zero_grad(); },
                    [](const std::string&, Tensor<T>&) {}};
  module.visit("", v);
}

}  // namespace vfgs::nn
