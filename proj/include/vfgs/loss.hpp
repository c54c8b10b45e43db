#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vfgs/nn/ops.hpp"

namespace vfgs {

struct LossConfig {
  enum class WeightMode { Fixed, BatchRatio };
  WeightMode fg_weight_mode = WeightMode::BatchRatio;
  double fixed_p = 1.0;
  double p_clamp_min = 1.0;
  double p_clamp_max = 20.0;
  double epsilon = 1e-7;

  void validate() const {
    if (!(fixed_p > 0)) throw ConfigError("loss.fixed_p must be > 0");
    if (!(epsilon > 0)) throw ConfigError("loss.epsilon must be > 0");
    if (!(p_clamp_min >= 1) || p_clamp_max < p_clamp_min)
      throw ConfigError("loss.p_clamp must satisfy 1 <= min <= max");
  }
};

inline constexpr double kProbClamp = 1e-7;

namespace detail {

template <typename T>
void require_binary_target(const Tensor<T>& logits, const Tensor<T>& target, const char* what) {
  logits.check_same(target, what);
  for (Index i = 0; i < target.numel(); ++i)
    if (target[i] != T(0) && target[i] != T(1))
      throw ContractError(std::string(what) + ": target must be binary, found " +
                          std::to_string(static_cast<double>(target[i])));
}

}  // namespace detail

// -(1/N) sum [p y log yhat + (1 - y) log(1 - yhat)], yhat = sigmoid(logits)
// clamped to [1e-7, 1 - 1e-7]. p weights the positive term only.
template <typename T>
Var<T> weighted_bce(const Var<T>& logits, const Tensor<T>& target, double p) {
  detail::require_binary_target(logits.value(), target, "weighted_bce");
  const Index n = target.numel();
  double acc = 0;
  for (Index i = 0; i < n; ++i) {
    const double yh = std::clamp(static_cast<double>(ops::detail::sigmoid(logits.value()[i])), kProbClamp, 1 - kProbClamp);
    acc += target[i] > 0 ? p * std::log(yh) : std::log(1 - yh);
  }
  Tensor<T> out(Shape{1}, static_cast<T>(-acc / static_cast<double>(n)));
  return make_op_result<T>(std::move(out), {logits}, [target, p, n](const Tensor<T>& g, const ops::NodePtrs<T>& par) {
    auto& gz = par[0]->grad_buffer();
    const auto& z = par[0]->value;
    for (Index i = 0; i < n; ++i) {
      const double s = ops::detail::sigmoid(static_cast<double>(z[i]));
      if (s < kProbClamp || s > 1 - kProbClamp) continue;
      const double d = target[i] > 0 ? -p * (1 - s) : s;
      gz[i] += static_cast<T>(g[0] * d / static_cast<double>(n));
    }
  });
}

// 1 - (2 sum yhat y + eps) / (sum yhat + sum y + eps).
template <typename T>
Var<T> dice_loss(const Var<T>& logits, const Tensor<T>& target, double eps = 1e-7) {
  detail::require_binary_target(logits.value(), target, "dice_loss");
  const Index n = target.numel();
  std::vector<double> yh(static_cast<std::size_t>(n));
  double inter = 0, spred = 0, sy = 0;
  for (Index i = 0; i < n; ++i) {
    yh[i] = ops::detail::sigmoid(static_cast<double>(logits.value()[i]));
    inter += yh[i] * target[i];
    spred += yh[i];
    sy += target[i];
  }
  const double num = 2 * inter + eps, den = spred + sy + eps;
  Tensor<T> out(Shape{1}, static_cast<T>(1 - num / den));
  return make_op_result<T>(std::move(out), {logits},
                           [target, yh = std::move(yh), num, den, n](const Tensor<T>& g, const ops::NodePtrs<T>& p) {
                             auto& gz = p[0]->grad_buffer();
                             for (Index i = 0; i < n; ++i) {
                               // d/dyhat of -(num/den), chained through sigmoid'.
                               const double dyh = -(2 * target[i] * den - num) / (den * den);
                               gz[i] += static_cast<T>(g[0] * dyh * yh[i] * (1 - yh[i]));
                             }
                           });
}

template <typename T>
struct LossResult {
  Var<T> total;
  double bce = 0;
  double dice = 0;
  double p_used = 0;
};

// Foreground weight for a batch: fixed, or #neg/#pos clamped (the clamp
// maximum when the batch has no positives).
template <typename T>
double foreground_weight(const Tensor<T>& target, const LossConfig& cfg) {
  if (cfg.fg_weight_mode == LossConfig::WeightMode::Fixed) return cfg.fixed_p;
  double pos = 0;
  for (Index i = 0; i < target.numel(); ++i) pos += target[i] > 0 ? 1 : 0;
  if (pos == 0) return cfg.p_clamp_max;
  const double neg = static_cast<double>(target.numel()) - pos;
  return std::clamp(neg / pos, cfg.p_clamp_min, cfg.p_clamp_max);
}

template <typename T>
LossResult<T> total_loss(const Var<T>& logits, const Tensor<T>& target, const LossConfig& cfg) {
  cfg.validate();
  LossResult<T> r;
  r.p_used = foreground_weight(target, cfg);
  auto bce = weighted_bce(logits, target, r.p_used);
  auto dice = dice_loss(logits, target, cfg.epsilon);
  r.bce = static_cast<double>(bce.value()[0]);
  r.dice = static_cast<double>(dice.value()[0]);
  r.total = ops::add(bce, dice);
  return r;
}

}  // namespace vfgs
