#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vfgs/autograd.hpp"
#include "vfgs/tensor.hpp"

namespace vfgs::testing {

template <typename T>
std::vector<T> as_vector(const Tensor<T>& t) {
  return {t.vec().begin(), t.vec().end()};
}

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(s));
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (Index i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

// max |a-b| / max(max|b|, floor)
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-12) {
  return max_abs_diff(a, b) / std::max(static_cast<double>(b.max_abs()), floor);
}

// Norm-wise relative error between the analytic gradient of a scalar function
// and its central finite difference, worst over the given inputs. The
// denominator is floored so identically-zero gradients compare against
// finite-difference noise rather than against zero.
inline double gradient_check(const std::function<Var<double>(std::vector<Var<double>>&)>& f,
                             std::vector<Var<double>>& inputs, double h = 1e-6, double floor = 1e-5) {
  for (auto& v : inputs) v.zero_grad();
  auto out = f(inputs);
  backward(out);
  std::vector<Tensor<double>> analytic;
  for (auto& v : inputs) analytic.push_back(v.grad().empty() ? Tensor<double>::zeros_like(v.value()) : v.grad());
  double worst = 0;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& x = inputs[k].mutable_value();
    double num2 = 0, diff2 = 0, ana2 = 0;
    for (Index i = 0; i < x.numel(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = f(inputs).value()[0];
      x[i] = orig - h;
      const double fm = f(inputs).value()[0];
      x[i] = orig;
      const double num = (fp - fm) / (2 * h);
      const double ana = analytic[k][i];
      num2 += num * num;
      ana2 += ana * ana;
      diff2 += (num - ana) * (num - ana);
    }
    const double scale = std::max({std::sqrt(num2), std::sqrt(ana2), floor});
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

}  // namespace vfgs::testing
