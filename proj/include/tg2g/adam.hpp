#pragma once

// Bias-corrected Adam over a fixed parameter list, and a central
// finite-difference gradient checker used throughout the test suites.

#include <cmath>
#include <functional>
#include <vector>

#include "tg2g/tensor.hpp"

namespace tg2g {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr < 0.0) throw value_error("adam: lr must be >= 0");
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    for (const auto& p : params_)
      if (!p.has_grad()) throw value_error("adam: parameter has no gradient");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& x = params_[k].data();
      const auto& g = params_[k].grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  long step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Max relative error between the autodiff gradient of f at x and central
// finite differences with step h. f must treat its argument as the only
// differentiable input.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5) {
  Tensor xt = Tensor::from(x.data(), x.shape(), true);
  Tensor fx = f(xt);
  if (!std::isfinite(fx.item())) throw value_error("grad_check: non-finite f(x)");
  backward(fx);
  const auto& g = xt.grad();

  double max_rel = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto d_plus = x.data();
    auto d_minus = x.data();
    d_plus[i] += h;
    d_minus[i] -= h;
    const double fp = f(Tensor::from(std::move(d_plus), x.shape())).item();
    const double fm = f(Tensor::from(std::move(d_minus), x.shape())).item();
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::fabs(g[i]), std::fabs(fd), 1e-8});
    max_rel = std::max(max_rel, std::fabs(g[i] - fd) / denom);
  }
  return max_rel;
}

// Variant for parameters embedded in a model: loss_fn() must rebuild the
// forward pass reading the current contents of `param`. The autodiff
// gradient is taken from one backward pass; finite differences perturb the
// parameter storage in place.
inline double grad_check_param(const std::function<Tensor(void)>& loss_fn, Tensor param,
                               double h = 1e-5) {
  param.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw value_error("grad_check: non-finite loss");
  backward(loss);
  const std::vector<double> g = param.grad();

  double max_rel = 0.0;
  auto& x = param.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = loss_fn().item();
    x[i] = orig - h;
    const double fm = loss_fn().item();
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::fabs(g[i]), std::fabs(fd), 1e-8});
    max_rel = std::max(max_rel, std::fabs(g[i] - fd) / denom);
  }
  return max_rel;
}

}  // namespace tg2g
