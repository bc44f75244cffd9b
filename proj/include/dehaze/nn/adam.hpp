#pragma once

#include <cmath>
#include <vector>

#include "dehaze/nn/layers.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze::nn {

// Adam over an attached parameter group. Moment tensors live here and are
// serialized with checkpoints so a resumed run continues bit-identically.
template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(std::vector<ParamRef<T>> params) {
    params_ = std::move(params);
    m_.clear();
    v_.clear();
    for (const auto& p : params_) {
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
    t_ = 0;
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T>& theta = *params_[k].value;
      const Tensor<T>& g = *params_[k].grad;
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (std::int64_t i = 0; i < theta.numel(); ++i) {
        m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
        v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        theta[i] = static_cast<T>(theta[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  const std::vector<ParamRef<T>>& params() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<ParamRef<T>> params_;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace dehaze::nn
