#pragma once

#include <cmath>
#include <vector>

#include "studa/core/nn.hpp"

namespace studa::optim {

// Polynomial decay: base * (1 - step/total)^power.
inline double poly_lr(double base, long step, long total, double power = 0.9) {
  if (total <= 0) return base;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return base * std::pow(1.0 - frac, power);
}

// Halves (or scales by gamma) every `step_size` steps.
inline double step_lr(double base, long step, long step_size, double gamma = 0.5) {
  if (step_size <= 0) return base;
  return base * std::pow(gamma, static_cast<double>(step / step_size));
}

template <class T>
class Sgd {
 public:
  Sgd(nn::ParameterSet<T>& ps, double momentum, double weight_decay)
      : ps_(&ps), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& [_, v] : ps.items()) velocity_.emplace_back(v.shape());
  }

  void step(double lr) {
    std::size_t k = 0;
    for (const auto& [_, v] : ps_->items()) {
      auto param = v;
      auto& vel = velocity_[k++];
      if (param.grad().size() != param.value().size()) continue;
      T* p = param.mutable_value().data();
      const T* g = param.grad().data();
      for (std::size_t i = 0; i < vel.size(); ++i) {
        const T gi = g[i] + static_cast<T>(weight_decay_) * p[i];
        vel[i] = static_cast<T>(momentum_) * vel[i] + gi;
        p[i] -= static_cast<T>(lr) * vel[i];
      }
    }
  }

 private:
  nn::ParameterSet<T>* ps_;
  double momentum_, weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

template <class T>
class Adam {
 public:
  Adam(nn::ParameterSet<T>& ps, double beta1, double beta2, double eps = 1e-8, double weight_decay = 0.0)
      : ps_(&ps), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {
    for (const auto& [_, v] : ps.items()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    std::size_t k = 0;
    for (const auto& [_, var] : ps_->items()) {
      auto param = var;
      auto& m = m_[k];
      auto& v = v_[k++];
      if (param.grad().size() != param.value().size()) continue;
      T* p = param.mutable_value().data();
      const T* g = param.grad().data();
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double gi = g[i] + wd_ * p[i];
        m[i] = static_cast<T>(b1_ * m[i] + (1 - b1_) * gi);
        v[i] = static_cast<T>(b2_ * v[i] + (1 - b2_) * gi * gi);
        p[i] -= static_cast<T>(lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
      }
    }
  }

 private:
  nn::ParameterSet<T>* ps_;
  double b1_, b2_, eps_, wd_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace studa::optim
