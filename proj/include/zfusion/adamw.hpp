#pragma once

#include <cstdint>
#include <vector>

#include "zfusion/tensor.hpp"

namespace zfusion {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay: decay acts on the parameters directly
/// and never enters the moment estimates. Step counter is good to 2^31 steps.
class AdamW {
 public:
  AdamW() = default;

  AdamW(AdamWConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
      m_.push_back(Tensor::zeros_like(*p));
      v_.push_back(Tensor::zeros_like(*p));
    }
  }

  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ArgumentError("adamw: parameter/gradient list size changed since construction");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      check_same_shape(p, g, "adamw");
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      check_same_shape(p, m, "adamw state");
      for (std::size_t k = 0; k < p.numel(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p[k] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[k]);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace zfusion
