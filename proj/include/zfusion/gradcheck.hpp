#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zfusion/rng.hpp"
#include "zfusion/tensor.hpp"

namespace zfusion {

/// A differentiable operation as seen by the checker: a pure forward and a
/// vector-Jacobian product over the same input list. The backward may
/// recompute whatever forward state it needs.
struct DiffOp {
  std::string name;
  std::function<Tensor(const std::vector<Tensor>&)> forward;
  std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor&)> vjp;
};

inline constexpr double kGradcheckStep = 1e-5;

/// Central finite-difference check of op.vjp against op.forward.
///
/// For each input tensor the error is ||analytic - numeric||_2 scaled by
/// max(||analytic||_2, ||numeric||_2, 1e-8); the maximum over inputs is
/// returned. The upstream gradient is drawn from rng.
inline double gradcheck(const DiffOp& op, const std::vector<Tensor>& inputs, Rng& rng) {
  const Tensor y0 = op.forward(inputs);
  Tensor upstream(y0.shape());
  rng.fill_signed_unit(upstream);

  const std::vector<Tensor> analytic = op.vjp(inputs, upstream);
  if (analytic.size() != inputs.size()) {
    throw ShapeError(op.name + ": vjp returned " + std::to_string(analytic.size()) +
                     " gradients for " + std::to_string(inputs.size()) + " inputs");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!analytic[i].same_shape(inputs[i])) {
      throw ShapeError(op.name + ": gradient " + std::to_string(i) + " has shape " +
                       analytic[i].shape_str() + ", expected " + inputs[i].shape_str());
    }
    for (std::size_t k = 0; k < analytic[i].numel(); ++k) {
      if (!std::isfinite(analytic[i][k])) {
        throw NumericError(op.name + ": non-finite analytic gradient at input " +
                           std::to_string(i) + " index " + std::to_string(k));
      }
    }
  }

  const auto loss = [&](const std::vector<Tensor>& in) {
    const Tensor y = op.forward(in);
    double s = 0.0;
    for (std::size_t k = 0; k < y.numel(); ++k) s += y[k] * upstream[k];
    return s;
  };

  double max_rel = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double diff_sq = 0.0, num_sq = 0.0;
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      const double keep = probe[i][k];
      probe[i][k] = keep + kGradcheckStep;
      const double fp = loss(probe);
      probe[i][k] = keep - kGradcheckStep;
      const double fm = loss(probe);
      probe[i][k] = keep;
      const double numeric = (fp - fm) / (2.0 * kGradcheckStep);
      const double d = analytic[i][k] - numeric;
      diff_sq += d * d;
      num_sq += numeric * numeric;
    }
    const double ana_norm = l2_norm(analytic[i]);
    const double scale = std::max({ana_norm, std::sqrt(num_sq), 1e-8});
    max_rel = std::max(max_rel, std::sqrt(diff_sq) / scale);
  }
  return max_rel;
}

/// Checks that a zero upstream gradient produces exactly zero input gradients.
inline bool vjp_zero_propagates(const DiffOp& op, const std::vector<Tensor>& inputs) {
  const Tensor y0 = op.forward(inputs);
  const Tensor zero(y0.shape());
  for (const Tensor& g : op.vjp(inputs, zero)) {
    for (std::size_t k = 0; k < g.numel(); ++k) {
      if (g[k] != 0.0) return false;
    }
  }
  return true;
}

/// One named gradcheck case: an op together with a generator of random input
/// instances. Generators must only produce inputs on which the op is smooth
/// within the finite-difference step (the deformable ops resample instances
/// whose bilinear taps fall too close to cell boundaries).
struct GradcheckCase {
  DiffOp op;
  std::function<std::vector<Tensor>(Rng&)> make_inputs;
  double tolerance = 1e-5;
};

struct GradcheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  int instances = 0;
  bool passed = false;
};

inline GradcheckResult run_gradcheck_case(const GradcheckCase& c, Rng& rng, int instances) {
  GradcheckResult r;
  r.name = c.op.name;
  r.tolerance = c.tolerance;
  r.instances = instances;
  for (int i = 0; i < instances; ++i) {
    const std::vector<Tensor> inputs = c.make_inputs(rng);
    r.max_error = std::max(r.max_error, gradcheck(c.op, inputs, rng));
  }
  r.passed = r.max_error < c.tolerance;
  return r;
}

}  // namespace zfusion
