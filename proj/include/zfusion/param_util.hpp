#pragma once

#include <string>
#include <vector>

#include "zfusion/rng.hpp"
#include "zfusion/tensor.hpp"

// Helpers over parameter bundles. Every bundle type B exposes
//   template <class Self, class Fn> static void visit(Self&, const std::string& prefix, Fn&&)
// enumerating its tensors in a fixed order with stable dotted names; these
// functions build flat views for the optimizer, the gradient checker and the
// checkpoint writer from that single enumeration.

namespace zfusion {

template <class P>
std::vector<Tensor*> param_ptrs(P& p) {
  std::vector<Tensor*> out;
  P::visit(p, "", [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

template <class P>
std::vector<const Tensor*> param_ptrs(const P& p) {
  std::vector<const Tensor*> out;
  P::visit(p, "", [&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

template <class P>
std::vector<Tensor> param_values(const P& p) {
  std::vector<Tensor> out;
  P::visit(p, "", [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

template <class P>
std::vector<std::string> param_names(const P& p, const std::string& prefix = "") {
  std::vector<std::string> out;
  P::visit(p, prefix, [&](const std::string& name, const Tensor&) { out.push_back(name); });
  return out;
}

/// Overwrites p's tensors from vals starting at *idx, advancing *idx.
template <class P>
void load_param_values(P& p, const std::vector<Tensor>& vals, std::size_t* idx) {
  P::visit(p, "", [&](const std::string& name, Tensor& t) {
    if (*idx >= vals.size()) throw ShapeError("load_param_values: ran out of tensors");
    if (!vals[*idx].same_shape(t)) {
      throw ShapeError("load_param_values: shape mismatch at " + name);
    }
    t = vals[(*idx)++];
  });
}

template <class P>
void fill_params_random(P& p, Rng& rng) {
  P::visit(p, "", [&](const std::string&, Tensor& t) { rng.fill_signed_unit(t); });
}

template <class P>
void zero_params(P& p) {
  P::visit(p, "", [&](const std::string&, Tensor& t) { t.fill(0.0); });
}

template <class P>
double param_grad_norm(const P& p) {
  double s = 0.0;
  P::visit(p, "", [&](const std::string&, const Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
  });
  return std::sqrt(s);
}

}  // namespace zfusion
