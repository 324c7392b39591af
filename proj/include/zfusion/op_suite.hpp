#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zfusion/fp_ddca.hpp"
#include "zfusion/gradcheck.hpp"
#include "zfusion/param_util.hpp"

// The registry of gradient-check cases for every differentiable operation.
// Instance generators draw random small shapes and values; the deformable
// cases additionally resample until every bilinear tap keeps a margin from
// integer grid lines, where interpolation has derivative kinks that would
// poison the finite-difference window.

namespace zfusion {

inline constexpr double kTapMargin = 5e-4;
inline constexpr int kMaxInstanceTries = 20000;

namespace suite_detail {

inline Tensor rand_tensor(Rng& rng, const std::vector<std::size_t>& shape) {
  Tensor t(shape);
  rng.fill_signed_unit(t);
  return t;
}

/// Shrinks the offset nets of freshly randomized DCA params so sampling
/// positions move slowly under finite-difference perturbations.
inline void temper_offsets(DcaParams& p) {
  for (std::size_t i = 0; i < p.w_offset.numel(); ++i) p.w_offset[i] *= 0.1;
  for (std::size_t i = 0; i < p.b_offset.numel(); ++i) p.b_offset[i] *= 0.1;
}

inline void temper_offsets(SubblockParams& p) { temper_offsets(p.dca); }

inline void temper_offsets(DdcaParams& p) {
  temper_offsets(p.pass1);
  temper_offsets(p.pass2);
}

inline void temper_offsets(FpDdcaParams& p) {
  for (auto& stack : p.scales) {
    for (auto& block : stack) temper_offsets(block);
  }
}

}  // namespace suite_detail

// ---------------------------------------------------------------------------
// elementary ops

inline GradcheckCase linear_case() {
  GradcheckCase c;
  c.op.name = "linear";
  c.op.forward = [](const std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    Tensor gw = Tensor::zeros_like(in[1]);
    Tensor gb = Tensor::zeros_like(in[2]);
    linear_backward(in[0], in[1], g, &gx, &gw, &gb);
    return std::vector<Tensor>{gx, gw, gb};
  };
  c.make_inputs = [](Rng& rng) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto cin = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto cout = static_cast<std::size_t>(rng.uniform_int(1, 4));
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {rows, cin}),
                               suite_detail::rand_tensor(rng, {cin, cout}),
                               suite_detail::rand_tensor(rng, {cout})};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase softmax_case() {
  GradcheckCase c;
  c.op.name = "softmax_lastdim";
  c.op.forward = [](const std::vector<Tensor>& in) { return softmax_lastdim(in[0]); };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    const Tensor y = softmax_lastdim(in[0]);
    Tensor gx = Tensor::zeros_like(in[0]);
    softmax_lastdim_backward(y, g, &gx);
    return std::vector<Tensor>{gx};
  };
  c.make_inputs = [](Rng& rng) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {rows, n})};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase bilinear_case() {
  GradcheckCase c;
  c.op.name = "bilinear_sample";
  c.op.forward = [](const std::vector<Tensor>& in) {
    return bilinear_sample(in[0], in[1][0], in[1][1]);
  };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gmap = Tensor::zeros_like(in[0]);
    Tensor gpos = Tensor::zeros_like(in[1]);
    bilinear_sample_backward(in[0], in[1][0], in[1][1], g, &gmap, &gpos[0], &gpos[1]);
    return std::vector<Tensor>{gmap, gpos};
  };
  c.make_inputs = [](Rng& rng) {
    const auto C = static_cast<std::size_t>(rng.uniform_int(1, 3));
    Tensor map = suite_detail::rand_tensor(rng, {C, 5, 5});
    Tensor pos({2});
    // keep the sample point a safe distance from the interpolation kinks
    pos[0] = static_cast<double>(rng.uniform_int(0, 3)) + rng.uniform(0.05, 0.95);
    pos[1] = static_cast<double>(rng.uniform_int(0, 3)) + rng.uniform(0.05, 0.95);
    return std::vector<Tensor>{map, pos};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase conv2d_case() {
  GradcheckCase c;
  c.op.name = "conv2d";
  // stride/pad ride along as a constant tensor so each instance can vary them
  c.op.forward = [](const std::vector<Tensor>& in) {
    return conv2d(in[0], in[1], in[2], static_cast<std::size_t>(in[3][0]),
                  static_cast<std::size_t>(in[3][1]));
  };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    Tensor gk = Tensor::zeros_like(in[1]);
    Tensor gb = Tensor::zeros_like(in[2]);
    conv2d_backward(in[0], in[1], static_cast<std::size_t>(in[3][0]),
                    static_cast<std::size_t>(in[3][1]), g, &gx, &gk, &gb);
    return std::vector<Tensor>{gx, gk, gb, Tensor::zeros_like(in[3])};
  };
  c.make_inputs = [](Rng& rng) {
    const std::size_t k = rng.bernoulli(0.5) ? 1 : 3;
    const std::size_t stride = rng.bernoulli(0.5) ? 1 : 2;
    const std::size_t pad = (k == 3) ? 1 : 0;
    const auto cin = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto cout = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto H = static_cast<std::size_t>(rng.uniform_int(3, 6));
    const auto W = static_cast<std::size_t>(rng.uniform_int(3, 6));
    Tensor meta({2});
    meta[0] = static_cast<double>(stride);
    meta[1] = static_cast<double>(pad);
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {cin, H, W}),
                               suite_detail::rand_tensor(rng, {cout, cin, k, k}),
                               suite_detail::rand_tensor(rng, {cout}), meta};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase avgpool_case() {
  GradcheckCase c;
  c.op.name = "avgpool2";
  c.op.forward = [](const std::vector<Tensor>& in) { return avgpool2(in[0]); };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    avgpool2_backward(g, &gx);
    return std::vector<Tensor>{gx};
  };
  c.make_inputs = [](Rng& rng) {
    const auto C = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto H = 2 * static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto W = 2 * static_cast<std::size_t>(rng.uniform_int(1, 3));
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {C, H, W})};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase upsample_case() {
  GradcheckCase c;
  c.op.name = "upsample_nearest";
  c.op.forward = [](const std::vector<Tensor>& in) { return upsample_nearest(in[0], 2); };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    upsample_nearest_backward(g, 2, &gx);
    return std::vector<Tensor>{gx};
  };
  c.make_inputs = [](Rng& rng) {
    const auto C = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto H = static_cast<std::size_t>(rng.uniform_int(1, 4));
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {C, H, H})};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase map_linear_case() {
  GradcheckCase c;
  c.op.name = "map_linear";
  c.op.forward = [](const std::vector<Tensor>& in) { return map_linear(in[0], in[1], in[2]); };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    Tensor gw = Tensor::zeros_like(in[1]);
    Tensor gb = Tensor::zeros_like(in[2]);
    map_linear_backward(in[0], in[1], g, &gx, &gw, &gb);
    return std::vector<Tensor>{gx, gw, gb};
  };
  c.make_inputs = [](Rng& rng) {
    const auto cin = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto cout = static_cast<std::size_t>(rng.uniform_int(1, 4));
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {cin, 3, 3}),
                               suite_detail::rand_tensor(rng, {cin, cout}),
                               suite_detail::rand_tensor(rng, {cout})};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase layer_norm_case() {
  GradcheckCase c;
  c.op.name = "layer_norm_map";
  c.op.forward = [](const std::vector<Tensor>& in) {
    return layer_norm_map(in[0], in[1], in[2], nullptr);
  };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    LayerNormCtx ctx;
    layer_norm_map(in[0], in[1], in[2], &ctx);
    Tensor gx = Tensor::zeros_like(in[0]);
    Tensor gg = Tensor::zeros_like(in[1]);
    Tensor gb = Tensor::zeros_like(in[2]);
    layer_norm_map_backward(in[0], in[1], ctx, g, &gx, &gg, &gb);
    return std::vector<Tensor>{gx, gg, gb};
  };
  c.make_inputs = [](Rng& rng) {
    const auto C = static_cast<std::size_t>(rng.uniform_int(2, 6));
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {C, 2, 3}),
                               suite_detail::rand_tensor(rng, {C}),
                               suite_detail::rand_tensor(rng, {C})};
  };
  c.tolerance = 1e-6;
  return c;
}

inline GradcheckCase gelu_case() {
  GradcheckCase c;
  c.op.name = "gelu";
  c.op.forward = [](const std::vector<Tensor>& in) { return gelu(in[0]); };
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    gelu_backward(in[0], g, &gx);
    return std::vector<Tensor>{gx};
  };
  c.make_inputs = [](Rng& rng) {
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {3, 5})};
  };
  c.tolerance = 1e-6;
  return c;
}

// ---------------------------------------------------------------------------
// fusion operators. Inputs are [maps..., params in visit order]; parameters
// are rebuilt from the flat list inside forward/vjp so the checker can
// perturb every learnable tensor.

inline GradcheckCase dca_case() {
  const DcaConfig cfg{4, 2, 3};
  const std::size_t grid = 5;
  GradcheckCase c;
  c.op.name = "dca_forward";
  auto rebuild = [cfg](const std::vector<Tensor>& in) {
    DcaParams p(cfg);
    std::size_t idx = 2;
    load_param_values(p, in, &idx);
    return p;
  };
  c.op.forward = [rebuild](const std::vector<Tensor>& in) {
    return dca_forward(rebuild(in), in[0], in[1], nullptr);
  };
  c.op.vjp = [rebuild, cfg](const std::vector<Tensor>& in, const Tensor& g) {
    const DcaParams p = rebuild(in);
    DcaContext ctx;
    dca_forward(p, in[0], in[1], &ctx);
    Tensor gq = Tensor::zeros_like(in[0]);
    Tensor gkv = Tensor::zeros_like(in[1]);
    DcaParams gp(cfg);
    dca_backward(p, in[0], in[1], ctx, g, &gq, &gkv, &gp);
    std::vector<Tensor> out{gq, gkv};
    for (const Tensor& t : param_values(gp)) out.push_back(t);
    return out;
  };
  c.make_inputs = [cfg, grid](Rng& rng) {
    for (int tries = 0; tries < kMaxInstanceTries; ++tries) {
      Tensor q = suite_detail::rand_tensor(rng, {cfg.channels, grid, grid});
      Tensor kv = suite_detail::rand_tensor(rng, {cfg.channels, grid, grid});
      DcaParams p(cfg);
      fill_params_random(p, rng);
      suite_detail::temper_offsets(p);
      DcaContext ctx;
      dca_forward(p, q, kv, &ctx);
      if (min_tap_integer_distance(ctx) > kTapMargin) {
        std::vector<Tensor> in{q, kv};
        for (const Tensor& t : param_values(p)) in.push_back(t);
        return in;
      }
    }
    throw NumericError("dca_forward: no smooth gradcheck instance found");
  };
  c.tolerance = 1e-5;
  return c;
}

inline GradcheckCase ddca_case() {
  const DcaConfig cfg{4, 2, 2};
  const std::size_t grid = 4;
  GradcheckCase c;
  c.op.name = "ddca_forward";
  auto rebuild = [cfg](const std::vector<Tensor>& in) {
    DdcaParams p(cfg);
    std::size_t idx = 2;
    load_param_values(p, in, &idx);
    return p;
  };
  c.op.forward = [rebuild](const std::vector<Tensor>& in) {
    return ddca_forward(rebuild(in), in[0], in[1], nullptr);
  };
  c.op.vjp = [rebuild, cfg](const std::vector<Tensor>& in, const Tensor& g) {
    const DdcaParams p = rebuild(in);
    DdcaContext ctx;
    ddca_forward(p, in[0], in[1], &ctx);
    Tensor g0 = Tensor::zeros_like(in[0]);
    Tensor g1 = Tensor::zeros_like(in[1]);
    DdcaParams gp(cfg);
    ddca_backward(p, in[0], in[1], ctx, g, &g0, &g1, &gp);
    std::vector<Tensor> out{g0, g1};
    for (const Tensor& t : param_values(gp)) out.push_back(t);
    return out;
  };
  c.make_inputs = [cfg, grid](Rng& rng) {
    for (int tries = 0; tries < kMaxInstanceTries; ++tries) {
      Tensor m0 = suite_detail::rand_tensor(rng, {cfg.channels, grid, grid});
      Tensor m1 = suite_detail::rand_tensor(rng, {cfg.channels, grid, grid});
      DdcaParams p(cfg);
      fill_params_random(p, rng);
      suite_detail::temper_offsets(p);
      DdcaContext ctx;
      ddca_forward(p, m0, m1, &ctx);
      if (min_tap_integer_distance(ctx) > kTapMargin) {
        std::vector<Tensor> in{m0, m1};
        for (const Tensor& t : param_values(p)) in.push_back(t);
        return in;
      }
    }
    throw NumericError("ddca_forward: no smooth gradcheck instance found");
  };
  c.tolerance = 1e-5;
  return c;
}

inline GradcheckCase fp_ddca_case() {
  FpDdcaConfig cfg;
  cfg.dca = DcaConfig{4, 2, 2};
  cfg.fp_layers = 2;
  cfg.blocks_per_scale = 2;
  const std::size_t grid = 8;
  GradcheckCase c;
  c.op.name = "fp_ddca_forward";
  auto rebuild = [cfg](const std::vector<Tensor>& in) {
    FpDdcaParams p(cfg);
    std::size_t idx = 2;
    load_param_values(p, in, &idx);
    return p;
  };
  c.op.forward = [rebuild](const std::vector<Tensor>& in) {
    return fp_ddca_forward(rebuild(in), in[0], in[1], FuseOrder::kRC, nullptr);
  };
  c.op.vjp = [rebuild, cfg](const std::vector<Tensor>& in, const Tensor& g) {
    const FpDdcaParams p = rebuild(in);
    FpDdcaContext ctx;
    fp_ddca_forward(p, in[0], in[1], FuseOrder::kRC, &ctx);
    Tensor g0 = Tensor::zeros_like(in[0]);
    Tensor g1 = Tensor::zeros_like(in[1]);
    FpDdcaParams gp(cfg);
    fp_ddca_backward(p, in[0], in[1], FuseOrder::kRC, ctx, g, &g0, &g1, &gp);
    std::vector<Tensor> out{g0, g1};
    for (const Tensor& t : param_values(gp)) out.push_back(t);
    return out;
  };
  c.make_inputs = [cfg, grid](Rng& rng) {
    for (int tries = 0; tries < kMaxInstanceTries; ++tries) {
      Tensor r = suite_detail::rand_tensor(rng, {cfg.dca.channels, grid, grid});
      Tensor cam = suite_detail::rand_tensor(rng, {cfg.dca.channels, grid, grid});
      FpDdcaParams p(cfg);
      fill_params_random(p, rng);
      suite_detail::temper_offsets(p);
      FpDdcaContext ctx;
      fp_ddca_forward(p, r, cam, FuseOrder::kRC, &ctx);
      if (min_tap_integer_distance(ctx) > kTapMargin) {
        std::vector<Tensor> in{r, cam};
        for (const Tensor& t : param_values(p)) in.push_back(t);
        return in;
      }
    }
    throw NumericError("fp_ddca_forward: no smooth gradcheck instance found");
  };
  c.tolerance = 1e-5;
  return c;
}

inline GradcheckCase conv_fuser_case() {
  const std::size_t C = 3, grid = 4;
  GradcheckCase c;
  c.op.name = "conv_fuser_forward";
  auto rebuild = [C](const std::vector<Tensor>& in) {
    ConvFuserParams p(C);
    std::size_t idx = 2;
    load_param_values(p, in, &idx);
    return p;
  };
  c.op.forward = [rebuild](const std::vector<Tensor>& in) {
    return conv_fuser_forward(rebuild(in), in[0], in[1], nullptr);
  };
  c.op.vjp = [rebuild, C](const std::vector<Tensor>& in, const Tensor& g) {
    const ConvFuserParams p = rebuild(in);
    ConvFuserContext ctx;
    conv_fuser_forward(p, in[0], in[1], &ctx);
    Tensor g0 = Tensor::zeros_like(in[0]);
    Tensor g1 = Tensor::zeros_like(in[1]);
    ConvFuserParams gp(C);
    conv_fuser_backward(p, ctx, g, &g0, &g1, &gp);
    return std::vector<Tensor>{g0, g1, gp.w, gp.b};
  };
  c.make_inputs = [C, grid](Rng& rng) {
    ConvFuserParams p(C);
    fill_params_random(p, rng);
    return std::vector<Tensor>{suite_detail::rand_tensor(rng, {C, grid, grid}),
                               suite_detail::rand_tensor(rng, {C, grid, grid}), p.w, p.b};
  };
  c.tolerance = 1e-6;
  return c;
}

/// Negative-control fixture: linear with a corrupted weight gradient. Never
/// part of the default suite; used to prove the checker catches bad
/// backward passes.
inline GradcheckCase corrupted_linear_case() {
  GradcheckCase c = linear_case();
  c.op.name = "corrupted_linear";
  c.op.vjp = [](const std::vector<Tensor>& in, const Tensor& g) {
    Tensor gx = Tensor::zeros_like(in[0]);
    Tensor gw = Tensor::zeros_like(in[1]);
    Tensor gb = Tensor::zeros_like(in[2]);
    linear_backward(in[0], in[1], g, &gx, &gw, &gb);
    for (std::size_t i = 0; i < gw.numel(); ++i) gw[i] *= 1.25;
    return std::vector<Tensor>{gx, gw, gb};
  };
  return c;
}

/// Everything currently registered; extended as more differentiable modules
/// come online (view transforms, task head).
inline std::vector<GradcheckCase> fuser_gradcheck_suite() {
  std::vector<GradcheckCase> cases;
  cases.push_back(linear_case());
  cases.push_back(softmax_case());
  cases.push_back(bilinear_case());
  cases.push_back(conv2d_case());
  cases.push_back(avgpool_case());
  cases.push_back(upsample_case());
  cases.push_back(map_linear_case());
  cases.push_back(layer_norm_case());
  cases.push_back(gelu_case());
  cases.push_back(dca_case());
  cases.push_back(ddca_case());
  cases.push_back(fp_ddca_case());
  cases.push_back(conv_fuser_case());
  return cases;
}

}  // namespace zfusion
