#pragma once

#include "zfusion/ddca.hpp"

// Multi-scale fusion: both modality maps are average-pooled to dyadic scales
// {1, 2, 4}, a stack of DDCA blocks fuses them at each scale, the per-scale
// outputs are upsampled back (nearest) and summed, and a final 3x3
// convolution produces the fused map. With fp_layers = 1 the pooling and
// upsampling paths are skipped entirely, so the single-scale case is
// bit-identical to running the block stack plus convolution directly.

namespace zfusion {

enum class FuseOrder { kRC, kCR };  // which modality plays modality 0

inline const char* fuse_order_name(FuseOrder o) { return o == FuseOrder::kRC ? "RC" : "CR"; }

inline FuseOrder fuse_order_from_name(const std::string& s) {
  if (s == "RC" || s == "rc") return FuseOrder::kRC;
  if (s == "CR" || s == "cr") return FuseOrder::kCR;
  throw ArgumentError("unknown interaction order: " + s + " (want RC or CR)");
}

struct FpDdcaConfig {
  DcaConfig dca;
  int fp_layers = 3;         // pyramid depth: 1, 2 or 3 scales
  int blocks_per_scale = 2;  // DDCA blocks stacked at each scale

  void validate() const {
    dca.validate();
    if (fp_layers < 1 || fp_layers > 3) {
      throw ConfigError("fp_ddca: fp_layers must be 1, 2 or 3, got " +
                        std::to_string(fp_layers));
    }
    if (blocks_per_scale < 1) throw ConfigError("fp_ddca: blocks_per_scale must be >= 1");
  }
};

struct FpDdcaParams {
  FpDdcaConfig cfg;
  std::vector<std::vector<DdcaParams>> scales;  // [scale][block]
  Tensor w_fuse, b_fuse;                        // final 3x3 conv, [C,C,3,3], [C]

  FpDdcaParams() = default;

  explicit FpDdcaParams(const FpDdcaConfig& c) : cfg(c) {
    cfg.validate();
    scales.resize(static_cast<std::size_t>(cfg.fp_layers));
    for (auto& stack : scales) {
      for (int b = 0; b < cfg.blocks_per_scale; ++b) stack.emplace_back(cfg.dca);
    }
    const std::size_t C = cfg.dca.channels;
    w_fuse = Tensor({C, C, 3, 3});
    b_fuse = Tensor({C});
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    for (std::size_t s = 0; s < self.scales.size(); ++s) {
      for (std::size_t b = 0; b < self.scales[s].size(); ++b) {
        DdcaParams::visit(self.scales[s][b], prefix + "scale" + std::to_string(s) +
                                                 ".block" + std::to_string(b) + ".",
                          fn);
      }
    }
    fn(prefix + "w_fuse", self.w_fuse);
    fn(prefix + "b_fuse", self.b_fuse);
  }

  void init(Rng& rng) {
    for (auto& stack : scales) {
      for (auto& block : stack) block.init(rng);
    }
    const double limit = std::sqrt(1.0 / (3.0 * static_cast<double>(cfg.dca.channels)));
    rng.fill_uniform(w_fuse, -limit, limit);
    b_fuse.fill(0.0);
  }
};

struct FpScaleContext {
  Tensor a, b;                       // pooled modality maps at this scale
  std::vector<Tensor> stack_inputs;  // query input of each block in the stack
  std::vector<DdcaContext> blocks;
  Tensor stack_out;
};

struct FpDdcaContext {
  std::vector<FpScaleContext> scales;
  Tensor presum;  // per-scale sum, input of the final convolution
};

namespace detail {

inline void check_fp_maps(const FpDdcaParams& p, const Tensor& a, const Tensor& b) {
  p.cfg.validate();
  if (a.rank() != 3 || !a.same_shape(b)) {
    throw ShapeError("fp_ddca: modality maps must be identical [C,H,W]");
  }
  if (a.size(0) != p.cfg.dca.channels) {
    throw ShapeError("fp_ddca: channel count mismatch with config");
  }
  if (a.size(1) % 4 != 0 || a.size(2) % 4 != 0) {
    throw ShapeError("fp_ddca: grid dims must be divisible by 4, got " + a.shape_str());
  }
}

inline Tensor pool_times(const Tensor& x, int times) {
  Tensor out = x;
  for (int i = 0; i < times; ++i) out = avgpool2(out);
  return out;
}

}  // namespace detail

inline Tensor fp_ddca_forward(const FpDdcaParams& p, const Tensor& radar,
                              const Tensor& camera, FuseOrder order,
                              FpDdcaContext* ctx = nullptr) {
  detail::check_fp_maps(p, radar, camera);
  const Tensor& mod0 = (order == FuseOrder::kRC) ? radar : camera;
  const Tensor& mod1 = (order == FuseOrder::kRC) ? camera : radar;

  FpDdcaContext local;
  FpDdcaContext& s = ctx ? *ctx : local;
  s.scales.assign(p.scales.size(), FpScaleContext{});
  s.presum = Tensor(radar.shape());

  for (std::size_t sc = 0; sc < p.scales.size(); ++sc) {
    FpScaleContext& scx = s.scales[sc];
    const int times = static_cast<int>(sc);
    scx.a = detail::pool_times(mod0, times);
    scx.b = detail::pool_times(mod1, times);
    scx.blocks.resize(p.scales[sc].size());
    Tensor f = scx.a;
    for (std::size_t blk = 0; blk < p.scales[sc].size(); ++blk) {
      scx.stack_inputs.push_back(f);
      f = ddca_forward(p.scales[sc][blk], f, scx.b, &scx.blocks[blk]);
    }
    scx.stack_out = f;
    if (times == 0) {
      for (std::size_t i = 0; i < s.presum.numel(); ++i) s.presum[i] += f[i];
    } else {
      const Tensor up = upsample_nearest(f, static_cast<std::size_t>(1) << times);
      for (std::size_t i = 0; i < s.presum.numel(); ++i) s.presum[i] += up[i];
    }
  }
  return conv2d(s.presum, p.w_fuse, p.b_fuse, 1, 1);
}

inline void fp_ddca_backward(const FpDdcaParams& p, const Tensor& radar,
                             const Tensor& camera, FuseOrder order, const FpDdcaContext& s,
                             const Tensor& gout, Tensor* gradar, Tensor* gcamera,
                             FpDdcaParams* gp) {
  detail::check_fp_maps(p, radar, camera);
  const Tensor& mod0 = (order == FuseOrder::kRC) ? radar : camera;
  Tensor* gmod0 = (order == FuseOrder::kRC) ? gradar : gcamera;
  Tensor* gmod1 = (order == FuseOrder::kRC) ? gcamera : gradar;

  Tensor gpresum(s.presum.shape());
  conv2d_backward(s.presum, p.w_fuse, 1, 1, gout, &gpresum, gp ? &gp->w_fuse : nullptr,
                  gp ? &gp->b_fuse : nullptr);

  for (std::size_t sc = 0; sc < p.scales.size(); ++sc) {
    const FpScaleContext& scx = s.scales[sc];
    const int times = static_cast<int>(sc);

    Tensor gstack_out(scx.stack_out.shape());
    if (times == 0) {
      for (std::size_t i = 0; i < gpresum.numel(); ++i) gstack_out[i] = gpresum[i];
    } else {
      upsample_nearest_backward(gpresum, static_cast<std::size_t>(1) << times, &gstack_out);
    }

    Tensor gb(scx.b.shape());
    Tensor g = std::move(gstack_out);
    for (std::size_t blk = p.scales[sc].size(); blk-- > 0;) {
      Tensor gq(scx.stack_inputs[blk].shape());
      ddca_backward(p.scales[sc][blk], scx.stack_inputs[blk], scx.b, scx.blocks[blk], g,
                    &gq, &gb, gp ? &gp->scales[sc][blk] : nullptr);
      g = std::move(gq);
    }

    // route both modality gradients back up through the pooling chain
    if (times == 0) {
      if (gmod0) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*gmod0)[i] += g[i];
      }
      if (gmod1) {
        for (std::size_t i = 0; i < gb.numel(); ++i) (*gmod1)[i] += gb[i];
      }
    } else {
      if (gmod0) {
        Tensor cur = std::move(g);
        for (int t = times; t-- > 0;) {
          Tensor up({mod0.size(0), mod0.size(1) >> t, mod0.size(2) >> t});
          avgpool2_backward(cur, &up);
          cur = std::move(up);
        }
        for (std::size_t i = 0; i < cur.numel(); ++i) (*gmod0)[i] += cur[i];
      }
      if (gmod1) {
        Tensor cur = std::move(gb);
        for (int t = times; t-- > 0;) {
          Tensor up({mod0.size(0), mod0.size(1) >> t, mod0.size(2) >> t});
          avgpool2_backward(cur, &up);
          cur = std::move(up);
        }
        for (std::size_t i = 0; i < cur.numel(); ++i) (*gmod1)[i] += cur[i];
      }
    }
  }
}

inline double min_tap_integer_distance(const FpDdcaContext& ctx) {
  double best = 1e300;
  for (const auto& sc : ctx.scales) {
    for (const auto& blk : sc.blocks) best = std::min(best, min_tap_integer_distance(blk));
  }
  return best;
}

// ---------------------------------------------------------------------------
// convolutional baseline fuser: channel-concat then 3x3 conv back to C

struct ConvFuserParams {
  std::size_t channels = 16;
  Tensor w, b;  // [C, 2C, 3, 3], [C]

  ConvFuserParams() = default;
  explicit ConvFuserParams(std::size_t c) : channels(c) {
    w = Tensor({c, 2 * c, 3, 3});
    b = Tensor({c});
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "w", self.w);
    fn(prefix + "b", self.b);
  }

  void init(Rng& rng) {
    const double limit = std::sqrt(6.0 / (27.0 * static_cast<double>(channels)));
    rng.fill_uniform(w, -limit, limit);
    b.fill(0.0);
  }
};

struct ConvFuserContext {
  Tensor stacked;  // [2C, H, W]
};

inline Tensor conv_fuser_forward(const ConvFuserParams& p, const Tensor& radar,
                                 const Tensor& camera, ConvFuserContext* ctx = nullptr) {
  if (!radar.same_shape(camera) || radar.rank() != 3) {
    throw ShapeError("conv_fuser: modality maps must be identical [C,H,W]");
  }
  if (radar.size(0) != p.channels) throw ShapeError("conv_fuser: channel mismatch");
  Tensor stacked({2 * p.channels, radar.size(1), radar.size(2)});
  const std::size_t half = radar.numel();
  for (std::size_t i = 0; i < half; ++i) stacked[i] = radar[i];
  for (std::size_t i = 0; i < half; ++i) stacked[half + i] = camera[i];
  Tensor out = conv2d(stacked, p.w, p.b, 1, 1);
  if (ctx) ctx->stacked = std::move(stacked);
  return out;
}

inline void conv_fuser_backward(const ConvFuserParams& p, const ConvFuserContext& ctx,
                                const Tensor& gout, Tensor* gradar, Tensor* gcamera,
                                ConvFuserParams* gp) {
  Tensor gstacked(ctx.stacked.shape());
  conv2d_backward(ctx.stacked, p.w, 1, 1, gout, &gstacked, gp ? &gp->w : nullptr,
                  gp ? &gp->b : nullptr);
  const std::size_t half = gstacked.numel() / 2;
  if (gradar) {
    for (std::size_t i = 0; i < half; ++i) (*gradar)[i] += gstacked[i];
  }
  if (gcamera) {
    for (std::size_t i = 0; i < half; ++i) (*gcamera)[i] += gstacked[half + i];
  }
}

}  // namespace zfusion
