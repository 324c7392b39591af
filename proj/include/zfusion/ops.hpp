#pragma once

#include <cmath>
#include <cstdint>

#include "zfusion/tensor.hpp"

// Dense numeric kernels. Every op comes as a forward plus a hand-written
// backward; backwards ACCUMULATE (+=) into caller-owned gradient buffers so
// shared parameters can be used several times per step. Null grad pointers
// skip that gradient.

namespace zfusion {

// ---------------------------------------------------------------------------
// linear: y = x W + b applied to the trailing axis.  x: [..., Cin],
// W: [Cin, Cout], b: [Cout] (may be empty for no bias).
// ---------------------------------------------------------------------------

inline Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (W.rank() != 2) throw ShapeError("linear: W must be rank 2, got " + W.shape_str());
  if (x.rank() < 1) throw ShapeError("linear: x must have at least one axis");
  const std::size_t cin = W.size(0), cout = W.size(1);
  if (x.shape().back() != cin) {
    throw ShapeError("linear: trailing axis of x is " + std::to_string(x.shape().back()) +
                     ", expected Cin=" + std::to_string(cin));
  }
  const bool has_bias = b.numel() > 0;
  if (has_bias && (b.rank() != 1 || b.size(0) != cout)) {
    throw ShapeError("linear: bias must be [Cout]=" + std::to_string(cout));
  }
  std::vector<std::size_t> out_shape = x.shape();
  out_shape.back() = cout;
  Tensor y(out_shape);
  const std::size_t rows = x.numel() / cin;
  const double* xp = x.data();
  const double* wp = W.data();
  double* yp = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xp + r * cin;
    double* yr = yp + r * cout;
    if (has_bias) {
      for (std::size_t j = 0; j < cout; ++j) yr[j] = b[j];
    } else {
      for (std::size_t j = 0; j < cout; ++j) yr[j] = 0.0;
    }
    for (std::size_t i = 0; i < cin; ++i) {
      const double xv = xr[i];
      const double* wrow = wp + i * cout;
      for (std::size_t j = 0; j < cout; ++j) yr[j] += xv * wrow[j];
    }
  }
  return y;
}

inline void linear_backward(const Tensor& x, const Tensor& W, const Tensor& gout,
                            Tensor* gx, Tensor* gW, Tensor* gb) {
  const std::size_t cin = W.size(0), cout = W.size(1);
  const std::size_t rows = x.numel() / cin;
  if (gout.numel() != rows * cout) {
    throw ShapeError("linear_backward: upstream gradient has wrong size");
  }
  const double* xp = x.data();
  const double* wp = W.data();
  const double* gp = gout.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xp + r * cin;
    const double* gr = gp + r * cout;
    if (gx) {
      double* gxr = gx->data() + r * cin;
      for (std::size_t i = 0; i < cin; ++i) {
        const double* wrow = wp + i * cout;
        double acc = 0.0;
        for (std::size_t j = 0; j < cout; ++j) acc += gr[j] * wrow[j];
        gxr[i] += acc;
      }
    }
    if (gW) {
      for (std::size_t i = 0; i < cin; ++i) {
        const double xv = xr[i];
        double* gwrow = gW->data() + i * cout;
        for (std::size_t j = 0; j < cout; ++j) gwrow[j] += xv * gr[j];
      }
    }
    if (gb) {
      for (std::size_t j = 0; j < cout; ++j) (*gb)[j] += gr[j];
    }
  }
}

// ---------------------------------------------------------------------------
// softmax over the last axis, max-stabilized.
// ---------------------------------------------------------------------------

inline Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() == 0) {
    throw ShapeError("softmax_lastdim: empty last dimension");
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  Tensor y(x.shape());
  const double* xp = x.data();
  double* yp = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xp + r * n;
    double* yr = yp + r * n;
    double mx = xr[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      sum += yr[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) yr[i] *= inv;
  }
  return y;
}

/// Backward from the forward OUTPUT y (not the input).
inline void softmax_lastdim_backward(const Tensor& y, const Tensor& gout, Tensor* gx) {
  if (!gx) return;
  check_same_shape(y, gout, "softmax_lastdim_backward");
  const std::size_t n = y.shape().back();
  const std::size_t rows = y.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.data() + r * n;
    const double* gr = gout.data() + r * n;
    double* gxr = gx->data() + r * n;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += yr[i] * gr[i];
    for (std::size_t i = 0; i < n; ++i) gxr[i] += yr[i] * (gr[i] - dot);
  }
}

// ---------------------------------------------------------------------------
// Bilinear sampling on a [C,H,W] map, cell-center convention (cell (r,c) is
// centered at coordinate (r,c)), zero padding outside [0,H-1]x[0,W-1].
//
// A tap is built from an integer base plus a fractional offset so that
// translating the base by whole cells reproduces bit-identical arithmetic;
// the deformable attention kernels rely on this for exact interior
// translation equivariance.
// ---------------------------------------------------------------------------

struct BilinearTap {
  std::int64_t r0, c0;          // top-left corner, absolute cell index
  double fr, fc;                // fractional position within the corner cell
  double w00, w01, w10, w11;    // corner weights
  bool v00, v01, v10, v11;      // corner validity (inside the map)
};

inline BilinearTap make_tap(std::int64_t height, std::int64_t width,
                            std::int64_t base_r, std::int64_t base_c,
                            double dr, double dc) {
  BilinearTap t;
  const double fr0 = std::floor(dr);
  const double fc0 = std::floor(dc);
  t.r0 = base_r + static_cast<std::int64_t>(fr0);
  t.c0 = base_c + static_cast<std::int64_t>(fc0);
  t.fr = dr - fr0;
  t.fc = dc - fc0;
  t.w00 = (1.0 - t.fr) * (1.0 - t.fc);
  t.w01 = (1.0 - t.fr) * t.fc;
  t.w10 = t.fr * (1.0 - t.fc);
  t.w11 = t.fr * t.fc;
  const bool r0ok = t.r0 >= 0 && t.r0 < height;
  const bool r1ok = t.r0 + 1 >= 0 && t.r0 + 1 < height;
  const bool c0ok = t.c0 >= 0 && t.c0 < width;
  const bool c1ok = t.c0 + 1 >= 0 && t.c0 + 1 < width;
  t.v00 = r0ok && c0ok;
  t.v01 = r0ok && c1ok;
  t.v10 = r1ok && c0ok;
  t.v11 = r1ok && c1ok;
  return t;
}

inline double tap_value(const double* plane, std::int64_t width, const BilinearTap& t) {
  double v = 0.0;
  if (t.v00) v += t.w00 * plane[t.r0 * width + t.c0];
  if (t.v01) v += t.w01 * plane[t.r0 * width + t.c0 + 1];
  if (t.v10) v += t.w10 * plane[(t.r0 + 1) * width + t.c0];
  if (t.v11) v += t.w11 * plane[(t.r0 + 1) * width + t.c0 + 1];
  return v;
}

inline void tap_scatter(double* gplane, std::int64_t width, const BilinearTap& t, double g) {
  if (t.v00) gplane[t.r0 * width + t.c0] += t.w00 * g;
  if (t.v01) gplane[t.r0 * width + t.c0 + 1] += t.w01 * g;
  if (t.v10) gplane[(t.r0 + 1) * width + t.c0] += t.w10 * g;
  if (t.v11) gplane[(t.r0 + 1) * width + t.c0 + 1] += t.w11 * g;
}

/// d(sampled value)/d(row coord), d/d(col coord) for one channel plane.
inline void tap_pos_grad(const double* plane, std::int64_t width, const BilinearTap& t,
                         double* dr, double* dc) {
  const double p00 = t.v00 ? plane[t.r0 * width + t.c0] : 0.0;
  const double p01 = t.v01 ? plane[t.r0 * width + t.c0 + 1] : 0.0;
  const double p10 = t.v10 ? plane[(t.r0 + 1) * width + t.c0] : 0.0;
  const double p11 = t.v11 ? plane[(t.r0 + 1) * width + t.c0 + 1] : 0.0;
  *dr = (1.0 - t.fc) * (p10 - p00) + t.fc * (p11 - p01);
  *dc = (1.0 - t.fr) * (p01 - p00) + t.fr * (p11 - p10);
}

/// Sample all channels of a [C,H,W] map at continuous position (pr, pc).
inline Tensor bilinear_sample(const Tensor& map, double pr, double pc) {
  if (map.rank() != 3) throw ShapeError("bilinear_sample: map must be [C,H,W]");
  const std::size_t C = map.size(0), H = map.size(1), W = map.size(2);
  const BilinearTap t = make_tap(static_cast<std::int64_t>(H), static_cast<std::int64_t>(W),
                                 0, 0, pr, pc);
  Tensor out({C});
  for (std::size_t ch = 0; ch < C; ++ch) {
    out[ch] = tap_value(map.data() + ch * H * W, static_cast<std::int64_t>(W), t);
  }
  return out;
}

inline void bilinear_sample_backward(const Tensor& map, double pr, double pc,
                                     const Tensor& gout, Tensor* gmap,
                                     double* gpr, double* gpc) {
  const std::size_t C = map.size(0), H = map.size(1), W = map.size(2);
  const BilinearTap t = make_tap(static_cast<std::int64_t>(H), static_cast<std::int64_t>(W),
                                 0, 0, pr, pc);
  for (std::size_t ch = 0; ch < C; ++ch) {
    const double g = gout[ch];
    if (gmap) tap_scatter(gmap->data() + ch * H * W, static_cast<std::int64_t>(W), t, g);
    if (gpr || gpc) {
      double dr = 0.0, dc = 0.0;
      tap_pos_grad(map.data() + ch * H * W, static_cast<std::int64_t>(W), t, &dr, &dc);
      if (gpr) *gpr += g * dr;
      if (gpc) *gpc += g * dc;
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d on [Cin,H,W] with kernel [Cout,Cin,k,k], zero padding, stride.
// Kernel sizes are restricted to 1 and 3 (all this stack needs).
// ---------------------------------------------------------------------------

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride, std::size_t pad) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W]");
  if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k]");
  const std::size_t cin = x.size(0), H = x.size(1), W = x.size(2);
  const std::size_t cout = kernel.size(0), k = kernel.size(2);
  if (kernel.size(1) != cin) {
    throw ShapeError("conv2d: kernel Cin=" + std::to_string(kernel.size(1)) +
                     " does not match input C=" + std::to_string(cin));
  }
  if (kernel.size(3) != k || (k != 1 && k != 3)) {
    throw ShapeError("conv2d: kernel must be square of size 1 or 3");
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const bool has_bias = bias.numel() > 0;
  if (has_bias && bias.numel() != cout) throw ShapeError("conv2d: bias must be [Cout]");
  if (H + 2 * pad < k || W + 2 * pad < k) throw ShapeError("conv2d: input smaller than kernel");
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - k) / stride + 1;
  Tensor y({cout, Ho, Wo});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ho = 0; ho < Ho; ++ho) {
      for (std::size_t wo = 0; wo < Wo; ++wo) {
        double acc = has_bias ? bias[co] : 0.0;
        const std::int64_t hi0 = static_cast<std::int64_t>(ho * stride) - static_cast<std::int64_t>(pad);
        const std::int64_t wi0 = static_cast<std::int64_t>(wo * stride) - static_cast<std::int64_t>(pad);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xplane = x.data() + ci * H * W;
          const double* kp = kernel.data() + ((co * cin + ci) * k) * k;
          for (std::size_t u = 0; u < k; ++u) {
            const std::int64_t hi = hi0 + static_cast<std::int64_t>(u);
            if (hi < 0 || hi >= static_cast<std::int64_t>(H)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const std::int64_t wi = wi0 + static_cast<std::int64_t>(v);
              if (wi < 0 || wi >= static_cast<std::int64_t>(W)) continue;
              acc += kp[u * k + v] * xplane[hi * static_cast<std::int64_t>(W) + wi];
            }
          }
        }
        y(co, ho, wo) = acc;
      }
    }
  }
  return y;
}

inline void conv2d_backward(const Tensor& x, const Tensor& kernel, std::size_t stride,
                            std::size_t pad, const Tensor& gout,
                            Tensor* gx, Tensor* gkernel, Tensor* gbias) {
  const std::size_t cin = x.size(0), H = x.size(1), W = x.size(2);
  const std::size_t cout = kernel.size(0), k = kernel.size(2);
  const std::size_t Ho = gout.size(1), Wo = gout.size(2);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ho = 0; ho < Ho; ++ho) {
      for (std::size_t wo = 0; wo < Wo; ++wo) {
        const double g = gout(co, ho, wo);
        if (gbias) (*gbias)[co] += g;
        const std::int64_t hi0 = static_cast<std::int64_t>(ho * stride) - static_cast<std::int64_t>(pad);
        const std::int64_t wi0 = static_cast<std::int64_t>(wo * stride) - static_cast<std::int64_t>(pad);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xplane = x.data() + ci * H * W;
          const double* kp = kernel.data() + ((co * cin + ci) * k) * k;
          double* gxplane = gx ? gx->data() + ci * H * W : nullptr;
          double* gkp = gkernel ? gkernel->data() + ((co * cin + ci) * k) * k : nullptr;
          for (std::size_t u = 0; u < k; ++u) {
            const std::int64_t hi = hi0 + static_cast<std::int64_t>(u);
            if (hi < 0 || hi >= static_cast<std::int64_t>(H)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const std::int64_t wi = wi0 + static_cast<std::int64_t>(v);
              if (wi < 0 || wi >= static_cast<std::int64_t>(W)) continue;
              const std::size_t xi = static_cast<std::size_t>(hi) * W + static_cast<std::size_t>(wi);
              if (gkp) gkp[u * k + v] += g * xplane[xi];
              if (gxplane) gxplane[xi] += g * kp[u * k + v];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 2x2 average pooling and nearest-neighbor upsampling.
// ---------------------------------------------------------------------------

inline Tensor avgpool2(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("avgpool2: input must be [C,H,W]");
  const std::size_t C = x.size(0), H = x.size(1), W = x.size(2);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("avgpool2: spatial dims must be even, got " + x.shape_str());
  }
  Tensor y({C, H / 2, W / 2});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < H / 2; ++r) {
      for (std::size_t q = 0; q < W / 2; ++q) {
        // pairwise sum: keeps pooling of a constant block bit-exact
        y(c, r, q) = 0.25 * ((x(c, 2 * r, 2 * q) + x(c, 2 * r, 2 * q + 1)) +
                             (x(c, 2 * r + 1, 2 * q) + x(c, 2 * r + 1, 2 * q + 1)));
      }
    }
  }
  return y;
}

inline void avgpool2_backward(const Tensor& gout, Tensor* gx) {
  if (!gx) return;
  const std::size_t C = gout.size(0), Ho = gout.size(1), Wo = gout.size(2);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < Ho; ++r) {
      for (std::size_t q = 0; q < Wo; ++q) {
        const double g = 0.25 * gout(c, r, q);
        (*gx)(c, 2 * r, 2 * q) += g;
        (*gx)(c, 2 * r, 2 * q + 1) += g;
        (*gx)(c, 2 * r + 1, 2 * q) += g;
        (*gx)(c, 2 * r + 1, 2 * q + 1) += g;
      }
    }
  }
}

inline Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  if (x.rank() != 3) throw ShapeError("upsample_nearest: input must be [C,H,W]");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const std::size_t C = x.size(0), H = x.size(1), W = x.size(2);
  Tensor y({C, H * factor, W * factor});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < H * factor; ++r) {
      for (std::size_t q = 0; q < W * factor; ++q) {
        y(c, r, q) = x(c, r / factor, q / factor);
      }
    }
  }
  return y;
}

inline void upsample_nearest_backward(const Tensor& gout, std::size_t factor, Tensor* gx) {
  if (!gx) return;
  const std::size_t C = gout.size(0), Ho = gout.size(1), Wo = gout.size(2);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < Ho; ++r) {
      for (std::size_t q = 0; q < Wo; ++q) {
        (*gx)(c, r / factor, q / factor) += gout(c, r, q);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Per-cell (1x1) linear over a [Cin,H,W] map: the workhorse for projections,
// offset/weight nets, FFNs and stems. W: [Cin,Cout], b: [Cout] or empty.
// ---------------------------------------------------------------------------

inline Tensor map_linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.rank() != 3) throw ShapeError("map_linear: input must be [Cin,H,W]");
  const std::size_t cin = x.size(0), H = x.size(1), Wd = x.size(2);
  if (W.rank() != 2 || W.size(0) != cin) {
    throw ShapeError("map_linear: weight [Cin,Cout] mismatch, x has Cin=" + std::to_string(cin));
  }
  const std::size_t cout = W.size(1);
  const bool has_bias = b.numel() > 0;
  const std::size_t cells = H * Wd;
  Tensor y({cout, H, Wd});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t j = 0; j < cout; ++j) {
      double acc = has_bias ? b[j] : 0.0;
      for (std::size_t i = 0; i < cin; ++i) {
        acc += x[i * cells + cell] * W(i, j);
      }
      y[j * cells + cell] = acc;
    }
  }
  return y;
}

inline void map_linear_backward(const Tensor& x, const Tensor& W, const Tensor& gout,
                                Tensor* gx, Tensor* gW, Tensor* gb) {
  const std::size_t cin = x.size(0), cells = x.size(1) * x.size(2);
  const std::size_t cout = W.size(1);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t j = 0; j < cout; ++j) {
      const double g = gout[j * cells + cell];
      if (gb) (*gb)[j] += g;
      for (std::size_t i = 0; i < cin; ++i) {
        if (gW) (*gW)(i, j) += x[i * cells + cell] * g;
        if (gx) (*gx)[i * cells + cell] += W(i, j) * g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Layer norm across the channel axis of a [C,H,W] map (one normalization per
// grid cell). gamma/beta: [C].
// ---------------------------------------------------------------------------

struct LayerNormCtx {
  Tensor mean;  // [H,W]
  Tensor rstd;  // [H,W]
};

inline constexpr double kLayerNormEps = 1e-5;

inline Tensor layer_norm_map(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                             LayerNormCtx* ctx) {
  const std::size_t C = x.size(0), H = x.size(1), W = x.size(2);
  if (gamma.numel() != C || beta.numel() != C) {
    throw ShapeError("layer_norm_map: gamma/beta must be [C]");
  }
  const std::size_t cells = H * W;
  Tensor y({C, H, W});
  if (ctx) {
    ctx->mean = Tensor({H, W});
    ctx->rstd = Tensor({H, W});
  }
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += x[c * cells + cell];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = x[c * cells + cell] - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    if (ctx) {
      ctx->mean[cell] = mean;
      ctx->rstd[cell] = rstd;
    }
    for (std::size_t c = 0; c < C; ++c) {
      y[c * cells + cell] = gamma[c] * (x[c * cells + cell] - mean) * rstd + beta[c];
    }
  }
  return y;
}

inline void layer_norm_map_backward(const Tensor& x, const Tensor& gamma,
                                    const LayerNormCtx& ctx, const Tensor& gout,
                                    Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
  const std::size_t C = x.size(0), cells = x.size(1) * x.size(2);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double mean = ctx.mean[cell];
    const double rstd = ctx.rstd[cell];
    double sum_gg = 0.0;      // mean of gamma*g
    double sum_gg_xhat = 0.0; // mean of gamma*g*xhat
    for (std::size_t c = 0; c < C; ++c) {
      const double xhat = (x[c * cells + cell] - mean) * rstd;
      const double gg = gamma[c] * gout[c * cells + cell];
      sum_gg += gg;
      sum_gg_xhat += gg * xhat;
      if (ggamma) (*ggamma)[c] += gout[c * cells + cell] * xhat;
      if (gbeta) (*gbeta)[c] += gout[c * cells + cell];
    }
    if (gx) {
      const double inv_c = 1.0 / static_cast<double>(C);
      for (std::size_t c = 0; c < C; ++c) {
        const double xhat = (x[c * cells + cell] - mean) * rstd;
        const double gg = gamma[c] * gout[c * cells + cell];
        (*gx)[c * cells + cell] +=
            rstd * (gg - inv_c * sum_gg - xhat * inv_c * sum_gg_xhat);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Exact GELU (erf form) — the smooth nonlinearity inside the FFNs.
// ---------------------------------------------------------------------------

inline double gelu_scalar(double v) {
  return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
}

inline double gelu_grad_scalar(double v) {
  const double inv_sqrt2pi = 0.3989422804014326779;
  return 0.5 * (1.0 + std::erf(v * 0.7071067811865475244)) +
         v * inv_sqrt2pi * std::exp(-0.5 * v * v);
}

inline Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = gelu_scalar(x[i]);
  return y;
}

inline void gelu_backward(const Tensor& x, const Tensor& gout, Tensor* gx) {
  if (!gx) return;
  for (std::size_t i = 0; i < x.numel(); ++i) (*gx)[i] += gout[i] * gelu_grad_scalar(x[i]);
}

}  // namespace zfusion
