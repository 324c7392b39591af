#pragma once

#include <string>
#include <vector>

#include "zfusion/ops.hpp"
#include "zfusion/rng.hpp"

// Deformable cross attention between two feature maps on a shared grid.
// Every query cell q at center (r, c) predicts, from its own feature z_q,
// per-head sampling offsets and attention weights; it then reads the OTHER
// modality's map at the offset positions (bilinear, zero-padded), takes the
// attention-weighted sum per head, projects per head, concatenates the heads
// and applies an output projection.

namespace zfusion {

struct DcaConfig {
  std::size_t channels = 16;
  std::size_t heads = 4;
  std::size_t points = 8;  // sampling points per head

  std::size_t head_dim() const { return channels / heads; }

  void validate() const {
    if (channels == 0 || heads == 0 || points == 0) {
      throw ConfigError("dca: channels/heads/points must all be positive");
    }
    if (channels % heads != 0) {
      throw ConfigError("dca: channels (" + std::to_string(channels) +
                        ") not divisible by heads (" + std::to_string(heads) + ")");
    }
  }

  bool operator==(const DcaConfig&) const = default;
};

/// Offset-net output channel layout: channel (h*N + n)*2 + d holds the
/// (d==0: row, d==1: column) offset of sample n of head h, in grid cells.
/// Weight-net output channel h*N + n holds the pre-softmax logit of that
/// sample. w_value column block [h*head_dim, (h+1)*head_dim) is head h's
/// value projection.
struct DcaParams {
  DcaConfig cfg;
  Tensor w_offset, b_offset;  // [C, 2HN], [2HN]
  Tensor w_weight, b_weight;  // [C, HN], [HN]
  Tensor w_value, b_value;    // [C, C], [C]
  Tensor w_out, b_out;        // [C, C], [C]

  DcaParams() = default;

  explicit DcaParams(const DcaConfig& c) : cfg(c) {
    cfg.validate();
    const std::size_t C = cfg.channels, HN = cfg.heads * cfg.points;
    w_offset = Tensor({C, 2 * HN});
    b_offset = Tensor({2 * HN});
    w_weight = Tensor({C, HN});
    b_weight = Tensor({HN});
    w_value = Tensor({C, C});
    b_value = Tensor({C});
    w_out = Tensor({C, C});
    b_out = Tensor({C});
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "w_offset", self.w_offset);
    fn(prefix + "b_offset", self.b_offset);
    fn(prefix + "w_weight", self.w_weight);
    fn(prefix + "b_weight", self.b_weight);
    fn(prefix + "w_value", self.w_value);
    fn(prefix + "b_value", self.b_value);
    fn(prefix + "w_out", self.w_out);
    fn(prefix + "b_out", self.b_out);
  }

  /// Training initialization: offset and weight nets start at zero (samples
  /// at the reference point, uniform attention); projections scaled-uniform.
  void init(Rng& rng) {
    const double limit = std::sqrt(3.0 / static_cast<double>(cfg.channels));
    rng.fill_uniform(w_value, -limit, limit);
    rng.fill_uniform(w_out, -limit, limit);
    w_offset.fill(0.0);
    b_offset.fill(0.0);
    w_weight.fill(0.0);
    b_weight.fill(0.0);
    b_value.fill(0.0);
    b_out.fill(0.0);
  }
};

/// Degenerate configuration: zero offsets, uniform attention, identity value
/// and output projections — the operator then reads the kv map pointwise.
inline void set_degenerate_identity(DcaParams& p) {
  p.w_offset.fill(0.0);
  p.b_offset.fill(0.0);
  p.w_weight.fill(0.0);
  p.b_weight.fill(0.0);
  p.b_value.fill(0.0);
  p.b_out.fill(0.0);
  p.w_value.fill(0.0);
  p.w_out.fill(0.0);
  for (std::size_t i = 0; i < p.cfg.channels; ++i) {
    p.w_value(i, i) = 1.0;
    p.w_out(i, i) = 1.0;
  }
}

/// Saved forward state for the backward pass.
struct DcaContext {
  Tensor offsets;   // [cells, H, N, 2]
  Tensor attn;      // [cells, H, N], post-softmax
  Tensor samples;   // [cells, H, N, C], raw kv reads
  Tensor weighted;  // [cells, H, C], attention-weighted sums
  Tensor cat;       // [cells, C], concatenated projected heads
};

namespace detail {

inline void check_dca_maps(const DcaParams& p, const Tensor& query, const Tensor& kv) {
  p.cfg.validate();
  if (query.rank() != 3 || kv.rank() != 3) {
    throw ShapeError("dca: feature maps must be [C,H,W]");
  }
  if (!query.same_shape(kv)) {
    throw ShapeError("dca: modality shapes differ: " + query.shape_str() + " vs " +
                     kv.shape_str());
  }
  if (query.size(0) != p.cfg.channels) {
    throw ShapeError("dca: map has " + std::to_string(query.size(0)) +
                     " channels, config says " + std::to_string(p.cfg.channels));
  }
}

}  // namespace detail

inline Tensor dca_forward(const DcaParams& p, const Tensor& query, const Tensor& kv,
                          DcaContext* ctx = nullptr) {
  detail::check_dca_maps(p, query, kv);
  const std::size_t C = p.cfg.channels, H = p.cfg.heads, N = p.cfg.points;
  const std::size_t Hg = query.size(1), Wg = query.size(2);
  const std::size_t cells = Hg * Wg;
  const std::int64_t ih = static_cast<std::int64_t>(Hg), iw = static_cast<std::int64_t>(Wg);

  const Tensor off_map = map_linear(query, p.w_offset, p.b_offset);    // [2HN,Hg,Wg]
  const Tensor logit_map = map_linear(query, p.w_weight, p.b_weight);  // [HN,Hg,Wg]

  Tensor offsets({cells, H, N, 2});
  Tensor logits({cells, H, N});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t hn = h * N + n;
        offsets(cell, h, n, 0) = off_map[(hn * 2 + 0) * cells + cell];
        offsets(cell, h, n, 1) = off_map[(hn * 2 + 1) * cells + cell];
        logits(cell, h, n) = logit_map[hn * cells + cell];
      }
    }
  }
  Tensor attn = softmax_lastdim(logits);  // over N

  Tensor samples({cells, H, N, C});
  Tensor weighted({cells, H, C});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::int64_t r = static_cast<std::int64_t>(cell / Wg);
    const std::int64_t c = static_cast<std::int64_t>(cell % Wg);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t n = 0; n < N; ++n) {
        const BilinearTap tap =
            make_tap(ih, iw, r, c, offsets(cell, h, n, 0), offsets(cell, h, n, 1));
        const double a = attn(cell, h, n);
        for (std::size_t ch = 0; ch < C; ++ch) {
          const double s = tap_value(kv.data() + ch * cells, iw, tap);
          samples(cell, h, n, ch) = s;
          weighted(cell, h, ch) += a * s;
        }
      }
    }
  }

  // per-head value projection into the concatenated head vector
  const std::size_t hd = p.cfg.head_dim();
  Tensor cat({cells, C});
  for (std::size_t h = 0; h < H; ++h) {
    Tensor wh({cells, C});
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t ch = 0; ch < C; ++ch) wh(cell, ch) = weighted(cell, h, ch);
    }
    Tensor wblock({C, hd});
    Tensor bblock({hd});
    for (std::size_t i = 0; i < C; ++i) {
      for (std::size_t j = 0; j < hd; ++j) wblock(i, j) = p.w_value(i, h * hd + j);
    }
    for (std::size_t j = 0; j < hd; ++j) bblock[j] = p.b_value[h * hd + j];
    const Tensor head = linear(wh, wblock, bblock);  // [cells, hd]
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t j = 0; j < hd; ++j) cat(cell, h * hd + j) = head(cell, j);
    }
  }

  const Tensor out2 = linear(cat, p.w_out, p.b_out);  // [cells, C]
  Tensor out({C, Hg, Wg});
  for (std::size_t ch = 0; ch < C; ++ch) {
    for (std::size_t cell = 0; cell < cells; ++cell) out[ch * cells + cell] = out2(cell, ch);
  }

  if (ctx) {
    ctx->offsets = std::move(offsets);
    ctx->attn = std::move(attn);
    ctx->samples = std::move(samples);
    ctx->weighted = std::move(weighted);
    ctx->cat = std::move(cat);
  }
  return out;
}

/// Accumulates input and parameter gradients; any of gquery/gkv/gparams may
/// be null. gparams (when given) must be zero-or-accumulating buffers with
/// the same shapes as p.
inline void dca_backward(const DcaParams& p, const Tensor& query, const Tensor& kv,
                         const DcaContext& ctx, const Tensor& gout, Tensor* gquery,
                         Tensor* gkv, DcaParams* gparams) {
  detail::check_dca_maps(p, query, kv);
  check_same_shape(gout, query, "dca_backward upstream");
  const std::size_t C = p.cfg.channels, H = p.cfg.heads, N = p.cfg.points;
  const std::size_t Hg = query.size(1), Wg = query.size(2);
  const std::size_t cells = Hg * Wg;
  const std::size_t hd = p.cfg.head_dim();
  const std::int64_t ih = static_cast<std::int64_t>(Hg), iw = static_cast<std::int64_t>(Wg);

  Tensor gout2({cells, C});
  for (std::size_t ch = 0; ch < C; ++ch) {
    for (std::size_t cell = 0; cell < cells; ++cell) gout2(cell, ch) = gout[ch * cells + cell];
  }

  // output projection
  Tensor gcat({cells, C});
  linear_backward(ctx.cat, p.w_out, gout2, &gcat, gparams ? &gparams->w_out : nullptr,
                  gparams ? &gparams->b_out : nullptr);

  // per-head value projections
  Tensor gweighted({cells, H, C});
  for (std::size_t h = 0; h < H; ++h) {
    Tensor wh({cells, C});
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t ch = 0; ch < C; ++ch) wh(cell, ch) = ctx.weighted(cell, h, ch);
    }
    Tensor wblock({C, hd});
    for (std::size_t i = 0; i < C; ++i) {
      for (std::size_t j = 0; j < hd; ++j) wblock(i, j) = p.w_value(i, h * hd + j);
    }
    Tensor ghead({cells, hd});
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t j = 0; j < hd; ++j) ghead(cell, j) = gcat(cell, h * hd + j);
    }
    Tensor gwh({cells, C});
    Tensor gwblock({C, hd});
    Tensor gbblock({hd});
    linear_backward(wh, wblock, ghead, &gwh, &gwblock, &gbblock);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (std::size_t ch = 0; ch < C; ++ch) gweighted(cell, h, ch) += gwh(cell, ch);
    }
    if (gparams) {
      for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < hd; ++j) gparams->w_value(i, h * hd + j) += gwblock(i, j);
      }
      for (std::size_t j = 0; j < hd; ++j) gparams->b_value[h * hd + j] += gbblock[j];
    }
  }

  // sampling + attention weighting
  Tensor gattn({cells, H, N});
  Tensor goffsets({cells, H, N, 2});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::int64_t r = static_cast<std::int64_t>(cell / Wg);
    const std::int64_t c = static_cast<std::int64_t>(cell % Wg);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t n = 0; n < N; ++n) {
        const BilinearTap tap =
            make_tap(ih, iw, r, c, ctx.offsets(cell, h, n, 0), ctx.offsets(cell, h, n, 1));
        const double a = ctx.attn(cell, h, n);
        double gpr = 0.0, gpc = 0.0;
        for (std::size_t ch = 0; ch < C; ++ch) {
          const double gw = gweighted(cell, h, ch);
          gattn(cell, h, n) += gw * ctx.samples(cell, h, n, ch);
          if (gkv) tap_scatter(gkv->data() + ch * cells, iw, tap, gw * a);
          double dr = 0.0, dc = 0.0;
          tap_pos_grad(kv.data() + ch * cells, iw, tap, &dr, &dc);
          gpr += gw * a * dr;
          gpc += gw * a * dc;
        }
        goffsets(cell, h, n, 0) = gpr;
        goffsets(cell, h, n, 1) = gpc;
      }
    }
  }

  Tensor glogits({cells, H, N});
  softmax_lastdim_backward(ctx.attn, gattn, &glogits);

  const std::size_t HN = H * N;
  Tensor goff_map({2 * HN, Hg, Wg});
  Tensor glogit_map({HN, Hg, Wg});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t hn = h * N + n;
        goff_map[(hn * 2 + 0) * cells + cell] = goffsets(cell, h, n, 0);
        goff_map[(hn * 2 + 1) * cells + cell] = goffsets(cell, h, n, 1);
        glogit_map[hn * cells + cell] = glogits(cell, h, n);
      }
    }
  }
  map_linear_backward(query, p.w_weight, glogit_map, gquery,
                      gparams ? &gparams->w_weight : nullptr,
                      gparams ? &gparams->b_weight : nullptr);
  map_linear_backward(query, p.w_offset, goff_map, gquery,
                      gparams ? &gparams->w_offset : nullptr,
                      gparams ? &gparams->b_offset : nullptr);
}

/// Smallest distance from any sampled position to an integer grid line.
/// Bilinear interpolation has derivative kinks there, so gradient-check
/// instance generators resample when this is tiny.
inline double min_tap_integer_distance(const DcaContext& ctx) {
  const std::size_t cells = ctx.attn.size(0);
  const std::size_t H = ctx.attn.size(1), N = ctx.attn.size(2);
  double best = 1e300;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t n = 0; n < N; ++n) {
        for (int d = 0; d < 2; ++d) {
          const double off = ctx.offsets(cell, h, n, d);
          const double dist = std::abs(off - std::round(off));
          best = std::min(best, dist);
        }
      }
    }
  }
  return best;
}

}  // namespace zfusion
