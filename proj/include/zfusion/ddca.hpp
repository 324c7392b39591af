#pragma once

#include "zfusion/dca.hpp"

// Two-pass fusion block. Pass 1 queries modality 0 against modality 1 and
// produces a fused map F; pass 2 queries F against modality 0. Each pass is
// a pre-norm Transformer sub-block: u = q + DCA(LN(q), LN(kv)), then
// out = u + FFN(LN(u)) with a 4x-expansion GELU FFN.

namespace zfusion {

struct SubblockParams {
  DcaConfig cfg;
  Tensor ln_q_gamma, ln_q_beta;
  Tensor ln_kv_gamma, ln_kv_beta;
  DcaParams dca;
  Tensor ln_ffn_gamma, ln_ffn_beta;
  Tensor w_ffn1, b_ffn1;  // [C, 4C]
  Tensor w_ffn2, b_ffn2;  // [4C, C]

  SubblockParams() = default;

  explicit SubblockParams(const DcaConfig& c) : cfg(c), dca(c) {
    const std::size_t C = cfg.channels;
    ln_q_gamma = Tensor({C});
    ln_q_beta = Tensor({C});
    ln_kv_gamma = Tensor({C});
    ln_kv_beta = Tensor({C});
    ln_ffn_gamma = Tensor({C});
    ln_ffn_beta = Tensor({C});
    w_ffn1 = Tensor({C, 4 * C});
    b_ffn1 = Tensor({4 * C});
    w_ffn2 = Tensor({4 * C, C});
    b_ffn2 = Tensor({C});
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "ln_q_gamma", self.ln_q_gamma);
    fn(prefix + "ln_q_beta", self.ln_q_beta);
    fn(prefix + "ln_kv_gamma", self.ln_kv_gamma);
    fn(prefix + "ln_kv_beta", self.ln_kv_beta);
    DcaParams::visit(self.dca, prefix + "dca.", fn);
    fn(prefix + "ln_ffn_gamma", self.ln_ffn_gamma);
    fn(prefix + "ln_ffn_beta", self.ln_ffn_beta);
    fn(prefix + "w_ffn1", self.w_ffn1);
    fn(prefix + "b_ffn1", self.b_ffn1);
    fn(prefix + "w_ffn2", self.w_ffn2);
    fn(prefix + "b_ffn2", self.b_ffn2);
  }

  void init(Rng& rng) {
    ln_q_gamma.fill(1.0);
    ln_q_beta.fill(0.0);
    ln_kv_gamma.fill(1.0);
    ln_kv_beta.fill(0.0);
    ln_ffn_gamma.fill(1.0);
    ln_ffn_beta.fill(0.0);
    dca.init(rng);
    const double limit = std::sqrt(6.0 / static_cast<double>(5 * cfg.channels));
    rng.fill_uniform(w_ffn1, -limit, limit);
    rng.fill_uniform(w_ffn2, -limit, limit);
    b_ffn1.fill(0.0);
    b_ffn2.fill(0.0);
  }
};

struct SubblockContext {
  LayerNormCtx ln_q, ln_kv, ln_ffn;
  Tensor q_normed, kv_normed;
  DcaContext dca;
  Tensor u;         // after the attention residual
  Tensor u_normed;  // LN(u)
  Tensor h_pre;     // FFN hidden pre-activation
  Tensor h_act;     // FFN hidden post-GELU
};

inline Tensor subblock_forward(const SubblockParams& p, const Tensor& q, const Tensor& kv,
                               SubblockContext* ctx) {
  SubblockContext local;
  SubblockContext& s = ctx ? *ctx : local;
  s.q_normed = layer_norm_map(q, p.ln_q_gamma, p.ln_q_beta, &s.ln_q);
  s.kv_normed = layer_norm_map(kv, p.ln_kv_gamma, p.ln_kv_beta, &s.ln_kv);
  const Tensor dca_out = dca_forward(p.dca, s.q_normed, s.kv_normed, &s.dca);
  s.u = Tensor(q.shape());
  for (std::size_t i = 0; i < q.numel(); ++i) s.u[i] = q[i] + dca_out[i];
  s.u_normed = layer_norm_map(s.u, p.ln_ffn_gamma, p.ln_ffn_beta, &s.ln_ffn);
  s.h_pre = map_linear(s.u_normed, p.w_ffn1, p.b_ffn1);
  s.h_act = gelu(s.h_pre);
  const Tensor ffn_out = map_linear(s.h_act, p.w_ffn2, p.b_ffn2);
  Tensor out(q.shape());
  for (std::size_t i = 0; i < q.numel(); ++i) out[i] = s.u[i] + ffn_out[i];
  return out;
}

inline void subblock_backward(const SubblockParams& p, const Tensor& q, const Tensor& kv,
                              const SubblockContext& s, const Tensor& gout, Tensor* gq,
                              Tensor* gkv, SubblockParams* gp) {
  // residual 2: out = u + ffn_out
  Tensor gu(gout.shape());
  for (std::size_t i = 0; i < gout.numel(); ++i) gu[i] = gout[i];

  Tensor gh_act(s.h_act.shape());
  map_linear_backward(s.h_act, p.w_ffn2, gout, &gh_act, gp ? &gp->w_ffn2 : nullptr,
                      gp ? &gp->b_ffn2 : nullptr);
  Tensor gh_pre(s.h_pre.shape());
  gelu_backward(s.h_pre, gh_act, &gh_pre);
  Tensor gu_normed(s.u_normed.shape());
  map_linear_backward(s.u_normed, p.w_ffn1, gh_pre, &gu_normed, gp ? &gp->w_ffn1 : nullptr,
                      gp ? &gp->b_ffn1 : nullptr);
  layer_norm_map_backward(s.u, p.ln_ffn_gamma, s.ln_ffn, gu_normed, &gu,
                          gp ? &gp->ln_ffn_gamma : nullptr, gp ? &gp->ln_ffn_beta : nullptr);

  // residual 1: u = q + dca_out
  if (gq) {
    for (std::size_t i = 0; i < gu.numel(); ++i) (*gq)[i] += gu[i];
  }
  Tensor gq_normed(s.q_normed.shape());
  Tensor gkv_normed(s.kv_normed.shape());
  dca_backward(p.dca, s.q_normed, s.kv_normed, s.dca, gu, &gq_normed, &gkv_normed,
               gp ? &gp->dca : nullptr);
  layer_norm_map_backward(q, p.ln_q_gamma, s.ln_q, gq_normed, gq,
                          gp ? &gp->ln_q_gamma : nullptr, gp ? &gp->ln_q_beta : nullptr);
  layer_norm_map_backward(kv, p.ln_kv_gamma, s.ln_kv, gkv_normed, gkv,
                          gp ? &gp->ln_kv_gamma : nullptr, gp ? &gp->ln_kv_beta : nullptr);
}

// ---------------------------------------------------------------------------

struct DdcaParams {
  DcaConfig cfg;
  SubblockParams pass1, pass2;

  DdcaParams() = default;
  explicit DdcaParams(const DcaConfig& c) : cfg(c), pass1(c), pass2(c) {}

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    SubblockParams::visit(self.pass1, prefix + "pass1.", fn);
    SubblockParams::visit(self.pass2, prefix + "pass2.", fn);
  }

  void init(Rng& rng) {
    pass1.init(rng);
    pass2.init(rng);
  }
};

struct DdcaContext {
  SubblockContext sub1, sub2;
  Tensor fused;  // pass-1 output, the query of pass 2
};

inline Tensor ddca_forward(const DdcaParams& p, const Tensor& mod0, const Tensor& mod1,
                           DdcaContext* ctx) {
  DdcaContext local;
  DdcaContext& s = ctx ? *ctx : local;
  s.fused = subblock_forward(p.pass1, mod0, mod1, &s.sub1);
  return subblock_forward(p.pass2, s.fused, mod0, &s.sub2);
}

inline void ddca_backward(const DdcaParams& p, const Tensor& mod0, const Tensor& mod1,
                          const DdcaContext& s, const Tensor& gout, Tensor* gmod0,
                          Tensor* gmod1, DdcaParams* gp) {
  Tensor gfused(s.fused.shape());
  subblock_backward(p.pass2, s.fused, mod0, s.sub2, gout, &gfused, gmod0,
                    gp ? &gp->pass2 : nullptr);
  subblock_backward(p.pass1, mod0, mod1, s.sub1, gfused, gmod0, gmod1,
                    gp ? &gp->pass1 : nullptr);
}

inline double min_tap_integer_distance(const DdcaContext& ctx) {
  return std::min(min_tap_integer_distance(ctx.sub1.dca),
                  min_tap_integer_distance(ctx.sub2.dca));
}

}  // namespace zfusion
