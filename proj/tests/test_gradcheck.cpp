#include <gtest/gtest.h>

#include "zfusion/gradcheck.hpp"
#include "zfusion/ops.hpp"

using zfusion::DiffOp;
using zfusion::Rng;
using zfusion::Tensor;

namespace {

DiffOp linear_op() {
  return DiffOp{
      "linear",
      [](const std::vector<Tensor>& in) { return zfusion::linear(in[0], in[1], in[2]); },
      [](const std::vector<Tensor>& in, const Tensor& g) {
        Tensor gx = Tensor::zeros_like(in[0]);
        Tensor gw = Tensor::zeros_like(in[1]);
        Tensor gb = Tensor::zeros_like(in[2]);
        zfusion::linear_backward(in[0], in[1], g, &gx, &gw, &gb);
        return std::vector<Tensor>{gx, gw, gb};
      }};
}

DiffOp softmax_op() {
  return DiffOp{
      "softmax_lastdim",
      [](const std::vector<Tensor>& in) { return zfusion::softmax_lastdim(in[0]); },
      [](const std::vector<Tensor>& in, const Tensor& g) {
        Tensor y = zfusion::softmax_lastdim(in[0]);
        Tensor gx = Tensor::zeros_like(in[0]);
        zfusion::softmax_lastdim_backward(y, g, &gx);
        return std::vector<Tensor>{gx};
      }};
}

}  // namespace

TEST(Gradcheck, LinearPasses) {
  Rng rng(100);
  for (int i = 0; i < 5; ++i) {
    Tensor x({3, 4}), w({4, 2}), b({2});
    rng.fill_signed_unit(x);
    rng.fill_signed_unit(w);
    rng.fill_signed_unit(b);
    const double err = zfusion::gradcheck(linear_op(), {x, w, b}, rng);
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Gradcheck, SoftmaxPasses) {
  Rng rng(101);
  for (int i = 0; i < 5; ++i) {
    Tensor x({8});
    rng.fill_signed_unit(x);
    const double err = zfusion::gradcheck(softmax_op(), {x}, rng);
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Gradcheck, BilinearPasses) {
  // map values and position are both checked; positions kept away from
  // integer coordinates where the interpolation has kinks.
  DiffOp op{
      "bilinear_sample",
      [](const std::vector<Tensor>& in) {
        return zfusion::bilinear_sample(in[0], in[1][0], in[1][1]);
      },
      [](const std::vector<Tensor>& in, const Tensor& g) {
        Tensor gmap = Tensor::zeros_like(in[0]);
        Tensor gpos = Tensor::zeros_like(in[1]);
        zfusion::bilinear_sample_backward(in[0], in[1][0], in[1][1], g, &gmap, &gpos[0],
                                          &gpos[1]);
        return std::vector<Tensor>{gmap, gpos};
      }};
  Rng rng(102);
  for (int i = 0; i < 10; ++i) {
    Tensor map({2, 5, 5});
    rng.fill_signed_unit(map);
    Tensor pos({2});
    pos[0] = rng.uniform_int(0, 3) + rng.uniform(0.1, 0.9);
    pos[1] = rng.uniform_int(0, 3) + rng.uniform(0.1, 0.9);
    const double err = zfusion::gradcheck(op, {map, pos}, rng);
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Gradcheck, ConvPoolUpsamplePass) {
  DiffOp conv{
      "conv2d",
      [](const std::vector<Tensor>& in) { return zfusion::conv2d(in[0], in[1], in[2], 1, 1); },
      [](const std::vector<Tensor>& in, const Tensor& g) {
        Tensor gx = Tensor::zeros_like(in[0]);
        Tensor gk = Tensor::zeros_like(in[1]);
        Tensor gb = Tensor::zeros_like(in[2]);
        zfusion::conv2d_backward(in[0], in[1], 1, 1, g, &gx, &gk, &gb);
        return std::vector<Tensor>{gx, gk, gb};
      }};
  Rng rng(103);
  Tensor x({2, 4, 4}), k({3, 2, 3, 3}), b({3});
  rng.fill_signed_unit(x);
  rng.fill_signed_unit(k);
  rng.fill_signed_unit(b);
  EXPECT_LT(zfusion::gradcheck(conv, {x, k, b}, rng), 1e-6);

  DiffOp pool{"avgpool2",
              [](const std::vector<Tensor>& in) { return zfusion::avgpool2(in[0]); },
              [](const std::vector<Tensor>& in, const Tensor& g) {
                Tensor gx = Tensor::zeros_like(in[0]);
                zfusion::avgpool2_backward(g, &gx);
                return std::vector<Tensor>{gx};
              }};
  Tensor px({2, 4, 4});
  rng.fill_signed_unit(px);
  EXPECT_LT(zfusion::gradcheck(pool, {px}, rng), 1e-6);

  DiffOp up{"upsample_nearest",
            [](const std::vector<Tensor>& in) { return zfusion::upsample_nearest(in[0], 2); },
            [](const std::vector<Tensor>& in, const Tensor& g) {
              Tensor gx = Tensor::zeros_like(in[0]);
              zfusion::upsample_nearest_backward(g, 2, &gx);
              return std::vector<Tensor>{gx};
            }};
  Tensor ux({2, 3, 3});
  rng.fill_signed_unit(ux);
  EXPECT_LT(zfusion::gradcheck(up, {ux}, rng), 1e-6);
}

TEST(Gradcheck, LayerNormAndGeluPass) {
  DiffOp ln{"layer_norm_map",
            [](const std::vector<Tensor>& in) {
              return zfusion::layer_norm_map(in[0], in[1], in[2], nullptr);
            },
            [](const std::vector<Tensor>& in, const Tensor& g) {
              zfusion::LayerNormCtx ctx;
              zfusion::layer_norm_map(in[0], in[1], in[2], &ctx);
              Tensor gx = Tensor::zeros_like(in[0]);
              Tensor gg = Tensor::zeros_like(in[1]);
              Tensor gb = Tensor::zeros_like(in[2]);
              zfusion::layer_norm_map_backward(in[0], in[1], ctx, g, &gx, &gg, &gb);
              return std::vector<Tensor>{gx, gg, gb};
            }};
  Rng rng(104);
  Tensor x({4, 3, 3}), gamma({4}), beta({4});
  rng.fill_signed_unit(x);
  rng.fill_signed_unit(gamma);
  rng.fill_signed_unit(beta);
  EXPECT_LT(zfusion::gradcheck(ln, {x, gamma, beta}, rng), 1e-6);

  DiffOp ge{"gelu", [](const std::vector<Tensor>& in) { return zfusion::gelu(in[0]); },
            [](const std::vector<Tensor>& in, const Tensor& g) {
              Tensor gx = Tensor::zeros_like(in[0]);
              zfusion::gelu_backward(in[0], g, &gx);
              return std::vector<Tensor>{gx};
            }};
  Tensor gx({3, 5});
  rng.fill_signed_unit(gx);
  EXPECT_LT(zfusion::gradcheck(ge, {gx}, rng), 1e-6);
}

TEST(Gradcheck, CorruptedBackwardIsCaught) {
  // negative control: a deliberately wrong vjp must produce a large error
  DiffOp bad{
      "bad_linear",
      [](const std::vector<Tensor>& in) { return zfusion::linear(in[0], in[1], in[2]); },
      [](const std::vector<Tensor>& in, const Tensor& g) {
        Tensor gx = Tensor::zeros_like(in[0]);
        Tensor gw = Tensor::zeros_like(in[1]);
        Tensor gb = Tensor::zeros_like(in[2]);
        zfusion::linear_backward(in[0], in[1], g, &gx, &gw, &gb);
        for (std::size_t i = 0; i < gw.numel(); ++i) gw[i] *= 1.5;  // corrupt
        return std::vector<Tensor>{gx, gw, gb};
      }};
  Rng rng(105);
  Tensor x({3, 4}), w({4, 2}), b({2});
  rng.fill_signed_unit(x);
  rng.fill_signed_unit(w);
  rng.fill_signed_unit(b);
  EXPECT_GT(zfusion::gradcheck(bad, {x, w, b}, rng), 1e-2);
}

TEST(Gradcheck, ZeroUpstreamGivesZeroGrads) {
  Rng rng(106);
  Tensor x({3, 4}), w({4, 2}), b({2});
  rng.fill_signed_unit(x);
  rng.fill_signed_unit(w);
  rng.fill_signed_unit(b);
  EXPECT_TRUE(zfusion::vjp_zero_propagates(linear_op(), {x, w, b}));
  Tensor sx({6});
  rng.fill_signed_unit(sx);
  EXPECT_TRUE(zfusion::vjp_zero_propagates(softmax_op(), {sx}));
}

TEST(Gradcheck, MismatchedGradShapeThrows) {
  DiffOp wrong{"wrong_shape",
               [](const std::vector<Tensor>& in) { return in[0]; },
               [](const std::vector<Tensor>&, const Tensor&) {
                 return std::vector<Tensor>{Tensor({1})};
               }};
  Rng rng(107);
  Tensor x({3});
  rng.fill_signed_unit(x);
  EXPECT_THROW(zfusion::gradcheck(wrong, {x}, rng), zfusion::ShapeError);
}
