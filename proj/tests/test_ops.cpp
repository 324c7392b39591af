#include <gtest/gtest.h>

#include <cmath>

#include "zfusion/ops.hpp"
#include "zfusion/rng.hpp"

using zfusion::Rng;
using zfusion::Tensor;

namespace {

// Independent triple-loop matmul oracle for the linear op.
Tensor matmul_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t rows = x.size(0), cin = x.size(1), cout = w.size(1);
  Tensor y({rows, cout});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cout; ++j) {
      double acc = b.numel() ? b[j] : 0.0;
      for (std::size_t i = 0; i < cin; ++i) acc += x(r, i) * w(i, j);
      y(r, j) = acc;
    }
  return y;
}

}  // namespace

TEST(Linear, IdentityCase) {
  Tensor x({1, 2}, {1.0, 2.0});
  Tensor w({2, 2}, {1, 0, 0, 1});
  Tensor b({2}, {0, 0});
  Tensor y = zfusion::linear(x, w, b);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Linear, HandArithmetic) {
  Tensor x({1, 2}, {1.0, 1.0});
  Tensor w({2, 1}, {2.0, 3.0});
  Tensor b({1}, {1.0});
  Tensor y = zfusion::linear(x, w, b);
  EXPECT_DOUBLE_EQ(y[0], 6.0);
}

TEST(Linear, MatchesTripleLoopOracle) {
  Rng rng(11);
  Tensor x({3, 4}), w({4, 2}), b({2});
  rng.fill_uniform(x, -1, 1);
  rng.fill_uniform(w, -1, 1);
  rng.fill_uniform(b, -1, 1);
  Tensor y = zfusion::linear(x, w, b);
  Tensor ref = matmul_oracle(x, w, b);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-15);
}

TEST(Linear, ShapeMismatchNamesAxis) {
  Tensor x({2, 3});
  Tensor w({4, 2});
  Tensor b;
  try {
    zfusion::linear(x, w, b);
    FAIL() << "expected ShapeError";
  } catch (const zfusion::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("trailing axis"), std::string::npos);
  }
}

TEST(Softmax, UniformOnZeros) {
  Tensor x({3}, {0, 0, 0});
  Tensor y = zfusion::softmax_lastdim(x);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, StabilizedAgainstOverflow) {
  Tensor x({2}, {1000.0, 0.0});
  Tensor y = zfusion::softmax_lastdim(x);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_TRUE(y.all_finite());
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  Tensor x({8, 32});
  rng.fill_uniform(x, -30, 30);
  Tensor y = zfusion::softmax_lastdim(x);
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 32; ++c) {
      s += y(r, c);
      EXPECT_GE(y(r, c), 0.0);
      EXPECT_LE(y(r, c), 1.0);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, EmptyLastDimThrows) {
  EXPECT_THROW(zfusion::softmax_lastdim(Tensor({2, 0})), zfusion::ShapeError);
}

TEST(Bilinear, GridPointIsExact) {
  Rng rng(4);
  Tensor map({2, 5, 7});
  rng.fill_uniform(map, -2, 2);
  Tensor v = zfusion::bilinear_sample(map, 2.0, 3.0);
  EXPECT_EQ(v[0], map(0, 2, 3));
  EXPECT_EQ(v[1], map(1, 2, 3));
}

TEST(Bilinear, MidpointAverages) {
  Tensor map({1, 1, 2}, {1.0, 3.0});
  Tensor v = zfusion::bilinear_sample(map, 0.0, 0.5);
  EXPECT_DOUBLE_EQ(v[0], 2.0);
}

TEST(Bilinear, MatchesFourTermOracle) {
  Rng rng(5);
  Tensor map({3, 6, 6});
  rng.fill_uniform(map, -1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double pr = rng.uniform(-2.0, 7.0);
    const double pc = rng.uniform(-2.0, 7.0);
    Tensor v = zfusion::bilinear_sample(map, pr, pc);
    const long r0 = static_cast<long>(std::floor(pr));
    const long c0 = static_cast<long>(std::floor(pc));
    const double a = pr - r0, b = pc - c0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      auto at = [&](long r, long c) -> double {
        if (r < 0 || r >= 6 || c < 0 || c >= 6) return 0.0;
        return map(ch, r, c);
      };
      const double ref = (1 - a) * (1 - b) * at(r0, c0) + (1 - a) * b * at(r0, c0 + 1) +
                         a * (1 - b) * at(r0 + 1, c0) + a * b * at(r0 + 1, c0 + 1);
      EXPECT_NEAR(v[ch], ref, 1e-14);
    }
  }
}

TEST(Bilinear, LinearInMapValues) {
  Rng rng(6);
  Tensor a({2, 4, 4}), b({2, 4, 4});
  rng.fill_uniform(a, -1, 1);
  rng.fill_uniform(b, -1, 1);
  const double alpha = 0.7, beta = -1.3;
  Tensor mix({2, 4, 4});
  for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = alpha * a[i] + beta * b[i];
  for (int trial = 0; trial < 50; ++trial) {
    const double pr = rng.uniform(-1.0, 4.0);
    const double pc = rng.uniform(-1.0, 4.0);
    Tensor va = zfusion::bilinear_sample(a, pr, pc);
    Tensor vb = zfusion::bilinear_sample(b, pr, pc);
    Tensor vm = zfusion::bilinear_sample(mix, pr, pc);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      EXPECT_NEAR(vm[ch], alpha * va[ch] + beta * vb[ch], 1e-12);
    }
  }
}

TEST(Bilinear, OutsideGridIsZero) {
  Tensor map = Tensor::full({1, 3, 3}, 5.0);
  EXPECT_DOUBLE_EQ(zfusion::bilinear_sample(map, -2.0, 1.0)[0], 0.0);
  EXPECT_DOUBLE_EQ(zfusion::bilinear_sample(map, 1.0, 10.0)[0], 0.0);
}

TEST(Conv2d, IdentityOneByOneKernelIsExact) {
  Rng rng(8);
  Tensor x({3, 5, 5});
  rng.fill_uniform(x, -4, 4);
  Tensor k({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) k(c, c, 0, 0) = 1.0;
  Tensor y = zfusion::conv2d(x, k, Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, MatchesDirectOracle) {
  Rng rng(9);
  Tensor x({2, 6, 6}), k({3, 2, 3, 3}), b({3});
  rng.fill_uniform(x, -1, 1);
  rng.fill_uniform(k, -1, 1);
  rng.fill_uniform(b, -1, 1);
  Tensor y = zfusion::conv2d(x, k, b, 1, 1);
  ASSERT_EQ(y.size(1), 6u);
  ASSERT_EQ(y.size(2), 6u);
  // direct six-loop oracle
  for (std::size_t co = 0; co < 3; ++co)
    for (long ho = 0; ho < 6; ++ho)
      for (long wo = 0; wo < 6; ++wo) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < 2; ++ci)
          for (long u = 0; u < 3; ++u)
            for (long v = 0; v < 3; ++v) {
              const long hi = ho - 1 + u, wi = wo - 1 + v;
              if (hi < 0 || hi >= 6 || wi < 0 || wi >= 6) continue;
              acc += k(co, ci, u, v) * x(ci, hi, wi);
            }
        EXPECT_NEAR(y(co, ho, wo), acc, 1e-14);
      }
}

TEST(Conv2d, StrideTwoShapes) {
  Tensor x({1, 6, 6});
  Tensor k({1, 1, 3, 3});
  Tensor y = zfusion::conv2d(x, k, Tensor(), 2, 1);
  EXPECT_EQ(y.size(1), 3u);
  EXPECT_EQ(y.size(2), 3u);
}

TEST(Conv2d, RejectsEvenKernel) {
  Tensor x({1, 4, 4});
  Tensor k({1, 1, 2, 2});
  EXPECT_THROW(zfusion::conv2d(x, k, Tensor(), 1, 0), zfusion::ShapeError);
}

TEST(Pooling, ConstantPreservation) {
  Tensor x = Tensor::full({2, 4, 4}, 3.25);
  Tensor p = zfusion::avgpool2(x);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_DOUBLE_EQ(p[i], 3.25);
  Tensor u = zfusion::upsample_nearest(p, 2);
  ASSERT_EQ(u.shape(), x.shape());
  for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_DOUBLE_EQ(u[i], 3.25);
}

TEST(Pooling, PoolThenUpsamplePreservesBlockMean) {
  Rng rng(10);
  Tensor x({1, 8, 8});
  rng.fill_uniform(x, -1, 1);
  Tensor u = zfusion::upsample_nearest(zfusion::avgpool2(x), 2);
  for (std::size_t r = 0; r < 8; r += 2)
    for (std::size_t c = 0; c < 8; c += 2) {
      const double mean =
          0.25 * (x(0, r, c) + x(0, r, c + 1) + x(0, r + 1, c) + x(0, r + 1, c + 1));
      const double umean =
          0.25 * (u(0, r, c) + u(0, r, c + 1) + u(0, r + 1, c) + u(0, r + 1, c + 1));
      EXPECT_NEAR(umean, mean, 1e-15);
    }
}

TEST(Pooling, OddDimsThrow) {
  EXPECT_THROW(zfusion::avgpool2(Tensor({1, 5, 4})), zfusion::ShapeError);
}

TEST(MapLinear, MatchesPerCellLinear) {
  Rng rng(12);
  Tensor x({3, 2, 2}), w({3, 4}), b({4});
  rng.fill_uniform(x, -1, 1);
  rng.fill_uniform(w, -1, 1);
  rng.fill_uniform(b, -1, 1);
  Tensor y = zfusion::map_linear(x, w, b);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < 4; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < 3; ++i) acc += x(i, r, c) * w(i, j);
        EXPECT_NEAR(y(j, r, c), acc, 1e-14);
      }
}

TEST(LayerNorm, NormalizesPerCell) {
  Rng rng(13);
  Tensor x({8, 3, 3});
  rng.fill_uniform(x, -2, 2);
  Tensor gamma = Tensor::full({8}, 1.0);
  Tensor beta({8});
  zfusion::LayerNormCtx ctx;
  Tensor y = zfusion::layer_norm_map(x, gamma, beta, &ctx);
  for (std::size_t cell = 0; cell < 9; ++cell) {
    double mean = 0.0, var = 0.0;
    for (std::size_t ch = 0; ch < 8; ++ch) mean += y[ch * 9 + cell];
    mean /= 8.0;
    for (std::size_t ch = 0; ch < 8; ++ch) {
      const double d = y[ch * 9 + cell] - mean;
      var += d * d;
    }
    var /= 8.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);  // eps-regularized
  }
}

TEST(Gelu, KnownValues) {
  EXPECT_DOUBLE_EQ(zfusion::gelu_scalar(0.0), 0.0);
  EXPECT_NEAR(zfusion::gelu_scalar(10.0), 10.0, 1e-9);
  EXPECT_NEAR(zfusion::gelu_scalar(-10.0), 0.0, 1e-9);
  // gelu(1) = 0.5 * (1 + erf(1/sqrt(2))) = 0.8413447460685429 * 1
  EXPECT_NEAR(zfusion::gelu_scalar(1.0), 0.8413447460685429, 1e-12);
}
