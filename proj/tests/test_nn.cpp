#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ccat/nn/attention.hpp"
#include "ccat/nn/grad_check.hpp"
#include "ccat/nn/ops.hpp"

using namespace ccat;
using namespace ccat::nn;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Values bounded away from zero so rectifiers never sit near their kink.
std::vector<double> away_from_zero(std::size_t n, std::uint64_t seed) {
  auto v = randn(n, seed);
  for (auto& x : v) x = x >= 0 ? x + 0.1 : x - 0.1;
  return v;
}

using Dbl = Tensor<double>;

// Reduces a tensor to a scalar with fixed, non-uniform weights so every
// output element influences the loss differently.
Dbl weighted_sum(const Dbl& y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3) + 1.5;
  auto& tp = *y.tape();
  return sum(mul(y, tp.leaf(y.shape(), w)));
}

}  // namespace

TEST(Tape, LeafShapeMismatch) {
  Tape<double> tp;
  EXPECT_THROW(tp.leaf({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape<double> tp;
  const auto x = tp.leaf({2}, {1, 2}, true);
  EXPECT_THROW(tp.backward(x), ShapeError);
}

TEST(Tape, NonFiniteIsHardFailure) {
  Tape<double> tp;
  EXPECT_THROW(tp.leaf({1}, {std::nan("")}), NumericError);
  const auto x = tp.leaf({1}, {1e308}, true);
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(Tape, ParameterGradientsAccumulate) {
  ParameterSet<double> ps;
  ps.add("w", {2}, true);
  ps[0].value = {1.5, -2.0};
  Tape<double> tp;
  const auto w = tp.param(ps[0]);
  const auto loss = weighted_sum(w);
  tp.backward(loss);
  const auto once = ps[0].grad;
  tp.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(ps[0].grad[i], 2.0 * once[i]);
  ps.zero_grad();
  EXPECT_EQ(ps[0].grad, std::vector<double>(2, 0.0));
}

TEST(Tape, DuplicateParameterName) {
  ParameterSet<float> ps;
  ps.add("a", {1}, true);
  EXPECT_THROW(ps.add("a", {2}, true), ConfigError);
  EXPECT_EQ(ps.count(), 1u);
}

TEST(Conv, ZeroInputGivesZero) {
  Tape<double> tp;
  const auto x = tp.leaf({1, 4, 3, 2}, std::vector<double>(24, 0.0));
  const auto k = tp.leaf({3, 3, 2, 5}, randn(90, 1));
  for (double v : conv2d_nobias(x, k).values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, OnesKernelSumsNeighbourhood) {
  // 3x3 ones kernel over [[1,2],[3,4]] with SAME padding: every output
  // position covers the whole input.
  Tape<double> tp;
  const auto x = tp.leaf({1, 2, 2, 1}, {1, 2, 3, 4});
  const auto k = tp.leaf({3, 3, 1, 1}, std::vector<double>(9, 1.0));
  const auto y = conv2d_nobias(x, k);
  for (double v : y.values()) EXPECT_EQ(v, 10.0);
}

TEST(Conv, HandSummationOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(-4, 4);
  const int H = 5, W = 4, Ci = 2, Co = 3, K = 3;
  std::vector<double> xv(H * W * Ci), kv(K * K * Ci * Co);
  for (auto& v : xv) v = u(rng);
  for (auto& v : kv) v = u(rng);
  Tape<double> tp;
  const auto y = conv2d_nobias(tp.leaf({1, H, W, Ci}, xv), tp.leaf({K, K, Ci, Co}, kv));
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int o = 0; o < Co; ++o) {
        double acc = 0.0;
        for (int a = 0; a < K; ++a)
          for (int b = 0; b < K; ++b) {
            const int hh = h + a - 1, ww = w + b - 1;
            if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
            for (int c = 0; c < Ci; ++c) acc += xv[(hh * W + ww) * Ci + c] * kv[((a * K + b) * Ci + c) * Co + o];
          }
        EXPECT_EQ(y.values()[(h * W + w) * Co + o], acc);
      }
}

TEST(Conv, DeltaKernelIsIdentity) {
  Tape<double> tp;
  const auto xv = randn(2 * 5 * 5 * 1, 2);
  std::vector<double> kv(25, 0.0);
  kv[12] = 1.0;
  const auto y = conv2d_nobias(tp.leaf({2, 5, 5, 1}, xv), tp.leaf({5, 5, 1, 1}, kv));
  EXPECT_EQ(y.values(), xv);
}

TEST(Conv, Linearity) {
  Tape<double> tp;
  const auto xa = randn(48, 1), xb = randn(48, 2), kv = randn(3 * 3 * 2 * 4, 3);
  const double alpha = 0.7, beta = -1.3;
  std::vector<double> mix(48);
  for (std::size_t i = 0; i < 48; ++i) mix[i] = alpha * xa[i] + beta * xb[i];
  const auto k = tp.leaf({3, 3, 2, 4}, kv);
  const auto ya = conv2d_nobias(tp.leaf({1, 4, 6, 2}, xa), k);
  const auto yb = conv2d_nobias(tp.leaf({1, 4, 6, 2}, xb), k);
  const auto ym = conv2d_nobias(tp.leaf({1, 4, 6, 2}, mix), k);
  for (std::size_t i = 0; i < ym.size(); ++i)
    EXPECT_NEAR(ym.values()[i], alpha * ya.values()[i] + beta * yb.values()[i], 1e-9);
}

TEST(Conv, ShapeErrors) {
  Tape<double> tp;
  const auto x = tp.leaf({1, 3, 3, 2}, std::vector<double>(18, 1.0));
  EXPECT_THROW(conv2d_nobias(x, tp.leaf({3, 3, 1, 1}, std::vector<double>(9, 1.0))), ShapeError);
  EXPECT_THROW(conv2d_nobias(x, tp.leaf({2, 2, 2, 1}, std::vector<double>(8, 1.0))), ShapeError);
  EXPECT_THROW(conv2d_nobias(tp.leaf({3, 3}, std::vector<double>(9, 1.0)), x), ShapeError);
}

TEST(Conv, GradCheck) {
  Tape<double> holder;
  const auto kv = randn(5 * 5 * 2 * 3, 7, 0.3);
  const auto r = grad_check(
      [&](Tape<double>& tp, const Dbl& x) { return weighted_sum(conv2d_nobias(x, tp.leaf({5, 5, 2, 3}, kv))); },
      {1, 6, 6, 2}, randn(72, 8));
  EXPECT_LT(r.max_rel_error, 1e-4);
  const auto xv = randn(72, 9);
  const auto rk = grad_check(
      [&](Tape<double>& tp, const Dbl& k) { return weighted_sum(conv2d_nobias(tp.leaf({1, 6, 6, 2}, xv), k)); },
      {5, 5, 2, 3}, kv);
  EXPECT_LT(rk.max_rel_error, 1e-4);
}

TEST(Activation, ClippedRelu5Examples) {
  Tape<double> tp;
  const auto y = clipped_relu5(tp.leaf({3}, {-1.0, 3.2, 7.0}));
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 3.2, 5.0}));
  const auto r = relu(tp.leaf({2}, {-0.5, 0.5}));
  EXPECT_EQ(r.values(), (std::vector<double>{0.0, 0.5}));
}

TEST(Activation, GradCheckAwayFromKinks) {
  auto xv = away_from_zero(20, 3);
  for (auto& v : xv) v *= 3.0;  // spans both kinks of the clipped variant
  for (auto& v : xv)
    if (std::abs(v - 5.0) < 0.1) v += 0.3;
  const auto r = grad_check([](Tape<double>&, const Dbl& x) { return weighted_sum(clipped_relu5(x)); }, {20}, xv);
  EXPECT_GT(r.kink_margin, 10 * 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Pool, MeanOfFour) {
  Tape<double> tp;
  EXPECT_EQ(avgpool2d(tp.leaf({1, 2, 2, 1}, {1, 2, 3, 4})).values(), std::vector<double>{2.5});
}

TEST(Pool, FloorChains) {
  int f = 257, c = 11;
  std::vector<int> fs, cs;
  for (int i = 0; i < 3; ++i) {
    fs.push_back(f = pooled_extent(f));
    cs.push_back(c = pooled_extent(c));
  }
  EXPECT_EQ(fs, (std::vector<int>{128, 64, 32}));
  EXPECT_EQ(cs, (std::vector<int>{5, 2, 1}));
  EXPECT_EQ(pooled_extent(1), 1);
  EXPECT_THROW(pooled_extent(0), ShapeError);

  Tape<double> tp;
  const auto y = avgpool2d(tp.leaf({1, 257, 11, 1}, std::vector<double>(257 * 11, 1.0)));
  EXPECT_EQ(y.shape(), (Shape{1, 128, 5, 1}));
}

TEST(Pool, MeanPreservedOverCoveredRegion) {
  Tape<double> tp;
  const int H = 7, W = 5;
  const auto xv = randn(H * W * 2, 5);
  const auto y = avgpool2d(tp.leaf({1, H, W, 2}, xv));
  for (int c = 0; c < 2; ++c) {
    double in = 0.0, out = 0.0;
    for (int h = 0; h < 6; ++h)
      for (int w = 0; w < 4; ++w) in += xv[(h * W + w) * 2 + c];
    for (int i = 0; i < 3 * 2; ++i) out += y.values()[static_cast<std::size_t>(i * 2 + c)];
    EXPECT_NEAR(in / 24.0, out / 6.0, 1e-9);
  }
}

TEST(Pool, SingletonAxisPassesThrough) {
  Tape<double> tp;
  const auto y = avgpool2d(tp.leaf({1, 4, 1, 1}, {1, 3, 5, 9}));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{2, 7}));
}

TEST(Pool, GradCheck) {
  const auto r = grad_check([](Tape<double>&, const Dbl& x) { return weighted_sum(avgpool2d(x)); }, {2, 5, 3, 2},
                            randn(60, 6));
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Dense, IdentityAndHandExample) {
  Tape<double> tp;
  const auto x = tp.leaf({2, 3}, randn(6, 1));
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  EXPECT_EQ(dense(x, tp.leaf({3, 3}, eye), std::optional<Dbl>(tp.leaf({3}, {0, 0, 0}))).values(), x.values());
  const auto y = dense(tp.leaf({1, 2}, {1, 2}), tp.leaf({2, 1}, {1, 1}), std::optional<Dbl>(tp.leaf({1}, {0.5})));
  EXPECT_EQ(y.values(), std::vector<double>{3.5});
}

TEST(Dense, BiasGradientIsOnes) {
  Tape<double> tp;
  const auto b = tp.leaf({3}, {0.1, 0.2, 0.3}, true);
  const auto y = dense(tp.leaf({1, 2}, {1, 2}), tp.leaf({2, 3}, randn(6, 2)), std::optional<Dbl>(b));
  tp.backward(sum(y));
  EXPECT_EQ(b.grad(), std::vector<double>(3, 1.0));
}

TEST(Dense, GradCheckSeedZero) {
  const auto wv = randn(4 * 3, 0), bv = randn(3, 1);
  const auto rx = grad_check(
      [&](Tape<double>& tp, const Dbl& x) {
        return weighted_sum(dense(x, tp.leaf({4, 3}, wv), std::optional<Dbl>(tp.leaf({3}, bv))));
      },
      {5, 4}, randn(20, 0));
  EXPECT_LT(rx.max_rel_error, 1e-4);
  const auto xv = randn(20, 0);
  const auto rw = grad_check(
      [&](Tape<double>& tp, const Dbl& w) { return weighted_sum(dense(tp.leaf({5, 4}, xv), w)); }, {4, 3}, wv);
  EXPECT_LT(rw.max_rel_error, 1e-4);
}

TEST(Dense, ShapeError) {
  Tape<double> tp;
  EXPECT_THROW(dense(tp.leaf({1, 2}, {1, 2}), tp.leaf({3, 1}, {1, 1, 1})), ShapeError);
}

TEST(Matmul, GradChecks) {
  const auto bv = randn(4 * 3, 2);
  const auto r1 = grad_check([&](Tape<double>& tp, const Dbl& a) { return weighted_sum(matmul_nt(a, tp.leaf({4, 3}, bv))); },
                             {2, 3}, randn(6, 3));
  EXPECT_LT(r1.max_rel_error, 1e-4);
  const auto r2 = grad_check([&](Tape<double>& tp, const Dbl& a) { return weighted_sum(matmul(a, tp.leaf({4, 3}, bv))); },
                             {2, 4}, randn(8, 4));
  EXPECT_LT(r2.max_rel_error, 1e-4);
}

TEST(Slicing, ConcatInvertsSlices) {
  Tape<double> tp;
  const auto x = tp.leaf({3, 6}, randn(18, 1));
  const auto y = concat_cols<double>({slice_cols(x, 0, 2), slice_cols(x, 2, 3), slice_cols(x, 5, 1)});
  EXPECT_EQ(y.values(), x.values());
  const auto r = slice_rows(x, 1, 2);
  EXPECT_EQ(r.shape(), (Shape{2, 6}));
  EXPECT_EQ(r.values()[0], x.values()[6]);
  EXPECT_THROW(slice_cols(x, 5, 2), ShapeError);
  const auto g = grad_check(
      [](Tape<double>&, const Dbl& z) {
        return weighted_sum(concat_cols<double>({slice_cols(z, 3, 3), slice_rows(slice_cols(z, 0, 3), 0, 3)}));
      },
      {3, 6}, randn(18, 2));
  EXPECT_LT(g.max_rel_error, 1e-4);
}

TEST(Softmax, RowsAreProbabilitiesWithExactMaskedZeros) {
  Tape<double> tp;
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
  const auto p = masked_softmax_rows(tp.leaf({4, 5}, randn(20, 3, 4.0)), mask);
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) {
      const double v = p.values()[static_cast<std::size_t>(i * 5 + j)];
      EXPECT_GE(v, 0.0);
      if (!mask[static_cast<std::size_t>(j)]) {
        EXPECT_EQ(v, 0.0);
      }
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(masked_softmax_rows(tp.leaf({1, 2}, {1, 2}), none), AllMasked);
}

TEST(Softmax, GradCheck) {
  const std::vector<std::uint8_t> mask{1, 1, 0, 1};
  const auto r = grad_check(
      [&](Tape<double>&, const Dbl& x) { return weighted_sum(masked_softmax_rows(x, mask)); }, {3, 4},
      randn(12, 5));
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(LayerNorm, Examples) {
  Tape<double> tp;
  const auto g = tp.leaf({2}, {1, 1});
  const auto b0 = tp.leaf({2}, {0, 0});
  const auto y = layer_norm(tp.leaf({1, 2}, {1, -1}), g, b0);
  EXPECT_NEAR(y.values()[0], 1.0, 1e-5);
  EXPECT_NEAR(y.values()[1], -1.0, 1e-5);

  const auto bias = tp.leaf({3}, {0.5, -2.0, 7.0});
  const auto c = layer_norm(tp.leaf({1, 3}, {4, 4, 4}), tp.leaf({3}, {2, 3, 4}), bias);
  EXPECT_EQ(c.values(), bias.values());
}

TEST(LayerNorm, RowMeanMatchesRecomputation) {
  Tape<double> tp;
  const auto gv = randn(6, 1), bv = randn(6, 2);
  const auto y = layer_norm(tp.leaf({4, 6}, randn(24, 3, 5.0)), tp.leaf({6}, gv), tp.leaf({6}, bv));
  const auto xv = randn(24, 3, 5.0);
  for (int i = 0; i < 4; ++i) {
    double mu = 0.0, var = 0.0;
    for (int j = 0; j < 6; ++j) mu += xv[static_cast<std::size_t>(i * 6 + j)] / 6.0;
    for (int j = 0; j < 6; ++j) var += std::pow(xv[static_cast<std::size_t>(i * 6 + j)] - mu, 2) / 6.0;
    double expect_mean = 0.0, got_mean = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double z = (xv[static_cast<std::size_t>(i * 6 + j)] - mu) / std::sqrt(var + 1e-5);
      expect_mean += (gv[static_cast<std::size_t>(j)] * z + bv[static_cast<std::size_t>(j)]) / 6.0;
      got_mean += y.values()[static_cast<std::size_t>(i * 6 + j)] / 6.0;
    }
    EXPECT_NEAR(got_mean, expect_mean, 1e-6);
  }
}

TEST(LayerNorm, GradCheck) {
  const auto gv = randn(5, 1), bv = randn(5, 2);
  const auto r = grad_check(
      [&](Tape<double>& tp, const Dbl& x) {
        return weighted_sum(layer_norm(x, tp.leaf({5}, gv), tp.leaf({5}, bv)));
      },
      {3, 5}, randn(15, 4));
  EXPECT_LT(r.max_rel_error, 1e-4);
  const auto xv = randn(15, 4);
  const auto rg = grad_check(
      [&](Tape<double>& tp, const Dbl& g) { return weighted_sum(layer_norm(tp.leaf({3, 5}, xv), g, tp.leaf({5}, bv))); },
      {5}, gv);
  EXPECT_LT(rg.max_rel_error, 1e-4);
}

TEST(Dropout, IdentityCases) {
  Tape<double> tp;
  std::mt19937_64 rng(1);
  const auto x = tp.leaf({10}, randn(10, 1));
  EXPECT_EQ(dropout(x, 0.0, true, rng).values(), x.values());
  EXPECT_EQ(dropout(x, 0.9, false, rng).values(), x.values());
  EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
}

TEST(Dropout, MeanPreserved) {
  Tape<double> tp;
  std::mt19937_64 rng(7);
  const auto x = tp.leaf({100000}, std::vector<double>(100000, 2.0));
  const auto y = dropout(x, 0.5, true, rng);
  const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / 100000.0;
  EXPECT_NEAR(mean, 2.0, 0.05 * 2.0);
  for (double v : y.values()) EXPECT_TRUE(v == 0.0 || v == 4.0);
}

TEST(MaskedMean, ValidOnly) {
  Tape<double> tp;
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  EXPECT_EQ(masked_mean(tp.leaf({4}, {2, 3, 4, 100}), mask).item(), 3.0);
  const std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(masked_mean(tp.leaf({2}, {1, 2}), none), EmptyInput);
}

namespace {

AttentionWeights<double> attention_leaves(Tape<double>& tp, int D, std::uint64_t seed) {
  auto m = [&](std::uint64_t s) { return tp.leaf({D, D}, randn(static_cast<std::size_t>(D * D), seed + s, 0.4)); };
  auto v = [&](std::uint64_t s) { return tp.leaf({D}, randn(static_cast<std::size_t>(D), seed + s, 0.1)); };
  return {m(1), v(2), m(3), v(4), m(5), v(6), m(7), v(8)};
}

}  // namespace

TEST(Attention, SingleFrameAttendsToItself) {
  Tape<double> tp;
  const int D = 4;
  const auto w = attention_leaves(tp, D, 10);
  const auto x = tp.leaf({1, D}, randn(D, 1));
  std::vector<Dbl> probs;
  const std::vector<std::uint8_t> mask{1};
  const auto y = multi_head_self_attention(x, w, 2, mask, &probs);
  for (const auto& p : probs) EXPECT_EQ(p.values(), std::vector<double>{1.0});
  const auto expect = dense(dense(x, w.wv, std::optional<Dbl>(w.bv)), w.wo, std::optional<Dbl>(w.bo));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.values()[i], expect.values()[i], 1e-12);
}

TEST(Attention, IdenticalRowsGiveUniformWeights) {
  Tape<double> tp;
  const int D = 6, T = 5;
  const auto row = randn(D, 3);
  std::vector<double> xv;
  for (int t = 0; t < T; ++t) xv.insert(xv.end(), row.begin(), row.end());
  std::vector<Dbl> probs;
  const std::vector<std::uint8_t> mask(T, 1);
  multi_head_self_attention(tp.leaf({T, D}, xv), attention_leaves(tp, D, 20), 3, mask, &probs);
  ASSERT_EQ(probs.size(), 3u);
  for (const auto& p : probs)
    for (double v : p.values()) EXPECT_NEAR(v, 1.0 / T, 1e-12);
}

TEST(Attention, MaskedKeyGetsExactlyZero) {
  Tape<double> tp;
  const int D = 4;
  std::vector<Dbl> probs;
  const std::vector<std::uint8_t> mask{1, 0};
  multi_head_self_attention(tp.leaf({2, D}, randn(8, 4)), attention_leaves(tp, D, 30), 2, mask, &probs);
  for (const auto& p : probs) {
    EXPECT_EQ(p.values()[1], 0.0);
    EXPECT_EQ(p.values()[3], 0.0);
  }
}

TEST(Attention, HeadsMustDivideWidth) {
  Tape<double> tp;
  const std::vector<std::uint8_t> mask{1, 1};
  EXPECT_THROW(multi_head_self_attention(tp.leaf({2, 6}, randn(12, 1)), attention_leaves(tp, 6, 1), 4, mask),
               ConfigError);
}

TEST(Attention, EncoderBlockGradCheck) {
  const int T = 4, D = 8, FF = 12;
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  auto block = [&](Tape<double>& tp, const Dbl& x) {
    EncoderWeights<double> w;
    w.attn = attention_leaves(tp, D, 40);
    w.ln1_gain = tp.leaf({D}, randn(D, 50, 0.2));
    for (auto& g : tp.node(w.ln1_gain.id()).value) g += 1.0;
    w.ln1_bias = tp.leaf({D}, randn(D, 51, 0.1));
    w.ff1_w = tp.leaf({D, FF}, randn(D * FF, 52, 0.4));
    w.ff1_b = tp.leaf({FF}, randn(FF, 53, 0.1));
    w.ff2_w = tp.leaf({FF, D}, randn(FF * D, 54, 0.4));
    w.ff2_b = tp.leaf({D}, randn(D, 55, 0.1));
    w.ln2_gain = tp.leaf({D}, std::vector<double>(D, 1.0));
    w.ln2_bias = tp.leaf({D}, std::vector<double>(D, 0.0));
    std::mt19937_64 rng(0);
    return weighted_sum(encoder_block(x, w, 2, mask, 0.0, false, rng));
  };
  const auto r = grad_check(block, {T, D}, randn(T * D, 60));
  EXPECT_GT(r.kink_margin, 10 * 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, RelativeErrorFormula) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}
