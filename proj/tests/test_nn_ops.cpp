#include <gtest/gtest.h>

#include <cmath>

#include "driu/gradcheck.hpp"
#include "driu/nn_ops.hpp"
#include "test_util.hpp"

using namespace driu;
using driu::testing::random_tensor;

namespace {

// Six nested loops with explicit zero padding.
Tensor64 naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b) {
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2), pad = (k - 1) / 2;
  Tensor64 out({cout, h, wd});
  for (int o = 0; o < cout; ++o) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < wd; ++xx) {
        double acc = b[static_cast<std::size_t>(o)];
        for (int c = 0; c < cin; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int sy = y + ky - pad, sx = xx + kx - pad;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              acc += w[((static_cast<std::size_t>(o) * cin + c) * k + ky) * k + kx] * x.at(c, sy, sx);
            }
          }
        }
        out.at(o, y, xx) = acc;
      }
    }
  }
  return out;
}

// Central differences of <f(x), r> with respect to every element of x.
template <typename F>
Tensor64 numeric_grad(F f, Tensor64 x, const Tensor64& r, double h = 1e-3) {
  Tensor64 g(x.shape());
  auto dot = [&](const Tensor64& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = dot(f(x));
    x[i] = saved - h;
    const double minus = dot(f(x));
    x[i] = saved;
    g[i] = (plus - minus) / (2 * h);
  }
  return g;
}

double max_rel_error(const Tensor64& a, const Tensor64& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i]));
  return worst;
}

}  // namespace

TEST(Conv2d, OneByOneIdentityKernel) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor<float>({1, 4, 5}, rng);
  const auto [y, cache] = conv2d_forward(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}, 0.0f), ConvSpec{1, 1});
  EXPECT_EQ(y, x);
}

TEST(Conv2d, AllOnesKernelCountsPaddedNeighbours) {
  const Tensor x({1, 4, 4}, 1.0f);
  for (auto algo : {ConvAlgorithm::direct, ConvAlgorithm::im2col}) {
    const auto [y, cache] = conv2d_forward(x, Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}, 0.0f), ConvSpec{1, 3}, algo);
    EXPECT_EQ(y.at(0, 1, 1), 9.0f);
    EXPECT_EQ(y.at(0, 2, 2), 9.0f);
    EXPECT_EQ(y.at(0, 0, 0), 4.0f);
    EXPECT_EQ(y.at(0, 3, 3), 4.0f);
    EXPECT_EQ(y.at(0, 0, 1), 6.0f);
    EXPECT_EQ(y.at(0, 2, 3), 6.0f);
  }
}

TEST(Conv2d, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> d(1, 6);
    const int cin = d(rng), cout = d(rng), h = d(rng) + 2, w = d(rng) + 2;
    const int k = trial % 2 == 0 ? 3 : 1;
    const Tensor64 x = random_tensor<double>({cin, h, w}, rng);
    const Tensor64 wt = random_tensor<double>({cout, cin, k, k}, rng);
    const Tensor64 b = random_tensor<double>({cout}, rng);
    const Tensor64 expected = naive_conv(x, wt, b);
    for (auto algo : {ConvAlgorithm::direct, ConvAlgorithm::im2col}) {
      const Tensor64 got = conv2d_forward(x, wt, b, ConvSpec{cout, k}, algo).first;
      ASSERT_EQ(got.shape(), expected.shape());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_LE(std::abs(got[i] - expected[i]), 1e-5 * std::max(1.0, std::abs(expected[i])));
      }
      // The float path agrees with the 64-bit oracle within single precision.
      const Tensor gotf =
          conv2d_forward(x.cast<float>(), wt.cast<float>(), b.cast<float>(), ConvSpec{cout, k}, algo).first;
      for (std::size_t i = 0; i < gotf.size(); ++i) {
        EXPECT_LE(std::abs(gotf[i] - expected[i]), 1e-5 * std::max(1.0, std::abs(expected[i])));
      }
    }
  }
}

TEST(Conv2d, RejectsBadArguments) {
  const Tensor x({2, 4, 4});
  EXPECT_THROW(conv2d_forward(x, Tensor({1, 2, 5, 5}), Tensor({1}), ConvSpec{1, 5}), InvalidArgument);
  EXPECT_THROW(conv2d_forward(x, Tensor({1, 3, 3, 3}), Tensor({1}), ConvSpec{1, 3}), ShapeError);
  EXPECT_THROW(conv2d_forward(x, Tensor({1, 2, 3, 3}), Tensor({2}), ConvSpec{1, 3}), ShapeError);
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor<float>({2, 5, 5}, rng);
  const auto [y, cache] = conv2d_forward(x, random_tensor<float>({3, 2, 3, 3}, rng), Tensor({3}), ConvSpec{3, 3});
  const auto g = conv2d_backward(Tensor(y.shape(), 0.0f), cache);
  for (const Tensor* t : {&g.input, &g.weights, &g.bias}) {
    for (float v : t->data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Conv2dBackward, BiasGradientIsChannelSum) {
  std::mt19937_64 rng(4);
  const Tensor64 x = random_tensor<double>({2, 4, 3}, rng);
  const auto [y, cache] = conv2d_forward(x, random_tensor<double>({3, 2, 3, 3}, rng), Tensor64({3}), ConvSpec{3, 3});
  const Tensor64 r = random_tensor<double>(y.shape(), rng);
  const auto g = conv2d_backward(r, cache);
  for (int o = 0; o < 3; ++o) {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += r[static_cast<std::size_t>(o * 12 + i)];
    EXPECT_NEAR(g.bias[static_cast<std::size_t>(o)], s, 1e-12);
  }
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int k : {1, 3}) {
    const Tensor64 x = random_tensor<double>({3, 5, 4}, rng);
    const Tensor64 w = random_tensor<double>({2, 3, k, k}, rng);
    const Tensor64 b = random_tensor<double>({2}, rng);
    const ConvSpec spec{2, k};
    const Tensor64 r = random_tensor<double>({2, 5, 4}, rng);
    const auto g = conv2d_backward(r, conv2d_forward(x, w, b, spec).second);
    EXPECT_LT(max_rel_error(g.input, numeric_grad([&](const Tensor64& v) { return naive_conv(v, w, b); }, x, r)),
              1e-4);
    EXPECT_LT(max_rel_error(g.weights, numeric_grad([&](const Tensor64& v) { return naive_conv(x, v, b); }, w, r)),
              1e-4);
    EXPECT_LT(max_rel_error(g.bias, numeric_grad([&](const Tensor64& v) { return naive_conv(x, w, v); }, b, r)),
              1e-4);
  }
}

TEST(Relu, ForwardAndSubgradient) {
  const Tensor x({3}, std::vector<float>{-1, 0, 2});
  const auto [y, cache] = relu(x);
  EXPECT_EQ(y.values(), (std::vector<float>{0, 0, 2}));
  EXPECT_EQ(relu_backward(Tensor({3}, 1.0f), cache).values(), (std::vector<float>{0, 0, 1}));
}

TEST(Relu, PositiveInputIsIdentityBothWays) {
  const Tensor x({4}, std::vector<float>{0.1f, 1, 2, 3});
  const auto [y, cache] = relu(x);
  EXPECT_EQ(y, x);
  const Tensor g({4}, std::vector<float>{5, 6, 7, 8});
  EXPECT_EQ(relu_backward(g, cache), g);
}

TEST(MaxPool, MaxOfFour) {
  const auto [y, cache] = maxpool2x2(Tensor({1, 2, 2}, std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y[0], 4.0f);
  EXPECT_EQ(maxpool2x2_backward(Tensor({1, 1, 1}, 1.0f), cache).values(), (std::vector<float>{0, 0, 0, 1}));
}

TEST(MaxPool, CeilModeTruncatesBorderWindows) {
  Tensor x({1, 5, 5});
  std::iota(x.data().begin(), x.data().end(), 0.0f);
  const auto [y, cache] = maxpool2x2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
  EXPECT_EQ(y.at(0, 0, 0), 6.0f);
  EXPECT_EQ(y.at(0, 0, 2), 9.0f);    // window holds column 4 only
  EXPECT_EQ(y.at(0, 2, 2), 24.0f);   // single corner pixel
  EXPECT_EQ(y.at(0, 2, 0), 21.0f);
}

TEST(MaxPool, TiesGoToFirstInRowMajorOrder) {
  const auto [y, cache] = maxpool2x2(Tensor({1, 2, 2}, 7.0f));
  EXPECT_EQ(maxpool2x2_backward(Tensor({1, 1, 1}, 1.0f), cache).values(), (std::vector<float>{1, 0, 0, 0}));
}

TEST(MaxPool, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  Tensor64 x({2, 5, 6});
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.05 * order[i];
  const auto [y, cache] = maxpool2x2(x);
  const Tensor64 r = random_tensor<double>(y.shape(), rng);
  const Tensor64 num = numeric_grad([](const Tensor64& v) { return maxpool2x2(v).first; }, x, r);
  EXPECT_LT(max_rel_error(maxpool2x2_backward(r, cache), num), 1e-4);
}

TEST(Bilinear, ConstantExtension) {
  const auto [y, cache] = bilinear_resize(Tensor({2, 1, 1}, std::vector<float>{3, -1}), 4, 5);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 20; ++i) EXPECT_EQ(y[static_cast<std::size_t>(c * 20 + i)], c == 0 ? 3.0f : -1.0f);
  }
}

TEST(Bilinear, AlignCornersMidpoint) {
  const auto [y, cache] = bilinear_resize(Tensor({1, 2, 2}, std::vector<float>{0, 1, 0, 1}), 2, 3);
  EXPECT_EQ(y.values(), (std::vector<float>{0, 0.5f, 1, 0, 0.5f, 1}));
}

TEST(Bilinear, MatchesAlignCornersFormula) {
  std::mt19937_64 rng(7);
  const Tensor64 x = random_tensor<double>({2, 3, 4}, rng);
  const int oh = 7, ow = 9;
  const Tensor64 y = bilinear_resize(x, oh, ow).first;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const double sy = i * 2.0 / 6.0, sx = j * 3.0 / 8.0;
        const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
        const int y1 = std::min(y0 + 1, 2), x1 = std::min(x0 + 1, 3);
        const double fy = sy - y0, fx = sx - x0;
        const double expected = (1 - fy) * ((1 - fx) * x.at(c, y0, x0) + fx * x.at(c, y0, x1)) +
                                fy * ((1 - fx) * x.at(c, y1, x0) + fx * x.at(c, y1, x1));
        EXPECT_NEAR(y.at(c, i, j), expected, 1e-12);
      }
    }
  }
}

TEST(Bilinear, SameSizeIsIdentityAndCornersArePreserved) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor<float>({1, 4, 6}, rng);
  EXPECT_EQ(bilinear_resize(x, 4, 6).first, x);
  const Tensor y = bilinear_resize(x, 13, 11).first;
  EXPECT_EQ(y.at(0, 0, 0), x.at(0, 0, 0));
  EXPECT_EQ(y.at(0, 12, 10), x.at(0, 3, 5));
}

TEST(Bilinear, DownscalingIsUnsupported) {
  EXPECT_THROW(bilinear_resize(Tensor({1, 4, 4}), 2, 4), UnsupportedError);
}

TEST(Bilinear, BackwardIsTheAdjoint) {
  std::mt19937_64 rng(9);
  const Tensor64 x = random_tensor<double>({3, 4, 3}, rng);
  const auto [y, cache] = bilinear_resize(x, 10, 8);
  const Tensor64 r = random_tensor<double>(y.shape(), rng);
  const Tensor64 g = bilinear_resize_backward(r, cache);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * r[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * g[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
  const Tensor64 num = numeric_grad([](const Tensor64& v) { return bilinear_resize(v, 10, 8).first; }, x, r);
  EXPECT_LT(max_rel_error(g, num), 1e-4);
}

TEST(Concat, FourSideBlocksAndBack) {
  std::mt19937_64 rng(10);
  std::vector<Tensor> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(random_tensor<float>({16, 3, 2}, rng));
  const auto [y, cache] = concat_channels<float>(parts);
  EXPECT_EQ(y.shape(), (Shape{64, 3, 2}));
  EXPECT_EQ(y.at(17, 1, 1), parts[1].at(1, 1, 1));
  const auto back = concat_backward(y, cache);
  ASSERT_EQ(back.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(back[static_cast<std::size_t>(i)], parts[static_cast<std::size_t>(i)]);
}

TEST(Concat, SingleInputIsIdentity) {
  std::mt19937_64 rng(11);
  const std::vector<Tensor> one{random_tensor<float>({2, 3, 3}, rng)};
  EXPECT_EQ(concat_channels<float>(one).first, one[0]);
}

TEST(Concat, SpatialMismatchThrows) {
  const std::vector<Tensor> bad{Tensor({1, 2, 2}), Tensor({1, 3, 2})};
  EXPECT_THROW(concat_channels<float>(bad), ShapeError);
}

TEST(Sigmoid, StableAndSymmetric) {
  EXPECT_EQ(sigmoid(0.0f), 0.5f);
  EXPECT_NEAR(sigmoid(40.0f), 1.0f, 1e-7f);
  EXPECT_TRUE(std::isfinite(sigmoid(-1000.0f)));
  EXPECT_TRUE(std::isfinite(sigmoid(1000.0)));
  for (float a : {-30.0f, -3.0f, -0.2f, 0.7f, 5.0f}) EXPECT_NEAR(sigmoid(-a), 1.0f - sigmoid(a), 1e-6f);
}
