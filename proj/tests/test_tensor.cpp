#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "occgeom/tensor.hpp"
#include "oracles.hpp"

using namespace occgeom;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST(Tensor, IdentityTimesA) {
  const DenseTensor a = oracle::random_tensor({3, 4}, 1);
  const DenseTensor r = matmul(DenseTensor::Identity(3), a);
  EXPECT_EQ(r.shape(), a.shape());
  EXPECT_EQ(r.data(), a.data());
}

TEST(Tensor, MatmulHandExample) {
  const DenseTensor a({2, 2}, {1, 2, 3, 4});
  const DenseTensor b({2, 2}, {0, 1, 1, 0});
  const DenseTensor r = matmul(a, b);
  EXPECT_EQ(r(0, 0), 2);
  EXPECT_EQ(r(0, 1), 1);
  EXPECT_EQ(r(1, 0), 4);
  EXPECT_EQ(r(1, 1), 3);
}

TEST(Tensor, MatmulZeros) {
  const DenseTensor a = oracle::random_tensor({3, 2}, 2);
  const DenseTensor r = matmul(a, DenseTensor({2, 5}));
  EXPECT_EQ(r.shape(), (Shape{3, 5}));
  EXPECT_EQ(r.data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Tensor, MatmulShapeMismatch) {
  EXPECT_THROW(matmul(DenseTensor({2, 3}), DenseTensor({2, 3})), DimensionError);
}

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW(DenseTensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(DenseTensor({2, 2})(2, 0), DimensionError);
}

TEST(Softmax, Uniform) {
  const DenseTensor s = softmax(DenseTensor({3}, {0, 0, 0}), 0);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(s(i), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, NegativeInfinityGetsZero) {
  const DenseTensor s = softmax(DenseTensor({2}, {-kInf, 0}), 0);
  EXPECT_EQ(s(0), 0.0);
  EXPECT_EQ(s(1), 1.0);
}

TEST(Softmax, TwoValues) {
  const DenseTensor s = softmax(DenseTensor({2}, {1, 2}), 0);
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  EXPECT_NEAR(s(0), e1 / (e1 + e2), 1e-15);
  EXPECT_NEAR(s(1), e2 / (e1 + e2), 1e-15);
  EXPECT_NEAR(s(0), 0.2689, 1e-4);
  EXPECT_NEAR(s(1), 0.7311, 1e-4);
}

TEST(Softmax, AllMaskedSliceIsZero) {
  const DenseTensor s = softmax(DenseTensor({2, 2}, {-kInf, -kInf, 1, 1}), 1);
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_EQ(s(0, 1), 0.0);
  EXPECT_NEAR(s(1, 0), 0.5, 1e-15);
}

TEST(Softmax, SumsToOneOnEveryAxis) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DenseTensor x = oracle::random_tensor({3, 4, 5}, seed, -30, 30);
    for (Index axis = 0; axis < 3; ++axis) {
      const DenseTensor s = softmax(x, axis);
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j)
          for (Index k = 0; k < 5; ++k) {
            if ((axis == 0 && i) || (axis == 1 && j) || (axis == 2 && k)) continue;
            double sum = 0.0;
            for (Index m = 0; m < x.dim(axis); ++m)
              sum += axis == 0 ? s(m, j, k) : axis == 1 ? s(i, m, k) : s(i, j, m);
            EXPECT_NEAR(sum, 1.0, 1e-6);
          }
    }
  }
}

TEST(Softmax, MatchesDirectFormula) {
  const DenseTensor x = oracle::random_tensor({4, 6}, 9, -5, 5);
  const DenseTensor s = softmax(x, 1);
  for (Index i = 0; i < 4; ++i) {
    std::vector<double> row;
    for (Index j = 0; j < 6; ++j) row.push_back(x(i, j));
    const auto ref = oracle::softmax_row(row);
    for (Index j = 0; j < 6; ++j) EXPECT_NEAR(s(i, j), ref[j], 1e-15);
  }
}

TEST(Softmax, BadAxis) { EXPECT_THROW(softmax(DenseTensor({2}), 1), DimensionError); }

TEST(Bilinear, ExactAtLatticePoints) {
  const DenseTensor img = oracle::random_tensor({7, 6, 2}, 3);
  const DenseTensor uv({1, 2}, {3, 5});
  const auto s = bilinear_sample(img, uv);
  ASSERT_TRUE(s.valid[0]);
  EXPECT_EQ(s.values(0, 0), img(5, 3, 0));
  EXPECT_EQ(s.values(0, 1), img(5, 3, 1));
}

TEST(Bilinear, MidpointOfFour) {
  const DenseTensor img({2, 2, 1}, {0, 0, 1, 1});
  const auto s = bilinear_sample(img, DenseTensor({1, 2}, {0.5, 0.5}));
  EXPECT_NEAR(s.values(0, 0), 0.5, 1e-15);
}

TEST(Bilinear, OutOfBounds) {
  const DenseTensor img = DenseTensor::Constant({4, 4, 1}, 1.0);
  const auto s = bilinear_sample(img, DenseTensor({1, 2}, {-10, -10}));
  EXPECT_FALSE(s.valid[0]);
  EXPECT_EQ(s.values(0, 0), 0.0);
}

TEST(Bilinear, LinearAlongEachAxis) {
  const DenseTensor img = oracle::random_tensor({5, 5, 1}, 4);
  for (double f : {0.1, 0.25, 0.7}) {
    std::vector<double> out(1);
    ASSERT_TRUE(bilinear_lookup(img, 2 + f, 3, out));
    EXPECT_NEAR(out[0], (1 - f) * img(3, 2, 0) + f * img(3, 3, 0), 1e-14);
    ASSERT_TRUE(bilinear_lookup(img, 1, 1 + f, out));
    EXPECT_NEAR(out[0], (1 - f) * img(1, 1, 0) + f * img(2, 1, 0), 1e-14);
  }
}

TEST(Conv3d, UnitKernelIsIdentity) {
  const DenseTensor x = oracle::random_tensor({2, 3, 4, 5}, 5);
  DenseTensor w({2, 2, 1, 1, 1});
  w(0, 0, 0, 0, 0) = 1;
  w(1, 1, 0, 0, 0) = 1;
  EXPECT_EQ(conv3d(x, w, 1).data(), x.data());
}

TEST(Conv3d, StrideTwoHalvesExtents) {
  const DenseTensor x({1, 200, 200, 16});
  const DenseTensor w({1, 1, 3, 3, 3});
  const DenseTensor y = conv3d(x, w, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 100, 100, 8}));
  EXPECT_EQ(conv3d(DenseTensor({1, 5, 3, 1}), w, 2).shape(), (Shape{1, 3, 2, 1}));
}

TEST(Conv3d, ZeroKernel) {
  const DenseTensor x = oracle::random_tensor({2, 4, 4, 4}, 6);
  EXPECT_EQ(conv3d(x, DenseTensor({3, 2, 3, 3, 3}), 1).data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Conv3d, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseTensor x = oracle::random_tensor({3, 5, 4, 6}, seed);
    const DenseTensor w = oracle::random_tensor({2, 3, 3, 3, 3}, seed + 100);
    for (int stride : {1, 2}) {
      const DenseTensor got = conv3d(x, w, stride), ref = oracle::conv3d(x, w, stride);
      ASSERT_EQ(got.shape(), ref.shape());
      EXPECT_LE((got.data() - ref.data()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Conv3d, RejectsEvenKernelAndChannelMismatch) {
  EXPECT_THROW(conv3d(DenseTensor({1, 2, 2, 2}), DenseTensor({1, 1, 2, 2, 2}), 1), DimensionError);
  EXPECT_THROW(conv3d(DenseTensor({2, 2, 2, 2}), DenseTensor({1, 1, 1, 1, 1}), 1), DimensionError);
}

TEST(GradCheck, Quadratic) {
  const DenseTensor x = oracle::random_tensor({10}, 7);
  const auto f = [](const DenseTensor& t) { return t.data().squaredNorm(); };
  EXPECT_LT(grad_check(f, x, 2.0 * x, 1e-4), 1e-6);
}

TEST(GradCheck, Constant) {
  const DenseTensor x = oracle::random_tensor({4}, 8);
  EXPECT_EQ(grad_check([](const DenseTensor&) { return 3.0; }, x, DenseTensor({4}), 1e-4), 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  const DenseTensor x = oracle::random_tensor({4}, 8, 1, 2);
  const auto f = [](const DenseTensor& t) { return t.data().squaredNorm(); };
  EXPECT_GT(grad_check(f, x, 3.0 * x, 1e-4), 0.1);
}
