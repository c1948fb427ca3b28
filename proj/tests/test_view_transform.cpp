#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "occgeom/random.hpp"
#include "occgeom/view_transform.hpp"
#include "oracles.hpp"

using namespace occgeom;

namespace {

Intrinsicsd small_intrinsics(int w, int h) {
  Intrinsicsd k;
  k.fx = k.fy = 10;
  k.cx = (w - 1) / 2.0;
  k.cy = (h - 1) / 2.0;
  k.width = w;
  k.height = h;
  return k;
}

VoxelGridSpec grid(Index x, Index y, Index z, double s = 0.5) {
  VoxelGridSpec g;
  g.dims = {x, y, z};
  g.origin = Eigen::Vector3d(-0.5 * x * s, -0.5 * y * s, -0.5 * z * s);
  g.voxel_size = s;
  return g;
}

DenseTensor random_points(Index n, const VoxelGridSpec& g, Rng& rng) {
  DenseTensor p({n, 3});
  const Eigen::Vector3d hi = g.max_corner();
  for (Index i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      // Some points fall outside so the drop rule is exercised.
      const double span = hi[a] - g.origin[a];
      p(i, a) = rng.uniform(g.origin[a] - 0.1 * span, hi[a] + 0.1 * span);
    }
  return p;
}

}  // namespace

TEST(DepthBins, Uniform) {
  const auto b = DepthDistribution::UniformBins(5, 1.0, 45.0);
  ASSERT_EQ(b.size(), 5u);
  EXPECT_DOUBLE_EQ(b.front(), 1.0);
  EXPECT_DOUBLE_EQ(b.back(), 45.0);
  EXPECT_DOUBLE_EQ(b[2], 23.0);
  EXPECT_THROW(DepthDistribution::UniformBins(0), DomainError);
}

TEST(DepthBins, NearestBinTieGoesLow) {
  const DepthDistribution d{{1.0, 3.0}, DenseTensor({1, 1, 2})};
  EXPECT_EQ(d.nearest_bin(2.0), 0);
  EXPECT_EQ(d.nearest_bin(2.1), 1);
  EXPECT_EQ(d.nearest_bin(-5.0), 0);
}

TEST(Lift, OneHotCopiesFeatures) {
  const DenseTensor f = oracle::random_tensor({2, 3, 4}, 1);
  DenseTensor probs({2, 3, 3});
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 3; ++c) probs(r, c, 1) = 1.0;
  const auto pts = lift(f, {{2.0, 4.0, 6.0}, probs}, small_intrinsics(3, 2));
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 3; ++c)
      for (Index b = 0; b < 3; ++b)
        for (Index ch = 0; ch < 4; ++ch)
          EXPECT_EQ(pts.features((r * 3 + c) * 3 + b, ch), b == 1 ? f(r, c, ch) : 0.0);
}

TEST(Lift, UniformQuarters) {
  const DenseTensor f = oracle::random_tensor({2, 2, 3}, 2);
  const auto pts = lift(f, {{1, 2, 3, 4}, DenseTensor::Constant({2, 2, 4}, 0.25)}, small_intrinsics(2, 2));
  for (Index p = 0; p < 4; ++p)
    for (Index b = 0; b < 4; ++b)
      for (Index ch = 0; ch < 3; ++ch) EXPECT_EQ(pts.features(p * 4 + b, ch), f(p / 2, p % 2, ch) / 4);
}

TEST(Lift, MatchesDoubleLoopOracle) {
  const DenseTensor f = oracle::random_tensor({2, 2, 3}, 3);
  const DenseTensor probs = softmax(oracle::random_tensor({2, 2, 2}, 4), 2);
  const std::vector<double> bins{2.5, 7.0};
  const auto k = small_intrinsics(2, 2);
  const auto pts = lift(f, {bins, probs}, k);
  Index n = 0;
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 2; ++c)
      for (Index b = 0; b < 2; ++b, ++n) {
        const double x = (c - k.cx) / k.fx, y = (r - k.cy) / k.fy;
        const double norm = std::sqrt(x * x + y * y + 1.0);
        EXPECT_EQ(pts.positions(n, 0), bins[b] * (x / norm));
        EXPECT_EQ(pts.positions(n, 1), bins[b] * (y / norm));
        EXPECT_EQ(pts.positions(n, 2), bins[b] * (1.0 / norm));
        for (Index ch = 0; ch < 3; ++ch) EXPECT_EQ(pts.features(n, ch), probs(r, c, b) * f(r, c, ch));
      }
}

TEST(Lift, ConservesFeatureMass) {
  const DenseTensor f = oracle::random_tensor({3, 4, 5}, 5);
  const DenseTensor probs = softmax(oracle::random_tensor({3, 4, 6}, 6, -3, 3), 2);
  const auto pts = lift(f, {DepthDistribution::UniformBins(6), probs}, small_intrinsics(4, 3));
  for (Index p = 0; p < 12; ++p) {
    double lifted = 0.0, direct = 0.0;
    for (Index b = 0; b < 6; ++b) lifted += pts.features.matrix().row(p * 6 + b).cwiseAbs().sum();
    direct = f.data().segment(p * 5, 5).cwiseAbs().sum();
    EXPECT_NEAR(lifted, direct, 1e-12);
  }
}

TEST(Lift, ShapeMismatch) {
  EXPECT_THROW(lift(DenseTensor({2, 2, 1}), {{1.0}, DenseTensor({2, 3, 1})}, small_intrinsics(2, 2)),
               DimensionError);
}

TEST(VoxelPool, SinglePointAtCentre) {
  const auto g = grid(4, 4, 2);
  const Eigen::Vector3d c = g.voxel_center(1, 2, 1);
  const auto out = voxel_pool(DenseTensor({1, 3}, {c.x(), c.y(), c.z()}), DenseTensor({1, 2}, {3.0, -1.0}), g);
  EXPECT_EQ(out.data(0, 1, 2, 1), 3.0);
  EXPECT_EQ(out.data(1, 1, 2, 1), -1.0);
  EXPECT_EQ(out.data.data().cwiseAbs().sum(), 4.0);
  EXPECT_EQ(out.provenance, FeatureProvenance::kExplicit);
}

TEST(VoxelPool, TwoPointsAverage) {
  const auto g = grid(2, 2, 2);
  const Eigen::Vector3d c = g.voxel_center(0, 1, 0);
  const DenseTensor p({2, 3}, {c.x(), c.y(), c.z(), c.x() + 0.1, c.y() - 0.1, c.z()});
  const auto out = voxel_pool(p, DenseTensor({2, 1}, {1.0, 4.0}), g);
  EXPECT_EQ(out.data(0, 0, 1, 0), 2.5);
}

TEST(VoxelPool, MatchesScatterMeanOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = grid(rng.integer(1, 8), rng.integer(1, 8), rng.integer(1, 4));
    const Index n = rng.integer(0, 1000);
    const DenseTensor pts = n ? random_points(n, g, rng) : DenseTensor();
    if (!n) continue;
    const DenseTensor f = oracle::random_tensor({n, 3}, static_cast<std::uint64_t>(trial));
    EXPECT_EQ(voxel_pool(pts, f, g).data.data(), oracle::scatter_mean(pts, f, g).data());
  }
}

TEST(VoxelPool, DropsOutsidePoints) {
  const auto g = grid(2, 2, 2);
  const auto out = voxel_pool(DenseTensor({1, 3}, {100, 0, 0}), DenseTensor({1, 1}, {1.0}), g);
  EXPECT_EQ(out.data.data().cwiseAbs().sum(), 0.0);
}

TEST(Idm, SingleSampleCopiesPixel) {
  // Camera at the origin looking along +x; the voxel centre projects to an
  // integer pixel.
  Camera cam{small_intrinsics(5, 5), Posed::Identity()};
  cam.pose.rotation << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  VoxelGridSpec g;
  g.dims = {1, 1, 1};
  g.voxel_size = 1.0;
  g.origin = Eigen::Vector3d(4.5, -0.5, -0.5);
  const DenseTensor feats = oracle::random_tensor({5, 5, 3}, 9);
  const DeformableSampling s{DenseTensor({1, 2}), DenseTensor({1})};
  const std::vector<DenseTensor> maps{feats};
  const std::vector<Camera> cams{cam};
  const auto out = idm_sample(g, DenseTensor({2, 1, 1, 1}), maps, cams, s);
  for (Index ch = 0; ch < 3; ++ch) EXPECT_NEAR(out.data(ch, 0, 0, 0), feats(2, 2, ch), 1e-12);
}

TEST(Idm, BehindEveryCameraIsZero) {
  Camera cam{small_intrinsics(5, 5), Posed::Identity()};
  VoxelGridSpec g;
  g.dims = {1, 1, 1};
  g.voxel_size = 1.0;
  g.origin = Eigen::Vector3d(-0.5, -0.5, -5.5);
  const std::vector<DenseTensor> maps{DenseTensor::Constant({5, 5, 2}, 1.0)};
  const std::vector<Camera> cams{cam};
  const auto out = idm_sample(g, DenseTensor({1, 1, 1, 1}), maps, cams, {DenseTensor({1, 2}), DenseTensor({1})});
  EXPECT_EQ(out.data.data().cwiseAbs().sum(), 0.0);
}

TEST(Idm, MaskedOffsetDropsOut) {
  Camera cam{small_intrinsics(7, 7), Posed::Identity()};
  const auto g = grid(3, 3, 2, 0.3);
  VoxelGridSpec shifted = g;
  shifted.origin.z() += 3.0;
  const std::vector<DenseTensor> maps{oracle::random_tensor({7, 7, 2}, 10)};
  const std::vector<Camera> cams{cam};
  const DeformableSampling two{DenseTensor({2, 2}, {0.3, -0.2, 1.5, 0.5}),
                               DenseTensor({2}, {0.0, -std::numeric_limits<double>::infinity()})};
  const DeformableSampling one{DenseTensor({1, 2}, {0.3, -0.2}), DenseTensor({1})};
  const DenseTensor q({1, 3, 3, 2});
  EXPECT_EQ(idm_sample(shifted, q, maps, cams, two).data.data(), idm_sample(shifted, q, maps, cams, one).data.data());
}

TEST(Upsample, ConstantStaysConstant) {
  const auto fine = grid(4, 4, 2);
  OccupancyFeature coarse{DenseTensor::Constant({2, 2, 2, 1}, 1.5), fine.downsampled(), FeatureProvenance::kImplicit};
  const auto up = trilinear_upsample(coarse, fine);
  EXPECT_EQ(up.data.shape(), (Shape{2, 4, 4, 2}));
  EXPECT_LE((up.data.data().array() - 1.5).abs().maxCoeff(), 1e-15);
}

TEST(Upsample, LinearRampIsReproducedInside) {
  const auto fine = grid(8, 2, 2);
  const auto coarse_spec = fine.downsampled();
  OccupancyFeature coarse{DenseTensor({1, 4, 1, 1}, {0, 1, 2, 3}), coarse_spec, FeatureProvenance::kImplicit};
  const auto up = trilinear_upsample(coarse, fine);
  // Fine centre i sits at coarse lattice coordinate (i - 0.5) / 2, clamped.
  for (Index i = 0; i < 8; ++i)
    EXPECT_NEAR(up.data(0, i, 0, 0), std::clamp((i - 0.5) / 2.0, 0.0, 3.0), 1e-12);
}

TEST(Fuse, IdentitySelectorSubsamples) {
  const auto g = grid(8, 8, 4);
  OccupancyFeature oe{oracle::random_tensor({3, 8, 8, 4}, 11), g, FeatureProvenance::kExplicit};
  OccupancyFeature oi{DenseTensor({3, 8, 8, 4}), g, FeatureProvenance::kImplicit};
  DenseTensor w({3, 6, 1, 1, 1});
  for (Index c = 0; c < 3; ++c) w(c, c, 0, 0, 0) = 1.0;
  const auto out = fuse_and_compress(oe, oi, w);
  EXPECT_EQ(out.data.shape(), (Shape{3, 4, 4, 2}));
  EXPECT_EQ(out.spec.dims, (std::array<Index, 3>{4, 4, 2}));
  for (Index c = 0; c < 3; ++c)
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j)
        for (Index k = 0; k < 2; ++k) EXPECT_EQ(out.data(c, i, j, k), oe.data(c, 2 * i, 2 * j, 2 * k));
}

TEST(Fuse, MatchesConcatThenConvOracle) {
  const auto g = grid(6, 4, 2);
  OccupancyFeature oe{oracle::random_tensor({2, 6, 4, 2}, 12), g, FeatureProvenance::kExplicit};
  OccupancyFeature oi{oracle::random_tensor({2, 6, 4, 2}, 13), g, FeatureProvenance::kImplicit};
  const DenseTensor w = oracle::random_tensor({5, 4, 3, 3, 3}, 14);
  DenseTensor cat({4, 6, 4, 2});
  cat.data() << oe.data.data(), oi.data.data();
  const auto got = fuse_and_compress(oe, oi, w);
  const auto ref = oracle::conv3d(cat, w, 2);
  ASSERT_EQ(got.data.shape(), ref.shape());
  EXPECT_LE((got.data.data() - ref.data()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(got.provenance, FeatureProvenance::kCompressed);
}

TEST(Fuse, RejectsMismatches) {
  const auto g = grid(4, 4, 2);
  OccupancyFeature a{DenseTensor({2, 4, 4, 2}), g, FeatureProvenance::kExplicit};
  OccupancyFeature b{DenseTensor({3, 4, 4, 2}), g, FeatureProvenance::kImplicit};
  EXPECT_THROW(fuse_and_compress(a, b, DenseTensor({1, 5, 1, 1, 1})), DimensionError);
  const auto odd = grid(3, 4, 2);
  OccupancyFeature c{DenseTensor({2, 3, 4, 2}), odd, FeatureProvenance::kExplicit};
  EXPECT_THROW(fuse_and_compress(c, c, DenseTensor({1, 4, 1, 1, 1})), DimensionError);
}

TEST(TransformViews, ShapeContract) {
  const auto g = grid(8, 8, 4);
  Camera cam{small_intrinsics(6, 4), Posed::Identity()};
  const DenseTensor feats = oracle::random_tensor({4, 6, 5}, 15);
  const DepthDistribution depth{DepthDistribution::UniformBins(3, 0.5, 2.0), softmax(oracle::random_tensor({4, 6, 3}, 16), 2)};
  const std::vector<CameraView> views{{cam, feats, depth}};
  ViewTransformParams p;
  p.grid = g;
  p.query_grid = g.downsampled();
  p.queries = DenseTensor({5, 4, 4, 2});
  p.sampling = {DenseTensor({2, 2}, {0, 0, 0.5, 0.5}), DenseTensor({2}, {0.1, -0.2})};
  p.compress_weights = oracle::random_tensor({7, 10, 3, 3, 3}, 17);
  const auto r = transform_views(views, p);
  EXPECT_EQ(r.explicit_feature.data.shape(), (Shape{5, 8, 8, 4}));
  EXPECT_EQ(r.implicit_feature.data.shape(), (Shape{5, 8, 8, 4}));
  EXPECT_EQ(r.fused.data.shape(), (Shape{10, 8, 8, 4}));
  EXPECT_EQ(r.compressed.data.shape(), (Shape{7, 4, 4, 2}));
}
