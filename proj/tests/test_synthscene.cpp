#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "occgeom/cast.hpp"
#include "occgeom/renderer.hpp"
#include "occgeom/synthscene.hpp"

using namespace occgeom;

namespace {

VoxelGridSpec scene_grid() {
  VoxelGridSpec g;
  g.dims = {32, 32, 8};
  g.voxel_size = 0.4;
  g.origin = Eigen::Vector3d(-6.4, -6.4, -1.0);
  return g;
}

SceneOptions small(int h = 36, int w = 64) {
  SceneOptions o;
  o.height = h;
  o.width = w;
  return o;
}

Camera forward_camera(int w, int h) {
  Camera cam{Intrinsicsd::FromFov(w, h, 1.2), Posed::Identity()};
  cam.pose.rotation << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  return cam;
}

}  // namespace

TEST(Scene, Deterministic) {
  const auto a = build_scene(9, scene_grid(), ScenePreset::kBoxes, small());
  const auto b = build_scene(9, scene_grid(), ScenePreset::kBoxes, small());
  EXPECT_EQ(a.grid.labels, b.grid.labels);
  EXPECT_EQ(a.visible, b.visible);
  for (const auto& [k, img] : a.images) EXPECT_EQ(img.data(), b.images.at(k).data());
  for (const auto& [k, d] : a.gt_depths) {
    EXPECT_EQ(d.depth.data(), b.gt_depths.at(k).depth.data());
    EXPECT_EQ(d.valid, b.gt_depths.at(k).valid);
  }
}

TEST(Scene, SeedsDiffer) {
  const auto a = build_scene(1, scene_grid(), ScenePreset::kBoxes, small(8, 8));
  const auto b = build_scene(2, scene_grid(), ScenePreset::kBoxes, small(8, 8));
  EXPECT_NE(a.grid.labels, b.grid.labels);
}

TEST(Scene, BoxesOccupiedFraction) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = build_scene(seed, scene_grid(), ScenePreset::kBoxes, small(4, 4));
    const double frac = static_cast<double>(s.grid.occupied_count()) / static_cast<double>(s.grid.spec.num_voxels());
    EXPECT_GE(frac, 0.01) << seed;
    EXPECT_LE(frac, 0.30) << seed;
  }
}

TEST(Scene, CorridorEndWallDistance) {
  const auto s = build_scene(0, scene_grid(), ScenePreset::kCorridor, small(36, 64));
  const Camera cam = s.rig.camera_at(0, s.current_time());
  const auto& d = s.gt_depths.at({0, s.current_time()});
  const Index r = std::lround(cam.intrinsics.cy), c = std::lround(cam.intrinsics.cx);
  ASSERT_TRUE(d.is_valid(r, c));
  // The end wall occupies x in [4.8, 5.2]; the camera looks along +x.
  const Eigen::Vector3d dir = ray(cam, Eigen::Vector2d(c, r)).direction;
  const double expect = (4.8 - cam.pose.translation.x()) / dir.x();
  EXPECT_NEAR(d.depth(r, c), expect, scene_grid().voxel_size);
}

TEST(Scene, CorridorHasTwoClasses) {
  const auto s = build_scene(0, scene_grid(), ScenePreset::kCorridor, small(4, 4));
  std::set<int> present;
  for (auto l : s.grid.labels)
    if (l != s.grid.free_label()) present.insert(l);
  EXPECT_EQ(present.size(), 2u);
}

TEST(Scene, GroundTruthDepthsAreTheOracle) {
  const auto s = build_scene(4, scene_grid(), ScenePreset::kRandomBlobs, small());
  for (const auto& [k, d] : s.gt_depths) {
    const auto o = raymarch_depth_oracle(s.grid, s.rig.camera_at(k.first, k.second), 36, 64);
    EXPECT_EQ(d.depth.data(), o.depth.data());
    EXPECT_EQ(d.valid, o.valid);
  }
}

TEST(Oracle, EmptyGridAllInvalid) {
  const auto g = SemanticOccupancy::AllFree(scene_grid(), 4);
  EXPECT_EQ(raymarch_depth_oracle(g, forward_camera(9, 7), 7, 9).valid_count(), 0);
}

TEST(Oracle, SingleVoxelOnAxis) {
  VoxelGridSpec spec;
  spec.dims = {10, 5, 5};
  spec.voxel_size = 1.0;
  spec.origin = Eigen::Vector3d(-0.5, -2.5, -2.5);
  auto g = SemanticOccupancy::AllFree(spec, 4);
  g.at(7, 2, 2) = 1;  // spans x in [6.5, 7.5)
  const auto d = raymarch_depth_oracle(g, forward_camera(9, 7), 7, 9);
  EXPECT_DOUBLE_EQ(d.depth(3, 4), 6.5);
}

TEST(Oracle, AgreesWithRenderer) {
  const auto s = build_scene(0, scene_grid(), ScenePreset::kCorridor, small(45, 80));
  RenderSettings rs;
  rs.height = 45;
  rs.width = 80;
  Index total = 0, close = 0;
  for (const auto& [k, gt] : s.gt_depths) {
    const auto r = render_view(s.density_gt, s.rig.camera_at(k.first, k.second), rs);
    for (Index p = 0; p < gt.depth.size(); ++p) {
      if (!gt.valid[p]) continue;
      ++total;
      close += r.valid[p] && std::abs(r.depth.data()[p] - gt.depth.data()[p]) <= rs.spacing();
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(close) / static_cast<double>(total), 0.99);
}

TEST(Images, EmptyGridIsSky) {
  const auto g = SemanticOccupancy::AllFree(scene_grid(), 4);
  const auto img = synthesize_image(g, forward_camera(9, 7), 7, 9);
  // Upper rows look higher and are bluer.
  EXPECT_LT(img(0, 4, 0), img(6, 4, 0));
  for (Index c = 1; c < 9; ++c) EXPECT_NEAR(img(3, c, 0), img(3, 4, 0), 0.01);
}

TEST(Images, IdenticalPosesGiveIdenticalImages) {
  const auto s = build_scene(2, scene_grid(), ScenePreset::kBoxes, small(8, 8));
  const Camera cam = s.rig.camera_at(0, s.current_time());
  EXPECT_EQ(synthesize_image(s.grid, cam, 20, 30).data(), synthesize_image(s.grid, cam, 20, 30).data());
  EXPECT_EQ(synthesize_image(s.grid, cam, 20, 30).data(), synthesize_image(s.grid, Camera(cam), 20, 30).data());
}

TEST(Images, InUnitRange) {
  const auto s = build_scene(3, scene_grid(), ScenePreset::kRandomBlobs, small());
  for (const auto& [k, img] : s.images) {
    EXPECT_GE(img.data().minCoeff(), 0.0);
    EXPECT_LE(img.data().maxCoeff(), 1.0);
  }
}

TEST(Lidar, AllValid) {
  const auto s = build_scene(1, scene_grid(), ScenePreset::kBoxes, small());
  const auto& d = s.gt_depths.at({0, 1});
  const auto all = sparse_lidar(d, -1, 3);
  EXPECT_EQ(static_cast<Index>(all.size()), d.valid_count());
  for (const auto& l : all) EXPECT_EQ(l.depth, d.depth(l.row, l.col));
}

TEST(Lidar, SeedsGiveDifferentSubsets) {
  const auto s = build_scene(1, scene_grid(), ScenePreset::kBoxes, small());
  const auto& d = s.gt_depths.at({0, 1});
  const auto a = sparse_lidar(d, 100, 1), b = sparse_lidar(d, 100, 2), a2 = sparse_lidar(d, 100, 1);
  std::set<std::pair<Index, Index>> sa, sb, sa2;
  for (const auto& l : a) sa.insert({l.row, l.col});
  for (const auto& l : b) sb.insert({l.row, l.col});
  for (const auto& l : a2) sa2.insert({l.row, l.col});
  EXPECT_EQ(sa.size(), 100u);
  EXPECT_NE(sa, sb);
  EXPECT_EQ(sa, sa2);
  for (const auto& l : a) EXPECT_TRUE(d.is_valid(l.row, l.col));
}

TEST(Lidar, TooManyRequested) {
  const auto s = build_scene(1, scene_grid(), ScenePreset::kBoxes, small(8, 8));
  const auto& d = s.gt_depths.at({0, 1});
  EXPECT_THROW(sparse_lidar(d, d.valid_count() + 1, 0), DomainError);
}

TEST(Scene, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "occgeom_scene_roundtrip";
  std::filesystem::remove_all(dir);
  const auto s = build_scene(5, scene_grid(), ScenePreset::kBoxes, small(12, 16));
  save_scene(s, dir);
  const auto l = load_scene(dir);
  EXPECT_EQ(l.grid.labels, s.grid.labels);
  EXPECT_EQ(l.visible, s.visible);
  EXPECT_EQ(l.rig.num_cameras(), 2u);
  for (const auto& [k, d] : s.gt_depths) {
    EXPECT_EQ(l.gt_depths.at(k).valid, d.valid);
    EXPECT_LE((l.gt_depths.at(k).depth.data() - d.depth.data()).cwiseAbs().maxCoeff(), 1e-5);
    // Images travel through 8-bit files.
    EXPECT_LE((l.images.at(k).data() - s.images.at(k).data()).cwiseAbs().maxCoeff(), 0.5 / 255 + 1e-12);
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_scene(dir), IoError);
}

TEST(Scene, RejectsBadOptions) {
  SceneOptions o = small(4, 4);
  o.num_cameras = 0;
  EXPECT_THROW(build_scene(0, scene_grid(), ScenePreset::kBoxes, o), ConfigError);
  EXPECT_THROW(preset_from_string("forest"), ConfigError);
}

TEST(Scene, WarpsAreConsistentOnCovisiblePixels) {
  // With ground-truth depth, each context reconstructs the target wherever
  // the surface point is visible in both views; occlusions and borders are
  // excluded by checking the source depth and eroding by the SSIM radius.
  for (auto preset : {ScenePreset::kBoxes, ScenePreset::kCorridor, ScenePreset::kRandomBlobs}) {
    const auto s = build_scene(1, scene_grid(), preset, small(90, 160));
    for (const auto& ctx : cast_contexts(s.rig)) {
      const auto& ks = s.rig.camera(ctx.source.first).intrinsics;
      const auto& kt = s.rig.camera(ctx.target.first).intrinsics;
      const auto& td = s.gt_depths.at(ctx.target);
      const auto& sd = s.gt_depths.at(ctx.source);
      const auto w = warp_image(s.images.at(ctx.source), td, ctx, ks, kt);
      const Index h = td.height(), wd = td.width();
      const Posed inv = ctx.pose.inverse();
      std::vector<std::uint8_t> co(w.valid.size(), 0), eroded(w.valid.size(), 0);
      for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < wd; ++c) {
          const Index p = r * wd + c;
          if (!w.valid[p]) continue;
          const Eigen::Vector3d x =
              inv * Eigen::Vector3d(td.depth.data()[p] * kt.backproject(Eigen::Vector2d(c, r)).normalized());
          const auto pr = project_camera_frame(ks, x);
          const Index u = std::lround(pr.uv.x()), v = std::lround(pr.uv.y());
          if (!sd.is_valid(v, u) || std::abs(sd.depth(v, u) - x.norm()) > 0.2) continue;
          co[p] = 1;
        }
      for (Index r = 1; r + 1 < h; ++r)
        for (Index c = 1; c + 1 < wd; ++c) {
          bool ok = true;
          for (int a = -1; a <= 1; ++a)
            for (int b = -1; b <= 1; ++b) ok = ok && co[(r + a) * wd + c + b];
          eroded[r * wd + c] = ok;
        }
      const auto l = photometric_loss(s.images.at(ctx.target), w.recon, eroded, {});
      if (l.empty) continue;
      EXPECT_LT(l.value, 0.02) << to_string(preset) << " " << to_string(ctx.kind);
    }
  }
}
