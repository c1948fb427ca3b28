#include <gtest/gtest.h>

#include <cmath>

#include "occgeom/camera.hpp"
#include "occgeom/random.hpp"

using namespace occgeom;

namespace {

Intrinsicsd example_intrinsics() {
  Intrinsicsd k;
  k.fx = k.fy = 100;
  k.cx = k.cy = 50;
  k.width = k.height = 101;
  return k;
}

Posed random_pose(Rng& rng) {
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  Posed p;
  p.rotation = Eigen::AngleAxisd(rng.uniform(-3, 3), axis.normalized()).toRotationMatrix();
  p.translation = Eigen::Vector3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  return p;
}

CameraRig two_camera_rig() {
  Camera a{example_intrinsics(), Posed::FromYaw(0.3, {1.0, 0.2, 1.5})};
  Camera b{example_intrinsics(), Posed::FromYaw(-1.1, {0.5, -0.4, 1.4})};
  a.pose.rotation = a.pose.rotation * Eigen::AngleAxisd(0.2, Eigen::Vector3d::UnitX()).toRotationMatrix();
  std::map<Timestamp, Posed> ego{{0, Posed::FromYaw(0.05, {0.0, 0.0, 0.0})}, {1, Posed::FromYaw(0.15, {1.2, 0.3, 0.0})}};
  return CameraRig({a, b}, ego);
}

double max_abs(const Eigen::Matrix4d& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Project, OpticalAxis) {
  const auto k = example_intrinsics();
  const auto p = project_camera_frame(k, Eigen::Vector3d(0, 0, 7));
  EXPECT_TRUE(p.visible);
  EXPECT_DOUBLE_EQ(p.uv.x(), k.cx);
  EXPECT_DOUBLE_EQ(p.uv.y(), k.cy);
  EXPECT_DOUBLE_EQ(p.depth, 7);
}

TEST(Project, BehindCamera) {
  EXPECT_FALSE(project_camera_frame(example_intrinsics(), Eigen::Vector3d(0, 0, -1)).visible);
}

TEST(Project, HandExample) {
  const auto p = project_camera_frame(example_intrinsics(), Eigen::Vector3d(1, 0, 2));
  EXPECT_DOUBLE_EQ(p.uv.x(), 100);
  EXPECT_DOUBLE_EQ(p.uv.y(), 50);
  EXPECT_DOUBLE_EQ(p.depth, 2);
}

TEST(Unproject, OpticalAxis) {
  const Camera cam{example_intrinsics(), Posed::Identity()};
  const Eigen::Vector3d p = unproject(cam, Eigen::Vector2d(50, 50), 5.0);
  EXPECT_NEAR((p - Eigen::Vector3d(0, 0, 5)).norm(), 0.0, 1e-15);
}

TEST(Unproject, HandExample) {
  const Camera cam{example_intrinsics(), Posed::Identity()};
  const Eigen::Vector3d p = unproject(cam, Eigen::Vector2d(100, 50), 2.0);
  EXPECT_NEAR((p - Eigen::Vector3d(1, 0, 2)).norm(), 0.0, 1e-15);
}

TEST(Unproject, RejectsNonPositiveDepth) {
  const Camera cam{example_intrinsics(), Posed::Identity()};
  EXPECT_THROW(unproject(cam, Eigen::Vector2d(1, 1), 0.0), DomainError);
}

TEST(Unproject, RoundTripProperty) {
  Rng rng(11);
  for (int n = 0; n < 500; ++n) {
    const Camera cam{example_intrinsics(), random_pose(rng)};
    const Eigen::Vector2d uv(rng.uniform(0, 100), rng.uniform(0, 100));
    const double d = rng.uniform(0.1, 80);
    const auto p = project(cam, unproject(cam, uv, d));
    ASSERT_TRUE(p.visible);
    EXPECT_NEAR((p.uv - uv).norm(), 0.0, 1e-9);
    EXPECT_NEAR(p.depth, d, 1e-9);
  }
}

TEST(Ray, PrincipalPointLooksForward) {
  Rng rng(3);
  const Camera cam{example_intrinsics(), random_pose(rng)};
  const auto r = ray(cam, Eigen::Vector2d(50, 50));
  EXPECT_NEAR((r.direction - cam.pose.rotation.col(2)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((r.origin - cam.pose.translation).norm(), 0.0, 0.0);
}

TEST(Ray, UnitDirectionsAndCollinearity) {
  Rng rng(5);
  const Camera cam{example_intrinsics(), random_pose(rng)};
  for (int n = 0; n < 100; ++n) {
    const Eigen::Vector2d uv(rng.uniform(0, 100), rng.uniform(0, 100));
    const auto r = ray(cam, uv);
    EXPECT_NEAR(r.direction.norm(), 1.0, 1e-12);
    const Eigen::Vector3d p = unproject(cam, uv, 3.0);
    const double dir_z = (cam.pose.rotation.transpose() * r.direction).z();
    EXPECT_NEAR((p - r.at(3.0 / dir_z)).norm(), 0.0, 1e-9);
  }
}

TEST(Pose, InverseAndComposition) {
  Rng rng(8);
  for (int n = 0; n < 50; ++n) {
    const Posed a = random_pose(rng), b = random_pose(rng);
    EXPECT_LE(max_abs((a * a.inverse()).matrix() - Eigen::Matrix4d::Identity()), 1e-12);
    EXPECT_LE(max_abs((a * b).matrix() - a.matrix() * b.matrix()), 1e-12);
    EXPECT_TRUE(a.is_rigid());
  }
}

TEST(Intrinsics, Validate) {
  auto k = example_intrinsics();
  EXPECT_NO_THROW(k.validate());
  k.fx = 0;
  EXPECT_THROW(k.validate(), DomainError);
  k = example_intrinsics();
  k.cx = 200;
  EXPECT_THROW(k.validate(), DomainError);
}

TEST(Rig, CameraAtComposesEgoAndExtrinsics) {
  const auto rig = two_camera_rig();
  const Camera c = rig.camera_at(1, 1);
  EXPECT_LE(max_abs(c.pose.matrix() - rig.ego_pose(1).matrix() * rig.camera(1).pose.matrix()), 1e-12);
}

TEST(Rig, EgoMotionMapsBodyPoints) {
  const auto rig = two_camera_rig();
  const Eigen::Vector3d x(1, 2, 3);
  const Eigen::Vector3d world = rig.ego_pose(0) * x;
  const Eigen::Vector3d in_later = rig.ego_motion(0, 1) * x;
  EXPECT_NEAR((rig.ego_pose(1) * in_later - world).norm(), 0.0, 1e-12);
}

TEST(Rig, TemporalSameTimeIsIdentity) {
  const auto rig = two_camera_rig();
  EXPECT_LE(max_abs(rig.relative_pose(ContextKind::kTemporal, 0, 0, 1, 1).matrix() - Eigen::Matrix4d::Identity()),
            1e-12);
}

TEST(Rig, SpatialSameCameraIsIdentity) {
  const auto rig = two_camera_rig();
  EXPECT_LE(max_abs(rig.relative_pose(ContextKind::kSpatial, 1, 1, 0, 1).matrix() - Eigen::Matrix4d::Identity()),
            1e-12);
}

TEST(Rig, RelativePoseMapsWorldConsistently) {
  // A world point seen by camera i at t must land on the same world point
  // when read back from camera j at t'.
  const auto rig = two_camera_rig();
  const Eigen::Vector3d x_cam(0.3, -0.2, 4.0);
  for (auto kind : {ContextKind::kTemporal, ContextKind::kSpatial, ContextKind::kSpatialTemporal}) {
    const std::size_t j = kind == ContextKind::kTemporal ? 0 : 1;
    const Timestamp tp = kind == ContextKind::kSpatial ? 0 : 1;
    const Posed m = rig.relative_pose(kind, 0, j, 0, tp);
    const Eigen::Vector3d world_src = rig.camera_at(0, 0).pose * x_cam;
    const Eigen::Vector3d world_dst = rig.camera_at(j, tp).pose * (m * x_cam);
    EXPECT_NEAR((world_dst - world_src).norm(), 0.0, 1e-12) << to_string(kind);
  }
}

TEST(Rig, SpatialTemporalIsComposition) {
  const auto rig = two_camera_rig();
  const Posed st = rig.relative_pose(ContextKind::kSpatialTemporal, 0, 1, 0, 1);
  const Posed sp = rig.relative_pose(ContextKind::kSpatial, 0, 1, 0, 1);
  const Posed t = rig.relative_pose(ContextKind::kTemporal, 0, 1, 0, 1);
  EXPECT_LE(max_abs(st.matrix() - sp.matrix() * t.matrix()), 1e-12);
  // Hand composition from the extrinsics and ego poses.
  const Eigen::Matrix4d e0 = rig.camera(0).pose.matrix(), e1 = rig.camera(1).pose.matrix();
  const Eigen::Matrix4d tm = rig.ego_pose(1).matrix().inverse() * rig.ego_pose(0).matrix();
  EXPECT_LE(max_abs(st.matrix() - e1.inverse() * e0 * e0.inverse() * tm * e0), 1e-12);
}

TEST(Rig, LookupErrors) {
  const auto rig = two_camera_rig();
  EXPECT_THROW(rig.camera(2), LookupError);
  EXPECT_THROW(rig.ego_pose(5), LookupError);
  EXPECT_THROW(rig.relative_pose(ContextKind::kSpatial, 0, 3, 0, 0), LookupError);
}

TEST(Rig, TimestampsSorted) {
  const auto rig = two_camera_rig();
  EXPECT_EQ(rig.timestamps(), (std::vector<Timestamp>{0, 1}));
}
