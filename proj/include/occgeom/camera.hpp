#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "occgeom/errors.hpp"

namespace occgeom {

/// Pinhole intrinsics. Pixel (u, v) = (column, row); integer coordinates are
/// pixel centres.
template <typename Scalar>
struct Intrinsics {
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar fx{1}, fy{1};
  Scalar cx{0}, cy{0};
  int width{1}, height{1};

  Matrix3 matrix() const {
    Matrix3 k;
    k << fx, Scalar(0), cx, Scalar(0), fy, cy, Scalar(0), Scalar(0), Scalar(1);
    return k;
  }

  bool contains(const Vector2& uv) const {
    return uv.x() >= Scalar(0) && uv.y() >= Scalar(0) && uv.x() <= Scalar(width - 1) &&
           uv.y() <= Scalar(height - 1);
  }

  /// Camera-frame direction with unit z through pixel uv.
  Vector3 backproject(const Vector2& uv) const { return Vector3((uv.x() - cx) / fx, (uv.y() - cy) / fy, Scalar(1)); }

  void validate() const {
    if (!(fx > Scalar(0) && fy > Scalar(0))) throw DomainError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw DomainError("intrinsics: image extents must be positive");
    if (!(cx >= Scalar(0) && cx < Scalar(width) && cy >= Scalar(0) && cy < Scalar(height)))
      throw DomainError("intrinsics: principal point outside the image");
  }

  /// Square-pixel camera with the given horizontal field of view and the
  /// principal point at the image centre.
  static Intrinsics FromFov(int width, int height, Scalar hfov_rad) {
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = Scalar(width) / Scalar(2) / std::tan(hfov_rad / Scalar(2));
    k.fy = k.fx;
    k.cx = Scalar(width - 1) / Scalar(2);
    k.cy = Scalar(height - 1) / Scalar(2);
    return k;
  }
};

/// Rigid transform x -> R x + t.
template <typename Scalar>
struct Pose {
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static Pose Identity() { return Pose{}; }

  static Pose FromYaw(Scalar yaw, const Vector3& t) {
    Pose p;
    p.rotation = Eigen::AngleAxis<Scalar>(yaw, Vector3::UnitZ()).toRotationMatrix();
    p.translation = t;
    return p;
  }

  Pose inverse() const {
    Pose p;
    p.rotation = rotation.transpose();
    p.translation = -(p.rotation * translation);
    return p;
  }

  Pose operator*(const Pose& rhs) const {
    Pose p;
    p.rotation = rotation * rhs.rotation;
    p.translation = rotation * rhs.translation + translation;
    return p;
  }

  Vector3 operator*(const Vector3& x) const { return rotation * x + translation; }

  Matrix4 matrix() const {
    Matrix4 m = Matrix4::Identity();
    m.template topLeftCorner<3, 3>() = rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  bool is_rigid(Scalar tol = Scalar(1e-9)) const {
    return (rotation.transpose() * rotation - Matrix3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - Scalar(1)) <= tol;
  }
};

/// Intrinsics plus the camera-to-world pose. Camera frame: x right, y down,
/// z forward.
template <typename Scalar>
struct PinholeCamera {
  Intrinsics<Scalar> intrinsics;
  Pose<Scalar> pose;
};

template <typename Scalar>
struct Projection {
  Eigen::Matrix<Scalar, 2, 1> uv;
  Scalar depth;
  bool visible;
};

template <typename Scalar>
struct Ray {
  Eigen::Matrix<Scalar, 3, 1> origin;
  Eigen::Matrix<Scalar, 3, 1> direction;  // unit length

  Eigen::Matrix<Scalar, 3, 1> at(Scalar t) const { return origin + t * direction; }
};

/// Camera-frame projection; depth is the z coordinate.
template <typename Scalar>
Projection<Scalar> project_camera_frame(const Intrinsics<Scalar>& k, const Eigen::Matrix<Scalar, 3, 1>& p) {
  Projection<Scalar> out;
  out.depth = p.z();
  if (!(p.z() > Scalar(1e-9))) {
    out.uv.setZero();
    out.visible = false;
    return out;
  }
  out.uv = Eigen::Matrix<Scalar, 2, 1>(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  out.visible = k.contains(out.uv);
  return out;
}

template <typename Scalar>
Projection<Scalar> project(const PinholeCamera<Scalar>& cam, const Eigen::Matrix<Scalar, 3, 1>& point_world) {
  return project_camera_frame(cam.intrinsics, Eigen::Matrix<Scalar, 3, 1>(cam.pose.inverse() * point_world));
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> unproject(const PinholeCamera<Scalar>& cam, const Eigen::Matrix<Scalar, 2, 1>& uv,
                                      Scalar depth) {
  if (!(depth > Scalar(0))) throw DomainError("unproject: depth must be positive");
  return cam.pose * Eigen::Matrix<Scalar, 3, 1>(depth * cam.intrinsics.backproject(uv));
}

template <typename Scalar>
Ray<Scalar> ray(const PinholeCamera<Scalar>& cam, const Eigen::Matrix<Scalar, 2, 1>& uv) {
  return {cam.pose.translation, (cam.pose.rotation * cam.intrinsics.backproject(uv)).normalized()};
}

using Intrinsicsd = Intrinsics<double>;
using Posed = Pose<double>;
using Camera = PinholeCamera<double>;
using Rayd = Ray<double>;
using Timestamp = std::int64_t;

enum class ContextKind { kTemporal, kSpatial, kSpatialTemporal };

const char* to_string(ContextKind kind);

/// Multi-camera rig. Camera poses are camera-to-ego (body frame); ego poses
/// map the body frame at each timestamp into the world.
class CameraRig {
 public:
  CameraRig(std::vector<Camera> cameras, std::map<Timestamp, Posed> ego_poses);

  std::size_t num_cameras() const { return cameras_.size(); }
  const std::vector<Camera>& cameras() const { return cameras_; }
  const Camera& camera(std::size_t i) const;
  const std::map<Timestamp, Posed>& ego_poses() const { return ego_poses_; }
  const Posed& ego_pose(Timestamp t) const;
  std::vector<Timestamp> timestamps() const;

  /// Camera i with its pose expressed camera-to-world at time t.
  Camera camera_at(std::size_t i, Timestamp t) const;

  /// Ego motion T^{t->t'} = ego(t')^-1 ego(t), mapping body-frame points at
  /// t into the body frame at t'.
  Posed ego_motion(Timestamp t, Timestamp t_prime) const;

  /// Transform taking camera-i coordinates at time t into camera-j
  /// coordinates at time t'. Temporal ignores j, spatial ignores the times.
  Posed relative_pose(ContextKind kind, std::size_t i, std::size_t j, Timestamp t, Timestamp t_prime) const;

  CameraRig transformed(const Posed& world_from_world) const;

 private:
  std::vector<Camera> cameras_;
  std::map<Timestamp, Posed> ego_poses_;
};

}  // namespace occgeom
