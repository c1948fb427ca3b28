#include "occgeom/camera.hpp"

#include <string>

namespace occgeom {

const char* to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::kTemporal:
      return "temporal";
    case ContextKind::kSpatial:
      return "spatial";
    case ContextKind::kSpatialTemporal:
      return "spatial_temporal";
  }
  return "unknown";
}

CameraRig::CameraRig(std::vector<Camera> cameras, std::map<Timestamp, Posed> ego_poses)
    : cameras_(std::move(cameras)), ego_poses_(std::move(ego_poses)) {
  if (cameras_.empty()) throw DomainError("camera rig needs at least one camera");
  for (const auto& c : cameras_) {
    c.intrinsics.validate();
    if (!c.pose.is_rigid()) throw DomainError("camera extrinsic rotation is not orthonormal");
  }
  for (const auto& [t, p] : ego_poses_)
    if (!p.is_rigid()) throw DomainError("ego pose at t=" + std::to_string(t) + " is not rigid");
}

const Camera& CameraRig::camera(std::size_t i) const {
  if (i >= cameras_.size()) throw LookupError("unknown camera index " + std::to_string(i));
  return cameras_[i];
}

const Posed& CameraRig::ego_pose(Timestamp t) const {
  auto it = ego_poses_.find(t);
  if (it == ego_poses_.end()) throw LookupError("unknown timestamp " + std::to_string(t));
  return it->second;
}

std::vector<Timestamp> CameraRig::timestamps() const {
  std::vector<Timestamp> ts;
  for (const auto& [t, p] : ego_poses_) ts.push_back(t);
  return ts;
}

Camera CameraRig::camera_at(std::size_t i, Timestamp t) const {
  Camera c = camera(i);
  c.pose = ego_pose(t) * c.pose;
  return c;
}

Posed CameraRig::ego_motion(Timestamp t, Timestamp t_prime) const {
  return ego_pose(t_prime).inverse() * ego_pose(t);
}

Posed CameraRig::relative_pose(ContextKind kind, std::size_t i, std::size_t j, Timestamp t,
                               Timestamp t_prime) const {
  const Posed& ei = camera(i).pose;
  switch (kind) {
    case ContextKind::kTemporal:
      return ei.inverse() * ego_motion(t, t_prime) * ei;
    case ContextKind::kSpatial:
      return camera(j).pose.inverse() * ei;
    case ContextKind::kSpatialTemporal:
      return relative_pose(ContextKind::kSpatial, i, j, t, t_prime) *
             relative_pose(ContextKind::kTemporal, i, i, t, t_prime);
  }
  throw DomainError("unknown context kind");
}

CameraRig CameraRig::transformed(const Posed& world_from_world) const {
  std::map<Timestamp, Posed> moved;
  for (const auto& [t, p] : ego_poses_) moved.emplace(t, world_from_world * p);
  return CameraRig(cameras_, std::move(moved));
}

}  // namespace occgeom
