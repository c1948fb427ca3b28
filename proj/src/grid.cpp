#include "occgeom/grid.hpp"

#include <cmath>

namespace occgeom {

void VoxelGridSpec::validate() const {
  for (Index d : dims)
    if (d <= 0) throw DomainError("voxel grid extents must be positive");
  if (!(voxel_size > 0.0)) throw DomainError("voxel size must be positive");
  if (!origin.allFinite()) throw DomainError("voxel grid origin must be finite");
}

std::array<Index, 3> VoxelGridSpec::unflatten(Index flat) const {
  const Index k = flat % dims[2];
  const Index j = (flat / dims[2]) % dims[1];
  const Index i = flat / (dims[1] * dims[2]);
  return {i, j, k};
}

Eigen::Vector3d VoxelGridSpec::voxel_center(Index i, Index j, Index k) const {
  return origin + voxel_size * Eigen::Vector3d(static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5,
                                               static_cast<double>(k) + 0.5);
}

Eigen::Vector3d VoxelGridSpec::max_corner() const {
  return origin + voxel_size * Eigen::Vector3d(static_cast<double>(dims[0]), static_cast<double>(dims[1]),
                                               static_cast<double>(dims[2]));
}

std::optional<std::array<Index, 3>> VoxelGridSpec::locate(const Eigen::Vector3d& p) const {
  std::array<Index, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double c = std::floor((p[a] - origin[a]) / voxel_size);
    if (!(c >= 0.0 && c < static_cast<double>(dims[a]))) return std::nullopt;
    idx[a] = static_cast<Index>(c);
  }
  return idx;
}

VoxelGridSpec VoxelGridSpec::downsampled() const {
  VoxelGridSpec s = *this;
  for (auto& d : s.dims) d = (d + 1) / 2;
  s.voxel_size *= 2.0;
  return s;
}

SemanticOccupancy SemanticOccupancy::AllFree(const VoxelGridSpec& spec, int num_classes) {
  SemanticOccupancy occ;
  occ.spec = spec;
  occ.num_classes = num_classes;
  occ.labels.assign(static_cast<std::size_t>(spec.num_voxels()), static_cast<std::uint8_t>(num_classes));
  return occ;
}

Index SemanticOccupancy::occupied_count() const {
  Index n = 0;
  for (auto l : labels) n += (l != free_label());
  return n;
}

}  // namespace occgeom
