#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "occgeom/tensor.hpp"

namespace occgeom {

/// Geometry of an axis-aligned X x Y x Z voxel lattice. Voxel (i, j, k)
/// spans origin + [i, i+1) * voxel_size along x (likewise y, z).
struct VoxelGridSpec {
  std::array<Index, 3> dims{200, 200, 16};
  Eigen::Vector3d origin{-40.0, -40.0, -1.0};
  double voxel_size{0.4};

  void validate() const;
  Index num_voxels() const { return dims[0] * dims[1] * dims[2]; }
  Index flat_index(Index i, Index j, Index k) const { return (i * dims[1] + j) * dims[2] + k; }
  std::array<Index, 3> unflatten(Index flat) const;

  Eigen::Vector3d voxel_center(Index i, Index j, Index k) const;
  Eigen::Vector3d max_corner() const;

  /// Continuous lattice coordinate whose integer values are voxel centres.
  Eigen::Vector3d lattice_coord(const Eigen::Vector3d& p) const {
    return (p - origin) / voxel_size - Eigen::Vector3d::Constant(0.5);
  }

  /// Containing voxel under floor indexing; nullopt outside the grid.
  std::optional<std::array<Index, 3>> locate(const Eigen::Vector3d& p) const;

  /// Same origin, twice the voxel size, extents halved (rounded up).
  VoxelGridSpec downsampled() const;

  bool operator==(const VoxelGridSpec& o) const {
    return dims == o.dims && origin == o.origin && voxel_size == o.voxel_size;
  }
};

/// Per-voxel semantic labels in 0..K with K meaning free, plus the per-class
/// logits they were derived from (may be empty for ground-truth grids).
struct SemanticOccupancy {
  VoxelGridSpec spec;
  int num_classes{0};  // K, excluding free
  std::vector<std::uint8_t> labels;
  DenseTensor logits;  // (K+1) x X x Y x Z or empty

  static SemanticOccupancy AllFree(const VoxelGridSpec& spec, int num_classes);

  int free_label() const { return num_classes; }
  std::uint8_t& at(Index i, Index j, Index k) { return labels[static_cast<std::size_t>(spec.flat_index(i, j, k))]; }
  std::uint8_t at(Index i, Index j, Index k) const {
    return labels[static_cast<std::size_t>(spec.flat_index(i, j, k))];
  }
  bool occupied(Index flat) const { return labels[static_cast<std::size_t>(flat)] != free_label(); }
  Index occupied_count() const;
};

}  // namespace occgeom
