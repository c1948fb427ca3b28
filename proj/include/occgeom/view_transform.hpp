#pragma once

#include <span>
#include <vector>

#include "occgeom/camera.hpp"
#include "occgeom/grid.hpp"
#include "occgeom/tensor.hpp"

namespace occgeom {

/// Per-pixel categorical distribution over depth bins. Bin centres measure
/// distance along the pixel ray.
struct DepthDistribution {
  std::vector<double> bins;  // C_d strictly increasing centres (m)
  DenseTensor probs;         // H x W x C_d

  /// C_d centres spaced uniformly over [near, far].
  static std::vector<double> UniformBins(int count, double near = 1.0, double far = 45.0);
  static DepthDistribution FromLogits(std::vector<double> bins, const DenseTensor& logits);

  void validate() const;
  /// Index of the bin centre nearest to depth (lower index on ties).
  int nearest_bin(double depth) const;
};

enum class FeatureProvenance { kExplicit, kImplicit, kFused, kCompressed };

struct OccupancyFeature {
  DenseTensor data;  // C x X x Y x Z
  VoxelGridSpec spec;
  FeatureProvenance provenance{FeatureProvenance::kExplicit};

  Index channels() const { return data.dim(0); }
};

struct PseudoPoints {
  DenseTensor positions;  // N x 3, N = H * W * C_d
  DenseTensor features;   // N x C_f
};

/// Outer product of depth probabilities and image features. Point (p, b) is
/// the unit ray direction of pixel p scaled to bin b, in the camera frame;
/// its feature is probs[p, b] * features[p]. Order: row, column, bin.
PseudoPoints lift(const DenseTensor& features, const DepthDistribution& dist, const Intrinsicsd& intrinsics);

/// Applies a rigid transform (camera-to-world) to every pseudo point.
PseudoPoints transform_points(const PseudoPoints& points, const Posed& pose);

/// Mean of the features of all points falling in each voxel (floor indexing,
/// outside points dropped, empty voxels zero). Accumulation follows point
/// order, so results are reproducible bit for bit.
OccupancyFeature voxel_pool(const DenseTensor& points_world, const DenseTensor& features, const VoxelGridSpec& spec);

/// Shared deformable sampling pattern: P pixel offsets with attention logits.
struct DeformableSampling {
  DenseTensor offsets;  // P x 2
  DenseTensor weights;  // P
};

/// Projects each query voxel centre into every camera, samples features at
/// the projection plus each offset, blends them with softmax(weights) and
/// averages over the cameras that see the voxel. Unseen voxels are zero.
OccupancyFeature idm_sample(const VoxelGridSpec& query_spec, const DenseTensor& queries,
                            std::span<const DenseTensor> image_features, std::span<const Camera> cameras,
                            const DeformableSampling& sampling);

/// Trilinear resampling of a feature volume onto `target` (same world box);
/// source samples are clamped at the border.
OccupancyFeature trilinear_upsample(const OccupancyFeature& feature, const VoxelGridSpec& target);

/// Channel concatenation (explicit first) followed by a stride-2 convolution.
OccupancyFeature fuse_and_compress(const OccupancyFeature& explicit_feature, const OccupancyFeature& implicit_feature,
                                   const DenseTensor& weights);

struct CameraView {
  Camera camera;          // camera-to-world pose
  DenseTensor features;   // H x W x C_f
  DepthDistribution depth;
};

struct ViewTransformParams {
  VoxelGridSpec grid;
  VoxelGridSpec query_grid;  // typically grid.downsampled() extents at half resolution
  DenseTensor queries;       // C_q x Xq x Yq x Zq
  DeformableSampling sampling;
  DenseTensor compress_weights;  // C' x 2C_f x k x k x k
};

struct ViewTransformResult {
  OccupancyFeature explicit_feature;
  OccupancyFeature implicit_feature;   // upsampled to the full grid
  OccupancyFeature fused;              // 2 C_f channels
  OccupancyFeature compressed;
};

/// Full 2D-to-3D transform: lift-splat of every camera, deformable sampling
/// on the query grid, upsampling, concatenation and compression.
ViewTransformResult transform_views(std::span<const CameraView> views, const ViewTransformParams& params);

}  // namespace occgeom
