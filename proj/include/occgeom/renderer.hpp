#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "occgeom/camera.hpp"
#include "occgeom/grid.hpp"
#include "occgeom/tensor.hpp"

namespace occgeom {

/// Non-negative per-voxel density (1/m) on a voxel lattice.
struct DensityField {
  DenseTensor sigma;  // X x Y x Z
  VoxelGridSpec spec;

  static DensityField Zeros(const VoxelGridSpec& spec);
  void validate() const;
};

struct RaySamples {
  std::vector<double> t;                       // S increasing distances
  std::vector<Eigen::Vector3d> positions;      // S world points
  std::vector<double> delta;                   // S interval lengths

  std::size_t size() const { return t.size(); }
};

/// Per-pixel depth along the pixel ray (metres). Invalid pixels hold 0.
struct DepthMap {
  DenseTensor depth;                  // H x W
  std::vector<std::uint8_t> valid;    // H x W, 1 = valid
  DenseTensor accumulated_opacity;    // H x W

  int height() const { return static_cast<int>(depth.dim(0)); }
  int width() const { return static_cast<int>(depth.dim(1)); }
  bool is_valid(Index row, Index col) const { return valid[static_cast<std::size_t>(row * depth.dim(1) + col)] != 0; }
  Index valid_count() const;

  static DepthMap Invalid(int height, int width);
};

struct RenderSettings {
  double t_near{1.0};
  double t_far{45.0};
  int samples{152};
  int height{180};
  int width{320};

  double spacing() const { return (t_far - t_near) / samples; }
  void validate() const;
};

struct RayRender {
  double depth{0.0};
  double opacity{0.0};
  std::vector<double> weights;
};

/// Raw per-pixel expected depth and opacity before the validity threshold.
struct ViewRender {
  DenseTensor expected_depth;  // H x W
  DenseTensor opacity;         // H x W
};

/// Midpoint samples t_i = t_near + (i - 1/2) (t_far - t_near) / S.
RaySamples sample_ray(const Rayd& r, double t_near, double t_far, int samples);

/// Trilinear density at world positions; zero outside the grid box.
std::vector<double> sample_density(const DensityField& field, std::span<const Eigen::Vector3d> positions);
double sample_density(const DensityField& field, const Eigen::Vector3d& position);

/// Discrete volume rendering of depth with prefix transmittance
/// T_i = exp(-sum_{j<i} sigma_j delta_j) and w_i = T_i (1 - exp(-sigma_i delta_i)).
RayRender render_depth(std::span<const double> sigma_at, const RaySamples& samples);

/// d(depth)/d(sigma_k) = delta_k (T_{k+1} t_k - sum_{i>k} w_i t_i).
std::vector<double> depth_grad_sigma(std::span<const double> sigma_at, const RaySamples& samples);

ViewRender render_rays(const DensityField& field, const Camera& cam, const RenderSettings& settings);

/// Validity is opacity > 0.5; invalid pixels get depth 0.
DepthMap to_depth_map(const ViewRender& view);

DepthMap render_view(const DensityField& field, const Camera& cam, const RenderSettings& settings);

/// Back-propagates dL/d(expected depth) (H x W) to dL/d(sigma) (X x Y x Z)
/// through the trilinear sampling and the rendering weights.
DenseTensor render_backward(const DensityField& field, const Camera& cam, const RenderSettings& settings,
                            const DenseTensor& grad_expected_depth);

/// Density head: 1x1x1 convolution of a C x X x Y x Z feature followed by
/// softplus, guaranteeing sigma >= 0.
DensityField density_head(const DenseTensor& features, const DenseTensor& weights, const VoxelGridSpec& spec);

double softplus(double x);

}  // namespace occgeom
