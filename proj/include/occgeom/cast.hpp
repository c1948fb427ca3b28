#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "occgeom/camera.hpp"
#include "occgeom/renderer.hpp"
#include "occgeom/synthscene.hpp"
#include "occgeom/tensor.hpp"
#include "occgeom/view_transform.hpp"

namespace occgeom {

struct PhotometricConfig {
  double alpha{0.85};
  int ssim_window{3};
  double lambda_t{1.0};
  double lambda_sp{0.1};
  double lambda_spt{0.03};

  void validate() const;
};

/// Reconstruct the target view (camera, time) from the source view.
/// `pose` maps source-camera coordinates into target-camera coordinates.
struct WarpContext {
  ContextKind kind{ContextKind::kTemporal};
  ViewKey source;
  ViewKey target;
  Posed pose;
};

struct WarpResult {
  DenseTensor recon;                // H x W x 3, zero where invalid
  std::vector<std::uint8_t> valid;  // H x W
};

/// Inverse warping: every valid target pixel is lifted with its depth (range
/// along the pixel ray), moved into the source camera and bilinearly sampled.
WarpResult warp_image(const DenseTensor& src_img, const DepthMap& target_depth, const WarpContext& ctx,
                      const Intrinsicsd& k_src, const Intrinsicsd& k_tgt);

/// Gradient of sum(grad_recon * recon) with respect to the target depth.
DenseTensor warp_image_backward(const DenseTensor& src_img, const DepthMap& target_depth, const WarpContext& ctx,
                                const Intrinsicsd& k_src, const Intrinsicsd& k_tgt, const DenseTensor& grad_recon);

/// Per-pixel, per-channel SSIM with a box window and reflection padding.
DenseTensor ssim(const DenseTensor& a, const DenseTensor& b, int window = 3);

struct PhotometricLoss {
  double value{0.0};
  Index valid_pixels{0};
  bool empty{false};  // no valid pixel; value is 0
};

/// Mean over valid pixels of alpha/2 (1 - SSIM) + (1 - alpha) |ref - recon|,
/// both averaged over channels.
PhotometricLoss photometric_loss(const DenseTensor& ref, const DenseTensor& recon,
                                 std::span<const std::uint8_t> valid, const PhotometricConfig& cfg);

/// Gradient of photometric_loss with respect to recon (valid mask held fixed).
DenseTensor photometric_loss_backward(const DenseTensor& ref, const DenseTensor& recon,
                                      std::span<const std::uint8_t> valid, const PhotometricConfig& cfg);

/// Target views are every camera at the latest timestamp. Temporal sources
/// are the same camera one step earlier, spatial sources the ring neighbours
/// at the same time, spatial-temporal sources the ring neighbours one step
/// earlier.
std::vector<WarpContext> cast_contexts(const CameraRig& rig);

struct CastBreakdown {
  double l_t{0.0};
  double l_sp{0.0};
  double l_spt{0.0};
  double total{0.0};
  int active_pairs{0};
  bool t_active{false};
  bool sp_active{false};
  bool spt_active{false};

  nlohmann::ordered_json to_json() const;
};

/// Weighted sum of the mean photometric loss per context kind. `depths`
/// holds one rendered depth map per camera at the latest timestamp. When
/// `grad_depth` is given it receives d(total)/d(depth) per camera.
CastBreakdown cast_loss(const CameraRig& rig, const std::map<ViewKey, DenseTensor>& images,
                        std::span<const DepthMap> depths, const PhotometricConfig& cfg,
                        std::vector<DenseTensor>* grad_depth = nullptr);

struct PretrainView {
  const DepthDistribution* explicit_depth{nullptr};  // softmax of per-pixel logits; may be null
  const ViewRender* rendered{nullptr};
  std::span<const LidarSample> lidar;
};

struct PretrainLoss {
  double l_ed{0.0};
  double l_rd{0.0};
  CastBreakdown cast;
  double total{0.0};
};

struct PretrainGrad {
  std::vector<DenseTensor> logits;          // per view, d(total)/d(depth logits)
  std::vector<DenseTensor> expected_depth;  // per view, d(total)/d(expected depth)
};

/// L_ed + L_rd + L_CAST for one set of target views (one per camera, in
/// camera order). L_ed is the cross entropy of the explicit depth
/// distribution against the nearest bin of each sparse depth; L_rd the mean
/// absolute difference between rendered expected depth and sparse depth.
/// Both average over all sparse samples and vanish when there are none.
PretrainLoss pretrain_loss(const CameraRig& rig, const std::map<ViewKey, DenseTensor>& images,
                           std::span<const PretrainView> views, const PhotometricConfig& cfg,
                           PretrainGrad* grad = nullptr);

}  // namespace occgeom
