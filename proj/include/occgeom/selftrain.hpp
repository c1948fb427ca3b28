#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occgeom/cast.hpp"
#include "occgeom/renderer.hpp"
#include "occgeom/synthscene.hpp"

namespace occgeom {

enum class InitMode { kZeros, kRandom, kPerturbedGt };

InitMode init_mode_from_string(const std::string& name);
const char* to_string(InitMode mode);

struct SelftrainOptions {
  int steps{200};
  double step_size{100.0};       // density update per unit gradient
  double logit_step_size{1e3};   // explicit depth logit update per unit gradient
  InitMode init{InitMode::kPerturbedGt};
  double perturbation{0.1};      // noise amplitude as a fraction of sigma_occ
  int depth_bins{8};
  Index lidar_points{500};       // sparse depth samples per camera; negative selects all
  std::uint64_t seed{0};
  RenderSettings render;
  PhotometricConfig cast;

  void validate() const;
};

struct TraceRow {
  int step{0};
  PretrainLoss loss;
  double depth_mae{0.0};  // rendered depth vs ground truth on ground-truth valid pixels
};

struct SelftrainResult {
  std::vector<TraceRow> trace;
  DensityField field;
  std::vector<DenseTensor> depth_logits;  // per camera, H x W x C_d
  std::vector<DepthMap> depths;           // final renders, one per camera
};

/// Initial density. Perturbed ground truth adds perturbation * sigma_occ *
/// U(-1, 1) to every voxel and clamps at zero; random draws U(0, 0.1 sigma_occ).
DensityField initial_density(const SceneBundle& scene, InitMode mode, double perturbation, std::uint64_t seed);

/// Explicit depth logits per camera: a noisy one-hot of the ground-truth bin
/// for perturbed ground truth, zeros, or standard normal draws.
std::vector<DenseTensor> initial_depth_logits(const SceneBundle& scene, InitMode mode, int bins,
                                              std::uint64_t seed);

/// Mean absolute depth error over pixels where the ground truth is valid;
/// invalid rendered pixels count with depth 0.
double depth_mae(std::span<const DepthMap> rendered, std::span<const DepthMap> ground_truth);

/// Plain gradient descent on density (projected to sigma >= 0) and on the
/// explicit depth logits, minimising L_ed + L_rd + L_CAST over the cameras at
/// the latest timestamp. Trace row k holds the losses before update k; the
/// final row holds the losses after the last update. Throws NumericError if
/// the loss stops being finite.
SelftrainResult selftrain(const SceneBundle& scene, const SelftrainOptions& options);

/// Header plus one row per trace entry, 9 significant digits.
std::string trace_csv(const std::vector<TraceRow>& trace);

/// True when the total loss never increases over the last `window` steps.
bool trailing_monotone(const std::vector<TraceRow>& trace, int window = 10);

}  // namespace occgeom
