#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "occgeom/cast.hpp"
#include "occgeom/renderer.hpp"
#include "occgeom/selftrain.hpp"
#include "occgeom/synthscene.hpp"

namespace occgeom::cli {

/// Fully defaulted experiment configuration. JSON layout:
///   scene:    seed, preset, dims[3], voxel_size, num_cameras, sigma_occ
///   render:   S, t_near, t_far, resolution[2] (rows, columns)
///   cast:     alpha, ssim_window, lambda_t, lambda_sp, lambda_spt
///   optimize: steps, step_size, logit_step_size, init, perturbation,
///             depth_bins, lidar_points
///   output_dir
struct ExperimentConfig {
  std::uint64_t seed{0};
  ScenePreset preset{ScenePreset::kBoxes};
  std::array<Index, 3> dims{32, 32, 8};
  double voxel_size{0.4};
  int num_cameras{2};
  double sigma_occ{50.0};
  RenderSettings render;
  PhotometricConfig cast;
  SelftrainOptions optimize;
  std::filesystem::path output_dir{"out"};

  /// Grid centred on the ego origin in x and y, floor at z = -1 m.
  VoxelGridSpec grid_spec() const;
  SceneOptions scene_options() const;
  SelftrainOptions selftrain_options() const;
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

nlohmann::ordered_json default_config_json();

/// Defaults, then the config file (if any), then `key.path=value` overrides
/// (values parsed as JSON, falling back to a string). Unknown keys and
/// mistyped values raise ConfigError.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides);

ExperimentConfig config_from_json(const nlohmann::ordered_json& j);

/// Each command writes only into cfg.output_dir and returns the exit code.
int cmd_gen(const ExperimentConfig& cfg, std::ostream& out);
int cmd_render(const ExperimentConfig& cfg, const std::filesystem::path& scene_dir, std::ostream& out);
int cmd_selftrain(const ExperimentConfig& cfg, const std::filesystem::path& scene_dir, std::ostream& out);
int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& pred_path,
             const std::filesystem::path& scene_dir, bool visible_only,
             const std::optional<std::array<Index, 3>>& pred_dims, std::ostream& out);

/// Nearest-rank percentile of a non-empty sample (q in (0, 1]).
double percentile(std::vector<double> values, double q);

enum ExitCode : int {
  kOk = 0,
  kAssertionFailed = 1,
  kUsageError = 2,
  kIoFailure = 3,
  kNumericFailure = 4,
  kInternalError = 5,
};

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace occgeom::cli
