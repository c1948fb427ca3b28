#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "occgeom/camera.hpp"
#include "occgeom/grid.hpp"
#include "occgeom/renderer.hpp"

namespace occgeom {

enum class ScenePreset { kBoxes, kCorridor, kRandomBlobs };

ScenePreset preset_from_string(const std::string& name);
const char* to_string(ScenePreset preset);

/// Semantic classes used by every preset; label 4 is free.
inline constexpr int kSceneClasses = 4;
const std::vector<std::string>& scene_class_names();

using ViewKey = std::pair<std::size_t, Timestamp>;  // (camera, time)

struct SceneOptions {
  int num_cameras{2};
  double sigma_occ{50.0};
  int height{180};
  int width{320};
};

struct SceneBundle {
  std::uint64_t seed{0};
  ScenePreset preset{ScenePreset::kBoxes};
  SceneOptions options;
  SemanticOccupancy grid;
  DensityField density_gt;
  CameraRig rig;
  std::map<ViewKey, DenseTensor> images;  // H x W x 3 in [0, 1]
  std::map<ViewKey, DepthMap> gt_depths;
  std::vector<std::uint8_t> visible;      // X x Y x Z

  Timestamp previous_time() const { return rig.timestamps().front(); }
  Timestamp current_time() const { return rig.timestamps().back(); }
};

/// Deterministic synthetic world: labelled voxels, density sigma_occ on every
/// occupied voxel, a ring rig with a two-step ego trajectory, rendered
/// images and first-hit depths for every (camera, time).
SceneBundle build_scene(std::uint64_t seed, const VoxelGridSpec& spec, ScenePreset preset,
                        const SceneOptions& options = {});

DensityField density_from_labels(const SemanticOccupancy& grid, double sigma_occ);

struct VoxelHit {
  double t{0.0};       // distance along the ray to the entry face
  Index voxel{-1};     // flat index of the first occupied voxel
};

/// Exact Amanatides-Woo traversal; the first occupied voxel along the ray.
/// `visit` (if given) receives every traversed voxel up to and including the hit.
std::optional<VoxelHit> first_hit(const SemanticOccupancy& grid, const Rayd& r,
                                  const std::function<void(Index)>& visit = {});

/// First-hit depth (distance along the pixel ray) for every pixel.
DepthMap raymarch_depth_oracle(const SemanticOccupancy& grid, const Camera& cam, int height, int width);

DenseTensor synthesize_image(const SemanticOccupancy& grid, const Camera& cam, int height, int width);

/// Voxels crossed by any pixel ray of the given cameras up to the first hit.
std::vector<std::uint8_t> visibility_mask(const SemanticOccupancy& grid, const std::vector<Camera>& cams,
                                          int height, int width);

struct LidarSample {
  Index row{0};
  Index col{0};
  double depth{0.0};
};

/// n valid pixels drawn uniformly without replacement, sorted by pixel index.
/// n < 0 selects every valid pixel.
std::vector<LidarSample> sparse_lidar(const DepthMap& gt_depth, Index n, std::uint64_t seed);

void save_scene(const SceneBundle& scene, const std::filesystem::path& dir);
SceneBundle load_scene(const std::filesystem::path& dir);

std::string view_stem(std::size_t cam, Timestamp t);

}  // namespace occgeom
