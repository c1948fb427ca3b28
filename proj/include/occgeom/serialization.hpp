#pragma once

#include <json.hpp>

#include "occgeom/camera.hpp"
#include "occgeom/grid.hpp"

namespace occgeom {

nlohmann::json to_json(const Posed& pose);
Posed pose_from_json(const nlohmann::json& j);

/// {"cameras": [{fx, fy, cx, cy, width, height, rotation[9], translation[3]}],
///  "ego_poses": [{timestamp, rotation[9], translation[3]}]}
/// Rotations are row-major; ego poses are listed in increasing time.
nlohmann::json to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);

nlohmann::json to_json(const VoxelGridSpec& spec);
VoxelGridSpec grid_spec_from_json(const nlohmann::json& j);

/// Rounds to 9 significant digits so that emitted reports are reproducible.
double round9(double v);

}  // namespace occgeom
