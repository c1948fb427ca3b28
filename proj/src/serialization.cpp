#include "occgeom/serialization.hpp"

#include <cstdio>
#include <string>

namespace occgeom {

using nlohmann::json;

json to_json(const Posed& pose) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
  return json{{"rotation", rot},
              {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Posed pose_from_json(const json& j) {
  const auto& rot = j.at("rotation");
  const auto& tr = j.at("translation");
  if (rot.size() != 9 || tr.size() != 3) throw ConfigError("pose needs 9 rotation and 3 translation values");
  Posed p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot.at(static_cast<std::size_t>(r * 3 + c)).get<double>();
  for (int a = 0; a < 3; ++a) p.translation[a] = tr.at(static_cast<std::size_t>(a)).get<double>();
  return p;
}

json to_json(const CameraRig& rig) {
  json cams = json::array();
  for (const auto& c : rig.cameras()) {
    json jc = to_json(c.pose);
    jc["fx"] = c.intrinsics.fx;
    jc["fy"] = c.intrinsics.fy;
    jc["cx"] = c.intrinsics.cx;
    jc["cy"] = c.intrinsics.cy;
    jc["width"] = c.intrinsics.width;
    jc["height"] = c.intrinsics.height;
    cams.push_back(std::move(jc));
  }
  json ego = json::array();
  for (const auto& [t, p] : rig.ego_poses()) {
    json jp = to_json(p);
    jp["timestamp"] = t;
    ego.push_back(std::move(jp));
  }
  return json{{"cameras", cams}, {"ego_poses", ego}};
}

CameraRig rig_from_json(const json& j) {
  try {
    std::vector<Camera> cams;
    for (const auto& jc : j.at("cameras")) {
      Camera c;
      c.intrinsics.fx = jc.at("fx").get<double>();
      c.intrinsics.fy = jc.at("fy").get<double>();
      c.intrinsics.cx = jc.at("cx").get<double>();
      c.intrinsics.cy = jc.at("cy").get<double>();
      c.intrinsics.width = jc.at("width").get<int>();
      c.intrinsics.height = jc.at("height").get<int>();
      c.pose = pose_from_json(jc);
      cams.push_back(c);
    }
    std::map<Timestamp, Posed> ego;
    Timestamp last = 0;
    bool first = true;
    for (const auto& jp : j.at("ego_poses")) {
      const auto t = jp.at("timestamp").get<Timestamp>();
      if (!first && t <= last) throw ConfigError("rig timestamps must be strictly increasing");
      ego.emplace(t, pose_from_json(jp));
      last = t;
      first = false;
    }
    return CameraRig(std::move(cams), std::move(ego));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed rig json: ") + e.what());
  }
}

json to_json(const VoxelGridSpec& spec) {
  return json{{"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
              {"origin", {spec.origin.x(), spec.origin.y(), spec.origin.z()}},
              {"voxel_size", spec.voxel_size}};
}

VoxelGridSpec grid_spec_from_json(const json& j) {
  VoxelGridSpec s;
  try {
    for (std::size_t a = 0; a < 3; ++a) {
      s.dims[a] = j.at("dims").at(a).get<Index>();
      s.origin[static_cast<Index>(a)] = j.at("origin").at(a).get<double>();
    }
    s.voxel_size = j.at("voxel_size").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed grid spec: ") + e.what());
  }
  s.validate();
  return s;
}

double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::stod(buf);
}

}  // namespace occgeom
