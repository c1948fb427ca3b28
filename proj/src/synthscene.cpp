#include "occgeom/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "occgeom/image_io.hpp"
#include "occgeom/parallel.hpp"
#include "occgeom/random.hpp"
#include "occgeom/serialization.hpp"

namespace occgeom {

namespace fs = std::filesystem;

namespace {

constexpr double kCameraHeight = 0.6;
constexpr double kCameraMountRadius = 0.1;
constexpr double kClearance = 2.0;

enum Label : std::uint8_t { kGround = 0, kWall = 1, kVehicle = 2, kVegetation = 3 };

double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t salt) {
  const std::uint64_t h = mix64(mix64(mix64(mix64(salt) ^ a) ^ b) ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Trilinear value noise on an integer lattice.
double value_noise(const Eigen::Vector3d& p) {
  const Eigen::Vector3d f = p.array().floor();
  const Eigen::Vector3d a = p - f;
  double acc = 0.0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const auto x = static_cast<std::uint64_t>(static_cast<std::int64_t>(f.x()) + dx);
        const auto y = static_cast<std::uint64_t>(static_cast<std::int64_t>(f.y()) + dy);
        const auto z = static_cast<std::uint64_t>(static_cast<std::int64_t>(f.z()) + dz);
        const double w = (dx ? a.x() : 1 - a.x()) * (dy ? a.y() : 1 - a.y()) * (dz ? a.z() : 1 - a.z());
        acc += w * hash_unit(x, y, z, 0x7e57u);
      }
  return acc;
}

Eigen::Vector3d class_color(int label) {
  switch (label) {
    case kGround:
      return {0.45, 0.42, 0.38};
    case kWall:
      return {0.80, 0.74, 0.62};
    case kVehicle:
      return {0.22, 0.38, 0.78};
    default:
      return {0.28, 0.66, 0.30};
  }
}

std::vector<Camera> ring_cameras(int n, int height, int width) {
  if (n < 1) throw ConfigError("scene needs at least one camera");
  const double spacing = std::min(std::numbers::pi / 3.0, 2.0 * std::numbers::pi / n);
  std::vector<Camera> cams;
  for (int k = 0; k < n; ++k) {
    const double yaw = k * spacing;
    const Eigen::Vector3d fwd(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
    Camera c;
    c.intrinsics = Intrinsicsd::FromFov(width, height, std::numbers::pi / 2.0);
    c.pose.rotation.col(0) = right;
    c.pose.rotation.col(1) = Eigen::Vector3d(0, 0, -1);
    c.pose.rotation.col(2) = fwd;
    c.pose.translation = kCameraMountRadius * fwd + Eigen::Vector3d(0, 0, kCameraHeight);
    cams.push_back(c);
  }
  return cams;
}

double distance_to_segment_xy(const Eigen::Vector3d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d q = p.head<2>();
  const Eigen::Vector2d ab = b - a;
  const double s = std::clamp((q - a).dot(ab) / std::max(ab.squaredNorm(), 1e-12), 0.0, 1.0);
  return (q - (a + s * ab)).norm();
}

void fill_ground(SemanticOccupancy& g) {
  for (Index i = 0; i < g.spec.dims[0]; ++i)
    for (Index j = 0; j < g.spec.dims[1]; ++j) g.at(i, j, 0) = kGround;
}

void build_corridor(SemanticOccupancy& g) {
  const auto& s = g.spec;
  for (Index i = 0; i < s.dims[0]; ++i)
    for (Index j = 0; j < s.dims[1]; ++j)
      for (Index k = 0; k < s.dims[2]; ++k) {
        const Eigen::Vector3d c = s.voxel_center(i, j, k);
        const double ay = std::abs(c.y());
        if (ay > 3.2 && ay < 3.6 && c.x() < 5.2)
          g.at(i, j, k) = kWall;
        else if (c.x() > 4.8 && c.x() < 5.2 && ay < 3.6)
          g.at(i, j, k) = kVehicle;
      }
}

void build_boxes(SemanticOccupancy& g, Rng& rng, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const auto& s = g.spec;
  fill_ground(g);
  const auto count = rng.integer(5, 8);
  for (std::int64_t n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const Index sx = rng.integer(2, 4), sy = rng.integer(2, 4);
      const Index sz = std::min<Index>(rng.integer(2, 5), s.dims[2] - 1);
      if (sx > s.dims[0] || sy > s.dims[1] || sz < 1) break;
      const Index i0 = rng.integer(0, s.dims[0] - sx), j0 = rng.integer(0, s.dims[1] - sy);
      const auto label = static_cast<std::uint8_t>(rng.integer(kWall, kVegetation));
      bool clear = true;
      for (Index i = i0; i < i0 + sx && clear; ++i)
        for (Index j = j0; j < j0 + sy && clear; ++j)
          clear = distance_to_segment_xy(s.voxel_center(i, j, 0), a, b) > kClearance;
      if (!clear) continue;
      for (Index i = i0; i < i0 + sx; ++i)
        for (Index j = j0; j < j0 + sy; ++j)
          for (Index k = 1; k <= sz; ++k) g.at(i, j, k) = label;
      break;
    }
  }
}

void build_blobs(SemanticOccupancy& g, Rng& rng, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const auto& s = g.spec;
  fill_ground(g);
  const Eigen::Vector3d lo = s.origin, hi = s.max_corner();
  const auto count = rng.integer(3, 6);
  for (std::int64_t n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double radius = rng.uniform(0.6, 1.2);
      const Eigen::Vector3d c(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                              rng.uniform(lo.z() + s.voxel_size, hi.z()));
      if (distance_to_segment_xy(c, a, b) <= kClearance + radius) continue;
      const auto label = static_cast<std::uint8_t>(rng.integer(kWall, kVegetation));
      for (Index i = 0; i < s.dims[0]; ++i)
        for (Index j = 0; j < s.dims[1]; ++j)
          for (Index k = 1; k < s.dims[2]; ++k)
            if ((s.voxel_center(i, j, k) - c).norm() <= radius) g.at(i, j, k) = label;
      break;
    }
  }
}

Eigen::Vector3d sky_color(const Eigen::Vector3d& dir) {
  const double s = std::clamp(0.5 + 0.5 * dir.z(), 0.0, 1.0);
  return (1 - s) * Eigen::Vector3d(0.85, 0.90, 0.95) + s * Eigen::Vector3d(0.35, 0.55, 0.90);
}

}  // namespace

ScenePreset preset_from_string(const std::string& name) {
  if (name == "boxes") return ScenePreset::kBoxes;
  if (name == "corridor") return ScenePreset::kCorridor;
  if (name == "random_blobs") return ScenePreset::kRandomBlobs;
  throw ConfigError("unknown scene preset '" + name + "' (expected boxes, corridor or random_blobs)");
}

const char* to_string(ScenePreset preset) {
  switch (preset) {
    case ScenePreset::kBoxes:
      return "boxes";
    case ScenePreset::kCorridor:
      return "corridor";
    case ScenePreset::kRandomBlobs:
      return "random_blobs";
  }
  return "unknown";
}

const std::vector<std::string>& scene_class_names() {
  static const std::vector<std::string> names{"ground", "wall", "vehicle", "vegetation"};
  return names;
}

std::string view_stem(std::size_t cam, Timestamp t) {
  return "cam" + std::to_string(cam) + "_t" + std::to_string(t);
}

DensityField density_from_labels(const SemanticOccupancy& grid, double sigma_occ) {
  DensityField f = DensityField::Zeros(grid.spec);
  for (Index v = 0; v < grid.spec.num_voxels(); ++v)
    if (grid.occupied(v)) f.sigma.data()[v] = sigma_occ;
  return f;
}

std::optional<VoxelHit> first_hit(const SemanticOccupancy& grid, const Rayd& r,
                                  const std::function<void(Index)>& visit) {
  const auto& s = grid.spec;
  const Eigen::Vector3d lo = s.origin, hi = s.max_corner();
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = r.direction[a];
    if (d == 0.0) {
      if (r.origin[a] < lo[a] || r.origin[a] >= hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - r.origin[a]) / d, tb = (hi[a] - r.origin[a]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 >= t1) return std::nullopt;

  const Eigen::Vector3d p = r.at(t0);
  std::array<Index, 3> idx{};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{}, t_delta{};
  for (int a = 0; a < 3; ++a) {
    idx[a] = std::clamp<Index>(static_cast<Index>(std::floor((p[a] - lo[a]) / s.voxel_size)), 0, s.dims[a] - 1);
    const double d = r.direction[a];
    if (d > 0) {
      step[a] = 1;
      t_delta[a] = s.voxel_size / d;
    } else if (d < 0) {
      step[a] = -1;
      t_delta[a] = -s.voxel_size / d;
    } else {
      step[a] = 0;
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }
  auto boundary_t = [&](int a) {
    if (step[a] == 0) return std::numeric_limits<double>::infinity();
    const double plane = lo[a] + s.voxel_size * static_cast<double>(idx[a] + (step[a] > 0 ? 1 : 0));
    return (plane - r.origin[a]) / r.direction[a];
  };
  for (int a = 0; a < 3; ++a) t_max[a] = boundary_t(a);

  double t = t0;
  for (;;) {
    const Index flat = s.flat_index(idx[0], idx[1], idx[2]);
    if (visit) visit(flat);
    if (grid.occupied(flat)) return VoxelHit{t, flat};
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    t = t_max[axis];
    idx[axis] += step[axis];
    if (idx[axis] < 0 || idx[axis] >= s.dims[axis]) return std::nullopt;
    t_max[axis] = boundary_t(axis);
  }
}

DepthMap raymarch_depth_oracle(const SemanticOccupancy& grid, const Camera& cam, int height, int width) {
  DepthMap m = DepthMap::Invalid(height, width);
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t row) {
    for (int col = 0; col < width; ++col) {
      const auto hit = first_hit(grid, ray(cam, Eigen::Vector2d(col, static_cast<double>(row))));
      if (!hit) continue;
      const auto i = static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col);
      m.depth.data()[static_cast<Index>(i)] = hit->t;
      m.accumulated_opacity.data()[static_cast<Index>(i)] = 1.0;
      m.valid[i] = 1;
    }
  });
  return m;
}

DenseTensor synthesize_image(const SemanticOccupancy& grid, const Camera& cam, int height, int width) {
  DenseTensor img({height, width, 3});
  const double cell = grid.spec.voxel_size;
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t row) {
    for (int col = 0; col < width; ++col) {
      const Rayd r = ray(cam, Eigen::Vector2d(col, static_cast<double>(row)));
      Eigen::Vector3d color;
      if (const auto hit = first_hit(grid, r)) {
        const Eigen::Vector3d p = r.at(hit->t);
        const double noise = value_noise(p / cell);
        const double tint = hash_unit(static_cast<std::uint64_t>(hit->voxel), 0, 0, 0x5eedu);
        const double shade = 1.0 / (1.0 + 0.01 * hit->t);
        color = class_color(grid.labels[static_cast<std::size_t>(hit->voxel)]) * (0.45 + 0.55 * noise) *
                (0.96 + 0.08 * tint) * shade;
      } else {
        color = sky_color(r.direction);
      }
      for (int c = 0; c < 3; ++c) img(static_cast<Index>(row), col, c) = std::clamp(color[c], 0.0, 1.0);
    }
  });
  return img;
}

std::vector<std::uint8_t> visibility_mask(const SemanticOccupancy& grid, const std::vector<Camera>& cams, int height,
                                          int width) {
  std::vector<std::uint8_t> vis(static_cast<std::size_t>(grid.spec.num_voxels()), 0);
  for (const auto& cam : cams)
    for (int row = 0; row < height; ++row)
      for (int col = 0; col < width; ++col)
        first_hit(grid, ray(cam, Eigen::Vector2d(col, row)), [&](Index v) { vis[static_cast<std::size_t>(v)] = 1; });
  return vis;
}

std::vector<LidarSample> sparse_lidar(const DepthMap& gt_depth, Index n, std::uint64_t seed) {
  std::vector<Index> pool;
  for (Index i = 0; i < gt_depth.depth.size(); ++i)
    if (gt_depth.valid[static_cast<std::size_t>(i)]) pool.push_back(i);
  const auto available = static_cast<Index>(pool.size());
  if (n < 0) n = available;
  if (n > available)
    throw DomainError("sparse_lidar: requested " + std::to_string(n) + " samples but only " +
                      std::to_string(available) + " pixels are valid");
  Rng rng(seed);
  for (Index i = 0; i < n; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(available - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(n));
  std::sort(pool.begin(), pool.end());
  const Index w = gt_depth.depth.dim(1);
  std::vector<LidarSample> out;
  out.reserve(pool.size());
  for (Index p : pool) out.push_back({p / w, p % w, gt_depth.depth.data()[p]});
  return out;
}

SceneBundle build_scene(std::uint64_t seed, const VoxelGridSpec& spec, ScenePreset preset,
                        const SceneOptions& options) {
  spec.validate();
  for (Index d : spec.dims)
    if (d > 64) throw ConfigError("synthetic scenes are limited to 64 voxels per axis");
  if (options.num_cameras < 1 || options.num_cameras > 6) throw ConfigError("scenes use 1 to 6 cameras");
  if (!(options.sigma_occ > 0.0)) throw ConfigError("sigma_occ must be positive");

  Rng rng(seed);
  // Ego motion from the previous to the current frame: forward travel plus a small yaw.
  const double travel = rng.uniform(0.5, 2.0);
  const double yaw = rng.uniform(-5.0, 5.0) * std::numbers::pi / 180.0;
  const Posed motion = Posed::FromYaw(yaw, Eigen::Vector3d(travel, 0.0, 0.0));
  const Timestamp prev = 0, cur = 1;
  std::map<Timestamp, Posed> ego{{prev, motion.inverse()}, {cur, Posed::Identity()}};
  CameraRig rig(ring_cameras(options.num_cameras, options.height, options.width), std::move(ego));

  SemanticOccupancy grid = SemanticOccupancy::AllFree(spec, kSceneClasses);
  const Eigen::Vector2d path_a = rig.ego_pose(prev).translation.head<2>(), path_b(0.0, 0.0);
  switch (preset) {
    case ScenePreset::kCorridor:
      build_corridor(grid);
      break;
    case ScenePreset::kBoxes:
      build_boxes(grid, rng, path_a, path_b);
      break;
    case ScenePreset::kRandomBlobs:
      build_blobs(grid, rng, path_a, path_b);
      break;
  }

  SceneBundle scene{.seed = seed,
                    .preset = preset,
                    .options = options,
                    .grid = grid,
                    .density_gt = density_from_labels(grid, options.sigma_occ),
                    .rig = rig,
                    .images = {},
                    .gt_depths = {},
                    .visible = {}};
  std::vector<Camera> current;
  for (std::size_t c = 0; c < rig.num_cameras(); ++c) {
    for (Timestamp t : {prev, cur}) {
      const Camera cam = rig.camera_at(c, t);
      scene.images.emplace(ViewKey{c, t}, synthesize_image(grid, cam, options.height, options.width));
      scene.gt_depths.emplace(ViewKey{c, t}, raymarch_depth_oracle(grid, cam, options.height, options.width));
    }
    current.push_back(rig.camera_at(c, cur));
  }
  scene.visible = visibility_mask(grid, current, options.height, options.width);
  return scene;
}

void save_scene(const SceneBundle& scene, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create scene directory " + dir.string() + ": " + ec.message());
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["preset"] = to_string(scene.preset);
  j["num_classes"] = scene.grid.num_classes;
  j["class_names"] = scene_class_names();
  j["sigma_occ"] = scene.options.sigma_occ;
  j["resolution"] = {scene.options.height, scene.options.width};
  j["grid"] = to_json(scene.grid.spec);
  j["rig"] = to_json(scene.rig);
  io::write_text(dir / "scene.json", j.dump(2) + "\n");
  io::write_bytes(dir / "grid.raw", scene.grid.labels);
  io::write_bytes(dir / "visible.raw", scene.visible);
  for (const auto& [key, img] : scene.images) io::write_ppm(dir / "images" / (view_stem(key.first, key.second) + ".ppm"), img);
  for (const auto& [key, d] : scene.gt_depths) {
    io::write_pfm(dir / "depths" / (view_stem(key.first, key.second) + ".pfm"), d.depth);
    io::write_mask_pgm(dir / "depths" / (view_stem(key.first, key.second) + "_valid.pgm"), d.valid, d.height(),
                       d.width());
  }
}

SceneBundle load_scene(const fs::path& dir) {
  if (!fs::exists(dir / "scene.json")) throw IoError("no scene.json in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(dir / "scene.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("unreadable scene.json: ") + e.what());
  }
  const VoxelGridSpec spec = grid_spec_from_json(j.at("grid"));
  SemanticOccupancy grid = SemanticOccupancy::AllFree(spec, j.at("num_classes").get<int>());
  grid.labels = io::read_bytes(dir / "grid.raw");
  if (static_cast<Index>(grid.labels.size()) != spec.num_voxels())
    throw IoError("grid.raw has " + std::to_string(grid.labels.size()) + " labels, expected " +
                  std::to_string(spec.num_voxels()));
  SceneOptions opts;
  opts.sigma_occ = j.at("sigma_occ").get<double>();
  opts.height = j.at("resolution").at(0).get<int>();
  opts.width = j.at("resolution").at(1).get<int>();
  CameraRig rig = rig_from_json(j.at("rig"));
  opts.num_cameras = static_cast<int>(rig.num_cameras());

  SceneBundle scene{.seed = j.at("seed").get<std::uint64_t>(),
                    .preset = preset_from_string(j.at("preset").get<std::string>()),
                    .options = opts,
                    .grid = grid,
                    .density_gt = density_from_labels(grid, opts.sigma_occ),
                    .rig = rig,
                    .images = {},
                    .gt_depths = {},
                    .visible = io::read_bytes(dir / "visible.raw")};
  for (std::size_t c = 0; c < rig.num_cameras(); ++c) {
    for (Timestamp t : rig.timestamps()) {
      const std::string stem = view_stem(c, t);
      scene.images.emplace(ViewKey{c, t}, io::read_ppm(dir / "images" / (stem + ".ppm")));
      DenseTensor depth = io::read_pfm(dir / "depths" / (stem + ".pfm"));
      DepthMap m = DepthMap::Invalid(static_cast<int>(depth.dim(0)), static_cast<int>(depth.dim(1)));
      for (Index i = 0; i < depth.size(); ++i) {
        if (depth.data()[i] > 0.0) {
          m.valid[static_cast<std::size_t>(i)] = 1;
          m.accumulated_opacity.data()[i] = 1.0;
        }
      }
      m.depth = std::move(depth);
      scene.gt_depths.emplace(ViewKey{c, t}, std::move(m));
    }
  }
  return scene;
}

}  // namespace occgeom
