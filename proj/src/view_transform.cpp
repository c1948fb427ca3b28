#include "occgeom/view_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace occgeom {

std::vector<double> DepthDistribution::UniformBins(int count, double near, double far) {
  if (count < 1 || !(near < far)) throw DomainError("depth bins need count >= 1 and near < far");
  std::vector<double> bins(static_cast<std::size_t>(count));
  if (count == 1) {
    bins[0] = 0.5 * (near + far);
    return bins;
  }
  for (int i = 0; i < count; ++i) bins[static_cast<std::size_t>(i)] = near + (far - near) * i / (count - 1);
  return bins;
}

DepthDistribution DepthDistribution::FromLogits(std::vector<double> bins, const DenseTensor& logits) {
  DepthDistribution d{std::move(bins), softmax(logits, 2)};
  d.validate();
  return d;
}

void DepthDistribution::validate() const {
  if (probs.rank() != 3) throw DimensionError("depth distribution must be H x W x C_d");
  if (static_cast<Index>(bins.size()) != probs.dim(2))
    throw DimensionError("depth distribution has " + std::to_string(probs.dim(2)) + " channels but " +
                         std::to_string(bins.size()) + " bins");
  for (std::size_t i = 1; i < bins.size(); ++i)
    if (!(bins[i] > bins[i - 1])) throw DomainError("depth bins must be strictly increasing");
}

int DepthDistribution::nearest_bin(double depth) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double d = std::abs(bins[i] - depth);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

PseudoPoints lift(const DenseTensor& features, const DepthDistribution& dist, const Intrinsicsd& intrinsics) {
  dist.validate();
  if (features.rank() != 3) throw DimensionError("lift: features must be H x W x C_f");
  const Index h = features.dim(0), w = features.dim(1), cf = features.dim(2);
  const Index cd = dist.probs.dim(2);
  if (dist.probs.dim(0) != h || dist.probs.dim(1) != w)
    throw DimensionError("lift: depth distribution and features differ in image extent");
  PseudoPoints out{DenseTensor({h * w * cd, 3}), DenseTensor({h * w * cd, cf})};
  auto pos = out.positions.matrix();
  auto feat = out.features.matrix();
  const auto f = features.data();
  const auto& p = dist.probs.data();
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      const Eigen::Vector3d dir =
          intrinsics.backproject(Eigen::Vector2d(static_cast<double>(c), static_cast<double>(r))).normalized();
      const Index pix = r * w + c;
      for (Index b = 0; b < cd; ++b) {
        const Index n = pix * cd + b;
        pos.row(n) = (dist.bins[static_cast<std::size_t>(b)] * dir).transpose();
        feat.row(n) = p[pix * cd + b] * f.segment(pix * cf, cf).transpose();
      }
    }
  }
  return out;
}

PseudoPoints transform_points(const PseudoPoints& points, const Posed& pose) {
  PseudoPoints out = points;
  auto pos = out.positions.matrix();
  for (Index i = 0; i < pos.rows(); ++i) pos.row(i) = (pose * Eigen::Vector3d(pos.row(i).transpose())).transpose();
  return out;
}

OccupancyFeature voxel_pool(const DenseTensor& points_world, const DenseTensor& features, const VoxelGridSpec& spec) {
  spec.validate();
  if (points_world.rank() != 2 || points_world.dim(1) != 3) throw DimensionError("voxel_pool: points must be N x 3");
  if (features.rank() != 2 || features.dim(0) != points_world.dim(0))
    throw DimensionError("voxel_pool: features must be N x C with one row per point");
  const Index n = points_world.dim(0), c = features.dim(1), v = spec.num_voxels();
  OccupancyFeature out{DenseTensor({c, spec.dims[0], spec.dims[1], spec.dims[2]}), spec, FeatureProvenance::kExplicit};
  std::vector<Index> counts(static_cast<std::size_t>(v), 0);
  auto& acc = out.data.data();
  const auto pts = points_world.matrix();
  const auto f = features.matrix();
  for (Index i = 0; i < n; ++i) {
    const auto cell = spec.locate(pts.row(i).transpose());
    if (!cell) continue;
    const Index flat = spec.flat_index((*cell)[0], (*cell)[1], (*cell)[2]);
    ++counts[static_cast<std::size_t>(flat)];
    for (Index ch = 0; ch < c; ++ch) acc[ch * v + flat] += f(i, ch);
  }
  for (Index flat = 0; flat < v; ++flat) {
    const Index k = counts[static_cast<std::size_t>(flat)];
    if (k > 1)
      for (Index ch = 0; ch < c; ++ch) acc[ch * v + flat] /= static_cast<double>(k);
  }
  return out;
}

OccupancyFeature idm_sample(const VoxelGridSpec& query_spec, const DenseTensor& queries,
                            std::span<const DenseTensor> image_features, std::span<const Camera> cameras,
                            const DeformableSampling& sampling) {
  query_spec.validate();
  if (queries.rank() != 4 || queries.dim(1) != query_spec.dims[0] || queries.dim(2) != query_spec.dims[1] ||
      queries.dim(3) != query_spec.dims[2])
    throw DimensionError("idm_sample: queries must be C x Xq x Yq x Zq matching the query grid");
  if (image_features.size() != cameras.size() || cameras.empty())
    throw DimensionError("idm_sample: need one feature map per camera");
  if (sampling.offsets.rank() != 2 || sampling.offsets.dim(1) != 2 || sampling.weights.rank() != 1 ||
      sampling.weights.dim(0) != sampling.offsets.dim(0))
    throw DimensionError("idm_sample: offsets must be P x 2 and weights P");
  const Index cf = image_features[0].dim(2);
  for (const auto& f : image_features)
    if (f.rank() != 3 || f.dim(2) != cf) throw DimensionError("idm_sample: feature maps must share C_f");

  const Index points = sampling.offsets.dim(0);
  const DenseTensor attn = softmax(sampling.weights, 0);
  const Index v = query_spec.num_voxels();
  OccupancyFeature out{DenseTensor({cf, query_spec.dims[0], query_spec.dims[1], query_spec.dims[2]}), query_spec,
                       FeatureProvenance::kImplicit};
  std::vector<double> sample(static_cast<std::size_t>(cf)), acc(static_cast<std::size_t>(cf));
  for (Index flat = 0; flat < v; ++flat) {
    const auto [i, j, k] = query_spec.unflatten(flat);
    const Eigen::Vector3d center = query_spec.voxel_center(i, j, k);
    std::fill(acc.begin(), acc.end(), 0.0);
    int seen = 0;
    for (std::size_t cam = 0; cam < cameras.size(); ++cam) {
      const auto proj = project(cameras[cam], center);
      if (!proj.visible) continue;
      ++seen;
      for (Index p = 0; p < points; ++p) {
        const double a = attn(p);
        if (a == 0.0) continue;
        bilinear_lookup(image_features[cam], proj.uv.x() + sampling.offsets(p, 0), proj.uv.y() + sampling.offsets(p, 1),
                        sample);
        for (Index ch = 0; ch < cf; ++ch) acc[static_cast<std::size_t>(ch)] += a * sample[static_cast<std::size_t>(ch)];
      }
    }
    if (seen == 0) continue;
    for (Index ch = 0; ch < cf; ++ch) out.data.data()[ch * v + flat] = acc[static_cast<std::size_t>(ch)] / seen;
  }
  return out;
}

OccupancyFeature trilinear_upsample(const OccupancyFeature& feature, const VoxelGridSpec& target) {
  const auto& src = feature.spec;
  const Index c = feature.channels();
  const Index sv = src.num_voxels(), tv = target.num_voxels();
  OccupancyFeature out{DenseTensor({c, target.dims[0], target.dims[1], target.dims[2]}), target, feature.provenance};
  std::vector<DenseTensor> slices;
  slices.reserve(static_cast<std::size_t>(c));
  for (Index ch = 0; ch < c; ++ch)
    slices.emplace_back(Shape{src.dims[0], src.dims[1], src.dims[2]}, feature.data.data().segment(ch * sv, sv));
  for (Index flat = 0; flat < tv; ++flat) {
    const auto [i, j, k] = target.unflatten(flat);
    Eigen::Vector3d coord = src.lattice_coord(target.voxel_center(i, j, k));
    for (int a = 0; a < 3; ++a) coord[a] = std::clamp(coord[a], 0.0, static_cast<double>(src.dims[a] - 1));
    for (Index ch = 0; ch < c; ++ch) out.data.data()[ch * tv + flat] = trilinear_lookup(slices[static_cast<std::size_t>(ch)], coord);
  }
  return out;
}

OccupancyFeature fuse_and_compress(const OccupancyFeature& explicit_feature, const OccupancyFeature& implicit_feature,
                                   const DenseTensor& weights) {
  if (!(explicit_feature.spec == implicit_feature.spec))
    throw DimensionError("fuse_and_compress: explicit and implicit features use different grids");
  if (explicit_feature.channels() != implicit_feature.channels())
    throw DimensionError("fuse_and_compress: explicit and implicit features differ in channel count");
  for (Index d : explicit_feature.spec.dims)
    if (d % 2 != 0) throw DimensionError("fuse_and_compress: grid extents must be even");
  const DenseTensor fused = concat_channels(explicit_feature.data, implicit_feature.data);
  return {conv3d(fused, weights, 2), explicit_feature.spec.downsampled(), FeatureProvenance::kCompressed};
}

ViewTransformResult transform_views(std::span<const CameraView> views, const ViewTransformParams& params) {
  if (views.empty()) throw DimensionError("transform_views: no camera views");
  std::vector<DenseTensor> positions, features;
  Index total = 0;
  for (const auto& v : views) {
    PseudoPoints pts = transform_points(lift(v.features, v.depth, v.camera.intrinsics), v.camera.pose);
    total += pts.positions.dim(0);
    positions.push_back(std::move(pts.positions));
    features.push_back(std::move(pts.features));
  }
  const Index cf = features.front().dim(1);
  DenseTensor all_pos({total, 3}), all_feat({total, cf});
  Index row = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Index n = positions[i].dim(0);
    all_pos.matrix().middleRows(row, n) = positions[i].matrix();
    all_feat.matrix().middleRows(row, n) = features[i].matrix();
    row += n;
  }

  ViewTransformResult r;
  r.explicit_feature = voxel_pool(all_pos, all_feat, params.grid);

  std::vector<DenseTensor> maps;
  std::vector<Camera> cams;
  for (const auto& v : views) {
    maps.push_back(v.features);
    cams.push_back(v.camera);
  }
  const OccupancyFeature coarse = idm_sample(params.query_grid, params.queries, maps, cams, params.sampling);
  r.implicit_feature = trilinear_upsample(coarse, params.grid);
  r.fused = {concat_channels(r.explicit_feature.data, r.implicit_feature.data), params.grid, FeatureProvenance::kFused};
  r.compressed = fuse_and_compress(r.explicit_feature, r.implicit_feature, params.compress_weights);
  return r;
}

}  // namespace occgeom
