#include "occgeom/selftrain.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "occgeom/random.hpp"
#include "occgeom/view_transform.hpp"

namespace occgeom {

InitMode init_mode_from_string(const std::string& name) {
  if (name == "zeros") return InitMode::kZeros;
  if (name == "random") return InitMode::kRandom;
  if (name == "perturbed_gt") return InitMode::kPerturbedGt;
  throw ConfigError("unknown init mode '" + name + "' (expected zeros, random or perturbed_gt)");
}

const char* to_string(InitMode mode) {
  switch (mode) {
    case InitMode::kZeros:
      return "zeros";
    case InitMode::kRandom:
      return "random";
    case InitMode::kPerturbedGt:
      return "perturbed_gt";
  }
  return "unknown";
}

void SelftrainOptions::validate() const {
  if (steps < 0) throw ConfigError("optimize.steps must be non-negative");
  if (!(step_size >= 0.0) || !(logit_step_size >= 0.0)) throw ConfigError("step sizes must be non-negative");
  if (!(perturbation >= 0.0)) throw ConfigError("perturbation must be non-negative");
  if (depth_bins < 1) throw ConfigError("depth_bins must be positive");
  render.validate();
  cast.validate();
}

DensityField initial_density(const SceneBundle& scene, InitMode mode, double perturbation, std::uint64_t seed) {
  DensityField f = DensityField::Zeros(scene.grid.spec);
  Rng rng(mix64(seed ^ 0x5157u));
  const double s = scene.options.sigma_occ;
  auto& d = f.sigma.data();
  switch (mode) {
    case InitMode::kZeros:
      break;
    case InitMode::kRandom:
      for (Index i = 0; i < d.size(); ++i) d[i] = rng.uniform(0.0, 0.1 * s);
      break;
    case InitMode::kPerturbedGt:
      for (Index i = 0; i < d.size(); ++i)
        d[i] = std::max(0.0, scene.density_gt.sigma.data()[i] + perturbation * s * rng.uniform(-1.0, 1.0));
      break;
  }
  return f;
}

std::vector<DenseTensor> initial_depth_logits(const SceneBundle& scene, InitMode mode, int bins,
                                              std::uint64_t seed) {
  const Timestamp t = scene.current_time();
  const auto centres = DepthDistribution::UniformBins(bins);
  const DepthDistribution probe{centres, DenseTensor({1, 1, bins})};
  Rng rng(mix64(seed ^ 0x10617u));
  std::vector<DenseTensor> out;
  for (std::size_t i = 0; i < scene.rig.num_cameras(); ++i) {
    const DepthMap& gt = scene.gt_depths.at({i, t});
    DenseTensor logits({gt.height(), gt.width(), bins});
    auto& d = logits.data();
    if (mode == InitMode::kRandom) {
      for (Index k = 0; k < d.size(); ++k) d[k] = rng.normal();
    } else if (mode == InitMode::kPerturbedGt) {
      const double off = std::log(0.1 / bins), on = std::log(0.9 + 0.1 / bins);
      d.setConstant(off);
      for (Index p = 0; p < gt.depth.size(); ++p)
        if (gt.valid[static_cast<std::size_t>(p)]) d[p * bins + probe.nearest_bin(gt.depth.data()[p])] = on;
    }
    out.push_back(std::move(logits));
  }
  return out;
}

double depth_mae(std::span<const DepthMap> rendered, std::span<const DepthMap> ground_truth) {
  if (rendered.size() != ground_truth.size()) throw DimensionError("depth_mae: view count mismatch");
  double sum = 0.0;
  Index n = 0;
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const auto& r = rendered[v];
    const auto& g = ground_truth[v];
    if (r.depth.shape() != g.depth.shape()) throw DimensionError("depth_mae: resolution mismatch");
    for (Index p = 0; p < g.depth.size(); ++p) {
      if (!g.valid[static_cast<std::size_t>(p)]) continue;
      sum += std::abs(r.depth.data()[p] - g.depth.data()[p]);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

SelftrainResult selftrain(const SceneBundle& scene, const SelftrainOptions& options) {
  options.validate();
  const Timestamp t = scene.current_time();
  const std::size_t cams = scene.rig.num_cameras();
  for (std::size_t i = 0; i < cams; ++i) {
    const auto& k = scene.rig.camera(i).intrinsics;
    if (k.height != options.render.height || k.width != options.render.width)
      throw ConfigError("render resolution " + std::to_string(options.render.height) + "x" +
                        std::to_string(options.render.width) + " does not match the scene cameras (" +
                        std::to_string(k.height) + "x" + std::to_string(k.width) + ")");
  }

  const auto bins = DepthDistribution::UniformBins(options.depth_bins);
  std::vector<Camera> cameras;
  std::vector<DepthMap> gt;
  std::vector<std::vector<LidarSample>> lidar;
  for (std::size_t i = 0; i < cams; ++i) {
    cameras.push_back(scene.rig.camera_at(i, t));
    gt.push_back(scene.gt_depths.at({i, t}));
    lidar.push_back(sparse_lidar(gt.back(), std::min<Index>(options.lidar_points, gt.back().valid_count()),
                                 mix64(options.seed + 7919 * i)));
  }

  SelftrainResult res;
  res.field = initial_density(scene, options.init, options.perturbation, options.seed);
  res.depth_logits = initial_depth_logits(scene, options.init, options.depth_bins, options.seed);

  for (int step = 0;; ++step) {
    std::vector<ViewRender> renders;
    std::vector<DepthDistribution> dists;
    for (std::size_t i = 0; i < cams; ++i) {
      renders.push_back(render_rays(res.field, cameras[i], options.render));
      dists.push_back(DepthDistribution::FromLogits(bins, res.depth_logits[i]));
    }
    std::vector<PretrainView> views;
    for (std::size_t i = 0; i < cams; ++i) views.push_back({&dists[i], &renders[i], lidar[i]});

    const bool last = step == options.steps;
    PretrainGrad grad;
    TraceRow row;
    row.step = step;
    row.loss = pretrain_loss(scene.rig, scene.images, views, options.cast, last ? nullptr : &grad);
    res.depths.clear();
    for (const auto& r : renders) res.depths.push_back(to_depth_map(r));
    row.depth_mae = depth_mae(res.depths, gt);
    if (!std::isfinite(row.loss.total))
      throw NumericError("self-training diverged at step " + std::to_string(step) + " (loss is not finite)");
    res.trace.push_back(row);
    if (last) break;

    Eigen::VectorXd g_sigma = Eigen::VectorXd::Zero(res.field.sigma.size());
    for (std::size_t i = 0; i < cams; ++i)
      g_sigma += render_backward(res.field, cameras[i], options.render, grad.expected_depth[i]).data();
    if (!g_sigma.allFinite()) throw NumericError("non-finite density gradient at step " + std::to_string(step));
    res.field.sigma.data() = (res.field.sigma.data() - options.step_size * g_sigma).cwiseMax(0.0);
    for (std::size_t i = 0; i < cams; ++i)
      res.depth_logits[i].data() -= options.logit_step_size * grad.logits[i].data();
  }
  return res;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << "step,L_ed,L_rd,L_t,L_sp,L_spt,L_cast,total,depth_mae\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& r : trace) {
    const auto& l = r.loss;
    os << r.step << ',' << num(l.l_ed) << ',' << num(l.l_rd) << ',' << num(l.cast.l_t) << ',' << num(l.cast.l_sp)
       << ',' << num(l.cast.l_spt) << ',' << num(l.cast.total) << ',' << num(l.total) << ',' << num(r.depth_mae)
       << '\n';
  }
  return os.str();
}

bool trailing_monotone(const std::vector<TraceRow>& trace, int window) {
  const auto n = static_cast<int>(trace.size());
  for (int k = std::max(1, n - window); k < n; ++k)
    if (trace[static_cast<std::size_t>(k)].loss.total > trace[static_cast<std::size_t>(k - 1)].loss.total) return false;
  return true;
}

}  // namespace occgeom
