#include "occgeom/cast.hpp"

#include <algorithm>
#include <cmath>

#include "occgeom/parallel.hpp"
#include "occgeom/serialization.hpp"

namespace occgeom {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Index reflect(Index i, Index n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

void check_image(const DenseTensor& img, const char* what) {
  if (img.rank() != 3) throw DimensionError(std::string(what) + " must be H x W x C");
}

void check_window(int window, Index h, Index w) {
  if (window < 1 || window % 2 == 0) throw DomainError("SSIM window must be a positive odd size");
  const Index r = window / 2;
  if (r >= h || r >= w) throw DimensionError("image is too small for the SSIM window");
}

// Local window statistics of one pixel and channel.
struct WindowStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

WindowStats window_stats(const DenseTensor& a, const DenseTensor& b, Index r, Index c, Index ch, Index rad) {
  const Index h = a.dim(0), w = a.dim(1), nc = a.dim(2);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (Index dr = -rad; dr <= rad; ++dr) {
    const Index rr = reflect(r + dr, h);
    for (Index dc = -rad; dc <= rad; ++dc) {
      const Index cc = reflect(c + dc, w);
      const double x = pa[(rr * w + cc) * nc + ch], y = pb[(rr * w + cc) * nc + ch];
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
  }
  const double n = static_cast<double>((2 * rad + 1) * (2 * rad + 1));
  WindowStats s;
  s.mu_a = sa / n;
  s.mu_b = sb / n;
  s.var_a = saa / n - s.mu_a * s.mu_a;
  s.var_b = sbb / n - s.mu_b * s.mu_b;
  s.cov = sab / n - s.mu_a * s.mu_b;
  return s;
}

// Target pixel lifted into the source camera; returns false when it falls
// behind the source camera.
struct WarpGeometry {
  Eigen::Vector3d dir;    // unit ray direction in the target camera
  Eigen::Vector3d p_src;  // point in the source camera
  Eigen::Vector2d uv;
};

bool warp_pixel(const Posed& tgt_to_src, const Intrinsicsd& k_src, const Intrinsicsd& k_tgt, Index r, Index c,
                double depth, WarpGeometry& g) {
  g.dir = k_tgt.backproject(Eigen::Vector2d(static_cast<double>(c), static_cast<double>(r))).normalized();
  g.p_src = tgt_to_src * Eigen::Vector3d(depth * g.dir);
  const auto proj = project_camera_frame(k_src, g.p_src);
  g.uv = proj.uv;
  // Bounds are left to the bilinear lookup, which tolerates rounding at the border.
  return proj.depth > 1e-9;
}

void check_warp_inputs(const DenseTensor& src_img, const DepthMap& target_depth, const Intrinsicsd& k_src,
                       const Intrinsicsd& k_tgt) {
  check_image(src_img, "source image");
  if (src_img.dim(0) != k_src.height || src_img.dim(1) != k_src.width)
    throw DimensionError("source image does not match the source intrinsics");
  if (target_depth.height() != k_tgt.height || target_depth.width() != k_tgt.width)
    throw DimensionError("target depth does not match the target intrinsics");
}

// Invalid reconstruction pixels take the reference value so that SSIM windows
// straddling the valid region compare like with like.
DenseTensor fill_invalid(const DenseTensor& ref, const DenseTensor& recon, std::span<const std::uint8_t> valid) {
  DenseTensor out = recon;
  const Index nc = ref.dim(2);
  for (std::size_t p = 0; p < valid.size(); ++p)
    if (!valid[p])
      for (Index ch = 0; ch < nc; ++ch) out.data()[static_cast<Index>(p) * nc + ch] = ref.data()[static_cast<Index>(p) * nc + ch];
  return out;
}

}  // namespace

void PhotometricConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw ConfigError("ssim_window must be a positive odd integer");
  if (!(lambda_t >= 0.0 && lambda_sp >= 0.0 && lambda_spt >= 0.0))
    throw ConfigError("context weights must be non-negative");
}

WarpResult warp_image(const DenseTensor& src_img, const DepthMap& target_depth, const WarpContext& ctx,
                      const Intrinsicsd& k_src, const Intrinsicsd& k_tgt) {
  check_warp_inputs(src_img, target_depth, k_src, k_tgt);
  const Index h = target_depth.height(), w = target_depth.width(), nc = src_img.dim(2);
  WarpResult out{DenseTensor({h, w, nc}), std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 0)};
  const Posed tgt_to_src = ctx.pose.inverse();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const auto r = static_cast<Index>(row);
    WarpGeometry g;
    for (Index c = 0; c < w; ++c) {
      const Index p = r * w + c;
      if (!target_depth.valid[static_cast<std::size_t>(p)]) continue;
      if (!warp_pixel(tgt_to_src, k_src, k_tgt, r, c, target_depth.depth.data()[p], g)) continue;
      std::span<double> dst(out.recon.data().data() + p * nc, static_cast<std::size_t>(nc));
      if (bilinear_lookup(src_img, g.uv.x(), g.uv.y(), dst)) out.valid[static_cast<std::size_t>(p)] = 1;
    }
  });
  return out;
}

DenseTensor warp_image_backward(const DenseTensor& src_img, const DepthMap& target_depth, const WarpContext& ctx,
                                const Intrinsicsd& k_src, const Intrinsicsd& k_tgt, const DenseTensor& grad_recon) {
  check_warp_inputs(src_img, target_depth, k_src, k_tgt);
  const Index h = target_depth.height(), w = target_depth.width(), nc = src_img.dim(2);
  const Index sh = src_img.dim(0), sw = src_img.dim(1);
  if (grad_recon.shape() != Shape{h, w, nc}) throw DimensionError("warp gradient does not match the target image");
  DenseTensor grad({h, w});
  const Posed tgt_to_src = ctx.pose.inverse();
  const double* img = src_img.data().data();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const auto r = static_cast<Index>(row);
    WarpGeometry g;
    for (Index c = 0; c < w; ++c) {
      const Index p = r * w + c;
      if (!target_depth.valid[static_cast<std::size_t>(p)]) continue;
      if (!warp_pixel(tgt_to_src, k_src, k_tgt, r, c, target_depth.depth.data()[p], g)) continue;
      constexpr double kSnap = 1e-9;
      const double umax = static_cast<double>(sw - 1), vmax = static_cast<double>(sh - 1);
      if (!(g.uv.x() >= -kSnap && g.uv.y() >= -kSnap && g.uv.x() <= umax + kSnap && g.uv.y() <= vmax + kSnap))
        continue;
      const double u = std::clamp(g.uv.x(), 0.0, umax), v = std::clamp(g.uv.y(), 0.0, vmax);
      const Index x0 = std::min<Index>(static_cast<Index>(std::floor(u)), sw - 1);
      const Index y0 = std::min<Index>(static_cast<Index>(std::floor(v)), sh - 1);
      const Index x1 = std::min<Index>(x0 + 1, sw - 1), y1 = std::min<Index>(y0 + 1, sh - 1);
      const double fx = u - static_cast<double>(x0), fy = v - static_cast<double>(y0);

      // d(u, v)/d(depth) through the source projection.
      const Eigen::Vector3d dp = tgt_to_src.rotation * g.dir;
      const double z = g.p_src.z();
      const double du = k_src.fx * (dp.x() * z - g.p_src.x() * dp.z()) / (z * z);
      const double dv = k_src.fy * (dp.y() * z - g.p_src.y() * dp.z()) / (z * z);

      double acc = 0.0;
      for (Index ch = 0; ch < nc; ++ch) {
        const double i00 = img[(y0 * sw + x0) * nc + ch], i01 = img[(y0 * sw + x1) * nc + ch];
        const double i10 = img[(y1 * sw + x0) * nc + ch], i11 = img[(y1 * sw + x1) * nc + ch];
        const double gu = (1 - fy) * (i01 - i00) + fy * (i11 - i10);
        const double gv = (1 - fx) * (i10 - i00) + fx * (i11 - i01);
        acc += grad_recon.data()[p * nc + ch] * (gu * du + gv * dv);
      }
      grad.data()[p] = acc;
    }
  });
  return grad;
}

DenseTensor ssim(const DenseTensor& a, const DenseTensor& b, int window) {
  check_image(a, "SSIM input");
  if (a.shape() != b.shape()) throw DimensionError("SSIM inputs differ in shape");
  const Index h = a.dim(0), w = a.dim(1), nc = a.dim(2);
  check_window(window, h, w);
  const Index rad = window / 2;
  DenseTensor out(a.shape());
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const auto r = static_cast<Index>(row);
    for (Index c = 0; c < w; ++c)
      for (Index ch = 0; ch < nc; ++ch) {
        const WindowStats s = window_stats(a, b, r, c, ch, rad);
        out.data()[(r * w + c) * nc + ch] = (2 * s.mu_a * s.mu_b + kC1) * (2 * s.cov + kC2) /
                                            ((s.mu_a * s.mu_a + s.mu_b * s.mu_b + kC1) * (s.var_a + s.var_b + kC2));
      }
  });
  return out;
}

PhotometricLoss photometric_loss(const DenseTensor& ref, const DenseTensor& recon,
                                 std::span<const std::uint8_t> valid, const PhotometricConfig& cfg) {
  check_image(ref, "reference image");
  if (ref.shape() != recon.shape()) throw DimensionError("photometric loss: image shapes differ");
  const Index h = ref.dim(0), w = ref.dim(1), nc = ref.dim(2);
  if (static_cast<Index>(valid.size()) != h * w) throw DimensionError("photometric loss: mask size mismatch");
  PhotometricLoss out;
  for (auto v : valid) out.valid_pixels += v ? 1 : 0;
  if (out.valid_pixels == 0) {
    out.empty = true;
    return out;
  }
  const DenseTensor filled = fill_invalid(ref, recon, valid);
  const DenseTensor s = cfg.alpha > 0.0 ? ssim(ref, filled, cfg.ssim_window) : DenseTensor::Constant(ref.shape(), 1.0);
  double sum = 0.0;
  for (Index p = 0; p < h * w; ++p) {
    if (!valid[static_cast<std::size_t>(p)]) continue;
    double ms = 0.0, l1 = 0.0;
    for (Index ch = 0; ch < nc; ++ch) {
      ms += s.data()[p * nc + ch];
      l1 += std::abs(ref.data()[p * nc + ch] - recon.data()[p * nc + ch]);
    }
    sum += 0.5 * cfg.alpha * (1.0 - ms / nc) + (1.0 - cfg.alpha) * l1 / nc;
  }
  out.value = sum / static_cast<double>(out.valid_pixels);
  return out;
}

DenseTensor photometric_loss_backward(const DenseTensor& ref, const DenseTensor& recon,
                                      std::span<const std::uint8_t> valid, const PhotometricConfig& cfg) {
  check_image(ref, "reference image");
  if (ref.shape() != recon.shape()) throw DimensionError("photometric loss: image shapes differ");
  const Index h = ref.dim(0), w = ref.dim(1), nc = ref.dim(2);
  if (static_cast<Index>(valid.size()) != h * w) throw DimensionError("photometric loss: mask size mismatch");
  DenseTensor grad(ref.shape());
  Index count = 0;
  for (auto v : valid) count += v ? 1 : 0;
  if (count == 0) return grad;
  check_window(cfg.ssim_window, h, w);

  const Index rad = cfg.ssim_window / 2;
  const double n = static_cast<double>(cfg.ssim_window * cfg.ssim_window);
  const double g_ssim = -0.5 * cfg.alpha / (nc * static_cast<double>(count));
  const double g_l1 = (1.0 - cfg.alpha) / (nc * static_cast<double>(count));
  const double* pa = ref.data().data();
  const DenseTensor filled = fill_invalid(ref, recon, valid);
  const double* pb = filled.data().data();
  auto& g = grad.data();
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const Index p = r * w + c;
      if (!valid[static_cast<std::size_t>(p)]) continue;
      for (Index ch = 0; ch < nc; ++ch) {
        const double d = pb[p * nc + ch] - pa[p * nc + ch];
        g[p * nc + ch] += g_l1 * static_cast<double>((d > 0) - (d < 0));
        if (cfg.alpha == 0.0) continue;
        const WindowStats s = window_stats(ref, filled, r, c, ch, rad);
        const double na = 2 * s.mu_a * s.mu_b + kC1, nb = 2 * s.cov + kC2;
        const double da = s.mu_a * s.mu_a + s.mu_b * s.mu_b + kC1, db = s.var_a + s.var_b + kC2;
        const double sv = na * nb / (da * db);
        const double d_mu = sv * (2 * s.mu_a / na - 2 * s.mu_b / da);
        const double d_cov = 2 * sv / nb;
        const double d_var = -sv / db;
        for (Index dr = -rad; dr <= rad; ++dr) {
          const Index rr = reflect(r + dr, h);
          for (Index dc = -rad; dc <= rad; ++dc) {
            const Index q = rr * w + reflect(c + dc, w);
            const double bq = pb[q * nc + ch], aq = pa[q * nc + ch];
            const double ds = (d_mu + d_var * 2 * (bq - s.mu_b) + d_cov * (aq - s.mu_a)) / n;
            g[q * nc + ch] += g_ssim * ds;
          }
        }
      }
    }
  for (Index p = 0; p < h * w; ++p)
    if (!valid[static_cast<std::size_t>(p)])
      for (Index ch = 0; ch < nc; ++ch) g[p * nc + ch] = 0.0;
  return grad;
}

std::vector<WarpContext> cast_contexts(const CameraRig& rig) {
  const auto ts = rig.timestamps();
  const Timestamp cur = ts.back();
  const bool has_prev = ts.size() >= 2;
  const Timestamp prev = has_prev ? ts[ts.size() - 2] : cur;
  const std::size_t n = rig.num_cameras();
  std::vector<WarpContext> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> neighbours;
    for (std::size_t j : {(i + 1) % n, (i + n - 1) % n})
      if (j != i && std::find(neighbours.begin(), neighbours.end(), j) == neighbours.end()) neighbours.push_back(j);
    if (has_prev)
      out.push_back({ContextKind::kTemporal, {i, prev}, {i, cur},
                     rig.relative_pose(ContextKind::kTemporal, i, i, prev, cur)});
    for (std::size_t j : neighbours)
      out.push_back({ContextKind::kSpatial, {j, cur}, {i, cur}, rig.relative_pose(ContextKind::kSpatial, j, i, cur, cur)});
    if (has_prev)
      for (std::size_t j : neighbours)
        out.push_back({ContextKind::kSpatialTemporal, {j, prev}, {i, cur},
                       rig.relative_pose(ContextKind::kSpatialTemporal, j, i, prev, cur)});
  }
  return out;
}

nlohmann::ordered_json CastBreakdown::to_json() const {
  nlohmann::ordered_json j;
  j["L_t"] = round9(l_t);
  j["L_sp"] = round9(l_sp);
  j["L_spt"] = round9(l_spt);
  j["total"] = round9(total);
  j["active_pairs"] = active_pairs;
  return j;
}

CastBreakdown cast_loss(const CameraRig& rig, const std::map<ViewKey, DenseTensor>& images,
                        std::span<const DepthMap> depths, const PhotometricConfig& cfg,
                        std::vector<DenseTensor>* grad_depth) {
  cfg.validate();
  if (depths.size() != rig.num_cameras()) throw DimensionError("cast_loss: need one depth map per camera");
  auto image = [&](const ViewKey& key) -> const DenseTensor& {
    auto it = images.find(key);
    if (it == images.end())
      throw LookupError("cast_loss: no image for camera " + std::to_string(key.first) + " at t=" +
                        std::to_string(key.second));
    return it->second;
  };

  struct PairResult {
    WarpResult warp;
    PhotometricLoss loss;
  };
  const auto contexts = cast_contexts(rig);
  std::vector<PairResult> pairs;
  pairs.reserve(contexts.size());
  for (const auto& ctx : contexts) {
    const auto& src = rig.camera(ctx.source.first).intrinsics;
    const auto& tgt = rig.camera(ctx.target.first).intrinsics;
    WarpResult wr = warp_image(image(ctx.source), depths[ctx.target.first], ctx, src, tgt);
    PhotometricLoss pl = photometric_loss(image(ctx.target), wr.recon, wr.valid, cfg);
    pairs.push_back({std::move(wr), pl});
  }

  std::array<double, 3> sums{};
  std::array<int, 3> counts{};
  CastBreakdown out;
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    if (pairs[k].loss.empty) continue;
    const auto kind = static_cast<std::size_t>(contexts[k].kind);
    sums[kind] += pairs[k].loss.value;
    ++counts[kind];
    ++out.active_pairs;
  }
  auto mean = [&](std::size_t kind) { return counts[kind] ? sums[kind] / counts[kind] : 0.0; };
  out.l_t = mean(static_cast<std::size_t>(ContextKind::kTemporal));
  out.l_sp = mean(static_cast<std::size_t>(ContextKind::kSpatial));
  out.l_spt = mean(static_cast<std::size_t>(ContextKind::kSpatialTemporal));
  out.t_active = counts[static_cast<std::size_t>(ContextKind::kTemporal)] > 0;
  out.sp_active = counts[static_cast<std::size_t>(ContextKind::kSpatial)] > 0;
  out.spt_active = counts[static_cast<std::size_t>(ContextKind::kSpatialTemporal)] > 0;
  out.total = cfg.lambda_t * out.l_t + cfg.lambda_sp * out.l_sp + cfg.lambda_spt * out.l_spt;

  if (grad_depth) {
    grad_depth->clear();
    for (const auto& d : depths) grad_depth->emplace_back(Shape{d.height(), d.width()});
    const std::array<double, 3> lambdas{cfg.lambda_t, cfg.lambda_sp, cfg.lambda_spt};
    for (std::size_t k = 0; k < contexts.size(); ++k) {
      if (pairs[k].loss.empty) continue;
      const auto& ctx = contexts[k];
      const auto kind = static_cast<std::size_t>(ctx.kind);
      const double scale = lambdas[kind] / counts[kind];
      if (scale == 0.0) continue;
      const DenseTensor g_recon =
          scale * photometric_loss_backward(image(ctx.target), pairs[k].warp.recon, pairs[k].warp.valid, cfg);
      const auto& src = rig.camera(ctx.source.first).intrinsics;
      const auto& tgt = rig.camera(ctx.target.first).intrinsics;
      (*grad_depth)[ctx.target.first].data() +=
          warp_image_backward(image(ctx.source), depths[ctx.target.first], ctx, src, tgt, g_recon).data();
    }
  }
  return out;
}

PretrainLoss pretrain_loss(const CameraRig& rig, const std::map<ViewKey, DenseTensor>& images,
                           std::span<const PretrainView> views, const PhotometricConfig& cfg, PretrainGrad* grad) {
  if (views.size() != rig.num_cameras()) throw DimensionError("pretrain_loss: need one view per camera");
  Index samples = 0;
  for (const auto& v : views) {
    if (!v.rendered) throw DimensionError("pretrain_loss: every view needs a rendered depth");
    samples += static_cast<Index>(v.lidar.size());
  }
  if (grad) {
    grad->logits.clear();
    grad->expected_depth.clear();
  }

  PretrainLoss out;
  std::vector<DepthMap> depth_maps;
  for (const auto& v : views) {
    const DenseTensor& d = v.rendered->expected_depth;
    const Index w = d.dim(1);
    DenseTensor g_depth(d.shape());
    DenseTensor g_logits;
    if (v.explicit_depth) {
      v.explicit_depth->validate();
      g_logits = DenseTensor(v.explicit_depth->probs.shape());
    }
    for (const auto& s : v.lidar) {
      const Index p = s.row * w + s.col;
      const double diff = d.data()[p] - s.depth;
      out.l_rd += std::abs(diff);
      g_depth.data()[p] += static_cast<double>((diff > 0) - (diff < 0)) / static_cast<double>(samples);
      if (v.explicit_depth) {
        const auto& probs = v.explicit_depth->probs;
        const Index cd = probs.dim(2);
        const int bin = v.explicit_depth->nearest_bin(s.depth);
        out.l_ed -= std::log(std::max(probs.data()[p * cd + bin], 1e-300));
        for (Index b = 0; b < cd; ++b)
          g_logits.data()[p * cd + b] += (probs.data()[p * cd + b] - (b == bin ? 1.0 : 0.0)) / static_cast<double>(samples);
      }
    }
    depth_maps.push_back(to_depth_map(*v.rendered));
    if (grad) {
      grad->logits.push_back(std::move(g_logits));
      grad->expected_depth.push_back(std::move(g_depth));
    }
  }
  if (samples > 0) {
    out.l_rd /= static_cast<double>(samples);
    out.l_ed /= static_cast<double>(samples);
  }

  std::vector<DenseTensor> cast_grad;
  out.cast = cast_loss(rig, images, depth_maps, cfg, grad ? &cast_grad : nullptr);
  if (grad)
    for (std::size_t i = 0; i < views.size(); ++i) grad->expected_depth[i].data() += cast_grad[i].data();
  out.total = out.l_ed + out.l_rd + out.cast.total;
  return out;
}

}  // namespace occgeom
