#include "occgeom/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "occgeom/parallel.hpp"

namespace occgeom {

namespace {

constexpr std::size_t kBackwardChunks = 32;

// Parametric interval of the ray inside the grid box, empty when t0 >= t1.
std::pair<double, double> box_interval(const VoxelGridSpec& spec, const Rayd& r) {
  const Eigen::Vector3d lo = spec.origin, hi = spec.max_corner();
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = r.direction[a];
    if (std::abs(d) < 1e-300) {
      if (r.origin[a] < lo[a] || r.origin[a] > hi[a]) return {1.0, 0.0};
      continue;
    }
    double ta = (lo[a] - r.origin[a]) / d, tb = (hi[a] - r.origin[a]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return {t0, t1};
}

bool inside_box(const VoxelGridSpec& spec, const Eigen::Vector3d& p) {
  const Eigen::Vector3d hi = spec.max_corner();
  for (int a = 0; a < 3; ++a)
    if (!(p[a] >= spec.origin[a] && p[a] <= hi[a])) return false;
  return true;
}

struct PixelRay {
  RaySamples samples;
  std::vector<double> sigma;
};

PixelRay march_pixel(const DensityField& field, const Camera& cam, const RenderSettings& s, Index row, Index col) {
  PixelRay pr;
  const Rayd r = ray(cam, Eigen::Vector2d(static_cast<double>(col), static_cast<double>(row)));
  pr.samples = sample_ray(r, s.t_near, s.t_far, s.samples);
  pr.sigma.assign(pr.samples.size(), 0.0);
  const auto [t0, t1] = box_interval(field.spec, r);
  if (t0 < t1) {
    for (std::size_t i = 0; i < pr.samples.size(); ++i) {
      const double t = pr.samples.t[i];
      if (t + 1e-9 < t0 || t - 1e-9 > t1) continue;
      pr.sigma[i] = sample_density(field, pr.samples.positions[i]);
    }
  }
  return pr;
}

}  // namespace

DensityField DensityField::Zeros(const VoxelGridSpec& spec) {
  return {DenseTensor({spec.dims[0], spec.dims[1], spec.dims[2]}), spec};
}

void DensityField::validate() const {
  spec.validate();
  if (sigma.shape() != Shape{spec.dims[0], spec.dims[1], spec.dims[2]})
    throw DimensionError("density field shape does not match its grid spec");
  if (!sigma.all_finite()) throw NumericError("density field has non-finite values");
  if (sigma.data().size() > 0 && sigma.data().minCoeff() < 0.0) throw DomainError("density must be non-negative");
}

Index DepthMap::valid_count() const {
  Index n = 0;
  for (auto v : valid) n += v;
  return n;
}

DepthMap DepthMap::Invalid(int height, int width) {
  DepthMap m;
  m.depth = DenseTensor({height, width});
  m.accumulated_opacity = DenseTensor({height, width});
  m.valid.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0);
  return m;
}

void RenderSettings::validate() const {
  if (!(t_near >= 0.0 && t_near < t_far)) throw DomainError("render range must satisfy 0 <= t_near < t_far");
  if (samples < 1) throw DomainError("at least one sample per ray is required");
  if (height <= 0 || width <= 0) throw DomainError("render resolution must be positive");
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

RaySamples sample_ray(const Rayd& r, double t_near, double t_far, int samples) {
  if (!(t_near >= 0.0 && t_near < t_far)) throw DomainError("sample_ray: need 0 <= t_near < t_far");
  if (samples < 1) throw DomainError("sample_ray: need at least one sample");
  RaySamples rs;
  const double step = (t_far - t_near) / samples;
  rs.t.resize(static_cast<std::size_t>(samples));
  rs.positions.resize(static_cast<std::size_t>(samples));
  rs.delta.assign(static_cast<std::size_t>(samples), step);
  for (int i = 0; i < samples; ++i) {
    const double t = t_near + (i + 0.5) * step;
    rs.t[static_cast<std::size_t>(i)] = t;
    rs.positions[static_cast<std::size_t>(i)] = r.at(t);
  }
  return rs;
}

double sample_density(const DensityField& field, const Eigen::Vector3d& position) {
  if (!inside_box(field.spec, position)) return 0.0;
  return trilinear_lookup(field.sigma, field.spec.lattice_coord(position));
}

std::vector<double> sample_density(const DensityField& field, std::span<const Eigen::Vector3d> positions) {
  std::vector<double> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) out[i] = sample_density(field, positions[i]);
  return out;
}

RayRender render_depth(std::span<const double> sigma_at, const RaySamples& samples) {
  if (sigma_at.size() != samples.size()) throw DimensionError("render_depth: density/sample count mismatch");
  RayRender out;
  out.weights.resize(sigma_at.size());
  double optical = 0.0;
  for (std::size_t i = 0; i < sigma_at.size(); ++i) {
    if (!(sigma_at[i] >= 0.0)) throw DomainError("render_depth: density must be non-negative");
    const double trans = std::exp(-optical);
    const double tau = sigma_at[i] * samples.delta[i];
    const double w = trans * -std::expm1(-tau);
    out.weights[i] = w;
    out.depth += w * samples.t[i];
    out.opacity += w;
    optical += tau;
  }
  return out;
}

std::vector<double> depth_grad_sigma(std::span<const double> sigma_at, const RaySamples& samples) {
  const RayRender rr = render_depth(sigma_at, samples);
  const std::size_t n = sigma_at.size();
  std::vector<double> grad(n);
  double optical = 0.0;
  double suffix = rr.depth;  // sum_{i >= k} w_i t_i
  for (std::size_t k = 0; k < n; ++k) {
    optical += sigma_at[k] * samples.delta[k];
    suffix -= rr.weights[k] * samples.t[k];
    const double trans_next = std::exp(-optical);
    grad[k] = samples.delta[k] * (trans_next * samples.t[k] - suffix);
  }
  return grad;
}

ViewRender render_rays(const DensityField& field, const Camera& cam, const RenderSettings& settings) {
  settings.validate();
  ViewRender out{DenseTensor({settings.height, settings.width}), DenseTensor({settings.height, settings.width})};
  parallel_for(static_cast<std::size_t>(settings.height), [&](std::size_t row) {
    for (Index col = 0; col < settings.width; ++col) {
      const PixelRay pr = march_pixel(field, cam, settings, static_cast<Index>(row), col);
      const RayRender rr = render_depth(pr.sigma, pr.samples);
      out.expected_depth(row, col) = rr.depth;
      out.opacity(row, col) = rr.opacity;
    }
  });
  return out;
}

DepthMap to_depth_map(const ViewRender& view) {
  const auto h = static_cast<int>(view.expected_depth.dim(0)), w = static_cast<int>(view.expected_depth.dim(1));
  DepthMap m = DepthMap::Invalid(h, w);
  m.accumulated_opacity = view.opacity;
  for (Index i = 0; i < view.expected_depth.size(); ++i) {
    if (view.opacity.data()[i] > 0.5) {
      m.valid[static_cast<std::size_t>(i)] = 1;
      m.depth.data()[i] = view.expected_depth.data()[i];
    }
  }
  return m;
}

DepthMap render_view(const DensityField& field, const Camera& cam, const RenderSettings& settings) {
  return to_depth_map(render_rays(field, cam, settings));
}

DenseTensor render_backward(const DensityField& field, const Camera& cam, const RenderSettings& settings,
                            const DenseTensor& grad_expected_depth) {
  settings.validate();
  if (grad_expected_depth.shape() != Shape{settings.height, settings.width})
    throw DimensionError("render_backward: gradient image does not match the render resolution");
  const auto& spec = field.spec;
  const Index ny = spec.dims[1], nz = spec.dims[2];
  const std::size_t rows = static_cast<std::size_t>(settings.height);
  std::vector<Eigen::VectorXd> partial(std::min(kBackwardChunks, rows));
  parallel_chunks(rows, partial.size(), [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(spec.num_voxels());
    for (std::size_t row = begin; row < end; ++row) {
      for (Index col = 0; col < settings.width; ++col) {
        const double g = grad_expected_depth(static_cast<Index>(row), col);
        if (g == 0.0) continue;
        const PixelRay pr = march_pixel(field, cam, settings, static_cast<Index>(row), col);
        const std::vector<double> dd = depth_grad_sigma(pr.sigma, pr.samples);
        for (std::size_t k = 0; k < pr.samples.size(); ++k) {
          const Eigen::Vector3d& p = pr.samples.positions[k];
          if (!inside_box(spec, p)) continue;
          const double gk = g * dd[k];
          const Eigen::Vector3d c = spec.lattice_coord(p);
          const Eigen::Vector3d f = c.array().floor();
          const Eigen::Vector3d a = c - f;
          for (int dx = 0; dx < 2; ++dx) {
            const Index x = static_cast<Index>(f.x()) + dx;
            if (x < 0 || x >= spec.dims[0]) continue;
            for (int dy = 0; dy < 2; ++dy) {
              const Index y = static_cast<Index>(f.y()) + dy;
              if (y < 0 || y >= ny) continue;
              for (int dz = 0; dz < 2; ++dz) {
                const Index z = static_cast<Index>(f.z()) + dz;
                if (z < 0 || z >= nz) continue;
                const double w = (dx ? a.x() : 1 - a.x()) * (dy ? a.y() : 1 - a.y()) * (dz ? a.z() : 1 - a.z());
                acc[(x * ny + y) * nz + z] += gk * w;
              }
            }
          }
        }
      }
    }
    partial[chunk] = std::move(acc);
  });
  DenseTensor grad({spec.dims[0], spec.dims[1], spec.dims[2]});
  for (const auto& p : partial)
    if (p.size()) grad.data() += p;
  return grad;
}

DensityField density_head(const DenseTensor& features, const DenseTensor& weights, const VoxelGridSpec& spec) {
  if (weights.rank() != 5 || weights.dim(0) != 1 || weights.dim(2) != 1)
    throw DimensionError("density head expects 1 x C x 1 x 1 x 1 weights");
  const DenseTensor logits = conv3d(features, weights, 1);
  DensityField field{DenseTensor({spec.dims[0], spec.dims[1], spec.dims[2]}), spec};
  if (logits.size() != field.sigma.size()) throw DimensionError("density head features do not match the grid");
  for (Index i = 0; i < logits.size(); ++i) field.sigma.data()[i] = softplus(logits.data()[i]);
  return field;
}

}  // namespace occgeom
