#include "occgeom/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace occgeom {

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (Index e : shape)
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
}

void require_same_shape(const DenseTensor& a, const DenseTensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_ = Eigen::VectorXd::Zero(shape_size(shape_));
}

DenseTensor::DenseTensor(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

DenseTensor::DenseTensor(Shape shape, std::initializer_list<double> values)
    : DenseTensor(std::move(shape),
                  Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Index>(values.size()))) {}

DenseTensor DenseTensor::Constant(Shape shape, double value) {
  DenseTensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

DenseTensor DenseTensor::Identity(Index n) {
  DenseTensor t({n, n});
  t.matrix().setIdentity();
  return t;
}

Index DenseTensor::dim(Index axis) const {
  if (axis < 0 || axis >= rank()) throw DimensionError("axis out of range");
  return shape_[axis];
}

Index DenseTensor::offset(std::span<const Index> index) const {
  if (static_cast<Index>(index.size()) != rank()) throw DimensionError("index rank mismatch");
  Index off = 0;
  for (std::size_t a = 0; a < index.size(); ++a) {
    if (index[a] < 0 || index[a] >= shape_[a]) throw DimensionError("index out of range");
    off = off * shape_[a] + index[a];
  }
  return off;
}

DenseTensor DenseTensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return DenseTensor(std::move(shape), data_);
}

MatrixMap DenseTensor::matrix() {
  if (rank() != 2) throw DimensionError("matrix view needs a rank-2 tensor, got " + shape_str(shape_));
  return MatrixMap(data_.data(), shape_[0], shape_[1]);
}

ConstMatrixMap DenseTensor::matrix() const {
  if (rank() != 2) throw DimensionError("matrix view needs a rank-2 tensor, got " + shape_str(shape_));
  return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
}

DenseTensor operator+(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "add");
  return DenseTensor(a.shape(), a.data() + b.data());
}

DenseTensor operator-(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "subtract");
  return DenseTensor(a.shape(), a.data() - b.data());
}

DenseTensor operator*(double s, const DenseTensor& a) { return DenseTensor(a.shape(), s * a.data()); }

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects rank-2 operands");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  DenseTensor out({a.dim(0), b.dim(1)});
  out.matrix().noalias() = a.matrix() * b.matrix();
  return out;
}

DenseTensor softmax(const DenseTensor& x, Index axis) {
  if (axis < 0 || axis >= x.rank()) throw DimensionError("softmax axis out of range");
  const Index n = x.dim(axis);
  Index inner = 1;
  for (Index a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const Index outer = x.size() / (n * inner);

  DenseTensor out(x.shape());
  const auto& in = x.data();
  auto& res = out.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * n * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index k = 0; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked slice
      double sum = 0.0;
      for (Index k = 0; k < n; ++k) {
        const double v = in[base + k * inner];
        const double e = v == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(v - mx);
        res[base + k * inner] = e;
        sum += e;
      }
      for (Index k = 0; k < n; ++k) res[base + k * inner] /= sum;
    }
  }
  return out;
}

bool bilinear_lookup(const DenseTensor& img, double u, double v, std::span<double> out) {
  const Index h = img.dim(0), w = img.dim(1), c = img.dim(2);
  std::fill(out.begin(), out.end(), 0.0);
  // Coordinates within rounding distance of the border are snapped onto it.
  constexpr double kSnap = 1e-9;
  const double umax = static_cast<double>(w - 1), vmax = static_cast<double>(h - 1);
  if (!(u >= -kSnap && v >= -kSnap && u <= umax + kSnap && v <= vmax + kSnap)) return false;
  u = std::clamp(u, 0.0, umax);
  v = std::clamp(v, 0.0, vmax);
  const Index x0 = std::min<Index>(static_cast<Index>(std::floor(u)), w - 1);
  const Index y0 = std::min<Index>(static_cast<Index>(std::floor(v)), h - 1);
  const Index x1 = std::min<Index>(x0 + 1, w - 1);
  const Index y1 = std::min<Index>(y0 + 1, h - 1);
  const double fx = u - static_cast<double>(x0);
  const double fy = v - static_cast<double>(y0);
  const double* d = img.data().data();
  const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
  for (Index ch = 0; ch < c; ++ch) {
    out[ch] = w00 * d[(y0 * w + x0) * c + ch] + w01 * d[(y0 * w + x1) * c + ch] +
              w10 * d[(y1 * w + x0) * c + ch] + w11 * d[(y1 * w + x1) * c + ch];
  }
  return true;
}

SampledFeatures bilinear_sample(const DenseTensor& img, const DenseTensor& uv) {
  if (img.rank() != 3) throw DimensionError("bilinear_sample expects an H x W x C image");
  if (uv.rank() != 2 || uv.dim(1) != 2) throw DimensionError("bilinear_sample expects N x 2 coordinates");
  const Index n = uv.dim(0), c = img.dim(2);
  SampledFeatures s{DenseTensor({n, c}), std::vector<bool>(static_cast<std::size_t>(n))};
  for (Index i = 0; i < n; ++i) {
    std::span<double> row(s.values.data().data() + i * c, static_cast<std::size_t>(c));
    s.valid[static_cast<std::size_t>(i)] = bilinear_lookup(img, uv(i, 0), uv(i, 1), row);
  }
  return s;
}

double trilinear_lookup(const DenseTensor& volume, const Eigen::Vector3d& coord) {
  const Index nx = volume.dim(0), ny = volume.dim(1), nz = volume.dim(2);
  const double fx = std::floor(coord.x()), fy = std::floor(coord.y()), fz = std::floor(coord.z());
  const Index x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy), z0 = static_cast<Index>(fz);
  const double ax = coord.x() - fx, ay = coord.y() - fy, az = coord.z() - fz;
  const double* d = volume.data().data();
  double acc = 0.0;
  for (int dx = 0; dx < 2; ++dx) {
    const Index x = x0 + dx;
    if (x < 0 || x >= nx) continue;
    const double wx = dx ? ax : 1 - ax;
    for (int dy = 0; dy < 2; ++dy) {
      const Index y = y0 + dy;
      if (y < 0 || y >= ny) continue;
      const double wy = dy ? ay : 1 - ay;
      for (int dz = 0; dz < 2; ++dz) {
        const Index z = z0 + dz;
        if (z < 0 || z >= nz) continue;
        const double wz = dz ? az : 1 - az;
        acc += wx * wy * wz * d[(x * ny + y) * nz + z];
      }
    }
  }
  return acc;
}

DenseTensor conv3d(const DenseTensor& x, const DenseTensor& w, int stride) {
  if (x.rank() != 4) throw DimensionError("conv3d input must be C x X x Y x Z");
  if (w.rank() != 5) throw DimensionError("conv3d weights must be C' x C x k x k x k");
  if (stride < 1) throw DomainError("conv3d stride must be >= 1");
  const Index c_in = x.dim(0), c_out = w.dim(0), k = w.dim(2);
  if (w.dim(1) != c_in)
    throw DimensionError("conv3d channel mismatch: input has " + std::to_string(c_in) + ", kernel expects " +
                         std::to_string(w.dim(1)));
  if (w.dim(3) != k || w.dim(4) != k || k % 2 == 0) throw DimensionError("conv3d kernel must be cubic and odd");
  const Index nx = x.dim(1), ny = x.dim(2), nz = x.dim(3);
  const Index pad = k / 2;
  const Index ox = (nx + stride - 1) / stride, oy = (ny + stride - 1) / stride, oz = (nz + stride - 1) / stride;
  DenseTensor out({c_out, ox, oy, oz});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  double* od = out.data().data();
  for (Index co = 0; co < c_out; ++co) {
    for (Index i = 0; i < ox; ++i) {
      for (Index j = 0; j < oy; ++j) {
        for (Index l = 0; l < oz; ++l) {
          double acc = 0.0;
          for (Index ci = 0; ci < c_in; ++ci) {
            const double* wk = wd + (co * c_in + ci) * k * k * k;
            const double* xc = xd + ci * nx * ny * nz;
            for (Index a = 0; a < k; ++a) {
              const Index px = i * stride + a - pad;
              if (px < 0 || px >= nx) continue;
              for (Index b = 0; b < k; ++b) {
                const Index py = j * stride + b - pad;
                if (py < 0 || py >= ny) continue;
                for (Index e = 0; e < k; ++e) {
                  const Index pz = l * stride + e - pad;
                  if (pz < 0 || pz >= nz) continue;
                  acc += wk[(a * k + b) * k + e] * xc[(px * ny + py) * nz + pz];
                }
              }
            }
          }
          od[((co * ox + i) * oy + j) * oz + l] = acc;
        }
      }
    }
  }
  return out;
}

DenseTensor concat_channels(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 4 || b.rank() != 4) throw DimensionError("concat_channels expects C x X x Y x Z tensors");
  for (Index ax = 1; ax < 4; ++ax)
    if (a.dim(ax) != b.dim(ax))
      throw DimensionError("concat_channels spatial mismatch " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  DenseTensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
  out.data().head(a.size()) = a.data();
  out.data().tail(b.size()) = b.data();
  return out;
}

double grad_check(const ScalarFunction& f, const DenseTensor& x, const DenseTensor& analytic_grad, double eps) {
  if (x.shape() != analytic_grad.shape()) throw DimensionError("grad_check: gradient shape differs from x");
  if (!(eps > 0.0)) throw DomainError("grad_check: eps must be positive");
  DenseTensor probe = x;
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double fp = f(probe);
    probe.data()[i] = orig - eps;
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: f is not finite near x");
    const double fd = (fp - fm) / (2.0 * eps);
    const double g = analytic_grad.data()[i];
    worst = std::max(worst, std::abs(fd - g) / (std::abs(g) + 1e-8));
  }
  return worst;
}

}  // namespace occgeom
