#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "occgeom/errors.hpp"

namespace occgeom {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

using RowMajorMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrixXd>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrixXd>;

Index shape_size(const Shape& shape);

/// Dense real array of arbitrary rank stored row-major (last axis fastest).
///
/// A default-constructed tensor is empty (rank 0, no elements) and is only a
/// placeholder; every operation requires tensors built from a shape.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, Eigen::VectorXd data);
  DenseTensor(Shape shape, std::initializer_list<double> values);

  static DenseTensor Constant(Shape shape, double value);
  static DenseTensor Identity(Index n);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  const Eigen::VectorXd& data() const { return data_; }
  Eigen::VectorXd& data() { return data_; }

  Index offset(std::span<const Index> index) const;

  template <typename... I>
  double& operator()(I... idx) {
    const std::array<Index, sizeof...(I)> index{static_cast<Index>(idx)...};
    return data_[offset(index)];
  }
  template <typename... I>
  double operator()(I... idx) const {
    const std::array<Index, sizeof...(I)> index{static_cast<Index>(idx)...};
    return data_[offset(index)];
  }

  DenseTensor reshaped(Shape shape) const;

  /// View of a rank-2 tensor as a row-major Eigen matrix.
  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  bool all_finite() const { return data_.allFinite(); }

 private:
  Shape shape_;
  Eigen::VectorXd data_;
};

DenseTensor operator+(const DenseTensor& a, const DenseTensor& b);
DenseTensor operator-(const DenseTensor& a, const DenseTensor& b);
DenseTensor operator*(double s, const DenseTensor& a);

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);

/// Numerically stable softmax along `axis`. Entries equal to -inf receive
/// exactly zero weight; a slice that is entirely -inf yields all zeros.
DenseTensor softmax(const DenseTensor& x, Index axis);

struct SampledFeatures {
  DenseTensor values;       // N x C
  std::vector<bool> valid;  // false where the sample fell outside the image
};

/// Bilinear lookup in an H x W x C image at continuous pixel coordinates
/// uv (column, row); integer coordinates address pixel centres exactly.
SampledFeatures bilinear_sample(const DenseTensor& img, const DenseTensor& uv);

/// Bilinear lookup of one location, writing C values into `out`.
/// Returns false (and zeros) when (u, v) is outside [0, W-1] x [0, H-1].
bool bilinear_lookup(const DenseTensor& img, double u, double v, std::span<double> out);

/// Trilinear interpolation of a X x Y x Z lattice at continuous lattice
/// coordinates. Lattice values outside the grid are treated as zero.
double trilinear_lookup(const DenseTensor& volume, const Eigen::Vector3d& coord);

/// Channel-first 3D cross-correlation, x: C x X x Y x Z, w: C' x C x k x k x k,
/// zero padding k/2, output extents ceil(n / stride).
DenseTensor conv3d(const DenseTensor& x, const DenseTensor& w, int stride);

/// Channel concatenation of two C x X x Y x Z tensors (a first).
DenseTensor concat_channels(const DenseTensor& a, const DenseTensor& b);

using ScalarFunction = std::function<double(const DenseTensor&)>;

/// Largest relative discrepancy between central differences of `f` and an
/// analytic gradient: max_i |fd_i - g_i| / (|g_i| + 1e-8).
double grad_check(const ScalarFunction& f, const DenseTensor& x, const DenseTensor& analytic_grad,
                  double eps);

}  // namespace occgeom
