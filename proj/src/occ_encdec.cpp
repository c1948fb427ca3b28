#include "occgeom/occ_encdec.hpp"

#include <cmath>
#include <limits>

#include "occgeom/parallel.hpp"

namespace occgeom {

namespace {

using Mat = Eigen::MatrixXd;

// Row-wise softmax with -inf support; an all -inf row becomes zeros.
void softmax_rows(Mat& m) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    if (mx == kNegInf) {
      m.row(r).setZero();
      continue;
    }
    double sum = 0.0;
    for (Index c = 0; c < m.cols(); ++c) {
      const double e = m(r, c) == kNegInf ? 0.0 : std::exp(m(r, c) - mx);
      m(r, c) = e;
      sum += e;
    }
    m.row(r) /= sum;
  }
}

Mat to_mat(const DenseTensor& t) { return t.matrix(); }

// C x V feature volume as a V x C token matrix.
Mat tokens(const OccupancyFeature& f) {
  const Index c = f.channels(), v = f.spec.num_voxels();
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             f.data.data().data(), c, v)
      .transpose();
}

void require_matrix(const DenseTensor& t, Index rows, Index cols, const char* what) {
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols)
    throw DimensionError(std::string(what) + " must be " + std::to_string(rows) + " x " + std::to_string(cols));
}

}  // namespace

void WindowedAttentionParams::validate() const {
  const Index d = dim();
  if (d <= 0) throw DimensionError("windowed attention: projection dimension must be positive");
  for (Index w : window)
    if (w <= 0) throw DimensionError("windowed attention: window extents must be positive");
  require_matrix(wq, d, d, "Wq");
  require_matrix(wk, d, d, "Wk");
  require_matrix(wv, d, d, "Wv");
  require_matrix(bias, window_size(), window_size(), "window bias");
}

WindowedAttentionParams WindowedAttentionParams::Zeros(std::array<Index, 3> window, Index d) {
  WindowedAttentionParams p;
  p.window = window;
  const Index n = window[0] * window[1] * window[2];
  p.bias = DenseTensor({n, n});
  p.wq = DenseTensor({d, d});
  p.wk = DenseTensor({d, d});
  p.wv = DenseTensor({d, d});
  return p;
}

OccupancyFeature windowed_attention(const OccupancyFeature& feat, const WindowedAttentionParams& params) {
  params.validate();
  const Index d = params.dim();
  if (feat.channels() != d)
    throw DimensionError("windowed attention: feature has " + std::to_string(feat.channels()) +
                         " channels, projections expect " + std::to_string(d));
  const auto& dims = feat.spec.dims;
  const auto& win = params.window;
  std::array<Index, 3> blocks{};
  for (int a = 0; a < 3; ++a) blocks[a] = (dims[a] + win[a] - 1) / win[a];
  const Index n = params.window_size(), v = feat.spec.num_voxels();
  const Mat wq = to_mat(params.wq), wk = to_mat(params.wk), wv = to_mat(params.wv), bias = to_mat(params.bias);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& in = feat.data.data();

  OccupancyFeature out{DenseTensor(feat.data.shape()), feat.spec, feat.provenance};
  auto& res = out.data.data();
  const auto num_blocks = static_cast<std::size_t>(blocks[0] * blocks[1] * blocks[2]);
  parallel_for(num_blocks, [&](std::size_t b) {
    const Index bx = static_cast<Index>(b) / (blocks[1] * blocks[2]);
    const Index by = (static_cast<Index>(b) / blocks[2]) % blocks[1];
    const Index bz = static_cast<Index>(b) % blocks[2];
    std::vector<Index> flat(static_cast<std::size_t>(n), -1);
    Mat x = Mat::Zero(n, d);
    for (Index i = 0; i < win[0]; ++i)
      for (Index j = 0; j < win[1]; ++j)
        for (Index k = 0; k < win[2]; ++k) {
          const Index gx = bx * win[0] + i, gy = by * win[1] + j, gz = bz * win[2] + k;
          if (gx >= dims[0] || gy >= dims[1] || gz >= dims[2]) continue;
          const Index local = (i * win[1] + j) * win[2] + k;
          const Index f = feat.spec.flat_index(gx, gy, gz);
          flat[static_cast<std::size_t>(local)] = f;
          for (Index c = 0; c < d; ++c) x(local, c) = in[c * v + f];
        }
    const Mat q = x * wq, kk = x * wk, vv = x * wv;
    Mat logits = (q * kk.transpose()) * scale + bias;
    softmax_rows(logits);
    const Mat y = logits * vv;
    for (Index local = 0; local < n; ++local) {
      const Index f = flat[static_cast<std::size_t>(local)];
      if (f < 0) continue;
      for (Index c = 0; c < d; ++c) res[c * v + f] = y(local, c);
    }
  });
  return out;
}

std::vector<OccupancyFeature> encode(const OccupancyFeature& feat, const EncoderParams& params) {
  const std::size_t levels = params.attention.size();
  if (levels == 0) throw DimensionError("encode: at least one level is required");
  if (params.downsample.size() + 1 != levels)
    throw DimensionError("encode: need exactly one downsampling kernel between consecutive levels");
  const Index factor = Index{1} << (levels - 1);
  for (Index d : feat.spec.dims)
    if (d % factor != 0)
      throw DimensionError("encode: grid extents must be divisible by " + std::to_string(factor));

  std::vector<OccupancyFeature> out;
  out.push_back(windowed_attention(feat, params.attention[0]));
  for (std::size_t l = 1; l < levels; ++l) {
    const OccupancyFeature& prev = out.back();
    OccupancyFeature down{conv3d(prev.data, params.downsample[l - 1], 2), prev.spec.downsampled(),
                          FeatureProvenance::kCompressed};
    out.push_back(windowed_attention(down, params.attention[l]));
  }
  return out;
}

DenseTensor layer_norm_rows(const DenseTensor& x, double eps) {
  DenseTensor out(x.shape());
  auto m = out.matrix();
  const auto in = x.matrix();
  for (Index r = 0; r < in.rows(); ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    m.row(r) = (in.row(r).array() - mean) / std::sqrt(var + eps);
  }
  return out;
}

DecodeResult masked_decode(const OccupancyFeature& g, const SemanticQuerySet& queries,
                           const std::vector<std::uint8_t>& prev_mask, const DecoderLayerParams& params) {
  const Index nq = queries.count(), c = queries.x.dim(1), cg = g.channels(), v = g.spec.num_voxels();
  require_matrix(params.fq, c, c, "f_q");
  require_matrix(params.fk, cg, c, "f_k");
  require_matrix(params.fv, cg, c, "f_v");
  require_matrix(queries.mask_head, c, cg, "mask head");
  if (queries.class_head.rank() != 2 || queries.class_head.dim(0) != c)
    throw DimensionError("class head must have C rows");
  if (static_cast<Index>(prev_mask.size()) != nq * v)
    throw DimensionError("masked_decode: mask must hold one entry per query and voxel");

  const Mat x = to_mat(queries.x);
  const Mat gt = tokens(g);  // V x C_G
  const Mat q = x * to_mat(params.fq);
  const Mat k = gt * to_mat(params.fk);
  const Mat val = gt * to_mat(params.fv);
  Mat logits = q * k.transpose();
  for (Index i = 0; i < nq; ++i)
    for (Index j = 0; j < v; ++j)
      if (!prev_mask[static_cast<std::size_t>(i * v + j)]) logits(i, j) = -std::numeric_limits<double>::infinity();
  softmax_rows(logits);
  Mat xn = logits * val + x;

  if (params.ffn) {
    const auto& f = *params.ffn;
    require_matrix(f.w1, c, 2 * c, "FFN W1");
    require_matrix(f.w2, 2 * c, c, "FFN W2");
    if (f.b1.size() != 2 * c || f.b2.size() != c) throw DimensionError("FFN biases do not match the query width");
    Mat h = (xn * to_mat(f.w1)).rowwise() + f.b1.data().transpose();
    h = h.cwiseMax(0.0);
    Mat y = (h * to_mat(f.w2)).rowwise() + f.b2.data().transpose();
    DenseTensor pre({nq, c});
    pre.matrix() = xn + y;
    xn = to_mat(layer_norm_rows(pre));
  }

  DecodeResult r;
  r.x = DenseTensor({nq, c});
  r.x.matrix() = xn;
  r.class_logits = DenseTensor({nq, queries.class_head.dim(1)});
  r.class_logits.matrix() = xn * to_mat(queries.class_head);
  r.mask_logits = DenseTensor({nq, v});
  r.mask_logits.matrix() = (xn * to_mat(queries.mask_head)) * gt.transpose();
  r.masks.resize(static_cast<std::size_t>(nq * v));
  for (Index i = 0; i < nq * v; ++i) r.masks[static_cast<std::size_t>(i)] = r.mask_logits.data()[i] >= 0.0;
  return r;
}

SemanticOccupancy assemble_semantics(const DenseTensor& class_logits, const DenseTensor& mask_logits,
                                     const VoxelGridSpec& spec) {
  if (class_logits.rank() != 2 || class_logits.dim(1) < 2)
    throw DimensionError("class logits must be N_q x (K+1) with K >= 1");
  const Index nq = class_logits.dim(0), kp1 = class_logits.dim(1), v = spec.num_voxels();
  if (mask_logits.rank() != 2 || mask_logits.dim(0) != nq || mask_logits.dim(1) != v)
    throw DimensionError("mask logits must be N_q x V");
  const int k_free = static_cast<int>(kp1 - 1);

  const DenseTensor probs = softmax(class_logits, 1);
  std::vector<Index> cls(static_cast<std::size_t>(nq));
  std::vector<double> conf(static_cast<std::size_t>(nq));
  for (Index i = 0; i < nq; ++i) {
    Index best = 0;
    for (Index k = 1; k < kp1; ++k)
      if (class_logits(i, k) > class_logits(i, best)) best = k;
    cls[static_cast<std::size_t>(i)] = best;
    conf[static_cast<std::size_t>(i)] = probs(i, best);
  }

  SemanticOccupancy out = SemanticOccupancy::AllFree(spec, k_free);
  out.logits = DenseTensor::Constant({kp1, spec.dims[0], spec.dims[1], spec.dims[2]}, std::numeric_limits<double>::lowest());
  auto& lg = out.logits.data();
  lg.segment(k_free * v, v).setZero();
  for (Index i = 0; i < nq; ++i) {
    const Index k = cls[static_cast<std::size_t>(i)];
    if (k == k_free) continue;
    const double p = conf[static_cast<std::size_t>(i)];
    for (Index j = 0; j < v; ++j) lg[k * v + j] = std::max(lg[k * v + j], p * mask_logits(i, j));
  }
  for (Index j = 0; j < v; ++j) {
    Index best = 0;
    for (Index k = 1; k < kp1; ++k)
      if (lg[k * v + j] > lg[best * v + j]) best = k;
    out.labels[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace occgeom
