#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "occgeom/grid.hpp"
#include "occgeom/tensor.hpp"
#include "occgeom/view_transform.hpp"

namespace occgeom {

/// Self-attention restricted to non-overlapping windows of the voxel grid.
struct WindowedAttentionParams {
  std::array<Index, 3> window{2, 2, 2};
  DenseTensor bias;  // N_window x N_window, window-local x-major order
  DenseTensor wq;    // d x d
  DenseTensor wk;
  DenseTensor wv;

  Index dim() const { return wq.rank() == 2 ? wq.dim(0) : 0; }
  Index window_size() const { return window[0] * window[1] * window[2]; }
  void validate() const;

  /// Zero bias and projections; callers fill in what they need.
  static WindowedAttentionParams Zeros(std::array<Index, 3> window, Index d);
};

/// softmax(Q K^T / sqrt(d) + B) V inside each window. The grid is zero padded
/// up to a window multiple; padded voxels act as keys and are cropped from
/// the output.
OccupancyFeature windowed_attention(const OccupancyFeature& feat, const WindowedAttentionParams& params);

struct EncoderParams {
  std::vector<WindowedAttentionParams> attention;  // one per level
  std::vector<DenseTensor> downsample;             // one stride-2 kernel between consecutive levels
};

/// G_1 = attention(feat); G_{l+1} = attention(conv_s2(G_l)).
std::vector<OccupancyFeature> encode(const OccupancyFeature& feat, const EncoderParams& params);

struct SemanticQuerySet {
  DenseTensor x;           // N_q x C
  DenseTensor class_head;  // C x (K+1)
  DenseTensor mask_head;   // C x C_G

  Index count() const { return x.dim(0); }
};

/// Feed-forward block applied after masked attention:
/// LayerNorm(x + relu(x W1 + b1) W2 + b2).
struct QueryFfn {
  DenseTensor w1;  // C x 2C
  DenseTensor b1;  // 2C
  DenseTensor w2;  // 2C x C
  DenseTensor b2;  // C
};

struct DecoderLayerParams {
  DenseTensor fq;  // C x C
  DenseTensor fk;  // C_G x C
  DenseTensor fv;  // C_G x C
  std::optional<QueryFfn> ffn;
};

struct DecodeResult {
  DenseTensor x;                    // N_q x C
  DenseTensor class_logits;         // N_q x (K+1)
  DenseTensor mask_logits;          // N_q x V
  std::vector<std::uint8_t> masks;  // N_q x V, 1 where allowed (mask logit >= 0)
};

/// One masked cross-attention step of the queries over the voxels of G:
/// X' = softmax(f_q(X) f_k(G)^T + M) f_v(G) + X, with M = -inf where
/// prev_mask is 0. A query with every voxel masked keeps X unchanged.
DecodeResult masked_decode(const OccupancyFeature& g, const SemanticQuerySet& queries,
                           const std::vector<std::uint8_t>& prev_mask, const DecoderLayerParams& params);

/// Per-voxel class scores: for class k the maximum over queries whose argmax
/// class is k of p(k) * mask logit; the free class scores 0 and classes with
/// no query score the lowest double. Labels are the argmax (lower index wins).
SemanticOccupancy assemble_semantics(const DenseTensor& class_logits, const DenseTensor& mask_logits,
                                     const VoxelGridSpec& spec);

DenseTensor layer_norm_rows(const DenseTensor& x, double eps = 1e-5);

}  // namespace occgeom
