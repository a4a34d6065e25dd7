#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "acu/parallel.hpp"
#include "acu/tensor.hpp"

namespace acu {

/// Synapse displacement. alpha moves along rows (first spatial index),
/// beta along columns.
struct Offset {
  double alpha = 0.0;
  double beta = 0.0;
  bool operator==(const Offset&) const = default;
};

/// K displacements for each of `sets` position sets. Synapse 0 of every set
/// is pinned to (0, 0) and is not stored; the free values are laid out as
/// [set][k - 1][alpha, beta] so optimizers can treat them as one flat block.
class PositionSet {
 public:
  PositionSet() = default;
  PositionSet(std::size_t sets, std::size_t synapses);
  /// `offsets` holds sets * synapses entries in [set][k] order; every k == 0
  /// entry must be exactly (0, 0).
  static PositionSet from_offsets(std::size_t synapses, std::span<const Offset> offsets);

  std::size_t sets() const { return sets_; }
  std::size_t synapses() const { return synapses_; }
  std::size_t free_count() const { return free_.size(); }

  Offset at(std::size_t set, std::size_t k) const;
  void set(std::size_t set, std::size_t k, Offset value);

  std::span<double> free_values() { return free_; }
  std::span<const double> free_values() const { return free_; }
  std::vector<Offset> all_offsets() const;

  bool operator==(const PositionSet&) const = default;

 private:
  std::size_t index(std::size_t set, std::size_t k) const;

  std::size_t sets_ = 0;
  std::size_t synapses_ = 0;
  std::vector<double> free_;
};

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t groups = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t group_of_output(std::size_t o) const { return o / out_per_group(); }
  /// Throws std::invalid_argument unless every count is >= 1 and groups
  /// divides both channel counts.
  void validate() const;
  bool operator==(const ConvGeometry&) const = default;
};

enum class GroupMode { multi_position, shared_position };

std::string to_string(GroupMode mode);
GroupMode parse_group_mode(const std::string& text);

/// Convolution whose taps sit at learnable fractional displacements.
///
/// Output (m, n) anchors at input (m * stride_h - pad_h, n * stride_w - pad_w)
/// and each synapse samples the anchor plus its offset with bilinear
/// interpolation; lattice points outside the image read as zero. With zero
/// padding and unit stride the output has the input's spatial size.
struct AcuLayer {
  ConvGeometry geometry;
  Tensor4 weights;  ///< (C_O, C_I / G, 1, K)
  std::vector<double> bias;
  PositionSet positions;  ///< G sets (multi) or 1 set (shared)
  GroupMode mode = GroupMode::multi_position;

  /// Zero weights/bias, all offsets at the origin.
  static AcuLayer zeros(const ConvGeometry& geometry, std::size_t synapses,
                        GroupMode mode = GroupMode::multi_position);

  std::size_t synapses() const { return weights.w(); }
  std::size_t position_set_of_group(std::size_t g) const {
    return mode == GroupMode::shared_position ? 0 : g;
  }
  Offset offset(std::size_t group, std::size_t k) const {
    return positions.at(position_set_of_group(group), k);
  }
  double weight(std::size_t o, std::size_t c_in_group, std::size_t k) const {
    return weights(o, c_in_group, 0, k);
  }

  void validate() const;
  Shape4 output_shape(const Shape4& input) const;
};

struct AcuGradients {
  Tensor4 d_weights;
  std::vector<double> d_bias;
  PositionSet d_positions;  ///< same layout as the layer's positions; synapse 0 has no slot
  Tensor4 d_input;
};

/// Ordinary (optionally grouped) convolution with weights (C_O, C_I / G, KH, KW).
struct DenseConv {
  ConvGeometry geometry;
  Tensor4 weights;
  std::vector<double> bias;

  std::size_t kernel_h() const { return weights.h(); }
  std::size_t kernel_w() const { return weights.w(); }
  void validate() const;
  Shape4 output_shape(const Shape4& input) const;
};

struct DenseConvGradients {
  Tensor4 d_weights;
  std::vector<double> d_bias;
  Tensor4 d_input;
};

/// Bilinear read of x[n, c] at a fractional (row, col) with zero extension.
double bilinear_sample(const Tensor4& x, std::size_t n, std::size_t c, double row, double col);

Tensor4 naive_conv_forward(const Tensor4& x, const DenseConv& conv, Parallelism par = {});
DenseConvGradients naive_conv_backward(const Tensor4& x, const DenseConv& conv,
                                       const Tensor4& d_out, Parallelism par = {});

/// Grouped dense convolution where output (m, n) reads
/// x[m * s_h + anchor_row + i, n * s_w + anchor_col + j] for kernel tap (i, j).
/// Geometry padding is ignored; the anchors carry it. Empty bias means none.
Tensor4 dense_conv_anchored(const Tensor4& x, const Tensor4& weights, std::span<const double> bias,
                            const ConvGeometry& geometry, long anchor_row, long anchor_col,
                            std::size_t out_h, std::size_t out_w, Parallelism par = {});

Tensor4 acu_forward(const Tensor4& x, const AcuLayer& layer, Parallelism par = {});
/// Single-precision path for timing runs; parameters are rounded to float.
Tensor4f acu_forward(const Tensor4f& x, const AcuLayer& layer, Parallelism par = {});

/// Exact gradients of sum(d_out * acu_forward(x, layer)). Per-(batch, group)
/// partial sums are reduced in partition order, so the result does not depend
/// on the thread count.
AcuGradients acu_backward(const Tensor4& x, const AcuLayer& layer, const Tensor4& d_out,
                          Parallelism par = {});

/// Kernel taps of a kh x kw grid in synapse order: center first, then the
/// remaining taps row-major. Entries are (row, col) tap indices.
std::vector<std::pair<std::size_t, std::size_t>> grid_tap_order(std::size_t kernel_h,
                                                                 std::size_t kernel_w);

/// Integer grid offsets scaled by `dilation`, one copy per set.
PositionSet make_grid_positions(std::size_t kernel_h, std::size_t kernel_w, std::size_t dilation,
                                std::size_t sets);

/// Embeds an odd-sized dense convolution as an ACU on its integer grid.
/// Requires pad >= kernel / 2 on both axes so the anchor stays non-negative.
AcuLayer embed_conv(const DenseConv& conv);

}  // namespace acu
