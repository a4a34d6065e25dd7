#pragma once

#include <cstddef>
#include <string>

#include "acu/ops.hpp"

namespace acu {

/// Dense kernel that reproduces an ACU layer as an ordinary convolution.
/// Tap (i, j) of `weights` corresponds to displacement
/// (i - origin_row, j - origin_col) from the output anchor.
struct ExtrapolatedKernel {
  Tensor4 weights;  ///< (C_O, C_I / G, KH, KW)
  long origin_row = 0;
  long origin_col = 0;

  std::size_t extent_h() const { return weights.h(); }
  std::size_t extent_w() const { return weights.w(); }
};

/// Spreads every synapse weight onto its four lattice neighbours with the
/// bilinear coefficients and sums overlapping contributions. The extent is the
/// tight bounding box of all touched taps across every group.
ExtrapolatedKernel extrapolate_weights(const AcuLayer& layer);

/// Dense convolution with the extrapolated kernel, anchored the same way as
/// the ACU it came from. Bias is not part of the kernel and is not applied.
Tensor4 conv_with_extrapolated(const Tensor4& x, const ExtrapolatedKernel& kernel,
                               const ConvGeometry& geometry, Parallelism par = {});

/// Adds bias[c] to every value of channel c.
void add_channel_bias(Tensor4& y, std::span<const double> bias);

struct SparsityReport {
  std::size_t taps = 0;       ///< KH * KW
  std::size_t nonzeros = 0;   ///< spatial taps nonzero in at least one (o, c) slice
  double density = 0.0;       ///< nonzeros / taps
  std::size_t extent_h = 0;   ///< bounding box of the nonzero taps
  std::size_t extent_w = 0;
  std::size_t max_slice_nonzeros = 0;
  bool within_7x7 = false;
};

SparsityReport sparsity_report(const ExtrapolatedKernel& kernel);

std::string sparsity_csv_header();
std::string sparsity_csv_row(const std::string& layer, const SparsityReport& report);

}  // namespace acu
