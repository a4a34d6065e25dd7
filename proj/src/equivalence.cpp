#include "acu/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace acu {

ExtrapolatedKernel extrapolate_weights(const AcuLayer& layer) {
  layer.validate();
  const ConvGeometry& g = layer.geometry;
  const std::size_t K = layer.synapses();

  long row_lo = std::numeric_limits<long>::max(), row_hi = std::numeric_limits<long>::min();
  long col_lo = row_lo, col_hi = row_hi;
  for (std::size_t grp = 0; grp < g.groups; ++grp) {
    for (std::size_t k = 0; k < K; ++k) {
      const Offset off = layer.offset(grp, k);
      const double fa = std::floor(off.alpha);
      const double fb = std::floor(off.beta);
      row_lo = std::min(row_lo, static_cast<long>(fa));
      col_lo = std::min(col_lo, static_cast<long>(fb));
      row_hi = std::max(row_hi, static_cast<long>(fa) + (off.alpha > fa ? 1 : 0));
      col_hi = std::max(col_hi, static_cast<long>(fb) + (off.beta > fb ? 1 : 0));
    }
  }

  ExtrapolatedKernel kernel;
  kernel.origin_row = -row_lo;
  kernel.origin_col = -col_lo;
  kernel.weights = Tensor4(g.out_channels, g.in_per_group(),
                           static_cast<std::size_t>(row_hi - row_lo + 1),
                           static_cast<std::size_t>(col_hi - col_lo + 1));

  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const std::size_t grp = g.group_of_output(o);
    for (std::size_t cl = 0; cl < g.in_per_group(); ++cl) {
      for (std::size_t k = 0; k < K; ++k) {
        const Offset off = layer.offset(grp, k);
        const double fa = std::floor(off.alpha);
        const double fb = std::floor(off.beta);
        const double da = off.alpha - fa;
        const double db = off.beta - fb;
        const double w = layer.weight(o, cl, k);
        const auto i1 = static_cast<std::size_t>(static_cast<long>(fa) + kernel.origin_row);
        const auto j1 = static_cast<std::size_t>(static_cast<long>(fb) + kernel.origin_col);
        kernel.weights(o, cl, i1, j1) += (1.0 - da) * (1.0 - db) * w;
        if (da > 0.0) kernel.weights(o, cl, i1 + 1, j1) += da * (1.0 - db) * w;
        if (db > 0.0) kernel.weights(o, cl, i1, j1 + 1) += (1.0 - da) * db * w;
        if (da > 0.0 && db > 0.0) kernel.weights(o, cl, i1 + 1, j1 + 1) += da * db * w;
      }
    }
  }
  return kernel;
}

Tensor4 conv_with_extrapolated(const Tensor4& x, const ExtrapolatedKernel& kernel,
                               const ConvGeometry& geometry, Parallelism par) {
  geometry.validate();
  if (x.c() != geometry.in_channels) {
    throw std::invalid_argument("input channels do not match geometry");
  }
  const std::size_t out_h = (x.h() + 2 * geometry.pad_h - 1) / geometry.stride_h + 1;
  const std::size_t out_w = (x.w() + 2 * geometry.pad_w - 1) / geometry.stride_w + 1;
  return dense_conv_anchored(x, kernel.weights, {}, geometry,
                             -static_cast<long>(geometry.pad_h) - kernel.origin_row,
                             -static_cast<long>(geometry.pad_w) - kernel.origin_col, out_h, out_w,
                             par);
}

void add_channel_bias(Tensor4& y, std::span<const double> bias) {
  if (bias.size() != y.c()) throw std::invalid_argument("bias size does not match channels");
  for (std::size_t n = 0; n < y.n(); ++n) {
    for (std::size_t c = 0; c < y.c(); ++c) {
      for (double& v : y.plane(n, c)) v += bias[c];
    }
  }
}

SparsityReport sparsity_report(const ExtrapolatedKernel& kernel) {
  const Tensor4& w = kernel.weights;
  SparsityReport r;
  r.taps = w.h() * w.w();
  std::vector<bool> support(r.taps, false);
  for (std::size_t o = 0; o < w.n(); ++o) {
    for (std::size_t c = 0; c < w.c(); ++c) {
      std::size_t slice = 0;
      for (std::size_t i = 0; i < w.h(); ++i) {
        for (std::size_t j = 0; j < w.w(); ++j) {
          if (w(o, c, i, j) != 0.0) {
            ++slice;
            support[i * w.w() + j] = true;
          }
        }
      }
      r.max_slice_nonzeros = std::max(r.max_slice_nonzeros, slice);
    }
  }
  std::size_t i_lo = w.h(), i_hi = 0, j_lo = w.w(), j_hi = 0;
  for (std::size_t i = 0; i < w.h(); ++i) {
    for (std::size_t j = 0; j < w.w(); ++j) {
      if (!support[i * w.w() + j]) continue;
      ++r.nonzeros;
      i_lo = std::min(i_lo, i);
      i_hi = std::max(i_hi, i);
      j_lo = std::min(j_lo, j);
      j_hi = std::max(j_hi, j);
    }
  }
  if (r.nonzeros > 0) {
    r.extent_h = i_hi - i_lo + 1;
    r.extent_w = j_hi - j_lo + 1;
  }
  r.density = r.taps == 0 ? 0.0 : static_cast<double>(r.nonzeros) / static_cast<double>(r.taps);
  r.within_7x7 = r.extent_h <= 7 && r.extent_w <= 7;
  return r;
}

std::string sparsity_csv_header() { return "layer,extent_h,extent_w,nonzeros,density\n"; }

std::string sparsity_csv_row(const std::string& layer, const SparsityReport& report) {
  return fmt::format("{},{},{},{},{:.17g}\n", layer, report.extent_h, report.extent_w,
                     report.nonzeros, report.density);
}

}  // namespace acu
