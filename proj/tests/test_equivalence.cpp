#include <gtest/gtest.h>

#include <cmath>

#include "acu/equivalence.hpp"
#include "acu/verify.hpp"

using namespace acu;

namespace {

ConvGeometry geom(std::size_t c, std::size_t groups) {
  ConvGeometry g;
  g.in_channels = g.out_channels = c;
  g.groups = groups;
  return g;
}

AcuLayer single_synapse(double w, Offset p) {
  AcuLayer layer = AcuLayer::zeros(geom(1, 1), 2);
  layer.weights[0] = 0.0;
  layer.weights[1] = w;
  layer.positions.set(0, 1, p);
  return layer;
}

}  // namespace

TEST(Extrapolate, IntegerGridPlacesWeightsOnGrid) {
  Rng rng(1);
  AcuLayer layer = AcuLayer::zeros(geom(2, 1), 9);
  layer.positions = make_grid_positions(3, 3, 1, 1);
  layer.weights = random_tensor(layer.weights.shape(), rng);
  const ExtrapolatedKernel k = extrapolate_weights(layer);
  ASSERT_EQ(k.extent_h(), 3u);
  ASSERT_EQ(k.extent_w(), 3u);
  EXPECT_EQ(k.origin_row, 1);
  EXPECT_EQ(k.origin_col, 1);
  const auto taps = grid_tap_order(3, 3);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t s = 0; s < 9; ++s)
        EXPECT_EQ(k.weights(o, c, taps[s].first, taps[s].second), layer.weights(o, c, 0, s));
}

TEST(Extrapolate, HalfPixelSynapseSpreadsQuarterWeights) {
  // Lone synapse at (0.5, 0.5) with weight 1; the pinned origin carries 0.
  AcuLayer layer = single_synapse(1.0, {0.5, 0.5});
  const ExtrapolatedKernel k = extrapolate_weights(layer);
  ASSERT_EQ(k.extent_h(), 2u);
  ASSERT_EQ(k.extent_w(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(k.weights(0, 0, i, j), 0.25);
  const SparsityReport r = sparsity_report(k);
  EXPECT_EQ(r.nonzeros, 4u);
  EXPECT_EQ(r.extent_h, 2u);
  EXPECT_EQ(r.extent_w, 2u);
}

TEST(Extrapolate, OverlapsAccumulate) {
  // p0 = (0,0) w = 1 and p1 = (0.5, 0) w = 2.
  AcuLayer layer = AcuLayer::zeros(geom(1, 1), 2);
  layer.weights[0] = 1.0;
  layer.weights[1] = 2.0;
  layer.positions.set(0, 1, {0.5, 0.0});
  const ExtrapolatedKernel k = extrapolate_weights(layer);
  ASSERT_EQ(k.extent_h(), 2u);
  ASSERT_EQ(k.extent_w(), 1u);
  EXPECT_DOUBLE_EQ(k.weights(0, 0, 0, 0), 2.0);
  EXPECT_DOUBLE_EQ(k.weights(0, 0, 1, 0), 1.0);
}

TEST(Extrapolate, NegativeOffsetsMoveOrigin) {
  AcuLayer layer = single_synapse(1.0, {-1.25, 2.0});
  const ExtrapolatedKernel k = extrapolate_weights(layer);
  // rows -2..0, cols 0..2
  EXPECT_EQ(k.origin_row, 2);
  EXPECT_EQ(k.origin_col, 0);
  EXPECT_EQ(k.extent_h(), 3u);
  EXPECT_EQ(k.extent_w(), 3u);
  EXPECT_DOUBLE_EQ(k.weights(0, 0, 0, 2), 0.25);
  EXPECT_DOUBLE_EQ(k.weights(0, 0, 1, 2), 0.75);
}

TEST(ConvWithExtrapolated, IntegerGridEqualsNaive) {
  Rng rng(2);
  DenseConv conv{geom(2, 1), random_tensor({2, 2, 3, 3}, rng), {0.0, 0.0}};
  conv.geometry.pad_h = conv.geometry.pad_w = 1;
  const AcuLayer layer = embed_conv(conv);
  const Tensor4 x = random_tensor({1, 2, 5, 5}, rng);
  const Tensor4 y = conv_with_extrapolated(x, extrapolate_weights(layer), layer.geometry);
  EXPECT_LE(max_abs_diff(y, naive_conv_forward(x, conv)), 1e-12);
}

TEST(ConvWithExtrapolated, RandomGroupedLayerMatchesAcu) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    RandomLayerSpec spec;
    spec.geometry = geom(4, 2);
    spec.synapses = 5;
    spec.int_lo = -3;
    spec.int_hi = 2;
    spec.frac_lo = 0.0;
    spec.frac_hi = 1.0;
    spec.geometry.stride_h = 1 + rng.below(2);
    spec.geometry.pad_w = rng.below(2);
    const AcuLayer layer = random_acu_layer(spec, rng);
    const Tensor4 x = random_tensor({2, 4, 7, 6}, rng);
    Tensor4 y = conv_with_extrapolated(x, extrapolate_weights(layer), layer.geometry);
    add_channel_bias(y, layer.bias);
    EXPECT_LE(max_abs_diff(y, acu_forward(x, layer)), 1e-10);
  }
}

TEST(ConvWithExtrapolated, ZeroInputGivesZero) {
  Rng rng(4);
  RandomLayerSpec spec;
  spec.geometry = geom(2, 2);
  spec.synapses = 3;
  const AcuLayer layer = random_acu_layer(spec, rng);
  const Tensor4 y = conv_with_extrapolated(Tensor4(1, 2, 4, 4), extrapolate_weights(layer),
                                           layer.geometry);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvWithExtrapolated, ShapeMismatchThrows) {
  const AcuLayer layer = AcuLayer::zeros(geom(2, 1), 2);
  EXPECT_THROW(conv_with_extrapolated(Tensor4(1, 3, 4, 4), extrapolate_weights(layer), layer.geometry),
               std::invalid_argument);
}

TEST(Extrapolate, MassConservationAndTapBound) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    RandomLayerSpec spec;
    const std::size_t groups = 1 + rng.below(3);
    spec.geometry = geom(groups * 2, groups);
    spec.synapses = 1 + rng.below(9);
    spec.int_lo = -3;
    spec.int_hi = 2;
    spec.frac_lo = 0.0;
    spec.frac_hi = 1.0;
    const AcuLayer layer = random_acu_layer(spec, rng);
    const ExtrapolatedKernel k = extrapolate_weights(layer);
    for (std::size_t o = 0; o < k.weights.n(); ++o)
      for (std::size_t c = 0; c < k.weights.c(); ++c) {
        double tap_sum = 0.0, syn_sum = 0.0;
        std::size_t nz = 0;
        for (std::size_t i = 0; i < k.extent_h(); ++i)
          for (std::size_t j = 0; j < k.extent_w(); ++j) {
            tap_sum += k.weights(o, c, i, j);
            nz += k.weights(o, c, i, j) != 0.0;
          }
        for (std::size_t s = 0; s < spec.synapses; ++s) syn_sum += layer.weight(o, c, s);
        EXPECT_NEAR(tap_sum, syn_sum, 1e-12);
        EXPECT_LE(nz, 4 * spec.synapses);
      }
  }
}

TEST(Sparsity, DenseGrid) {
  AcuLayer layer = AcuLayer::zeros(geom(1, 1), 9);
  layer.positions = make_grid_positions(3, 3, 1, 1);
  layer.weights.fill(1.0);
  const SparsityReport r = sparsity_report(extrapolate_weights(layer));
  EXPECT_EQ(r.nonzeros, 9u);
  EXPECT_EQ(r.extent_h, 3u);
  EXPECT_EQ(r.extent_w, 3u);
  EXPECT_DOUBLE_EQ(r.density, 1.0);
  EXPECT_TRUE(r.within_7x7);
}

TEST(Sparsity, RandomPositionsStayWithinCeilBound) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    AcuLayer layer = AcuLayer::zeros(geom(1, 1), 9);
    for (std::size_t k = 0; k < 9; ++k) layer.weights[k] = rng.uniform(0.5, 1.5);
    for (std::size_t k = 1; k < 9; ++k)
      layer.positions.set(0, k, {rng.uniform(-3, 3), rng.uniform(-3, 3)});
    const SparsityReport r = sparsity_report(extrapolate_weights(layer));
    EXPECT_LE(r.extent_h, 8u);
    EXPECT_LE(r.extent_w, 8u);
    EXPECT_LE(r.nonzeros, 36u);
    EXPECT_LE(r.max_slice_nonzeros, 36u);
  }
}

TEST(Sparsity, CsvRow) {
  SparsityReport r;
  r.extent_h = 2;
  r.extent_w = 3;
  r.nonzeros = 5;
  r.density = 0.5;
  EXPECT_EQ(sparsity_csv_header(), "layer,extent_h,extent_w,nonzeros,density\n");
  EXPECT_EQ(sparsity_csv_row("acu1", r), "acu1,2,3,5,0.5\n");
}
