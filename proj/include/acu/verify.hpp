#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acu/ops.hpp"
#include "acu/rng.hpp"

namespace acu {

/// Literal nested-loop evaluation of the ACU sum, one bilinear_sample call per
/// (output, channel, synapse) term. No reuse, no reordering.
Tensor4 oracle_acu_forward(const Tensor4& x, const AcuLayer& layer);

/// Central differences of L = sum(d_out * acu_forward(x, layer)) for every
/// weight, bias, free position and input scalar.
AcuGradients finite_diff_gradients(const Tensor4& x, const AcuLayer& layer, const Tensor4& d_out,
                                   double h);

/// (f(x + h) - f(x - h)) / 2h.
double central_difference(const std::function<double(double)>& f, double x, double h);

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckReport {
  std::string case_name;
  std::string parameter;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t count = 0;
  bool passed = true;
};

std::vector<GradCheckReport> compare_gradients(const AcuGradients& analytic,
                                               const AcuGradients& numeric, double tolerance,
                                               const std::string& case_name);

using BackwardFn =
    std::function<AcuGradients(const Tensor4&, const AcuLayer&, const Tensor4&)>;

struct GradientSuiteOptions {
  double tolerance = 1e-5;
  double step = 1e-6;
  BackwardFn backward;  ///< defaults to acu_backward when empty
};

/// Analytic vs finite-difference battery over (G=1, K=9), (G=2, K=5),
/// depthwise (G=C=4, K=3) and a shared-position (G=2, K=5) layer. Offsets keep
/// their fractional parts in [0.2, 0.8] so no sample sits on a lattice kink.
std::vector<GradCheckReport> run_gradient_suite(std::uint64_t seed, std::size_t trials,
                                                const GradientSuiteOptions& options = {});

bool all_passed(const std::vector<GradCheckReport>& reports);
std::string format_report_table(const std::vector<GradCheckReport>& reports);
std::string reports_to_csv(const std::vector<GradCheckReport>& reports);

/// Random layer for property tests: He-scale weights, random bias, offsets
/// with integer part in [int_lo, int_hi] and fractional part in
/// [frac_lo, frac_hi].
struct RandomLayerSpec {
  ConvGeometry geometry;
  std::size_t synapses = 1;
  GroupMode mode = GroupMode::multi_position;
  long int_lo = -2;
  long int_hi = 1;
  double frac_lo = 0.2;
  double frac_hi = 0.8;
};
AcuLayer random_acu_layer(const RandomLayerSpec& spec, Rng& rng);
Tensor4 random_tensor(Shape4 shape, Rng& rng, double lo = -1.0, double hi = 1.0);

struct EquivalenceSweep {
  std::size_t layers = 0;
  double max_diff = 0.0;  ///< max |acu_forward - (conv_with_extrapolated + bias)|
};

/// Random layers cycling through G in {1, 2, 4, depthwise}, K in {1, 3, 5, 9},
/// both group modes and a few strides/paddings, with offsets in [-3, 3)^2.
EquivalenceSweep run_equivalence_sweep(std::uint64_t seed, std::size_t trials,
                                       Parallelism par = {});

}  // namespace acu
