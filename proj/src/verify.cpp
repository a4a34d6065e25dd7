#include "acu/verify.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "acu/equivalence.hpp"

namespace acu {

Tensor4 oracle_acu_forward(const Tensor4& x, const AcuLayer& layer) {
  layer.validate();
  const ConvGeometry& g = layer.geometry;
  const Shape4 os = layer.output_shape(x.shape());
  Tensor4 y(os);
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t o = 0; o < os.c; ++o) {
      const std::size_t grp = g.group_of_output(o);
      for (std::size_t m = 0; m < os.h; ++m) {
        for (std::size_t q = 0; q < os.w; ++q) {
          double acc = 0.0;
          for (std::size_t cl = 0; cl < g.in_per_group(); ++cl) {
            const std::size_t c = grp * g.in_per_group() + cl;
            for (std::size_t k = 0; k < layer.synapses(); ++k) {
              const Offset off = layer.offset(grp, k);
              const double row = static_cast<double>(m * g.stride_h) -
                                 static_cast<double>(g.pad_h) + off.alpha;
              const double col = static_cast<double>(q * g.stride_w) -
                                 static_cast<double>(g.pad_w) + off.beta;
              acc += layer.weight(o, cl, k) * bilinear_sample(x, n, c, row, col);
            }
          }
          y(n, o, m, q) = acc + layer.bias[o];
        }
      }
    }
  }
  return y;
}

namespace {

/// sum(d_out * (y_plus - y_minus)) / 2h. Differencing elementwise before the
/// reduction lets outputs the perturbation does not touch cancel exactly.
double fd_slope(const Tensor4& d_out, const Tensor4& y_plus, const Tensor4& y_minus, double h) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < d_out.size(); ++i) {
    s += static_cast<long double>(d_out[i]) * (y_plus[i] - y_minus[i]);
  }
  return static_cast<double>(s / (2.0L * h));
}

template <typename Perturb>
double probe(const Tensor4& d_out, double h, Perturb&& forward_at) {
  const Tensor4 yp = forward_at(+h);
  const Tensor4 ym = forward_at(-h);
  return fd_slope(d_out, yp, ym, h);
}

}  // namespace

AcuGradients finite_diff_gradients(const Tensor4& x, const AcuLayer& layer, const Tensor4& d_out,
                                   double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  layer.validate();
  const std::size_t K = layer.synapses();
  AcuGradients grads{Tensor4(layer.weights.shape()), std::vector<double>(layer.bias.size(), 0.0),
                     PositionSet(layer.positions.sets(), K), Tensor4(x.shape())};

  AcuLayer work = layer;
  for (std::size_t i = 0; i < layer.weights.size(); ++i) {
    grads.d_weights[i] = probe(d_out, h, [&](double e) {
      work.weights[i] = layer.weights[i] + e;
      Tensor4 y = acu_forward(x, work);
      work.weights[i] = layer.weights[i];
      return y;
    });
  }
  for (std::size_t i = 0; i < layer.bias.size(); ++i) {
    grads.d_bias[i] = probe(d_out, h, [&](double e) {
      work.bias[i] = layer.bias[i] + e;
      Tensor4 y = acu_forward(x, work);
      work.bias[i] = layer.bias[i];
      return y;
    });
  }
  auto free = work.positions.free_values();
  const auto base = layer.positions.free_values();
  auto dpos = grads.d_positions.free_values();
  for (std::size_t i = 0; i < free.size(); ++i) {
    dpos[i] = probe(d_out, h, [&](double e) {
      free[i] = base[i] + e;
      Tensor4 y = acu_forward(x, work);
      free[i] = base[i];
      return y;
    });
  }
  Tensor4 xw = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    grads.d_input[i] = probe(d_out, h, [&](double e) {
      xw[i] = x[i] + e;
      Tensor4 y = acu_forward(xw, layer);
      xw[i] = x[i];
      return y;
    });
  }
  return grads;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

GradCheckReport compare_span(std::span<const double> a, std::span<const double> f,
                             double tolerance, const std::string& case_name,
                             const std::string& parameter) {
  GradCheckReport r;
  r.case_name = case_name;
  r.parameter = parameter;
  r.count = a.size();
  if (a.size() != f.size()) {
    r.passed = false;
    r.max_rel_error = INFINITY;
    return r;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double rel = relative_error(a[i], f[i]);
    const double abs_err = std::abs(a[i] - f[i]);
    if (!(rel <= r.max_rel_error)) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
  }
  r.passed = r.max_rel_error <= tolerance;
  return r;
}

}  // namespace

std::vector<GradCheckReport> compare_gradients(const AcuGradients& analytic,
                                               const AcuGradients& numeric, double tolerance,
                                               const std::string& case_name) {
  return {
      compare_span(analytic.d_weights.data(), numeric.d_weights.data(), tolerance, case_name,
                   "weights"),
      compare_span(analytic.d_bias, numeric.d_bias, tolerance, case_name, "bias"),
      compare_span(analytic.d_positions.free_values(), numeric.d_positions.free_values(),
                   tolerance, case_name, "positions"),
      compare_span(analytic.d_input.data(), numeric.d_input.data(), tolerance, case_name,
                   "input"),
  };
}

Tensor4 random_tensor(Shape4 shape, Rng& rng, double lo, double hi) {
  Tensor4 t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

AcuLayer random_acu_layer(const RandomLayerSpec& spec, Rng& rng) {
  AcuLayer layer = AcuLayer::zeros(spec.geometry, spec.synapses, spec.mode);
  const double scale =
      std::sqrt(2.0 / static_cast<double>(spec.geometry.in_per_group() * spec.synapses));
  for (double& w : layer.weights.data()) w = scale * rng.normal();
  for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
  const auto span = static_cast<std::uint64_t>(spec.int_hi - spec.int_lo + 1);
  auto free = layer.positions.free_values();
  for (double& v : free) {
    const double ip = static_cast<double>(spec.int_lo + static_cast<long>(rng.below(span)));
    v = ip + rng.uniform(spec.frac_lo, spec.frac_hi);
  }
  return layer;
}

namespace {

struct SuiteCase {
  const char* name;
  std::size_t channels;
  std::size_t groups;
  std::size_t synapses;
  GroupMode mode;
};

constexpr SuiteCase kSuiteCases[] = {
    {"g1_k9", 2, 1, 9, GroupMode::multi_position},
    {"g2_k5", 4, 2, 5, GroupMode::multi_position},
    {"depthwise_c4_k3", 4, 4, 3, GroupMode::multi_position},
    {"shared_g2_k5", 4, 2, 5, GroupMode::shared_position},
};

}  // namespace

std::vector<GradCheckReport> run_gradient_suite(std::uint64_t seed, std::size_t trials,
                                                const GradientSuiteOptions& options) {
  if (trials == 0) throw std::invalid_argument("gradient suite needs trials >= 1");
  const BackwardFn backward =
      options.backward ? options.backward
                       : BackwardFn([](const Tensor4& x, const AcuLayer& l, const Tensor4& d) {
                           return acu_backward(x, l, d);
                         });
  std::vector<GradCheckReport> reports;
  for (std::size_t t = 0; t < trials; ++t) {
    for (const SuiteCase& sc : kSuiteCases) {
      Rng rng(seed, fmt::format("gradcheck/{}/{}", t, sc.name));
      RandomLayerSpec spec;
      spec.geometry.in_channels = sc.channels;
      spec.geometry.out_channels = sc.channels;
      spec.geometry.groups = sc.groups;
      spec.synapses = sc.synapses;
      spec.mode = sc.mode;
      const AcuLayer layer = random_acu_layer(spec, rng);
      const Tensor4 x = random_tensor({2, sc.channels, 5, 5}, rng);
      const Tensor4 d_out = random_tensor(layer.output_shape(x.shape()), rng);
      const AcuGradients analytic = backward(x, layer, d_out);
      const AcuGradients numeric = finite_diff_gradients(x, layer, d_out, options.step);
      auto part = compare_gradients(analytic, numeric, options.tolerance,
                                    fmt::format("t{}/{}", t, sc.name));
      reports.insert(reports.end(), part.begin(), part.end());
    }
  }
  return reports;
}

bool all_passed(const std::vector<GradCheckReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const GradCheckReport& r) { return r.passed; });
}

std::string format_report_table(const std::vector<GradCheckReport>& reports) {
  std::string out = fmt::format("{:<24} {:<10} {:>6} {:>12} {:>12} {:>6}  {}\n", "case",
                                "param", "count", "max_rel", "max_abs", "worst", "status");
  for (const auto& r : reports) {
    out += fmt::format("{:<24} {:<10} {:>6} {:>12.3e} {:>12.3e} {:>6}  {}\n", r.case_name,
                       r.parameter, r.count, r.max_rel_error, r.max_abs_error, r.worst_index,
                       r.passed ? "PASS" : "FAIL");
  }
  return out;
}

std::string reports_to_csv(const std::vector<GradCheckReport>& reports) {
  std::string out = "case,parameter,count,max_rel_error,max_abs_error,worst_index,passed\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{:.17g},{:.17g},{},{}\n", r.case_name, r.parameter, r.count,
                       r.max_rel_error, r.max_abs_error, r.worst_index, r.passed ? 1 : 0);
  }
  return out;
}

EquivalenceSweep run_equivalence_sweep(std::uint64_t seed, std::size_t trials, Parallelism par) {
  struct GroupCase {
    std::size_t in, out, groups;
  };
  constexpr GroupCase kGroups[] = {{3, 4, 1}, {4, 6, 2}, {8, 4, 4}, {6, 6, 6}};
  constexpr std::size_t kSynapses[] = {1, 3, 5, 9};
  EquivalenceSweep result;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed, fmt::format("equivalence/{}", t));
    const GroupCase gc = kGroups[t % 4];
    RandomLayerSpec spec;
    spec.geometry = {gc.in, gc.out, gc.groups, 1 + (t / 16) % 2, 1 + (t / 32) % 2, (t / 8) % 2, 0};
    spec.synapses = kSynapses[(t / 4) % 4];
    spec.mode = (t / 16) % 3 == 2 ? GroupMode::shared_position : GroupMode::multi_position;
    spec.int_lo = -3;
    spec.int_hi = 2;
    spec.frac_lo = 0.0;
    spec.frac_hi = 1.0;
    const AcuLayer layer = random_acu_layer(spec, rng);
    const Tensor4 x = random_tensor({2, gc.in, 7, 8}, rng);
    const Tensor4 direct = acu_forward(x, layer, par);
    Tensor4 lowered = conv_with_extrapolated(x, extrapolate_weights(layer), layer.geometry, par);
    add_channel_bias(lowered, layer.bias);
    result.max_diff = std::max(result.max_diff, max_abs_diff(direct, lowered));
    ++result.layers;
  }
  return result;
}

}  // namespace acu
