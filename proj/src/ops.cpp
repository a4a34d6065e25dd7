#include "acu/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace acu {

// ---- PositionSet -------------------------------------------------------------

PositionSet::PositionSet(std::size_t sets, std::size_t synapses)
    : sets_(sets), synapses_(synapses) {
  if (sets == 0 || synapses == 0) {
    throw std::invalid_argument("PositionSet needs >= 1 set and >= 1 synapse");
  }
  free_.assign(sets * (synapses - 1) * 2, 0.0);
}

PositionSet PositionSet::from_offsets(std::size_t synapses, std::span<const Offset> offsets) {
  if (synapses == 0 || offsets.empty() || offsets.size() % synapses != 0) {
    throw std::invalid_argument("offset count " + std::to_string(offsets.size()) +
                                " is not a positive multiple of K=" + std::to_string(synapses));
  }
  PositionSet ps(offsets.size() / synapses, synapses);
  for (std::size_t s = 0; s < ps.sets_; ++s) {
    for (std::size_t k = 0; k < synapses; ++k) ps.set(s, k, offsets[s * synapses + k]);
  }
  return ps;
}

std::size_t PositionSet::index(std::size_t set, std::size_t k) const {
  if (set >= sets_ || k >= synapses_) {
    throw std::out_of_range("position (" + std::to_string(set) + "," + std::to_string(k) +
                            ") out of range");
  }
  return (set * (synapses_ - 1) + (k - 1)) * 2;
}

Offset PositionSet::at(std::size_t set, std::size_t k) const {
  if (k == 0) {
    if (set >= sets_) throw std::out_of_range("position set out of range");
    return {};
  }
  const std::size_t i = index(set, k);
  return {free_[i], free_[i + 1]};
}

void PositionSet::set(std::size_t set, std::size_t k, Offset value) {
  if (!std::isfinite(value.alpha) || !std::isfinite(value.beta)) {
    throw std::invalid_argument("position offsets must be finite");
  }
  if (k == 0) {
    if (set >= sets_) throw std::out_of_range("position set out of range");
    if (value != Offset{}) {
      throw std::invalid_argument("synapse 0 is pinned at (0, 0)");
    }
    return;
  }
  const std::size_t i = index(set, k);
  free_[i] = value.alpha;
  free_[i + 1] = value.beta;
}

std::vector<Offset> PositionSet::all_offsets() const {
  std::vector<Offset> out;
  out.reserve(sets_ * synapses_);
  for (std::size_t s = 0; s < sets_; ++s) {
    for (std::size_t k = 0; k < synapses_; ++k) out.push_back(at(s, k));
  }
  return out;
}

// ---- geometry ------------------------------------------------------------------

void ConvGeometry::validate() const {
  if (in_channels == 0 || out_channels == 0 || groups == 0) {
    throw std::invalid_argument("channel and group counts must be >= 1");
  }
  if (stride_h == 0 || stride_w == 0) throw std::invalid_argument("stride must be >= 1");
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw std::invalid_argument("groups=" + std::to_string(groups) + " must divide C_I=" +
                                std::to_string(in_channels) + " and C_O=" +
                                std::to_string(out_channels));
  }
}

std::string to_string(GroupMode mode) {
  return mode == GroupMode::shared_position ? "shared" : "multi";
}

GroupMode parse_group_mode(const std::string& text) {
  if (text == "multi" || text == "multi-position") return GroupMode::multi_position;
  if (text == "shared" || text == "shared-position") return GroupMode::shared_position;
  throw std::invalid_argument("unknown group_mode '" + text + "' (expected multi or shared)");
}

AcuLayer AcuLayer::zeros(const ConvGeometry& geometry, std::size_t synapses, GroupMode mode) {
  geometry.validate();
  AcuLayer layer;
  layer.geometry = geometry;
  layer.mode = mode;
  layer.weights = Tensor4(geometry.out_channels, geometry.in_per_group(), 1, synapses);
  layer.bias.assign(geometry.out_channels, 0.0);
  layer.positions =
      PositionSet(mode == GroupMode::shared_position ? 1 : geometry.groups, synapses);
  return layer;
}

void AcuLayer::validate() const {
  geometry.validate();
  const Shape4 expect{geometry.out_channels, geometry.in_per_group(), 1, positions.synapses()};
  if (weights.shape() != expect) {
    throw std::invalid_argument("ACU weights " + weights.shape().str() + " do not match " +
                                expect.str());
  }
  if (bias.size() != geometry.out_channels) {
    throw std::invalid_argument("ACU bias has " + std::to_string(bias.size()) +
                                " entries, expected " + std::to_string(geometry.out_channels));
  }
  const std::size_t sets = mode == GroupMode::shared_position ? 1 : geometry.groups;
  if (positions.sets() != sets) {
    throw std::invalid_argument("ACU has " + std::to_string(positions.sets()) +
                                " position sets, " + to_string(mode) + " mode with G=" +
                                std::to_string(geometry.groups) + " needs " +
                                std::to_string(sets));
  }
}

namespace {

std::size_t out_extent(std::size_t in, std::size_t pad, std::size_t kernel, std::size_t stride) {
  if (in + 2 * pad < kernel) {
    throw std::invalid_argument("kernel extent " + std::to_string(kernel) +
                                " exceeds padded input " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

void require_input(const Shape4& in, const ConvGeometry& g) {
  if (in.c != g.in_channels) {
    throw std::invalid_argument("input has " + std::to_string(in.c) + " channels, layer expects " +
                                std::to_string(g.in_channels));
  }
}

}  // namespace

Shape4 AcuLayer::output_shape(const Shape4& input) const {
  require_input(input, geometry);
  return {input.n, geometry.out_channels,
          out_extent(input.h, geometry.pad_h, 1, geometry.stride_h),
          out_extent(input.w, geometry.pad_w, 1, geometry.stride_w)};
}

void DenseConv::validate() const {
  geometry.validate();
  if (weights.n() != geometry.out_channels || weights.c() != geometry.in_per_group()) {
    throw std::invalid_argument("conv weights " + weights.shape().str() +
                                " do not match geometry (C_O=" +
                                std::to_string(geometry.out_channels) + ", C_I/G=" +
                                std::to_string(geometry.in_per_group()) + ")");
  }
  if (bias.size() != geometry.out_channels) {
    throw std::invalid_argument("conv bias size mismatch");
  }
}

Shape4 DenseConv::output_shape(const Shape4& input) const {
  require_input(input, geometry);
  return {input.n, geometry.out_channels,
          out_extent(input.h, geometry.pad_h, kernel_h(), geometry.stride_h),
          out_extent(input.w, geometry.pad_w, kernel_w(), geometry.stride_w)};
}

// ---- bilinear sampling -------------------------------------------------------

namespace {

/// Bilinear stencil for one synapse. Because anchors are integers the
/// fractional parts are the same at every output location.
struct Stencil {
  long row_floor;
  long col_floor;
  double da;
  double db;
  double w11, w21, w12, w22;

  explicit Stencil(Offset off) {
    const double fa = std::floor(off.alpha);
    const double fb = std::floor(off.beta);
    row_floor = static_cast<long>(fa);
    col_floor = static_cast<long>(fb);
    da = off.alpha - fa;
    db = off.beta - fb;
    w11 = (1.0 - da) * (1.0 - db);
    w21 = da * (1.0 - db);
    w12 = (1.0 - da) * db;
    w22 = da * db;
  }
};

template <typename T>
struct Corners {
  T q11 = 0, q21 = 0, q12 = 0, q22 = 0;
};

template <typename T>
Corners<T> corners(std::span<const T> plane, long h, long w, long r1, long c1) {
  Corners<T> q;
  const bool r1_ok = r1 >= 0 && r1 < h;
  const bool r2_ok = r1 + 1 >= 0 && r1 + 1 < h;
  const bool c1_ok = c1 >= 0 && c1 < w;
  const bool c2_ok = c1 + 1 >= 0 && c1 + 1 < w;
  if (r1_ok && c1_ok) q.q11 = plane[r1 * w + c1];
  if (r2_ok && c1_ok) q.q21 = plane[(r1 + 1) * w + c1];
  if (r1_ok && c2_ok) q.q12 = plane[r1 * w + c1 + 1];
  if (r2_ok && c2_ok) q.q22 = plane[(r1 + 1) * w + c1 + 1];
  return q;
}

}  // namespace

double bilinear_sample(const Tensor4& x, std::size_t n, std::size_t c, double row, double col) {
  const double fr = std::floor(row);
  const double fc = std::floor(col);
  const double da = row - fr;
  const double db = col - fc;
  const auto q = corners<double>(x.plane(n, c), static_cast<long>(x.h()),
                                 static_cast<long>(x.w()), static_cast<long>(fr),
                                 static_cast<long>(fc));
  return q.q11 * (1.0 - da) * (1.0 - db) + q.q21 * da * (1.0 - db) + q.q12 * (1.0 - da) * db +
         q.q22 * da * db;
}

// ---- dense convolution -------------------------------------------------------

Tensor4 dense_conv_anchored(const Tensor4& x, const Tensor4& weights, std::span<const double> bias,
                            const ConvGeometry& g, long anchor_row, long anchor_col,
                            std::size_t out_h, std::size_t out_w, Parallelism par) {
  g.validate();
  require_input(x.shape(), g);
  if (weights.n() != g.out_channels || weights.c() != g.in_per_group()) {
    throw std::invalid_argument("dense kernel " + weights.shape().str() +
                                " does not match geometry");
  }
  if (!bias.empty() && bias.size() != g.out_channels) {
    throw std::invalid_argument("bias size mismatch");
  }
  Tensor4 y(x.n(), g.out_channels, out_h, out_w);
  const long H = static_cast<long>(x.h());
  const long W = static_cast<long>(x.w());
  const std::size_t cig = g.in_per_group();
  const std::size_t kh = weights.h();
  const std::size_t kw = weights.w();

  parallel_for(x.n() * g.out_channels, par, [&](std::size_t part) {
    const std::size_t n = part / g.out_channels;
    const std::size_t o = part % g.out_channels;
    const std::size_t grp = g.group_of_output(o);
    auto out = y.plane(n, o);
    for (std::size_t m = 0; m < out_h; ++m) {
      for (std::size_t q = 0; q < out_w; ++q) {
        double acc = 0.0;
        for (std::size_t cl = 0; cl < cig; ++cl) {
          const auto in = x.plane(n, grp * cig + cl);
          for (std::size_t i = 0; i < kh; ++i) {
            const long r = static_cast<long>(m * g.stride_h) + anchor_row + static_cast<long>(i);
            if (r < 0 || r >= H) continue;
            for (std::size_t j = 0; j < kw; ++j) {
              const long cc =
                  static_cast<long>(q * g.stride_w) + anchor_col + static_cast<long>(j);
              if (cc < 0 || cc >= W) continue;
              acc += weights(o, cl, i, j) * in[r * W + cc];
            }
          }
        }
        out[m * out_w + q] = acc + (bias.empty() ? 0.0 : bias[o]);
      }
    }
  });
  return y;
}

Tensor4 naive_conv_forward(const Tensor4& x, const DenseConv& conv, Parallelism par) {
  conv.validate();
  const Shape4 os = conv.output_shape(x.shape());
  return dense_conv_anchored(x, conv.weights, conv.bias, conv.geometry,
                             -static_cast<long>(conv.geometry.pad_h),
                             -static_cast<long>(conv.geometry.pad_w), os.h, os.w, par);
}

DenseConvGradients naive_conv_backward(const Tensor4& x, const DenseConv& conv,
                                       const Tensor4& d_out, Parallelism par) {
  conv.validate();
  const ConvGeometry& g = conv.geometry;
  const Shape4 os = conv.output_shape(x.shape());
  if (d_out.shape() != os) {
    throw std::invalid_argument("d_out " + d_out.shape().str() + " does not match output " +
                                os.str());
  }
  const long H = static_cast<long>(x.h());
  const long W = static_cast<long>(x.w());
  const std::size_t cig = g.in_per_group();
  const std::size_t og = g.out_per_group();
  const std::size_t kh = conv.kernel_h();
  const std::size_t kw = conv.kernel_w();
  const long ph = static_cast<long>(g.pad_h);
  const long pw = static_cast<long>(g.pad_w);

  DenseConvGradients grads{Tensor4(conv.weights.shape()), std::vector<double>(g.out_channels, 0.0),
                           Tensor4(x.shape())};
  // Partition over (batch, group); weight partials reduced in partition order.
  const std::size_t parts = x.n() * g.groups;
  std::vector<std::vector<double>> dw_part(parts);
  std::vector<std::vector<double>> db_part(parts);
  const std::size_t wslice = og * cig * kh * kw;

  parallel_for(parts, par, [&](std::size_t part) {
    const std::size_t n = part / g.groups;
    const std::size_t grp = part % g.groups;
    auto& dw = dw_part[part];
    auto& db = db_part[part];
    dw.assign(wslice, 0.0);
    db.assign(og, 0.0);
    for (std::size_t ol = 0; ol < og; ++ol) {
      const std::size_t o = grp * og + ol;
      const auto go = d_out.plane(n, o);
      for (std::size_t m = 0; m < os.h; ++m) {
        for (std::size_t q = 0; q < os.w; ++q) {
          const double gv = go[m * os.w + q];
          db[ol] += gv;
          if (gv == 0.0) continue;
          for (std::size_t cl = 0; cl < cig; ++cl) {
            const std::size_t c = grp * cig + cl;
            const auto in = x.plane(n, c);
            auto din = grads.d_input.plane(n, c);
            for (std::size_t i = 0; i < kh; ++i) {
              const long r = static_cast<long>(m * g.stride_h) - ph + static_cast<long>(i);
              if (r < 0 || r >= H) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const long cc = static_cast<long>(q * g.stride_w) - pw + static_cast<long>(j);
                if (cc < 0 || cc >= W) continue;
                dw[((ol * cig + cl) * kh + i) * kw + j] += gv * in[r * W + cc];
                din[r * W + cc] += gv * conv.weights(o, cl, i, j);
              }
            }
          }
        }
      }
    }
  });

  for (std::size_t part = 0; part < parts; ++part) {
    const std::size_t grp = part % g.groups;
    for (std::size_t i = 0; i < wslice; ++i) {
      grads.d_weights[grp * wslice + i] += dw_part[part][i];
    }
    for (std::size_t ol = 0; ol < og; ++ol) grads.d_bias[grp * og + ol] += db_part[part][ol];
  }
  return grads;
}

// ---- ACU ---------------------------------------------------------------------

namespace {

/// Fills col[(cl * K + k) * P + p] with the bilinear samples of every input
/// channel of `grp` at every synapse and output location. Each input channel
/// is interpolated once per synapse, independent of the output width.
template <typename T>
void gather_samples(const BasicTensor4<T>& x, const AcuLayer& layer, std::size_t n,
                    std::size_t grp, std::size_t out_h, std::size_t out_w, std::vector<T>& col) {
  const ConvGeometry& g = layer.geometry;
  const std::size_t cig = g.in_per_group();
  const std::size_t K = layer.synapses();
  const std::size_t P = out_h * out_w;
  const long H = static_cast<long>(x.h());
  const long W = static_cast<long>(x.w());
  col.assign(cig * K * P, T(0));
  for (std::size_t k = 0; k < K; ++k) {
    const Stencil st(layer.offset(grp, k));
    const T w11 = static_cast<T>(st.w11), w21 = static_cast<T>(st.w21);
    const T w12 = static_cast<T>(st.w12), w22 = static_cast<T>(st.w22);
    for (std::size_t cl = 0; cl < cig; ++cl) {
      const auto plane = x.plane(n, grp * cig + cl);
      T* dst = col.data() + (cl * K + k) * P;
      for (std::size_t m = 0; m < out_h; ++m) {
        const long r1 = static_cast<long>(m * g.stride_h) - static_cast<long>(g.pad_h) +
                        st.row_floor;
        for (std::size_t q = 0; q < out_w; ++q) {
          const long c1 = static_cast<long>(q * g.stride_w) - static_cast<long>(g.pad_w) +
                          st.col_floor;
          const auto c = corners<T>(plane, H, W, r1, c1);
          dst[m * out_w + q] = c.q11 * w11 + c.q21 * w21 + c.q12 * w12 + c.q22 * w22;
        }
      }
    }
  }
}

template <typename T>
BasicTensor4<T> acu_forward_impl(const BasicTensor4<T>& x, const AcuLayer& layer,
                                 Parallelism par) {
  layer.validate();
  const Shape4 os = layer.output_shape(x.shape());
  const ConvGeometry& g = layer.geometry;
  const std::size_t cig = g.in_per_group();
  const std::size_t og = g.out_per_group();
  const std::size_t K = layer.synapses();
  const std::size_t P = os.h * os.w;
  BasicTensor4<T> y(os);

  parallel_for(x.n() * g.groups, par, [&](std::size_t part) {
    const std::size_t n = part / g.groups;
    const std::size_t grp = part % g.groups;
    std::vector<T> col;
    gather_samples(x, layer, n, grp, os.h, os.w, col);
    for (std::size_t ol = 0; ol < og; ++ol) {
      const std::size_t o = grp * og + ol;
      auto out = y.plane(n, o);
      std::fill(out.begin(), out.end(), T(0));
      for (std::size_t cl = 0; cl < cig; ++cl) {
        for (std::size_t k = 0; k < K; ++k) {
          const T wv = static_cast<T>(layer.weight(o, cl, k));
          const T* src = col.data() + (cl * K + k) * P;
          for (std::size_t p = 0; p < P; ++p) out[p] += wv * src[p];
        }
      }
      const T b = static_cast<T>(layer.bias[o]);
      for (T& v : out) v += b;
    }
  });
  return y;
}

}  // namespace

Tensor4 acu_forward(const Tensor4& x, const AcuLayer& layer, Parallelism par) {
  return acu_forward_impl(x, layer, par);
}

Tensor4f acu_forward(const Tensor4f& x, const AcuLayer& layer, Parallelism par) {
  return acu_forward_impl(x, layer, par);
}

AcuGradients acu_backward(const Tensor4& x, const AcuLayer& layer, const Tensor4& d_out,
                          Parallelism par) {
  layer.validate();
  const Shape4 os = layer.output_shape(x.shape());
  if (d_out.shape() != os) {
    throw std::invalid_argument("d_out " + d_out.shape().str() + " does not match output " +
                                os.str());
  }
  const ConvGeometry& g = layer.geometry;
  const std::size_t cig = g.in_per_group();
  const std::size_t og = g.out_per_group();
  const std::size_t K = layer.synapses();
  const std::size_t P = os.h * os.w;
  const long H = static_cast<long>(x.h());
  const long W = static_cast<long>(x.w());

  AcuGradients grads{Tensor4(layer.weights.shape()), std::vector<double>(g.out_channels, 0.0),
                     PositionSet(layer.positions.sets(), K), Tensor4(x.shape())};

  const std::size_t parts = x.n() * g.groups;
  const std::size_t wslice = og * cig * K;
  struct Partial {
    std::vector<double> dw, db, dpos;  // dpos: [k][alpha, beta]
  };
  std::vector<Partial> partials(parts);

  parallel_for(parts, par, [&](std::size_t part) {
    const std::size_t n = part / g.groups;
    const std::size_t grp = part % g.groups;
    Partial& acc = partials[part];
    acc.dw.assign(wslice, 0.0);
    acc.db.assign(og, 0.0);
    acc.dpos.assign(K * 2, 0.0);

    std::vector<double> col;
    gather_samples(x, layer, n, grp, os.h, os.w, col);

    // Gradient w.r.t. the sampled values, dcol = W^T d_out for this group.
    std::vector<double> dcol(cig * K * P, 0.0);
    for (std::size_t ol = 0; ol < og; ++ol) {
      const std::size_t o = grp * og + ol;
      const auto go = d_out.plane(n, o);
      double bsum = 0.0;
      for (std::size_t p = 0; p < P; ++p) bsum += go[p];
      acc.db[ol] = bsum;
      for (std::size_t cl = 0; cl < cig; ++cl) {
        for (std::size_t k = 0; k < K; ++k) {
          const double* src = col.data() + (cl * K + k) * P;
          double* dst = dcol.data() + (cl * K + k) * P;
          const double wv = layer.weight(o, cl, k);
          double dw = 0.0;
          for (std::size_t p = 0; p < P; ++p) {
            dw += go[p] * src[p];
            dst[p] += wv * go[p];
          }
          acc.dw[(ol * cig + cl) * K + k] = dw;
        }
      }
    }

    // Scatter through the bilinear stencil into d_input and the positions.
    for (std::size_t k = 0; k < K; ++k) {
      const Stencil st(layer.offset(grp, k));
      double da_sum = 0.0;
      double db_sum = 0.0;
      for (std::size_t cl = 0; cl < cig; ++cl) {
        const std::size_t c = grp * cig + cl;
        const auto plane = x.plane(n, c);
        auto din = grads.d_input.plane(n, c);
        const double* gsrc = dcol.data() + (cl * K + k) * P;
        for (std::size_t m = 0; m < os.h; ++m) {
          const long r1 = static_cast<long>(m * g.stride_h) - static_cast<long>(g.pad_h) +
                          st.row_floor;
          const bool r1_ok = r1 >= 0 && r1 < H;
          const bool r2_ok = r1 + 1 >= 0 && r1 + 1 < H;
          for (std::size_t q = 0; q < os.w; ++q) {
            const double gv = gsrc[m * os.w + q];
            if (gv == 0.0) continue;
            const long c1 = static_cast<long>(q * g.stride_w) - static_cast<long>(g.pad_w) +
                            st.col_floor;
            const bool c1_ok = c1 >= 0 && c1 < W;
            const bool c2_ok = c1 + 1 >= 0 && c1 + 1 < W;
            if (r1_ok && c1_ok) din[r1 * W + c1] += gv * st.w11;
            if (r2_ok && c1_ok) din[(r1 + 1) * W + c1] += gv * st.w21;
            if (r1_ok && c2_ok) din[r1 * W + c1 + 1] += gv * st.w12;
            if (r2_ok && c2_ok) din[(r1 + 1) * W + c1 + 1] += gv * st.w22;
            if (k == 0) continue;
            const auto qv = corners<double>(plane, H, W, r1, c1);
            da_sum += gv * ((qv.q21 - qv.q11) * (1.0 - st.db) + (qv.q22 - qv.q12) * st.db);
            db_sum += gv * ((qv.q12 - qv.q11) * (1.0 - st.da) + (qv.q22 - qv.q21) * st.da);
          }
        }
      }
      acc.dpos[2 * k] = da_sum;
      acc.dpos[2 * k + 1] = db_sum;
    }
  });

  auto dpos = grads.d_positions.free_values();
  for (std::size_t part = 0; part < parts; ++part) {
    const std::size_t grp = part % g.groups;
    const Partial& acc = partials[part];
    for (std::size_t i = 0; i < wslice; ++i) grads.d_weights[grp * wslice + i] += acc.dw[i];
    for (std::size_t ol = 0; ol < og; ++ol) grads.d_bias[grp * og + ol] += acc.db[ol];
    const std::size_t set = layer.position_set_of_group(grp);
    for (std::size_t k = 1; k < K; ++k) {
      const std::size_t i = (set * (K - 1) + (k - 1)) * 2;
      dpos[i] += acc.dpos[2 * k];
      dpos[i + 1] += acc.dpos[2 * k + 1];
    }
  }
  return grads;
}

// ---- grids -------------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> grid_tap_order(std::size_t kernel_h,
                                                                 std::size_t kernel_w) {
  if (kernel_h == 0 || kernel_w == 0 || kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw std::invalid_argument("grid kernel dims must be odd, got " + std::to_string(kernel_h) +
                                "x" + std::to_string(kernel_w));
  }
  const std::size_t ch = kernel_h / 2;
  const std::size_t cw = kernel_w / 2;
  std::vector<std::pair<std::size_t, std::size_t>> taps{{ch, cw}};
  for (std::size_t i = 0; i < kernel_h; ++i) {
    for (std::size_t j = 0; j < kernel_w; ++j) {
      if (i != ch || j != cw) taps.emplace_back(i, j);
    }
  }
  return taps;
}

PositionSet make_grid_positions(std::size_t kernel_h, std::size_t kernel_w, std::size_t dilation,
                                std::size_t sets) {
  if (dilation == 0) throw std::invalid_argument("dilation must be >= 1");
  const auto taps = grid_tap_order(kernel_h, kernel_w);
  const double ch = static_cast<double>(kernel_h / 2);
  const double cw = static_cast<double>(kernel_w / 2);
  const double d = static_cast<double>(dilation);
  PositionSet ps(sets, taps.size());
  for (std::size_t s = 0; s < sets; ++s) {
    for (std::size_t k = 1; k < taps.size(); ++k) {
      ps.set(s, k,
             {(static_cast<double>(taps[k].first) - ch) * d,
              (static_cast<double>(taps[k].second) - cw) * d});
    }
  }
  return ps;
}

AcuLayer embed_conv(const DenseConv& conv) {
  conv.validate();
  const std::size_t kh = conv.kernel_h();
  const std::size_t kw = conv.kernel_w();
  const auto taps = grid_tap_order(kh, kw);
  if (conv.geometry.pad_h < kh / 2 || conv.geometry.pad_w < kw / 2) {
    throw std::invalid_argument("embed_conv needs padding >= kernel/2 on both axes");
  }
  ConvGeometry g = conv.geometry;
  g.pad_h -= kh / 2;
  g.pad_w -= kw / 2;
  AcuLayer layer = AcuLayer::zeros(g, taps.size(), GroupMode::multi_position);
  layer.positions = make_grid_positions(kh, kw, 1, g.groups);
  layer.bias = conv.bias;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t cl = 0; cl < g.in_per_group(); ++cl) {
      for (std::size_t k = 0; k < taps.size(); ++k) {
        layer.weights(o, cl, 0, k) = conv.weights(o, cl, taps[k].first, taps[k].second);
      }
    }
  }
  return layer;
}

}  // namespace acu
