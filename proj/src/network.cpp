#include "acu/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace acu {

namespace {

void copy_into(std::span<double> dst, std::span<const double> src) {
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

// ---- conv --------------------------------------------------------------------

ConvLayer::ConvLayer(std::string name, DenseConv conv) : Layer(std::move(name)), conv_(std::move(conv)) {
  conv_.validate();
  grads_.d_weights = Tensor4(conv_.weights.shape());
  grads_.d_bias.assign(conv_.bias.size(), 0.0);
}

Tensor4 ConvLayer::forward(const Tensor4& x, Parallelism par) {
  input_ = x;
  return naive_conv_forward(x, conv_, par);
}

Tensor4 ConvLayer::backward(const Tensor4& d_out, Parallelism par) {
  DenseConvGradients g = naive_conv_backward(input_, conv_, d_out, par);
  copy_into(grads_.d_weights.data(), g.d_weights.data());
  copy_into(grads_.d_bias, g.d_bias);
  return std::move(g.d_input);
}

void ConvLayer::collect_params(std::vector<ParamSlot>& out) {
  out.push_back({name() + ".weights", name(), ParamKind::weight, conv_.weights.data(),
                 grads_.d_weights.data()});
  out.push_back({name() + ".bias", name(), ParamKind::bias, conv_.bias, grads_.d_bias});
}

// ---- acu ---------------------------------------------------------------------

AcuModule::AcuModule(std::string name, AcuLayer layer)
    : Layer(std::move(name)), layer_(std::move(layer)) {
  layer_.validate();
  grads_.d_weights = Tensor4(layer_.weights.shape());
  grads_.d_bias.assign(layer_.bias.size(), 0.0);
  grads_.d_positions = PositionSet(layer_.positions.sets(), layer_.positions.synapses());
}

Tensor4 AcuModule::forward(const Tensor4& x, Parallelism par) {
  input_ = x;
  return acu_forward(x, layer_, par);
}

Tensor4 AcuModule::backward(const Tensor4& d_out, Parallelism par) {
  AcuGradients g = acu_backward(input_, layer_, d_out, par);
  copy_into(grads_.d_weights.data(), g.d_weights.data());
  copy_into(grads_.d_bias, g.d_bias);
  copy_into(grads_.d_positions.free_values(), g.d_positions.free_values());
  return std::move(g.d_input);
}

void AcuModule::collect_params(std::vector<ParamSlot>& out) {
  out.push_back({name() + ".weights", name(), ParamKind::weight, layer_.weights.data(),
                 grads_.d_weights.data()});
  out.push_back({name() + ".bias", name(), ParamKind::bias, layer_.bias, grads_.d_bias});
  if (layer_.positions.free_count() > 0) {
    const double limit =
        input_.empty() ? 0.0 : static_cast<double>(std::max(input_.h(), input_.w())) / 2.0;
    out.push_back({name() + ".positions", name(), ParamKind::position,
                   layer_.positions.free_values(), grads_.d_positions.free_values(), limit});
  }
}

// ---- relu / pool ---------------------------------------------------------------

Tensor4 ReluLayer::forward(const Tensor4& x, Parallelism) {
  input_ = x;
  Tensor4 y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor4 ReluLayer::backward(const Tensor4& d_out, Parallelism) {
  Tensor4 d = d_out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(input_[i] > 0.0)) d[i] = 0.0;
  }
  return d;
}

Tensor4 GlobalAvgPoolLayer::forward(const Tensor4& x, Parallelism) {
  input_shape_ = x.shape();
  Tensor4 y(x.n(), x.c(), 1, 1);
  const double inv = 1.0 / static_cast<double>(x.h() * x.w());
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      double s = 0.0;
      for (double v : x.plane(n, c)) s += v;
      y(n, c, 0, 0) = s * inv;
    }
  }
  return y;
}

Tensor4 GlobalAvgPoolLayer::backward(const Tensor4& d_out, Parallelism) {
  Tensor4 d(input_shape_);
  const double inv = 1.0 / static_cast<double>(input_shape_.h * input_shape_.w);
  for (std::size_t n = 0; n < d.n(); ++n) {
    for (std::size_t c = 0; c < d.c(); ++c) {
      const double g = d_out(n, c, 0, 0) * inv;
      for (double& v : d.plane(n, c)) v = g;
    }
  }
  return d;
}

// ---- fully connected -----------------------------------------------------------

FullyConnectedLayer::FullyConnectedLayer(std::string name, Tensor4 weights,
                                         std::vector<double> bias)
    : Layer(std::move(name)), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (weights_.h() != 1 || weights_.w() != 1 || bias_.size() != weights_.n()) {
    throw std::invalid_argument("fc layer " + this->name() + ": weights must be (out, in, 1, 1)" +
                                " with one bias per output");
  }
  d_weights_ = Tensor4(weights_.shape());
  d_bias_.assign(bias_.size(), 0.0);
}

Shape4 FullyConnectedLayer::output_shape(const Shape4& input) const {
  if (input.c * input.h * input.w != weights_.c()) {
    throw std::invalid_argument("fc layer " + name() + " expects " + std::to_string(weights_.c()) +
                                " inputs, got " + input.str());
  }
  return {input.n, weights_.n(), 1, 1};
}

Tensor4 FullyConnectedLayer::forward(const Tensor4& x, Parallelism) {
  const Shape4 os = output_shape(x.shape());
  input_ = x;
  const std::size_t in = weights_.c();
  Tensor4 y(os);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const double* xi = x.data().data() + n * in;
    for (std::size_t o = 0; o < os.c; ++o) {
      const double* wo = weights_.data().data() + o * in;
      double s = bias_[o];
      for (std::size_t i = 0; i < in; ++i) s += wo[i] * xi[i];
      y(n, o, 0, 0) = s;
    }
  }
  return y;
}

Tensor4 FullyConnectedLayer::backward(const Tensor4& d_out, Parallelism) {
  const std::size_t in = weights_.c();
  d_weights_.fill(0.0);
  std::fill(d_bias_.begin(), d_bias_.end(), 0.0);
  Tensor4 d_in(input_.shape());
  for (std::size_t n = 0; n < input_.n(); ++n) {
    const double* xi = input_.data().data() + n * in;
    double* di = d_in.data().data() + n * in;
    for (std::size_t o = 0; o < weights_.n(); ++o) {
      const double g = d_out(n, o, 0, 0);
      d_bias_[o] += g;
      double* dw = d_weights_.data().data() + o * in;
      const double* wo = weights_.data().data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dw[i] += g * xi[i];
        di[i] += g * wo[i];
      }
    }
  }
  return d_in;
}

void FullyConnectedLayer::collect_params(std::vector<ParamSlot>& out) {
  out.push_back(
      {name() + ".weights", name(), ParamKind::weight, weights_.data(), d_weights_.data()});
  out.push_back({name() + ".bias", name(), ParamKind::bias, bias_, d_bias_});
}

// ---- residual ------------------------------------------------------------------

ResidualBlock::ResidualBlock(std::string name, std::vector<std::unique_ptr<Layer>> body)
    : Layer(std::move(name)), body_(std::move(body)) {}

ResidualBlock::ResidualBlock(const ResidualBlock& other) : Layer(other.name()) {
  for (const auto& l : other.body_) body_.push_back(l->clone());
}

Shape4 ResidualBlock::output_shape(const Shape4& input) const {
  Shape4 s = input;
  for (const auto& l : body_) s = l->output_shape(s);
  if (s != input) {
    throw std::invalid_argument("residual block " + name() + " changes shape " + input.str() +
                                " -> " + s.str());
  }
  return s;
}

Tensor4 ResidualBlock::forward(const Tensor4& x, Parallelism par) {
  Tensor4 h = x;
  for (auto& l : body_) h = l->forward(h, par);
  h += x;
  return h;
}

Tensor4 ResidualBlock::backward(const Tensor4& d_out, Parallelism par) {
  Tensor4 d = d_out;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it) d = (*it)->backward(d, par);
  d += d_out;
  return d;
}

void ResidualBlock::collect_params(std::vector<ParamSlot>& out) {
  for (auto& l : body_) l->collect_params(out);
}

void ResidualBlock::for_each(const std::function<void(const Layer&)>& fn) const {
  fn(*this);
  for (const auto& l : body_) l->for_each(fn);
}

// ---- loss ----------------------------------------------------------------------

std::string to_string(LossKind kind) {
  return kind == LossKind::mse ? "mse" : "softmax_cross_entropy";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "mse") return LossKind::mse;
  if (text == "softmax_cross_entropy" || text == "softmax-cross-entropy") {
    return LossKind::softmax_cross_entropy;
  }
  throw std::invalid_argument("unknown loss '" + text + "'");
}

LossValue compute_loss(LossKind kind, const Tensor4& output, const Tensor4& targets) {
  LossValue r;
  r.d_output = Tensor4(output.shape());
  if (kind == LossKind::mse) {
    if (targets.shape() != output.shape()) {
      throw std::invalid_argument("mse targets " + targets.shape().str() + " vs output " +
                                  output.shape().str());
    }
    const double inv = 1.0 / static_cast<double>(output.size());
    double s = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
      const double e = output[i] - targets[i];
      s += e * e;
      r.d_output[i] = 2.0 * e * inv;
    }
    r.loss = s * inv;
    return r;
  }
  const std::size_t classes = output.c() * output.h() * output.w();
  if (targets.n() != output.n() || targets.size() != output.n()) {
    throw std::invalid_argument("cross-entropy targets must be (n,1,1,1) class indices");
  }
  const double inv_n = 1.0 / static_cast<double>(output.n());
  double total = 0.0;
  for (std::size_t n = 0; n < output.n(); ++n) {
    const double label_value = targets[n];
    if (!(label_value >= 0.0) || label_value >= static_cast<double>(classes) ||
        label_value != std::floor(label_value)) {
      throw std::invalid_argument("class label " + std::to_string(label_value) +
                                  " out of range for " + std::to_string(classes) + " classes");
    }
    const auto label = static_cast<std::size_t>(label_value);
    const double* z = output.data().data() + n * classes;
    double* dz = r.d_output.data().data() + n * classes;
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(z[k] - zmax);
    const double log_denom = std::log(denom);
    total += -(z[label] - zmax - log_denom);
    for (std::size_t k = 0; k < classes; ++k) {
      dz[k] = (std::exp(z[k] - zmax - log_denom) - (k == label ? 1.0 : 0.0)) * inv_n;
    }
  }
  r.loss = total * inv_n;
  return r;
}

// ---- network -------------------------------------------------------------------

Network::Network(Shape4 input, std::vector<std::unique_ptr<Layer>> layers, LossKind loss)
    : input_(input), layers_(std::move(layers)), loss_(loss) {
  validate();
}

Network::Network(const Network& other) : input_(other.input_), loss_(other.loss_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::validate() const {
  (void)output_shape(1);
  std::set<std::string> names;
  for_each_layer([&](const Layer& l) {
    if (!names.insert(l.name()).second) {
      throw std::invalid_argument("duplicate layer name '" + l.name() + "'");
    }
  });
}

Shape4 Network::output_shape(std::size_t batch) const {
  Shape4 s{batch, input_.c, input_.h, input_.w};
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor4 Network::forward(const Tensor4& x, Parallelism par) {
  if (x.c() != input_.c || x.h() != input_.h || x.w() != input_.w) {
    throw std::invalid_argument("network input " + x.shape().str() + " does not match " +
                                input_.str());
  }
  Tensor4 h = x;
  for (auto& l : layers_) h = l->forward(h, par);
  return h;
}

void Network::backward(const Tensor4& d_out, Parallelism par) {
  Tensor4 d = d_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d, par);
}

double Network::train_step_gradients(const Tensor4& x, const Tensor4& targets, Parallelism par) {
  const Tensor4 y = forward(x, par);
  LossValue lv = compute_loss(loss_, y, targets);
  backward(lv.d_output, par);
  return lv.loss;
}

std::vector<ParamSlot> Network::params() {
  std::vector<ParamSlot> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

void Network::for_each_layer(const std::function<void(const Layer&)>& fn) const {
  for (const auto& l : layers_) l->for_each(fn);
}

std::vector<std::pair<std::string, const AcuLayer*>> Network::acu_layers() const {
  std::vector<std::pair<std::string, const AcuLayer*>> out;
  for_each_layer([&](const Layer& l) {
    if (const auto* a = dynamic_cast<const AcuModule*>(&l)) out.emplace_back(a->name(), &a->acu());
  });
  return out;
}

}  // namespace acu
