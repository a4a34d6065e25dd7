#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acu/ops.hpp"

namespace acu {

enum class ParamKind { weight, bias, position };

/// View of one trainable tensor and its gradient. Spans point into the owning
/// layer and stay valid until the network is modified structurally.
struct ParamSlot {
  std::string name;   ///< "<layer>.<tensor>", unique within a network
  std::string layer;  ///< owning layer name; position normalization groups by it
  ParamKind kind = ParamKind::weight;
  std::span<double> value;
  std::span<double> grad;
  double clamp_limit = 0.0;  ///< positions only: +-limit when clamping is enabled
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string type() const = 0;
  virtual Shape4 output_shape(const Shape4& input) const = 0;
  /// Caches whatever backward() needs.
  virtual Tensor4 forward(const Tensor4& x, Parallelism par) = 0;
  /// Stores parameter gradients (overwriting) and returns d_input.
  virtual Tensor4 backward(const Tensor4& d_out, Parallelism par) = 0;
  virtual void collect_params(std::vector<ParamSlot>&) {}
  virtual void for_each(const std::function<void(const Layer&)>& fn) const { fn(*this); }
  virtual std::unique_ptr<Layer> clone() const = 0;

 private:
  std::string name_;
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(std::string name, DenseConv conv);
  std::string type() const override { return "conv"; }
  Shape4 output_shape(const Shape4& input) const override { return conv_.output_shape(input); }
  Tensor4 forward(const Tensor4& x, Parallelism par) override;
  Tensor4 backward(const Tensor4& d_out, Parallelism par) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvLayer>(*this); }

  DenseConv& conv() { return conv_; }
  const DenseConv& conv() const { return conv_; }

 private:
  DenseConv conv_;
  DenseConvGradients grads_;
  Tensor4 input_;
};

class AcuModule final : public Layer {
 public:
  AcuModule(std::string name, AcuLayer layer);
  std::string type() const override { return "acu"; }
  Shape4 output_shape(const Shape4& input) const override { return layer_.output_shape(input); }
  Tensor4 forward(const Tensor4& x, Parallelism par) override;
  Tensor4 backward(const Tensor4& d_out, Parallelism par) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AcuModule>(*this); }

  AcuLayer& acu() { return layer_; }
  const AcuLayer& acu() const { return layer_; }

 private:
  AcuLayer layer_;
  AcuGradients grads_;
  Tensor4 input_;
};

class ReluLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string type() const override { return "relu"; }
  Shape4 output_shape(const Shape4& input) const override { return input; }
  Tensor4 forward(const Tensor4& x, Parallelism par) override;
  Tensor4 backward(const Tensor4& d_out, Parallelism par) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }

 private:
  Tensor4 input_;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string type() const override { return "global_avg_pool"; }
  Shape4 output_shape(const Shape4& input) const override { return {input.n, input.c, 1, 1}; }
  Tensor4 forward(const Tensor4& x, Parallelism par) override;
  Tensor4 backward(const Tensor4& d_out, Parallelism par) override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<GlobalAvgPoolLayer>(*this);
  }

 private:
  Shape4 input_shape_;
};

/// Flattens (c, h, w) and maps to `out` features; output is (n, out, 1, 1).
/// Weights are stored as (out, in, 1, 1).
class FullyConnectedLayer final : public Layer {
 public:
  FullyConnectedLayer(std::string name, Tensor4 weights, std::vector<double> bias);
  std::string type() const override { return "fc"; }
  Shape4 output_shape(const Shape4& input) const override;
  Tensor4 forward(const Tensor4& x, Parallelism par) override;
  Tensor4 backward(const Tensor4& d_out, Parallelism par) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<FullyConnectedLayer>(*this);
  }

  const Tensor4& weights() const { return weights_; }
  Tensor4& weights() { return weights_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

 private:
  Tensor4 weights_;
  std::vector<double> bias_;
  Tensor4 d_weights_;
  std::vector<double> d_bias_;
  Tensor4 input_;
};

/// y = x + body(x); body must preserve the shape.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::string name, std::vector<std::unique_ptr<Layer>> body);
  ResidualBlock(const ResidualBlock& other);
  std::string type() const override { return "residual"; }
  Shape4 output_shape(const Shape4& input) const override;
  Tensor4 forward(const Tensor4& x, Parallelism par) override;
  Tensor4 backward(const Tensor4& d_out, Parallelism par) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  void for_each(const std::function<void(const Layer&)>& fn) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ResidualBlock>(*this); }

  const std::vector<std::unique_ptr<Layer>>& body() const { return body_; }

 private:
  std::vector<std::unique_ptr<Layer>> body_;
};

enum class LossKind { softmax_cross_entropy, mse };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct LossValue {
  double loss = 0.0;
  Tensor4 d_output;
};

/// softmax_cross_entropy: targets are (n, 1, 1, 1) class indices, loss is the
/// batch mean. mse: targets match the output shape, loss = mean((y - t)^2).
LossValue compute_loss(LossKind kind, const Tensor4& output, const Tensor4& targets);

class Network {
 public:
  Network() = default;
  Network(Shape4 input, std::vector<std::unique_ptr<Layer>> layers, LossKind loss);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Per-sample input shape; n is ignored.
  const Shape4& input_shape() const { return input_; }
  LossKind loss_kind() const { return loss_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

  /// Checks that shapes chain and layer names are unique.
  void validate() const;
  Shape4 output_shape(std::size_t batch) const;

  Tensor4 forward(const Tensor4& x, Parallelism par = {});
  void backward(const Tensor4& d_out, Parallelism par = {});
  /// Forward, loss and backward for one batch; returns the loss.
  double train_step_gradients(const Tensor4& x, const Tensor4& targets, Parallelism par = {});

  std::vector<ParamSlot> params();
  /// Depth-first visit including residual bodies.
  void for_each_layer(const std::function<void(const Layer&)>& fn) const;
  std::vector<std::pair<std::string, const AcuLayer*>> acu_layers() const;

 private:
  Shape4 input_;
  std::vector<std::unique_ptr<Layer>> layers_;
  LossKind loss_ = LossKind::mse;
};

}  // namespace acu
