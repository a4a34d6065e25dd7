#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "acu/network.hpp"
#include "acu/verify.hpp"

using namespace acu;

namespace {

// Small residual classifier touching every layer type.
Network toy_classifier(Rng& rng) {
  std::vector<std::unique_ptr<Layer>> layers;
  DenseConv stem;
  stem.geometry = {2, 4, 1, 1, 1, 1, 1};
  stem.weights = random_tensor({4, 2, 3, 3}, rng, -0.5, 0.5);
  stem.bias = {0.1, -0.1, 0.05, 0.0};
  layers.push_back(std::make_unique<ConvLayer>("stem", stem));

  RandomLayerSpec spec;
  spec.geometry = {4, 4, 4};
  spec.synapses = 3;
  std::vector<std::unique_ptr<Layer>> body;
  body.push_back(std::make_unique<ReluLayer>("relu1"));
  body.push_back(std::make_unique<AcuModule>("acu", random_acu_layer(spec, rng)));
  layers.push_back(std::make_unique<ResidualBlock>("block", std::move(body)));
  layers.push_back(std::make_unique<ReluLayer>("relu2"));
  layers.push_back(std::make_unique<GlobalAvgPoolLayer>("pool"));
  layers.push_back(std::make_unique<FullyConnectedLayer>(
      "fc", random_tensor({3, 4, 1, 1}, rng, -0.5, 0.5), std::vector<double>{0.0, 0.1, -0.1}));
  return Network({1, 2, 5, 5}, std::move(layers), LossKind::softmax_cross_entropy);
}

}  // namespace

TEST(Loss, MseIsMeanSquaredError) {
  const Tensor4 y({1, 1, 1, 2}, std::vector<double>{1.0, 3.0});
  const Tensor4 t({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const LossValue l = compute_loss(LossKind::mse, y, t);
  EXPECT_DOUBLE_EQ(l.loss, (1.0 + 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(l.d_output[0], 1.0);
  EXPECT_DOUBLE_EQ(l.d_output[1], 2.0);
}

TEST(Loss, CrossEntropyOnUniformLogits) {
  const Tensor4 y({2, 2, 1, 1}, std::vector<double>{0.0, 0.0, 5.0, 5.0});
  const Tensor4 t({2, 1, 1, 1}, std::vector<double>{0.0, 1.0});
  const LossValue l = compute_loss(LossKind::softmax_cross_entropy, y, t);
  EXPECT_NEAR(l.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(l.d_output[0], -0.25, 1e-15);
  EXPECT_NEAR(l.d_output[1], 0.25, 1e-15);
}

TEST(Loss, CrossEntropyRejectsBadLabels) {
  const Tensor4 y(Shape4{1, 2, 1, 1});
  EXPECT_THROW(compute_loss(LossKind::softmax_cross_entropy, y, Tensor4({1, 1, 1, 1}, 2.0)),
               std::invalid_argument);
  EXPECT_THROW(compute_loss(LossKind::softmax_cross_entropy, y, Tensor4({1, 1, 1, 1}, 0.5)),
               std::invalid_argument);
}

TEST(Network, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  Network net = toy_classifier(rng);
  const Tensor4 x = random_tensor({2, 2, 5, 5}, rng);
  const Tensor4 t({2, 1, 1, 1}, std::vector<double>{2.0, 0.0});
  net.train_step_gradients(x, t);
  auto params = net.params();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].value.size(); ++j) {
      const double keep = params[i].value[j];
      params[i].value[j] = keep + h;
      const double up = compute_loss(net.loss_kind(), net.forward(x), t).loss;
      params[i].value[j] = keep - h;
      const double down = compute_loss(net.loss_kind(), net.forward(x), t).loss;
      params[i].value[j] = keep;
      const double fd = (up - down) / (2.0 * h);
      // The loss is O(1), so differencing it carries ~eps / h = 2e-10 of
      // roundoff; allow that on top of the relative bound for tiny gradients.
      const double err = std::abs(analytic[i][j] - fd);
      EXPECT_LE(err, 1e-5 * std::max(std::abs(analytic[i][j]), std::abs(fd)) + 1e-9)
          << params[i].name << "[" << j << "] analytic " << analytic[i][j] << " fd " << fd;
    }
  }
}

TEST(Network, ParamNamesAreUniqueAndComplete) {
  Rng rng(22);
  Network net = toy_classifier(rng);
  std::vector<std::string> names;
  for (const auto& p : net.params()) names.push_back(p.name);
  EXPECT_EQ(names, (std::vector<std::string>{"stem.weights", "stem.bias", "acu.weights",
                                             "acu.bias", "acu.positions", "fc.weights",
                                             "fc.bias"}));
}

TEST(Network, CopyIsDeep) {
  Rng rng(23);
  Network a = toy_classifier(rng);
  Network b = a;
  b.params()[0].value[0] += 1.0;
  EXPECT_NE(a.params()[0].value[0], b.params()[0].value[0]);
}

TEST(Network, ValidateCatchesDuplicatesAndShapeBreaks) {
  std::vector<std::unique_ptr<Layer>> dup;
  dup.push_back(std::make_unique<ReluLayer>("r"));
  dup.push_back(std::make_unique<ReluLayer>("r"));
  EXPECT_THROW(Network({1, 1, 4, 4}, std::move(dup), LossKind::mse).validate(),
               std::invalid_argument);

  std::vector<std::unique_ptr<Layer>> bad;
  bad.push_back(std::make_unique<AcuModule>("a", AcuLayer::zeros({2, 2, 1}, 1)));
  EXPECT_THROW(Network({1, 1, 4, 4}, std::move(bad), LossKind::mse).validate(),
               std::invalid_argument);
}

TEST(Residual, ZeroBodyIsIdentity) {
  std::vector<std::unique_ptr<Layer>> body;
  body.push_back(std::make_unique<AcuModule>("a", AcuLayer::zeros({2, 2, 2}, 3)));
  ResidualBlock block("res", std::move(body));
  Rng rng(24);
  const Tensor4 x = random_tensor({1, 2, 4, 4}, rng);
  EXPECT_EQ(block.forward(x, {}), x);
}

TEST(Residual, ShapeChangingBodyRejected) {
  std::vector<std::unique_ptr<Layer>> body;
  body.push_back(std::make_unique<GlobalAvgPoolLayer>("pool"));
  ResidualBlock block("res", std::move(body));
  EXPECT_THROW(block.output_shape({1, 2, 4, 4}), std::invalid_argument);
}
