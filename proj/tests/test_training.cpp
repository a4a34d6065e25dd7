#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "acu/training.hpp"
#include "acu/verify.hpp"

using namespace acu;

namespace {

ParamSlot slot(const std::string& name, ParamKind kind, std::vector<double>& v,
               std::vector<double>& g, const std::string& layer = "l") {
  return {name, layer, kind, v, g, 0.0};
}

TrainConfig plain(double lr) {
  TrainConfig c;
  c.base_lr = lr;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.total_iters = 100;
  return c;
}

// Full-dataset loss of the current network.
double dataset_loss(Network& net, const Dataset& d) {
  const Tensor4 y = net.forward(d.inputs);
  return compute_loss(net.loss_kind(), y, d.targets).loss;
}

}  // namespace

TEST(LrSchedule, StepMilestones) {
  TrainConfig c;
  c.milestones = {32000, 48000};
  c.total_iters = 64000;
  EXPECT_DOUBLE_EQ(lr_at(c, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(c, 31999), 0.1);
  EXPECT_NEAR(lr_at(c, 40000), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(c, 50000), 0.001, 1e-15);
}

TEST(LrSchedule, LinearDecay) {
  TrainConfig c;
  c.schedule = ScheduleKind::linear;
  c.total_iters = 100;
  EXPECT_DOUBLE_EQ(lr_at(c, 50), 0.05);
  EXPECT_EQ(lr_at(c, 0), c.base_lr);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.total_iters = 10;
  c.warmup_iters = 11;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.warmup_iters = 10;
  EXPECT_NO_THROW(c.validate());
  c.position_lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.position_lr = 1e-3;
  c.base_lr = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Sgd, QuadraticWithoutMomentumContracts) {
  // loss w^2 -> gradient 2w, so w <- w - 0.1 * 2w = 0.8 w
  std::vector<double> w{1.0}, g{0.0};
  const auto cfg = plain(0.1);
  SgdState state;
  std::vector<ParamSlot> p{slot("w", ParamKind::weight, w, g)};
  double expected = 1.0;
  for (std::size_t it = 0; it < 5; ++it) {
    g[0] = 2.0 * w[0];
    sgd_step(p, state, cfg, it);
    expected *= 0.8;
    EXPECT_NEAR(w[0], expected, 1e-15);
  }
}

TEST(Sgd, NesterovMomentumRecurrence) {
  std::vector<double> w{0.0}, g{1.0};
  auto cfg = plain(0.1);
  cfg.momentum = 0.9;
  SgdState state;
  std::vector<ParamSlot> p{slot("w", ParamKind::weight, w, g)};
  sgd_step(p, state, cfg, 0);
  // v1 = 1, step = g + mu v1 = 1.9
  EXPECT_NEAR(w[0], -0.19, 1e-15);
  sgd_step(p, state, cfg, 1);
  // v2 = 0.9 + 1 = 1.9, step = 1 + 0.9 * 1.9 = 2.71
  EXPECT_NEAR(w[0], -0.19 - 0.271, 1e-15);
}

TEST(Sgd, WeightDecayLeavesPositionsAlone) {
  std::vector<double> w{2.0, -4.0}, gw{0.0, 0.0}, pos{1.5, -0.5}, gp{0.0, 0.0};
  auto cfg = plain(0.1);
  cfg.weight_decay = 0.1;
  SgdState state;
  std::vector<ParamSlot> p{slot("w", ParamKind::weight, w, gw),
                           slot("p", ParamKind::position, pos, gp)};
  for (std::size_t it = 0; it < 10; ++it) sgd_step(p, state, cfg, it);
  EXPECT_NEAR(w[0], 2.0 * std::pow(0.99, 10), 1e-14);
  EXPECT_NEAR(w[1], -4.0 * std::pow(0.99, 10), 1e-14);
  EXPECT_EQ(pos[0], 1.5);
  EXPECT_EQ(pos[1], -0.5);
}

TEST(Sgd, PositionGradientIsL2NormalizedPerLayer) {
  std::vector<double> a{0.0, 0.0}, ga{3.0, 0.0}, b{0.0}, gb{4.0}, c{0.0}, gc{100.0};
  auto cfg = plain(0.1);
  cfg.position_lr = 0.01;
  SgdState state;
  std::vector<ParamSlot> p{slot("l1.a", ParamKind::position, a, ga, "l1"),
                           slot("l1.b", ParamKind::position, b, gb, "l1"),
                           slot("l2.c", ParamKind::position, c, gc, "l2")};
  sgd_step(p, state, cfg, 0);
  EXPECT_NEAR(a[0], -0.01 * 0.6, 1e-16);
  EXPECT_EQ(a[1], 0.0);
  EXPECT_NEAR(b[0], -0.01 * 0.8, 1e-16);
  EXPECT_NEAR(c[0], -0.01, 1e-16);

  cfg.position_grad_norm = PositionGradNorm::none;
  c[0] = 0.0;
  sgd_step(p, state, cfg, 1);
  EXPECT_NEAR(c[0], -1.0, 1e-14);
}

TEST(Sgd, PositionRateFollowsSchedule) {
  std::vector<double> a{0.0}, ga{1.0};
  auto cfg = plain(0.1);
  cfg.position_lr = 0.01;
  cfg.milestones = {5};
  SgdState state;
  std::vector<ParamSlot> p{slot("a", ParamKind::position, a, ga)};
  sgd_step(p, state, cfg, 5);
  EXPECT_NEAR(a[0], -0.001, 1e-16);
}

TEST(Sgd, WarmupFreezesPositionsButNotWeights) {
  std::vector<double> w{1.0}, gw{0.5}, pos{0.25}, gp{1.0};
  auto cfg = plain(0.1);
  cfg.warmup_iters = 10;
  SgdState state;
  std::vector<ParamSlot> p{slot("w", ParamKind::weight, w, gw),
                           slot("p", ParamKind::position, pos, gp)};
  sgd_step(p, state, cfg, 5);
  EXPECT_EQ(pos[0], 0.25);
  EXPECT_NE(w[0], 1.0);
  sgd_step(p, state, cfg, 10);
  EXPECT_NE(pos[0], 0.25);
}

TEST(Sgd, ClampBoundsPositions) {
  std::vector<double> pos{3.9}, gp{-1.0};
  auto cfg = plain(0.1);
  cfg.position_lr = 1.0;
  cfg.clamp_positions = true;
  SgdState state;
  std::vector<ParamSlot> p{{"p", "l", ParamKind::position, pos, gp, 4.0}};
  sgd_step(p, state, cfg, 0);
  EXPECT_EQ(pos[0], 4.0);
}

TEST(Sgd, RejectsNonFiniteGradientAndPastEnd) {
  std::vector<double> w{1.0}, g{std::numeric_limits<double>::quiet_NaN()};
  auto cfg = plain(0.1);
  SgdState state;
  std::vector<ParamSlot> p{slot("layer.weights", ParamKind::weight, w, g)};
  try {
    sgd_step(p, state, cfg, 0);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weights"), std::string::npos);
  }
  EXPECT_EQ(w[0], 1.0);
  g[0] = 0.0;
  EXPECT_THROW(sgd_step(p, state, cfg, 100), std::invalid_argument);
}

TEST(Warmup, DefaultDependsOnPositionSharing) {
  EXPECT_EQ(default_warmup_iters(shift_regression_network(1, 8), 64000), 10000u);
  EXPECT_EQ(default_warmup_iters(shift_regression_network(4, 8), 64000), 0u);
  EXPECT_EQ(default_warmup_iters(
                shift_regression_network(4, 8, GroupMode::shared_position), 64000),
            10000u);
}

TEST(ShiftTask, ZeroOffsetIsIdentity) {
  const Dataset d = make_shift_task({0.0, 0.0}, 4, 12, 3);
  EXPECT_EQ(d.inputs, d.targets);
}

TEST(ShiftTask, TargetsAreBilinearShifts) {
  const Dataset d = make_shift_task({1.0, -1.5}, 2, 12, 4);
  for (std::size_t m = 0; m < 12; ++m) {
    for (std::size_t q = 0; q < 12; ++q) {
      const double r = static_cast<double>(m) + 1.0;
      const double c = static_cast<double>(q) - 1.5;
      double expected = 0.0;
      if (r <= 11.0 && c >= 0.0) {
        // Row is integral; blend the two neighbouring columns by hand.
        expected = 0.5 * d.inputs(1, 0, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +
                   0.5 * d.inputs(1, 0, static_cast<std::size_t>(r), static_cast<std::size_t>(c) + 1);
      } else if (r <= 11.0 && c > -1.0) {
        expected = 0.5 * d.inputs(1, 0, static_cast<std::size_t>(r), 0);
      }
      EXPECT_NEAR(d.targets(1, 0, m, q), expected, 1e-15) << m << "," << q;
    }
  }
}

TEST(ShiftTask, FieldsAreUnitVariance) {
  const Dataset d = make_shift_task({0.0, 0.0}, 3, 16, 5);
  for (std::size_t n = 0; n < 3; ++n) {
    double s = 0.0, s2 = 0.0;
    for (double v : d.inputs.plane(n, 0)) {
      s += v;
      s2 += v * v;
    }
    const double mean = s / 256.0;
    EXPECT_NEAR(s2 / 256.0 - mean * mean, 1.0, 1e-12);
  }
}

TEST(ShiftTask, OffsetBeyondQuarterSizeRejected) {
  EXPECT_THROW(make_shift_task({4.5, 0.0}, 1, 16, 0), std::invalid_argument);
  EXPECT_NO_THROW(make_shift_task({4.0, -4.0}, 1, 16, 0));
}

TEST(Train, ZeroIterationsLeavesNetworkUnchanged) {
  Network net = shift_regression_network(1, 8);
  net.params()[0].value[1] = 0.5;
  const Dataset d = make_shift_task({1.0, 0.0}, 4, 8, 0);
  const TrainResult r = train(net, d, shift_task_config(0, 0));
  Network copy = r.network;
  const auto a = net.params(), b = copy.params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::equal(a[i].value.begin(), a[i].value.end(), b[i].value.begin()));
  }
  EXPECT_TRUE(r.loss_trace.empty());
}

TEST(Train, SameSeedGivesIdenticalTraces) {
  const Dataset d = make_shift_task({1.0, 1.0}, 16, 12, 1);
  const auto cfg = shift_task_config(200, 7);
  const TrainResult a = train(shift_regression_network(1, 12), d, cfg);
  const TrainResult b = train(shift_regression_network(1, 12), d, cfg);
  EXPECT_EQ(loss_trace_csv(a.loss_trace), loss_trace_csv(b.loss_trace));
  EXPECT_EQ(trajectory_csv(a.trajectory), trajectory_csv(b.trajectory));
}

TEST(Train, ShiftTaskLearnsIntegerOffset) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset d = make_shift_task({2.0, 3.0}, 64, 16, seed);
    const TrainResult r = train(shift_regression_network(1, 16), d, shift_task_config(2000, seed));
    const Offset o = r.network.acu_layers()[0].second->offset(0, 1);
    EXPECT_NEAR(o.alpha, 2.0, 0.5) << "seed " << seed;
    EXPECT_NEAR(o.beta, 3.0, 0.5) << "seed " << seed;
    EXPECT_LT(r.loss_trace.back().loss, 0.01 * r.loss_trace.front().loss) << "seed " << seed;
  }
}

TEST(Train, ShiftTaskLearnsFractionalOffset) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset d = make_shift_task({-1.5, 0.0}, 64, 16, seed);
    const TrainResult r = train(shift_regression_network(1, 16), d, shift_task_config(2000, seed));
    EXPECT_NEAR(r.network.acu_layers()[0].second->offset(0, 1).alpha, -1.5, 0.5)
        << "seed " << seed;
  }
}

TEST(Train, LossMostlyNonIncreasingOverWindows) {
  const Dataset d = make_shift_task({2.0, 3.0}, 64, 16, 11);
  std::vector<double> marks;
  Network probe;
  TrainHooks hooks;
  hooks.after_step = [&](std::size_t iter, const Network& net) {
    if ((iter + 1) % 100 == 0) {
      probe = net;
      marks.push_back(dataset_loss(probe, d));
    }
  };
  Network net = shift_regression_network(1, 16);
  marks.push_back(dataset_loss(net, d));
  train(net, d, shift_task_config(2000, 11), {}, hooks);
  ASSERT_EQ(marks.size(), 21u);
  std::size_t ok = 0;
  for (std::size_t i = 1; i < marks.size(); ++i) ok += marks[i] <= marks[i - 1];
  EXPECT_GE(static_cast<double>(ok), 0.95 * 20.0);
}

TEST(Train, WarmupKeepsPositionsBitIdentical) {
  const Dataset d = make_shift_task({2.0, 3.0}, 32, 16, 2);
  auto cfg = shift_task_config(60, 2);
  cfg.warmup_iters = 40;
  std::vector<std::vector<double>> seen;
  TrainHooks hooks;
  hooks.after_step = [&](std::size_t, const Network& net) {
    const auto* a = net.acu_layers()[0].second;
    const auto v = a->positions.free_values();
    seen.emplace_back(v.begin(), v.end());
  };
  train(shift_regression_network(1, 16), d, cfg, {}, hooks);
  ASSERT_EQ(seen.size(), 60u);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(seen[i], std::vector<double>({0.0, 0.0}));
  EXPECT_NE(seen[40], seen[39]);
}

TEST(Train, SharedModeKeepsGroupsIdentical) {
  const Offset offsets[] = {{2.0, 0.0}, {-2.0, 0.0}};
  const Dataset d = make_grouped_shift_task(offsets, 32, 16, 3);
  const TrainResult r = train(shift_regression_network(2, 16, GroupMode::shared_position), d,
                              shift_task_config(300, 3));
  const auto* a = r.network.acu_layers()[0].second;
  EXPECT_EQ(a->offset(0, 1), a->offset(1, 1));
  EXPECT_NE(a->offset(0, 1), (Offset{0.0, 0.0}));
}

TEST(Train, MultiModeLearnsPerGroupOffsets) {
  const Offset offsets[] = {{2.0, 0.0}, {-2.0, 0.0}};
  const Dataset d = make_grouped_shift_task(offsets, 64, 16, 4);
  const TrainResult r =
      train(shift_regression_network(2, 16), d, shift_task_config(2000, 4));
  const auto* a = r.network.acu_layers()[0].second;
  EXPECT_NEAR(a->offset(0, 1).alpha, 2.0, 0.5);
  EXPECT_NEAR(a->offset(0, 1).beta, 0.0, 0.5);
  EXPECT_NEAR(a->offset(1, 1).alpha, -2.0, 0.5);
  EXPECT_NEAR(a->offset(1, 1).beta, 0.0, 0.5);
}

TEST(Train, DivergenceReportsLastGoodSnapshot) {
  const Dataset d = make_shift_task({1.0, 0.0}, 8, 8, 0);
  auto cfg = shift_task_config(200, 0);
  cfg.base_lr = 1e3;
  try {
    train(shift_regression_network(1, 8), d, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    Network last = e.last_good();
    for (const auto& p : last.params()) {
      for (double v : p.value) EXPECT_TRUE(std::isfinite(v)) << p.name;
    }
  }
}

TEST(Train, RejectsMismatchedDataset) {
  const Dataset d = make_shift_task({1.0, 0.0}, 4, 12, 0);
  EXPECT_THROW(train(shift_regression_network(1, 8), d, shift_task_config(10, 0)),
               std::invalid_argument);
}

TEST(Trajectory, RowsCoverEveryGroupAndSynapse) {
  const Dataset d = make_grouped_shift_task(std::vector<Offset>(3, Offset{1.0, 0.0}), 8, 8, 0);
  auto cfg = shift_task_config(20, 0);
  cfg.log_every = 10;
  const TrainResult r = train(shift_regression_network(3, 8), d, cfg);
  // Logged at 0, 10 and after the final step; 3 groups x 2 synapses each.
  EXPECT_EQ(r.trajectory.size(), 3u * 6u);
  const std::string csv = trajectory_csv(r.trajectory);
  EXPECT_EQ(csv.rfind("iter,layer,group,synapse,alpha,beta\n", 0), 0u);
}
