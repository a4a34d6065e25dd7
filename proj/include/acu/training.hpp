#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acu/network.hpp"

namespace acu {

enum class PositionGradNorm { l2, none };
enum class ScheduleKind { step, linear };

struct TrainConfig {
  double base_lr = 0.1;
  double momentum = 0.9;  ///< Nesterov
  double weight_decay = 5e-4;
  double position_lr = 1e-3;
  PositionGradNorm position_grad_norm = PositionGradNorm::l2;
  bool position_momentum = false;
  bool clamp_positions = false;
  std::size_t warmup_iters = 0;
  ScheduleKind schedule = ScheduleKind::step;
  std::vector<std::size_t> milestones;
  double lr_factor = 0.1;
  std::size_t batch_size = 8;
  std::size_t total_iters = 1000;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;

  void validate() const;
};

/// Step schedule: base_lr * factor^(milestones passed). Linear: base_lr * (1 - iter / total).
double lr_at(const TrainConfig& cfg, std::size_t iter);

/// Warm-up length used when a config asks for "auto": 0 when every ACU layer
/// is multi-position with G > 1 (e.g. depthwise), total_iters / 6.4 when any
/// layer shares one position set across its outputs.
std::size_t default_warmup_iters(const Network& net, std::size_t total_iters);

/// Optimizer state, one velocity buffer per parameter slot, created lazily.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One update. Weights and biases: Nesterov momentum with L2 decay at
/// lr_at(iter). Positions: no decay; the per-layer position gradient is
/// optionally L2-normalized and applied with position_lr scaled by the same
/// schedule factor; nothing moves while iter < warmup_iters.
void sgd_step(std::span<const ParamSlot> params, SgdState& state, const TrainConfig& cfg,
              std::size_t iter);

// ---- data ----------------------------------------------------------------------

struct Dataset {
  Tensor4 inputs;   ///< (N, C, H, W)
  Tensor4 targets;  ///< (N, ...) per the network's loss
  std::size_t size() const { return inputs.n(); }
};

/// Rows `indices` of t, in order.
Tensor4 gather_rows(const Tensor4& t, std::span<const std::size_t> indices);

inline constexpr std::size_t kDefaultSmoothingPasses = 4;

/// Random smooth single-channel fields x and targets y(m, n) = x(m + dr, n + dc)
/// read with bilinear sampling and zero bounds. Fields are uniform noise
/// blurred by `smoothing_passes` 3x3 box filters and scaled to unit variance.
Dataset make_shift_task(Offset offset, std::size_t samples, std::size_t size, std::uint64_t seed,
                        std::size_t smoothing_passes = kDefaultSmoothingPasses);

/// Channel c of the target is channel c of the input shifted by offsets[c].
Dataset make_grouped_shift_task(std::span<const Offset> offsets, std::size_t samples,
                                std::size_t size, std::uint64_t seed,
                                std::size_t smoothing_passes = kDefaultSmoothingPasses);

/// One ACU per channel group with the pinned origin synapse and a single free
/// synapse, weights, bias and offsets all zero.
Network shift_regression_network(std::size_t channels, std::size_t size,
                                 GroupMode mode = GroupMode::multi_position);

/// Recipe used for the shift task: lr 0.01 for weights and (normalized)
/// positions with linear decay, no weight decay, batch 8. The decay matters:
/// a normalized position step has fixed length, so without it the offsets
/// keep jittering around the optimum.
TrainConfig shift_task_config(std::size_t total_iters, std::uint64_t seed);

// ---- training loop -------------------------------------------------------------

struct LossRecord {
  std::size_t iter;
  double loss;
  double lr;
};

struct PositionRecord {
  std::size_t iter;
  std::string layer;
  std::size_t group;
  std::size_t synapse;
  double alpha;
  double beta;
};

struct TrainResult {
  Network network;
  std::vector<LossRecord> loss_trace;
  std::vector<PositionRecord> trajectory;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, Network last_good, std::size_t iter)
      : std::runtime_error(what), last_good_(std::move(last_good)), iter_(iter) {}
  const Network& last_good() const { return last_good_; }
  std::size_t iter() const { return iter_; }

 private:
  Network last_good_;
  std::size_t iter_;
};

struct TrainHooks {
  /// Called after each optimizer step with the 0-based iteration just taken.
  std::function<void(std::size_t iter, const Network&)> after_step;
};

/// Runs cfg.total_iters SGD steps on shuffled mini-batches. Loss and every
/// ACU position are logged at iterations divisible by log_every and once more
/// after the final step. Deterministic for a fixed cfg.seed.
TrainResult train(Network network, const Dataset& data, const TrainConfig& cfg,
                  Parallelism par = {}, const TrainHooks& hooks = {});

std::vector<PositionRecord> position_rows(const Network& net, std::size_t iter);

std::string loss_trace_csv(const std::vector<LossRecord>& trace);
std::string trajectory_csv(const std::vector<PositionRecord>& rows);

}  // namespace acu
