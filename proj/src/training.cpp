#include "acu/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "acu/rng.hpp"

namespace acu {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be > 0");
  if (!(position_lr > 0.0)) throw std::invalid_argument("position_lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (warmup_iters > total_iters) {
    throw std::invalid_argument("warmup_iters (" + std::to_string(warmup_iters) +
                                ") exceeds total_iters (" + std::to_string(total_iters) + ")");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (log_every == 0) throw std::invalid_argument("log_every must be >= 1");
  if (!(lr_factor > 0.0)) throw std::invalid_argument("lr_factor must be > 0");
}

double lr_at(const TrainConfig& cfg, std::size_t iter) {
  if (cfg.schedule == ScheduleKind::linear) {
    if (cfg.total_iters == 0) return cfg.base_lr;
    return cfg.base_lr *
           (1.0 - static_cast<double>(iter) / static_cast<double>(cfg.total_iters));
  }
  double lr = cfg.base_lr;
  for (std::size_t m : cfg.milestones) {
    if (iter >= m) lr *= cfg.lr_factor;
  }
  return lr;
}

std::size_t default_warmup_iters(const Network& net, std::size_t total_iters) {
  bool shared_shape = false;
  for (const auto& [name, layer] : net.acu_layers()) {
    if (layer->geometry.groups == 1 || layer->mode == GroupMode::shared_position) {
      shared_shape = true;
    }
  }
  if (!shared_shape) return 0;
  return static_cast<std::size_t>(static_cast<double>(total_iters) / 6.4);
}

void sgd_step(std::span<const ParamSlot> params, SgdState& state, const TrainConfig& cfg,
              std::size_t iter) {
  if (iter >= cfg.total_iters) {
    throw std::invalid_argument("sgd_step iter " + std::to_string(iter) + " >= total_iters " +
                                std::to_string(cfg.total_iters));
  }
  for (const ParamSlot& p : params) {
    if (p.value.size() != p.grad.size()) {
      throw std::invalid_argument("parameter " + p.name + " has mismatched gradient size");
    }
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in " + p.name);
    }
  }
  if (state.velocity.size() != params.size()) {
    state.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.velocity[i].assign(params[i].value.size(), 0.0);
    }
  }

  const double lr = lr_at(cfg, iter);
  const double mu = cfg.momentum;
  const bool positions_frozen = iter < cfg.warmup_iters;

  // Per-layer L2 norm of the concatenated position gradient.
  std::map<std::string, double> pos_norm;
  if (cfg.position_grad_norm == PositionGradNorm::l2) {
    for (const ParamSlot& p : params) {
      if (p.kind != ParamKind::position) continue;
      double& acc = pos_norm[p.layer];
      for (double g : p.grad) acc += g * g;
    }
    for (auto& [layer, sq] : pos_norm) sq = std::sqrt(sq);
  }
  const double pos_lr = cfg.position_lr * (lr / cfg.base_lr);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSlot& p = params[i];
    auto& v = state.velocity[i];
    if (p.kind == ParamKind::position) {
      if (positions_frozen) continue;
      double scale = 1.0;
      if (cfg.position_grad_norm == PositionGradNorm::l2) {
        const double norm = pos_norm[p.layer];
        scale = norm > 0.0 ? 1.0 / norm : 0.0;
      }
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j] * scale;
        double step = g;
        if (cfg.position_momentum) {
          v[j] = mu * v[j] + g;
          step = g + mu * v[j];
        }
        double nv = p.value[j] - pos_lr * step;
        if (cfg.clamp_positions && p.clamp_limit > 0.0) {
          nv = std::clamp(nv, -p.clamp_limit, p.clamp_limit);
        }
        p.value[j] = nv;
      }
      continue;
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j] + cfg.weight_decay * p.value[j];
      v[j] = mu * v[j] + g;
      p.value[j] -= lr * (g + mu * v[j]);
    }
  }
}

// ---- data ----------------------------------------------------------------------

Tensor4 gather_rows(const Tensor4& t, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("gather_rows needs at least one index");
  Tensor4 out(indices.size(), t.c(), t.h(), t.w());
  const std::size_t row = t.c() * t.h() * t.w();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.n()) throw std::out_of_range("gather_rows index out of range");
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * row), row,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return out;
}

namespace {

std::vector<double> smooth_field(std::size_t size, std::size_t passes, Rng& rng) {
  // Blur a larger canvas with valid-only 3x3 box passes so the crop has no
  // border falloff.
  std::size_t side = size + 2 * passes;
  std::vector<double> field(side * side);
  for (double& v : field) v = rng.uniform(-1.0, 1.0);
  for (std::size_t p = 0; p < passes; ++p) {
    const std::size_t next = side - 2;
    std::vector<double> out(next * next, 0.0);
    for (std::size_t r = 0; r < next; ++r) {
      for (std::size_t c = 0; c < next; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j) s += field[(r + i) * side + c + j];
        out[r * next + c] = s / 9.0;
      }
    }
    field = std::move(out);
    side = next;
  }
  const double mean = std::accumulate(field.begin(), field.end(), 0.0) /
                      static_cast<double>(field.size());
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  var /= static_cast<double>(field.size());
  const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (double& v : field) v *= inv_sd;
  return field;
}

}  // namespace

Dataset make_grouped_shift_task(std::span<const Offset> offsets, std::size_t samples,
                                std::size_t size, std::uint64_t seed, std::size_t passes) {
  if (offsets.empty() || samples == 0 || size == 0) {
    throw std::invalid_argument("shift task needs offsets, samples and size >= 1");
  }
  const double limit = static_cast<double>(size) / 4.0;
  for (const Offset& o : offsets) {
    if (std::abs(o.alpha) > limit || std::abs(o.beta) > limit) {
      throw std::invalid_argument(fmt::format("shift ({}, {}) exceeds size/4 = {}", o.alpha,
                                              o.beta, limit));
    }
  }
  const std::size_t C = offsets.size();
  Dataset d{Tensor4(samples, C, size, size), Tensor4(samples, C, size, size)};
  Rng rng(seed, "shift-task");
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto field = smooth_field(size, passes, rng);
      std::copy(field.begin(), field.end(), d.inputs.plane(n, c).begin());
    }
  }
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t m = 0; m < size; ++m) {
        for (std::size_t q = 0; q < size; ++q) {
          d.targets(n, c, m, q) =
              bilinear_sample(d.inputs, n, c, static_cast<double>(m) + offsets[c].alpha,
                              static_cast<double>(q) + offsets[c].beta);
        }
      }
    }
  }
  return d;
}

Dataset make_shift_task(Offset offset, std::size_t samples, std::size_t size, std::uint64_t seed,
                        std::size_t passes) {
  const Offset one[] = {offset};
  return make_grouped_shift_task(one, samples, size, seed, passes);
}

Network shift_regression_network(std::size_t channels, std::size_t size, GroupMode mode) {
  ConvGeometry g{channels, channels, channels};
  std::vector<std::unique_ptr<Layer>> layers;
  layers.push_back(std::make_unique<AcuModule>("shift", AcuLayer::zeros(g, 2, mode)));
  return Network(Shape4{1, channels, size, size}, std::move(layers), LossKind::mse);
}

TrainConfig shift_task_config(std::size_t total_iters, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.base_lr = 0.01;
  cfg.weight_decay = 0.0;
  cfg.position_lr = 0.01;
  cfg.batch_size = 8;
  cfg.total_iters = total_iters;
  cfg.seed = seed;
  cfg.schedule = ScheduleKind::linear;
  cfg.log_every = 50;
  return cfg;
}

// ---- training loop -------------------------------------------------------------

std::vector<PositionRecord> position_rows(const Network& net, std::size_t iter) {
  std::vector<PositionRecord> rows;
  for (const auto& [name, layer] : net.acu_layers()) {
    for (std::size_t g = 0; g < layer->geometry.groups; ++g) {
      for (std::size_t k = 0; k < layer->synapses(); ++k) {
        const Offset o = layer->offset(g, k);
        rows.push_back({iter, name, g, k, o.alpha, o.beta});
      }
    }
  }
  return rows;
}

namespace {

std::vector<std::vector<double>> snapshot_values(const std::vector<ParamSlot>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.value.begin(), p.value.end());
  return out;
}

void restore_values(const std::vector<ParamSlot>& params,
                    const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i].value.begin());
  }
}

}  // namespace

TrainResult train(Network network, const Dataset& data, const TrainConfig& cfg, Parallelism par,
                  const TrainHooks& hooks) {
  cfg.validate();
  network.validate();
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  const Shape4& in = network.input_shape();
  if (data.inputs.c() != in.c || data.inputs.h() != in.h || data.inputs.w() != in.w) {
    throw std::invalid_argument("dataset inputs " + data.inputs.shape().str() +
                                " do not match network input " + in.str());
  }
  if (data.targets.n() != data.size()) {
    throw std::invalid_argument("dataset targets and inputs disagree on sample count");
  }

  TrainResult result;
  SgdState state;
  Rng rng(cfg.seed, "batches");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<std::size_t> batch(cfg.batch_size);

  std::vector<ParamSlot> params = network.params();
  std::vector<std::vector<double>> last_good = snapshot_values(params);

  for (std::size_t iter = 0; iter < cfg.total_iters; ++iter) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      batch[b] = order[cursor++];
    }
    const Tensor4 x = gather_rows(data.inputs, batch);
    const Tensor4 t = gather_rows(data.targets, batch);
    const double loss = network.train_step_gradients(x, t, par);
    if (!std::isfinite(loss)) {
      restore_values(params, last_good);
      throw TrainingDiverged(fmt::format("loss became non-finite at iteration {}", iter),
                             network, iter);
    }
    last_good = snapshot_values(params);
    if (iter % cfg.log_every == 0) {
      result.loss_trace.push_back({iter, loss, lr_at(cfg, iter)});
      auto rows = position_rows(network, iter);
      result.trajectory.insert(result.trajectory.end(), rows.begin(), rows.end());
    }
    // Slot spans are refreshed because forward() may update clamp limits.
    params = network.params();
    try {
      sgd_step(params, state, cfg, iter);
    } catch (const NonFiniteGradient& e) {
      restore_values(params, last_good);
      throw TrainingDiverged(e.what(), network, iter);
    }
    if (hooks.after_step) hooks.after_step(iter, network);
  }
  auto rows = position_rows(network, cfg.total_iters);
  result.trajectory.insert(result.trajectory.end(), rows.begin(), rows.end());
  if (cfg.total_iters > 0) {
    // Final loss on the last batch after the last update.
    std::vector<std::size_t> probe(batch.begin(), batch.end());
    const Tensor4 y = network.forward(gather_rows(data.inputs, probe), par);
    const double loss =
        compute_loss(network.loss_kind(), y, gather_rows(data.targets, probe)).loss;
    result.loss_trace.push_back({cfg.total_iters, loss, lr_at(cfg, cfg.total_iters - 1)});
  }
  result.network = std::move(network);
  return result;
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::string out = "iter,loss,lr\n";
  for (const auto& r : trace) out += fmt::format("{},{:.17g},{:.17g}\n", r.iter, r.loss, r.lr);
  return out;
}

std::string trajectory_csv(const std::vector<PositionRecord>& rows) {
  std::string out = "iter,layer,group,synapse,alpha,beta\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", r.iter, r.layer, r.group, r.synapse,
                       r.alpha, r.beta);
  }
  return out;
}

}  // namespace acu
