#include "acu/accounting.hpp"

#include <fmt/format.h>

namespace acu {

LayerCost& LayerCost::operator+=(const LayerCost& o) {
  weight_params += o.weight_params;
  position_params += o.position_params;
  bias_params += o.bias_params;
  core_madds += o.core_madds;
  interp_madds += o.interp_madds;
  return *this;
}

namespace {

std::uint64_t taps_of(const LayerDesc& layer) {
  switch (layer.kind) {
    case LayerKind::acu:
      return layer.synapses;
    case LayerKind::naive_conv:
      return static_cast<std::uint64_t>(layer.kernel_h) * layer.kernel_w;
    case LayerKind::fully_connected:
      return 1;
    case LayerKind::other:
      return 0;
  }
  return 0;
}

}  // namespace

LayerCost count_params(const LayerDesc& layer) {
  LayerCost cost;
  if (layer.kind == LayerKind::other) return cost;
  const ConvGeometry& g = layer.geometry;
  g.validate();
  const std::uint64_t G = g.groups;
  const std::uint64_t K = taps_of(layer);
  cost.weight_params = (g.in_channels / G) * (g.out_channels / G) * K * G;
  if (layer.kind == LayerKind::acu) {
    const std::uint64_t sets = layer.mode == GroupMode::shared_position ? 1 : G;
    cost.position_params = 2 * (K - 1) * sets;
  }
  cost.bias_params = layer.has_bias ? g.out_channels : 0;
  return cost;
}

LayerCost count_madds(const LayerDesc& layer, std::size_t in_h, std::size_t in_w) {
  LayerCost cost;
  if (layer.kind == LayerKind::other) return cost;
  const ConvGeometry& g = layer.geometry;
  g.validate();
  if (layer.kind == LayerKind::fully_connected) {
    cost.core_madds = static_cast<std::uint64_t>(g.in_channels) * g.out_channels;
    return cost;
  }
  const std::size_t kh = layer.kind == LayerKind::acu ? 1 : layer.kernel_h;
  const std::size_t kw = layer.kind == LayerKind::acu ? 1 : layer.kernel_w;
  if (in_h + 2 * g.pad_h < kh || in_w + 2 * g.pad_w < kw) {
    throw std::invalid_argument("kernel larger than padded input in count_madds");
  }
  const std::uint64_t out_h = (in_h + 2 * g.pad_h - kh) / g.stride_h + 1;
  const std::uint64_t out_w = (in_w + 2 * g.pad_w - kw) / g.stride_w + 1;
  const std::uint64_t K = taps_of(layer);
  cost.core_madds = out_h * out_w * g.out_channels * (g.in_channels / g.groups) * K;
  if (layer.kind == LayerKind::acu) {
    cost.interp_madds = out_h * out_w * g.in_channels * K * 4;
  }
  return cost;
}

LayerDesc describe(const AcuLayer& layer, const std::string& name) {
  LayerDesc d;
  d.name = name;
  d.kind = LayerKind::acu;
  d.geometry = layer.geometry;
  d.synapses = layer.synapses();
  d.mode = layer.mode;
  return d;
}

LayerDesc describe(const DenseConv& conv, const std::string& name) {
  LayerDesc d;
  d.name = name;
  d.kind = LayerKind::naive_conv;
  d.geometry = conv.geometry;
  d.kernel_h = conv.kernel_h();
  d.kernel_w = conv.kernel_w();
  return d;
}

std::string cost_table_text(const std::vector<CostRow>& rows) {
  std::string out =
      fmt::format("{:<16} {:<8} {:>12} {:>10} {:>8} {:>14} {:>14} {:>14}\n", "layer", "kind",
                  "weights", "positions", "bias", "params_ex_bias", "core_madds", "interp_madds");
  LayerCost total;
  for (const auto& r : rows) {
    out += fmt::format("{:<16} {:<8} {:>12} {:>10} {:>8} {:>14} {:>14} {:>14}\n", r.name, r.kind,
                       r.cost.weight_params, r.cost.position_params, r.cost.bias_params,
                       r.cost.params_ex_bias(), r.cost.core_madds, r.cost.interp_madds);
    total += r.cost;
  }
  out += fmt::format("{:<16} {:<8} {:>12} {:>10} {:>8} {:>14} {:>14} {:>14}\n", "TOTAL", "",
                     total.weight_params, total.position_params, total.bias_params,
                     total.params_ex_bias(), total.core_madds, total.interp_madds);
  out += fmt::format("total params (ex-bias): {}\n", total.params_ex_bias());
  out += fmt::format("total params: {}\n", total.total_params());
  out += fmt::format("total MAdds: {}\n", total.total_madds());
  return out;
}

std::string cost_table_csv(const std::vector<CostRow>& rows) {
  std::string out =
      "layer,kind,weight_params,position_params,bias_params,params_ex_bias,core_madds,"
      "interp_madds\n";
  LayerCost total;
  auto line = [](const std::string& name, const std::string& kind, const LayerCost& c) {
    return fmt::format("{},{},{},{},{},{},{},{}\n", name, kind, c.weight_params,
                       c.position_params, c.bias_params, c.params_ex_bias(), c.core_madds,
                       c.interp_madds);
  };
  for (const auto& r : rows) {
    out += line(r.name, r.kind, r.cost);
    total += r.cost;
  }
  out += line("TOTAL", "", total);
  return out;
}

}  // namespace acu
