#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "acu/ops.hpp"

namespace acu {

enum class LayerKind { naive_conv, acu, fully_connected, other };

/// What the cost model needs to know about a layer.
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::naive_conv;
  ConvGeometry geometry;
  std::size_t kernel_h = 1;  ///< naive conv only
  std::size_t kernel_w = 1;
  std::size_t synapses = 1;  ///< ACU only
  GroupMode mode = GroupMode::multi_position;
  bool has_bias = true;
};

struct LayerCost {
  std::uint64_t weight_params = 0;
  std::uint64_t position_params = 0;
  std::uint64_t bias_params = 0;
  std::uint64_t core_madds = 0;
  std::uint64_t interp_madds = 0;

  std::uint64_t params_ex_bias() const { return weight_params + position_params; }
  std::uint64_t total_params() const { return params_ex_bias() + bias_params; }
  std::uint64_t total_madds() const { return core_madds + interp_madds; }
  LayerCost& operator+=(const LayerCost& o);
};

/// Weight, position and bias counts. For ACUs:
///   weights   = (C_I / G) * (C_O / G) * K * G
///   positions = 2 * (K - 1) * G   (2 * (K - 1) with one shared set)
LayerCost count_params(const LayerDesc& layer);

/// Multiply-accumulates of one forward pass on an in_h x in_w input.
/// core = H_out * W_out * C_O * (C_I / G) * taps; an ACU additionally pays
/// 4 MAdds per bilinear sample, one sample per (input channel, synapse,
/// output location). Bias adds are not counted.
LayerCost count_madds(const LayerDesc& layer, std::size_t in_h, std::size_t in_w);

LayerDesc describe(const AcuLayer& layer, const std::string& name = {});
LayerDesc describe(const DenseConv& conv, const std::string& name = {});

struct CostRow {
  std::string name;
  std::string kind;
  LayerCost cost;
};

std::string cost_table_text(const std::vector<CostRow>& rows);
std::string cost_table_csv(const std::vector<CostRow>& rows);

}  // namespace acu
