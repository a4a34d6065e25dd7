#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "acu/accounting.hpp"
#include "acu/network.hpp"
#include "acu/training.hpp"

namespace acu {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a network from a JSON manifest. Relative tensor paths resolve
/// against `base_dir`; "he" initializers draw from (seed, "<layer>.weights").
///
///   {"input": {"channels": 1, "height": 16, "width": 16},
///    "loss": "mse",
///    "layers": [{"type": "acu", "name": "a1", "out_channels": 8, "groups": 1,
///                "group_mode": "multi", "positions": {"grid": [3, 3, 1]},
///                "weights": "he", "bias": "zero"}, ...]}
Network parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir,
                       std::uint64_t seed);

/// Accepts a manifest file or a directory holding manifest.json.
Network load_manifest(const std::filesystem::path& path, std::uint64_t seed);

/// Writes manifest.json plus one tensor file per parameter into `dir`.
/// Positions are stored as (1, sets, K, 2) including the pinned origin row.
void save_snapshot(const Network& net, const std::filesystem::path& dir);

/// Training data for `acu train`: either the synthetic shift task or a pair
/// of tensor files (inputs (N, C, H, W) and targets matching the loss).
struct TaskSpec {
  std::string type = "shift";
  std::filesystem::path inputs_file;
  std::filesystem::path targets_file;
  std::vector<Offset> offsets;  ///< shift: one per channel
  std::size_t samples = 64;
  std::size_t size = 16;
  std::size_t smoothing_passes = kDefaultSmoothingPasses;
};

struct TrainJob {
  std::string manifest_text;
  std::filesystem::path manifest_dir;
  TaskSpec task;
  TrainConfig config;
  bool auto_warmup = false;
};

/// {"network": <manifest object> | "path/to/manifest.json",
///  "task": {"type": "shift", "offsets": [[2, 3]], "samples": 64, "size": 16}
///        | {"type": "tensors", "inputs": "x.tns", "targets": "y.tns"},
///  "train": {"base_lr": 0.01, ..., "warmup_iters": 0 | "auto"}}
TrainJob load_train_job(const std::filesystem::path& path);

/// One row per (ACU layer, group, synapse).
std::string positions_csv(const Network& net);

/// Counts of all synapse positions on a grid of `bin_width` cells centred on
/// multiples of the width; every cell between the extreme bins is listed.
std::string position_histogram_csv(const Network& net, double bin_width);

/// Cost rows for every parametrized layer, tracking spatial size through the chain.
std::vector<CostRow> network_cost_rows(const Network& net);

}  // namespace acu
