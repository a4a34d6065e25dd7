#include "acu/cli.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "acu/accounting.hpp"
#include "acu/equivalence.hpp"
#include "acu/manifest.hpp"
#include "acu/training.hpp"
#include "acu/verify.hpp"

namespace acu {

namespace fs = std::filesystem;

namespace {

constexpr double kEquivalenceTolerance = 1e-10;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

struct Options {
  int threads = 1;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::string csv;
  std::string manifest;
  std::string config;
  std::string out_path;
  std::string snapshot;
  std::string histogram;
  double bin_width = 1.0;
};

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const auto reports = run_gradient_suite(o.seed, o.trials);
  out << format_report_table(reports);
  if (!o.csv.empty()) write_file(o.csv, reports_to_csv(reports));
  const bool ok = all_passed(reports);
  out << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

int cmd_equivcheck(const Options& o, std::ostream& out) {
  const EquivalenceSweep s = run_equivalence_sweep(o.seed, o.trials, Parallelism{o.threads});
  out << fmt::format("layers: {}\nmax diff: {:.3e}\ntolerance: {:.0e}\n", s.layers, s.max_diff,
                     kEquivalenceTolerance);
  return s.max_diff <= kEquivalenceTolerance ? kExitOk : kExitFailure;
}

int cmd_count(const Options& o, std::ostream& out) {
  const Network net = load_manifest(o.manifest, o.seed);
  const auto rows = network_cost_rows(net);
  out << cost_table_text(rows);
  if (!o.csv.empty()) write_file(o.csv, cost_table_csv(rows));
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  TrainJob job = load_train_job(o.config);
  Network net = parse_manifest(job.manifest_text, job.manifest_dir, o.seed);
  job.config.seed = o.seed;
  if (job.auto_warmup) job.config.warmup_iters = default_warmup_iters(net, job.config.total_iters);
  Dataset data;
  if (job.task.type == "tensors") {
    data = {read_tensor(job.task.inputs_file), read_tensor(job.task.targets_file)};
  } else {
    const Shape4 in = net.input_shape();
    if (in.c != job.task.offsets.size() || in.h != job.task.size || in.w != job.task.size) {
      throw std::invalid_argument(fmt::format(
          "task gives {} channel(s) of {}x{} but the network input is {}x{}x{}",
          job.task.offsets.size(), job.task.size, job.task.size, in.c, in.h, in.w));
    }
    data = make_grouped_shift_task(job.task.offsets, job.task.samples, job.task.size, o.seed,
                                   job.task.smoothing_passes);
  }
  const fs::path dir = o.out_path;
  fs::create_directories(dir);
  try {
    const TrainResult r = train(std::move(net), data, job.config, Parallelism{o.threads});
    write_file(dir / "loss.csv", loss_trace_csv(r.loss_trace));
    write_file(dir / "trajectory.csv", trajectory_csv(r.trajectory));
    save_snapshot(r.network, dir / "snapshot");
    out << fmt::format("iterations: {}\n", job.config.total_iters);
    if (!r.loss_trace.empty()) {
      out << fmt::format("initial loss: {:.6g}\nfinal loss: {:.6g}\n", r.loss_trace.front().loss,
                         r.loss_trace.back().loss);
    }
    out << fmt::format("wrote {}\n", dir.string());
    return kExitOk;
  } catch (const TrainingDiverged& e) {
    save_snapshot(e.last_good(), dir / "snapshot");
    err << "training diverged: " << e.what() << "; last good snapshot in "
        << (dir / "snapshot").string() << "\n";
    return kExitFailure;
  }
}

int cmd_export(const Options& o, std::ostream& out) {
  const Network net = load_manifest(o.snapshot, o.seed);
  const std::string csv = positions_csv(net);
  write_file(o.out_path, csv);
  std::size_t rows = 0;
  for (char ch : csv) rows += ch == '\n';
  out << fmt::format("wrote {} position rows to {}\n", rows - 1, o.out_path);
  if (!o.histogram.empty()) {
    write_file(o.histogram, position_histogram_csv(net, o.bin_width));
    out << fmt::format("wrote histogram (bin width {}) to {}\n", o.bin_width, o.histogram);
  }
  return kExitOk;
}

int cmd_lower(const Options& o, std::ostream& out) {
  const Network net = load_manifest(o.manifest, o.seed);
  const fs::path dir = o.out_path;
  fs::create_directories(dir);
  std::string sparsity = sparsity_csv_header();
  std::string origins = "layer,origin_row,origin_col,extent_h,extent_w\n";
  for (const auto& [name, layer] : net.acu_layers()) {
    const ExtrapolatedKernel k = extrapolate_weights(*layer);
    write_tensor(dir / (name + ".extrapolated.tns"), k.weights);
    const SparsityReport rep = sparsity_report(k);
    sparsity += sparsity_csv_row(name, rep);
    origins += fmt::format("{},{},{},{},{}\n", name, k.origin_row, k.origin_col, k.extent_h(),
                           k.extent_w());
    out << fmt::format("{}: {}x{} kernel, {} nonzero taps, density {:.4f}{}\n", name,
                       rep.extent_h, rep.extent_w, rep.nonzeros, rep.density,
                       rep.within_7x7 ? "" : " (exceeds 7x7)");
  }
  write_file(dir / "sparsity.csv", sparsity);
  write_file(dir / "kernels.csv", origins);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active convolution unit toolkit", "acu"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* grad = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  grad->add_option("--seed", o.seed);
  grad->add_option("--trials", o.trials)->default_val(3)->check(CLI::PositiveNumber);
  grad->add_option("--csv", o.csv, "also write the reports as CSV");

  auto* equiv = app.add_subcommand("equivcheck", "ACU vs extrapolated-kernel convolution");
  equiv->add_option("--seed", o.seed);
  equiv->add_option("--trials", o.trials)->default_val(100)->check(CLI::PositiveNumber);

  auto* count = app.add_subcommand("count", "parameter and MAdd table for a manifest");
  count->add_option("--manifest", o.manifest)->required();
  count->add_option("--csv", o.csv);
  count->add_option("--seed", o.seed);

  auto* tr = app.add_subcommand("train", "train a network from a JSON config");
  tr->add_option("--config", o.config)->required();
  tr->add_option("--out", o.out_path)->required();
  tr->add_option("--seed", o.seed);

  auto* exp = app.add_subcommand("export-positions", "write synapse positions as CSV");
  exp->add_option("--snapshot", o.snapshot, "snapshot directory or manifest")->required();
  exp->add_option("--out", o.out_path)->required();
  exp->add_option("--histogram", o.histogram, "also write a 2-D position histogram");
  exp->add_option("--bin-width", o.bin_width)->check(CLI::PositiveNumber);

  auto* lower = app.add_subcommand("lower", "write extrapolated dense kernels");
  lower->add_option("--manifest", o.manifest, "manifest or snapshot directory")->required();
  lower->add_option("--out", o.out_path)->required();
  lower->add_option("--seed", o.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*grad) return cmd_gradcheck(o, out);
    if (*equiv) return cmd_equivcheck(o, out);
    if (*count) return cmd_count(o, out);
    if (*tr) return cmd_train(o, out, err);
    if (*exp) return cmd_export(o, out);
    if (*lower) return cmd_lower(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace acu
