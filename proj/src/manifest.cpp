#include "acu/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

namespace acu {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open " + what + " " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ManifestError("cannot write " + path.string());
  out << text;
  if (!out) throw ManifestError("short write to " + path.string());
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ManifestError(what + " is not valid JSON: " + e.what());
  }
}

// Field access with errors that name the layer.
struct Ctx {
  std::string where;

  [[noreturn]] void fail(const std::string& msg) const { throw ManifestError(where + ": " + msg); }

  std::size_t count(const json& j, const char* key, std::optional<std::size_t> fallback = {}) const {
    if (!j.contains(key)) {
      if (fallback) return *fallback;
      fail(std::string("missing field '") + key + "'");
    }
    const json& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(std::string("field '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  double real(const json& j, const char* key, double fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) fail(std::string("field '") + key + "' must be a number");
    return j.at(key).get<double>();
  }

  std::string text(const json& j, const char* key, const std::string& fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) fail(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
  }

  // Scalar or [h, w] pair.
  std::pair<std::size_t, std::size_t> pair(const json& j, const char* key,
                                           std::size_t fallback) const {
    if (!j.contains(key)) return {fallback, fallback};
    const json& v = j.at(key);
    if (v.is_array()) {
      if (v.size() != 2) fail(std::string("field '") + key + "' must be a number or [h, w]");
      return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
    }
    const std::size_t s = count(j, key);
    return {s, s};
  }
};

Tensor4 load_param_tensor(const Ctx& ctx, const json& spec, const fs::path& base,
                          const Shape4& expected, const char* what) {
  const fs::path file = base / spec.at("file").get<std::string>();
  if (!fs::exists(file)) {
    ctx.fail(fmt::format("{} file {} does not exist", what, file.string()));
  }
  Tensor4 t;
  try {
    t = read_tensor(file);
  } catch (const TensorIoError& e) {
    ctx.fail(fmt::format("{} file {}: {}", what, file.string(), e.what()));
  }
  if (t.shape() != expected) {
    ctx.fail(fmt::format("{} shape mismatch: expected {}, found {}", what, expected.str(),
                         t.shape().str()));
  }
  return t;
}

Tensor4 init_weights(const Ctx& ctx, const json& layer, const fs::path& base, const Shape4& shape,
                     std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  const json spec = layer.contains("weights") ? layer.at("weights") : json("he");
  if (spec.is_string()) {
    const auto kind = spec.get<std::string>();
    if (kind == "he") return he_init(shape, fan_in, seed, name + ".weights");
    if (kind == "zero") return Tensor4(shape);
    ctx.fail("unknown weights initializer '" + kind + "'");
  }
  if (spec.is_object() && spec.contains("file")) {
    return load_param_tensor(ctx, spec, base, shape, "weights");
  }
  ctx.fail("weights must be \"he\", \"zero\" or {\"file\": ...}");
}

std::vector<double> init_bias(const Ctx& ctx, const json& layer, const fs::path& base,
                              std::size_t out) {
  const json spec = layer.contains("bias") ? layer.at("bias") : json("zero");
  if (spec.is_string() && spec.get<std::string>() == "zero") return std::vector<double>(out, 0.0);
  if (spec.is_object() && spec.contains("file")) {
    const Tensor4 t = load_param_tensor(ctx, spec, base, Shape4{1, out, 1, 1}, "bias");
    return {t.values().begin(), t.values().end()};
  }
  ctx.fail("bias must be \"zero\" or {\"file\": ...}");
}

PositionSet init_positions(const Ctx& ctx, const json& layer, const fs::path& base,
                           std::size_t sets) {
  const json spec = layer.contains("positions") ? layer.at("positions") : json("zero");
  const bool has_k = layer.contains("synapses");
  const std::size_t k_given = has_k ? ctx.count(layer, "synapses") : 0;
  auto check_k = [&](std::size_t k) {
    if (has_k && k_given != k) {
      ctx.fail(fmt::format("'synapses' is {} but the position initializer gives {}", k_given, k));
    }
    return k;
  };
  if (spec.is_string() && spec.get<std::string>() == "zero") {
    if (!has_k) ctx.fail("zero positions need 'synapses'");
    if (k_given == 0) ctx.fail("'synapses' must be >= 1");
    return PositionSet(sets, k_given);
  }
  if (!spec.is_object()) ctx.fail("positions must be \"zero\" or an object");
  try {
    if (spec.contains("grid")) {
      const json& g = spec.at("grid");
      if (!g.is_array() || g.size() != 3) ctx.fail("grid must be [kh, kw, dilation]");
      const auto kh = g[0].get<std::size_t>(), kw = g[1].get<std::size_t>(),
                 d = g[2].get<std::size_t>();
      check_k(kh * kw);
      return make_grid_positions(kh, kw, d, sets);
    }
    if (spec.contains("offsets")) {
      // The same list for every set; entry 0 must be the origin.
      std::vector<Offset> one;
      for (const json& o : spec.at("offsets")) one.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
      const std::size_t k = check_k(one.size());
      std::vector<Offset> all;
      for (std::size_t s = 0; s < sets; ++s) all.insert(all.end(), one.begin(), one.end());
      return PositionSet::from_offsets(k, all);
    }
    if (spec.contains("file")) {
      if (!has_k) ctx.fail("position files need 'synapses'");
      const Tensor4 t = load_param_tensor(ctx, spec, base, Shape4{1, sets, k_given, 2}, "positions");
      std::vector<Offset> all(sets * k_given);
      for (std::size_t s = 0; s < sets; ++s)
        for (std::size_t k = 0; k < k_given; ++k) all[s * k_given + k] = {t(0, s, k, 0), t(0, s, k, 1)};
      return PositionSet::from_offsets(k_given, all);
    }
  } catch (const ManifestError&) {
    throw;
  } catch (const std::exception& e) {
    ctx.fail(std::string("bad positions: ") + e.what());
  }
  ctx.fail("positions must have one of 'grid', 'offsets' or 'file'");
}

ConvGeometry read_geometry(const Ctx& ctx, const json& j, std::size_t in_channels) {
  ConvGeometry g;
  g.in_channels = ctx.count(j, "in_channels", in_channels);
  if (g.in_channels != in_channels) {
    ctx.fail(fmt::format("in_channels is {} but the previous layer gives {}", g.in_channels,
                         in_channels));
  }
  g.out_channels = ctx.count(j, "out_channels");
  g.groups = ctx.count(j, "groups", 1);
  std::tie(g.stride_h, g.stride_w) = ctx.pair(j, "stride", 1);
  std::tie(g.pad_h, g.pad_w) = ctx.pair(j, "pad", 0);
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    ctx.fail(e.what());
  }
  return g;
}

struct Builder {
  fs::path base;
  std::uint64_t seed;
  std::size_t counter = 0;

  std::unique_ptr<Layer> build(const json& j, Shape4& shape) {
    if (!j.is_object()) throw ManifestError("layer entries must be objects");
    const std::string type = j.value("type", "");
    const std::string name = j.contains("name") ? j.at("name").get<std::string>()
                                                : fmt::format("{}{}", type, counter);
    ++counter;
    Ctx ctx{"layer '" + name + "'"};
    if (name.empty() || name.find_first_of("/\\") != std::string::npos) {
      ctx.fail("layer names must be non-empty and contain no path separators");
    }
    std::unique_ptr<Layer> layer;
    try {
      layer = make(ctx, type, name, j, shape);
      shape = layer->output_shape(shape);
    } catch (const ManifestError&) {
      throw;
    } catch (const std::exception& e) {
      ctx.fail(e.what());
    }
    return layer;
  }

  std::unique_ptr<Layer> make(const Ctx& ctx, const std::string& type, const std::string& name,
                              const json& j, const Shape4& in) {
    if (type == "conv") {
      const ConvGeometry g = read_geometry(ctx, j, in.c);
      const auto [kh, kw] = ctx.pair(j, "kernel", 3);
      const Shape4 ws{g.out_channels, g.in_per_group(), kh, kw};
      DenseConv conv{g, init_weights(ctx, j, base, ws, g.in_per_group() * kh * kw, seed, name),
                     init_bias(ctx, j, base, g.out_channels)};
      return std::make_unique<ConvLayer>(name, std::move(conv));
    }
    if (type == "acu") {
      const ConvGeometry g = read_geometry(ctx, j, in.c);
      const GroupMode mode = parse_group_mode(ctx.text(j, "group_mode", "multi"));
      const std::size_t sets = mode == GroupMode::shared_position ? 1 : g.groups;
      AcuLayer layer;
      layer.geometry = g;
      layer.mode = mode;
      layer.positions = init_positions(ctx, j, base, sets);
      const std::size_t K = layer.positions.synapses();
      layer.weights = init_weights(ctx, j, base, Shape4{g.out_channels, g.in_per_group(), 1, K},
                                   g.in_per_group() * K, seed, name);
      layer.bias = init_bias(ctx, j, base, g.out_channels);
      return std::make_unique<AcuModule>(name, std::move(layer));
    }
    if (type == "relu") return std::make_unique<ReluLayer>(name);
    if (type == "global_avg_pool") return std::make_unique<GlobalAvgPoolLayer>(name);
    if (type == "fc") {
      const std::size_t in_features = in.c * in.h * in.w;
      const std::size_t out = ctx.count(j, "out_features");
      if (out == 0) ctx.fail("out_features must be >= 1");
      Tensor4 w = init_weights(ctx, j, base, Shape4{out, in_features, 1, 1}, in_features, seed, name);
      return std::make_unique<FullyConnectedLayer>(name, std::move(w), init_bias(ctx, j, base, out));
    }
    if (type == "residual") {
      if (!j.contains("layers") || !j.at("layers").is_array()) ctx.fail("residual needs 'layers'");
      std::vector<std::unique_ptr<Layer>> body;
      Shape4 s = in;
      for (const json& sub : j.at("layers")) body.push_back(build(sub, s));
      return std::make_unique<ResidualBlock>(name, std::move(body));
    }
    ctx.fail("unknown layer type '" + type + "'");
  }
};

// ---- snapshot ------------------------------------------------------------------

json file_ref(const fs::path& dir, const std::string& file, const Tensor4& t) {
  write_tensor(dir / file, t);
  return json{{"file", file}};
}

json geometry_json(const ConvGeometry& g) {
  return json{{"in_channels", g.in_channels},
              {"out_channels", g.out_channels},
              {"groups", g.groups},
              {"stride", {g.stride_h, g.stride_w}},
              {"pad", {g.pad_h, g.pad_w}}};
}

Tensor4 bias_tensor(const std::vector<double>& bias) {
  return Tensor4(Shape4{1, bias.size(), 1, 1}, bias);
}

json snapshot_layer(const Layer& l, const fs::path& dir) {
  const std::string& n = l.name();
  json j{{"type", l.type()}, {"name", n}};
  if (const auto* c = dynamic_cast<const ConvLayer*>(&l)) {
    j.update(geometry_json(c->conv().geometry));
    j["kernel"] = {c->conv().kernel_h(), c->conv().kernel_w()};
    j["weights"] = file_ref(dir, n + ".weights.tns", c->conv().weights);
    j["bias"] = file_ref(dir, n + ".bias.tns", bias_tensor(c->conv().bias));
  } else if (const auto* a = dynamic_cast<const AcuModule*>(&l)) {
    const AcuLayer& L = a->acu();
    j.update(geometry_json(L.geometry));
    j["group_mode"] = L.mode == GroupMode::shared_position ? "shared" : "multi";
    j["synapses"] = L.synapses();
    j["weights"] = file_ref(dir, n + ".weights.tns", L.weights);
    j["bias"] = file_ref(dir, n + ".bias.tns", bias_tensor(L.bias));
    const std::size_t sets = L.positions.sets(), K = L.positions.synapses();
    Tensor4 pos(1, sets, K, 2);
    for (std::size_t s = 0; s < sets; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        const Offset o = L.positions.at(s, k);
        pos(0, s, k, 0) = o.alpha;
        pos(0, s, k, 1) = o.beta;
      }
    }
    j["positions"] = file_ref(dir, n + ".positions.tns", pos);
  } else if (const auto* f = dynamic_cast<const FullyConnectedLayer*>(&l)) {
    j["out_features"] = f->weights().n();
    j["weights"] = file_ref(dir, n + ".weights.tns", f->weights());
    j["bias"] = file_ref(dir, n + ".bias.tns", bias_tensor(f->bias()));
  } else if (const auto* r = dynamic_cast<const ResidualBlock*>(&l)) {
    json body = json::array();
    for (const auto& sub : r->body()) body.push_back(snapshot_layer(*sub, dir));
    j["layers"] = std::move(body);
  }
  return j;
}

}  // namespace

Network parse_manifest(std::string_view json_text, const fs::path& base_dir, std::uint64_t seed) {
  const json doc = parse_json(json_text, "manifest");
  if (!doc.is_object()) throw ManifestError("manifest must be a JSON object");
  Ctx ctx{"manifest"};
  if (!doc.contains("input")) ctx.fail("missing 'input'");
  const json& in = doc.at("input");
  Shape4 shape{1, ctx.count(in, "channels"), ctx.count(in, "height"), ctx.count(in, "width")};
  if (shape.c == 0 || shape.h == 0 || shape.w == 0) ctx.fail("input dims must be >= 1");
  const Shape4 input = shape;
  LossKind loss = LossKind::mse;
  try {
    loss = parse_loss_kind(ctx.text(doc, "loss", "mse"));
  } catch (const std::invalid_argument& e) {
    ctx.fail(e.what());
  }
  if (!doc.contains("layers") || !doc.at("layers").is_array()) ctx.fail("missing 'layers' array");
  Builder b{base_dir, seed};
  std::vector<std::unique_ptr<Layer>> layers;
  for (const json& j : doc.at("layers")) layers.push_back(b.build(j, shape));
  Network net(input, std::move(layers), loss);
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    ctx.fail(e.what());
  }
  return net;
}

Network load_manifest(const fs::path& path, std::uint64_t seed) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  return parse_manifest(read_text(file, "manifest"), file.parent_path(), seed);
}

void save_snapshot(const Network& net, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ManifestError("cannot create snapshot directory " + dir.string());
  const Shape4& in = net.input_shape();
  json doc{{"input", {{"channels", in.c}, {"height", in.h}, {"width", in.w}}},
           {"loss", to_string(net.loss_kind())}};
  json layers = json::array();
  for (const auto& l : net.layers()) layers.push_back(snapshot_layer(*l, dir));
  doc["layers"] = std::move(layers);
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

// ---- train job -----------------------------------------------------------------

TrainJob load_train_job(const fs::path& path) {
  const json doc = parse_json(read_text(path, "train config"), "train config " + path.string());
  Ctx ctx{"train config " + path.string()};
  if (!doc.is_object()) ctx.fail("must be a JSON object");
  TrainJob job;
  const fs::path base = path.parent_path();
  if (!doc.contains("network")) ctx.fail("missing 'network'");
  const json& netj = doc.at("network");
  if (netj.is_string()) {
    const fs::path mpath = base / netj.get<std::string>();
    job.manifest_text = read_text(mpath, "manifest");
    job.manifest_dir = mpath.parent_path();
  } else {
    job.manifest_text = netj.dump();
    job.manifest_dir = base;
  }

  if (!doc.contains("task")) ctx.fail("missing 'task'");
  const json& task = doc.at("task");
  job.task.type = task.value("type", "");
  if (job.task.type == "tensors") {
    if (!task.contains("inputs") || !task.contains("targets")) {
      ctx.fail("tensors task needs 'inputs' and 'targets' files");
    }
    job.task.inputs_file = base / task.at("inputs").get<std::string>();
    job.task.targets_file = base / task.at("targets").get<std::string>();
  } else if (job.task.type == "shift") {
    if (!task.contains("offsets") || !task.at("offsets").is_array() ||
        task.at("offsets").empty()) {
      ctx.fail("task.offsets must be a non-empty list of [dr, dc]");
    }
    for (const json& o : task.at("offsets")) {
      if (!o.is_array() || o.size() != 2) ctx.fail("task.offsets entries must be [dr, dc]");
      job.task.offsets.push_back({o[0].get<double>(), o[1].get<double>()});
    }
    job.task.samples = ctx.count(task, "samples", job.task.samples);
    job.task.size = ctx.count(task, "size", job.task.size);
    job.task.smoothing_passes = ctx.count(task, "smoothing_passes", job.task.smoothing_passes);
  } else {
    ctx.fail("task.type must be \"shift\" or \"tensors\"");
  }

  const json tj = doc.value("train", json::object());
  TrainConfig& c = job.config;
  c.base_lr = ctx.real(tj, "base_lr", c.base_lr);
  c.momentum = ctx.real(tj, "momentum", c.momentum);
  c.weight_decay = ctx.real(tj, "weight_decay", c.weight_decay);
  c.position_lr = ctx.real(tj, "position_lr", c.position_lr);
  const std::string norm = ctx.text(tj, "position_grad_norm", "l2");
  if (norm == "l2") c.position_grad_norm = PositionGradNorm::l2;
  else if (norm == "none") c.position_grad_norm = PositionGradNorm::none;
  else ctx.fail("position_grad_norm must be \"l2\" or \"none\"");
  c.position_momentum = tj.value("position_momentum", c.position_momentum);
  c.clamp_positions = tj.value("clamp_positions", c.clamp_positions);
  c.batch_size = ctx.count(tj, "batch_size", c.batch_size);
  c.total_iters = ctx.count(tj, "total_iters", c.total_iters);
  c.log_every = ctx.count(tj, "log_every", c.log_every);
  c.lr_factor = ctx.real(tj, "lr_factor", c.lr_factor);
  if (tj.contains("warmup_iters") && tj.at("warmup_iters").is_string()) {
    if (tj.at("warmup_iters").get<std::string>() != "auto") ctx.fail("warmup_iters must be a count or \"auto\"");
    job.auto_warmup = true;
  } else {
    c.warmup_iters = ctx.count(tj, "warmup_iters", 0);
  }
  const std::string sched = ctx.text(tj, "schedule", "step");
  if (sched == "step") c.schedule = ScheduleKind::step;
  else if (sched == "linear") c.schedule = ScheduleKind::linear;
  else ctx.fail("schedule must be \"step\" or \"linear\"");
  if (tj.contains("milestones")) {
    for (const json& m : tj.at("milestones")) c.milestones.push_back(m.get<std::size_t>());
  }
  if (tj.contains("seed")) ctx.fail("the seed comes from --seed, not the config file");
  return job;
}

// ---- exports -------------------------------------------------------------------

std::string positions_csv(const Network& net) {
  std::string out = "layer,group,synapse,alpha,beta\n";
  for (const auto& r : position_rows(net, 0)) {
    out += fmt::format("{},{},{},{:.17g},{:.17g}\n", r.layer, r.group, r.synapse, r.alpha, r.beta);
  }
  return out;
}

std::string position_histogram_csv(const Network& net, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw std::invalid_argument("histogram bin width must be > 0");
  }
  std::map<std::pair<long long, long long>, std::size_t> counts;
  for (const auto& r : position_rows(net, 0)) {
    const auto a = static_cast<long long>(std::llround(r.alpha / bin_width));
    const auto b = static_cast<long long>(std::llround(r.beta / bin_width));
    ++counts[{a, b}];
  }
  std::string out = "alpha,beta,count\n";
  if (counts.empty()) return out;
  long long amin = counts.begin()->first.first, amax = amin;
  long long bmin = counts.begin()->first.second, bmax = bmin;
  for (const auto& [key, n] : counts) {
    amin = std::min(amin, key.first);
    amax = std::max(amax, key.first);
    bmin = std::min(bmin, key.second);
    bmax = std::max(bmax, key.second);
  }
  for (long long a = amin; a <= amax; ++a) {
    for (long long b = bmin; b <= bmax; ++b) {
      const auto it = counts.find({a, b});
      out += fmt::format("{:.17g},{:.17g},{}\n", static_cast<double>(a) * bin_width,
                         static_cast<double>(b) * bin_width, it == counts.end() ? 0 : it->second);
    }
  }
  return out;
}

namespace {

void cost_rows(const Layer& l, Shape4& shape, std::vector<CostRow>& rows) {
  const Shape4 in = shape;
  if (const auto* r = dynamic_cast<const ResidualBlock*>(&l)) {
    Shape4 s = in;
    for (const auto& sub : r->body()) cost_rows(*sub, s, rows);
    shape = l.output_shape(in);
    return;
  }
  shape = l.output_shape(in);
  LayerDesc d;
  std::string kind;
  if (const auto* c = dynamic_cast<const ConvLayer*>(&l)) {
    d = describe(c->conv(), l.name());
    kind = "conv";
  } else if (const auto* a = dynamic_cast<const AcuModule*>(&l)) {
    d = describe(a->acu(), l.name());
    kind = "acu";
  } else if (const auto* f = dynamic_cast<const FullyConnectedLayer*>(&l)) {
    d.name = l.name();
    d.kind = LayerKind::fully_connected;
    d.geometry.in_channels = f->weights().c();
    d.geometry.out_channels = f->weights().n();
    kind = "fc";
  } else {
    return;
  }
  LayerCost cost = count_params(d);
  const LayerCost m = count_madds(d, in.h, in.w);
  cost.core_madds = m.core_madds;
  cost.interp_madds = m.interp_madds;
  rows.push_back({l.name(), kind, cost});
}

}  // namespace

std::vector<CostRow> network_cost_rows(const Network& net) {
  std::vector<CostRow> rows;
  Shape4 shape = net.input_shape();
  shape.n = 1;
  for (const auto& l : net.layers()) cost_rows(*l, shape, rows);
  return rows;
}

}  // namespace acu
