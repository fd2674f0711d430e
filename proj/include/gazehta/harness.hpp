#pragma once

// Training and evaluation loops, AdamW, the one-cycle learning-rate schedule
// and the versioned checkpoint container.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazehta/core.hpp"
#include "gazehta/data.hpp"
#include "gazehta/gtgen.hpp"
#include "gazehta/losses.hpp"
#include "gazehta/matching.hpp"
#include "gazehta/metrics.hpp"
#include "gazehta/model.hpp"
#include "gazehta/postprocess.hpp"
#include "gazehta/rng.hpp"

namespace gazehta {

// ---------------------------------------------------------------------------
// Schedule

struct OneCycle {
  double start_div = 25.0;    // initial lr = max_lr / start_div
  double final_div = 1e4;     // final lr = max_lr / final_div
  double warmup_fraction = 0.3;
};

inline double cosine_interp(double from, double to, double pct) {
  return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * pct));
}

/// Learning rate at a continuous position t in [0, total_steps - 1]:
/// cosine warm-up from max/25 to max over the first 30% of the steps, then
/// cosine annealing to max/1e4 at the final step.
inline double one_cycle_lr_at(double t, long total_steps, double max_lr, const OneCycle& oc = {}) {
  const double start = max_lr / oc.start_div, final_lr = max_lr / oc.final_div;
  const double peak = oc.warmup_fraction * static_cast<double>(total_steps);
  const double last = static_cast<double>(total_steps - 1);
  if (t <= peak) return peak > 0.0 ? cosine_interp(start, max_lr, t / peak) : max_lr;
  if (last <= peak) return max_lr;
  return cosine_interp(max_lr, final_lr, (t - peak) / (last - peak));
}

inline double one_cycle_lr(long step, long total_steps, double max_lr, const OneCycle& oc = {}) {
  if (total_steps < 1 || step < 0 || step >= total_steps)
    throw InvalidArgument("one_cycle_lr: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + ")");
  if (!(max_lr > 0.0)) throw InvalidArgument("one_cycle_lr: max_lr must be > 0");
  return one_cycle_lr_at(static_cast<double>(step), total_steps, max_lr, oc);
}

// ---------------------------------------------------------------------------
// Optimizer

/// AdamW with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamW(std::size_t n = 0) : m_(n, 0.0f), v_(n, 0.0f) {}

  void step(nn::Buffer<float>& params, const nn::Buffer<float>& grads, double lr, double weight_decay) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw InvalidArgument("AdamW: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      const double m = beta1 * m_[i] + (1.0 - beta1) * g;
      const double v = beta2 * v_[i] + (1.0 - beta2) * g * g;
      m_[i] = static_cast<float>(m);
      v_[i] = static_cast<float>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + eps) + weight_decay * params[i];
      params[i] = static_cast<float>(params[i] - lr * update);
    }
  }

  long steps() const { return t_; }
  const std::vector<float>& first_moment() const { return m_; }
  const std::vector<float>& second_moment() const { return v_; }
  void restore(std::vector<float> m, std::vector<float> v, long t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  std::vector<float> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  double max_lr = 1e-3;
  int epochs = 20;
  int batch_size = 8;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  MatchWeights match_weights;
  LossOptions loss_options;
  bool deterministic = true;
  GtConfig gt;
};

inline void validate(const TrainConfig& c) {
  if (!(c.max_lr > 0.0)) throw InvalidArgument("max_lr must be > 0");
  if (c.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (c.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(c.weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  validate(c.loss_weights);
  validate(c.match_weights);
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"max_lr", c.max_lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"loss_weights",
           {c.loss_weights.head, c.loss_weights.gaze, c.loss_weights.connection, c.loss_weights.oof,
            c.loss_weights.detection}},
          {"match_weights", {c.match_weights.w_gaze, c.match_weights.w_head, c.match_weights.w_oof}},
          {"unmatched_head_supervision", c.loss_options.unmatched_head_supervision},
          {"deterministic", c.deterministic},
          {"sigma", c.gt.sigma},
          {"connection_points", c.gt.connection_points}};
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'G', 'Z', 'H', 'T', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  ModelConfig model;
  nlohmann::json train_config;  // echo of the TrainConfig that produced it
  std::vector<nn::ParamInfo> layout;
  nn::Buffer<float> params;
  std::vector<float> adam_m, adam_v;
  long adam_steps = 0;
  int epochs_done = 0;
  long global_step = 0;
  std::string rng_state;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class Vec>
void write_floats(std::ostream& os, const Vec& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::vector<float> read_floats(std::istream& is, std::size_t n) {
  std::vector<float> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw VersionError("checkpoint truncated");
  return v;
}

}  // namespace detail

/// Layout: 8-byte magic, u32 format version, u64 header length, JSON header,
/// then float32 blobs (parameters, Adam first moment, Adam second moment).
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = to_json(ck.model);
  header["train"] = ck.train_config;
  header["adam_steps"] = ck.adam_steps;
  header["epochs_done"] = ck.epochs_done;
  header["global_step"] = ck.global_step;
  header["rng_state"] = ck.rng_state;
  header["param_count"] = ck.params.size();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& info : ck.layout)
    tensors.push_back({{"name", info.name}, {"shape", info.shape}, {"offset", info.offset}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::write_floats(os, ck.params);
    detail::write_floats(os, ck.adam_m);
    detail::write_floats(os, ck.adam_v);
    if (!os) throw std::runtime_error("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw VersionError(path.string() + " is not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint format version " + std::to_string(version));
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw VersionError("checkpoint truncated");
  const auto header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded()) throw VersionError("checkpoint header is not valid JSON");

  Checkpoint ck;
  ck.model = model_config_from_json(header.at("model"));
  ck.train_config = header.at("train");
  ck.adam_steps = header.at("adam_steps");
  ck.epochs_done = header.at("epochs_done");
  ck.global_step = header.at("global_step");
  ck.rng_state = header.at("rng_state");
  for (const auto& t : header.at("tensors")) {
    nn::ParamInfo info;
    info.name = t.at("name");
    info.shape = t.at("shape").get<std::vector<int>>();
    info.offset = t.at("offset");
    info.size = 1;
    for (int d : info.shape) info.size *= static_cast<std::size_t>(d);
    ck.layout.push_back(info);
  }
  const std::size_t n = header.at("param_count");
  const std::vector<float> params = detail::read_floats(is, n);
  ck.params.assign(params.begin(), params.end());
  ck.adam_m = detail::read_floats(is, n);
  ck.adam_v = detail::read_floats(is, n);
  return ck;
}

/// Builds a network from a checkpoint, verifying that the stored tensor
/// layout matches what the echoed configuration constructs.
inline Network<float> network_from_checkpoint(const Checkpoint& ck) {
  Network<float> net(ck.model);
  const auto& infos = net.params().infos;
  bool ok = infos.size() == ck.layout.size() && net.params().count() == ck.params.size();
  for (std::size_t i = 0; ok && i < infos.size(); ++i)
    ok = infos[i].name == ck.layout[i].name && infos[i].shape == ck.layout[i].shape &&
         infos[i].offset == ck.layout[i].offset;
  if (!ok) throw VersionError("checkpoint tensor layout does not match its model configuration");
  net.params().values = ck.params;
  return net;
}

// ---------------------------------------------------------------------------
// Training

struct LogRow {
  long step = 0;  // 1-based
  LossBreakdown loss;
  double lr = 0.0;
};

inline std::string csv_header() { return "step,l_h,l_g,l_c,l_det,l_o,total,lr"; }

inline std::string csv_row(const LogRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step, r.loss.l_h, r.loss.l_g,
                r.loss.l_c, r.loss.l_det, r.loss.l_o, r.loss.total, r.lr);
  return buf;
}

namespace detail {

inline bool all_finite(const ProposalSet& ps) {
  for (const auto* group : {&ps.head_maps, &ps.gaze_maps, &ps.connection_maps})
    for (const Heatmap& m : *group)
      for (double v : m.values())
        if (!std::isfinite(v)) return false;
  for (double z : ps.oof_logits)
    if (std::isnan(z)) return false;
  return true;
}

}  // namespace detail

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  std::function<void(const LogRow&)> on_step;
  /// Called after each epoch with the checkpoint; return false to stop.
  std::function<bool(const Checkpoint&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

/// Per-step loop: forward, Hungarian matching, loss, backward, AdamW step at
/// the one-cycle rate. `resume` continues from an end-of-epoch checkpoint.
inline TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const Dataset& data,
                         const TrainHooks& hooks = {}, const Checkpoint* resume = nullptr) {
  validate(config);
  if (data.empty()) throw InvalidArgument("cannot train on an empty dataset");

  Network<float> net(model_config);
  AdamW opt(net.params().count());
  Rng rng(stream_seed(config.seed, 0x5eed));
  int start_epoch = 0;
  long step = 0;
  if (resume) {
    if (!(resume->model == model_config))
      throw VersionError("resume checkpoint was produced by a different model configuration");
    net = network_from_checkpoint(*resume);
    opt.restore(resume->adam_m, resume->adam_v, resume->adam_steps);
    rng.set_state(resume->rng_state);
    start_epoch = resume->epochs_done;
    step = resume->global_step;
  } else {
    net.init_parameters(config.seed);
  }

  GtConfig gt_config = config.gt;
  gt_config.size = model_config.heatmap_size;
  std::vector<std::optional<GroundTruthMaps>> gt_cache(data.size());
  auto ground_truth = [&](std::size_t i) -> const GroundTruthMaps& {
    if (!gt_cache[i]) gt_cache[i] = make_ground_truth(data.annotations(i), gt_config);
    return *gt_cache[i];
  };

  const long per_epoch = static_cast<long>((data.size() + config.batch_size - 1) / config.batch_size);
  const long total_steps = per_epoch * config.epochs;
  TrainResult result;
  nn::Buffer<float> grads(net.params().count());
  Network<float>::Activations act;
  std::vector<std::size_t> order(data.size());

  auto snapshot = [&](int epochs_done) {
    Checkpoint ck;
    ck.model = model_config;
    ck.train_config = to_json(config);
    ck.layout = net.params().infos;
    ck.params = net.params().values;
    ck.adam_m = opt.first_moment();
    ck.adam_v = opt.second_moment();
    ck.adam_steps = opt.steps();
    ck.epochs_done = epochs_done;
    ck.global_step = step;
    ck.rng_state = rng.state();
    return ck;
  };

  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (long b = 0; b < per_epoch; ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * config.batch_size;
      const std::size_t hi = std::min(order.size(), lo + config.batch_size);
      std::fill(grads.begin(), grads.end(), 0.0f);
      auto abort_batch = [&](const char* what) {
        std::string ids;
        for (std::size_t q = lo; q < hi; ++q) ids += (ids.empty() ? "" : ", ") + data.scene_id(order[q]);
        throw TrainingAborted(std::string(what) + " at step " + std::to_string(step + 1) + "; batch scenes: " + ids);
      };
      LossBreakdown mean;
      for (std::size_t q = lo; q < hi; ++q) {
        const std::size_t idx = order[q];
        net.forward(data.image(idx), act);
        const ProposalSet props = net.proposals(act);
        if (!detail::all_finite(props)) abort_batch("non-finite network output");
        const GroundTruthMaps& gt = ground_truth(idx);
        const Assignment assignment = match_instances(props, gt, config.match_weights);
        OutputGrads og;
        const LossBreakdown lb = total_loss(props, net.detection_map(act), gt, assignment, config.loss_weights,
                                            config.loss_options, &og);
        net.backward(act, og, grads);
        mean.l_h += lb.l_h;
        mean.l_g += lb.l_g;
        mean.l_c += lb.l_c;
        mean.l_det += lb.l_det;
        mean.l_o += lb.l_o;
        mean.total += lb.total;
      }
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (double* v : {&mean.l_h, &mean.l_g, &mean.l_c, &mean.l_det, &mean.l_o, &mean.total}) *v *= inv;
      bool finite = std::isfinite(mean.total);
      for (float& g : grads) {
        g = static_cast<float>(g * inv);
        finite = finite && std::isfinite(g);
      }
      if (!finite) abort_batch("non-finite loss or gradient");
      const double lr = one_cycle_lr(step, total_steps, config.max_lr);
      opt.step(net.params().values, grads, lr, config.weight_decay);
      ++step;
      LogRow row{step, mean, lr};
      result.log.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
    }
    result.checkpoint = snapshot(epoch + 1);
    if (hooks.on_epoch && !hooks.on_epoch(result.checkpoint)) return result;
  }
  if (start_epoch >= config.epochs) result.checkpoint = snapshot(start_epoch);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  MetricReport report;
  std::vector<ScenePredictions> scenes;
};

inline ScenePredictions scene_predictions(const ProposalSet& props, const std::string& scene_id) {
  ScenePredictions sp;
  sp.scene_id = scene_id;
  sp.predictions = to_instances(props);
  for (const auto& p : sp.predictions) sp.gaze_maps.emplace_back(props.gaze_maps[p.proposal_index]);
  return sp;
}

inline std::vector<std::vector<Annotation>> all_annotations(const Dataset& data) {
  std::vector<std::vector<Annotation>> gts;
  for (std::size_t i = 0; i < data.size(); ++i) gts.push_back(data.annotations(i));
  return gts;
}

/// Full inference pipeline over a dataset; parameters are not modified.
inline EvalResult evaluate(const Network<float>& net, const Dataset& data, const EvalOptions& options = {}) {
  if (data.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  EvalResult r;
  Network<float>::Activations act;
  for (std::size_t i = 0; i < data.size(); ++i) {
    net.forward(data.image(i), act);
    r.scenes.push_back(scene_predictions(net.proposals(act), data.scene_id(i)));
  }
  r.report = compute_report(r.scenes, all_annotations(data), options);
  return r;
}

inline EvalResult evaluate(const Checkpoint& ck, const Dataset& data, const EvalOptions& options = {}) {
  return evaluate(network_from_checkpoint(ck), data, options);
}

/// Proposals that reproduce the ground truth exactly: instance k carries the
/// k-th target maps and a saturated out-of-frame logit; the remaining slots
/// are empty.
inline ProposalSet oracle_proposals(const GroundTruthMaps& gt, int num_proposals) {
  if (gt.instance_count() > num_proposals) throw CapacityExceeded(num_proposals, gt.instance_count());
  ProposalSet ps;
  const MapSize ms = gt.detection_map.size();
  for (int k = 0; k < num_proposals; ++k) {
    if (k < gt.instance_count()) {
      ps.head_maps.push_back(gt.head_maps[k]);
      ps.gaze_maps.push_back(gt.gaze_maps[k]);
      ps.connection_maps.push_back(gt.connection_maps[k]);
      ps.oof_logits.push_back(gt.oof_labels[k] ? 30.0 : -30.0);
    } else {
      ps.head_maps.emplace_back(ms);
      ps.gaze_maps.emplace_back(ms);
      ps.connection_maps.emplace_back(ms);
      ps.oof_logits.push_back(30.0);
    }
  }
  return ps;
}

inline EvalResult evaluate_oracle(const Dataset& data, const GtConfig& gt_config, int num_proposals,
                                  const EvalOptions& options = {}) {
  if (data.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  EvalResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto gt = make_ground_truth(data.annotations(i), gt_config);
    r.scenes.push_back(scene_predictions(oracle_proposals(gt, num_proposals), data.scene_id(i)));
  }
  r.report = compute_report(r.scenes, all_annotations(data), options);
  return r;
}

// ---------------------------------------------------------------------------
// Prediction dumps (JSON-lines, one scene per line)

/// Writes predictions; gaze maps are kept only where scoring needs them
/// (predictions associated with an in-frame annotation).
inline void write_predictions(const std::vector<ScenePredictions>& scenes,
                              const std::vector<std::vector<Annotation>>& gts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions " + path.string());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& sp = scenes[s];
    std::vector<char> keep_map(sp.predictions.size(), 0);
    const auto assoc = associate(sp.predictions, gts[s]);
    for (std::size_t g = 0; g < gts[s].size(); ++g)
      if (assoc[g] >= 0 && !gts[s][g].out_of_frame) keep_map[assoc[g]] = 1;
    nlohmann::json line;
    line["scene_id"] = sp.scene_id;
    line["predictions"] = nlohmann::json::array();
    for (std::size_t k = 0; k < sp.predictions.size(); ++k) {
      const auto& p = sp.predictions[k];
      nlohmann::json j = {{"head_box", {p.head_box.x0, p.head_box.y0, p.head_box.x1, p.head_box.y1}},
                          {"gaze_point", {p.gaze_point.x, p.gaze_point.y}},
                          {"oof_prob", p.oof_prob},
                          {"confidence", p.confidence},
                          {"proposal", p.proposal_index}};
      if (keep_map[k] && sp.gaze_maps[k]) {
        const Heatmap& m = *sp.gaze_maps[k];
        j["gaze_map"] = {{"width", m.width()}, {"height", m.height()}, {"values", m.values()}};
      }
      line["predictions"].push_back(j);
    }
    out << line.dump() << '\n';
  }
}

inline std::vector<ScenePredictions> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions " + path.string());
  std::vector<ScenePredictions> scenes;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      ScenePredictions sp;
      sp.scene_id = j.at("scene_id");
      for (const auto& pj : j.at("predictions")) {
        InstancePrediction p;
        const auto& b = pj.at("head_box");
        p.head_box = {b[0], b[1], b[2], b[3]};
        p.gaze_point = {pj.at("gaze_point")[0], pj.at("gaze_point")[1]};
        p.oof_prob = pj.at("oof_prob");
        p.confidence = pj.at("confidence");
        p.proposal_index = pj.at("proposal");
        sp.predictions.push_back(p);
        if (pj.contains("gaze_map")) {
          const auto& gm = pj["gaze_map"];
          Heatmap m({gm.at("width").get<int>(), gm.at("height").get<int>()});
          m.values() = gm.at("values").get<std::vector<double>>();
          if (m.values().size() != m.pixel_count()) throw ParseError("gaze_map size mismatch", line);
          sp.gaze_maps.emplace_back(std::move(m));
        } else {
          sp.gaze_maps.emplace_back(std::nullopt);
        }
      }
      scenes.push_back(std::move(sp));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line);
    }
  }
  return scenes;
}

/// Re-scores dumped predictions against a dataset's annotations, matching
/// scenes by id.
inline MetricReport rescore_predictions(const std::vector<ScenePredictions>& scenes, const Dataset& data,
                                        const EvalOptions& options = {}) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) index[data.scene_id(i)] = i;
  std::vector<std::vector<Annotation>> gts;
  for (const auto& sp : scenes) {
    auto it = index.find(sp.scene_id);
    if (it == index.end()) throw InvalidArgument("prediction for unknown scene " + sp.scene_id);
    gts.push_back(data.annotations(it->second));
  }
  return compute_report(scenes, gts, options);
}

}  // namespace gazehta
