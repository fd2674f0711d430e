// gazehta: generate synthetic data, train, evaluate, visualize and convert
// annotations.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
// Every option can also be set through GAZEHTA_<OPTION> (upper case, dashes
// as underscores) or an INI/TOML file given with --config.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gazehta/gazehta.hpp"

namespace fs = std::filesystem;
using namespace gazehta;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Global {
  std::string workdir = ".";
  bool quiet = false;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : fs::path(workdir) / path;
  }
  fs::path existing(const std::string& p, const char* what) const {
    if (p.empty()) throw UsageError(std::string("missing ") + what);
    const fs::path path = resolve(p);
    if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path.string());
    return path;
  }
};

void env(CLI::Option* o, const std::string& name) { o->envname("GAZEHTA_" + name); }

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out = "data";
  std::size_t scenes = 100;
  std::uint64_t seed = 0;
  std::size_t first_index = 0;
  int image_size = 256;
  int max_people = 2;
  double p_oof = 0.2;
  int min_objects = 1;
  int max_objects = 3;
};

int cmd_generate(const Global& g, const GenerateArgs& a) {
  SynthConfig sc;
  sc.rng_seed = a.seed;
  sc.image_size = a.image_size;
  sc.max_people = a.max_people;
  sc.p_out_of_frame = a.p_oof;
  sc.object_count_range = {a.min_objects, a.max_objects};
  try {
    validate(sc);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const Dataset ds = make_synthetic_dataset(sc, a.scenes, a.first_index);
  const fs::path dir = g.resolve(a.out);
  write_dataset(ds, dir);
  std::size_t instances = 0, oof = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (const auto& an : ds.annotations(i)) {
      ++instances;
      oof += an.out_of_frame;
    }
  std::printf("wrote %zu scenes, %zu instances (%zu out of frame) to %s\n", ds.size(), instances, oof,
              dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out = "run";
  std::string preset = "compact";
  std::string resume;
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int num_proposals = 20;
  double sigma = 3.0;
  bool no_connection = false;
  bool no_head_feature = false;
  bool no_unmatched_head_loss = false;
};

int cmd_train(const Global& g, const TrainArgs& a) {
  const fs::path ann = g.existing(a.data, "dataset annotations");
  ModelConfig mc;
  TrainConfig tc;
  try {
    mc = ModelConfig::preset(a.preset);
    mc.num_proposals = a.num_proposals;
    mc.reinject_head_feature = !a.no_head_feature;
    validate(mc);
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.max_lr = a.lr;
    tc.weight_decay = a.weight_decay;
    tc.seed = a.seed;
    tc.gt.sigma = a.sigma;
    if (a.no_connection) tc.loss_weights.connection = 0.0;
    tc.loss_options.unmatched_head_supervision = !a.no_unmatched_head_loss;
    validate(tc);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(g.existing(a.resume, "resume checkpoint"));

  const Dataset ds = load_annotations(ann);
  for (const auto& w : ds.warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const fs::path out = g.resolve(a.out);
  fs::create_directories(out);
  const fs::path csv_path = out / "loss.csv";
  const fs::path ckpt_path = out / "checkpoint.ckpt";

  // On resume the log continues from the checkpoint's step.
  std::vector<std::string> kept;
  if (resume) {
    std::ifstream old(csv_path);
    std::string line;
    std::getline(old, line);
    while (std::getline(old, line) && static_cast<long>(kept.size()) < resume->global_step) kept.push_back(line);
  }
  std::ofstream csv(csv_path);
  csv << csv_header() << '\n';
  for (const auto& l : kept) csv << l << '\n';

  TrainHooks hooks;
  hooks.on_step = [&](const LogRow& r) {
    csv << csv_row(r) << '\n';
    if (!g.quiet && r.step % 10 == 0)
      std::fprintf(stderr, "step %ld  loss %.5f  lr %.3g\n", r.step, r.loss.total, r.lr);
  };
  hooks.on_epoch = [&](const Checkpoint& ck) {
    csv.flush();
    save_checkpoint(ck, ckpt_path);
    if (!g.quiet) std::fprintf(stderr, "epoch %d/%d saved %s\n", ck.epochs_done, a.epochs, ckpt_path.string().c_str());
    return true;
  };
  const TrainResult r = train(mc, tc, ds, hooks, resume ? &*resume : nullptr);
  save_checkpoint(r.checkpoint, ckpt_path);
  std::printf("trained %ld steps; checkpoint %s; log %s\n", r.checkpoint.global_step, ckpt_path.string().c_str(),
              csv_path.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  bool oracle = false;
  std::string predictions;
  std::string dump_predictions;
  std::string report;
  double auc_gt_radius = 0.0;
  double sigma = 3.0;
  int num_proposals = 20;
  int heatmap_size = 64;
};

int cmd_eval(const Global& g, const EvalArgs& a) {
  const fs::path ann = g.existing(a.data, "dataset annotations");
  const int sources = (a.oracle ? 1 : 0) + (a.predictions.empty() ? 0 : 1) + (a.checkpoint.empty() ? 0 : 1);
  if (sources != 1) throw UsageError("give exactly one of --checkpoint, --oracle, --predictions");
  EvalOptions opt;
  opt.auc_gt_radius = a.auc_gt_radius;

  MetricReport report;
  std::vector<ScenePredictions> scenes;
  const bool need_images = !a.oracle && a.predictions.empty();
  const Dataset ds = load_annotations(ann, need_images);
  for (const auto& w : ds.warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());
  if (ds.empty()) throw std::runtime_error("dataset has no scenes");

  if (a.oracle) {
    GtConfig gc;
    gc.sigma = a.sigma;
    gc.size = {a.heatmap_size, a.heatmap_size};
    auto r = evaluate_oracle(ds, gc, a.num_proposals, opt);
    report = r.report;
    scenes = std::move(r.scenes);
  } else if (!a.predictions.empty()) {
    scenes = read_predictions(g.existing(a.predictions, "predictions file"));
    report = rescore_predictions(scenes, ds, opt);
  } else {
    const Checkpoint ck = load_checkpoint(g.existing(a.checkpoint, "checkpoint"));
    auto r = evaluate(ck, ds, opt);
    report = r.report;
    scenes = std::move(r.scenes);
  }
  std::printf("%s", format_table(report).c_str());
  if (!a.report.empty()) {
    std::ofstream(g.resolve(a.report)) << to_json(report).dump(2) << '\n';
  }
  if (!a.dump_predictions.empty()) write_predictions(scenes, all_annotations(ds), g.resolve(a.dump_predictions));
  return 0;
}

// ---------------------------------------------------------------------------

struct VisualizeArgs {
  std::string data;
  std::string checkpoint;
  std::vector<std::string> scenes;
  std::string out = "vis";
  int max_instances = -1;
};

int cmd_visualize(const Global& g, const VisualizeArgs& a) {
  const fs::path ann = g.existing(a.data, "dataset annotations");
  const Checkpoint ck = load_checkpoint(g.existing(a.checkpoint, "checkpoint"));
  const Dataset ds = load_annotations(ann);
  const Network<float> net = network_from_checkpoint(ck);
  std::vector<std::size_t> chosen;
  if (a.scenes.empty()) {
    for (std::size_t i = 0; i < ds.size(); ++i) chosen.push_back(i);
  } else {
    for (const auto& id : a.scenes) {
      std::size_t i = 0;
      while (i < ds.size() && ds.scene_id(i) != id) ++i;
      if (i == ds.size()) throw UsageError("unknown scene id: " + id);
      chosen.push_back(i);
    }
  }
  VisualizeOptions vo;
  vo.max_instances = a.max_instances;
  Network<float>::Activations act;
  std::size_t written = 0;
  for (std::size_t i : chosen) {
    net.forward(ds.image(i), act);
    written += write_instance_panels(ds.image(i), ds.scene_id(i), net.proposals(act), g.resolve(a.out), vo).size();
  }
  std::printf("wrote %zu panels to %s\n", written, g.resolve(a.out).string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string format;
  std::string input;
  std::string images;
  std::string out = "annotations.jsonl";
  int stride = 1;
  std::vector<int> image_size;
};

int cmd_convert(const Global& g, const ConvertArgs& a) {
  const fs::path in = g.existing(a.input, "input annotations");
  const fs::path images = a.images.empty() ? in.parent_path() : g.resolve(a.images);
  ConvertOptions opt;
  opt.stride = a.stride;
  if (!a.image_size.empty()) {
    if (a.image_size.size() != 2) throw UsageError("--image-size takes WIDTH HEIGHT");
    opt.image_size = std::make_pair(a.image_size[0], a.image_size[1]);
  }
  ConvertReport rep;
  if (a.format == "gazefollow")
    rep = convert_gazefollow(in, images, g.resolve(a.out), opt);
  else
    rep = convert_video_attention_target(in, images, g.resolve(a.out), opt);
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("wrote %zu records (%zu skipped) to %s\n", rep.records, rep.skipped, g.resolve(a.out).string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-person gaze target detection: data, training and evaluation", "gazehta"};
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.require_subcommand(1);
  Global g;
  env(app.add_option("--workdir", g.workdir, "Base directory for relative paths")->capture_default_str(), "WORKDIR");
  env(app.add_flag("--quiet", g.quiet, "Suppress progress output"), "QUIET");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (PNG images + annotations.jsonl)");
  env(gen->add_option("--out", ga.out, "Output directory")->capture_default_str(), "OUT");
  env(gen->add_option("--scenes", ga.scenes, "Number of scenes")->capture_default_str(), "SCENES");
  env(gen->add_option("--seed", ga.seed, "Generator seed")->capture_default_str(), "SEED");
  env(gen->add_option("--first-index", ga.first_index, "Index of the first scene")->capture_default_str(),
      "FIRST_INDEX");
  env(gen->add_option("--image-size", ga.image_size, "Image side in pixels")->capture_default_str(), "IMAGE_SIZE");
  env(gen->add_option("--max-people", ga.max_people, "Maximum people per scene")->capture_default_str(),
      "MAX_PEOPLE");
  env(gen->add_option("--p-oof", ga.p_oof, "Probability that a person looks out of frame")->capture_default_str(),
      "P_OOF");
  env(gen->add_option("--min-objects", ga.min_objects, "Minimum distractor objects")->capture_default_str(),
      "MIN_OBJECTS");
  env(gen->add_option("--max-objects", ga.max_objects, "Maximum distractor objects")->capture_default_str(),
      "MAX_OBJECTS");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint.ckpt and loss.csv");
  env(tr->add_option("--data", ta.data, "Annotation file (JSON lines)"), "DATA");
  env(tr->add_option("--out", ta.out, "Output directory")->capture_default_str(), "OUT");
  env(tr->add_option("--preset", ta.preset, "Model preset")
          ->check(CLI::IsMember({"compact", "wide", "tiny"}))
          ->capture_default_str(),
      "PRESET");
  env(tr->add_option("--resume", ta.resume, "Continue from a checkpoint"), "RESUME");
  env(tr->add_option("--epochs", ta.epochs, "Training epochs")->capture_default_str(), "EPOCHS");
  env(tr->add_option("--batch-size", ta.batch_size, "Scenes per step")->capture_default_str(), "BATCH_SIZE");
  env(tr->add_option("--lr", ta.lr, "Peak learning rate of the one-cycle schedule")->capture_default_str(), "LR");
  env(tr->add_option("--weight-decay", ta.weight_decay, "AdamW weight decay")->capture_default_str(),
      "WEIGHT_DECAY");
  env(tr->add_option("--seed", ta.seed, "Initialization and shuffling seed")->capture_default_str(), "SEED");
  env(tr->add_option("--num-proposals", ta.num_proposals, "Proposal slots N")->capture_default_str(),
      "NUM_PROPOSALS");
  env(tr->add_option("--sigma", ta.sigma, "Gaussian sigma of targets, in heatmap pixels")->capture_default_str(),
      "SIGMA");
  env(tr->add_flag("--no-connection", ta.no_connection, "Drop connection-map supervision"), "NO_CONNECTION");
  env(tr->add_flag("--no-head-feature", ta.no_head_feature, "Disable head-feature re-injection"),
      "NO_HEAD_FEATURE");
  env(tr->add_flag("--no-unmatched-head-loss", ta.no_unmatched_head_loss,
                   "Leave head maps of unmatched proposals unsupervised"),
      "NO_UNMATCHED_HEAD_LOSS");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint, oracle predictions or a predictions dump");
  env(ev->add_option("--data", ea.data, "Annotation file (JSON lines)"), "DATA");
  env(ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint to evaluate"), "CHECKPOINT");
  env(ev->add_flag("--oracle", ea.oracle, "Score predictions built from the ground truth"), "ORACLE");
  env(ev->add_option("--predictions", ea.predictions, "Re-score a predictions dump"), "PREDICTIONS");
  env(ev->add_option("--dump-predictions", ea.dump_predictions, "Write predictions as JSON lines"),
      "DUMP_PREDICTIONS");
  env(ev->add_option("--report", ea.report, "Write the metric report as JSON"), "REPORT");
  env(ev->add_option("--auc-gt-radius", ea.auc_gt_radius, "Radius of positive pixels around gaze points")
          ->capture_default_str(),
      "AUC_GT_RADIUS");
  env(ev->add_option("--sigma", ea.sigma, "Target sigma for --oracle")->capture_default_str(), "SIGMA");
  env(ev->add_option("--num-proposals", ea.num_proposals, "Proposal slots for --oracle")->capture_default_str(),
      "NUM_PROPOSALS");
  env(ev->add_option("--heatmap-size", ea.heatmap_size, "Heatmap side for --oracle")->capture_default_str(),
      "HEATMAP_SIZE");

  VisualizeArgs va;
  auto* vis = app.add_subcommand("visualize", "Write per-instance PNG panels (scene, head, gaze, connection)");
  env(vis->add_option("--data", va.data, "Annotation file (JSON lines)"), "DATA");
  env(vis->add_option("--checkpoint", va.checkpoint, "Checkpoint to run"), "CHECKPOINT");
  vis->add_option("--scene", va.scenes, "Scene id (repeatable; default all)");
  env(vis->add_option("--out", va.out, "Output directory")->capture_default_str(), "OUT");
  env(vis->add_option("--max-instances", va.max_instances, "Panels per scene (negative keeps all)")
          ->capture_default_str(),
      "MAX_INSTANCES");

  ConvertArgs ca;
  auto* cv = app.add_subcommand("convert", "Convert GazeFollow / VideoAttentionTarget annotations to JSON lines");
  env(cv->add_option("--format", ca.format, "Source layout")
          ->check(CLI::IsMember({"gazefollow", "videoattentiontarget"}))
          ->required(),
      "FORMAT");
  env(cv->add_option("--input", ca.input, "GazeFollow CSV or VideoAttentionTarget annotation directory"), "INPUT");
  env(cv->add_option("--images", ca.images, "Image root (default: the input's directory)"), "IMAGES");
  env(cv->add_option("--out", ca.out, "Output JSON-lines file")->capture_default_str(), "OUT");
  env(cv->add_option("--stride", ca.stride, "Keep one frame in every STRIDE of a track")->capture_default_str(),
      "STRIDE");
  cv->add_option("--image-size", ca.image_size, "WIDTH HEIGHT used when images are unavailable")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(g, ga);
    if (*tr) return cmd_train(g, ta);
    if (*ev) return cmd_eval(g, ea);
    if (*vis) return cmd_visualize(g, va);
    if (*cv) return cmd_convert(g, ca);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
