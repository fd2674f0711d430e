// Acceptance suite. Usage: gazehta_acceptance <criterion> [artifact_dir]
// where <criterion> is 1..8 or "probes". Prints one PASS/FAIL line for the
// criterion; exit status 0 on PASS.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gazehta/gazehta.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace gazehta;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double minutes_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : std::string("n/a"); }

std::string summary(const MetricReport& r) {
  return fmt("mAP %.4f  AvgDist %s  MinDist %s  AUC %s  OOF-AP %s", r.map_instance, opt_str(r.avg_dist).c_str(),
             opt_str(r.min_dist).c_str(), opt_str(r.auc).c_str(), opt_str(r.oof_ap).c_str());
}

void note(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// 1. Ground-truth-built predictions score perfectly.

Outcome oracle_metrics(const fs::path&) {
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.rng_seed = 101;
  sc.max_people = 3;
  sc.p_out_of_frame = 0.3;
  const Dataset ds = make_synthetic_dataset(sc, 200);
  const MetricReport r = evaluate_oracle(ds, GtConfig{}, 20).report;
  const double mins = minutes_since(t0);
  const bool ok = r.map_instance == 1.0 && r.avg_dist == 0.0 && r.min_dist == 0.0 && r.auc == 1.0 &&
                  r.oof_ap == 1.0 && r.counts.out_of_frame > 0 && mins < 1.0;
  return {ok, summary(r) + fmt("  (%zu instances, %zu out of frame, %.1f s)", r.counts.instances,
                               r.counts.out_of_frame, mins * 60.0)};
}

// ---------------------------------------------------------------------------
// 2. Hungarian cost equals the exhaustive minimum.

Outcome hungarian_brute_force(const fs::path&) {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(202);
  std::uniform_int_distribution<int> dim(1, 7), small(0, 4);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  int mismatches = 0, tie_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int R = dim(gen), C = dim(gen);
    const bool integral = trial % 2 == 1;  // many exact ties
    CostMatrix cost(R, C);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) cost(r, c) = integral ? small(gen) : u(gen);

    // The exhaustive search enumerates row permutations, so it needs rows >= cols.
    const bool tall = R >= C;
    const int BR = tall ? R : C, BC = tall ? C : R;
    std::vector<std::vector<double>> m(BR, std::vector<double>(BC));
    for (int r = 0; r < BR; ++r)
      for (int c = 0; c < BC; ++c) m[r][c] = tall ? cost(r, c) : cost(c, r);
    const auto brute = oracle::brute_force_assignment(m);

    const Assignment a = hungarian(cost);
    std::vector<int> owner(BC, -1);
    for (auto [p, g] : a.pairs) (tall ? owner[g] : owner[p]) = tall ? p : g;
    double s = 0.0;  // summed in the oracle's column order
    for (int c = 0; c < BC; ++c) s += owner[c] < 0 ? std::nan("") : m[owner[c]][c];
    if (static_cast<int>(a.pairs.size()) != BC || s != brute.cost) ++mismatches;
    if (tall && owner != brute.rows) ++tie_mismatches;
  }
  const double mins = minutes_since(t0);
  return {mismatches == 0 && mins < 1.0,
          fmt("%d/1000 cost mismatches, %d lowest-index tie-break differences, %.1f s", mismatches, tie_mismatches,
              mins * 60.0)};
}

// ---------------------------------------------------------------------------
// 3. Finite-difference gradient check on the tiny model.

Outcome gradient_check(const fs::path&) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_layer;
  std::size_t groups = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto errs = gradcheck::run(seed);
    groups = errs.size();
    for (const auto& e : errs)
      if (!(e.relative_error <= worst)) {
        worst = e.relative_error;
        worst_layer = e.layer;
      }
  }
  const double mins = minutes_since(t0);
  return {worst < 1e-2 && mins < 5.0,
          fmt("max relative error %.3e (%s) over %zu groups x 5 seeds, %.1f s", worst, worst_layer.c_str(), groups,
              mins * 60.0)};
}

// ---------------------------------------------------------------------------
// 4. Loss formulas against brute-force evaluation.

Outcome loss_brute_force(const fs::path&) {
  std::mt19937_64 gen(404);
  std::uniform_int_distribution<int> side(1, 12), count(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto rel = [](double got, long double want) {
    return static_cast<double>(std::fabs(static_cast<long double>(got) - want) / std::max(std::fabs(want), 1e-300L));
  };
  double worst_h = 0.0, worst_d = 0.0, worst_b = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const MapSize s{side(gen), side(gen)};
    const int K = count(gen);
    std::vector<Heatmap> p, g;
    std::vector<std::vector<double>> pv, gv;
    for (int k = 0; k < K; ++k) {
      p.emplace_back(s);
      g.emplace_back(s);
      for (double& v : p.back().values()) v = u(gen);
      for (double& v : g.back().values()) v = u(gen);
      pv.push_back(p.back().values());
      gv.push_back(g.back().values());
    }
    worst_h = std::max(worst_h, rel(heatmap_mse(p, g), oracle::mse(pv, gv)));
    worst_d = std::max(worst_d, rel(detection_mse(p[0], g[0]), oracle::mse({pv[0]}, {gv[0]})));

    std::vector<double> probs;
    std::vector<bool> labels;
    for (int k = 0; k < K; ++k) {
      const double r = u(gen);
      probs.push_back(r < 0.1 ? 0.0 : (r > 0.9 ? 1.0 : u(gen)));  // clamping exercised
      labels.push_back(u(gen) < 0.5);
    }
    worst_b = std::max(worst_b, rel(oof_bce(probs, labels), oracle::bce(probs, labels, 1e-7)));
  }
  const double worst = std::max({worst_h, worst_d, worst_b});
  return {worst < 1e-10, fmt("max relative error heatmap_mse %.2e, detection_mse %.2e, oof_bce %.2e over 100 inputs",
                             worst_h, worst_d, worst_b)};
}

// ---------------------------------------------------------------------------
// 5. Compact model overfits 64 fixed scenes.

constexpr std::uint64_t kOverfitDataSeed = 505;
constexpr int kOverfitScenes = 64;

SynthConfig overfit_data_config() {
  SynthConfig sc;
  sc.rng_seed = kOverfitDataSeed;
  sc.max_people = 2;
  return sc;
}

Outcome overfit_synthetic(const fs::path& artifacts) {
  const Dataset ds = make_synthetic_dataset(overfit_data_config(), kOverfitScenes);
  const ModelConfig mc = ModelConfig::preset("compact");
  constexpr int kSteps = 2000, kLogEvery = 50;  // epochs of 8 steps
  int passed = 0, run = 0;
  std::optional<Checkpoint> keep;
  for (std::uint64_t seed = 0; seed < 3 && passed < 2 && passed + (3 - run) >= 2; ++seed, ++run) {
    TrainConfig tc;
    tc.seed = seed;
    tc.batch_size = 8;
    tc.epochs = kSteps / 8;
    const auto t0 = Clock::now();
    TrainHooks hooks;
    hooks.on_epoch = [&](const Checkpoint& ck) {
      if (ck.epochs_done % kLogEvery == 0 && ck.epochs_done != tc.epochs)
        note(fmt("seed %llu step %4ld  %s  %.1f min", static_cast<unsigned long long>(seed), ck.global_step,
                 summary(evaluate(ck, ds).report).c_str(), minutes_since(t0)));
      return true;
    };
    const TrainResult r = train(mc, tc, ds, hooks);
    const double mins = minutes_since(t0);
    const MetricReport rep = evaluate(r.checkpoint, ds).report;
    const bool ok = rep.map_instance >= 0.90 && rep.avg_dist.value_or(1.0) <= 0.05 &&
                    rep.oof_ap.value_or(0.0) >= 0.95 && r.checkpoint.global_step <= kSteps && mins <= 30.0;
    passed += ok;
    if (ok && !keep) keep = r.checkpoint;
    note(fmt("seed %llu step %4ld  %s  %.1f min: %s", static_cast<unsigned long long>(seed), r.checkpoint.global_step,
             summary(rep).c_str(), mins, ok ? "met" : "not met"));
  }
  if (keep && !artifacts.empty()) {
    fs::create_directories(artifacts);
    save_checkpoint(*keep, artifacts / "overfit.ckpt");
  }
  return {passed >= 2, fmt("%d of %d seeds met mAP>=0.90, AvgDist<=0.05, OOF-AP>=0.95 after 2000 steps within 30 min",
                           passed, run)};
}

// ---------------------------------------------------------------------------
// 6. Ablation ordering on a held-out split.

Outcome ablation_ordering(const fs::path&) {
  const auto t0 = Clock::now();
  SynthConfig train_cfg;
  train_cfg.rng_seed = 606;
  SynthConfig test_cfg = train_cfg;
  test_cfg.rng_seed = 607;
  const Dataset train_set = make_synthetic_dataset(train_cfg, 512);
  const Dataset test_set = make_synthetic_dataset(test_cfg, 128);

  struct Variant {
    const char* name;
    bool connection;
    bool head_feature;
  };
  const Variant variants[] = {{"full", true, true}, {"no-C", false, true}, {"baseline", false, false}};
  constexpr int kEpochs = 20;
  std::map<std::string, std::vector<double>> maps;
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    for (const Variant& v : variants) {
      ModelConfig mc = ModelConfig::preset("compact");
      mc.reinject_head_feature = v.head_feature;
      TrainConfig tc;
      tc.seed = seed;
      tc.epochs = kEpochs;
      if (!v.connection) tc.loss_weights.connection = 0.0;
      const auto t1 = Clock::now();
      const auto r = train(mc, tc, train_set);
      const MetricReport rep = evaluate(r.checkpoint, test_set).report;
      maps[v.name].push_back(rep.map_instance);
      note(fmt("%-8s seed %llu  test %s  %.1f min", v.name, static_cast<unsigned long long>(seed),
               summary(rep).c_str(), minutes_since(t1)));
    }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double full = median(maps["full"]), no_c = median(maps["no-C"]), base = median(maps["baseline"]);
  const double mins = minutes_since(t0);
  const bool ok = full >= no_c - 0.02 && full > base && mins <= 180.0;
  return {ok, fmt("median test mAP full %.4f, no-C %.4f, baseline %.4f; %.1f min total", full, no_c, base, mins)};
}

// ---------------------------------------------------------------------------
// 7. AUC statistics.

Outcome auc_sanity(const fs::path&) {
  std::mt19937_64 gen(707);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool constant_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const MapSize s{1 + static_cast<int>(gen() % 64), 1 + static_cast<int>(gen() % 64)};
    if (s.width * s.height < 2) continue;
    std::vector<Point> pts(1 + gen() % 3);
    for (Point& p : pts) p = {u(gen), u(gen)};
    const auto a = auc_score(Heatmap(s, u(gen)), pts);
    constant_ok = constant_ok && a && *a == 0.5;
  }
  double sum = 0.0;
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    Heatmap h({32, 32});
    for (double& v : h.values()) v = u(gen);
    sum += *auc_score(h, {{u(gen), u(gen)}});
  }
  const double mean = sum / trials;
  return {constant_ok && std::fabs(mean - 0.5) <= 0.02,
          fmt("constant maps %s 0.5; random-map mean %.4f over %d trials", constant_ok ? "all give exactly" : "deviate from",
              mean, trials)};
}

// ---------------------------------------------------------------------------
// 8. Seeded determinism and resume equivalence.

std::string csv_of(const std::vector<LogRow>& log) {
  std::string s = csv_header() + "\n";
  for (const auto& r : log) s += csv_row(r) + "\n";
  return s;
}

Outcome determinism_resume(const fs::path& artifacts) {
  SynthConfig sc;
  sc.rng_seed = 808;
  const Dataset ds = make_synthetic_dataset(sc, 24);
  const ModelConfig mc = ModelConfig::preset("compact");
  TrainConfig tc;
  tc.seed = 8;
  tc.epochs = 4;
  tc.batch_size = 4;

  std::optional<Checkpoint> mid;
  TrainHooks hooks;
  hooks.on_epoch = [&](const Checkpoint& ck) {
    if (ck.epochs_done == 2) mid = ck;
    return true;
  };
  const auto a = train(mc, tc, ds, hooks);
  const auto b = train(mc, tc, ds);
  const bool identical = csv_of(a.log) == csv_of(b.log) && a.checkpoint.params == b.checkpoint.params;

  const fs::path dir = artifacts.empty() ? fs::temp_directory_path() : artifacts;
  fs::create_directories(dir);
  save_checkpoint(*mid, dir / "resume_epoch2.ckpt");
  const Checkpoint loaded = load_checkpoint(dir / "resume_epoch2.ckpt");
  const auto c = train(mc, tc, ds, {}, &loaded);
  double worst = c.log.size() + mid->global_step == a.log.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < c.log.size() && std::isfinite(worst); ++i) {
    const LossBreakdown &x = a.log[mid->global_step + i].loss, &y = c.log[i].loss;
    for (double d : {x.l_h - y.l_h, x.l_g - y.l_g, x.l_c - y.l_c, x.l_det - y.l_det, x.l_o - y.l_o,
                     x.total - y.total})
      worst = std::max(worst, std::fabs(d));
  }
  return {identical && worst <= 1e-6,
          fmt("seeded runs %s (%zu rows); resumed run max |diff| %.3e over %zu rows",
              identical ? "identical" : "DIFFER", a.log.size(), worst, c.log.size())};
}

// ---------------------------------------------------------------------------
// Probes on the checkpoint left by criterion 5.

std::pair<int, int> argmax_pixel(const Heatmap& h) {
  const auto it = std::max_element(h.values().begin(), h.values().end());
  const int p = static_cast<int>(it - h.values().begin());
  return {p % h.width(), p / h.width()};
}

double box_distance(Point p, const SceneLayout::Square& s) {
  const double dx = std::max(0.0, std::fabs(p.x - s.center.x) - s.half);
  const double dy = std::max(0.0, std::fabs(p.y - s.center.y) - s.half);
  return std::hypot(dx, dy);
}

Outcome trained_model_probes(const fs::path& artifacts) {
  const fs::path ckpt = artifacts / "overfit.ckpt";
  if (!fs::exists(ckpt)) return {false, "no checkpoint at " + ckpt.string()};
  const Checkpoint ck = load_checkpoint(ckpt);
  const Network<float> net = network_from_checkpoint(ck);
  const SynthConfig sc = overfit_data_config();
  Network<float>::Activations act;

  int two_person = 0, two_ok = 0, oof_total = 0, oof_ok = 0, moved_total = 0, moved_ok = 0;
  for (int i = 0; i < kOverfitScenes; ++i) {
    SceneLayout layout;
    Rng rng(stream_seed(sc.rng_seed, static_cast<std::uint64_t>(i)));
    const SceneSample s = generate_scene(rng, sc, &layout);
    net.forward(s.image, act);
    const ProposalSet ps = net.proposals(act);
    const auto inst = to_instances(ps);

    if (s.annotations.size() == 2) {
      ++two_person;
      two_ok += std::count_if(inst.begin(), inst.end(), [](const auto& p) { return p.confidence > 0.5; }) == 2;
    }

    const auto assoc = associate(inst, s.annotations);
    for (std::size_t g = 0; g < s.annotations.size(); ++g) {
      if (!s.annotations[g].out_of_frame) continue;
      ++oof_total;
      if (assoc[g] < 0) continue;
      const int k = inst[assoc[g]].proposal_index;
      oof_ok += ps.gaze_maps[k].max() < 0.2 && ps.connection_maps[k].max() < 0.2;
    }

    // Same scene with the head (and its notch) shifted sideways.
    if (layout.people.size() != 1 || moved_total >= 8) continue;
    const auto& person = layout.people[0];
    const int W = ck.model.heatmap_size.width;
    for (int cells : {8, -8, 12, -12}) {
      const double dx = static_cast<double>(cells) / W;
      const Point head{person.head.x + dx, person.head.y};
      if (head.x - person.radius < 0.02 || head.x + person.radius > 0.98) continue;
      bool clear = true;
      for (const auto& sq : layout.targets) clear = clear && box_distance(head, sq) > person.radius + 0.02;
      if (!clear) continue;
      SceneLayout moved = layout;
      moved.people[0].head = head;
      moved.people[0].notch.x += dx;
      Rng render_rng(stream_seed(sc.rng_seed, 1000 + static_cast<std::uint64_t>(i)));
      Rng render_rng2 = render_rng;
      const Image before = detail::render(layout, sc.image_size, render_rng);
      const Image after = detail::render(moved, sc.image_size, render_rng2);
      net.forward(before, act);
      const auto a0 = argmax_pixel(net.detection_map(act));
      net.forward(after, act);
      const auto a1 = argmax_pixel(net.detection_map(act));
      ++moved_total;
      moved_ok += std::abs((a1.first - a0.first) - cells) <= 1 && std::abs(a1.second - a0.second) <= 1;
      break;
    }
  }
  note(fmt("2-person scenes with exactly 2 confident instances: %d/%d", two_ok, two_person));
  note(fmt("out-of-frame instances with gaze and connection maps below 0.2: %d/%d", oof_ok, oof_total));
  note(fmt("shifted-head scenes whose detection argmax follows the head: %d/%d", moved_ok, moved_total));
  const bool ok = two_person > 0 && two_ok == two_person && oof_total > 0 && oof_ok == oof_total &&
                  moved_total > 0 && moved_ok == moved_total;
  return {ok, fmt("instances %d/%d, out-of-frame panels %d/%d, head shift %d/%d", two_ok, two_person, oof_ok,
                  oof_total, moved_ok, moved_total)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::pair<const char*, std::function<Outcome(const fs::path&)>>> criteria{
      {"1", {"oracle_metrics", oracle_metrics}},
      {"2", {"hungarian_brute_force", hungarian_brute_force}},
      {"3", {"gradient_check", gradient_check}},
      {"4", {"loss_brute_force", loss_brute_force}},
      {"5", {"overfit_synthetic", overfit_synthetic}},
      {"6", {"ablation_ordering", ablation_ordering}},
      {"7", {"auc_sanity", auc_sanity}},
      {"8", {"determinism_resume", determinism_resume}},
      {"probes", {"trained_model_probes", trained_model_probes}},
  };
  if (argc < 2 || !criteria.count(argv[1])) {
    std::fprintf(stderr, "usage: %s <1..8|probes> [artifact_dir]\n", argv[0]);
    return 2;
  }
  const auto& [name, fn] = criteria.at(argv[1]);
  const fs::path artifacts = argc > 2 ? fs::path(argv[2]) : fs::path();
  Outcome o;
  try {
    o = fn(artifacts);
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s criterion %s %s: %s\n", o.pass ? "PASS" : "FAIL", argv[1], name, o.detail.c_str());
  return o.pass ? 0 : 1;
}
