#pragma once

// Evaluation: gaze heatmap AUC, gaze point distances, head-target instance
// mAP and out-of-frame AP.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazehta/core.hpp"
#include "gazehta/gtgen.hpp"
#include "gazehta/matching.hpp"
#include "gazehta/postprocess.hpp"

namespace gazehta {

/// Ranking AUC of the map values against a binary grid marking the pixel of
/// each ground-truth point (plus a disc of `gt_radius` pixels around it).
/// Mann-Whitney statistic with average ranks for ties. nullopt when there
/// are no points or every pixel is positive.
inline std::optional<double> auc_score(const Heatmap& map, const std::vector<Point>& gt_points, double gt_radius = 0.0) {
  if (gt_points.empty()) return std::nullopt;
  const int W = map.width(), H = map.height();
  std::vector<char> positive(map.pixel_count(), 0);
  for (const Point& p : gt_points) {
    const int ci = pixel_index(p.x, W), cj = pixel_index(p.y, H);
    const int reach = static_cast<int>(std::floor(gt_radius));
    for (int dj = -reach; dj <= reach; ++dj)
      for (int di = -reach; di <= reach; ++di) {
        const int i = ci + di, j = cj + dj;
        if (i < 0 || j < 0 || i >= W || j >= H || di * di + dj * dj > gt_radius * gt_radius) continue;
        positive[static_cast<std::size_t>(j) * W + i] = 1;
      }
  }
  const auto& v = map.values();
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  double pos_rank_sum = 0.0, npos = 0.0;
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    while (e < order.size() && v[order[e]] == v[order[s]]) ++e;
    const double avg_rank = 0.5 * static_cast<double>(s + 1 + e);  // ranks s+1 .. e
    for (std::size_t q = s; q < e; ++q)
      if (positive[order[q]]) {
        pos_rank_sum += avg_rank;
        npos += 1.0;
      }
    s = e;
  }
  const double nneg = static_cast<double>(v.size()) - npos;
  if (npos == 0.0 || nneg == 0.0) return std::nullopt;
  return (pos_rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

struct GazeDistances {
  double avg = 0.0;
  double min = 0.0;
};

/// Normalized Euclidean distances from the prediction to each annotator
/// point: mean and minimum. nullopt for an empty list.
inline std::optional<GazeDistances> gaze_distances(Point pred, const std::vector<Point>& gt_points) {
  if (gt_points.empty()) return std::nullopt;
  GazeDistances d{0.0, std::numeric_limits<double>::infinity()};
  for (const Point& g : gt_points) {
    const double dist = distance(pred, g);
    d.avg += dist;
    d.min = std::min(d.min, dist);
  }
  d.avg /= static_cast<double>(gt_points.size());
  return d;
}

/// Area under the stepwise precision-recall curve with the precision
/// envelope (all-point interpolation). `hits` is in ranked order.
inline double average_precision(const std::vector<bool>& hits, std::size_t positives) {
  if (positives == 0) return 0.0;
  std::vector<double> precision, recall;
  double tp = 0.0;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (hits[r]) tp += 1.0;
    precision.push_back(tp / static_cast<double>(r + 1));
    recall.push_back(tp / static_cast<double>(positives));
  }
  for (std::size_t r = precision.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (!hits[r]) continue;
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

struct InstanceMatchRule {
  double min_iou = 0.5;        // strict: IoU must exceed this
  double max_gaze_dist = 0.15;  // strict: distance must be below this
};

/// True-positive test for one prediction against one annotation. The gaze
/// distance is the mean over annotator points; out-of-frame annotations are
/// judged on the head box only.
inline bool is_true_positive(const InstancePrediction& p, const Annotation& a, const InstanceMatchRule& rule = {}) {
  if (!(iou(p.head_box, a.head_box) > rule.min_iou)) return false;
  if (a.out_of_frame) return true;
  const auto d = gaze_distances(p.gaze_point, a.all_gaze_points());
  return d && d->avg < rule.max_gaze_dist;
}

/// Dataset-level instance AP. Predictions from all scenes are ranked by
/// confidence (stable: scene order, then list order); each is greedily
/// matched to the unmatched annotation of its scene that it hits with the
/// highest IoU. Unmatched predictions are false positives.
inline double instance_map(const std::vector<std::vector<InstancePrediction>>& preds,
                           const std::vector<std::vector<Annotation>>& gts, const InstanceMatchRule& rule = {}) {
  if (preds.size() != gts.size()) throw InvalidArgument("instance_map: scene counts differ");
  struct Ranked {
    std::size_t scene, index;
    double confidence;
  };
  std::vector<Ranked> ranked;
  std::size_t positives = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    positives += gts[s].size();
    for (std::size_t i = 0; i < preds[s].size(); ++i) ranked.push_back({s, i, preds[s][i].confidence});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });
  std::vector<std::vector<char>> taken(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) taken[s].assign(gts[s].size(), 0);
  std::vector<bool> hits;
  for (const Ranked& r : ranked) {
    const InstancePrediction& p = preds[r.scene][r.index];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts[r.scene].size(); ++g) {
      if (taken[r.scene][g] || !is_true_positive(p, gts[r.scene][g], rule)) continue;
      const double o = iou(p.head_box, gts[r.scene][g].head_box);
      if (o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) taken[r.scene][best] = 1;
    hits.push_back(best >= 0);
  }
  return average_precision(hits, positives);
}

/// AP of out-of-frame detection (positive label = looking outside the
/// frame). nullopt when there is no positive label.
inline std::optional<double> oof_ap(const std::vector<double>& probs, const std::vector<bool>& labels) {
  if (probs.size() != labels.size()) throw InvalidArgument("oof_ap: length mismatch");
  if (probs.empty()) throw InvalidArgument("oof_ap: empty input");
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0) return std::nullopt;
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<bool> hits;
  for (std::size_t i : order) hits.push_back(labels[i]);
  return average_precision(hits, positives);
}

// ---------------------------------------------------------------------------
// Dataset-level report

/// Predictions for one scene. gaze_maps runs parallel to predictions; a
/// map is only needed for predictions associated with an in-frame
/// annotation.
struct ScenePredictions {
  std::string scene_id;
  std::vector<InstancePrediction> predictions;
  std::vector<std::optional<Heatmap>> gaze_maps;
};

struct MetricCounts {
  std::size_t scenes = 0;
  std::size_t instances = 0;
  std::size_t in_frame = 0;
  std::size_t out_of_frame = 0;
  std::size_t predictions = 0;
  std::size_t unassociated = 0;  // annotations with no overlapping prediction
};

struct MetricReport {
  std::optional<double> auc;
  std::optional<double> avg_dist;
  std::optional<double> min_dist;
  double map_instance = 0.0;
  std::optional<double> oof_ap;
  MetricCounts counts;

  friend bool operator==(const MetricReport& a, const MetricReport& b) {
    return a.auc == b.auc && a.avg_dist == b.avg_dist && a.min_dist == b.min_dist &&
           a.map_instance == b.map_instance && a.oof_ap == b.oof_ap && a.counts.scenes == b.counts.scenes &&
           a.counts.instances == b.counts.instances && a.counts.predictions == b.counts.predictions &&
           a.counts.unassociated == b.counts.unassociated;
  }
};

struct EvalOptions {
  double auc_gt_radius = 0.0;
  InstanceMatchRule rule;
};

/// For each annotation, the index of the prediction paired with it by a
/// maximum-IoU one-to-one assignment, or -1 when none overlaps.
inline std::vector<int> associate(const std::vector<InstancePrediction>& preds, const std::vector<Annotation>& gts) {
  std::vector<int> out(gts.size(), -1);
  if (preds.empty() || gts.empty()) return out;
  CostMatrix cost(static_cast<int>(preds.size()), static_cast<int>(gts.size()));
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g)
      cost(static_cast<int>(p), static_cast<int>(g)) = 1.0 - iou(preds[p].head_box, gts[g].head_box);
  for (auto [p, g] : hungarian(cost).pairs)
    if (iou(preds[p].head_box, gts[g].head_box) > 0.0) out[g] = p;
  return out;
}

/// Scores predictions against annotations. Each annotation is associated
/// with at most one prediction (see associate()); AUC and distances use the
/// associated prediction's gaze map and point. An in-frame annotation with
/// no associated prediction scores AUC 0.5 and its distances are measured
/// from the image centre; for out-of-frame AP it scores probability 0.
inline MetricReport compute_report(const std::vector<ScenePredictions>& scenes,
                                   const std::vector<std::vector<Annotation>>& gts, const EvalOptions& opt = {}) {
  if (scenes.size() != gts.size()) throw InvalidArgument("compute_report: scene counts differ");
  if (scenes.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  MetricReport rep;
  rep.counts.scenes = scenes.size();
  double auc_sum = 0.0, avg_sum = 0.0, min_sum = 0.0;
  std::size_t auc_n = 0, dist_n = 0;
  std::vector<double> oof_probs;
  std::vector<bool> oof_labels;
  std::vector<std::vector<InstancePrediction>> all_preds;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& sp = scenes[s];
    rep.counts.predictions += sp.predictions.size();
    all_preds.push_back(sp.predictions);
    const auto assoc = associate(sp.predictions, gts[s]);
    for (std::size_t g = 0; g < gts[s].size(); ++g) {
      const Annotation& a = gts[s][g];
      ++rep.counts.instances;
      const int p = assoc[g];
      if (p < 0) ++rep.counts.unassociated;
      oof_probs.push_back(p >= 0 ? sp.predictions[p].oof_prob : 0.0);
      oof_labels.push_back(a.out_of_frame);
      if (a.out_of_frame) {
        ++rep.counts.out_of_frame;
        continue;
      }
      ++rep.counts.in_frame;
      const auto points = a.all_gaze_points();
      std::optional<double> auc = 0.5;
      Point guess{0.5, 0.5};
      if (p >= 0) {
        guess = sp.predictions[p].gaze_point;
        if (static_cast<std::size_t>(p) >= sp.gaze_maps.size() || !sp.gaze_maps[p])
          throw InvalidArgument("gaze map missing for prediction associated with an in-frame annotation");
        auc = auc_score(*sp.gaze_maps[p], points, opt.auc_gt_radius);
      }
      if (auc) {
        auc_sum += *auc;
        ++auc_n;
      }
      const auto d = gaze_distances(guess, points);
      avg_sum += d->avg;
      min_sum += d->min;
      ++dist_n;
    }
  }
  if (auc_n) rep.auc = auc_sum / static_cast<double>(auc_n);
  if (dist_n) {
    rep.avg_dist = avg_sum / static_cast<double>(dist_n);
    rep.min_dist = min_sum / static_cast<double>(dist_n);
  }
  rep.map_instance = instance_map(all_preds, gts, opt.rule);
  if (!oof_probs.empty()) rep.oof_ap = oof_ap(oof_probs, oof_labels);
  return rep;
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"auc", opt(r.auc)},
          {"avg_dist", opt(r.avg_dist)},
          {"min_dist", opt(r.min_dist)},
          {"map_instance", r.map_instance},
          {"oof_ap", opt(r.oof_ap)},
          {"counts",
           {{"scenes", r.counts.scenes},
            {"instances", r.counts.instances},
            {"in_frame", r.counts.in_frame},
            {"out_of_frame", r.counts.out_of_frame},
            {"predictions", r.counts.predictions},
            {"unassociated", r.counts.unassociated}}}};
}

/// Fixed-order table: AUC, Avg. Dist., Min. Dist., AP, mAP.
inline std::string format_table(const MetricReport& r) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-8s %-11s %-11s %-8s %-8s\n", "AUC", "Avg. Dist.", "Min. Dist.", "AP", "mAP");
  out += line;
  std::snprintf(line, sizeof line, "%-8s %-11s %-11s %-8s %-8s\n", cell(r.auc).c_str(), cell(r.avg_dist).c_str(),
                cell(r.min_dist).c_str(), cell(r.oof_ap).c_str(), cell(r.map_instance).c_str());
  out += line;
  return out;
}

}  // namespace gazehta
