#pragma once

// Training objective over matched proposal/ground-truth pairs:
//   total = lh*L_h + lg*L_g + lc*L_c + lo*L_o + ldet*L_det
// with pixel-wise MSE for the heatmap terms and binary cross-entropy for the
// out-of-frame flags.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gazehta/core.hpp"
#include "gazehta/gtgen.hpp"
#include "gazehta/matching.hpp"
#include "gazehta/model.hpp"

namespace gazehta {

struct LossWeights {
  double head = 1.0;        // lambda_h
  double gaze = 2.5;        // lambda_g
  double connection = 1.0;  // lambda_c
  double oof = 1.0;         // lambda_o
  double detection = 1.0;   // lambda_det
};

inline void validate(const LossWeights& w) {
  for (double v : {w.head, w.gaze, w.connection, w.oof, w.detection})
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("loss weights must be finite and non-negative");
}

struct LossOptions {
  /// Pull the head maps of unmatched proposals toward zero (added to L_h as
  /// a separately averaged term). Off reproduces flags-only supervision of
  /// unmatched proposals.
  bool unmatched_head_supervision = true;
  double bce_epsilon = 1e-7;
};

struct LossBreakdown {
  double l_h = 0.0;
  double l_g = 0.0;
  double l_c = 0.0;
  double l_det = 0.0;
  double l_o = 0.0;
  double total = 0.0;
};

inline double compose_total(const LossBreakdown& b, const LossWeights& w) {
  return w.head * b.l_h + w.gaze * b.l_g + w.connection * b.l_c + w.oof * b.l_o + w.detection * b.l_det;
}

/// (1/M)(1/mn) sum_k sum_ij (gt_k - pred_k)^2; zero when the lists are empty.
inline double heatmap_mse(const std::vector<Heatmap>& preds, const std::vector<Heatmap>& gts) {
  if (preds.size() != gts.size()) throw InvalidArgument("heatmap_mse: list lengths differ");
  if (preds.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    require_same_shape(preds[k], gts[k], "heatmap_mse");
    double s = 0.0;
    for (std::size_t p = 0; p < preds[k].pixel_count(); ++p) {
      const double d = gts[k].values()[p] - preds[k].values()[p];
      s += d * d;
    }
    sum += s / static_cast<double>(preds[k].pixel_count());
  }
  return sum / static_cast<double>(preds.size());
}

inline double detection_mse(const Heatmap& pred, const Heatmap& gt) {
  require_same_shape(pred, gt, "detection_mse");
  double s = 0.0;
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    const double d = gt.values()[p] - pred.values()[p];
    s += d * d;
  }
  return s / static_cast<double>(pred.pixel_count());
}

/// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
inline double oof_bce(const std::vector<double>& probs, const std::vector<bool>& labels, double eps = 1e-7) {
  if (probs.size() != labels.size()) throw InvalidArgument("oof_bce: length mismatch");
  if (probs.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double p = std::clamp(probs[k], eps, 1.0 - eps);
    s += labels[k] ? std::log(p) : std::log(1.0 - p);
  }
  return -s / static_cast<double>(probs.size());
}

namespace detail {

// Adds scale * 2 * (pred - target) into grad; target == nullptr means zero.
inline void add_mse_grad(Heatmap& grad, const Heatmap& pred, const Heatmap* target, double scale) {
  for (std::size_t p = 0; p < pred.pixel_count(); ++p)
    grad.values()[p] += scale * 2.0 * (pred.values()[p] - (target ? target->values()[p] : 0.0));
}

}  // namespace detail

/// Loss over one scene. When `grads` is non-null it receives the gradient of
/// `total` with respect to every exposed output (sigmoid-space heatmaps and
/// pre-sigmoid out-of-frame logits).
inline LossBreakdown total_loss(const ProposalSet& props, const Heatmap& pred_detection, const GroundTruthMaps& gts,
                                const Assignment& assignment, const LossWeights& weights,
                                const LossOptions& options = {}, OutputGrads* grads = nullptr) {
  validate(weights);
  const int N = props.size();
  const int M = gts.instance_count();
  if (static_cast<int>(assignment.pairs.size()) != std::min(N, M))
    throw InvalidArgument("assignment does not cover min(N, M) pairs");

  std::vector<char> matched(N, 0);
  std::vector<Heatmap> ph, pg, pc, th, tg, tc;
  std::vector<double> probs(N);
  std::vector<bool> labels(N, true);  // unmatched proposals target "out of frame"
  for (auto [k, g] : assignment.pairs) {
    if (k < 0 || k >= N || g < 0 || g >= M || matched[k]) throw InvalidArgument("invalid assignment pair");
    matched[k] = 1;
    ph.push_back(props.head_maps[k]);
    pg.push_back(props.gaze_maps[k]);
    pc.push_back(props.connection_maps[k]);
    th.push_back(gts.head_maps[g]);
    tg.push_back(gts.gaze_maps[g]);
    tc.push_back(gts.connection_maps[g]);
    labels[k] = gts.oof_labels[g];
  }
  for (int k = 0; k < N; ++k) probs[k] = props.oof_prob(k);

  LossBreakdown b;
  b.l_h = heatmap_mse(ph, th);
  b.l_g = heatmap_mse(pg, tg);
  b.l_c = heatmap_mse(pc, tc);
  b.l_det = detection_mse(pred_detection, gts.detection_map);
  b.l_o = oof_bce(probs, labels, options.bce_epsilon);

  std::vector<Heatmap> unmatched_heads;
  if (options.unmatched_head_supervision)
    for (int k = 0; k < N; ++k)
      if (!matched[k]) unmatched_heads.push_back(props.head_maps[k]);
  if (!unmatched_heads.empty()) {
    const std::vector<Heatmap> zeros(unmatched_heads.size(), Heatmap(unmatched_heads.front().size()));
    b.l_h += heatmap_mse(unmatched_heads, zeros);
  }
  b.total = compose_total(b, weights);

  if (grads) {
    const MapSize ms = gts.detection_map.size();
    const double mn = static_cast<double>(ms.width) * ms.height;
    grads->head_maps.assign(N, Heatmap(ms));
    grads->gaze_maps.assign(N, Heatmap(ms));
    grads->connection_maps.assign(N, Heatmap(ms));
    grads->oof_logits.assign(N, 0.0);
    grads->detection_map = Heatmap(ms);
    const double pair_scale = M > 0 ? 1.0 / (M * mn) : 0.0;
    for (auto [k, g] : assignment.pairs) {
      detail::add_mse_grad(grads->head_maps[k], props.head_maps[k], &gts.head_maps[g], weights.head * pair_scale);
      detail::add_mse_grad(grads->gaze_maps[k], props.gaze_maps[k], &gts.gaze_maps[g], weights.gaze * pair_scale);
      detail::add_mse_grad(grads->connection_maps[k], props.connection_maps[k], &gts.connection_maps[g],
                           weights.connection * pair_scale);
    }
    if (!unmatched_heads.empty()) {
      const double scale = weights.head / (static_cast<double>(unmatched_heads.size()) * mn);
      for (int k = 0; k < N; ++k)
        if (!matched[k]) detail::add_mse_grad(grads->head_maps[k], props.head_maps[k], nullptr, scale);
    }
    detail::add_mse_grad(grads->detection_map, pred_detection, &gts.detection_map, weights.detection / mn);
    for (int k = 0; k < N; ++k) {
      const double p = probs[k];
      if (p < options.bce_epsilon || p > 1.0 - options.bce_epsilon) continue;  // clamped: flat
      grads->oof_logits[k] = weights.oof * (p - (labels[k] ? 1.0 : 0.0)) / N;
    }
  }
  return b;
}

}  // namespace gazehta
