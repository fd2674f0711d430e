#pragma once

// One-to-one assignment of predicted proposals to ground-truth instances.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "gazehta/core.hpp"
#include "gazehta/gtgen.hpp"
#include "gazehta/model.hpp"

namespace gazehta {

struct MatchWeights {
  double w_gaze = 1.0;
  double w_head = 2.5;
  double w_oof = 1.0;
};

inline void validate(const MatchWeights& w) {
  if (!(w.w_gaze >= 0.0 && w.w_head >= 0.0 && w.w_oof >= 0.0) ||
      !std::isfinite(w.w_gaze + w.w_head + w.w_oof))
    throw InvalidArgument("match weights must be finite and non-negative");
}

/// Dense row-major cost matrix; rows are proposals, columns are ground-truth
/// instances.
class CostMatrix {
 public:
  CostMatrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}
  CostMatrix(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols) throw InvalidArgument("cost matrix size mismatch");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (proposal_index, gt_index), ordered by gt_index
  double total_cost = 0.0;

  /// proposal index matched to each gt index.
  std::vector<int> proposal_for_gt(int gt_count) const {
    std::vector<int> out(gt_count, -1);
    for (auto [p, g] : pairs) out[g] = p;
    return out;
  }
};

namespace detail {

// Kuhn-Munkres with row and column potentials, O(min^2 * max). Returns the
// proposal index for each column (-1 when unmatched).
inline std::vector<int> solve_assignment(const CostMatrix& cost) {
  std::vector<int> owner(cost.cols(), -1);
  if (cost.rows() == 0 || cost.cols() == 0) return owner;

  // Orient so that the smaller side is the one being inserted.
  const bool gt_small = cost.cols() <= cost.rows();
  const int n = gt_small ? cost.cols() : cost.rows();  // inserted side
  const int m = gt_small ? cost.rows() : cost.cols();  // scanned side
  auto a = [&](int i, int j) { return gt_small ? cost(j, i) : cost(i, j); };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const int inserted = p[j] - 1, scanned = j - 1;
    if (gt_small)
      owner[inserted] = scanned;
    else
      owner[scanned] = inserted;
  }
  return owner;
}

// Sum of the selected entries in column order.
inline double assignment_cost(const CostMatrix& cost, const std::vector<int>& owner) {
  double s = 0.0;
  for (int c = 0; c < cost.cols(); ++c)
    if (owner[c] >= 0) s += cost(owner[c], c);
  return s;
}

// Optimal completion with columns [0, fixed.size()) pinned to the given rows.
// Requires cols <= rows.
inline std::vector<int> complete_assignment(const CostMatrix& cost, const std::vector<int>& fixed) {
  std::vector<char> taken(cost.rows(), 0);
  for (int r : fixed) taken[r] = 1;
  std::vector<int> rows;
  for (int r = 0; r < cost.rows(); ++r)
    if (!taken[r]) rows.push_back(r);
  const int rest = cost.cols() - static_cast<int>(fixed.size());
  CostMatrix sub(static_cast<int>(rows.size()), rest);
  for (int i = 0; i < sub.rows(); ++i)
    for (int c = 0; c < rest; ++c) sub(i, c) = cost(rows[i], static_cast<int>(fixed.size()) + c);
  std::vector<int> owner = fixed;
  for (int r : solve_assignment(sub)) owner.push_back(r < 0 ? -1 : rows[r]);
  return owner;
}

}  // namespace detail

/// Minimum-cost assignment of size min(rows, cols). When proposals are at
/// least as many as ground-truth columns, ties between optimal assignments
/// are broken towards the lexicographically smallest proposal-per-column
/// sequence, i.e. the lowest proposal index wins.
inline Assignment hungarian(const CostMatrix& cost) {
  for (int r = 0; r < cost.rows(); ++r)
    for (int c = 0; c < cost.cols(); ++c)
      if (!std::isfinite(cost(r, c))) throw InvalidArgument("cost matrix entries must be finite (NaN/Inf found)");

  std::vector<int> best = detail::solve_assignment(cost);
  if (cost.cols() <= cost.rows() && cost.cols() > 0) {
    double best_cost = detail::assignment_cost(cost, best);
    std::vector<int> prefix;
    for (int c = 0; c < cost.cols(); ++c) {
      for (int r = 0; r < best[c]; ++r) {
        if (std::find(prefix.begin(), prefix.end(), r) != prefix.end()) continue;
        std::vector<int> pinned = prefix;
        pinned.push_back(r);
        std::vector<int> cand = detail::complete_assignment(cost, pinned);
        const double cand_cost = detail::assignment_cost(cost, cand);
        if (cand_cost <= best_cost) {
          best = std::move(cand);
          best_cost = cand_cost;
          break;
        }
      }
      prefix.push_back(best[c]);
    }
  }

  Assignment result;
  for (int c = 0; c < cost.cols(); ++c)
    if (best[c] >= 0) result.pairs.emplace_back(best[c], c);
  result.total_cost = detail::assignment_cost(cost, best);
  return result;
}

/// Root-mean-square pixel difference: ||a - b||_2 / sqrt(mn).
inline double rms_difference(const Heatmap& a, const Heatmap& b) {
  require_same_shape(a, b, "rms_difference");
  double s = 0.0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    const double d = a.values()[p] - b.values()[p];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.pixel_count()));
}

inline double matching_cost(const Heatmap& pred_head, const Heatmap& pred_gaze, double oof_logit,
                            const Heatmap& gt_head, const Heatmap& gt_gaze, bool gt_out_of_frame,
                            const MatchWeights& w) {
  const double target = gt_out_of_frame ? 1.0 : 0.0;
  return w.w_gaze * rms_difference(pred_gaze, gt_gaze) + w.w_head * rms_difference(pred_head, gt_head) +
         w.w_oof * std::abs(sigmoid(oof_logit) - target);
}

inline double matching_cost(const ProposalSet& props, int k, const GroundTruthMaps& gts, int g,
                            const MatchWeights& w) {
  return matching_cost(props.head_maps[k], props.gaze_maps[k], props.oof_logits[k], gts.head_maps[g],
                       gts.gaze_maps[g], gts.oof_labels[g], w);
}

inline CostMatrix cost_matrix(const ProposalSet& props, const GroundTruthMaps& gts, const MatchWeights& w) {
  CostMatrix c(props.size(), gts.instance_count());
  for (int k = 0; k < props.size(); ++k)
    for (int g = 0; g < gts.instance_count(); ++g) c(k, g) = matching_cost(props, k, gts, g, w);
  return c;
}

inline Assignment match_instances(const ProposalSet& props, const GroundTruthMaps& gts, const MatchWeights& w = {}) {
  validate(w);
  if (gts.instance_count() > props.size()) throw CapacityExceeded(props.size(), gts.instance_count());
  if (gts.instance_count() == 0) return {};
  return hungarian(cost_matrix(props, gts, w));
}

}  // namespace gazehta
