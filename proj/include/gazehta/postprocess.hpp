#pragma once

// Heatmaps -> per-instance boxes, gaze points and scores.

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "gazehta/core.hpp"
#include "gazehta/model.hpp"

namespace gazehta {

struct InstancePrediction {
  Box head_box;
  Point gaze_point;
  double oof_prob = 0.0;
  double confidence = 0.0;
  int proposal_index = -1;
};

struct OtsuResult {
  double threshold = 0.0;  // lower edge of the first foreground bin
  int last_background_bin = 0;
  double lo = 0.0;
  double bin_width = 0.0;

  int bin_of(double v) const {
    return std::clamp(static_cast<int>(std::floor((v - lo) / bin_width)), 0, 255);
  }
  bool foreground(double v) const { return bin_of(v) > last_background_bin; }
};

/// Otsu's method on a 256-bin histogram spanning [min, max] of the map.
/// Throws DegenerateMap for constant maps.
inline OtsuResult otsu(const Heatmap& map) {
  const double lo = map.min(), hi = map.max();
  if (!(hi > lo)) throw DegenerateMap("constant heatmap has no Otsu threshold");
  OtsuResult r;
  r.lo = lo;
  r.bin_width = (hi - lo) / 256.0;
  std::array<double, 256> hist{};
  for (double v : map.values()) hist[r.bin_of(v)] += 1.0;

  const double total = static_cast<double>(map.pixel_count());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      r.last_background_bin = t;
    }
  }
  r.threshold = lo + (r.last_background_bin + 1) * r.bin_width;
  return r;
}

inline double otsu_threshold(const Heatmap& map) { return otsu(map).threshold; }

/// Bounding box (normalized) of the 8-connected above-threshold component
/// with the largest summed heat; nullopt for degenerate maps.
inline std::optional<Box> extract_head_box(const Heatmap& map) {
  OtsuResult t;
  try {
    t = otsu(map);
  } catch (const DegenerateMap&) {
    return std::nullopt;
  }
  const int W = map.width(), H = map.height();
  std::vector<int> label(map.pixel_count(), -1);
  std::vector<int> stack;
  double best_heat = -1.0;
  Box best{};
  int components = 0;
  for (int j = 0; j < H; ++j)
    for (int i = 0; i < W; ++i) {
      const std::size_t idx = static_cast<std::size_t>(j) * W + i;
      if (label[idx] >= 0 || !t.foreground(map.values()[idx])) continue;
      int imin = i, imax = i, jmin = j, jmax = j;
      double heat = 0.0;
      label[idx] = components;
      stack.assign(1, static_cast<int>(idx));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int ci = cur % W, cj = cur / W;
        heat += map.values()[cur];
        imin = std::min(imin, ci);
        imax = std::max(imax, ci);
        jmin = std::min(jmin, cj);
        jmax = std::max(jmax, cj);
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) {
            const int ni = ci + di, nj = cj + dj;
            if (ni < 0 || nj < 0 || ni >= W || nj >= H) continue;
            const std::size_t nidx = static_cast<std::size_t>(nj) * W + ni;
            if (label[nidx] >= 0 || !t.foreground(map.values()[nidx])) continue;
            label[nidx] = components;
            stack.push_back(static_cast<int>(nidx));
          }
      }
      ++components;
      if (heat > best_heat) {
        best_heat = heat;
        best = {static_cast<double>(imin) / W, static_cast<double>(jmin) / H, static_cast<double>(imax + 1) / W,
                static_cast<double>(jmax + 1) / H};
      }
    }
  if (components == 0) return std::nullopt;
  return best;
}

/// Pixel centre of the global maximum; ties go to the first pixel in
/// row-major order.
inline Point extract_gaze_point(const Heatmap& map) {
  const auto& v = map.values();
  const auto it = std::max_element(v.begin(), v.end());  // first maximal element
  const auto idx = static_cast<int>(std::distance(v.begin(), it));
  return {pixel_center(idx % map.width(), map.width()), pixel_center(idx / map.width(), map.height())};
}

inline std::vector<InstancePrediction> to_instances(const ProposalSet& props) {
  std::vector<InstancePrediction> out;
  for (int k = 0; k < props.size(); ++k) {
    auto box = extract_head_box(props.head_maps[k]);
    if (!box) continue;
    InstancePrediction p;
    p.head_box = *box;
    p.gaze_point = extract_gaze_point(props.gaze_maps[k]);
    p.oof_prob = props.oof_prob(k);
    p.confidence = std::clamp(props.head_maps[k].max(), 0.0, 1.0);
    p.proposal_index = k;
    out.push_back(p);
  }
  return out;
}

}  // namespace gazehta
