#pragma once

// Ground-truth target construction: Gaussian head/gaze maps, connection maps
// along the head-to-target segment, and the per-scene head detection map.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gazehta/core.hpp"

namespace gazehta {

/// One head-target instance in normalized image coordinates.
struct Annotation {
  Box head_box;
  std::optional<Point> gaze_point;  // absent iff out_of_frame
  bool out_of_frame = false;
  /// Further annotator gaze points for the same head (multi-annotator
  /// datasets). Used by evaluation only; training uses gaze_point.
  std::vector<Point> extra_gaze_points;

  /// All gaze points for evaluation: the primary one followed by extras.
  std::vector<Point> all_gaze_points() const {
    std::vector<Point> pts;
    if (gaze_point) pts.push_back(*gaze_point);
    pts.insert(pts.end(), extra_gaze_points.begin(), extra_gaze_points.end());
    return pts;
  }

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

inline void validate(const Annotation& a) {
  const Box& b = a.head_box;
  if (!in_unit_square({b.x0, b.y0}) || !in_unit_square({b.x1, b.y1}))
    throw InvalidArgument("head_box must lie within [0,1]^2");
  if (!(b.x1 > b.x0) || !(b.y1 > b.y0))
    throw InvalidArgument("head_box must have positive width and height");
  if (a.out_of_frame == a.gaze_point.has_value())
    throw InvalidArgument("gaze_point must be present iff the instance is in-frame");
  if (a.gaze_point && !in_unit_square(*a.gaze_point))
    throw InvalidArgument("gaze_point must lie within [0,1]^2");
  for (const Point& p : a.extra_gaze_points)
    if (!in_unit_square(p)) throw InvalidArgument("extra gaze point must lie within [0,1]^2");
}

struct GtConfig {
  MapSize size{64, 64};
  double sigma = 3.0;  // pixels
  int connection_points = 50;
};

struct GroundTruthMaps {
  std::vector<Heatmap> head_maps;
  std::vector<Heatmap> gaze_maps;
  std::vector<Heatmap> connection_maps;
  Heatmap detection_map;
  std::vector<bool> oof_labels;

  int instance_count() const { return static_cast<int>(head_maps.size()); }
};

namespace detail {

inline void check_sigma(double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) throw InvalidArgument("sigma must be finite and > 0");
}

inline void check_point(Point p, const char* what) {
  if (!in_unit_square(p)) throw InvalidArgument(std::string(what) + " must be finite and within [0,1]^2");
}

// Writes max(map, gaussian) over the pixels where the Gaussian is
// non-negligible relative to double precision.
inline void max_gaussian_into(Heatmap& map, int ci, int cj, double sigma) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const int reach = static_cast<int>(std::ceil(sigma * 9.0));
  const int i0 = std::max(0, ci - reach), i1 = std::min(map.width() - 1, ci + reach);
  const int j0 = std::max(0, cj - reach), j1 = std::min(map.height() - 1, cj + reach);
  for (int j = j0; j <= j1; ++j) {
    const double dj = j - cj;
    for (int i = i0; i <= i1; ++i) {
      const double di = i - ci;
      const double v = std::exp(-(di * di + dj * dj) * inv);
      double& cell = map.at(i, j);
      if (v > cell) cell = v;
    }
  }
}

}  // namespace detail

/// Peak-1 Gaussian centred on the pixel containing `center`. Not normalized
/// to unit sum.
inline Heatmap make_gaussian_map(Point center, double sigma, MapSize size) {
  detail::check_sigma(sigma);
  detail::check_point(center, "center");
  Heatmap map(size);
  detail::max_gaussian_into(map, pixel_index(center.x, size.width), pixel_index(center.y, size.height),
                            sigma);
  return map;
}

/// Pixelwise maximum of Gaussians at `num_points` evenly spaced samples on
/// the closed segment head_center -> gaze_point.
inline Heatmap make_connection_map(Point head_center, Point gaze_point, double sigma, int num_points,
                                   MapSize size) {
  detail::check_sigma(sigma);
  detail::check_point(head_center, "head_center");
  detail::check_point(gaze_point, "gaze_point");
  if (num_points < 2) throw InvalidArgument("num_points must be >= 2");
  Heatmap map(size);
  const double steps = num_points - 1;
  for (int k = 0; k < num_points; ++k) {
    // Integer weights keep the samples identical when the endpoints swap.
    const double wa = num_points - 1 - k;
    const double wb = k;
    const Point p{(wa * head_center.x + wb * gaze_point.x) / steps,
                  (wa * head_center.y + wb * gaze_point.y) / steps};
    detail::max_gaussian_into(map, pixel_index(p.x, size.width), pixel_index(p.y, size.height), sigma);
  }
  return map;
}

inline GroundTruthMaps make_ground_truth(const std::vector<Annotation>& annotations,
                                         const GtConfig& config = {}) {
  GroundTruthMaps gt;
  gt.detection_map = Heatmap(config.size);
  for (const Annotation& a : annotations) {
    validate(a);
    const Point head = a.head_box.center();
    Heatmap head_map = make_gaussian_map(head, config.sigma, config.size);
    for (std::size_t p = 0; p < head_map.pixel_count(); ++p)
      gt.detection_map.values()[p] = std::max(gt.detection_map.values()[p], head_map.values()[p]);
    gt.head_maps.push_back(std::move(head_map));
    if (a.out_of_frame) {
      gt.gaze_maps.emplace_back(config.size);
      gt.connection_maps.emplace_back(config.size);
    } else {
      gt.gaze_maps.push_back(make_gaussian_map(*a.gaze_point, config.sigma, config.size));
      gt.connection_maps.push_back(
          make_connection_map(head, *a.gaze_point, config.sigma, config.connection_points, config.size));
    }
    gt.oof_labels.push_back(a.out_of_frame);
  }
  return gt;
}

}  // namespace gazehta
