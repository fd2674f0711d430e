#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gazehta {

// Error types. Everything derives from std::runtime_error or
// std::invalid_argument so callers can catch broadly.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// More ground-truth instances than proposal slots.
class CapacityExceeded : public std::runtime_error {
 public:
  CapacityExceeded(int proposals, int instances)
      : std::runtime_error("capacity exceeded: " + std::to_string(instances) +
                           " ground-truth instances but only N=" + std::to_string(proposals) +
                           " proposals"),
        proposals_(proposals),
        instances_(instances) {}
  int proposals() const { return proposals_; }
  int instances() const { return instances_; }

 private:
  int proposals_;
  int instances_;
};

/// Checkpoint / config incompatibility.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed annotation input; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A heatmap with no contrast (constant values) cannot be thresholded.
class DegenerateMap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point in normalized image coordinates; x grows right, y grows down.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline bool in_unit_square(Point p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 &&
         p.y <= 1.0;
}

/// Axis-aligned rectangle [x0,x1] x [y0,y1] in normalized coordinates.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  Point center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Heatmap grid size: m columns (width) by n rows (height).
struct MapSize {
  int width = 64;
  int height = 64;

  friend bool operator==(const MapSize&, const MapSize&) = default;
};

/// Dense 2-D map. Pixel (i, j) is column i, row j; storage is row-major, so
/// the flat index is j * width + i. Pixel (i, j) covers normalized
/// coordinates centred on ((i + 0.5) / m, (j + 0.5) / n).
class Heatmap {
 public:
  Heatmap() = default;
  explicit Heatmap(MapSize size, double fill = 0.0)
      : size_(size), values_(static_cast<std::size_t>(size.width) * size.height, fill) {
    if (size.width <= 0 || size.height <= 0) throw InvalidArgument("heatmap size must be positive");
  }

  int width() const { return size_.width; }
  int height() const { return size_.height; }
  MapSize size() const { return size_; }
  std::size_t pixel_count() const { return values_.size(); }

  double& at(int i, int j) { return values_[static_cast<std::size_t>(j) * size_.width + i]; }
  double at(int i, int j) const { return values_[static_cast<std::size_t>(j) * size_.width + i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double max() const { return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end()); }
  double min() const { return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end()); }

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  MapSize size_{0, 0};
  std::vector<double> values_;
};

inline void require_same_shape(const Heatmap& a, const Heatmap& b, const char* what) {
  if (a.size() != b.size()) {
    throw InvalidArgument(std::string(what) + ": heatmap shape mismatch (" +
                          std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                          std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
  }
}

/// Index of the pixel containing normalized coordinate v along an axis of the
/// given length; v = 1.0 maps to the last pixel.
inline int pixel_index(double v, int length) {
  const int idx = static_cast<int>(std::floor(v * length));
  return std::clamp(idx, 0, length - 1);
}

inline double pixel_center(int idx, int length) { return (idx + 0.5) / length; }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace gazehta
