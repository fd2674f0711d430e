#pragma once

// Scene sources: a procedural synthetic generator with exact annotations, and
// a JSON-lines annotation loader/writer backed by PNG images on disk.
//
// JSON-lines normal form, one record per head-target instance:
//   {"image_path": "images/a.png", "head_box": [x0,y0,x1,y1],
//    "gaze": [x,y] | null, "out_of_frame": false}
// Coordinates are normalized to [0,1]. A gaze of [-1,-1] is read as the
// out-of-frame sentinel. A record with "head_box": null declares an image
// with no instances. Rows sharing image_path form one scene; rows sharing
// both image_path and head_box are one head with several annotator gaze
// points.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <cstdio>
#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gazehta/core.hpp"
#include "gazehta/gtgen.hpp"
#include "gazehta/rng.hpp"

namespace gazehta {

/// Three-channel image, channel-major (c, y, x), values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, 0.0f) {}

  float& at(int c, int x, int y) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int x, int y) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct SceneSample {
  Image image;
  std::vector<Annotation> annotations;
  std::string scene_id;
};

// ---------------------------------------------------------------------------
// PNG I/O

inline Image read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image " + path.string());
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, x, y) = row[x][2 - c] / 255.0f;
  }
  return img;
}

inline cv::Mat to_bgr8(const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x][2 - c] = static_cast<unsigned char>(std::lround(std::clamp(img.at(c, x, y), 0.0f, 1.0f) * 255.0f));
  }
  return bgr;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  // Compression level pinned so reruns produce byte-identical files.
  if (!cv::imwrite(path.string(), to_bgr8(img), {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw std::runtime_error("cannot write image " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SynthConfig {
  int image_size = 256;
  int max_people = 2;
  double p_out_of_frame = 0.2;
  std::array<int, 2> object_count_range{1, 3};  // distractor squares per scene
  std::uint64_t rng_seed = 0;
  /// Head and target centres are snapped to pixel centres of this grid so
  /// that ground-truth peaks are exact at heatmap resolution.
  int snap_grid = 64;
};

inline void validate(const SynthConfig& c) {
  if (c.image_size < 16) throw InvalidArgument("image_size must be >= 16");
  if (c.max_people < 0) throw InvalidArgument("max_people must be >= 0");
  if (!(c.p_out_of_frame >= 0.0 && c.p_out_of_frame <= 1.0))
    throw InvalidArgument("p_out_of_frame must be in [0,1]");
  if (c.object_count_range[0] < 0 || c.object_count_range[1] < c.object_count_range[0])
    throw InvalidArgument("object_count_range must satisfy 0 <= min <= max");
  if (c.snap_grid < 1) throw InvalidArgument("snap_grid must be positive");
}

/// Geometry of one rendered scene, kept for consistency checks.
struct SceneLayout {
  struct Person {
    Point head;
    double radius = 0.0;
    Point notch;          // centre of the dark orientation notch
    double notch_radius = 0.0;
    int target = -1;      // index into targets, -1 when out of frame
    Point gaze;           // target centre, or a point outside [0,1]^2
  };
  struct Square {
    Point center;
    double half = 0.0;
    std::array<float, 3> color{};
  };
  std::vector<Person> people;
  std::vector<Square> targets;  // looked-at squares first, then distractors
  std::array<float, 3> background{};
  std::vector<std::array<float, 3>> head_colors;
};

namespace detail {

inline double snap(double v, int grid) { return pixel_center(pixel_index(v, grid), grid); }

inline double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

inline std::array<float, 3> random_color(Rng& rng, double lo, double hi) {
  return {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
          static_cast<float>(rng.uniform(lo, hi))};
}

// Saturated colour: one channel high, the others spread out.
inline std::array<float, 3> target_color(Rng& rng) {
  std::array<float, 3> c{};
  const int hot = rng.uniform_int(0, 2);
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<float>(k == hot ? rng.uniform(0.8, 1.0) : rng.uniform(0.0, 0.55));
  return c;
}

constexpr double kHeadRadiusMin = 0.055;
constexpr double kHeadRadiusMax = 0.075;
constexpr double kSquareHalfMin = 0.03;
constexpr double kSquareHalfMax = 0.045;
constexpr double kClearance = 0.02;
constexpr double kMinGazeLength = 0.2;

// One layout attempt; returns nullopt when the random placement collides.
inline std::optional<SceneLayout> try_layout(Rng& rng, const SynthConfig& cfg, int people, int distractors) {
  SceneLayout layout;
  struct Disc {
    Point c;
    double r;
  };
  std::vector<Disc> occupied;
  auto free_at = [&](Point c, double r) {
    for (const Disc& d : occupied)
      if (distance(c, d.c) < r + d.r + kClearance) return false;
    return true;
  };
  auto place = [&](double r) -> std::optional<Point> {
    for (int attempt = 0; attempt < 60; ++attempt) {
      Point c{snap(rng.uniform(r + 0.01, 1.0 - r - 0.01), cfg.snap_grid),
              snap(rng.uniform(r + 0.01, 1.0 - r - 0.01), cfg.snap_grid)};
      if (c.x - r < 0.0 || c.x + r > 1.0 || c.y - r < 0.0 || c.y + r > 1.0) continue;
      if (free_at(c, r)) return c;
    }
    return std::nullopt;
  };

  // Heads first, then each in-frame person's target, then distractors.
  for (int p = 0; p < people; ++p) {
    SceneLayout::Person person;
    person.radius = rng.uniform(kHeadRadiusMin, kHeadRadiusMax);
    auto c = place(person.radius);
    if (!c) return std::nullopt;
    person.head = *c;
    occupied.push_back({*c, person.radius});
    person.target = rng.bernoulli(cfg.p_out_of_frame) ? -1 : 0;
    layout.people.push_back(person);
    layout.head_colors.push_back(random_color(rng, 0.75, 0.95));
  }
  for (auto& person : layout.people) {
    if (person.target < 0) continue;
    SceneLayout::Square sq;
    sq.half = rng.uniform(kSquareHalfMin, kSquareHalfMax);
    std::optional<Point> c;
    for (int attempt = 0; attempt < 40 && !c; ++attempt) {
      auto cand = place(sq.half * std::numbers::sqrt2);
      if (cand && distance(*cand, person.head) >= kMinGazeLength) c = cand;
    }
    if (!c) return std::nullopt;
    sq.center = *c;
    sq.color = target_color(rng);
    occupied.push_back({*c, sq.half * std::numbers::sqrt2});
    person.target = static_cast<int>(layout.targets.size());
    person.gaze = sq.center;
    layout.targets.push_back(sq);
  }
  for (int d = 0; d < distractors; ++d) {
    SceneLayout::Square sq;
    sq.half = rng.uniform(kSquareHalfMin, kSquareHalfMax);
    auto c = place(sq.half * std::numbers::sqrt2);
    if (!c) return std::nullopt;
    sq.center = *c;
    sq.color = target_color(rng);
    occupied.push_back({*c, sq.half * std::numbers::sqrt2});
    layout.targets.push_back(sq);
  }

  // Gaze rays must be unobstructed: nothing but the own head and own target
  // may touch the sight line.
  auto blocked = [&](std::size_t self, Point a, Point b, int own_target) {
    for (std::size_t q = 0; q < layout.people.size(); ++q) {
      if (q == self) continue;
      const auto& o = layout.people[q];
      if (point_segment_distance(o.head, a, b) < o.radius + 0.5 * kClearance) return true;
    }
    for (std::size_t t = 0; t < layout.targets.size(); ++t) {
      if (static_cast<int>(t) == own_target) continue;
      const auto& sq = layout.targets[t];
      if (point_segment_distance(sq.center, a, b) < sq.half * std::numbers::sqrt2 + 0.5 * kClearance)
        return true;
    }
    return false;
  };
  for (std::size_t p = 0; p < layout.people.size(); ++p) {
    auto& person = layout.people[p];
    if (person.target >= 0) {
      if (blocked(p, person.head, person.gaze, person.target)) return std::nullopt;
    } else {
      bool ok = false;
      for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        // Far enough that the point is outside the frame from any head.
        const Point far{person.head.x + 2.0 * std::cos(angle), person.head.y + 2.0 * std::sin(angle)};
        if (!blocked(p, person.head, far, -1)) {
          person.gaze = far;
          ok = true;
        }
      }
      if (!ok) return std::nullopt;
    }
    const double len = distance(person.head, person.gaze);
    const Point dir{(person.gaze.x - person.head.x) / len, (person.gaze.y - person.head.y) / len};
    person.notch_radius = 0.38 * person.radius;
    person.notch = {person.head.x + 0.58 * person.radius * dir.x, person.head.y + 0.58 * person.radius * dir.y};
  }
  layout.background = random_color(rng, 0.15, 0.4);
  return layout;
}

inline Image render(const SceneLayout& layout, int size, Rng& rng) {
  Image img(size, size);
  // Quantize to 8 bits at render time so in-memory and on-disk scenes agree.
  auto put = [&](int x, int y, const std::array<float, 3>& c) {
    for (int k = 0; k < 3; ++k) img.at(k, x, y) = c[k];
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double noise = rng.uniform(-0.04, 0.04);
      std::array<float, 3> c = layout.background;
      for (auto& v : c) v = static_cast<float>(std::clamp(v + noise, 0.0, 1.0));
      put(x, y, c);
    }
  auto centre = [&](int idx) { return (idx + 0.5) / size; };
  for (const auto& sq : layout.targets) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (std::abs(centre(x) - sq.center.x) <= sq.half && std::abs(centre(y) - sq.center.y) <= sq.half)
          put(x, y, sq.color);
  }
  const std::array<float, 3> notch_color{0.02f, 0.02f, 0.05f};
  for (std::size_t p = 0; p < layout.people.size(); ++p) {
    const auto& person = layout.people[p];
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const Point q{centre(x), centre(y)};
        if (distance(q, person.notch) <= person.notch_radius)
          put(x, y, notch_color);
        else if (distance(q, person.head) <= person.radius)
          put(x, y, layout.head_colors[p]);
      }
  }
  for (auto& v : img.pixels) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
  return img;
}

}  // namespace detail

/// Lays out and renders one scene; `layout_out` receives the geometry when
/// non-null.
inline SceneSample generate_scene(Rng& rng, const SynthConfig& config, SceneLayout* layout_out = nullptr) {
  validate(config);
  SceneSample sample;
  sample.image = Image(config.image_size, config.image_size);
  const int people = config.max_people == 0 ? 0 : rng.uniform_int(1, config.max_people);
  const int distractors = rng.uniform_int(config.object_count_range[0], config.object_count_range[1]);

  std::optional<SceneLayout> layout;
  for (int attempt = 0; attempt < 500 && !layout; ++attempt)
    layout = detail::try_layout(rng, config, people, std::max(0, distractors - attempt / 50));
  if (!layout) {
    // Crowded configuration: fall back to a single person.
    for (int attempt = 0; attempt < 500 && !layout; ++attempt)
      layout = detail::try_layout(rng, config, std::min(people, 1), 0);
  }
  if (!layout) throw std::runtime_error("synthetic layout failed; configuration too crowded");

  sample.image = detail::render(*layout, config.image_size, rng);
  for (const auto& person : layout->people) {
    Annotation a;
    a.head_box = {person.head.x - person.radius, person.head.y - person.radius, person.head.x + person.radius,
                  person.head.y + person.radius};
    a.out_of_frame = person.target < 0;
    if (!a.out_of_frame) a.gaze_point = person.gaze;
    sample.annotations.push_back(a);
  }
  if (layout_out) *layout_out = *layout;
  return sample;
}

/// Scene `index` of the synthetic split identified by config.rng_seed. Each
/// scene owns an RNG stream, so scenes can be generated in any order.
inline SceneSample synthetic_scene(const SynthConfig& config, std::uint64_t index) {
  Rng rng(stream_seed(config.rng_seed, index));
  SceneSample s = generate_scene(rng, config);
  char id[32];
  std::snprintf(id, sizeof id, "scene_%06llu", static_cast<unsigned long long>(index));
  s.scene_id = id;
  return s;
}

// ---------------------------------------------------------------------------
// Datasets

/// Scenes with lazily loaded images. Synthetic datasets hold their images in
/// memory; loaded datasets read PNGs on first access.
class Dataset {
 public:
  struct Entry {
    std::string scene_id;
    std::string image_path;  // as written in the annotation file
    std::filesystem::path resolved_path;
    std::vector<Annotation> annotations;
    std::optional<Image> image;
  };

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<Annotation>& annotations(std::size_t i) const { return entries_.at(i).annotations; }
  const std::string& scene_id(std::size_t i) const { return entries_.at(i).scene_id; }

  const Image& image(std::size_t i) const {
    Entry& e = entries_.at(i);
    if (!e.image) e.image = read_png(e.resolved_path);
    return *e.image;
  }

  SceneSample sample(std::size_t i) const { return {image(i), annotations(i), scene_id(i)}; }

  void add(Entry e) { entries_.push_back(std::move(e)); }
  void add(SceneSample s, std::string image_path = {}) {
    Entry e;
    e.scene_id = s.scene_id;
    e.image_path = image_path.empty() ? s.scene_id : std::move(image_path);
    e.annotations = std::move(s.annotations);
    e.image = std::move(s.image);
    entries_.push_back(std::move(e));
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  void warn(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  mutable std::vector<Entry> entries_;
  std::vector<std::string> warnings_;
};

inline Dataset make_synthetic_dataset(const SynthConfig& config, std::size_t count, std::size_t first_index = 0) {
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    SceneSample s = synthetic_scene(config, first_index + i);
    const std::string path = "images/" + s.scene_id + ".png";
    ds.add(std::move(s), path);
  }
  return ds;
}

namespace detail {

inline double json_number(const nlohmann::json& v, std::size_t line, const char* field) {
  if (!v.is_number()) throw ParseError(std::string("field '") + field + "' must be numeric", line);
  return v.get<double>();
}

inline Annotation parse_record(const nlohmann::json& rec, std::size_t line) {
  Annotation a;
  const auto& box = rec.at("head_box");
  if (!box.is_array() || box.size() != 4) throw ParseError("head_box must be [x0,y0,x1,y1]", line);
  a.head_box = {json_number(box[0], line, "head_box"), json_number(box[1], line, "head_box"),
                json_number(box[2], line, "head_box"), json_number(box[3], line, "head_box")};
  const bool oof_flag = rec.contains("out_of_frame") && rec["out_of_frame"].is_boolean() &&
                        rec["out_of_frame"].get<bool>();
  const auto gaze = rec.contains("gaze") ? rec["gaze"] : nlohmann::json();
  if (gaze.is_null()) {
    a.out_of_frame = true;
  } else {
    if (!gaze.is_array() || gaze.size() != 2) throw ParseError("gaze must be [x,y] or null", line);
    const Point p{json_number(gaze[0], line, "gaze"), json_number(gaze[1], line, "gaze")};
    if (p.x == -1.0 && p.y == -1.0) {
      a.out_of_frame = true;
    } else if (oof_flag) {
      a.out_of_frame = true;  // explicit flag wins over a stray point
    } else {
      a.gaze_point = p;
    }
  }
  try {
    validate(a);
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), line);
  }
  return a;
}

}  // namespace detail

/// Reads the JSON-lines normal form. Relative image paths resolve against
/// the annotation file's directory. Scenes whose image is missing are
/// skipped and reported through Dataset::warnings().
inline Dataset load_annotations(const std::filesystem::path& path, bool check_images = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file " + path.string());
  const auto base = path.parent_path();

  std::vector<std::string> order;
  std::map<std::string, std::vector<Annotation>> grouped;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
    if (!rec.is_object() || !rec.contains("image_path") || !rec["image_path"].is_string())
      throw ParseError("record needs a string image_path", line);
    if (!rec.contains("head_box")) throw ParseError("record needs head_box", line);
    const std::string image_path = rec["image_path"].get<std::string>();
    auto [it, inserted] = grouped.try_emplace(image_path);
    if (inserted) order.push_back(image_path);
    if (rec["head_box"].is_null()) continue;  // image without instances

    Annotation a = detail::parse_record(rec, line);
    auto& list = it->second;
    auto same_head = std::find_if(list.begin(), list.end(),
                                  [&](const Annotation& o) { return o.head_box == a.head_box; });
    if (same_head != list.end()) {
      if (a.gaze_point && !same_head->out_of_frame) same_head->extra_gaze_points.push_back(*a.gaze_point);
    } else {
      list.push_back(std::move(a));
    }
  }

  Dataset ds;
  for (const std::string& image_path : order) {
    Dataset::Entry e;
    e.scene_id = image_path;
    e.image_path = image_path;
    e.resolved_path = std::filesystem::path(image_path).is_absolute() ? std::filesystem::path(image_path)
                                                                      : base / image_path;
    e.annotations = std::move(grouped[image_path]);
    if (check_images && !std::filesystem::exists(e.resolved_path)) {
      ds.warn("missing image " + e.resolved_path.string() + "; scene skipped");
      continue;
    }
    ds.add(std::move(e));
  }
  return ds;
}

inline nlohmann::json annotation_record(const std::string& image_path, const Annotation& a,
                                        std::optional<Point> gaze) {
  nlohmann::json rec;
  rec["image_path"] = image_path;
  rec["head_box"] = {a.head_box.x0, a.head_box.y0, a.head_box.x1, a.head_box.y1};
  rec["gaze"] = gaze ? nlohmann::json{gaze->x, gaze->y} : nlohmann::json();
  rec["out_of_frame"] = a.out_of_frame;
  return rec;
}

/// Writes the JSON-lines normal form; extra annotator points become extra
/// rows with the same head box.
inline void write_annotations(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write annotation file " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& e = ds.entry(i);
    if (e.annotations.empty()) {
      nlohmann::json rec;
      rec["image_path"] = e.image_path;
      rec["head_box"] = nullptr;
      out << rec.dump() << '\n';
      continue;
    }
    for (const Annotation& a : e.annotations) {
      out << annotation_record(e.image_path, a, a.gaze_point).dump() << '\n';
      for (const Point& p : a.extra_gaze_points) out << annotation_record(e.image_path, a, p).dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Writes every scene image (PNG) plus annotations.jsonl under `dir`.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto target = dir / ds.entry(i).image_path;
    std::filesystem::create_directories(target.parent_path());
    write_png(target, ds.image(i));
  }
  write_annotations(ds, dir / "annotations.jsonl");
}

}  // namespace gazehta
