#pragma once

// Converters from the public gaze-following annotation layouts to the
// JSON-lines normal form read by load_annotations().
//
// GazeFollow: one CSV with columns
//   path,idx,body_x,body_y,body_w,body_h,eye_x,eye_y,gaze_x,gaze_y,
//   head_x0,head_y0,head_x1,head_y1[,inout,...]
// head boxes in pixels, eye/gaze already normalized, gaze -1 when absent.
// Test splits repeat a row per annotator; rows are emitted as-is and merged
// by the loader.
//
// VideoAttentionTarget: one text file per head track with lines
//   frame_name,x0,y0,x1,y1,gaze_x,gaze_y
// everything in pixels, gaze -1,-1 when out of frame. The image for a track
// file <ann_root>/<show>/<clip>/<track>.txt is <image_root>/<show>/<clip>/<frame>.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "gazehta/core.hpp"

namespace gazehta {

struct ConvertOptions {
  /// Keep one frame out of every `stride` consecutive frames of a track.
  int stride = 1;
  /// Pixel size used to normalize when images are unavailable.
  std::optional<std::pair<int, int>> image_size;
};

struct ConvertReport {
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& s : out) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
  }
  return out;
}

inline double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + s + "'", line);
  }
}

class ImageSizeCache {
 public:
  explicit ImageSizeCache(std::optional<std::pair<int, int>> fixed) : fixed_(fixed) {}

  std::optional<std::pair<int, int>> operator()(const std::filesystem::path& p) {
    if (fixed_) return fixed_;
    const std::string key = p.string();
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    std::optional<std::pair<int, int>> r;
    const cv::Mat img = cv::imread(key, cv::IMREAD_UNCHANGED);
    if (!img.empty()) r = std::make_pair(img.cols, img.rows);
    cache_[key] = r;
    return r;
  }

 private:
  std::optional<std::pair<int, int>> fixed_;
  std::map<std::string, std::optional<std::pair<int, int>>> cache_;
};

inline nlohmann::json record(const std::string& image_path, const Box& head, std::optional<Point> gaze) {
  nlohmann::json j;
  j["image_path"] = image_path;
  j["head_box"] = {head.x0, head.y0, head.x1, head.y1};
  if (gaze) {
    j["gaze"] = {gaze->x, gaze->y};
    j["out_of_frame"] = false;
  } else {
    j["gaze"] = nullptr;
    j["out_of_frame"] = true;
  }
  return j;
}

inline Box clamp_box(Box b) {
  b.x0 = std::clamp(b.x0, 0.0, 1.0);
  b.y0 = std::clamp(b.y0, 0.0, 1.0);
  b.x1 = std::clamp(b.x1, 0.0, 1.0);
  b.y1 = std::clamp(b.y1, 0.0, 1.0);
  return b;
}

}  // namespace detail

/// Converts a GazeFollow CSV. Image paths in the output are relative to
/// `image_root`, which is also where images are looked up for their size.
inline ConvertReport convert_gazefollow(const std::filesystem::path& csv, const std::filesystem::path& image_root,
                                        const std::filesystem::path& out_path, const ConvertOptions& opt = {}) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot open " + csv.string());
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  ConvertReport rep;
  detail::ImageSizeCache sizes(opt.image_size);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const auto f = detail::split_csv(text);
    if (f.empty() || (f.size() == 1 && f[0].empty())) continue;
    if (line == 1 && f[0] == "path") continue;  // header
    if (f.size() < 14) throw ParseError("expected at least 14 columns, got " + std::to_string(f.size()), line);
    const std::string& rel = f[0];
    const auto wh = sizes(image_root / rel);
    if (!wh) {
      ++rep.skipped;
      rep.warnings.push_back("line " + std::to_string(line) + ": cannot read image " + rel);
      continue;
    }
    const double W = wh->first, H = wh->second;
    const Box head = detail::clamp_box({detail::to_double(f[10], line) / W, detail::to_double(f[11], line) / H,
                                        detail::to_double(f[12], line) / W, detail::to_double(f[13], line) / H});
    const double gx = detail::to_double(f[8], line), gy = detail::to_double(f[9], line);
    bool in_frame = !(gx < 0.0 || gy < 0.0);
    if (f.size() >= 15 && !f[14].empty()) in_frame = in_frame && detail::to_double(f[14], line) > 0.0;
    std::optional<Point> gaze;
    if (in_frame) gaze = Point{std::clamp(gx, 0.0, 1.0), std::clamp(gy, 0.0, 1.0)};
    out << detail::record(rel, head, gaze).dump() << '\n';
    ++rep.records;
  }
  return rep;
}

/// Converts every VideoAttentionTarget track file below `annotation_root`.
inline ConvertReport convert_video_attention_target(const std::filesystem::path& annotation_root,
                                                    const std::filesystem::path& image_root,
                                                    const std::filesystem::path& out_path,
                                                    const ConvertOptions& opt = {}) {
  if (opt.stride < 1) throw InvalidArgument("stride must be >= 1");
  if (!std::filesystem::is_directory(annotation_root))
    throw std::runtime_error("not a directory: " + annotation_root.string());
  std::vector<std::filesystem::path> tracks;
  for (const auto& e : std::filesystem::recursive_directory_iterator(annotation_root))
    if (e.is_regular_file() && e.path().extension() == ".txt") tracks.push_back(e.path());
  std::sort(tracks.begin(), tracks.end());

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  ConvertReport rep;
  detail::ImageSizeCache sizes(opt.image_size);
  for (const auto& track : tracks) {
    const auto clip_dir = std::filesystem::relative(track.parent_path(), annotation_root);
    std::ifstream in(track);
    std::string text;
    std::size_t line = 0, kept = 0;
    while (std::getline(in, text)) {
      ++line;
      const auto f = detail::split_csv(text);
      if (f.empty() || (f.size() == 1 && f[0].empty())) continue;
      if (f.size() != 7) throw ParseError(track.string() + ": expected 7 columns", line);
      if (kept++ % static_cast<std::size_t>(opt.stride) != 0) continue;
      const std::string rel = (clip_dir / f[0]).generic_string();
      const auto wh = sizes(image_root / rel);
      if (!wh) {
        ++rep.skipped;
        rep.warnings.push_back(track.string() + ":" + std::to_string(line) + ": cannot read image " + rel);
        continue;
      }
      const double W = wh->first, H = wh->second;
      const Box head = detail::clamp_box({detail::to_double(f[1], line) / W, detail::to_double(f[2], line) / H,
                                          detail::to_double(f[3], line) / W, detail::to_double(f[4], line) / H});
      const double gx = detail::to_double(f[5], line), gy = detail::to_double(f[6], line);
      std::optional<Point> gaze;
      if (gx >= 0.0 && gy >= 0.0) gaze = Point{std::clamp(gx / W, 0.0, 1.0), std::clamp(gy / H, 0.0, 1.0)};
      out << detail::record(rel, head, gaze).dump() << '\n';
      ++rep.records;
    }
  }
  return rep;
}

}  // namespace gazehta
