#pragma once

// Static per-instance result panels: scene with head box and gaze point,
// then the head, gaze and connection heatmaps overlaid on the scene.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gazehta/core.hpp"
#include "gazehta/data.hpp"
#include "gazehta/model.hpp"
#include "gazehta/postprocess.hpp"

namespace gazehta {

struct VisualizeOptions {
  int max_instances = -1;  // negative keeps all
  double overlay_alpha = 0.55;
};

/// Colormapped heatmap blended over the scene. Values are clamped to [0, 1]
/// rather than rescaled, so near-zero maps stay visibly dark.
inline cv::Mat overlay_heatmap(const cv::Mat& scene_bgr, const Heatmap& map, double alpha) {
  cv::Mat gray(map.height(), map.width(), CV_8UC1);
  for (int j = 0; j < map.height(); ++j)
    for (int i = 0; i < map.width(); ++i)
      gray.at<unsigned char>(j, i) =
          static_cast<unsigned char>(std::lround(std::clamp(map.at(i, j), 0.0, 1.0) * 255.0));
  cv::Mat up, color, out;
  cv::resize(gray, up, scene_bgr.size(), 0, 0, cv::INTER_NEAREST);
  cv::applyColorMap(up, color, cv::COLORMAP_JET);
  cv::addWeighted(scene_bgr, 1.0 - alpha, color, alpha, 0.0, out);
  return out;
}

inline cv::Mat instance_panel(const Image& scene, const ProposalSet& props, const InstancePrediction& p,
                              const VisualizeOptions& opt = {}) {
  const cv::Mat bgr = to_bgr8(scene);
  const int W = bgr.cols, H = bgr.rows;
  cv::Mat annotated = bgr.clone();
  const cv::Point h0(static_cast<int>(p.head_box.x0 * W), static_cast<int>(p.head_box.y0 * H));
  const cv::Point h1(static_cast<int>(p.head_box.x1 * W), static_cast<int>(p.head_box.y1 * H));
  cv::rectangle(annotated, h0, h1, {0, 255, 0}, 2);
  if (p.oof_prob < 0.5) {
    const cv::Point c((h0.x + h1.x) / 2, (h0.y + h1.y) / 2);
    const cv::Point g(static_cast<int>(p.gaze_point.x * W), static_cast<int>(p.gaze_point.y * H));
    cv::line(annotated, c, g, {0, 255, 255}, 2);
    cv::circle(annotated, g, 4, {0, 0, 255}, cv::FILLED);
  }
  const int k = p.proposal_index;
  std::vector<cv::Mat> panels{annotated, overlay_heatmap(bgr, props.head_maps[k], opt.overlay_alpha),
                              overlay_heatmap(bgr, props.gaze_maps[k], opt.overlay_alpha),
                              overlay_heatmap(bgr, props.connection_maps[k], opt.overlay_alpha)};
  cv::Mat row;
  cv::hconcat(panels, row);
  return row;
}

/// File-name form of a scene id: characters outside [A-Za-z0-9._-] become '_'.
inline std::string file_stem(const std::string& scene_id) {
  std::string s = scene_id;
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '_' && ch != '-') ch = '_';
  return s;
}

/// Writes <out_dir>/<file_stem(scene_id)>_inst<k>.png for each retained
/// instance, in decreasing confidence order. Returns the written paths.
inline std::vector<std::filesystem::path> write_instance_panels(const Image& scene, const std::string& scene_id,
                                                                const ProposalSet& props,
                                                                const std::filesystem::path& out_dir,
                                                                const VisualizeOptions& opt = {}) {
  auto instances = to_instances(props);
  std::stable_sort(instances.begin(), instances.end(),
                   [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
  if (opt.max_instances >= 0 && static_cast<int>(instances.size()) > opt.max_instances)
    instances.resize(opt.max_instances);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t n = 0; n < instances.size(); ++n) {
    const auto path = out_dir / (file_stem(scene_id) + "_inst" + std::to_string(n) + ".png");
    if (!cv::imwrite(path.string(), instance_panel(scene, props, instances[n], opt), {cv::IMWRITE_PNG_COMPRESSION, 6}))
      throw std::runtime_error("cannot write " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace gazehta
