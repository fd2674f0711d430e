// Builds ground-truth targets for a few synthetic scenes, turns them back
// into predictions and scores them. Perfect predictions must score perfectly.

#include <cstdio>

#include "gazehta/gazehta.hpp"

int main() {
  using namespace gazehta;
  SynthConfig sc;
  sc.rng_seed = 3;
  const Dataset ds = make_synthetic_dataset(sc, 8);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::printf("%s:", ds.scene_id(i).c_str());
    for (const auto& a : ds.annotations(i)) {
      const Point c = a.head_box.center();
      if (a.out_of_frame)
        std::printf("  head (%.3f, %.3f) -> out of frame", c.x, c.y);
      else
        std::printf("  head (%.3f, %.3f) -> (%.3f, %.3f)", c.x, c.y, a.gaze_point->x, a.gaze_point->y);
    }
    std::printf("\n");
  }
  const EvalResult r = evaluate_oracle(ds, GtConfig{}, 20);
  std::printf("\n%s", format_table(r.report).c_str());
  return r.report.map_instance == 1.0 ? 0 : 1;
}
