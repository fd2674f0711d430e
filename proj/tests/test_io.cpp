#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include "gazehta/convert.hpp"
#include "gazehta/harness.hpp"
#include "gazehta/visualize.hpp"
#include "testutil.hpp"

using namespace gazehta;
using testutil::TempDir;

TEST(ConvertGazeFollow, NormalizesAndFlagsOutOfFrame) {
  TempDir dir;
  std::filesystem::create_directories(dir / "img");
  cv::imwrite((dir / "img" / "a.png").string(), cv::Mat(100, 200, CV_8UC3, cv::Scalar(0, 0, 0)));
  testutil::write_text(dir / "gf.csv",
                       "path,idx,body_x,body_y,body_w,body_h,eye_x,eye_y,gaze_x,gaze_y,head_x0,head_y0,head_x1,head_y1\n"
                       "a.png,0,0,0,1,1,0.2,0.2,0.75,0.5,20,10,60,30\n"
                       "a.png,1,0,0,1,1,0.2,0.2,-1,-1,100,40,140,80\n"
                       "missing.png,2,0,0,1,1,0.2,0.2,0.1,0.1,0,0,10,10\n");
  const auto rep = convert_gazefollow(dir / "gf.csv", dir / "img", dir / "out.jsonl");
  EXPECT_EQ(rep.records, 2u);
  EXPECT_EQ(rep.skipped, 1u);
  ASSERT_EQ(rep.warnings.size(), 1u);

  const Dataset ds = load_annotations(dir / "out.jsonl", false);
  ASSERT_EQ(ds.size(), 1u);
  const auto& anns = ds.annotations(0);
  ASSERT_EQ(anns.size(), 2u);
  EXPECT_EQ(anns[0].head_box, (Box{0.1, 0.1, 0.3, 0.3}));
  ASSERT_TRUE(anns[0].gaze_point);
  EXPECT_EQ(*anns[0].gaze_point, (Point{0.75, 0.5}));
  EXPECT_FALSE(anns[0].out_of_frame);
  EXPECT_TRUE(anns[1].out_of_frame);
  EXPECT_FALSE(anns[1].gaze_point);
}

TEST(ConvertGazeFollow, ShortRowReportsLine) {
  TempDir dir;
  testutil::write_text(dir / "gf.csv", "a.png,0,0,0,1,1,0.2,0.2,0.75,0.5,20,10,60,30\nb.png,1,2\n");
  ConvertOptions opt;
  opt.image_size = std::make_pair(200, 100);
  try {
    convert_gazefollow(dir / "gf.csv", dir.path(), dir / "out.jsonl", opt);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ConvertVideoAttentionTarget, StrideAndPixelGaze) {
  TempDir dir;
  testutil::write_text(dir / "ann" / "show" / "clip" / "s01.txt",
                       "f0.jpg,10,10,30,30,50,25\n"
                       "f1.jpg,10,10,30,30,-1,-1\n"
                       "f2.jpg,10,10,30,30,-1,-1\n");
  ConvertOptions opt;
  opt.image_size = std::make_pair(100, 50);
  opt.stride = 2;
  const auto rep = convert_video_attention_target(dir / "ann", dir / "img", dir / "out.jsonl", opt);
  EXPECT_EQ(rep.records, 2u);
  const Dataset ds = load_annotations(dir / "out.jsonl", false);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.entry(0).image_path, "show/clip/f0.jpg");
  const auto& a = ds.annotations(0)[0];
  EXPECT_EQ(a.head_box, (Box{0.1, 0.2, 0.3, 0.6}));
  EXPECT_EQ(*a.gaze_point, (Point{0.5, 0.5}));
  EXPECT_TRUE(ds.annotations(1)[0].out_of_frame);

  opt.stride = 0;
  EXPECT_THROW(convert_video_attention_target(dir / "ann", dir / "img", dir / "o2.jsonl", opt), InvalidArgument);
}

TEST(Visualize, OnePanelPerRetainedInstance) {
  TempDir dir;
  SynthConfig sc;
  sc.max_people = 3;
  SceneSample scene = synthetic_scene(sc, 0);
  for (std::uint64_t i = 1; scene.annotations.size() < 2; ++i) scene = synthetic_scene(sc, i);
  const Image& image = scene.image;
  const auto& anns = scene.annotations;
  GtConfig gt;
  const ProposalSet ps = oracle_proposals(make_ground_truth(anns, gt), 20);

  const auto all = write_instance_panels(image, "s", ps, dir / "all");
  EXPECT_EQ(all.size(), anns.size());
  const cv::Mat panel = cv::imread(all.front().string());
  EXPECT_EQ(panel.cols, 4 * image.width);
  EXPECT_EQ(panel.rows, image.height);

  VisualizeOptions one;
  one.max_instances = 1;
  EXPECT_EQ(write_instance_panels(image, "s", ps, dir / "one", one).size(), 1u);
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir / "one"), {}), 1);
}

TEST(Visualize, SceneIdsWithPathsBecomeFlatFileNames) {
  EXPECT_EQ(file_stem("images/scene_000001.png"), "images_scene_000001.png");
  EXPECT_EQ(file_stem("a b\\c:d"), "a_b_c_d");
}
