#include <gtest/gtest.h>

#include <fstream>

#include "dipred/video/pnm.hpp"
#include "dipred/video/synthetic.hpp"
#include "temp_dir.hpp"

using namespace dipred;

namespace {

// Brightness-weighted centroid of the disk: red channel above the background band.
double centroid_x(const Frame& f) {
  double wsum = 0, xsum = 0;
  for (std::size_t y = 0; y < f.height(); ++y)
    for (std::size_t x = 0; x < f.width(); ++x) {
      const double wgt = std::max(0.0, f.at(0, y, x) - 0.4);
      wsum += wgt;
      xsum += wgt * (x + 0.5);
    }
  return xsum / wsum;
}

ActionScript single_action(ClassId c, std::size_t frames, std::size_t gap = 0) {
  ActionScript s;
  s.steps = {{c, frames, gap}};
  s.start_x = 8.0;
  s.start_y = 12.0;
  s.seed = 42;
  return s;
}

}  // namespace

TEST(Pnm, LoadsIdenticalFrames) {
  test::TempDir dir;
  Frame f({3, 4, 4});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(i % 7) / 7.0f;
  for (int i = 0; i < 3; ++i) pnm::write_ppm((dir / pnm::frame_filename(i)).string(), f);
  auto v = pnm::load_frames(dir.str());
  ASSERT_EQ(v.length(), 3u);
  EXPECT_EQ(v.frames[0], v.frames[1]);
  EXPECT_EQ(v.frames[1], v.frames[2]);
}

TEST(Pnm, RoundTripWithinQuantization) {
  test::TempDir dir;
  auto video = gen_synthetic(single_action(kGrow, 6), 16, 24);
  pnm::save_frames(video, dir.str());
  auto back = pnm::load_frames(dir.str(), "frame_*.ppm");
  ASSERT_EQ(back.length(), video.length());
  for (std::size_t i = 0; i < video.length(); ++i)
    for (std::size_t j = 0; j < video.frames[i].size(); ++j)
      EXPECT_LE(std::abs(back.frames[i][j] - video.frames[i][j]), 0.5f / 255.0f + 1e-6f);
}

TEST(Pnm, GrayscaleIsReplicated) {
  test::TempDir dir;
  {
    std::ofstream os(dir / "a.pgm", std::ios::binary);
    os << "P5\n# comment\n2 1\n255\n";
    const unsigned char px[2] = {0, 255};
    os.write(reinterpret_cast<const char*>(px), 2);
  }
  auto v = pnm::load_frames(dir.str());
  ASSERT_EQ(v.frames[0].shape(), (Shape{3, 1, 2}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(v.frames[0].at(c, 0, 0), 0.0f);
    EXPECT_EQ(v.frames[0].at(c, 0, 1), 1.0f);
  }
}

TEST(Pnm, Errors) {
  test::TempDir dir;
  try {
    pnm::load_frames(dir.str());
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no frames"), std::string::npos);
  }
  pnm::write_ppm((dir / "a.ppm").string(), Frame({3, 4, 4}));
  pnm::write_ppm((dir / "b.ppm").string(), Frame({3, 4, 6}));
  EXPECT_THROW(pnm::load_frames(dir.str()), ShapeError);
  EXPECT_THROW(pnm::read((dir / "missing.ppm").string()), Error);
}

TEST(Pnm, Wildcard) {
  EXPECT_TRUE(pnm::wildcard_match("frame_*.ppm", "frame_00001.ppm"));
  EXPECT_TRUE(pnm::wildcard_match("*.p?m", "x.pgm"));
  EXPECT_FALSE(pnm::wildcard_match("*.p?m", "x.png"));
}

TEST(Synthetic, Deterministic) {
  ScriptSampler sampler;
  auto a = gen_synthetic(sample_script(sampler, 5), 32, 40);
  auto b = gen_synthetic(sample_script(sampler, 5), 32, 40);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.labels, b.labels);
  auto c = gen_synthetic(sample_script(sampler, 6), 32, 40);
  EXPECT_NE(a.frames.front(), c.frames.front());
}

TEST(Synthetic, TranslateRightCentroidIncreases) {
  auto v = gen_synthetic(single_action(kTranslateRight, 30), 32, 40);
  ASSERT_EQ(v.length(), 30u);
  for (std::size_t i = 1; i < v.length(); ++i)
    EXPECT_GT(centroid_x(v.frames[i]), centroid_x(v.frames[i - 1])) << "frame " << i;
}

TEST(Synthetic, GapFramesAreStill) {
  auto v = gen_synthetic(single_action(kTranslateDown, 10, 6), 32, 40);
  ASSERT_EQ(v.length(), 16u);
  for (std::size_t i = 11; i < 16; ++i) EXPECT_EQ(v.frames[i], v.frames[10]);
  for (std::size_t i = 10; i < 16; ++i) EXPECT_EQ(v.labels[i], kGap);
  EXPECT_NE(v.frames[9], v.frames[8]);
}

TEST(Synthetic, RangeAndLabels) {
  ScriptSampler sampler;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto script = sample_script(sampler, seed);
    auto v = gen_synthetic(script, 32, 40);
    v.validate();
    EXPECT_EQ(v.labels.size(), script.total_frames());
    for (const auto& f : v.frames)
      for (float x : f.data()) {
        EXPECT_GE(x, 0.0f);
        EXPECT_LE(x, 1.0f);
      }
  }
}

TEST(Synthetic, Errors) {
  auto s = single_action(7, 10);
  EXPECT_THROW(gen_synthetic(s, 32, 40), Error);
  EXPECT_THROW(gen_synthetic(single_action(kGrow, 10), 30, 40), Error);
}

TEST(Windows, PaperClipArithmetic) {
  WindowSpec spec{30, 5};
  EXPECT_EQ(window_count(75, spec), 10u);
  EXPECT_EQ(window_count(30, spec), 1u);
  EXPECT_EQ(window_count(34, spec), 1u);
  EXPECT_EQ(window_count(29, spec), 0u);
}

TEST(Windows, StartsAreArithmetic) {
  auto v = gen_synthetic(single_action(kTranslateLeft, 75), 16, 16);
  for (std::size_t w : {2u, 7u, 30u})
    for (std::size_t s : {1u, 3u, 5u}) {
      auto wins = sliding_windows(v, WindowSpec{w, s});
      ASSERT_EQ(wins.size(), (75 - w) / s + 1);
      for (std::size_t i = 0; i < wins.size(); ++i) {
        EXPECT_EQ(wins[i].start, i * s);
        EXPECT_EQ(wins[i].frames.size(), w);
        EXPECT_EQ(&wins[i].frames[0], &v.frames[i * s]);
      }
    }
  EXPECT_THROW(sliding_windows(v, WindowSpec{76, 5}), Error);
  EXPECT_THROW(sliding_windows(v, WindowSpec{1, 5}), Error);
  EXPECT_THROW(sliding_windows(v, WindowSpec{10, 0}), Error);
}
