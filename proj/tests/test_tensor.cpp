#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dipred/numerics/ditf.hpp"
#include "test_util.hpp"

using namespace dipred;

TEST(Tensor, SizeMatchesShape) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.channels(), 2u);
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
}

TEST(Tensor, NonFiniteIsReported) {
  Tensor<double> t({2}, 1.0);
  EXPECT_NO_THROW(require_finite(t, "t"));
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(require_finite(t, "t"), NonFiniteError);
}

TEST(Ditf, HeaderLayoutIsExact) {
  Tensor<float> t({1, 2}, std::vector<float>{1.0f, -2.0f});
  std::ostringstream os;
  ditf::write(os, t);
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 3u + 2u * 4u + 2u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "DITF");
  EXPECT_EQ(bytes[4], 1);  // version
  EXPECT_EQ(bytes[5], 1);  // f32
  EXPECT_EQ(bytes[6], 2);  // rank
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 2);
  // 1.0f little-endian is 00 00 80 3f
  EXPECT_EQ(static_cast<unsigned char>(bytes[15]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(bytes[18]), 0x3f);
}

TEST(Ditf, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto d = test::random_tensor<double>({3, 5, 7}, rng, -1e6, 1e6);
    std::stringstream ss;
    ditf::write(ss, d);
    const std::string first = ss.str();
    auto back = ditf::read<double>(ss);
    EXPECT_EQ(back, d);
    std::ostringstream again;
    ditf::write(again, back);
    EXPECT_EQ(again.str(), first);

    auto f = d.cast<float>();
    std::stringstream sf;
    ditf::write(sf, f);
    EXPECT_EQ(ditf::read<float>(sf), f);
  }
}

TEST(Ditf, RejectsCorruptStreams) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(ditf::read<float>(bad), ditf::FormatError);
  Tensor<float> t({4}, 1.0f);
  std::ostringstream os;
  ditf::write(os, t);
  std::string truncated = os.str().substr(0, os.str().size() - 2);
  std::stringstream ts(truncated);
  EXPECT_THROW(ditf::read<float>(ts), ditf::FormatError);
}
