#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dipred/evaluation.hpp"
#include "temp_dir.hpp"
#include "test_util.hpp"

using namespace dipred;
using namespace dipred::eval;

namespace {

constexpr ClassId C0 = kTranslateRight;
constexpr ClassId C1 = kTranslateLeft;

std::vector<ClassId> labels_from(std::size_t n, std::vector<std::tuple<std::size_t, std::size_t, ClassId>> runs,
                                 ClassId fill = C1) {
  std::vector<ClassId> out(n, fill);
  for (auto [b, e, c] : runs)
    for (std::size_t i = b; i < e; ++i) out[i] = c;
  return out;
}

prednet::PredNetConfig tiny_prednet() {
  prednet::PredNetConfig c;
  c.channels = {3, 4};
  c.height = 8;
  c.width = 8;
  c.context = 3;
  return c;
}

// Video with labelled, random DIs at window 10, stride 5.
VideoDIs random_video(const std::string& name, std::size_t n_dis, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  VideoDIs v;
  v.name = name;
  const std::size_t W = 10, s = 5;
  v.frames = (n_dis - 1) * s + W + 3;
  std::vector<ClassId> frames(v.frames);
  for (std::size_t f = 0; f < v.frames; ++f) frames[f] = (f / 12) % 2 ? C1 : C0;
  frames[v.frames - 1] = kGap;
  v.timeline = LabelTimeline(frames);
  for (std::size_t i = 0; i < n_dis; ++i) {
    DynamicImage d;
    d.values = test::random_tensor<float>({3, 8, 8}, rng, -1, 1);
    d.set_bounds();
    d.video = name;
    d.start_frame = i * s;
    d.window = W;
    v.dis.push_back(std::move(d));
  }
  v.dis = next_action_labels(std::move(v.dis), v.timeline);
  return v;
}

}  // namespace

TEST(Mse, Examples) {
  Tensor<double> a({1}, 0.4), b({1}, 0.6);
  EXPECT_NEAR(mse(a, b), 0.04, 1e-16);
  EXPECT_EQ(mse(a, a), 0.0);
  std::mt19937_64 rng(1);
  auto x = test::random_tensor<double>({3, 4, 4}, rng), y = test::random_tensor<double>({3, 4, 4}, rng);
  EXPECT_EQ(mse(x, y), mse(y, x));
  EXPECT_THROW(mse(x, Tensor<double>({3, 4, 5})), ShapeError);
}

TEST(PrevBaseline, Examples) {
  std::vector<Tensor<float>> constant(6, Tensor<float>({2, 2, 2}, 0.3f));
  EXPECT_EQ(prev_baseline_mse(constant, 3), 0.0);
  Tensor<float> u({2, 2, 2}, 0.1f), v({2, 2, 2}, 0.7f);
  std::vector<Tensor<float>> alt;
  for (int i = 0; i < 7; ++i) alt.push_back(i % 2 ? v : u);
  EXPECT_NEAR(prev_baseline_mse(alt, 3), mse(u, v), 1e-12);
  EXPECT_THROW(prev_baseline_mse(constant, 6), Error);
}

TEST(AvgOfTd, SeventyTwoFrames) {
  const std::size_t s = 200;
  auto timeline = LabelTimeline::from_runs({{C1, s}, {C0, 50}});
  auto pred = labels_from(250, {{s - 72, s, C0}});
  pred[s - 73] = C1;
  auto td = avg_of_td(pred, timeline);
  EXPECT_EQ(td.at(C0).sum, 72);
  EXPECT_EQ(td.at(C0).count, 1u);
}

TEST(AvgOfTd, NeverPredictedIsZero) {
  auto timeline = LabelTimeline::from_runs({{C1, 100}, {C0, 50}});
  auto td = avg_of_td(labels_from(150, {}), timeline);
  EXPECT_EQ(td.at(C0).mean(), 0.0);
  EXPECT_EQ(td.at(C0).count, 1u);
}

TEST(AvgOfTd, StabilityClause) {
  auto timeline = LabelTimeline::from_runs({{C1, 100}, {C0, 50}});
  auto pred = labels_from(150, {{40, 51, C0}, {60, 100, C0}});
  EXPECT_EQ(avg_of_td(pred, timeline).at(C0).sum, 40);
  // Shrinking the stable window strictly reduces TD.
  for (std::size_t start = 61; start <= 100; ++start) {
    auto shorter = labels_from(150, {{40, 51, C0}, {start, 100, C0}});
    EXPECT_EQ(avg_of_td(shorter, timeline).at(C0).sum, static_cast<long long>(100 - start));
  }
}

TEST(AvgOfTd, GapsSkippedFirstSegmentIgnoredMeansPerClass) {
  auto timeline = LabelTimeline::from_runs({{C0, 20}, {kGap, 10}, {C1, 20}, {kGap, 5}, {C0, 20}, {C1, 10}});
  std::vector<ClassId> pred(timeline.size(), kNoPrediction);
  for (std::size_t f = 25; f < 30; ++f) pred[f] = C1;  // 5 frames before C1 at 30
  for (std::size_t f = 45; f < 55; ++f) pred[f] = C0;  // 10 frames before C0 at 55
  auto td = avg_of_td(pred, timeline);
  EXPECT_EQ(td.at(C1).sum, 5);
  EXPECT_EQ(td.at(C1).count, 2u);  // starts at 30 and 75
  EXPECT_EQ(td.at(C0).sum, 10);
  EXPECT_EQ(td.at(C0).count, 1u);  // the start at frame 0 is not scored
  EXPECT_DOUBLE_EQ(td.at(C1).mean(), 2.5);
  EXPECT_THROW(avg_of_td(std::vector<ClassId>(3, C0), timeline), Error);
}

TEST(AvgOfTd, HoldPredictions) {
  auto held = hold_predictions(10, {2, 5, 8}, {C0, C1, C0});
  EXPECT_EQ(held, (std::vector<ClassId>{kNoPrediction, kNoPrediction, C0, C0, C0, C1, C1, C1, C0, C0}));
}

TEST(AvgOfTd, MergeIsOrderIndependent) {
  std::map<ClassId, TdStats> a{{C0, {10, 2}}}, b{{C0, {3, 1}}, {C1, {7, 1}}};
  std::map<ClassId, TdStats> x, y;
  merge_td(x, a);
  merge_td(x, b);
  merge_td(y, b);
  merge_td(y, a);
  ASSERT_EQ(x.size(), y.size());
  for (auto& [c, s] : x) {
    EXPECT_EQ(s.sum, y[c].sum);
    EXPECT_EQ(s.count, y[c].count);
  }
}

TEST(EvaluatePrediction, UntrainedModelComputesOverSharedPositions) {
  auto model = prednet::init_model<float>(tiny_prednet(), 1);
  std::vector<VideoDIs> videos{random_video("a", 6, 1), random_video("b", 5, 2)};
  MetricsReport r;
  evaluate_prediction(model, videos, r);
  EXPECT_EQ(r.mse_count, 3u + 2u);
  ASSERT_EQ(r.per_video.size(), 2u);
  // prev_mse must equal the copy-previous baseline over the same positions.
  std::vector<Tensor<float>> norm_a;
  for (auto& d : videos[0].dis) norm_a.push_back(d.normalized());
  EXPECT_NEAR(r.per_video[0].prev_mse, prev_baseline_mse(norm_a, 3), 1e-12);
  EXPECT_GT(r.model_mse, 0.0);
  EXPECT_GT(r.prev_mse, 0.0);
  EXPECT_GT(r.prev_mse_raw, 0.0);
  MetricsReport again;
  evaluate_prediction(model, videos, again);
  EXPECT_EQ(report_rows(r), report_rows(again));
}

TEST(HorizonAccuracy, DenominatorsK1AndPermutation) {
  auto model = prednet::init_model<float>(tiny_prednet(), 1);
  classifier::ClassifierConfig ccfg;
  ccfg.channels = {4, 4, 4};
  auto clf = classifier::init_classifier<float>(ccfg, {3, 8, 8}, {C0, C1}, 4);
  std::vector<VideoDIs> videos{random_video("a", 9, 1), random_video("b", 8, 2), random_video("c", 10, 3)};
  MetricsReport r5;
  horizon_accuracy(model, clf, videos, 5, r5);
  ASSERT_EQ(r5.accuracy_by_horizon.size(), 5u);
  for (auto& [k, a] : r5.accuracy_by_horizon) {
    std::size_t expect = 0;
    for (auto& v : videos)
      for (std::size_t p = 0; p + 2 + 5 < v.dis.size(); ++p) expect += is_action(*v.dis[p + 2 + k].next_label);
    EXPECT_EQ(a.total, expect) << k;
    EXPECT_GE(a.value(), 0.0);
    EXPECT_LE(a.value(), 1.0);
  }

  // K = 1 equals direct single-step scoring.
  MetricsReport r1;
  horizon_accuracy(model, clf, videos, 1, r1);
  Ratio direct;
  for (auto& v : videos)
    for (std::size_t p = 0; p + 3 < v.dis.size(); ++p) {
      auto truth = *v.dis[p + 3].next_label;
      if (!is_action(truth)) continue;
      std::vector<Tensor<float>> ctx{v.dis[p].normalized(), v.dis[p + 1].normalized(), v.dis[p + 2].normalized()};
      ++direct.total;
      direct.correct += classifier::classify(clf, prednet::predict_next<float>(model, ctx)).label == truth;
    }
  EXPECT_EQ(r1.accuracy_by_horizon.at(1).correct, direct.correct);
  EXPECT_EQ(r1.accuracy_by_horizon.at(1).total, direct.total);

  std::reverse(videos.begin(), videos.end());
  MetricsReport rr;
  horizon_accuracy(model, clf, videos, 5, rr);
  for (std::size_t k = 1; k <= 5; ++k) {
    EXPECT_EQ(rr.accuracy_by_horizon[k].correct, r5.accuracy_by_horizon[k].correct);
    EXPECT_EQ(rr.accuracy_by_horizon[k].total, r5.accuracy_by_horizon[k].total);
  }
}

TEST(Report, RoundTripDeterministicAndEmpty) {
  test::TempDir dir;
  MetricsReport r;
  r.model_mse = 0.1 / 3.0;
  r.prev_mse = 1e-300;
  r.mse_count = 7;
  r.per_video = {{"vid", 0.25, 0.5, 7}};
  r.classifier_present = true;
  r.accuracy_by_horizon[1] = {2, 3};
  r.accuracy_by_horizon[2] = {1, 3};
  r.baseline_prev_accuracy = {1, 3};
  r.avg_of_td[kGrow] = {15, 2};
  const auto p1 = (dir / "a.csv").string(), p2 = (dir / "b.csv").string();
  write_report(r, p1);
  write_report(r, p2);
  auto rows = read_report(p1);
  EXPECT_EQ(rows, report_rows(r));
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
  EXPECT_NE(s1.find("avg_of_td,grow,7.5,2"), std::string::npos);

  MetricsReport empty;
  write_report(empty, p1);
  auto erows = read_report(p1);
  for (const auto& row : erows) EXPECT_EQ(row.count, 0u);
  EXPECT_EQ(erows.back().metric, "classifier");
  EXPECT_EQ(erows.back().name, "absent");
  EXPECT_THROW(write_report(r, (dir / "missing" / "x.csv").string()), Error);
}
