#include <gtest/gtest.h>

#include <random>

#include "dipred/classifier.hpp"
#include "temp_dir.hpp"
#include "test_util.hpp"

using namespace dipred;
using namespace dipred::classifier;

namespace {

constexpr ClassId A = kTranslateRight;
constexpr ClassId B = kGrow;

DynamicImage di_at(std::size_t start, std::size_t window) {
  DynamicImage d;
  d.values = Tensor<float>({1, 1, 1});
  d.start_frame = start;
  d.window = window;
  return d;
}

// Bright left half vs bright right half, with noise.
std::vector<LabeledExample> separable_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(0.0f, 0.3f);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId label = i % 2 ? kTranslateLeft : kTranslateRight;
    Tensor<float> x({3, 8, 8});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t xx = 0; xx < 8; ++xx) {
          const bool bright = (label == kTranslateRight) == (xx < 4);
          x.at(c, y, xx) = (bright ? 0.7f : 0.0f) + noise(rng);
        }
    out.push_back({std::move(x), label});
  }
  return out;
}

ClassifierConfig small_config() {
  ClassifierConfig c;
  c.channels = {4, 4, 4};
  c.epochs = 15;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(RelabelGaps, Examples) {
  auto t = LabelTimeline::from_runs({{A, 100}, {kGap, 30}, {B, 70}});
  EXPECT_EQ(relabel_gaps(t), LabelTimeline::from_runs({{A, 100}, {B, 100}}));
  auto plain = LabelTimeline::from_runs({{A, 10}, {B, 5}});
  EXPECT_EQ(relabel_gaps(plain), plain);
  EXPECT_EQ(relabel_gaps(LabelTimeline::from_runs({{A, 10}, {kGap, 5}})),
            LabelTimeline::from_runs({{A, 10}, {kEnd, 5}}));
  EXPECT_EQ(relabel_gaps(LabelTimeline::from_runs({{kGap, 3}, {B, 2}})), LabelTimeline::from_runs({{B, 5}}));
}

TEST(RelabelGaps, IdempotentAndPreservesActions) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cls(-1, 3), len(1, 20);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<ClassId, std::size_t>> runs;
    for (int i = 0, n = len(rng) % 8 + 1; i < n; ++i) runs.push_back({cls(rng), static_cast<std::size_t>(len(rng))});
    auto t = LabelTimeline::from_runs(runs);
    auto r = relabel_gaps(t);
    ASSERT_EQ(relabel_gaps(r), r);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != kGap) {
        ASSERT_EQ(r[i], t[i]);
      }
      ASSERT_NE(r[i], kGap);
    }
  }
}

TEST(NextActionLabels, Examples) {
  auto t = LabelTimeline::from_runs({{A, 40}, {kGap, 10}, {B, 30}});
  auto out = next_action_labels({di_at(0, 30), di_at(20, 30), di_at(50, 30), di_at(10, 30)}, t);
  EXPECT_EQ(out[0].next_label, A);  // frame 30 is still A
  EXPECT_EQ(out[1].next_label, B);  // window ends at the gap start; gap is followed by B
  EXPECT_EQ(out[2].next_label, kEnd);
  EXPECT_EQ(out[3].next_label, B);  // frame 40 is a gap frame
  EXPECT_THROW(next_action_labels({di_at(60, 30)}, t), Error);
}

TEST(Sgd, WeightDecayAloneShrinksNorms) {
  std::mt19937_64 rng(1);
  std::vector<Tensor<double>> p{test::random_tensor<double>({4, 3}, rng), test::random_tensor<double>({5}, rng)};
  std::vector<Tensor<double>> zero{Tensor<double>({4, 3}), Tensor<double>({5})};
  std::vector<Tensor<double>> vel;
  auto norm = [&] {
    double s = 0;
    for (auto& t : p)
      for (double v : t.data()) s += v * v;
    return s;
  };
  double prev = norm();
  for (int i = 0; i < 50; ++i) {
    sgd_momentum_step(p, zero, vel, 0.01, 0.9, 5e-4);
    const double now = norm();
    ASSERT_LT(now, prev);
    prev = now;
  }
}

TEST(Sgd, MomentumOracle) {
  std::vector<Tensor<double>> p{Tensor<double>({1}, 1.0)};
  std::vector<Tensor<double>> g{Tensor<double>({1}, 0.5)};
  std::vector<Tensor<double>> vel;
  sgd_momentum_step(p, g, vel, 0.1, 0.9, 0.01);
  EXPECT_DOUBLE_EQ(vel[0][0], 0.51);
  EXPECT_DOUBLE_EQ(p[0][0], 1.0 - 0.051);
  sgd_momentum_step(p, g, vel, 0.1, 0.9, 0.01);
  const double v2 = 0.9 * 0.51 + 0.5 + 0.01 * 0.949;
  EXPECT_DOUBLE_EQ(vel[0][0], v2);
  EXPECT_DOUBLE_EQ(p[0][0], 0.949 - 0.1 * v2);
}

TEST(ClassifierLr, HalvesEveryStep) {
  ClassifierConfig c;
  c.lr = 0.01;
  c.lr_step = 500;
  EXPECT_EQ(classifier_lr(c, 0), 0.01);
  EXPECT_EQ(classifier_lr(c, 499), 0.01);
  EXPECT_EQ(classifier_lr(c, 500), 0.005);
  EXPECT_EQ(classifier_lr(c, 1500), 0.00125);
}

TEST(Classifier, SeparableToyReachesFullAccuracy) {
  auto data = separable_set(64, 1);
  auto res = train_classifier(data, small_config());
  EXPECT_EQ(accuracy(res.model, data), 1.0);
  EXPECT_EQ(accuracy(res.model, separable_set(32, 2)), 1.0);
  EXPECT_LT(res.history.back().loss, res.history.front().loss);
  EXPECT_EQ(res.model.classes, (std::vector<ClassId>{kTranslateRight, kTranslateLeft}));
}

TEST(Classifier, ReproduciblePerSeed) {
  auto data = separable_set(32, 1);
  auto cfg = small_config();
  cfg.epochs = 3;
  auto a = train_classifier(data, cfg);
  auto b = train_classifier(data, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  EXPECT_EQ(a.model.params, b.model.params);
  cfg.seed = 4;
  EXPECT_NE(train_classifier(data, cfg).model.params, a.model.params);
}

TEST(Classifier, ProbabilitiesAndBatchAgreement) {
  auto data = separable_set(16, 1);
  auto m = init_classifier<float>(small_config(), {3, 8, 8}, {0, 1, 2}, 9);
  std::vector<Tensor<float>> xs;
  for (auto& e : data) xs.push_back(e.x);
  auto batch = classify_batch(m, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto single = classify(m, xs[i]);
    EXPECT_EQ(single.label, batch[i].label);
    EXPECT_EQ(single.probabilities, batch[i].probabilities);
    double s = 0;
    for (double p : single.probabilities) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Classifier, ArgmaxInvariantToLogitShift) {
  auto data = separable_set(16, 3);
  auto m = init_classifier<double>(small_config(), {3, 8, 8}, {0, 1, 2}, 9);
  auto shifted = m;
  for (auto& v : shifted.params.back().data()) v += 17.0;  // fc bias
  for (auto& e : data) {
    auto x = e.x.cast<double>();
    auto a = classify(m, x), b = classify(shifted, x);
    EXPECT_EQ(a.label, b.label);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.probabilities[i], b.probabilities[i], 1e-12);
  }
}

TEST(Classifier, Errors) {
  auto data = separable_set(8, 1);
  EXPECT_THROW(train_classifier(data, small_config(), {kTranslateRight, kTranslateLeft, kGrow}), Error);
  EXPECT_THROW(train_classifier(std::vector<LabeledExample>{}, small_config()), Error);
  std::vector<LabeledExample> one_class(data.begin(), data.begin() + 1);
  EXPECT_THROW(train_classifier(one_class, small_config()), Error);
  auto m = init_classifier<float>(small_config(), {3, 8, 8}, {0, 1}, 1);
  EXPECT_THROW(classify(m, Tensor<float>({3, 8, 16})), ShapeError);
}

TEST(Classifier, CheckpointRoundTrip) {
  test::TempDir dir;
  auto m = init_classifier<float>(small_config(), {3, 8, 16}, {0, 2, 3}, 1);
  const auto path = (dir / "c.ckpt").string();
  save_checkpoint(path, to_checkpoint(m));
  auto back = from_checkpoint(load_checkpoint<float>(path));
  EXPECT_EQ(back.classes, m.classes);
  EXPECT_EQ(back.input_shape, m.input_shape);
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(back.cfg.channels, m.cfg.channels);
}
