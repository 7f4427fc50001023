#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dipred/numerics/adam.hpp"
#include "test_util.hpp"

using namespace dipred;

namespace {

// Independent scalar Adam recurrences.
struct ScalarAdam {
  double m = 0, v = 0, p;
  int t = 0;
  double alpha = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  void step(double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p -= alpha * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Adam, ZeroGradientIsIdentity) {
  std::mt19937_64 rng(1);
  std::vector<Tensor<double>> params{test::random_tensor<double>({3, 4}, rng),
                                     test::random_tensor<double>({5}, rng)};
  const auto before = params;
  std::vector<Tensor<double>> grads{Tensor<double>({3, 4}), Tensor<double>({5})};
  AdamState<double> st;
  for (int i = 1; i <= 25; ++i) {
    adam_step(params, grads, st);
    EXPECT_EQ(st.step, static_cast<std::uint64_t>(i));
    EXPECT_EQ(params, before);
  }
  ASSERT_EQ(st.first_moment.size(), 2u);
  EXPECT_EQ(st.first_moment[0].shape(), params[0].shape());
  EXPECT_EQ(st.second_moment[1].shape(), params[1].shape());
}

TEST(Adam, FirstStepMovesByAlpha) {
  std::vector<Tensor<double>> p{Tensor<double>({1}, 0.0)};
  AdamState<double> st;
  adam_step(p, {Tensor<double>({1}, 1.0)}, st);
  // m_hat = v_hat = 1, so the step is alpha / (1 + eps).
  EXPECT_NEAR(p[0][0], -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MatchesScalarReference) {
  std::vector<Tensor<double>> p{Tensor<double>({2}, std::vector<double>{0.3, -1.2})};
  ScalarAdam a{.p = 0.3}, b{.p = -1.2};
  AdamState<double> st;
  const std::vector<std::pair<double, double>> grads{{0.5, -2.0}, {0.5, -2.0}, {-0.1, 3.0}};
  for (auto [ga, gb] : grads) {
    adam_step(p, {Tensor<double>({2}, std::vector<double>{ga, gb})}, st);
    a.step(ga);
    b.step(gb);
    EXPECT_NEAR(p[0][0], a.p, 1e-12);
    EXPECT_NEAR(p[0][1], b.p, 1e-12);
  }
}

TEST(Adam, RejectsBadGradients) {
  std::vector<Tensor<double>> p{Tensor<double>({2})};
  AdamState<double> st;
  EXPECT_THROW(adam_step(p, {Tensor<double>({3})}, st), ShapeError);
  EXPECT_THROW(adam_step(p, {Tensor<double>({2}, std::nan(""))}, st), NonFiniteError);
  EXPECT_EQ(st.step, 0u);
}
