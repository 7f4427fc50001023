#include <gtest/gtest.h>

#include <random>

#include "dipred/numerics/autograd.hpp"
#include "dipred/numerics/grad_check.hpp"
#include "test_util.hpp"

using namespace dipred;

TEST(GradCheck, QuadraticLoss) {
  std::mt19937_64 rng(1);
  std::vector<Tensor<double>> p{test::random_tensor<double>({4, 3}, rng),
                                test::random_tensor<double>({7}, rng)};
  auto loss = [](const std::vector<Tensor<double>>& ps) {
    double acc = 0;
    for (const auto& t : ps)
      for (double v : t.data()) acc += 0.5 * v * v;
    return acc;
  };
  // Central differences are exact for a quadratic; a wider step only cuts rounding noise.
  GradCheckOptions opt;
  opt.epsilon = 1e-4;
  auto res = grad_check(loss, p, p, opt);
  EXPECT_LT(res.max_rel_error, 1e-9);
  EXPECT_EQ(res.coords_checked, 19u);
}

TEST(GradCheck, DetectsWrongGradient) {
  std::vector<Tensor<double>> p{Tensor<double>({3}, 1.0)};
  auto loss = [](const std::vector<Tensor<double>>& ps) { return ps[0][0] * ps[0][1]; };
  std::vector<Tensor<double>> wrong{Tensor<double>({3}, std::vector<double>{1.0, 2.0, 0.0})};
  auto res = grad_check(loss, p, wrong);
  EXPECT_GT(res.max_rel_error, 0.4);
  EXPECT_EQ(res.worst_index, 1u);
}

TEST(GradCheck, SampledSubsetIsDeterministic) {
  std::vector<Tensor<double>> p{Tensor<double>({100}, 0.5)};
  auto loss = [](const std::vector<Tensor<double>>& ps) {
    double acc = 0;
    for (double v : ps[0].data()) acc += v * v * v;
    return acc;
  };
  std::vector<Tensor<double>> g{Tensor<double>({100}, 0.75)};
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 10;
  auto a = grad_check(loss, p, g, opt);
  auto b = grad_check(loss, p, g, opt);
  EXPECT_EQ(a.coords_checked, 10u);
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
  EXPECT_LT(a.max_rel_error, 1e-8);
}

TEST(GradCheck, ConvReluMean) {
  std::mt19937_64 rng(8);
  std::vector<Tensor<double>> p{test::random_tensor<double>({2, 6, 6}, rng),
                                test::random_tensor<double>({3, 2, 3, 3}, rng),
                                test::random_tensor<double>({3}, rng)};
  auto build = [](const std::vector<ag::Var<double>>& v) {
    return ag::mean(ag::relu(ag::conv2d(v[0], v[1], v[2])));
  };
  std::vector<ag::Var<double>> vars;
  for (const auto& t : p) vars.push_back(ag::parameter(t));
  ag::backward(build(vars));
  std::vector<Tensor<double>> grads;
  for (const auto& v : vars) grads.push_back(v.grad());
  auto loss = [&](const std::vector<Tensor<double>>& ps) {
    std::vector<ag::Var<double>> cs;
    for (const auto& t : ps) cs.push_back(ag::constant(t));
    return build(cs).value()[0];
  };
  EXPECT_LT(grad_check(loss, p, grads).max_rel_error, 1e-6);
}
