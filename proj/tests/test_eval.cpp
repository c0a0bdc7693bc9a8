#include <gtest/gtest.h>

#include "eatcl/eval.hpp"

using namespace eatcl;

namespace {

// Logits equal the input, so a one-hot row forces the prediction.
MLPModel identity_model(std::size_t k) {
  MLPModel m = init_model(std::vector<std::size_t>{k, k}, 1);
  m.weights[0] = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) m.weights[0](i, i) = 1.0;
  return m;
}

Matrix one_hot_rows(const std::vector<int>& cls, std::size_t k) {
  Matrix x(cls.size(), k);
  for (std::size_t i = 0; i < cls.size(); ++i) x(i, static_cast<std::size_t>(cls[i])) = 1.0;
  return x;
}

// Always predicts class 0 (bias only).
MLPModel constant_model(std::size_t dim, std::size_t k) {
  MLPModel m = init_model(std::vector<std::size_t>{dim, k}, 1);
  m.weights[0] = Matrix(dim, k);
  m.biases[0][0] = 1.0;
  return m;
}

}  // namespace

TEST(Accuracy, ConstantPredictorOnBalancedSet) {
  const Dataset d = gen_crescent(100, 0.1, 1);
  EXPECT_EQ(clean_accuracy(constant_model(2, 2), d), 50.0);
}

TEST(Accuracy, MatchesCountingOracle) {
  Rng rng(3);
  const MLPModel m = init_model(std::vector<std::size_t>{2, 5, 3}, 4);
  Matrix x(200, 2);
  for (double& v : x.values()) v = rng.uniform(-1, 1);
  std::vector<int> y(200);
  for (int& v : y) v = static_cast<int>(rng.below(3));
  const Dataset d = make_dataset(x, y);
  const Matrix logits = forward(m, x);
  int hit = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    int best = 0;
    for (int j = 1; j < 3; ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    hit += best == y[i];
  }
  EXPECT_EQ(clean_accuracy(m, d), 100.0 * hit / 200.0);
  EXPECT_THROW(clean_accuracy(m, Dataset{}), ArgumentError);
}

TEST(Robustness, ZeroBudgetEqualsAccuracy) {
  const Dataset d = gen_crescent(100, 0.2, 2);
  const MLPModel m = init_model(std::vector<std::size_t>{2, 6, 2}, 3);
  AttackConfig cfg;
  cfg.eps = 0.0;
  Rng rng(1);
  EXPECT_EQ(robustness(m, d, cfg, rng), clean_accuracy(m, d));
}

TEST(Robustness, NeverAboveAccuracyOnTheseNets) {
  const Dataset d = gen_crescent(200, 0.1, 2);
  Rng rng(1);
  for (int s = 0; s < 10; ++s) {
    const MLPModel m = init_model(std::vector<std::size_t>{2, 8, 2}, 10 + s);
    const AttackConfig cfg{AttackKind::pgd, 0.1, 0.1, 10, true, std::nullopt};
    EXPECT_LE(robustness(m, d, cfg, rng), clean_accuracy(m, d));
  }
}

TEST(PrevTaskRate, FirstTaskIsZero) {
  const MLPModel m = identity_model(4);
  Task t{0, make_dataset(one_hot_rows({0, 1}, 4), {0, 1}), {0, 1}};
  const Dataset ae = make_dataset(one_hot_rows({1, 0, 1}, 4), {0, 1, 0});
  const std::vector<std::vector<int>> seen{{0, 1}};
  EXPECT_EQ(prev_task_rate(m, t, ae, seen), 0.0);
}

TEST(PrevTaskRate, HandBuiltHalf) {
  const MLPModel m = identity_model(4);
  Task t{1, make_dataset(one_hot_rows({2, 3}, 4), {2, 3}), {2, 3}};
  // forced predictions: prev, prev, cur, cur
  const Dataset ae = make_dataset(one_hot_rows({0, 1, 2, 3}, 4), {2, 3, 2, 3});
  const std::vector<std::vector<int>> seen{{0, 1}, {2, 3}};
  EXPECT_EQ(prev_task_rate(m, t, ae, seen), 50.0);
  const Dataset cur_only = make_dataset(one_hot_rows({2, 3, 3}, 4), {2, 3, 2});
  EXPECT_EQ(prev_task_rate(m, t, cur_only, seen), 0.0);
  EXPECT_THROW(prev_task_rate(m, t, Dataset{}, seen), ArgumentError);
}

TEST(Grid, CornersAtResolutionTwo) {
  const auto g = boundary_grid(constant_model(2, 3), {-1, 2}, {0, 5}, 2);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[0].x, -1);
  EXPECT_EQ(g[0].y, 0);
  EXPECT_EQ(g[1].x, 2);
  EXPECT_EQ(g[1].y, 0);
  EXPECT_EQ(g[2].x, -1);
  EXPECT_EQ(g[2].y, 5);
  EXPECT_EQ(g[3].x, 2);
  EXPECT_EQ(g[3].y, 5);
}

TEST(Grid, ConstantModelIsUniform) {
  const auto g = boundary_grid(constant_model(2, 2), {-1, 1}, {-1, 1}, 11);
  EXPECT_EQ(count_class(g, 0), 121u);
}

TEST(Grid, MatchesPointwiseOracle) {
  const MLPModel m = init_model(std::vector<std::size_t>{2, 5, 3}, 12);
  const auto g = boundary_grid(m, {-0.3, 0.7}, {-2, 1}, 17);
  ASSERT_EQ(g.size(), 17u * 17u);
  for (const auto& p : g) {
    const Matrix pt{{p.x, p.y}};
    EXPECT_EQ(predict(m, pt)[0], p.predicted);
  }
  EXPECT_THROW(boundary_grid(m, {0, 1}, {0, 1}, 1), ArgumentError);
  EXPECT_THROW(boundary_grid(init_model(std::vector<std::size_t>{3, 2}, 1), {0, 1}, {0, 1}, 5),
               ArgumentError);
}

TEST(Grid, CsvLayout) {
  const auto g = boundary_grid(constant_model(2, 2), {0, 1}, {0, 1}, 2);
  std::ostringstream s;
  write_grid_csv(s, g);
  EXPECT_EQ(s.str(), "x,y,class\n0,0,0\n1,0,0\n0,1,0\n1,1,0\n");
}
