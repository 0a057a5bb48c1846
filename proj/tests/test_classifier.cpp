#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fewshot/classifier.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fewshot;
using testutil::to_eigen;

namespace {

void expect_monotone(const std::vector<double>& losses) {
  for (std::size_t t = 1; t < losses.size(); ++t) {
    EXPECT_LE(losses[t] - losses[t - 1], 1e-6) << "epoch " << t;
  }
}

}  // namespace

TEST(LogisticGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0), w(-0.5, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 4 + trial, h = 3 + trial % 3, k = 2 + trial % 4;
    oracle::Mat v = oracle::zeros(n, h), wm = oracle::zeros(h, k);
    for (auto& row : v) for (auto& x : row) x = u(rng);
    for (auto& row : wm) for (auto& x : row) x = w(rng);
    std::vector<std::uint32_t> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::uint32_t>(i % k);
    const double wd = trial % 2 ? 5e-6 : 0.1;

    const auto fd = oracle::finite_difference_gradient(v, y, wm, wd, 1e-5);
    const auto g = logistic_gradient(to_eigen(v), y, to_eigen(wm), wd);
    const double scale = std::max(1.0, to_eigen(fd).cwiseAbs().maxCoeff());
    EXPECT_LE((g - to_eigen(fd)).cwiseAbs().maxCoeff() / scale, 1e-6);
    EXPECT_NEAR(logistic_loss(to_eigen(v), y, to_eigen(wm), wd),
                oracle::logistic_loss(v, y, wm, wd), 1e-12);
  }
}

TEST(TrainLogistic, SeparablePair) {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, 0, 1;
  const std::vector<std::uint32_t> y{0, 1};
  const auto r = train_logistic(v, y, 2, TrainConfig{});
  EXPECT_EQ(predict(v, r.weights).labels, y);
  expect_monotone(r.loss_history);
  EXPECT_EQ(r.epochs_run, 1000u);
}

TEST(TrainLogistic, IndistinguishableInputsGiveUniformOutput) {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Constant(6, 4, 0.7);
  const std::vector<std::uint32_t> y{0, 1, 2, 0, 1, 2};
  const auto r = train_logistic(v, y, 3, TrainConfig{});
  const auto p = predict(v, r.weights);
  EXPECT_LE((p.probabilities.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-3);
}

TEST(TrainLogistic, DeterministicAndMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t ways = 2 + trial % 4, shots = 1 + trial % 5;
    Eigen::MatrixXd v(ways * shots, 16);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng);
    std::vector<std::uint32_t> y;
    for (std::size_t c = 0; c < ways; ++c)
      for (std::size_t s = 0; s < shots; ++s) y.push_back(static_cast<std::uint32_t>(c));
    const auto a = train_logistic(v, y, ways, TrainConfig{});
    const auto b = train_logistic(v, y, ways, TrainConfig{});
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.loss_history, b.loss_history);
    expect_monotone(a.loss_history);
    EXPECT_LT(a.loss_history.back(), a.loss_history.front());
  }
}

TEST(TrainLogistic, Errors) {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Ones(3, 2);
  EXPECT_THROW(train_logistic(v, std::vector<std::uint32_t>{0, 0, 0}, 2, {}),
               ValidationError);
  EXPECT_THROW(train_logistic(v, std::vector<std::uint32_t>{0, 1, 2}, 2, {}),
               ValidationError);
  EXPECT_THROW(train_logistic(v, std::vector<std::uint32_t>{0, 1}, 2, {}),
               ValidationError);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train_logistic(v, std::vector<std::uint32_t>{0, 1, 1}, 2, bad),
               ValidationError);
  Eigen::MatrixXd huge = v * 1e308;
  TrainConfig fast;
  fast.learning_rate = 1e300;
  try {
    train_logistic(huge, std::vector<std::uint32_t>{0, 1, 1}, 2, fast);
    FAIL() << "non-finite loss not reported";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Predict, ZeroWeightsAreUniformAndPickClassZero) {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Random(5, 3).cwiseAbs();
  const auto p = predict(v, Eigen::MatrixXd::Zero(3, 4));
  for (auto l : p.labels) EXPECT_EQ(l, 0u);
  EXPECT_LE((p.probabilities.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Predict, AlignedRows) {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(4, 4);
  for (std::uint32_t j = 0; j < 4; ++j) {
    const Eigen::MatrixXd v = Eigen::RowVectorXd::Unit(4, j);
    const auto p = predict(v, w);
    EXPECT_EQ(p.labels[0], j);
    EXPECT_GT(p.probabilities(0, j), 0.25);
  }
}

TEST(Predict, ShapeMismatch) {
  EXPECT_THROW(predict(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(4, 2)),
               ValidationError);
}

TEST(Softmax, ShiftInvarianceAndNormalization) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd scores(6, 5);
    for (Eigen::Index i = 0; i < scores.size(); ++i) scores.data()[i] = g(rng);
    const auto p = softmax_rows(scores);
    EXPECT_LE((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_LE(p.maxCoeff(), 1.0);
    const double c = g(rng);
    EXPECT_LE((softmax_rows(scores.array() + c) - p).cwiseAbs().maxCoeff(), 1e-12);
    // Per-row offsets, same across classes.
    Eigen::MatrixXd shifted = scores;
    for (Eigen::Index i = 0; i < 6; ++i) shifted.row(i).array() += g(rng);
    EXPECT_LE((softmax_rows(shifted) - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Predict, ScoreShiftLeavesPredictionsUnchanged) {
  // A constant added to every class score of a row is the same as an extra
  // feature column whose weight row is constant.
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd v(7, 3), w(3, 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng) - 0.5;
  Eigen::MatrixXd v_aug(7, 4), w_aug(4, 4);
  v_aug << v, Eigen::VectorXd::Ones(7);
  w_aug << w, Eigen::RowVectorXd::Constant(4, 2.5);
  const auto a = predict(v, w), b = predict(v_aug, w_aug);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_LE((a.probabilities - b.probabilities).cwiseAbs().maxCoeff(), 1e-12);
}
