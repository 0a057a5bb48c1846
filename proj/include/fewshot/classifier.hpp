#pragma once

// Multinomial logistic regression without bias, trained full-batch with Adam.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fewshot/errors.hpp"

namespace fewshot {

struct TrainConfig {
  unsigned epochs = 1000;
  double learning_rate = 1e-3;
  double weight_decay = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Training stops early once the gradient norm falls below this.
  double gradient_tolerance = 1e-8;

  void validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) {
      throw ValidationError("learning_rate must be positive");
    }
    if (!(weight_decay >= 0.0)) {
      throw ValidationError("weight_decay must be nonnegative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ValidationError("adam decay rates must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  }
};

// h x ways weight matrix.
using ClassifierWeights = Eigen::MatrixXd;

struct TrainResult {
  ClassifierWeights weights;
  // loss_history[t] is the objective at the weights entering epoch t, plus
  // one final entry for the returned weights.
  std::vector<double> loss_history;
  unsigned epochs_run = 0;
};

struct Predictions {
  std::vector<std::uint32_t> labels;
  Eigen::MatrixXd probabilities;
};

// Row-wise softmax with max subtraction.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd p =
      (scores.colwise() - scores.rowwise().maxCoeff()).array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

namespace detail {

inline void check_labels(std::span<const std::uint32_t> labels,
                         Eigen::Index rows, std::size_t ways) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ValidationError("one label per labeled row required");
  }
  std::vector<bool> present(ways, false);
  for (auto l : labels) {
    if (l >= ways) {
      throw ValidationError("label " + std::to_string(l) + " >= ways " +
                            std::to_string(ways));
    }
    present[l] = true;
  }
  for (std::size_t c = 0; c < ways; ++c) {
    if (!present[c]) {
      throw ValidationError("class " + std::to_string(c) +
                            " absent from training labels");
    }
  }
}

inline Eigen::MatrixXd one_hot(std::span<const std::uint32_t> labels,
                               std::size_t ways) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(ways));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// Mean cross-entropy from raw scores via log-sum-exp.
inline double mean_cross_entropy(const Eigen::MatrixXd& scores,
                                 std::span<const std::uint32_t> labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    const double lse = mx + std::log((scores.row(i).array() - mx).exp().sum());
    total += lse - scores(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(scores.rows());
}

}  // namespace detail

/// Mean cross-entropy of softmax(V W) plus weight_decay * ||W||^2 / 2.
inline double logistic_loss(const Eigen::MatrixXd& v,
                            std::span<const std::uint32_t> labels,
                            const ClassifierWeights& w, double weight_decay) {
  return detail::mean_cross_entropy(v * w, labels) +
         0.5 * weight_decay * w.squaredNorm();
}

/// Gradient of logistic_loss with respect to W: V^T (P - Y) / n + wd W.
inline Eigen::MatrixXd logistic_gradient(const Eigen::MatrixXd& v,
                                         std::span<const std::uint32_t> labels,
                                         const ClassifierWeights& w,
                                         double weight_decay) {
  const auto n = static_cast<double>(v.rows());
  const Eigen::MatrixXd residual =
      softmax_rows(v * w) -
      detail::one_hot(labels, static_cast<std::size_t>(w.cols()));
  Eigen::MatrixXd g = v.transpose() * residual / n;
  g += weight_decay * w;
  return g;
}

/// Fits W from zero initialization; deterministic for identical inputs.
inline TrainResult train_logistic(const Eigen::MatrixXd& v,
                                  std::span<const std::uint32_t> labels,
                                  std::size_t ways, const TrainConfig& config) {
  config.validate();
  if (ways < 1) throw ValidationError("ways must be >= 1");
  if (v.rows() < static_cast<Eigen::Index>(ways)) {
    throw ValidationError("need at least one labeled row per class");
  }
  detail::check_labels(labels, v.rows(), ways);
  if (!v.allFinite()) throw ValidationError("non-finite training feature");

  const Eigen::Index h = v.cols();
  const auto k = static_cast<Eigen::Index>(ways);
  const auto n = static_cast<double>(v.rows());
  const Eigen::MatrixXd y = detail::one_hot(labels, ways);

  TrainResult out;
  out.weights = Eigen::MatrixXd::Zero(h, k);
  out.loss_history.reserve(config.epochs + 1);
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(h, k);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(h, k);
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  auto& w = out.weights;

  auto record_loss = [&](const Eigen::MatrixXd& scores, unsigned epoch) {
    const double loss = detail::mean_cross_entropy(scores, labels) +
                        0.5 * config.weight_decay * w.squaredNorm();
    if (!std::isfinite(loss)) {
      throw ValidationError("non-finite training loss at epoch " +
                            std::to_string(epoch));
    }
    out.loss_history.push_back(loss);
  };

  for (unsigned epoch = 0; epoch < config.epochs; ++epoch) {
    const Eigen::MatrixXd scores = v * w;
    record_loss(scores, epoch);
    Eigen::MatrixXd g = v.transpose() * (softmax_rows(scores) - y) / n;
    g += config.weight_decay * w;
    if (g.norm() < config.gradient_tolerance) {
      out.epochs_run = epoch;
      return out;
    }
    beta1_pow *= config.beta1;
    beta2_pow *= config.beta2;
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXXd m_hat = m1.array() / (1.0 - beta1_pow);
    const Eigen::ArrayXXd v_hat = m2.array() / (1.0 - beta2_pow);
    w.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
  }
  out.epochs_run = config.epochs;
  record_loss(v * w, config.epochs);
  return out;
}

/// Argmax of V W per row, ties to the smaller class index.
inline Predictions predict(const Eigen::MatrixXd& v, const ClassifierWeights& w) {
  if (v.cols() != w.rows()) {
    throw ValidationError("predict: feature dim " + std::to_string(v.cols()) +
                          " does not match weight rows " +
                          std::to_string(w.rows()));
  }
  const Eigen::MatrixXd scores = v * w;
  Predictions out;
  out.probabilities = softmax_rows(scores);
  out.labels.resize(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

}  // namespace fewshot
