#pragma once

// Episode pipeline and the aggregate evaluation protocol.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fewshot/classifier.hpp"
#include "fewshot/episodes.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/feature_set.hpp"
#include "fewshot/graph.hpp"

namespace fewshot {

struct HyperParams {
  PropagationParams propagation;
  TrainConfig train;

  void validate() const {
    propagation.validate();
    train.validate();
  }

  // Best settings for 1-shot (alpha 0.5, k 10, kappa 3) and for 5-shot
  // (alpha 0.75, k 15, kappa 1). Other shot counts use the 1-shot values.
  static HyperParams defaults_for_shots(std::size_t shots) {
    HyperParams hp;
    if (shots == 5) {
      hp.propagation = {.k = 15, .kappa = 1, .alpha = 0.75};
    } else {
      hp.propagation = {.k = 10, .kappa = 3, .alpha = 0.5};
    }
    return hp;
  }
};

struct StageTimings {
  double graph_seconds = 0.0;
  double propagate_seconds = 0.0;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;

  StageTimings& operator+=(const StageTimings& o) {
    graph_seconds += o.graph_seconds;
    propagate_seconds += o.propagate_seconds;
    train_seconds += o.train_seconds;
    predict_seconds += o.predict_seconds;
    return *this;
  }
};

struct EpisodeResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t queries = 0;
  unsigned epochs_run = 0;
  std::uint64_t fingerprint = 0;
  StageTimings timings;
};

/// Aggregate over `runs` episodes. ci95 = 1.96 * sample_std / sqrt(runs);
/// a single run has ci95 0.
struct EvalReport {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  EpisodeSpec spec;
  HyperParams hyper;
  std::optional<std::size_t> q1;  // set for imbalanced two-way studies
  double mean_epochs = 0.0;
  std::uint64_t episode_fingerprint = 0;
  std::vector<double> accuracies;
  std::vector<std::uint64_t> fingerprints;
  // Wall clock, summed over runs. Not part of serialized reports.
  StageTimings timings;
};

struct AccuracySummary {
  double mean = 0.0;
  double ci95 = 0.0;
};

inline AccuracySummary summarize_accuracies(std::span<const double> acc) {
  if (acc.empty()) throw ValidationError("no accuracies to summarize");
  const auto n = static_cast<double>(acc.size());
  double sum = 0.0;
  for (double a : acc) sum += a;
  const double mean = sum / n;
  if (acc.size() == 1) return {mean, 0.0};
  double sq = 0.0;
  for (double a : acc) sq += (a - mean) * (a - mean);
  const double stddev = std::sqrt(sq / (n - 1.0));
  return {mean, 1.96 * stddev / std::sqrt(n)};
}

/// Folds per-run results in run-index order.
inline EvalReport aggregate(std::span<const EpisodeResult> results) {
  EvalReport report;
  report.runs = results.size();
  report.accuracies.reserve(results.size());
  report.fingerprints.reserve(results.size());
  double epochs = 0.0;
  std::uint64_t fp = mix64(results.size());
  for (const auto& r : results) {
    report.accuracies.push_back(r.accuracy);
    report.fingerprints.push_back(r.fingerprint);
    epochs += r.epochs_run;
    fp = mix64(fp ^ r.fingerprint);
    report.timings += r.timings;
  }
  const auto s = summarize_accuracies(report.accuracies);
  report.mean_accuracy = s.mean;
  report.ci95 = s.ci95;
  report.mean_epochs = epochs / static_cast<double>(results.size());
  report.episode_fingerprint = fp;
  return report;
}

/// Graph over support+query (support first), propagate, train on the
/// propagated support rows, predict the propagated query rows.
inline EpisodeResult run_episode(const Episode& ep, const HyperParams& hp) {
  hp.validate();
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  const Eigen::Index n_support = ep.support_features.rows();
  const Eigen::Index n_query = ep.query_features.rows();
  if (n_query == 0) throw ValidationError("episode has no queries");

  EpisodeResult result;
  Eigen::MatrixXd v(n_support + n_query, ep.support_features.cols());
  v << ep.support_features, ep.query_features;

  auto t0 = clock::now();
  const EpisodeGraph graph = build_episode_graph(v, hp.propagation);
  result.timings.graph_seconds = seconds_since(t0);

  t0 = clock::now();
  const Eigen::MatrixXd diffused = propagate(v, graph.adjacency, hp.propagation);
  result.timings.propagate_seconds = seconds_since(t0);

  t0 = clock::now();
  const TrainResult trained = train_logistic(
      diffused.topRows(n_support), ep.support_labels, ep.ways(), hp.train);
  result.timings.train_seconds = seconds_since(t0);

  t0 = clock::now();
  const Predictions pred = predict(diffused.bottomRows(n_query), trained.weights);
  result.timings.predict_seconds = seconds_since(t0);

  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    if (pred.labels[i] == ep.query_truth[i]) ++result.correct;
  }
  result.queries = static_cast<std::size_t>(n_query);
  result.accuracy =
      static_cast<double>(result.correct) / static_cast<double>(result.queries);
  result.epochs_run = trained.epochs_run;
  result.fingerprint = ep.fingerprint();
  return result;
}

namespace detail {

[[noreturn]] inline void rethrow_with_run(std::exception_ptr err,
                                          std::size_t run) {
  const std::string prefix = "run " + std::to_string(run) + ": ";
  try {
    std::rethrow_exception(err);
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(prefix + e.what(), e.residual());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace detail

/// Computes fn(0..count-1) on `workers` threads. Output order is by index,
/// so results never depend on scheduling. The failure with the lowest index
/// is rethrown, tagged with that index.
template <typename Fn>
auto parallel_map(std::size_t count, std::size_t workers, Fn fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using T = decltype(fn(std::size_t{}));
  std::vector<T> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) detail::rethrow_with_run(errors[i], i);
  }
  return out;
}

struct EvalOptions {
  std::size_t runs = 500;
  std::uint64_t seed = 42;
  std::size_t workers = 1;
};

inline EvalReport evaluate(const FeatureSet& set, const EpisodeSpec& spec,
                           const HyperParams& hp, const EvalOptions& opts) {
  spec.validate();
  hp.validate();
  if (opts.runs < 1) throw ValidationError("runs must be >= 1");
  const auto results = parallel_map(opts.runs, opts.workers, [&](std::size_t r) {
    return run_episode(sample_episode(set, spec, opts.seed, r), hp);
  });
  EvalReport report = aggregate(results);
  report.seed = opts.seed;
  report.spec = spec;
  report.hyper = hp;
  return report;
}

struct SweepGrid {
  std::vector<std::size_t> ks;
  std::vector<unsigned> kappas;
  std::vector<double> alphas;

  // Cartesian product, k outermost, alpha innermost.
  std::vector<PropagationParams> points() const {
    std::vector<PropagationParams> out;
    for (auto k : ks) {
      for (auto kappa : kappas) {
        for (auto alpha : alphas) out.push_back({k, kappa, alpha});
      }
    }
    return out;
  }
};

struct SweepRow {
  HyperParams hyper;
  EvalReport report;
};

/// Every grid point sees the same episodes (paired comparison).
inline std::vector<SweepRow> sweep(const FeatureSet& set, const EpisodeSpec& spec,
                                   const SweepGrid& grid, const TrainConfig& train,
                                   const EvalOptions& opts) {
  spec.validate();
  const auto points = grid.points();
  if (points.empty()) throw ValidationError("sweep grid is empty");
  std::vector<HyperParams> hps;
  for (const auto& p : points) {
    HyperParams hp{p, train};
    hp.validate();
    hps.push_back(hp);
  }
  if (opts.runs < 1) throw ValidationError("runs must be >= 1");

  const auto per_run = parallel_map(opts.runs, opts.workers, [&](std::size_t r) {
    const Episode ep = sample_episode(set, spec, opts.seed, r);
    std::vector<EpisodeResult> row;
    row.reserve(hps.size());
    for (const auto& hp : hps) row.push_back(run_episode(ep, hp));
    return row;
  });

  std::vector<SweepRow> out;
  out.reserve(hps.size());
  std::vector<EpisodeResult> column(opts.runs);
  for (std::size_t g = 0; g < hps.size(); ++g) {
    for (std::size_t r = 0; r < opts.runs; ++r) column[r] = per_run[r][g];
    EvalReport report = aggregate(column);
    report.seed = opts.seed;
    report.spec = spec;
    report.hyper = hps[g];
    out.push_back({hps[g], std::move(report)});
  }
  return out;
}

struct ImbalanceRow {
  std::size_t q1 = 0;
  EvalReport report;
};

/// One report per q1; accuracy is over all `total` queries of each episode.
inline std::vector<ImbalanceRow> evaluate_imbalance(
    const FeatureSet& set, std::span<const std::size_t> q1_values,
    std::size_t total, std::size_t shots, const HyperParams& hp,
    const EvalOptions& opts) {
  hp.validate();
  if (q1_values.empty()) throw ValidationError("no q1 values given");
  if (opts.runs < 1) throw ValidationError("runs must be >= 1");
  for (auto q1 : q1_values) {
    if (q1 < 1 || q1 + 1 > total) {
      throw ValidationError("q1 must lie in [1, total - 1], got " +
                            std::to_string(q1));
    }
  }
  std::vector<ImbalanceRow> out;
  for (auto q1 : q1_values) {
    const auto results =
        parallel_map(opts.runs, opts.workers, [&](std::size_t r) {
          return run_episode(
              sample_imbalanced_two_way(set, q1, total, shots, opts.seed, r), hp);
        });
    EvalReport report = aggregate(results);
    report.seed = opts.seed;
    report.spec = EpisodeSpec{.ways = 2,
                              .shots = shots,
                              .queries = total,
                              .sampling = Sampling::balanced,
                              .pool_per_class = std::nullopt};
    report.hyper = hp;
    report.q1 = q1;
    out.push_back({q1, std::move(report)});
  }
  return out;
}

}  // namespace fewshot
