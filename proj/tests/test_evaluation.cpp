#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "fewshot/report.hpp"

using namespace fewshot;

namespace {

const FeatureSet& small_set() {
  static const FeatureSet set = generate_synthetic(
      {.class_count = 8, .per_class = 60, .dim = 16, .noise_sigma = 0.3, .seed = 11});
  return set;
}

HyperParams quick(std::size_t k, unsigned kappa, double alpha) {
  HyperParams hp;
  hp.propagation = {k, kappa, alpha};
  hp.train.epochs = 100;
  return hp;
}

}  // namespace

TEST(Summary, KnownValues) {
  const std::vector<double> acc{0.8, 0.9, 1.0};
  const auto s = summarize_accuracies(acc);
  EXPECT_NEAR(s.mean, 0.9, 1e-12);
  EXPECT_NEAR(s.ci95, 1.96 * 0.1 / std::sqrt(3.0), 1e-12);
  const std::vector<double> one{0.42};
  EXPECT_EQ(summarize_accuracies(one).ci95, 0.0);
  EXPECT_EQ(summarize_accuracies(one).mean, 0.42);
  EXPECT_THROW(summarize_accuracies(std::span<const double>{}), ValidationError);
}

TEST(Aggregate, UsesRunOrderAndFingerprints) {
  std::vector<EpisodeResult> results(3);
  const double acc[] = {0.8, 0.9, 1.0};
  for (std::size_t i = 0; i < 3; ++i) {
    results[i].accuracy = acc[i];
    results[i].fingerprint = 100 + i;
    results[i].epochs_run = 10 * static_cast<unsigned>(i + 1);
  }
  const auto r = aggregate(results);
  EXPECT_EQ(r.runs, 3u);
  EXPECT_NEAR(r.mean_accuracy, 0.9, 1e-12);
  EXPECT_NEAR(r.mean_epochs, 20.0, 1e-12);
  EXPECT_EQ(r.fingerprints, (std::vector<std::uint64_t>{100, 101, 102}));
  std::swap(results[0], results[2]);
  EXPECT_NE(aggregate(results).episode_fingerprint, r.episode_fingerprint);
}

TEST(RunEpisode, TightClustersWithoutPropagationArePerfect) {
  const FeatureSet set = generate_synthetic(
      {.class_count = 6, .per_class = 40, .dim = 16, .noise_sigma = 1e-4, .seed = 5});
  const EpisodeSpec spec{.ways = 5, .shots = 1, .queries = 50,
                         .sampling = Sampling::balanced};
  HyperParams hp;
  hp.propagation = {10, 0, 0.5};
  for (std::uint64_t r = 0; r < 5; ++r) {
    const Episode ep = sample_episode(set, spec, 1, r);
    const auto a = run_episode(ep, hp);
    EXPECT_EQ(a.accuracy, 1.0);
    EXPECT_EQ(a.correct, 50u);
    const auto b = run_episode(ep, hp);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.fingerprint, b.fingerprint);
  }
}

TEST(Evaluate, ReproducibleAcrossWorkerCounts) {
  const EpisodeSpec spec{.ways = 4, .shots = 1, .queries = 20};
  const HyperParams hp = quick(6, 2, 0.5);
  const auto a = evaluate(small_set(), spec, hp, {.runs = 24, .seed = 3, .workers = 1});
  const auto b = evaluate(small_set(), spec, hp, {.runs = 24, .seed = 3, .workers = 8});
  EXPECT_EQ(a.accuracies, b.accuracies);
  EXPECT_EQ(to_json(a, true).dump(), to_json(b, true).dump());
  EXPECT_EQ(csv_row(a), csv_row(b));
  const auto c = evaluate(small_set(), spec, hp, {.runs = 24, .seed = 4, .workers = 1});
  EXPECT_NE(a.episode_fingerprint, c.episode_fingerprint);
}

TEST(Evaluate, RejectsBadInputs) {
  const EpisodeSpec spec{.ways = 4, .shots = 1, .queries = 20};
  EXPECT_THROW(evaluate(small_set(), spec, quick(6, 2, 0.5), {.runs = 0}),
               ValidationError);
  EXPECT_THROW(evaluate(small_set(), spec, quick(0, 2, 0.5), {.runs = 1}),
               ValidationError);
  EXPECT_THROW(evaluate(small_set(), spec, quick(6, 2, 1.5), {.runs = 1}),
               ValidationError);
  EXPECT_THROW(evaluate(small_set(), EpisodeSpec{.ways = 9}, quick(6, 2, 0.5),
                        {.runs = 1}),
               ValidationError);
}

TEST(Sweep, PointsMatchStandaloneEvaluation) {
  const EpisodeSpec spec{.ways = 3, .shots = 1, .queries = 15,
                         .sampling = Sampling::balanced};
  TrainConfig train;
  train.epochs = 50;
  const SweepGrid grid{{4, 8}, {1, 2}, {0.0, 1.0}};
  const EvalOptions opts{.runs = 6, .seed = 9, .workers = 2};
  const auto rows = sweep(small_set(), spec, grid, train, opts);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[1].hyper.propagation.alpha, 1.0);
  EXPECT_EQ(rows[2].hyper.propagation.kappa, 2u);
  EXPECT_EQ(rows[4].hyper.propagation.k, 8u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.report.fingerprints, rows[0].report.fingerprints);
    const auto alone = evaluate(small_set(), spec, row.hyper, opts);
    EXPECT_EQ(alone.accuracies, row.report.accuracies);
    EXPECT_EQ(to_json(alone).dump(), to_json(row.report).dump());
  }
  EXPECT_THROW(sweep(small_set(), spec, SweepGrid{{}, {1}, {0.5}}, train, opts),
               ValidationError);
}

TEST(Imbalance, DeterministicAndLabelled) {
  const std::vector<std::size_t> q1s{1, 5, 10};
  const HyperParams hp = quick(8, 1, 0.5);
  const EvalOptions opts{.runs = 5, .seed = 2, .workers = 1};
  const auto a = evaluate_imbalance(small_set(), q1s, 20, 1, hp, opts);
  const auto b = evaluate_imbalance(small_set(), q1s, 20, 1, hp,
                                    {.runs = 5, .seed = 2, .workers = 4});
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].q1, q1s[i]);
    EXPECT_EQ(a[i].report.accuracies, b[i].report.accuracies);
    const auto j = to_json(a[i].report);
    EXPECT_EQ(j["sampling"], "imbalanced");
    EXPECT_EQ(j["q1"], q1s[i]);
    EXPECT_EQ(j["ways"], 2);
    EXPECT_EQ(j["queries"], 20);
  }
  const std::vector<std::size_t> bad{20};
  EXPECT_THROW(evaluate_imbalance(small_set(), bad, 20, 1, hp, opts), ValidationError);
}

TEST(ParallelMap, OrderedResultsAndLowestFailingRun) {
  const auto squares =
      parallel_map(50, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(squares[i], static_cast<int>(i * i));

  auto failing = [](std::size_t i) -> int {
    if (i == 7 || i == 30) throw ValidationError("boom " + std::to_string(i));
    return 0;
  };
  for (std::size_t workers : {1u, 3u, 8u}) {
    try {
      parallel_map(40, workers, failing);
      FAIL();
    } catch (const ValidationError& e) {
      EXPECT_EQ(std::string(e.what()), "run 7: boom 7");
    }
  }
  try {
    parallel_map(3, 2, [](std::size_t) -> int { throw ConvergenceError("slow", 0.5); });
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(std::string(e.what()), "run 0: slow");
    EXPECT_EQ(e.residual(), 0.5);
  }
}

TEST(Report, JsonFieldsAndCsvShape) {
  const EpisodeSpec spec{.ways = 3, .shots = 2, .queries = 12,
                         .sampling = Sampling::uniform, .pool_per_class = 10};
  const auto r = evaluate(small_set(), spec, quick(5, 1, 0.25), {.runs = 2, .seed = 1});
  const auto j = to_json(r);
  for (const char* key : {"mean_accuracy", "ci95", "runs", "seed", "ways", "shots",
                          "queries", "sampling", "k", "kappa", "alpha"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["pool_per_class"], 10);
  EXPECT_EQ(j["sampling"], "uniform");
  EXPECT_FALSE(j.contains("accuracies"));
  EXPECT_EQ(to_json(r, true)["accuracies"].size(), 2u);
  EXPECT_FALSE(j.contains("q1"));

  auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(commas(csv_header()), commas(csv_row(r)));
}

TEST(HyperParams, ShotDependentDefaults) {
  const auto one = HyperParams::defaults_for_shots(1);
  EXPECT_EQ(one.propagation.k, 10u);
  EXPECT_EQ(one.propagation.kappa, 3u);
  EXPECT_EQ(one.propagation.alpha, 0.5);
  const auto five = HyperParams::defaults_for_shots(5);
  EXPECT_EQ(five.propagation.k, 15u);
  EXPECT_EQ(five.propagation.kappa, 1u);
  EXPECT_EQ(five.propagation.alpha, 0.75);
  EXPECT_EQ(five.train.epochs, 1000u);
  EXPECT_EQ(five.train.learning_rate, 1e-3);
  EXPECT_EQ(five.train.weight_decay, 5e-6);
}
