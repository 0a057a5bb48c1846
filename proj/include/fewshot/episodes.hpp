#pragma once

// Few-shot episode sampling: balanced, uniform-pool and two-way imbalanced.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fewshot/errors.hpp"
#include "fewshot/feature_set.hpp"
#include "fewshot/random.hpp"

namespace fewshot {

enum class Sampling { balanced, uniform };

inline std::string_view to_string(Sampling s) {
  return s == Sampling::balanced ? "balanced" : "uniform";
}

struct EpisodeSpec {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 75;
  Sampling sampling = Sampling::uniform;
  // Uniform mode only. Unset means every remaining row, truncated to the
  // smallest chosen class so all pools have equal size.
  std::optional<std::size_t> pool_per_class;

  void validate() const {
    if (ways < 2) throw ValidationError("ways must be >= 2");
    if (shots < 1) throw ValidationError("shots must be >= 1");
    if (queries < 1) throw ValidationError("queries must be >= 1");
    if (sampling == Sampling::balanced && queries % ways != 0) {
      throw ValidationError("balanced sampling needs queries (" +
                            std::to_string(queries) +
                            ") divisible by ways (" + std::to_string(ways) +
                            ")");
    }
    if (pool_per_class && *pool_per_class < 1) {
      throw ValidationError("pool_per_class must be >= 1");
    }
  }
};

/// One task. Support rows come grouped by class; labels are episode-local,
/// class_map[local] gives the source class.
struct Episode {
  Eigen::MatrixXd support_features;
  std::vector<std::uint32_t> support_labels;
  Eigen::MatrixXd query_features;
  std::vector<std::uint32_t> query_truth;
  std::vector<Label> class_map;
  std::vector<std::size_t> support_rows;
  std::vector<std::size_t> query_rows;

  std::size_t ways() const noexcept { return class_map.size(); }

  // Hash of the drawn classes and source rows, for pairing checks.
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = mix64(class_map.size());
    auto absorb = [&h](std::uint64_t x) { h = mix64(h ^ mix64(x)); };
    for (auto c : class_map) absorb(c);
    for (auto r : support_rows) absorb(r);
    absorb(0xFFFFFFFFFFFFFFFFULL);
    for (auto r : query_rows) absorb(r);
    return h;
  }
};

namespace detail {

inline std::vector<Label> draw_classes(const FeatureSet& set, std::size_t ways,
                                       CounterStream& rng) {
  if (set.class_count() < ways) {
    throw ValidationError("feature set has " +
                          std::to_string(set.class_count()) +
                          " classes, episode needs " + std::to_string(ways));
  }
  std::vector<Label> all(set.class_count());
  std::iota(all.begin(), all.end(), Label{0});
  return draw_without_replacement(std::move(all), ways, rng);
}

inline void require_rows(const FeatureSet& set, Label cls, std::size_t needed,
                         std::string_view what) {
  const std::size_t have = set.rows_of(cls).size();
  if (have < needed) {
    throw ValidationError("insufficient rows in class " + std::to_string(cls) +
                          ": has " + std::to_string(have) + ", needs " +
                          std::to_string(needed) + " (" + std::string(what) +
                          ")");
  }
}

inline Eigen::MatrixXd gather(const FeatureSet& set,
                              const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(set.dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        set.features().row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  }
  return out;
}

inline Episode assemble(const FeatureSet& set, std::vector<Label> classes,
                        std::vector<std::size_t> support_rows,
                        std::vector<std::uint32_t> support_labels,
                        std::vector<std::size_t> query_rows,
                        std::vector<std::uint32_t> query_truth) {
  Episode ep;
  ep.support_features = gather(set, support_rows);
  ep.query_features = gather(set, query_rows);
  ep.support_labels = std::move(support_labels);
  ep.query_truth = std::move(query_truth);
  ep.class_map = std::move(classes);
  ep.support_rows = std::move(support_rows);
  ep.query_rows = std::move(query_rows);
  return ep;
}

// Draws classes, then per class `shots` supports followed by counts[c]
// queries. Balanced and imbalanced episodes share this path.
inline Episode sample_with_counts(const FeatureSet& set, std::size_t shots,
                                  const std::vector<std::size_t>& counts,
                                  CounterStream& rng) {
  auto classes = draw_classes(set, counts.size(), rng);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    require_rows(set, classes[c], shots + counts[c], "supports + queries");
  }
  std::vector<std::size_t> support_rows, query_rows;
  std::vector<std::uint32_t> support_labels, query_truth;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto drawn =
        draw_without_replacement(set.rows_of(classes[c]), shots + counts[c], rng);
    for (std::size_t i = 0; i < drawn.size(); ++i) {
      if (i < shots) {
        support_rows.push_back(drawn[i]);
        support_labels.push_back(static_cast<std::uint32_t>(c));
      } else {
        query_rows.push_back(drawn[i]);
        query_truth.push_back(static_cast<std::uint32_t>(c));
      }
    }
  }
  return assemble(set, std::move(classes), std::move(support_rows),
                  std::move(support_labels), std::move(query_rows),
                  std::move(query_truth));
}

inline Episode sample_uniform(const FeatureSet& set, const EpisodeSpec& spec,
                              CounterStream& rng) {
  auto classes = draw_classes(set, spec.ways, rng);
  for (auto cls : classes) require_rows(set, cls, spec.shots + 1, "supports + pool");

  std::size_t pool = std::numeric_limits<std::size_t>::max();
  Label limiting = classes.front();
  for (auto cls : classes) {
    const std::size_t available = set.rows_of(cls).size() - spec.shots;
    if (available < pool) {
      pool = available;
      limiting = cls;
    }
  }
  if (spec.pool_per_class) pool = std::min(pool, *spec.pool_per_class);
  if (pool * spec.ways < spec.queries) {
    throw ValidationError(
        "insufficient rows: pool of " + std::to_string(pool) +
        " per class (limited by class " + std::to_string(limiting) +
        ") cannot supply " + std::to_string(spec.queries) + " queries");
  }

  std::vector<std::size_t> support_rows;
  std::vector<std::uint32_t> support_labels;
  std::vector<std::pair<std::size_t, std::uint32_t>> merged;
  merged.reserve(pool * spec.ways);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto drawn = draw_without_replacement(set.rows_of(classes[c]),
                                                spec.shots + pool, rng);
    for (std::size_t i = 0; i < drawn.size(); ++i) {
      if (i < spec.shots) {
        support_rows.push_back(drawn[i]);
        support_labels.push_back(static_cast<std::uint32_t>(c));
      } else {
        merged.emplace_back(drawn[i], static_cast<std::uint32_t>(c));
      }
    }
  }
  const auto picked = draw_without_replacement(std::move(merged), spec.queries, rng);
  std::vector<std::size_t> query_rows;
  std::vector<std::uint32_t> query_truth;
  for (const auto& [row, label] : picked) {
    query_rows.push_back(row);
    query_truth.push_back(label);
  }
  return assemble(set, std::move(classes), std::move(support_rows),
                  std::move(support_labels), std::move(query_rows),
                  std::move(query_truth));
}

}  // namespace detail

/// Episode number `run_index` of the stream keyed by `seed`.
///
/// A pure function of its arguments: any run can be regenerated alone and
/// in any order.
inline Episode sample_episode(const FeatureSet& set, const EpisodeSpec& spec,
                              std::uint64_t seed, std::uint64_t run_index) {
  spec.validate();
  CounterStream rng(seed, run_index);
  if (spec.sampling == Sampling::balanced) {
    const std::vector<std::size_t> counts(spec.ways, spec.queries / spec.ways);
    return detail::sample_with_counts(set, spec.shots, counts, rng);
  }
  return detail::sample_uniform(set, spec, rng);
}

/// Two-way episode with q1 queries from the first drawn class and
/// total - q1 from the second.
inline Episode sample_imbalanced_two_way(const FeatureSet& set, std::size_t q1,
                                         std::size_t total, std::size_t shots,
                                         std::uint64_t seed,
                                         std::uint64_t run_index) {
  if (total < 2) throw ValidationError("total queries must be >= 2");
  if (q1 < 1 || q1 > total - 1) {
    throw ValidationError("q1 must lie in [1, " + std::to_string(total - 1) +
                          "], got " + std::to_string(q1));
  }
  if (shots < 1) throw ValidationError("shots must be >= 1");
  CounterStream rng(seed, run_index);
  return detail::sample_with_counts(set, shots, {q1, total - q1}, rng);
}

}  // namespace fewshot
