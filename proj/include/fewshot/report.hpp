#pragma once

// JSON and CSV serialization of evaluation reports.
//
// Field names are stable: mean_accuracy, ci95, runs, seed, ways, shots,
// queries, sampling, k, kappa, alpha. Wall-clock timings are never written,
// so identical inputs give identical bytes.

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>

#include "json.hpp"

#include "fewshot/evaluation.hpp"

namespace fewshot {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCiMethod = "1.96*sample_stddev/sqrt(runs)";

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string sampling_label(const EvalReport& r) {
  return r.q1 ? "imbalanced" : std::string(to_string(r.spec.sampling));
}

inline Json to_json(const EvalReport& r, bool include_runs = false) {
  Json j;
  j["mean_accuracy"] = r.mean_accuracy;
  j["ci95"] = r.ci95;
  j["ci_method"] = kCiMethod;
  j["runs"] = r.runs;
  j["seed"] = r.seed;
  j["ways"] = r.spec.ways;
  j["shots"] = r.spec.shots;
  j["queries"] = r.spec.queries;
  j["sampling"] = sampling_label(r);
  if (r.spec.pool_per_class) {
    j["pool_per_class"] = *r.spec.pool_per_class;
  } else {
    j["pool_per_class"] = "all";
  }
  if (r.q1) j["q1"] = *r.q1;
  j["k"] = r.hyper.propagation.k;
  j["kappa"] = r.hyper.propagation.kappa;
  j["alpha"] = r.hyper.propagation.alpha;
  j["epochs"] = r.hyper.train.epochs;
  j["learning_rate"] = r.hyper.train.learning_rate;
  j["weight_decay"] = r.hyper.train.weight_decay;
  j["mean_epochs_run"] = r.mean_epochs;
  j["episode_fingerprint"] = hex64(r.episode_fingerprint);
  if (include_runs) j["accuracies"] = r.accuracies;
  return j;
}

inline std::string csv_header() {
  return "mean_accuracy,ci95,runs,seed,ways,shots,queries,sampling,"
         "pool_per_class,q1,k,kappa,alpha,epochs,learning_rate,weight_decay,"
         "mean_epochs_run,episode_fingerprint";
}

inline std::string csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << r.mean_accuracy << ',' << r.ci95 << ',' << r.runs << ',' << r.seed
     << ',' << r.spec.ways << ',' << r.spec.shots << ',' << r.spec.queries
     << ',' << sampling_label(r) << ',';
  if (r.spec.pool_per_class) {
    os << *r.spec.pool_per_class;
  } else {
    os << "all";
  }
  os << ',';
  if (r.q1) os << *r.q1;
  os << ',' << r.hyper.propagation.k << ',' << r.hyper.propagation.kappa << ','
     << r.hyper.propagation.alpha << ',' << r.hyper.train.epochs << ','
     << r.hyper.train.learning_rate << ',' << r.hyper.train.weight_decay << ','
     << r.mean_epochs << ',' << hex64(r.episode_fingerprint);
  return os.str();
}

inline std::string reports_csv(std::span<const EvalReport* const> reports) {
  std::string out = csv_header() + "\n";
  for (const auto* r : reports) out += csv_row(*r) + "\n";
  return out;
}

}  // namespace fewshot
