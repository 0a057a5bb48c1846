#pragma once

// Command-line front end: synth, eval, sweep, imbalance, embed.
//
// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fewshot/fewshot.hpp"

namespace fewshot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

struct EpisodeFlags {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 75;
  std::string sampling = "uniform";
  std::optional<std::size_t> pool_per_class;

  EpisodeSpec spec() const {
    EpisodeSpec s;
    s.ways = ways;
    s.shots = shots;
    s.queries = queries;
    s.sampling = sampling == "balanced" ? Sampling::balanced : Sampling::uniform;
    s.pool_per_class = pool_per_class;
    return s;
  }
};

struct HyperFlags {
  std::optional<std::size_t> k;
  std::optional<unsigned> kappa;
  std::optional<double> alpha;
  unsigned epochs = 1000;
  double learning_rate = 1e-3;
  double weight_decay = 5e-6;

  // Unset graph flags fall back to the shot-dependent defaults.
  HyperParams resolve(std::size_t shots) const {
    HyperParams hp = HyperParams::defaults_for_shots(shots);
    if (k) hp.propagation.k = *k;
    if (kappa) hp.propagation.kappa = *kappa;
    if (alpha) hp.propagation.alpha = *alpha;
    hp.train.epochs = epochs;
    hp.train.learning_rate = learning_rate;
    hp.train.weight_decay = weight_decay;
    return hp;
  }
};

struct RunFlags {
  std::size_t runs = 500;
  std::uint64_t seed = 42;
  std::size_t workers = 1;
  std::string out = "-";
  std::string format = "json";
  bool keep_runs = false;
  bool timings = false;

  EvalOptions options() const { return {runs, seed, workers}; }
};

struct InputFlags {
  std::string path;
  std::string format = "auto";

  FeatureSet load() const {
    if (path.empty()) throw ValidationError("--features is required");
    FileFormat f = format_for_path(path);
    if (format == "binary") f = FileFormat::binary;
    if (format == "csv") f = FileFormat::csv;
    return load_feature_set(path, f);
  }
};

inline void add_input_flags(CLI::App& cmd, InputFlags& in) {
  cmd.add_option("--features", in.path, "Feature file (FSET1 binary or CSV)");
  cmd.add_option("--features-format", in.format,
                 "Feature file format; auto picks CSV for *.csv")
      ->check(CLI::IsMember({"auto", "binary", "csv"}))
      ->capture_default_str();
}

inline void add_episode_flags(CLI::App& cmd, EpisodeFlags& ep) {
  cmd.add_option("--ways", ep.ways, "Classes per episode K_n, K_n >= 2")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20))
      ->capture_default_str();
  cmd.add_option("--shots", ep.shots, "Labeled inputs per class s, s >= 1")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20))
      ->capture_default_str();
  cmd.add_option("--queries", ep.queries,
                 "Total unlabeled inputs Q, Q >= 1 (balanced: K_n divides Q)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 24))
      ->capture_default_str();
  cmd.add_option("--sampling", ep.sampling,
                 "Query draw: uniform (from equal per-class pools) or balanced "
                 "(exactly Q/K_n per class)")
      ->check(CLI::IsMember({"uniform", "balanced"}))
      ->capture_default_str();
  cmd.add_option("--pool-per-class", ep.pool_per_class,
                 "Uniform pool size per class, >= 1 (default: all remaining "
                 "rows, truncated to the smallest class)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 30));
}

inline void add_graph_flags(CLI::App& cmd, HyperFlags& hp) {
  cmd.add_option("--k", hp.k,
                 "Nearest neighbors kept, 1 <= k < s*K_n + Q, larger values "
                 "are clamped (default 10 for s=1, 15 for s=5)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 30));
  cmd.add_option("--kappa", hp.kappa,
                 "Power of the diffusion matrix, kappa in N* (0 disables "
                 "propagation; default 3 for s=1, 1 for s=5)")
      ->check(CLI::Range(0u, 1000u));
  cmd.add_option("--alpha", hp.alpha,
                 "Strength of self-representations, 0 <= alpha <= 1 (default "
                 "0.5 for s=1, 0.75 for s=5)")
      ->check(CLI::Range(0.0, 1.0));
}

inline void add_train_flags(CLI::App& cmd, HyperFlags& hp) {
  cmd.add_option("--epochs", hp.epochs, "Logistic regression epochs, >= 1")
      ->check(CLI::Range(1u, 10000000u))
      ->capture_default_str();
  cmd.add_option("--lr", hp.learning_rate, "Adam learning rate, > 0")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--weight-decay", hp.weight_decay, "L2 weight decay, >= 0")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

inline void add_run_flags(CLI::App& cmd, RunFlags& run, bool formats) {
  cmd.add_option("--runs", run.runs, "Episodes to draw, >= 1")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 30))
      ->capture_default_str();
  cmd.add_option("--seed", run.seed, "Seed of the episode streams")
      ->capture_default_str();
  cmd.add_option("--workers", run.workers,
                 "Worker threads, >= 1 (results do not depend on it)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{4096}))
      ->capture_default_str();
  cmd.add_option("--out", run.out, "Report path, - for stdout")
      ->capture_default_str();
  if (formats) {
    cmd.add_option("--format", run.format, "Report format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
  }
  cmd.add_flag("--keep-runs", run.keep_runs,
               "Include per-run accuracies in JSON reports");
  cmd.add_flag("--timings", run.timings,
               "Print summed per-stage wall-clock timings to stderr");
}

inline void write_output(const std::string& path, const std::string& text,
                         std::ostream& out) {
  if (path == "-" || path.empty()) {
    out << text;
    out.flush();
    return;
  }
  detail::write_file_atomically(path, text);
}

inline Json features_json(const FeatureSet& set) {
  Json j;
  j["name"] = set.name();
  j["rows"] = set.size();
  j["dim"] = set.dim();
  j["classes"] = set.class_count();
  return j;
}

inline void print_timings(const StageTimings& t, std::size_t episodes,
                          std::ostream& err) {
  const double n = static_cast<double>(std::max<std::size_t>(episodes, 1));
  err << "timings per episode (s): graph=" << t.graph_seconds / n
      << " propagate=" << t.propagate_seconds / n
      << " train=" << t.train_seconds / n
      << " predict=" << t.predict_seconds / n << '\n';
}

inline std::string render(const Json& doc, const std::vector<const EvalReport*>& reports,
                          const RunFlags& run) {
  if (run.format == "csv") return reports_csv(reports);
  return doc.dump(2) + "\n";
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) {
      throw ValidationError(std::string(flag) + ": cannot parse '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(std::string(flag) + " is empty");
  return out;
}

/// Runs the CLI on argv-style arguments (args[0] is the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  CLI::App app{
      "Transductive few-shot classification with graph-interpolated "
      "features: cosine k-NN graph, (alpha I + E)^kappa diffusion, "
      "logistic regression.",
      "fewshot"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SyntheticConfig synth_cfg;
  std::string synth_out, synth_format = "auto";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature set");
  synth->add_option("--classes", synth_cfg.class_count, "Class count, >= 2")
      ->capture_default_str();
  synth->add_option("--per-class", synth_cfg.per_class, "Rows per class, >= 2")
      ->capture_default_str();
  synth->add_option("--dim", synth_cfg.dim, "Feature dimension, >= 2")
      ->capture_default_str();
  synth->add_option("--center-scale", synth_cfg.center_scale,
                    "Class centers are uniform in [0, scale], > 0")
      ->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise_sigma,
                    "Within-class Gaussian sigma, > 0")
      ->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "Generator seed")
      ->capture_default_str();
  synth->add_option("--out", synth_out, "Output feature file")->required();
  synth->add_option("--format", synth_format,
                    "Output format; auto picks CSV for *.csv")
      ->check(CLI::IsMember({"auto", "binary", "csv"}))
      ->capture_default_str();

  InputFlags eval_in;
  EpisodeFlags eval_ep;
  HyperFlags eval_hp;
  RunFlags eval_run;
  auto* eval = app.add_subcommand("eval", "Evaluate over random episodes");
  add_input_flags(*eval, eval_in);
  add_episode_flags(*eval, eval_ep);
  add_graph_flags(*eval, eval_hp);
  add_train_flags(*eval, eval_hp);
  add_run_flags(*eval, eval_run, true);

  InputFlags sweep_in;
  EpisodeFlags sweep_ep;
  HyperFlags sweep_hp;
  RunFlags sweep_run;
  std::string sweep_ks = "5,10,15,20", sweep_kappas = "1,2,3,4,5",
              sweep_alphas = "0,0.25,0.5,0.75,1";
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Paired grid over k, kappa and alpha");
  add_input_flags(*sweep_cmd, sweep_in);
  add_episode_flags(*sweep_cmd, sweep_ep);
  add_train_flags(*sweep_cmd, sweep_hp);
  add_run_flags(*sweep_cmd, sweep_run, true);
  sweep_cmd->add_option("--ks", sweep_ks, "Comma list of k, each 1 <= k")
      ->capture_default_str();
  sweep_cmd->add_option("--kappas", sweep_kappas,
                        "Comma list of kappa, each in N* (0 = no propagation)")
      ->capture_default_str();
  sweep_cmd->add_option("--alphas", sweep_alphas,
                        "Comma list of alpha, each 0 <= alpha <= 1")
      ->capture_default_str();

  InputFlags imb_in;
  HyperFlags imb_hp;
  RunFlags imb_run;
  std::string imb_q1 = "1,10,20,30,40,50";
  std::size_t imb_total = 100, imb_shots = 1;
  auto* imb = app.add_subcommand(
      "imbalance", "Two-way episodes with q1 / total-q1 queries per class");
  add_input_flags(*imb, imb_in);
  add_graph_flags(*imb, imb_hp);
  add_train_flags(*imb, imb_hp);
  add_run_flags(*imb, imb_run, true);
  imb->add_option("--q1", imb_q1, "Comma list of q1, each 1 <= q1 <= total-1")
      ->capture_default_str();
  imb->add_option("--total", imb_total, "Total queries per episode, >= 2")
      ->capture_default_str();
  imb->add_option("--shots", imb_shots, "Labeled inputs per class s, s >= 1")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20))
      ->capture_default_str();

  InputFlags emb_in;
  EpisodeFlags emb_ep;
  HyperFlags emb_hp;
  std::uint64_t emb_seed = 42, emb_run_index = 0;
  Eigen::Index emb_dims = 2;
  std::string emb_out = "-";
  auto* embed = app.add_subcommand(
      "embed", "Laplacian embedding of one episode graph, as CSV");
  add_input_flags(*embed, emb_in);
  add_episode_flags(*embed, emb_ep);
  add_graph_flags(*embed, emb_hp);
  embed->add_option("--dims", emb_dims, "Embedding dimensions, >= 1")
      ->check(CLI::Range(Eigen::Index{1}, Eigen::Index{1} << 20))
      ->capture_default_str();
  embed->add_option("--seed", emb_seed, "Seed of the episode stream")
      ->capture_default_str();
  embed->add_option("--run-index", emb_run_index, "Episode index in the stream")
      ->capture_default_str();
  embed->add_option("--out", emb_out, "CSV path, - for stdout")
      ->capture_default_str();

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << " (see --help)\n";
    return kExitValidation;
  }

  try {
    if (*synth) {
      const FileFormat f = synth_format == "auto"  ? format_for_path(synth_out)
                           : synth_format == "csv" ? FileFormat::csv
                                                   : FileFormat::binary;
      const FeatureSet set = generate_synthetic(synth_cfg);
      save_feature_set(set, synth_out, f);
      err << "wrote " << set.size() << " x " << set.dim() << " features ("
          << set.class_count() << " classes) to " << synth_out << '\n';
      return kExitOk;
    }

    if (*eval) {
      const EpisodeSpec spec = eval_ep.spec();
      spec.validate();
      const HyperParams hp = eval_hp.resolve(spec.shots);
      hp.validate();
      const FeatureSet set = eval_in.load();
      const EvalReport report = evaluate(set, spec, hp, eval_run.options());
      Json doc;
      doc["command"] = "eval";
      doc["features"] = features_json(set);
      doc["report"] = to_json(report, eval_run.keep_runs);
      write_output(eval_run.out, render(doc, {&report}, eval_run), out);
      if (eval_run.timings) print_timings(report.timings, report.runs, err);
      return kExitOk;
    }

    if (*sweep_cmd) {
      const EpisodeSpec spec = sweep_ep.spec();
      spec.validate();
      SweepGrid grid{parse_list<std::size_t>(sweep_ks, "--ks"),
                     parse_list<unsigned>(sweep_kappas, "--kappas"),
                     parse_list<double>(sweep_alphas, "--alphas")};
      const TrainConfig train = sweep_hp.resolve(spec.shots).train;
      train.validate();
      for (const auto& p : grid.points()) p.validate();
      const FeatureSet set = sweep_in.load();
      const auto rows = sweep(set, spec, grid, train, sweep_run.options());
      Json doc;
      doc["command"] = "sweep";
      doc["features"] = features_json(set);
      doc["reports"] = Json::array();
      std::vector<const EvalReport*> reports;
      StageTimings total;
      for (const auto& row : rows) {
        doc["reports"].push_back(to_json(row.report, sweep_run.keep_runs));
        reports.push_back(&row.report);
        total += row.report.timings;
      }
      write_output(sweep_run.out, render(doc, reports, sweep_run), out);
      if (sweep_run.timings) {
        print_timings(total, sweep_run.runs * rows.size(), err);
      }
      return kExitOk;
    }

    if (*imb) {
      const auto q1s = parse_list<std::size_t>(imb_q1, "--q1");
      if (imb_total < 2) throw ValidationError("--total must be >= 2");
      for (auto q : q1s) {
        if (q < 1 || q + 1 > imb_total) {
          throw ValidationError("--q1 values must lie in [1, total-1]; got " +
                                std::to_string(q));
        }
      }
      const HyperParams hp = imb_hp.resolve(imb_shots);
      hp.validate();
      const FeatureSet set = imb_in.load();
      const auto rows = evaluate_imbalance(set, q1s, imb_total, imb_shots, hp,
                                           imb_run.options());
      Json doc;
      doc["command"] = "imbalance";
      doc["features"] = features_json(set);
      doc["reports"] = Json::array();
      std::vector<const EvalReport*> reports;
      StageTimings total;
      for (const auto& row : rows) {
        doc["reports"].push_back(to_json(row.report, imb_run.keep_runs));
        reports.push_back(&row.report);
        total += row.report.timings;
      }
      write_output(imb_run.out, render(doc, reports, imb_run), out);
      if (imb_run.timings) print_timings(total, imb_run.runs * rows.size(), err);
      return kExitOk;
    }

    if (*embed) {
      const EpisodeSpec spec = emb_ep.spec();
      spec.validate();
      const HyperParams hp = emb_hp.resolve(spec.shots);
      hp.validate();
      const FeatureSet set = emb_in.load();
      const Episode ep = sample_episode(set, spec, emb_seed, emb_run_index);
      Eigen::MatrixXd v(ep.support_features.rows() + ep.query_features.rows(),
                        ep.support_features.cols());
      v << ep.support_features, ep.query_features;
      const EpisodeGraph graph = build_episode_graph(v, hp.propagation);
      const LaplacianEmbedding emb = laplacian_embedding(graph.adjacency, emb_dims);
      std::vector<std::uint32_t> labels;
      for (auto l : ep.support_labels) labels.push_back(ep.class_map[l]);
      for (auto l : ep.query_truth) labels.push_back(ep.class_map[l]);
      write_output(emb_out, embedding_csv(emb.coordinates, labels), out);
      return kExitOk;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace fewshot::cli
