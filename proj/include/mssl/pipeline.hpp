#pragma once

// End-to-end helpers shared by the command-line tool and the experiments:
// train one configuration, evaluate it, and run ablation grids.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mssl/config.hpp"
#include "mssl/dataset.hpp"
#include "mssl/evaluation.hpp"
#include "mssl/model_io.hpp"
#include "mssl/mv_ratio.hpp"
#include "mssl/trainer.hpp"

namespace mssl {

/// A data location is either a manifest file or a directory holding `<split>.json`.
inline std::filesystem::path split_manifest(const std::filesystem::path& data, Split split) {
  if (std::filesystem::is_regular_file(data)) return data;
  return data / (to_string(split) + ".json");
}

struct TrainOutcome {
  Model<float> model;  // best-validation parameters
  TrainLog log;
  double best_val_sumr = 0;
  int best_epoch = -1;
  ResolvedRun run;
};

inline TrainOutcome train_run(const RunConfig& cfg, const Dataset& train, const Dataset& val,
                              const std::optional<std::filesystem::path>& out = {}, bool resume = false,
                              const Trainer::Observer& observer = {}) {
  if (val.queries.empty()) throw DataError("validation split has no queries");
  const auto run = cfg.resolve(train.video_dim(), train.query_dim());
  if (val.video_dim() != run.model.video_dim || val.query_dim() != run.model.query_dim)
    throw ShapeError("validation features do not match training feature dimensions");
  TrainOutcome result{Model<float>(run.model, init_seed(run.train.seed)), {}, 0, -1, run};
  const double alpha = run.train.alpha;
  Trainer trainer(
      result.model, training_view(train),
      [&val, alpha](const Model<float>& m) { return validation_sumr(m, val, alpha); }, run.train, run.loss);
  if (resume) {
    if (!out) throw ConfigError("resume needs an output directory");
    trainer.resume(*out);
  }
  result.log = trainer.run(observer, out);
  result.best_val_sumr = trainer.best_sumr();
  result.best_epoch = trainer.best_epoch();
  return result;
}

struct EvalResult {
  EvalReport report;
  std::optional<GroupedReport> grouped;
  std::vector<RankedList> lists;
};

/// Evaluates at `alpha`; with edges given, also reports per M/V bin.
inline EvalResult evaluate_split(const Model<float>& model, const Dataset& split, double alpha,
                                 const std::vector<double>& mv_edges = {}) {
  auto out = evaluate(model, split, static_cast<float>(alpha));
  EvalResult r{out.report, std::nullopt, std::move(out.lists)};
  if (!mv_edges.empty()) r.grouped = grouped_eval(r.lists, group_queries_by_mv(split.manifest, mv_edges));
  return r;
}

struct SweepRow {
  double alpha = 0;
  EvalReport report;
};

inline std::vector<SweepRow> sweep_alpha(const ScoreTable& table, const std::vector<double>& grid) {
  std::vector<SweepRow> rows;
  for (double a : grid) rows.push_back({a, make_report(rank_table(table, static_cast<float>(a)))});
  return rows;
}

}  // namespace mssl
