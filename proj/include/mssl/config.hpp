#pragma once

// Run configuration: a JSON file merged with command-line overrides, plus the
// ablation switches that map onto model / loss settings.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mssl/model.hpp"
#include "mssl/mv_ratio.hpp"
#include "mssl/objectives.hpp"
#include "mssl/trainer.hpp"

namespace mssl {

inline void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"margin", c.margin},
       {"lambda_clip", c.lambda_clip},
       {"lambda_frame", c.lambda_frame},
       {"hard_negative_epoch", c.hard_negative_epoch},
       {"temperature", c.temperature},
       {"positivity", c.positivity == Positivity::exponential ? "exp" : "identity"},
       {"use_triplet", c.use_triplet},
       {"use_nce", c.use_nce}};
}

inline void from_json(const nlohmann::json& j, LossConfig& c) {
  c.margin = j.value("margin", c.margin);
  c.lambda_clip = j.value("lambda_clip", c.lambda_clip);
  c.lambda_frame = j.value("lambda_frame", c.lambda_frame);
  c.hard_negative_epoch = j.value("hard_negative_epoch", c.hard_negative_epoch);
  c.temperature = j.value("temperature", c.temperature);
  if (j.contains("positivity")) {
    const auto p = j.at("positivity").get<std::string>();
    if (p == "exp") c.positivity = Positivity::exponential;
    else if (p == "identity") c.positivity = Positivity::identity;
    else throw ConfigError("unknown positivity '" + p + "'");
  }
  c.use_triplet = j.value("use_triplet", c.use_triplet);
  c.use_nce = j.value("use_nce", c.use_nce);
}

struct Ablation {
  bool disable_clip_branch = false;
  bool disable_frame_branch = false;
  bool simple_attention = false;  // frames pooled without key-clip guidance
  bool no_triplet = false;
  bool no_nce = false;
  bool mean_pool_baseline = false;  // one whole-video window, clip branch only

  bool operator==(const Ablation&) const = default;
};

inline void to_json(nlohmann::json& j, const Ablation& a) {
  j = {{"disable_clip_branch", a.disable_clip_branch}, {"disable_frame_branch", a.disable_frame_branch},
       {"simple_attention", a.simple_attention},       {"no_triplet", a.no_triplet},
       {"no_nce", a.no_nce},                           {"mean_pool_baseline", a.mean_pool_baseline}};
}

inline void from_json(const nlohmann::json& j, Ablation& a) {
  a.disable_clip_branch = j.value("disable_clip_branch", a.disable_clip_branch);
  a.disable_frame_branch = j.value("disable_frame_branch", a.disable_frame_branch);
  a.simple_attention = j.value("simple_attention", a.simple_attention);
  a.no_triplet = j.value("no_triplet", a.no_triplet);
  a.no_nce = j.value("no_nce", a.no_nce);
  a.mean_pool_baseline = j.value("mean_pool_baseline", a.mean_pool_baseline);
}

/// Named ablation presets accepted by `ablate --variants`.
inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"full",       "no_frame",   "no_clip",  "simple_attention",
                                              "no_nce",     "no_triplet", "mean_pool"};
  return names;
}

inline Ablation variant(const std::string& name) {
  Ablation a;
  if (name == "full") return a;
  if (name == "no_frame") a.disable_frame_branch = true;
  else if (name == "no_clip") a.disable_clip_branch = true;
  else if (name == "simple_attention") a.simple_attention = true;
  else if (name == "no_nce") a.no_nce = true;
  else if (name == "no_triplet") a.no_triplet = true;
  else if (name == "mean_pool") a.mean_pool_baseline = true;
  else throw ConfigError("unknown variant '" + name + "'");
  return a;
}

/// Settings after ablation switches and inferred dimensions are applied.
struct ResolvedRun {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  double alpha = 0.5;
};

struct RunConfig {
  ModelConfig model = [] {
    ModelConfig m;
    m.video_dim = 0;  // 0: take from the data
    m.query_dim = 0;
    return m;
  }();
  LossConfig loss;
  TrainConfig train;
  Ablation ablation;
  double alpha = 0.5;  // evaluation weight
  std::vector<double> mv_edges;  // empty: no M/V grouping
  std::uint64_t seed = 0;

  ResolvedRun resolve(int video_dim = 0, int query_dim = 0) const {
    ResolvedRun r{model, loss, train, alpha};
    if (r.model.video_dim == 0) r.model.video_dim = video_dim;
    if (r.model.query_dim == 0) r.model.query_dim = query_dim;
    if (r.model.video_dim == 0 || r.model.query_dim == 0)
      throw ConfigError("feature dimensions unknown: set model.video_dim / model.query_dim or supply data");
    r.train.seed = seed;
    const auto& a = ablation;
    if (a.disable_clip_branch && a.disable_frame_branch)
      throw ConfigError("at most one of --disable-clip-branch / --disable-frame-branch may be set");
    if (a.mean_pool_baseline && (a.disable_clip_branch || a.disable_frame_branch || a.simple_attention))
      throw ConfigError("the mean-pool baseline cannot be combined with branch switches");
    if (a.disable_clip_branch) {
      r.model.clip_branch = false;
      r.alpha = r.train.alpha = 0.0;
    }
    if (a.disable_frame_branch) {
      r.model.frame_branch = false;
      r.alpha = r.train.alpha = 1.0;
    }
    if (a.simple_attention) r.model.frame_aggregation = FrameAggregation::simple_attention;
    if (a.mean_pool_baseline) {
      r.model.whole_video_clip = true;
      r.model.frame_branch = false;
      r.alpha = r.train.alpha = 1.0;
    }
    if (a.no_triplet) r.loss.use_triplet = false;
    if (a.no_nce) {
      r.loss.use_nce = false;
      r.loss.lambda_clip = r.loss.lambda_frame = 0.0;
    }
    r.model = r.model.resolved();
    r.model.validate();
    r.loss.validate();
    r.train.validate();
    validate_alpha(r.alpha);
    if (!mv_edges.empty()) validate_mv_edges(mv_edges);
    return r;
  }
};

inline void to_json(nlohmann::json& j, const ResolvedRun& r) {
  j = {{"model", r.model}, {"loss", r.loss}, {"train", r.train}, {"alpha", r.alpha}};
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"model", c.model}, {"loss", c.loss},         {"train", c.train}, {"ablation", c.ablation},
       {"alpha", c.alpha}, {"mv_edges", c.mv_edges}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  static const std::vector<std::string> known{"model", "loss", "train", "ablation", "alpha", "mv_edges", "seed"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("loss")) from_json(j.at("loss"), c.loss);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("ablation")) from_json(j.at("ablation"), c.ablation);
  c.alpha = j.value("alpha", c.alpha);
  c.mv_edges = j.value("mv_edges", c.mv_edges);
  c.seed = j.value("seed", c.seed);
}

/// Reads a config file. A resolved-config snapshot written by the CLI is
/// accepted too; its "run" member is the original configuration.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nn::read_json(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("run")) j = j.at("run");
  try {
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mssl
