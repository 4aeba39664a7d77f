#pragma once

// Minibatch training loop with Adam, plateau learning-rate decay,
// validation-driven early stopping and resumable checkpoints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mssl/adam.hpp"
#include "mssl/dataset.hpp"
#include "mssl/evaluation.hpp"
#include "mssl/model.hpp"
#include "mssl/model_io.hpp"

namespace mssl {

struct TrainConfig {
  int batch_size = 128;
  double lr = 0.00025;
  int max_epochs = 100;
  int patience = 10;
  double alpha = 0.5;  // fused-score weight used for validation
  std::uint64_t seed = 0;
  AdamConfig adam;
  int lr_decay_patience = 3;
  double lr_decay_factor = 0.5;
  double min_lr = 1e-6;

  void validate() const {
    if (batch_size < 2) throw ConfigError("batch size must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (lr_decay_patience < 1) throw ConfigError("lr decay patience must be >= 1");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr decay factor must be in (0, 1]");
    if (!(min_lr > 0.0)) throw ConfigError("min lr must be > 0");
    validate_alpha(alpha);
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"lr", c.lr},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"alpha", c.alpha},
       {"seed", c.seed},
       {"adam_beta1", c.adam.beta1},
       {"adam_beta2", c.adam.beta2},
       {"adam_epsilon", c.adam.epsilon},
       {"lr_decay_patience", c.lr_decay_patience},
       {"lr_decay_factor", c.lr_decay_factor},
       {"min_lr", c.min_lr}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
  c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
  c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
  c.lr_decay_patience = j.value("lr_decay_patience", c.lr_decay_patience);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.min_lr = j.value("min_lr", c.min_lr);
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0, triplet_clip = 0, triplet_frame = 0, nce_clip = 0, nce_frame = 0;
  double val_sumr = 0;
  double lr = 0;
  NegativeMode mode = NegativeMode::random;
  bool improved = false;
  std::size_t batches = 0;
  double elapsed_seconds = 0;

  /// Equality of everything except wall-clock time.
  bool same_outcome(const EpochRecord& o) const {
    return epoch == o.epoch && loss == o.loss && triplet_clip == o.triplet_clip && triplet_frame == o.triplet_frame &&
           nce_clip == o.nce_clip && nce_frame == o.nce_frame && val_sumr == o.val_sumr && lr == o.lr &&
           mode == o.mode && improved == o.improved && batches == o.batches;
  }
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"loss", r.loss},
       {"triplet_clip", r.triplet_clip},
       {"triplet_frame", r.triplet_frame},
       {"nce_clip", r.nce_clip},
       {"nce_frame", r.nce_frame},
       {"val_sumr", r.val_sumr},
       {"lr", r.lr},
       {"negatives", to_string(r.mode)},
       {"improved", r.improved},
       {"batches", r.batches},
       {"elapsed_seconds", r.elapsed_seconds}};
}

inline void from_json(const nlohmann::json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<int>();
  r.loss = j.at("loss").get<double>();
  r.triplet_clip = j.at("triplet_clip").get<double>();
  r.triplet_frame = j.at("triplet_frame").get<double>();
  r.nce_clip = j.at("nce_clip").get<double>();
  r.nce_frame = j.at("nce_frame").get<double>();
  r.val_sumr = j.at("val_sumr").get<double>();
  r.lr = j.at("lr").get<double>();
  r.mode = j.at("negatives").get<std::string>() == "hardest" ? NegativeMode::hardest : NegativeMode::random;
  r.improved = j.at("improved").get<bool>();
  r.batches = j.at("batches").get<std::size_t>();
  r.elapsed_seconds = j.value("elapsed_seconds", 0.0);
}

struct TrainLog {
  std::vector<EpochRecord> epochs;

  bool same_outcome(const TrainLog& o) const {
    return std::equal(epochs.begin(), epochs.end(), o.epochs.begin(), o.epochs.end(),
                      [](const EpochRecord& a, const EpochRecord& b) { return a.same_outcome(b); });
  }

  void write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : epochs) out << nlohmann::json(r).dump() << '\n';
  }

  static TrainLog read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    TrainLog log;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) log.epochs.push_back(nlohmann::json::parse(line).get<EpochRecord>());
    return log;
  }
};

/// SumR on a split using fused similarity at the given alpha.
inline double validation_sumr(const Model<float>& model, const Dataset& split, double alpha) {
  return evaluate(model, split, static_cast<float>(alpha)).report.sum_recall();
}

/// Splits a permutation of [0, n) into batches of `size`; a short tail joins the last full batch.
inline std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  const std::size_t full = std::max<std::size_t>(1, order.size() / size);
  for (std::size_t b = 0; b < full; ++b) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(b * size);
    const auto last = b + 1 == full ? order.end() : first + static_cast<std::ptrdiff_t>(size);
    out.emplace_back(first, last);
  }
  return out;
}

/// Parameter initialisation seed derived from the run seed.
inline std::uint64_t init_seed(std::uint64_t seed) { return Rng::mix(seed, 0x1000000); }

class Trainer {
 public:
  using Validator = std::function<double(const Model<float>&)>;
  using Observer = std::function<void(const EpochRecord&)>;

  Trainer(Model<float>& model, TrainingView train, Validator validator, TrainConfig cfg, LossConfig loss)
      : model_(model), train_(std::move(train)), validator_(std::move(validator)), cfg_(cfg), loss_(loss) {
    cfg_.validate();
    loss_.validate();
    if (train_.queries.size() < 2) throw DataError("training split needs at least two queries");
    lr_ = cfg_.lr;
    adam_.reset(model_.parameters());
  }

  const TrainLog& log() const { return log_; }
  double best_sumr() const { return best_sumr_; }
  int best_epoch() const { return best_epoch_; }
  bool finished() const { return stopped_ || next_epoch_ >= cfg_.max_epochs; }
  int next_epoch() const { return next_epoch_; }
  double lr() const { return lr_; }

  /// Runs until early stop or max epochs; returns the log. Afterwards the
  /// model holds the best-validation parameters.
  const TrainLog& run(const Observer& observer = {}, const std::optional<std::filesystem::path>& out = {}) {
    while (!finished()) {
      const auto& rec = run_epoch();
      if (out) save(*out);
      if (observer) observer(rec);
    }
    restore_best();
    return log_;
  }

  const EpochRecord& run_epoch() {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = next_epoch_;
    const auto e = static_cast<std::uint64_t>(epoch);
    Rng order_rng(Rng::mix(cfg_.seed, 3 * e));
    Rng negative_rng(Rng::mix(cfg_.seed, 3 * e + 1));
    Rng dropout_rng(Rng::mix(cfg_.seed, 3 * e + 2));

    std::vector<std::size_t> order(train_.queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order.begin(), order.end());

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_;
    rec.mode = loss_.mode_for_epoch(epoch);
    const auto params = model_.parameters();
    std::size_t b = 0;
    for (const auto& batch_ids : make_batches(order, static_cast<std::size_t>(cfg_.batch_size))) {
      const auto batch = assemble(batch_ids);
      if (batch.videos.size() < 2) continue;  // no negatives available
      model_.zero_grad();
      const auto l = model_.batch_loss(batch, loss_, epoch, negative_rng, true,
                                       model_.config().dropout > 0 ? &dropout_rng : nullptr);
      if (!std::isfinite(l.total))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      try {
        adam_step(params, adam_, lr_, cfg_.adam);
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      rec.loss += l.total;
      rec.triplet_clip += l.triplet_clip;
      rec.triplet_frame += l.triplet_frame;
      rec.nce_clip += l.nce_clip;
      rec.nce_frame += l.nce_frame;
      ++b;
    }
    if (b == 0) throw DataError("no training batch contains two distinct videos");
    const double nb = static_cast<double>(b);
    rec.batches = b;
    rec.loss /= nb;
    rec.triplet_clip /= nb;
    rec.triplet_frame /= nb;
    rec.nce_clip /= nb;
    rec.nce_frame /= nb;

    rec.val_sumr = validator_(model_);
    rec.improved = rec.val_sumr > best_sumr_;
    if (rec.improved) {
      best_sumr_ = rec.val_sumr;
      best_epoch_ = epoch;
      best_ = nn::snapshot(params);
      since_improve_ = 0;
      since_decay_ = 0;
    } else {
      ++since_improve_;
      if (++since_decay_ >= cfg_.lr_decay_patience) {
        lr_ = std::max(lr_ * cfg_.lr_decay_factor, cfg_.min_lr);
        since_decay_ = 0;
      }
      if (since_improve_ >= cfg_.patience) stopped_ = true;
    }
    ++next_epoch_;
    rec.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_.epochs.push_back(rec);
    return log_.epochs.back();
  }

  /// Copies the best-validation parameters back into the model.
  void restore_best() {
    if (best_.empty()) return;
    auto params = model_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_[i].value;
  }

  /// Writes `dir/best`, `dir/last` (with optimizer and trainer state) and `dir/train_log.jsonl`.
  void save(const std::filesystem::path& dir) const {
    auto params = model_.parameters();
    if (!best_.empty()) {
      nlohmann::json header = {{"model", model_.config()},
                               {"info", {{"epoch", best_epoch_}, {"val_sumr", best_sumr_}}}};
      nn::save_tensors(dir / "best", best_, header);
    }
    std::vector<nn::NamedTensor> tensors = nn::snapshot(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      tensors.push_back({"adam.m." + params[i]->name, adam_.first[i]});
      tensors.push_back({"adam.v." + params[i]->name, adam_.second[i]});
    }
    // Wall-clock times live only in train_log.jsonl so checkpoints stay byte-reproducible.
    nlohmann::json log = log_.epochs;
    for (auto& rec : log) rec.erase("elapsed_seconds");
    nlohmann::json state = {{"next_epoch", next_epoch_},   {"best_sumr", best_sumr_},
                            {"best_epoch", best_epoch_},   {"since_improve", since_improve_},
                            {"since_decay", since_decay_}, {"lr", lr_},
                            {"stopped", stopped_},         {"adam_step", adam_.step},
                            {"train", cfg_},               {"log", log}};
    nn::save_tensors(dir / "last", tensors, {{"model", model_.config()}, {"info", {}}, {"trainer", state}});
    log_.write_jsonl(dir / "train_log.jsonl");
  }

  /// Restores model, optimizer and trainer state from `dir/last` (and `dir/best`).
  void resume(const std::filesystem::path& dir) {
    const auto last = nn::load_tensors(dir / "last");
    const auto saved_cfg = last.meta.at("model").get<ModelConfig>();
    if (nlohmann::json(saved_cfg) != nlohmann::json(model_.config()))
      throw ConfigError("resume: checkpoint model config differs from the current run");
    auto params = model_.parameters();
    nn::restore(params, last);
    adam_.reset(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto* m = last.find("adam.m." + params[i]->name);
      const auto* v = last.find("adam.v." + params[i]->name);
      if (!m || !v) throw DataError("resume: optimizer state missing for " + params[i]->name);
      adam_.first[i] = m->value;
      adam_.second[i] = v->value;
    }
    const auto& s = last.meta.at("trainer");
    next_epoch_ = s.at("next_epoch").get<int>();
    best_sumr_ = s.at("best_sumr").get<double>();
    best_epoch_ = s.at("best_epoch").get<int>();
    since_improve_ = s.at("since_improve").get<int>();
    since_decay_ = s.at("since_decay").get<int>();
    lr_ = s.at("lr").get<double>();
    stopped_ = s.at("stopped").get<bool>();
    adam_.step = s.at("adam_step").get<std::int64_t>();
    log_.epochs = s.at("log").get<std::vector<EpochRecord>>();
    if (std::filesystem::exists(dir / "train_log.jsonl")) {
      const auto timed = TrainLog::read_jsonl(dir / "train_log.jsonl");
      for (std::size_t i = 0; i < std::min(timed.epochs.size(), log_.epochs.size()); ++i)
        if (timed.epochs[i].epoch == log_.epochs[i].epoch) log_.epochs[i].elapsed_seconds = timed.epochs[i].elapsed_seconds;
    }
    best_.clear();
    if (std::filesystem::exists(dir / "best" / "checkpoint.json")) {
      const auto best = nn::load_tensors(dir / "best");
      for (auto* p : params) {
        const auto* t = best.find(p->name);
        if (!t) throw DataError("resume: best checkpoint lacks " + p->name);
        best_.push_back(*t);
      }
    }
  }

 private:
  BatchInput<float> assemble(const std::vector<std::size_t>& ids) const {
    BatchInput<float> batch;
    std::vector<std::size_t> seen;  // dataset video index per batch slot
    for (auto id : ids) {
      const auto& q = train_.queries[id];
      auto it = std::find(seen.begin(), seen.end(), q.video);
      if (it == seen.end()) {
        seen.push_back(q.video);
        batch.videos.push_back(train_.videos[q.video]);
        it = seen.end() - 1;
      }
      batch.queries.push_back(q.words);
      batch.video_of_pair.push_back(static_cast<std::size_t>(it - seen.begin()));
    }
    return batch;
  }

  Model<float>& model_;
  TrainingView train_;
  Validator validator_;
  TrainConfig cfg_;
  LossConfig loss_;
  AdamState<float> adam_;
  TrainLog log_;
  std::vector<nn::NamedTensor> best_;
  double best_sumr_ = -1.0;  // below any attainable SumR
  int best_epoch_ = -1;
  int since_improve_ = 0;
  int since_decay_ = 0;
  int next_epoch_ = 0;
  double lr_ = 0;
  bool stopped_ = false;
};

}  // namespace mssl
