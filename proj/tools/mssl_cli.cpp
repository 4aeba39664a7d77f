// mssl: synthesize data, train, evaluate, sweep alpha and run ablations.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mssl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

std::string num(double x) { return json(x).dump(); }

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw mssl::ConfigError("invalid number '" + s + "' in " + what);
  }
}

/// "0,0.5,1" or "start:stop:step".
std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    const auto parts = split_list(s, ':');
    if (parts.size() != 3) throw mssl::ConfigError("grid range must be start:stop:step");
    const double a = parse_double(parts[0], "grid"), b = parse_double(parts[1], "grid"),
                 step = parse_double(parts[2], "grid");
    if (!(step > 0) || b < a) throw mssl::ConfigError("grid range needs step > 0 and stop >= start");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(std::round((a + static_cast<double>(i) * step) * 1e12) / 1e12);
  } else {
    for (const auto& item : split_list(s)) out.push_back(parse_double(item, "grid"));
  }
  if (out.empty()) throw mssl::ConfigError("empty alpha grid");
  for (double a : out) mssl::validate_alpha(a);
  return out;
}

constexpr const char* kDefaultGrid = "0:1:0.1";
constexpr const char* kDefaultVariants = "full,no_frame,no_clip";

struct Common {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::string bins;
  mssl::Ablation ablation;
  std::optional<int> epochs, batch_size, patience, hidden, heads;
  std::optional<double> lr, dropout;
};

void add_data_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration JSON (or a resolved_config.json snapshot)");
  cmd->add_option("--data", c.data, "Dataset directory with <split>.json manifests, or one manifest file");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Random seed");
}

void add_run_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--alpha", c.alpha, "Fusion weight of the clip-scale score");
  cmd->add_option("--bins", c.bins, "M/V bin edges, e.g. 0,0.2,0.4,1 or equal:3");
  cmd->add_flag("--disable-clip-branch", c.ablation.disable_clip_branch, "Train/score without the clip branch");
  cmd->add_flag("--disable-frame-branch", c.ablation.disable_frame_branch, "Train/score without the frame branch");
  cmd->add_flag("--simple-attention", c.ablation.simple_attention, "Pool frames without key-clip guidance");
  cmd->add_flag("--no-triplet", c.ablation.no_triplet, "Drop the triplet ranking terms");
  cmd->add_flag("--no-nce", c.ablation.no_nce, "Drop the InfoNCE terms");
  cmd->add_flag("--mean-pool-baseline", c.ablation.mean_pool_baseline, "Whole-video mean-pooling baseline");
  cmd->add_option("--epochs", c.epochs, "Maximum epochs");
  cmd->add_option("--batch-size", c.batch_size, "Minibatch size");
  cmd->add_option("--lr", c.lr, "Initial learning rate");
  cmd->add_option("--patience", c.patience, "Early-stop patience in epochs");
  cmd->add_option("--hidden", c.hidden, "Hidden size d");
  cmd->add_option("--heads", c.heads, "Attention heads");
  cmd->add_option("--dropout", c.dropout, "Dropout rate");
}

/// The --config file when it is a snapshot written by this tool, else null.
json snapshot_of(const Common& c) {
  if (c.config.empty()) return nullptr;
  json j;
  try {
    j = mssl::nn::read_json(c.config);
  } catch (const mssl::DataError& e) {
    throw mssl::ConfigError(e.what());
  }
  return j.contains("command") ? j : json(nullptr);
}

/// Explicit flag first, then the snapshot's recorded value, then `fallback`.
template <typename V>
V recorded(const V& flag, const json& snap, const char* key, const V& fallback) {
  if (flag != fallback) return flag;
  if (snap.is_object() && snap.contains(key)) return snap.at(key).get<V>();
  return fallback;
}

fs::path data_path(const Common& c) {
  const char* root = std::getenv("MSSL_DATA_ROOT");
  if (c.data.empty()) {
    const auto snap = snapshot_of(c);
    if (snap.is_object() && snap.contains("data")) return snap.at("data").get<std::string>();
    if (!root) throw mssl::ConfigError("no --data given and MSSL_DATA_ROOT is unset");
    return root;
  }
  fs::path p = c.data;
  if (p.is_relative() && !fs::exists(p) && root) return fs::path(root) / p;
  return p;
}

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw mssl::ConfigError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

mssl::RunConfig run_config(const Common& c) {
  mssl::RunConfig cfg = c.config.empty() ? mssl::RunConfig{} : mssl::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.alpha) cfg.alpha = cfg.train.alpha = *c.alpha;
  auto& a = cfg.ablation;
  const auto& f = c.ablation;
  a.disable_clip_branch |= f.disable_clip_branch;
  a.disable_frame_branch |= f.disable_frame_branch;
  a.simple_attention |= f.simple_attention;
  a.no_triplet |= f.no_triplet;
  a.no_nce |= f.no_nce;
  a.mean_pool_baseline |= f.mean_pool_baseline;
  if (c.epochs) cfg.train.max_epochs = *c.epochs;
  if (c.batch_size) cfg.train.batch_size = *c.batch_size;
  if (c.lr) cfg.train.lr = *c.lr;
  if (c.patience) cfg.train.patience = *c.patience;
  if (c.hidden) cfg.model.hidden = *c.hidden;
  if (c.heads) cfg.model.heads = *c.heads;
  if (c.dropout) cfg.model.dropout = *c.dropout;
  return cfg;
}

std::vector<double> bin_edges(const std::string& spec, const mssl::DatasetManifest& manifest) {
  if (spec.empty()) return {};
  if (spec.rfind("equal:", 0) == 0) {
    const auto n = parse_double(spec.substr(6), "--bins");
    if (n < 1 || n != std::floor(n)) throw mssl::ConfigError("--bins equal:N needs a positive integer N");
    return mssl::equal_count_mv_edges(manifest, static_cast<std::size_t>(n));
  }
  std::vector<double> edges;
  for (const auto& e : split_list(spec)) edges.push_back(parse_double(e, "--bins"));
  mssl::validate_mv_edges(edges);
  return edges;
}

/// Run directory (with best/) or a checkpoint directory itself.
fs::path checkpoint_dir(const std::string& arg) {
  if (arg.empty()) throw mssl::ConfigError("--checkpoint is required");
  const fs::path p = arg;
  if (fs::exists(p / "checkpoint.json")) return p;
  if (fs::exists(p / "best" / "checkpoint.json")) return p / "best";
  throw mssl::DataError("no checkpoint found at " + p.string());
}

void write_snapshot(const fs::path& dir, json snapshot) {
  mssl::nn::write_json(dir / "resolved_config.json", snapshot);
}

json report_row(const mssl::EvalReport& r) {
  return mssl::report_to_json(r);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw mssl::DataError("cannot write " + path.string());
  out << text;
}

std::string csv_recalls(const mssl::EvalReport& r) {
  return num(r.r1) + "," + num(r.r5) + "," + num(r.r10) + "," + num(r.r100) + "," + num(r.sum_recall());
}

std::string bins_csv(const mssl::GroupedReport& g) {
  std::string s = "bin,lower,upper,queries,R@1,R@5,R@10,R@100,SumR\n";
  for (std::size_t b = 0; b < g.bins.size(); ++b) {
    s += std::to_string(b) + "," + num(g.edges[b]) + "," + num(g.edges[b + 1]) + ",";
    s += g.bins[b] ? std::to_string(g.bins[b]->queries) + "," + csv_recalls(*g.bins[b]) : "0,,,,,";
    s += "\n";
  }
  s += "pooled,,," + std::to_string(g.pooled.queries) + "," + csv_recalls(g.pooled) + "\n";
  return s;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_file, const Common& c, std::optional<double> noise) {
  mssl::SyntheticSpec spec;
  if (!spec_file.empty()) {
    try {
      spec = mssl::nn::read_json(spec_file).get<mssl::SyntheticSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw mssl::ConfigError(spec_file + ": " + e.what());
    } catch (const mssl::DataError& e) {
      throw mssl::ConfigError(e.what());
    }
  }
  if (spec_file.empty()) {
    const auto snap = snapshot_of(c);
    if (snap.is_object() && snap.contains("spec")) {
      try {
        spec = snap.at("spec").get<mssl::SyntheticSpec>();
      } catch (const nlohmann::json::exception& e) {
        throw mssl::ConfigError(c.config + ": " + e.what());
      }
    }
  }
  if (c.seed) spec.seed = *c.seed;
  if (noise) spec.noise_sigma = *noise;
  spec.validate();
  const auto out = out_dir(c);
  mssl::write_synthetic(spec, out);
  write_snapshot(out, {{"command", "synth"}, {"spec", spec}});
  std::cout << "wrote synthetic dataset to " << out.string() << " (" << spec.num_videos << "/" << spec.val_videos << "/"
            << spec.test_videos << " videos)\n";
  return kOk;
}

int cmd_train(const Common& c, bool print_config, bool resume) {
  const auto cfg = run_config(c);
  if (print_config) {
    const auto& t = cfg.train;
    std::cout << "batch=" << t.batch_size << " lr=" << num(t.lr) << " patience=" << t.patience
              << " max_epochs=" << t.max_epochs << " margin=" << num(cfg.loss.margin)
              << " lambda_clip=" << num(cfg.loss.lambda_clip) << " lambda_frame=" << num(cfg.loss.lambda_frame)
              << " hard_negative_epoch=" << cfg.loss.hard_negative_epoch << " alpha=" << num(cfg.alpha) << "\n";
    std::cout << json(cfg).dump(2) << "\n";
    return kOk;
  }
  const auto data = data_path(c);
  const auto out = out_dir(c);
  const auto train = mssl::load_dataset(mssl::split_manifest(data, mssl::Split::train));
  const auto val = mssl::load_dataset(mssl::split_manifest(data, mssl::Split::val));
  const auto resolved = cfg.resolve(train.video_dim(), train.query_dim());
  write_snapshot(out, {{"command", "train"}, {"data", data.string()}, {"run", cfg}, {"resolved", resolved}});
  auto result = mssl::train_run(cfg, train, val, out, resume, [](const mssl::EpochRecord& r) {
    std::cout << "epoch " << r.epoch << " loss " << num(r.loss) << " val SumR " << num(r.val_sumr) << " lr "
              << num(r.lr) << " negatives " << mssl::to_string(r.mode) << (r.improved ? " *" : "") << "\n";
  });
  const json summary = {{"best_epoch", result.best_epoch},
                        {"best_val_sumr", result.best_val_sumr},
                        {"epochs_run", result.log.epochs.size()}};
  mssl::nn::write_json(out / "summary.json", summary);
  std::cout << summary.dump() << "\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint_arg, const std::string& split_arg,
             const std::string& index_out) {
  const auto snap = snapshot_of(c);
  const auto ckpt = checkpoint_dir(recorded(checkpoint_arg, snap, "checkpoint", std::string{}));
  const auto split_name = recorded(split_arg, snap, "split", std::string{"test"});
  const auto bins_arg = recorded(c.bins, snap, "bins", std::string{});
  const auto loaded = mssl::load_model(ckpt);
  const auto data = data_path(c);
  const auto split = mssl::split_from_string(split_name);
  const auto ds = mssl::load_dataset(mssl::split_manifest(data, split));
  double requested = 0.5;
  if (c.alpha) requested = *c.alpha;
  else if (snap.is_object() && snap.contains("alpha")) requested = snap.at("alpha").get<double>();
  const double alpha = loaded.model.scoring().effective_alpha(requested);
  const auto edges = bin_edges(bins_arg, ds.manifest);
  const auto index = mssl::build_index(loaded.model, ds);
  if (!index_out.empty()) mssl::save_index(index_out, index);
  const auto lists = mssl::rank_table(mssl::score_table(loaded.model, index, ds), static_cast<float>(alpha));
  const auto report = mssl::make_report(lists);
  json doc = {{"checkpoint", ckpt.string()}, {"split", split_name}, {"alpha", alpha}, {"report", report_row(report)}};
  std::optional<mssl::GroupedReport> grouped;
  if (!edges.empty()) {
    grouped = mssl::grouped_eval(lists, mssl::group_queries_by_mv(ds.manifest, edges));
    doc["mv_bins"] = mssl::grouped_to_json(*grouped)["bins"];
  }
  std::cout << doc.dump(2) << "\n";
  if (!c.out.empty()) {
    const auto out = out_dir(c);
    mssl::nn::write_json(out / "report.json", doc);
    if (grouped) write_text(out / "mv_bins.csv", bins_csv(*grouped));
    write_snapshot(out, {{"command", "eval"},
                         {"checkpoint", ckpt.string()},
                         {"data", data.string()},
                         {"split", split_name},
                         {"alpha", alpha},
                         {"bins", bins_arg},
                         {"mv_edges", edges},
                         {"model", loaded.model.config()}});
  }
  return kOk;
}

int cmd_sweep(const Common& c, const std::string& checkpoint_arg, const std::string& split_arg,
              const std::string& grid_arg) {
  const auto snap = snapshot_of(c);
  const auto ckpt = checkpoint_dir(recorded(checkpoint_arg, snap, "checkpoint", std::string{}));
  const auto split_name = recorded(split_arg, snap, "split", std::string{"test"});
  const auto loaded = mssl::load_model(ckpt);
  const auto data = data_path(c);
  const auto ds = mssl::load_dataset(mssl::split_manifest(data, mssl::split_from_string(split_name)));
  auto grid = parse_grid(grid_arg);
  if (grid_arg == kDefaultGrid && snap.is_object() && snap.contains("grid"))
    grid = snap.at("grid").get<std::vector<double>>();
  const auto table = mssl::score_table(loaded.model, mssl::build_index(loaded.model, ds), ds);
  const auto rows = mssl::sweep_alpha(table, grid);
  std::string csv = "alpha,R@1,R@5,R@10,R@100,SumR\n";
  json doc = json::array();
  for (const auto& r : rows) {
    csv += num(r.alpha) + "," + csv_recalls(r.report) + "\n";
    doc.push_back({{"alpha", r.alpha}, {"report", report_row(r.report)}});
  }
  std::cout << csv;
  if (!c.out.empty()) {
    const auto out = out_dir(c);
    write_text(out / "alpha_sweep.csv", csv);
    mssl::nn::write_json(out / "alpha_sweep.json", doc);
    write_snapshot(out, {{"command", "sweep-alpha"},
                         {"checkpoint", ckpt.string()},
                         {"data", data.string()},
                         {"split", split_name},
                         {"grid", grid},
                         {"model", loaded.model.config()}});
  }
  return kOk;
}

int cmd_ablate(const Common& c, const std::string& variants_arg, const std::string& seeds_arg) {
  const auto base = run_config(c);
  const auto data = data_path(c);
  const auto out = out_dir(c);
  const auto train = mssl::load_dataset(mssl::split_manifest(data, mssl::Split::train));
  const auto val = mssl::load_dataset(mssl::split_manifest(data, mssl::Split::val));
  const auto test = mssl::load_dataset(mssl::split_manifest(data, mssl::Split::test));
  const auto snap = snapshot_of(c);
  const auto bins_arg = recorded(c.bins, snap, "bins", std::string{});
  const auto edges = bin_edges(bins_arg, test.manifest);
  auto variants = split_list(variants_arg);
  if (variants_arg == kDefaultVariants && snap.is_object() && snap.contains("variants"))
    variants = snap.at("variants").get<std::vector<std::string>>();
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_arg)) seeds.push_back(static_cast<std::uint64_t>(parse_double(s, "--seeds")));
  if (seeds.empty() && snap.is_object() && snap.contains("seeds")) seeds = snap.at("seeds").get<std::vector<std::uint64_t>>();
  if (seeds.empty()) seeds.push_back(base.seed);
  for (const auto& v : variants) (void)mssl::variant(v);  // reject unknown names before training anything

  std::string csv = "variant,seed,best_epoch,val_SumR,R@1,R@5,R@10,R@100,SumR\n";
  std::string bins = "variant,seed,bin,lower,upper,queries,SumR\n";
  json rows = json::array();
  json runs = json::array();
  for (const auto& v : variants) {
    double mean = 0;
    for (auto seed : seeds) {
      auto cfg = base;
      cfg.ablation = mssl::variant(v);
      cfg.seed = seed;
      const auto dir = out / (v + "_seed" + std::to_string(seed));
      fs::create_directories(dir);
      const auto resolved = cfg.resolve(train.video_dim(), train.query_dim());
      write_snapshot(dir, {{"command", "train"}, {"data", data.string()}, {"run", cfg}, {"resolved", resolved}});
      auto result = mssl::train_run(cfg, train, val, dir);
      const auto eval = mssl::evaluate_split(result.model, test, resolved.alpha, edges);
      csv += v + "," + std::to_string(seed) + "," + std::to_string(result.best_epoch) + "," +
             num(result.best_val_sumr) + "," + csv_recalls(eval.report) + "\n";
      json row = {{"variant", v},
                  {"seed", seed},
                  {"best_epoch", result.best_epoch},
                  {"val_sumr", result.best_val_sumr},
                  {"test", report_row(eval.report)}};
      if (eval.grouped) {
        row["mv_bins"] = mssl::grouped_to_json(*eval.grouped)["bins"];
        for (std::size_t b = 0; b < eval.grouped->bins.size(); ++b) {
          const auto& r = eval.grouped->bins[b];
          bins += v + "," + std::to_string(seed) + "," + std::to_string(b) + "," + num(edges[b]) + "," +
                  num(edges[b + 1]) + "," + (r ? std::to_string(r->queries) + "," + num(r->sum_recall()) : "0,") + "\n";
        }
      }
      rows.push_back(row);
      runs.push_back(dir.string());
      mean += eval.report.sum_recall();
      std::cout << v << " seed " << seed << ": test SumR " << num(eval.report.sum_recall()) << "\n";
    }
    mean /= static_cast<double>(seeds.size());
    csv += v + ",mean,,,,,,," + num(mean) + "\n";
  }
  write_text(out / "ablation.csv", csv);
  if (!edges.empty()) write_text(out / "ablation_mv_bins.csv", bins);
  mssl::nn::write_json(out / "ablation.json", rows);
  write_snapshot(out, {{"command", "ablate"},
                       {"data", data.string()},
                       {"run", base},
                       {"variants", variants},
                       {"seeds", seeds},
                       {"bins", bins_arg},
                       {"mv_edges", edges},
                       {"runs", runs}});
  std::cout << csv;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale similarity learning for partially relevant video retrieval"};
  app.require_subcommand(1);
  Common c;

  std::string spec_file;
  std::optional<double> noise;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic planted-moment dataset");
  synth->add_option("--spec", spec_file, "Synthetic spec JSON (defaults used when omitted)");
  synth->add_option("--noise", noise, "Override noise_sigma");
  add_data_flags(synth, c);

  bool print_config = false, resume = false;
  auto* train = app.add_subcommand("train", "Train a model; writes best/, last/, train_log.jsonl");
  add_data_flags(train, c);
  add_run_flags(train, c);
  train->add_flag("--print-config", print_config, "Print the effective configuration and exit");
  train->add_flag("--resume", resume, "Continue from <out>/last");

  std::string checkpoint, split = "test", index_out, grid = kDefaultGrid;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint: R@1/5/10/100, SumR, optional M/V bins");
  add_data_flags(eval, c);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint or training output directory");
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--alpha", c.alpha, "Fusion weight of the clip-scale score");
  eval->add_option("--bins", c.bins, "M/V bin edges, e.g. 0,0.2,0.4,1 or equal:3");
  eval->add_option("--index-out", index_out, "Also save the precomputed video index here");

  auto* sweep = app.add_subcommand("sweep-alpha", "Evaluate a checkpoint over a grid of alpha values");
  add_data_flags(sweep, c);
  sweep->add_option("--checkpoint", checkpoint, "Checkpoint or training output directory");
  sweep->add_option("--split", split, "train, val or test");
  sweep->add_option("--grid", grid, "Comma list or start:stop:step");

  std::string variants = kDefaultVariants, seeds;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate a set of ablation variants");
  add_data_flags(ablate, c);
  add_run_flags(ablate, c);
  ablate->add_option("--variants", variants, "Comma list of: full, no_frame, no_clip, simple_attention, no_nce, "
                                             "no_triplet, mean_pool");
  ablate->add_option("--seeds", seeds, "Comma list of seeds (default: --seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(spec_file, c, noise);
    if (*train) return cmd_train(c, print_config, resume);
    if (*eval) return cmd_eval(c, checkpoint, split, index_out);
    if (*sweep) return cmd_sweep(c, checkpoint, split, grid);
    if (*ablate) return cmd_ablate(c, variants, seeds);
  } catch (const mssl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const mssl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const mssl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
