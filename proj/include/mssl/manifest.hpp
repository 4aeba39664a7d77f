#pragma once

// Dataset manifests: one JSON document per split. Feature paths are relative
// to the directory that contains the manifest.
//
//   {"split": "train",
//    "videos":  [{"id": "v0", "feature_path": "features/v0.msl", "duration": 76.2}],
//    "queries": [{"id": "q0", "video_id": "v0", "feature_path": "features/q0.msl",
//                 "moment": {"start": 5.0, "end": 9.1}}]}

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "mssl/error.hpp"

namespace mssl {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

struct Moment {
  double start = 0.0;
  double end = 0.0;
  friend bool operator==(const Moment&, const Moment&) = default;
};

struct VideoEntry {
  std::string id;
  std::string feature_path;
  double duration = 0.0;  // seconds
};

struct QueryEntry {
  std::string id;
  std::string video_id;
  std::string feature_path;
  std::optional<Moment> moment;  // evaluation-only metadata
};

struct DatasetManifest {
  Split split = Split::train;
  std::vector<VideoEntry> videos;
  std::vector<QueryEntry> queries;
  std::filesystem::path base_dir;  // feature paths resolve against this

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }

  const VideoEntry* find_video(const std::string& id) const {
    for (const auto& v : videos)
      if (v.id == id) return &v;
    return nullptr;
  }
};

/// Checks id uniqueness, references and moment bounds. When check_files is
/// set, every feature file must exist on disk.
inline void validate_manifest(const DatasetManifest& m, bool check_files = true) {
  std::unordered_map<std::string, double> durations;
  for (const auto& v : m.videos) {
    if (v.id.empty()) throw DataError("video with empty id");
    if (!durations.emplace(v.id, v.duration).second) throw DataError("duplicate video id '" + v.id + "'");
    if (!(v.duration > 0.0)) throw DataError("video '" + v.id + "': duration must be > 0");
    if (check_files && !std::filesystem::exists(m.resolve(v.feature_path)))
      throw DataError("video '" + v.id + "': missing feature file " + m.resolve(v.feature_path).string());
  }
  std::unordered_set<std::string> qids;
  for (const auto& q : m.queries) {
    if (q.id.empty()) throw DataError("query with empty id");
    if (!qids.insert(q.id).second) throw DataError("duplicate query id '" + q.id + "'");
    auto it = durations.find(q.video_id);
    if (it == durations.end())
      throw DataError("query '" + q.id + "': dangling video_id '" + q.video_id + "'");
    if (q.moment) {
      const auto& mo = *q.moment;
      if (!(mo.start < mo.end))
        throw DataError("query '" + q.id + "': malformed moment, start < end violated");
      if (mo.start < 0.0 || mo.end > it->second)
        throw DataError("query '" + q.id + "': malformed moment, outside [0, duration]");
    }
    if (check_files && !std::filesystem::exists(m.resolve(q.feature_path)))
      throw DataError("query '" + q.id + "': missing feature file " + m.resolve(q.feature_path).string());
  }
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["split"] = to_string(m.split);
  j["videos"] = nlohmann::json::array();
  for (const auto& v : m.videos)
    j["videos"].push_back({{"id", v.id}, {"feature_path", v.feature_path}, {"duration", v.duration}});
  j["queries"] = nlohmann::json::array();
  for (const auto& q : m.queries) {
    nlohmann::json e = {{"id", q.id}, {"video_id", q.video_id}, {"feature_path", q.feature_path}};
    if (q.moment) e["moment"] = {{"start", q.moment->start}, {"end", q.moment->end}};
    j["queries"].push_back(std::move(e));
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  try {
    m.split = split_from_string(j.at("split").get<std::string>());
    for (const auto& v : j.at("videos")) {
      m.videos.push_back({v.at("id").get<std::string>(), v.at("feature_path").get<std::string>(),
                          v.at("duration").get<double>()});
    }
    for (const auto& q : j.at("queries")) {
      QueryEntry e{q.at("id").get<std::string>(), q.at("video_id").get<std::string>(),
                   q.at("feature_path").get<std::string>(), std::nullopt};
      if (q.contains("moment") && !q.at("moment").is_null()) {
        const auto& mo = q.at("moment");
        if (!mo.is_object() || !mo.contains("start") || !mo.contains("end"))
          throw DataError("query '" + e.id + "': malformed moment");
        e.moment = Moment{mo.at("start").get<double>(), mo.at("end").get<double>()};
      }
      m.queries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing manifest file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
  auto m = manifest_from_json(j, path.parent_path());
  validate_manifest(m);
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << manifest_to_json(m).dump(1) << '\n';
}

}  // namespace mssl
