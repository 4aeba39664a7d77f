#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mssl/error.hpp"
#include "mssl/manifest.hpp"

namespace mssl {

/// Fraction of the video covered by the moment, in (0, 1].
inline double moment_to_video_ratio(const std::optional<Moment>& moment, double duration) {
  if (!moment) throw DataError("no moment annotation");
  if (!(duration > 0.0)) throw DataError("duration must be > 0");
  if (!(moment->start < moment->end)) throw DataError("start < end violated");
  if (moment->start < 0.0 || moment->end > duration) throw DataError("moment outside [0, duration]");
  return (moment->end - moment->start) / duration;
}

/// Bins (edges[i], edges[i+1]] with member query ids per bin.
struct MvGroup {
  std::vector<double> edges;
  std::vector<std::vector<std::string>> bins;

  std::size_t bin_count() const { return bins.size(); }
};

inline void validate_mv_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("M/V bin edges need at least two values");
  if (edges.front() != 0.0 || edges.back() != 1.0)
    throw ConfigError("M/V bin edges must start at 0 and end at 1");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ConfigError("M/V bin edges must be strictly increasing");
}

/// Index of the bin (edges[i], edges[i+1]] containing ratio.
inline std::size_t mv_bin_index(const std::vector<double>& edges, double ratio) {
  // first edge strictly >= ratio closes the bin
  auto it = std::lower_bound(edges.begin() + 1, edges.end(), ratio);
  if (it == edges.end()) it = edges.end() - 1;
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

inline MvGroup group_queries_by_mv(const DatasetManifest& manifest, const std::vector<double>& edges) {
  validate_mv_edges(edges);
  std::string missing;
  for (const auto& q : manifest.queries)
    if (!q.moment) missing += (missing.empty() ? "" : ", ") + q.id;
  if (!missing.empty()) throw DataError("queries without moment annotation: " + missing);

  MvGroup g;
  g.edges = edges;
  g.bins.resize(edges.size() - 1);
  for (const auto& q : manifest.queries) {
    const auto* v = manifest.find_video(q.video_id);
    if (!v) throw DataError("query '" + q.id + "': dangling video_id '" + q.video_id + "'");
    g.bins[mv_bin_index(edges, moment_to_video_ratio(q.moment, v->duration))].push_back(q.id);
  }
  return g;
}

/// Edges giving (approximately) equal-count bins over the manifest's ratios.
/// Interior edges sit halfway between neighbouring order statistics.
inline std::vector<double> equal_count_mv_edges(const DatasetManifest& manifest, std::size_t bins) {
  if (bins == 0) throw ConfigError("bin count must be >= 1");
  std::vector<double> ratios;
  for (const auto& q : manifest.queries) {
    const auto* v = manifest.find_video(q.video_id);
    if (!v) throw DataError("query '" + q.id + "': dangling video_id");
    ratios.push_back(moment_to_video_ratio(q.moment, v->duration));
  }
  if (ratios.size() < bins) throw DataError("fewer annotated queries than requested bins");
  std::sort(ratios.begin(), ratios.end());
  std::vector<double> edges{0.0};
  for (std::size_t b = 1; b < bins; ++b) {
    const std::size_t k = b * ratios.size() / bins;
    const double e = 0.5 * (ratios[k - 1] + ratios[k]);
    if (e > edges.back() && e < 1.0) edges.push_back(e);
  }
  edges.push_back(1.0);
  return edges;
}

}  // namespace mssl
