#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ghfr/descriptors.hpp"
#include "ghfr/image.hpp"
#include "ghfr/mrf_weights.hpp"

namespace ghfr {

/// Weights at or below this are treated as absent support.
inline constexpr double kSupportThreshold = 1e-12;

/// One similarity metric: a descriptor kind solved with K candidates.
struct MetricKey {
  DescriptorKind kind = DescriptorKind::Hog;
  int K = 0;
  auto operator<=>(const MetricKey&) const = default;
};

std::string metric_label(const MetricKey& key);  // e.g. "hog_K15"
MetricKey parse_metric_label(const std::string& label);

/// Canonical score ordering: kinds in the given order, K ascending.
std::vector<MetricKey> metric_keys(std::span<const DescriptorKind> kinds, std::span<const int> Ks);

/// Half the total weight of both vectors restricted to indices where both are
/// positive. In [0,1] for simplex vectors.
double patch_similarity(const SparseVector& wy, const SparseVector& wx);

struct SimilarityMap {
  int cols = 0;
  int rows = 0;
  std::vector<double> scores;  // grid index order
  double score = 0.0;          // mean over patches
};

SimilarityMap similarity_map(const SparseRepresentation& ry, const SparseRepresentation& rx, const PatchGrid& grid);

/// Image-level score (mean patch similarity) without the map layout.
double image_similarity(const SparseRepresentation& ry, const SparseRepresentation& rx);

struct BinaryMap {
  int cols = 0;
  int rows = 0;
  std::vector<std::uint8_t> bright;  // s_i > threshold
};

BinaryMap binarize_map(const SimilarityMap& map, double threshold = 0.5);

/// Renders per-patch values as flat step x step cells over the full image
/// size; the last row/column of cells absorbs the border remainder.
GrayImage render_map(const SimilarityMap& map, const PatchGrid& grid);
GrayImage render_map(const BinaryMap& map, const PatchGrid& grid);

using RepresentationBundle = std::map<MetricKey, SparseRepresentation>;

/// One image-level score per key, in key order.
std::vector<double> score_vector(const RepresentationBundle& probe, const RepresentationBundle& gallery,
                                 std::span<const MetricKey> keys);

struct ScoreRow {
  std::string probe_id;
  std::string gallery_id;
  std::vector<double> values;
};

/// probe_id, gallery_id, one column per metric. Serialized as TSV with a
/// header row naming the metric columns.
struct ScoreTable {
  std::vector<MetricKey> keys;
  std::vector<ScoreRow> rows;
};

void write_score_table(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_score_table(const std::filesystem::path& path);

}  // namespace ghfr
