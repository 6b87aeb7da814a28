#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ghfr/descriptors.hpp"
#include "ghfr/image.hpp"

namespace ghfr {

enum class Modality : std::uint8_t { A = 0, B = 1 };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

struct ImagePair {
  std::string id;
  GrayImage a;
  GrayImage b;
};

/// Candidate offsets are the multiples of `stride` in [-region/2, region/2),
/// always including the aligned offset 0.
struct SearchOptions {
  int region = 16;
  int stride = 2;
};

std::vector<int> search_offsets(const SearchOptions& opts);

struct Candidate {
  std::uint32_t source = 0;  // representation image z
  int dx = 0;
  int dy = 0;
  FeatureVector feature;
  std::vector<double> intensities;  // full candidate patch, row-major
  double distance = 0.0;
};

/// K candidates for one patch, ascending distance, ties broken by lower z.
struct CandidateSet {
  int patch = 0;
  Modality modality = Modality::A;
  std::vector<Candidate> candidates;
};

/// Best in-region window of one representation image for a query.
struct SourceHit {
  std::uint32_t source = 0;
  int dx = 0;
  int dy = 0;
  double distance = 0.0;
};

/// M image pairs normalized onto one grid, with single-precision feature maps
/// for every window position of every stored descriptor kind.
class RepresentationSet {
 public:
  RepresentationSet(PatchGrid grid, std::vector<DescriptorKind> kinds, std::vector<std::string> ids,
                    std::vector<GrayImage> images_a, std::vector<GrayImage> images_b, int jobs = 1);

  std::size_t size() const { return ids_.size(); }
  const PatchGrid& grid() const { return grid_; }
  const std::vector<DescriptorKind>& kinds() const { return kinds_; }
  bool has_kind(DescriptorKind kind) const;
  const std::string& id(std::size_t z) const { return ids_.at(z); }
  const GrayImage& image(Modality m, std::size_t z) const;

  /// Stored feature of the window with top-left (x, y) in image z.
  std::span<const float> feature(Modality m, DescriptorKind kind, std::size_t z, int x, int y) const;

  void save(const std::filesystem::path& path) const;
  static RepresentationSet load(const std::filesystem::path& path);

  friend bool operator==(const RepresentationSet&, const RepresentationSet&) = default;

 private:
  struct FeatureMap {
    DescriptorKind kind = DescriptorKind::Raw;
    int dim = 0;
    std::vector<float> values;  // [z][y][x][dim]
    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
  };

  RepresentationSet(PatchGrid grid) : grid_(grid) {}
  const FeatureMap& map(Modality m, DescriptorKind kind) const;
  void compute_maps(int jobs);

  PatchGrid grid_;
  std::vector<DescriptorKind> kinds_;
  std::vector<std::string> ids_;
  std::vector<GrayImage> images_[2];
  std::vector<FeatureMap> maps_[2];
};

/// Normalizes every image onto `grid` and precomputes feature maps.
RepresentationSet build_repset(std::span<const ImagePair> pairs, const PatchGrid& grid,
                               std::span<const DescriptorKind> kinds, int jobs = 1);

/// Single-precision copy of a feature, the precision stored in the set.
std::vector<float> quantize_feature(const FeatureVector& f);

/// For every representation image keeps its best window inside the search
/// region around patch `patch`, then returns the K images with the smallest
/// best distance (ascending, ties by lower z).
std::vector<SourceHit> nearest_sources(const RepresentationSet& rs, Modality m, DescriptorKind kind, int patch,
                                       std::span<const float> query, std::size_t K, const SearchOptions& opts);

CandidateSet search_candidates(const RepresentationSet& rs, Modality m, int patch, const FeatureVector& query,
                               std::size_t K, const SearchOptions& opts = {});

/// Overlap restriction of a candidate patch using the probe-grid geometry.
std::vector<double> candidate_overlap(const Candidate& c, const AdjacencyPair& pair, OverlapSide side,
                                      int patch_size);

}  // namespace ghfr
