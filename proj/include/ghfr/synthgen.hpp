#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ghfr/evalkit.hpp"
#include "ghfr/image.hpp"

namespace ghfr {

struct SynthConfig {
  std::uint64_t seed = 7;
  int identities = 100;
  int width = 100;
  int height = 125;
  double sigma1 = 1.0;  // DoG inner scale
  double sigma2 = 2.0;  // DoG outer scale
  bool invert = true;   // dark strokes on white, sketch-like
  double max_shift = 2.0;     // pixels, modality-B geometric jitter
  double noise_sigma = 0.02;  // additive pixel noise
  SplitSizes splits{30, 30, 40};
  int distractors = 0;  // extra modality-A identities for gallery population

  void validate() const;
};

/// Modality-A face of identity `id`, deterministic in (seed, id).
GrayImage generate_identity(const SynthConfig& cfg, int id);

/// Modality-A face of distractor `k`; never equal to any regular identity.
GrayImage generate_distractor(const SynthConfig& cfg, int k);

/// Stylized counterpart of identity `id`: a re-render with a small random
/// shift and fresh noise, passed through to_modality_b.
GrayImage generate_modality_b(const SynthConfig& cfg, int id);

/// Magnitude of a difference of Gaussians, optionally negated, min-max
/// rescaled to [0,1]. A constant image maps to all zeros.
GrayImage to_modality_b(const GrayImage& img, const SynthConfig& cfg);

GrayImage gaussian_blur(const GrayImage& img, double sigma);

std::string identity_name(int id);    // "id0007"
std::string distractor_name(int k);   // "x0007"

struct DatasetEntry {
  std::string id;
  std::filesystem::path a;
  std::filesystem::path b;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
  Partition partition;
  std::vector<DatasetEntry> distractors;  // b is empty
};

/// Writes A/ and B/ PGMs, manifest.tsv (id, pathA, pathB), splits.tsv,
/// per-split manifests, labels.tsv and, when requested, D/ distractors with
/// distractors.tsv. Paths in manifests are relative to `out`.
DatasetManifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out, int jobs = 1);

/// Normalizes and stylizes every PGM/PNG in `dir` (sorted by name).
DatasetManifest stylize_directory(const SynthConfig& cfg, const std::filesystem::path& dir,
                                  const std::filesystem::path& out);

}  // namespace ghfr
