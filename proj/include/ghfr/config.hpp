#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ghfr/descriptors.hpp"
#include "ghfr/fusion.hpp"
#include "ghfr/mrf_weights.hpp"
#include "ghfr/repset.hpp"
#include "ghfr/synthgen.hpp"

namespace ghfr {

/// Every tunable of the pipeline. Defaults give 100x125 images, 10-pixel
/// patches on a 5-pixel step, a 16x16 search region, alpha 0.025,
/// K in {15,...,40} and the three descriptor kinds.
struct PipelineConfig {
  std::uint64_t seed = 7;
  int identities = 100;
  SplitSizes splits{30, 30, 40};
  int distractors = 0;

  int width = 100;
  int height = 125;
  int patch_size = 10;
  int step = 5;
  int region = 16;
  int stride = 2;
  double alpha = 0.025;
  std::vector<int> K{15, 20, 25, 30, 35, 40};
  std::vector<DescriptorKind> kinds{DescriptorKind::Hog, DescriptorKind::DenseGrad, DescriptorKind::Raw};
  int max_sweeps = 30;
  double tol = 1e-6;

  FusionMethod fusion = FusionMethod::OneClassSvm;
  double nu = 0.0;  // 0 selects nu automatically
  std::vector<int> ranks{1, 10, 50};
  double far = 0.001;
  Modality probe_modality = Modality::B;

  double sigma1 = 1.0;
  double sigma2 = 2.0;
  bool invert = true;
  double max_shift = 2.0;
  double noise_sigma = 0.02;

  void validate() const;

  SolverParams solver(int K) const;
  SynthConfig synth() const;
  FusionParams fusion_params() const;
  PatchGrid grid() const { return {width, height, patch_size, step}; }
  /// K values usable with M representation pairs (K <= M), ascending.
  std::vector<int> effective_K(std::size_t M) const;
};

/// Flat "key = value" text; '#' starts a comment. Missing keys keep their
/// defaults; unknown or repeated keys are errors.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical form listing every key; parse_config(dump_config(c)) == c.
std::string dump_config(const PipelineConfig& cfg);

/// Applies one key/value pair; used by the file parser and CLI overrides.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);

bool operator==(const PipelineConfig& a, const PipelineConfig& b);

std::vector<int> parse_int_list(const std::string& text);

}  // namespace ghfr
