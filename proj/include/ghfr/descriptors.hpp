#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ghfr/image.hpp"

namespace ghfr {

/// Patch descriptor families. DenseGrad is a single-keypoint SIFT-style
/// histogram and is spelled "sift" on the command line.
enum class DescriptorKind : std::uint8_t { Hog = 0, DenseGrad = 1, Raw = 2 };

std::string_view to_string(DescriptorKind kind);
DescriptorKind parse_descriptor_kind(std::string_view name);
/// Parses a comma-separated list such as "hog,sift,raw".
std::vector<DescriptorKind> parse_descriptor_list(std::string_view list);

/// Output length of `kind` for a square patch of side `patch_size`.
int descriptor_dim(DescriptorKind kind, int patch_size);

struct FeatureVector {
  DescriptorKind kind = DescriptorKind::Raw;
  std::vector<double> values;
};

/// HOG: 5x5 cells, 9 unsigned bins centered on multiples of 20 degrees with
/// linear bin interpolation, one block over all cells, L2 normalized.
FeatureVector hog(std::span<const double> patch, int patch_size);

/// 2x2 cells x 8 signed bins, Gaussian spatial weight (sigma = patch_size/2),
/// normalize / clamp at 0.2 / renormalize.
FeatureVector dense_grad(std::span<const double> patch, int patch_size);

/// Mean-subtracted, unit-norm intensities; a flat patch maps to zeros.
FeatureVector raw(std::span<const double> patch);

FeatureVector describe_patch(DescriptorKind kind, std::span<const double> patch, int patch_size);

/// One feature per grid patch, in grid index order.
std::vector<FeatureVector> describe_image(const GrayImage& img, const PatchGrid& grid, DescriptorKind kind);

}  // namespace ghfr
