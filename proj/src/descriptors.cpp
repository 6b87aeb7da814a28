#include "ghfr/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ghfr/error.hpp"

namespace ghfr {

namespace {

constexpr int kHogCell = 5;
constexpr int kHogBins = 9;
constexpr int kGradCells = 2;
constexpr int kGradBins = 8;
constexpr double kNormEps = 1e-6;

struct Gradient {
  std::vector<double> mag;
  std::vector<double> angle;  // radians in [0, 2pi)
};

// Central differences with replicated borders.
Gradient gradients(std::span<const double> p, int n) {
  Gradient g;
  g.mag.resize(p.size());
  g.angle.resize(p.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double gx = p[y * n + std::min(x + 1, n - 1)] - p[y * n + std::max(x - 1, 0)];
      const double gy = p[std::min(y + 1, n - 1) * n + x] - p[std::max(y - 1, 0) * n + x];
      const std::size_t k = static_cast<std::size_t>(y) * n + x;
      g.mag[k] = std::hypot(gx, gy);
      double a = std::atan2(gy, gx);
      if (a < 0) a += 2 * std::numbers::pi;
      if (a >= 2 * std::numbers::pi) a -= 2 * std::numbers::pi;
      g.angle[k] = a;
    }
  }
  return g;
}

void l2_normalize(std::vector<double>& v) {
  double ss = 0;
  for (double x : v) ss += x * x;
  const double norm = std::sqrt(ss) + kNormEps;
  for (double& x : v) x /= norm;
}

void check_patch(std::span<const double> patch, int patch_size) {
  if (patch_size < 2 * kHogCell) throw Error("descriptor: patch too small for one cell");
  if (patch.size() != static_cast<std::size_t>(patch_size) * patch_size)
    throw Error("descriptor: patch length does not match patch size");
}

}  // namespace

std::string_view to_string(DescriptorKind kind) {
  switch (kind) {
    case DescriptorKind::Hog: return "hog";
    case DescriptorKind::DenseGrad: return "sift";
    case DescriptorKind::Raw: return "raw";
  }
  return "?";
}

DescriptorKind parse_descriptor_kind(std::string_view name) {
  if (name == "hog") return DescriptorKind::Hog;
  if (name == "sift" || name == "dense_grad") return DescriptorKind::DenseGrad;
  if (name == "raw") return DescriptorKind::Raw;
  throw Error("unknown descriptor '" + std::string(name) + "'");
}

std::vector<DescriptorKind> parse_descriptor_list(std::string_view list) {
  std::vector<DescriptorKind> kinds;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    std::string_view item = list.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw Error("empty descriptor name in list");
    const DescriptorKind k = parse_descriptor_kind(item);
    if (std::find(kinds.begin(), kinds.end(), k) != kinds.end())
      throw Error("duplicate descriptor '" + std::string(item) + "'");
    kinds.push_back(k);
    start = comma + 1;
  }
  return kinds;
}

int descriptor_dim(DescriptorKind kind, int patch_size) {
  switch (kind) {
    case DescriptorKind::Hog: {
      const int cells = patch_size / kHogCell;
      return cells * cells * kHogBins;
    }
    case DescriptorKind::DenseGrad: return kGradCells * kGradCells * kGradBins;
    case DescriptorKind::Raw: return patch_size * patch_size;
  }
  return 0;
}

FeatureVector hog(std::span<const double> patch, int patch_size) {
  check_patch(patch, patch_size);
  const int cells = patch_size / kHogCell;
  const Gradient g = gradients(patch, patch_size);
  FeatureVector f{DescriptorKind::Hog, std::vector<double>(cells * cells * kHogBins, 0.0)};
  const double bin_width = std::numbers::pi / kHogBins;
  for (int y = 0; y < cells * kHogCell; ++y) {
    for (int x = 0; x < cells * kHogCell; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * patch_size + x;
      if (g.mag[k] == 0.0) continue;
      double a = g.angle[k];
      if (a >= std::numbers::pi) a -= std::numbers::pi;
      const double pos = a / bin_width;
      const int b0 = std::min(static_cast<int>(std::floor(pos)), kHogBins - 1);
      const double frac = pos - b0;
      const int cell = (y / kHogCell) * cells + x / kHogCell;
      f.values[cell * kHogBins + b0] += g.mag[k] * (1 - frac);
      f.values[cell * kHogBins + (b0 + 1) % kHogBins] += g.mag[k] * frac;
    }
  }
  l2_normalize(f.values);
  return f;
}

FeatureVector dense_grad(std::span<const double> patch, int patch_size) {
  check_patch(patch, patch_size);
  const int cell = patch_size / kGradCells;
  const Gradient g = gradients(patch, patch_size);
  FeatureVector f{DescriptorKind::DenseGrad, std::vector<double>(kGradCells * kGradCells * kGradBins, 0.0)};
  const double sigma = patch_size / 2.0;
  const double center = (patch_size - 1) / 2.0;
  const double bin_width = 2 * std::numbers::pi / kGradBins;
  for (int y = 0; y < kGradCells * cell; ++y) {
    for (int x = 0; x < kGradCells * cell; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * patch_size + x;
      if (g.mag[k] == 0.0) continue;
      const double dx = x - center, dy = y - center;
      const double weight = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      const double pos = g.angle[k] / bin_width;
      const int b0 = std::min(static_cast<int>(std::floor(pos)), kGradBins - 1);
      const double frac = pos - b0;
      const int c = (y / cell) * kGradCells + x / cell;
      f.values[c * kGradBins + b0] += weight * g.mag[k] * (1 - frac);
      f.values[c * kGradBins + (b0 + 1) % kGradBins] += weight * g.mag[k] * frac;
    }
  }
  l2_normalize(f.values);
  for (double& v : f.values) v = std::min(v, 0.2);
  l2_normalize(f.values);
  return f;
}

FeatureVector raw(std::span<const double> patch) {
  if (patch.empty()) throw Error("raw: empty patch");
  FeatureVector f{DescriptorKind::Raw, std::vector<double>(patch.begin(), patch.end())};
  double mean = 0;
  for (double v : f.values) mean += v;
  mean /= static_cast<double>(f.values.size());
  double ss = 0;
  for (double& v : f.values) {
    v -= mean;
    ss += v * v;
  }
  const double norm = std::sqrt(ss);
  if (norm < 1e-12) {
    std::fill(f.values.begin(), f.values.end(), 0.0);
    return f;
  }
  for (double& v : f.values) v /= norm;
  return f;
}

FeatureVector describe_patch(DescriptorKind kind, std::span<const double> patch, int patch_size) {
  switch (kind) {
    case DescriptorKind::Hog: return hog(patch, patch_size);
    case DescriptorKind::DenseGrad: return dense_grad(patch, patch_size);
    case DescriptorKind::Raw:
      if (patch.size() != static_cast<std::size_t>(patch_size) * patch_size)
        throw Error("descriptor: patch length does not match patch size");
      return raw(patch);
  }
  throw Error("unknown descriptor kind");
}

std::vector<FeatureVector> describe_image(const GrayImage& img, const PatchGrid& grid, DescriptorKind kind) {
  std::vector<FeatureVector> out;
  out.reserve(static_cast<std::size_t>(grid.size()));
  for (int i = 0; i < grid.size(); ++i)
    out.push_back(describe_patch(kind, extract_patch(img, grid.ref(i), grid), grid.patch_size()));
  return out;
}

}  // namespace ghfr
