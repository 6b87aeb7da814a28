#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ghfr {

/// Row-major grayscale image with intensities in [0,1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);

  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Loads an 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or a binary
/// PGM (P5). Color is reduced with the ITU-R 601 luma weights.
GrayImage load_image(const std::filesystem::path& path);

/// Writes an 8-bit binary PGM; intensities are clamped and rounded.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

/// Quantizes every pixel to the nearest k/255 level, the exact set of
/// values an 8-bit file round-trips.
void quantize_8bit(GrayImage& img);

/// Center-crops to the target aspect ratio, then bilinearly resamples to
/// target_w x target_h (pixel-center aligned).
GrayImage normalize_geometry(const GrayImage& img, int target_w, int target_h);

struct PatchRef {
  int index = 0;
  int col = 0;
  int row = 0;
  int x0 = 0;
  int y0 = 0;
};

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  int area() const { return w * h; }
};

enum class OverlapSide { First, Second };

/// Two 4-connected grid neighbors (i < j) and the shared rectangle expressed
/// in each patch's local frame.
struct AdjacencyPair {
  int i = 0;
  int j = 0;
  Rect first_local;
  Rect second_local;

  const Rect& local(OverlapSide side) const {
    return side == OverlapSide::First ? first_local : second_local;
  }
};

/// A neighbor of a patch: the other index, the pair, and which side of the
/// pair the patch itself occupies.
struct Neighbor {
  int other = 0;
  std::size_t pair = 0;
  OverlapSide side = OverlapSide::First;
};

class PatchGrid {
 public:
  PatchGrid(int image_width, int image_height, int patch_size, int step);

  int image_width() const { return image_width_; }
  int image_height() const { return image_height_; }
  int patch_size() const { return patch_size_; }
  int step() const { return step_; }
  int cols() const { return cols_; }
  int rows() const { return rows_; }
  int size() const { return cols_ * rows_; }

  PatchRef ref(int index) const;
  int index(int col, int row) const;

  const std::vector<AdjacencyPair>& adjacency() const { return pairs_; }
  const std::vector<Neighbor>& neighbors(int index) const;

  friend bool operator==(const PatchGrid& a, const PatchGrid& b) {
    return a.image_width_ == b.image_width_ && a.image_height_ == b.image_height_ &&
           a.patch_size_ == b.patch_size_ && a.step_ == b.step_;
  }

 private:
  int image_width_;
  int image_height_;
  int patch_size_;
  int step_;
  int cols_;
  int rows_;
  std::vector<AdjacencyPair> pairs_;
  std::vector<std::vector<Neighbor>> neighbors_;
};

PatchGrid build_grid(int width, int height, int patch_size, int step);

/// Row-major copy of a patch_size x patch_size window with top-left (x0, y0).
std::vector<double> extract_window(const GrayImage& img, int x0, int y0, int patch_size);

std::vector<double> extract_patch(const GrayImage& img, const PatchRef& p, const PatchGrid& grid);

/// Restriction of a patch to the overlap rectangle of `pair`, row-major in
/// the rectangle so both sides of the pair enumerate the same pixels.
std::vector<double> overlap_vector(std::span<const double> patch, const AdjacencyPair& pair,
                                   OverlapSide side, int patch_size);

}  // namespace ghfr
