#include "ghfr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "ghfr/error.hpp"

namespace ghfr {

namespace {

float luma(double r, double g, double b) {
  const double v = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

std::string read_pnm_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return token;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path.string() + "'");
  const std::string magic = read_pnm_token(in);
  if (magic != "P5") throw Error("unsupported PNM variant in '" + path.string() + "'");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(read_pnm_token(in));
    h = std::stoi(read_pnm_token(in));
    maxval = std::stoi(read_pnm_token(in));
  } catch (const std::exception&) {
    throw Error("malformed PGM header in '" + path.string() + "'");
  }
  if (w <= 0 || h <= 0) throw Error("zero-dimension image '" + path.string() + "'");
  if (maxval <= 0 || maxval > 65535) throw Error("bad PGM maxval in '" + path.string() + "'");

  GrayImage img(w, h);
  const std::size_t n = img.pixels.size();
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw Error("truncated PGM data in '" + path.string() + "'");
  for (std::size_t k = 0; k < n; ++k) {
    const unsigned v = bytes == 1 ? raw[k] : (unsigned(raw[2 * k]) << 8) | raw[2 * k + 1];
    img.pixels[k] = static_cast<float>(std::min(1.0, double(v) / maxval));
  }
  return img;
}

GrayImage load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw Error("cannot read PNG '" + path.string() + "': " + image.message);
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw Error("zero-dimension image '" + path.string() + "'");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const int channels = color ? 4 : 2;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("cannot decode PNG '" + path.string() + "': " + msg);
  }
  GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t k = 0; k < img.pixels.size(); ++k) {
    const png_byte* px = &buf[k * channels];
    img.pixels[k] = color ? luma(px[0], px[1], px[2]) : static_cast<float>(px[0] / 255.0);
  }
  return img;
}

}  // namespace

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {}

GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path.string() + "'");
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  const auto got = in.gcount();
  in.close();
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (got >= 2 && sig[0] == 'P' && sig[1] == '5') return load_pgm(path);
  throw Error("unsupported image format '" + path.string() + "'");
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t k = 0; k < bytes.size(); ++k)
    bytes[k] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[k], 0.0f, 1.0f) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void quantize_8bit(GrayImage& img) {
  for (auto& p : img.pixels) {
    const long q = std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0);
    p = static_cast<float>(q / 255.0);
  }
}

GrayImage normalize_geometry(const GrayImage& img, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) throw Error("normalize_geometry: target size must be positive");
  if (img.width <= 0 || img.height <= 0) throw Error("normalize_geometry: empty input image");
  if (img.width == target_w && img.height == target_h) return img;

  // Crop window in source pixels, centered, matching the target aspect.
  double crop_w = img.width;
  double crop_h = img.height;
  const double target_aspect = double(target_w) / target_h;
  if (crop_w / crop_h > target_aspect)
    crop_w = crop_h * target_aspect;
  else
    crop_h = crop_w / target_aspect;
  const double off_x = (img.width - crop_w) / 2.0;
  const double off_y = (img.height - crop_h) / 2.0;
  const double sx = crop_w / target_w;
  const double sy = crop_h / target_h;

  GrayImage out(target_w, target_h);
  for (int y = 0; y < target_h; ++y) {
    const double fy = std::clamp(off_y + (y + 0.5) * sy - 0.5, 0.0, double(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < target_w; ++x) {
      const double fx = std::clamp(off_x + (x + 0.5) * sx - 0.5, 0.0, double(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      const double top = (1 - tx) * img.at(x0, y0) + tx * img.at(x1, y0);
      const double bot = (1 - tx) * img.at(x0, y1) + tx * img.at(x1, y1);
      out.at(x, y) = static_cast<float>((1 - ty) * top + ty * bot);
    }
  }
  return out;
}

PatchGrid::PatchGrid(int image_width, int image_height, int patch_size, int step)
    : image_width_(image_width), image_height_(image_height), patch_size_(patch_size), step_(step) {
  if (step <= 0) throw Error("patch grid: step must be positive");
  if (patch_size <= 0) throw Error("patch grid: patch size must be positive");
  if (step > patch_size) throw Error("patch grid: step larger than patch size");
  if (patch_size > image_width || patch_size > image_height)
    throw Error("patch grid: patch larger than image");
  cols_ = (image_width - patch_size) / step + 1;
  rows_ = (image_height - patch_size) / step + 1;

  const int ov = patch_size - step;
  neighbors_.resize(static_cast<std::size_t>(cols_) * rows_);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      const int i = index(c, r);
      if (c + 1 < cols_)
        pairs_.push_back({i, index(c + 1, r), Rect{step, 0, ov, patch_size}, Rect{0, 0, ov, patch_size}});
      if (r + 1 < rows_)
        pairs_.push_back({i, index(c, r + 1), Rect{0, step, patch_size, ov}, Rect{0, 0, patch_size, ov}});
    }
  }
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    neighbors_[pairs_[p].i].push_back({pairs_[p].j, p, OverlapSide::First});
    neighbors_[pairs_[p].j].push_back({pairs_[p].i, p, OverlapSide::Second});
  }
}

PatchRef PatchGrid::ref(int index) const {
  if (index < 0 || index >= size()) throw Error("patch index out of range");
  const int col = index % cols_;
  const int row = index / cols_;
  return {index, col, row, col * step_, row * step_};
}

int PatchGrid::index(int col, int row) const {
  if (col < 0 || col >= cols_ || row < 0 || row >= rows_) throw Error("patch coordinates out of range");
  return row * cols_ + col;
}

const std::vector<Neighbor>& PatchGrid::neighbors(int index) const {
  if (index < 0 || index >= size()) throw Error("patch index out of range");
  return neighbors_[index];
}

PatchGrid build_grid(int width, int height, int patch_size, int step) {
  return PatchGrid(width, height, patch_size, step);
}

std::vector<double> extract_window(const GrayImage& img, int x0, int y0, int patch_size) {
  if (x0 < 0 || y0 < 0 || x0 + patch_size > img.width || y0 + patch_size > img.height)
    throw Error("patch window outside image");
  std::vector<double> out(static_cast<std::size_t>(patch_size) * patch_size);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x) out[static_cast<std::size_t>(y) * patch_size + x] = img.at(x0 + x, y0 + y);
  return out;
}

std::vector<double> extract_patch(const GrayImage& img, const PatchRef& p, const PatchGrid& grid) {
  if (img.width != grid.image_width() || img.height != grid.image_height())
    throw Error("extract_patch: grid does not match image dimensions");
  if (p.index < 0 || p.index >= grid.size()) throw Error("extract_patch: patch out of range");
  return extract_window(img, p.x0, p.y0, grid.patch_size());
}

std::vector<double> overlap_vector(std::span<const double> patch, const AdjacencyPair& pair,
                                   OverlapSide side, int patch_size) {
  if (patch.size() != static_cast<std::size_t>(patch_size) * patch_size)
    throw Error("overlap_vector: patch length does not match patch size");
  const Rect& r = pair.local(side);
  if (r.x < 0 || r.y < 0 || r.x + r.w > patch_size || r.y + r.h > patch_size)
    throw Error("overlap_vector: overlap rectangle outside patch");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(r.area()));
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) out.push_back(patch[static_cast<std::size_t>(y) * patch_size + x]);
  return out;
}

}  // namespace ghfr
