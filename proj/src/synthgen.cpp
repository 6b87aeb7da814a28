#include "ghfr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ghfr/error.hpp"
#include "ghfr/parallel.hpp"
#include "ghfr/rng.hpp"

namespace ghfr {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (identities < 1) throw Error("synth: identities must be >= 1");
  if (width < 20 || height < 20) throw Error("synth: image size must be at least 20x20");
  if (!(sigma1 > 0.0) || !(sigma2 > sigma1)) throw Error("synth: need sigma2 > sigma1 > 0");
  if (!(max_shift >= 0.0 && max_shift <= 10.0)) throw Error("synth: max_shift must lie in [0,10]");
  if (!(noise_sigma >= 0.0 && noise_sigma <= 0.2)) throw Error("synth: noise_sigma must lie in [0,0.2]");
  if (distractors < 0) throw Error("synth: distractors must be >= 0");
  const std::size_t need = splits.representation + splits.train + splits.test;
  if (need > static_cast<std::size_t>(identities))
    throw Error("synth: split sizes (" + std::to_string(need) + ") exceed identities (" +
                std::to_string(identities) + ")");
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t face, std::uint64_t purpose) {
  return mix(mix(mix(seed) ^ face) ^ purpose);
}

constexpr std::uint64_t kDistractorBase = 1ULL << 40;

struct Stroke {
  double cx, cy, rx, ry, angle, tone;
};

struct FaceModel {
  double background;
  double skin;
  Stroke head;
  double hairline;
  double hair_tone;
  double hair_wave_amp, hair_wave_freq, hair_wave_phase;
  std::vector<Stroke> marks;  // eyes, brows, nose, mouth, moles
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> texture;
};

FaceModel sample_face(std::uint64_t seed, std::uint64_t face, int w, int h) {
  Rng r(stream_seed(seed, face, 1));
  const double sx = w / 100.0, sy = h / 125.0;
  FaceModel f;
  f.background = r.uniform(0.1, 0.45);
  f.skin = r.uniform(0.55, 0.85);
  f.head = {50 * sx + r.uniform(-3, 3) * sx, 64 * sy + r.uniform(-3, 3) * sy, r.uniform(31, 40) * sx,
            r.uniform(44, 54) * sy, r.uniform(-0.06, 0.06), f.skin};
  const double cx = f.head.cx, cy = f.head.cy, hb = f.head.ry;
  f.hairline = cy - hb * r.uniform(0.45, 0.75);
  f.hair_tone = r.uniform(0.03, 0.35);
  f.hair_wave_amp = r.uniform(0.0, 5.0) * sy;
  f.hair_wave_freq = r.uniform(0.05, 0.2) / sx;
  f.hair_wave_phase = r.uniform(0, 2 * std::numbers::pi);

  const double eye_y = cy - hb * r.uniform(0.08, 0.25);
  const double eye_dx = r.uniform(11, 19) * sx;
  const double eye_rx = r.uniform(4, 7) * sx, eye_ry = r.uniform(2, 4) * sy;
  const double eye_tone = r.uniform(0.02, 0.3);
  const double eye_tilt = r.uniform(-0.25, 0.25);
  const double brow_gap = r.uniform(5, 10) * sy;
  const double brow_rx = r.uniform(6, 10) * sx, brow_ry = r.uniform(1.2, 2.8) * sy;
  const double brow_tilt = r.uniform(-0.35, 0.35);
  const double brow_tone = r.uniform(0.05, 0.4);
  for (int side : {-1, 1}) {
    f.marks.push_back({cx + side * eye_dx, eye_y, eye_rx, eye_ry, side * eye_tilt, eye_tone});
    f.marks.push_back({cx + side * eye_dx, eye_y - brow_gap, brow_rx, brow_ry, side * brow_tilt, brow_tone});
  }
  const double nose_len = r.uniform(0.2, 0.42) * hb;
  const double nose_w = r.uniform(1.2, 3.2) * sx;
  const double nose_tone = f.skin * r.uniform(0.45, 0.8);
  f.marks.push_back({cx + r.uniform(-1.5, 1.5) * sx, eye_y + nose_len * 0.55, nose_w, nose_len * 0.5,
                     r.uniform(-0.08, 0.08), nose_tone});
  const double nostril_dx = r.uniform(3, 6) * sx;
  const double nose_base = eye_y + nose_len * 1.05;
  for (int side : {-1, 1}) f.marks.push_back({cx + side * nostril_dx, nose_base, 2.0 * sx, 1.3 * sy, 0.0, nose_tone * 0.8});
  const double mouth_y = nose_base + r.uniform(0.12, 0.3) * hb;
  f.marks.push_back({cx + r.uniform(-2, 2) * sx, mouth_y, r.uniform(8, 16) * sx, r.uniform(1.5, 3.8) * sy,
                     r.uniform(-0.12, 0.12), r.uniform(0.1, 0.45)});
  const int moles = static_cast<int>(r.below(4));
  for (int m = 0; m < moles; ++m) {
    const double a = r.uniform(0, 2 * std::numbers::pi), d = std::sqrt(r.uniform(0.05, 0.7));
    const double rad = r.uniform(1.2, 2.5);
    f.marks.push_back({cx + d * f.head.rx * std::cos(a), cy + d * hb * std::sin(a) * 0.8, rad * sx, rad * sy, 0.0,
                       f.skin * r.uniform(0.2, 0.6)});
  }
  for (int k = 0; k < 4; ++k) {
    const double freq = r.uniform(0.04, 0.18), dir = r.uniform(0, std::numbers::pi);
    f.texture.push_back({freq * std::cos(dir), freq * std::sin(dir), r.uniform(0, 2 * std::numbers::pi),
                         r.uniform(0.01, 0.05)});
  }
  return f;
}

// Approximate signed distance (pixels, negative inside) to an oriented ellipse.
double ellipse_distance(const Stroke& s, double x, double y) {
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  const double u = (x - s.cx) * c + (y - s.cy) * sn;
  const double v = -(x - s.cx) * sn + (y - s.cy) * c;
  const double q = std::hypot(u / s.rx, v / s.ry);
  return (q - 1.0) * std::min(s.rx, s.ry);
}

double coverage(double dist) { return std::clamp(0.5 - dist, 0.0, 1.0); }

GrayImage render_face(const FaceModel& f, int w, int h, double shift_x, double shift_y) {
  GrayImage img(w, h);
  for (int yi = 0; yi < h; ++yi) {
    for (int xi = 0; xi < w; ++xi) {
      const double x = xi - shift_x, y = yi - shift_y;
      double v = f.background;
      const double in_head = coverage(ellipse_distance(f.head, x, y));
      if (in_head > 0.0) {
        double skin = f.skin;
        for (const auto& t : f.texture) skin += t.amp * std::sin(t.kx * x + t.ky * y + t.phase);
        double face = skin;
        for (const auto& m : f.marks) {
          const double a = coverage(ellipse_distance(m, x, y));
          face = face * (1.0 - a) + m.tone * a;
        }
        const double line = f.hairline + f.hair_wave_amp * std::sin(f.hair_wave_freq * x + f.hair_wave_phase);
        const double hair = coverage(y - line);
        face = face * (1.0 - hair) + f.hair_tone * hair;
        v = v * (1.0 - in_head) + face * in_head;
      }
      img.at(xi, yi) = static_cast<float>(v);
    }
  }
  return img;
}

void add_noise(GrayImage& img, Rng& r, double sigma) {
  for (auto& p : img.pixels) p = static_cast<float>(std::clamp(p + sigma * r.normal(), 0.0, 1.0));
}

GrayImage face_a(const SynthConfig& cfg, std::uint64_t face) {
  const FaceModel f = sample_face(cfg.seed, face, cfg.width, cfg.height);
  GrayImage img = render_face(f, cfg.width, cfg.height, 0.0, 0.0);
  Rng noise(stream_seed(cfg.seed, face, 2));
  add_noise(img, noise, cfg.noise_sigma);
  quantize_8bit(img);
  return img;
}

}  // namespace

std::string identity_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id%04d", id);
  return buf;
}

std::string distractor_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "x%04d", k);
  return buf;
}

GrayImage generate_identity(const SynthConfig& cfg, int id) {
  cfg.validate();
  if (id < 0 || id >= cfg.identities) throw Error("synth: identity index out of range");
  return face_a(cfg, static_cast<std::uint64_t>(id));
}

GrayImage generate_distractor(const SynthConfig& cfg, int k) {
  cfg.validate();
  if (k < 0) throw Error("synth: distractor index out of range");
  return face_a(cfg, kDistractorBase + static_cast<std::uint64_t>(k));
}

GrayImage generate_modality_b(const SynthConfig& cfg, int id) {
  cfg.validate();
  if (id < 0 || id >= cfg.identities) throw Error("synth: identity index out of range");
  const auto face = static_cast<std::uint64_t>(id);
  const FaceModel f = sample_face(cfg.seed, face, cfg.width, cfg.height);
  Rng r(stream_seed(cfg.seed, face, 3));
  const double dx = r.uniform(-cfg.max_shift, cfg.max_shift);
  const double dy = r.uniform(-cfg.max_shift, cfg.max_shift);
  GrayImage img = render_face(f, cfg.width, cfg.height, dx, dy);
  add_noise(img, r, cfg.noise_sigma);
  GrayImage b = to_modality_b(img, cfg);
  quantize_8bit(b);
  return b;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian_blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int w = img.width, h = img.height;
  std::vector<double> tmp(img.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

GrayImage to_modality_b(const GrayImage& img, const SynthConfig& cfg) {
  if (!(cfg.sigma1 > 0.0) || !(cfg.sigma2 > cfg.sigma1)) throw Error("to_modality_b: need sigma2 > sigma1 > 0");
  const GrayImage g1 = gaussian_blur(img, cfg.sigma1);
  const GrayImage g2 = gaussian_blur(img, cfg.sigma2);
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = std::abs(static_cast<double>(g1.pixels[i]) - g2.pixels[i]);
    v[i] = cfg.invert ? -d : d;
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  GrayImage out(img.width, img.height);
  if (range > 1e-9)
    for (std::size_t i = 0; i < v.size(); ++i) out.pixels[i] = static_cast<float>((v[i] - *lo) / range);
  return out;
}

namespace {

void write_manifest(const fs::path& path, const std::vector<DatasetEntry>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("synth: cannot write '" + path.string() + "'");
  for (const auto& e : rows) {
    out << e.id << '\t' << e.a.generic_string();
    if (!e.b.empty()) out << '\t' << e.b.generic_string();
    out << '\n';
  }
}

std::vector<DatasetEntry> subset(const std::vector<DatasetEntry>& all, const std::vector<std::string>& ids) {
  std::vector<DatasetEntry> out;
  for (const auto& id : ids)
    for (const auto& e : all)
      if (e.id == id) out.push_back(e);
  return out;
}

void write_split_files(const fs::path& out, DatasetManifest& m, std::uint64_t seed, const SplitSizes& sizes) {
  std::vector<std::string> ids;
  for (const auto& e : m.entries) ids.push_back(e.id);
  m.partition = random_partition(ids, sizes, seed);
  write_manifest(out / "manifest.tsv", m.entries);
  std::ofstream splits(out / "splits.tsv");
  for (const auto& id : m.partition.representation) splits << id << "\trepresentation\n";
  for (const auto& id : m.partition.train) splits << id << "\ttrain\n";
  for (const auto& id : m.partition.test) splits << id << "\ttest\n";
  write_manifest(out / "rep.tsv", subset(m.entries, m.partition.representation));
  write_manifest(out / "train.tsv", subset(m.entries, m.partition.train));
  write_manifest(out / "test.tsv", subset(m.entries, m.partition.test));
  std::ofstream labels(out / "labels.tsv");
  for (const auto& e : m.entries) labels << e.id << '\t' << e.id << '\n';
  for (const auto& e : m.distractors) labels << e.id << '\t' << e.id << '\n';
  if (!splits || !labels) throw Error("synth: failed writing split files");
}

}  // namespace

DatasetManifest generate_dataset(const SynthConfig& cfg, const fs::path& out, int jobs) {
  cfg.validate();
  fs::create_directories(out / "A");
  fs::create_directories(out / "B");
  DatasetManifest m;
  m.entries.resize(static_cast<std::size_t>(cfg.identities));
  parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
    const int id = static_cast<int>(i);
    DatasetEntry& e = m.entries[i];
    e.id = identity_name(id);
    e.a = fs::path("A") / (e.id + ".pgm");
    e.b = fs::path("B") / (e.id + ".pgm");
    save_pgm(generate_identity(cfg, id), out / e.a);
    save_pgm(generate_modality_b(cfg, id), out / e.b);
  });
  if (cfg.distractors > 0) {
    fs::create_directories(out / "D");
    m.distractors.resize(static_cast<std::size_t>(cfg.distractors));
    parallel_for(m.distractors.size(), jobs, [&](std::size_t k) {
      DatasetEntry& e = m.distractors[k];
      e.id = distractor_name(static_cast<int>(k));
      e.a = fs::path("D") / (e.id + ".pgm");
      save_pgm(generate_distractor(cfg, static_cast<int>(k)), out / e.a);
    });
    write_manifest(out / "distractors.tsv", m.distractors);
  }
  write_split_files(out, m, cfg.seed, cfg.splits);
  return m;
}

DatasetManifest stylize_directory(const SynthConfig& cfg, const fs::path& dir, const fs::path& out) {
  if (!fs::is_directory(dir)) throw Error("synth: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG"))
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("synth: no PGM/PNG images in '" + dir.string() + "'");
  fs::create_directories(out / "A");
  fs::create_directories(out / "B");
  DatasetManifest m;
  for (const auto& f : files) {
    GrayImage a = normalize_geometry(load_image(f), cfg.width, cfg.height);
    quantize_8bit(a);
    GrayImage b = to_modality_b(a, cfg);
    quantize_8bit(b);
    DatasetEntry e{f.stem().string(), fs::path("A") / (f.stem().string() + ".pgm"),
                   fs::path("B") / (f.stem().string() + ".pgm")};
    save_pgm(a, out / e.a);
    save_pgm(b, out / e.b);
    m.entries.push_back(e);
  }
  SplitSizes sizes = cfg.splits;
  if (sizes.representation + sizes.train + sizes.test > m.entries.size())
    throw Error("synth: split sizes exceed the " + std::to_string(m.entries.size()) + " images found");
  write_split_files(out, m, cfg.seed, sizes);
  return m;
}

}  // namespace ghfr
