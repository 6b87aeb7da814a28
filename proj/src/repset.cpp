#include "ghfr/repset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ghfr/binary_io.hpp"
#include "ghfr/error.hpp"
#include "ghfr/parallel.hpp"

namespace ghfr {

namespace {

constexpr std::uint16_t kRepsetVersion = 1;

int modality_index(Modality m) { return m == Modality::A ? 0 : 1; }

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::A ? "A" : "B"; }

Modality parse_modality(std::string_view name) {
  if (name == "A" || name == "a") return Modality::A;
  if (name == "B" || name == "b") return Modality::B;
  throw Error("unknown modality '" + std::string(name) + "' (expected A or B)");
}

std::vector<int> search_offsets(const SearchOptions& opts) {
  if (opts.region < 0 || opts.region % 2 != 0) throw Error("search region must be even and non-negative");
  if (opts.stride <= 0) throw Error("search stride must be positive");
  const int half = opts.region / 2;
  std::vector<int> out;
  for (int k = -(half / opts.stride); k * opts.stride < half; ++k)
    if (k * opts.stride >= -half) out.push_back(k * opts.stride);
  if (std::find(out.begin(), out.end(), 0) == out.end()) {
    out.push_back(0);
    std::sort(out.begin(), out.end());
  }
  return out;
}

RepresentationSet::RepresentationSet(PatchGrid grid, std::vector<DescriptorKind> kinds,
                                     std::vector<std::string> ids, std::vector<GrayImage> images_a,
                                     std::vector<GrayImage> images_b, int jobs)
    : grid_(grid), kinds_(std::move(kinds)), ids_(std::move(ids)) {
  if (ids_.empty()) throw Error("representation set: no image pairs");
  if (images_a.size() != ids_.size() || images_b.size() != ids_.size())
    throw Error("representation set: both modalities need exactly M images");
  if (kinds_.empty()) throw Error("representation set: no descriptor kinds");
  for (const auto* imgs : {&images_a, &images_b})
    for (const auto& img : *imgs)
      if (img.width != grid_.image_width() || img.height != grid_.image_height())
        throw Error("representation set: image does not match grid geometry");
  images_[0] = std::move(images_a);
  images_[1] = std::move(images_b);
  compute_maps(jobs);
}

void RepresentationSet::compute_maps(int jobs) {
  const int ps = grid_.patch_size();
  const int nx = grid_.image_width() - ps + 1;
  const int ny = grid_.image_height() - ps + 1;
  const std::size_t npos = static_cast<std::size_t>(nx) * ny;
  const std::size_t M = ids_.size();
  for (int m = 0; m < 2; ++m) {
    maps_[m].clear();
    for (DescriptorKind kind : kinds_) {
      FeatureMap fm;
      fm.kind = kind;
      fm.dim = descriptor_dim(kind, ps);
      fm.values.resize(M * npos * fm.dim);
      maps_[m].push_back(std::move(fm));
    }
    parallel_for(M, jobs, [&](std::size_t z) {
      const GrayImage& img = images_[m][z];
      for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
          const auto patch = extract_window(img, x, y, ps);
          for (auto& fm : maps_[m]) {
            const FeatureVector f = describe_patch(fm.kind, patch, ps);
            float* dst = &fm.values[(z * npos + static_cast<std::size_t>(y) * nx + x) * fm.dim];
            for (int d = 0; d < fm.dim; ++d) dst[d] = static_cast<float>(f.values[d]);
          }
        }
      }
    });
  }
}

bool RepresentationSet::has_kind(DescriptorKind kind) const {
  return std::find(kinds_.begin(), kinds_.end(), kind) != kinds_.end();
}

const GrayImage& RepresentationSet::image(Modality m, std::size_t z) const {
  return images_[modality_index(m)].at(z);
}

const RepresentationSet::FeatureMap& RepresentationSet::map(Modality m, DescriptorKind kind) const {
  for (const auto& fm : maps_[modality_index(m)])
    if (fm.kind == kind) return fm;
  throw Error("representation set has no '" + std::string(to_string(kind)) + "' features");
}

std::span<const float> RepresentationSet::feature(Modality m, DescriptorKind kind, std::size_t z, int x,
                                                  int y) const {
  const FeatureMap& fm = map(m, kind);
  const int nx = grid_.image_width() - grid_.patch_size() + 1;
  const int ny = grid_.image_height() - grid_.patch_size() + 1;
  if (z >= ids_.size() || x < 0 || y < 0 || x >= nx || y >= ny) throw Error("feature position out of range");
  const std::size_t npos = static_cast<std::size_t>(nx) * ny;
  return {&fm.values[(z * npos + static_cast<std::size_t>(y) * nx + x) * fm.dim],
          static_cast<std::size_t>(fm.dim)};
}

void RepresentationSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write representation set '" + path.string() + "'");
  io::write_bytes(out, "GHFR", 4);
  io::write_le<std::uint16_t>(out, kRepsetVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ids_.size()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid_.image_width()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid_.image_height()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid_.patch_size()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid_.step()));
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(kinds_.size()));
  for (DescriptorKind k : kinds_) io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(k));
  for (const auto& id : ids_) io::write_string(out, id);
  for (int m = 0; m < 2; ++m)
    for (const auto& img : images_[m]) io::write_f32_array(out, img.pixels);
  for (int m = 0; m < 2; ++m) {
    for (const auto& fm : maps_[m]) {
      io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(fm.dim));
      io::write_f32_array(out, fm.values);
    }
  }
  if (!out) throw Error("failed writing representation set '" + path.string() + "'");
}

RepresentationSet RepresentationSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open representation set '" + path.string() + "'");
  try {
    io::expect_magic(in, "GHFR", "representation set");
    const auto version = io::read_le<std::uint16_t>(in);
    if (version != kRepsetVersion) throw Error("unsupported representation set version " + std::to_string(version));
    const auto M = io::read_le<std::uint32_t>(in);
    const auto w = static_cast<int>(io::read_le<std::uint32_t>(in));
    const auto h = static_cast<int>(io::read_le<std::uint32_t>(in));
    const auto ps = static_cast<int>(io::read_le<std::uint32_t>(in));
    const auto step = static_cast<int>(io::read_le<std::uint32_t>(in));
    RepresentationSet rs(PatchGrid(w, h, ps, step));
    const auto nkinds = io::read_le<std::uint8_t>(in);
    for (int k = 0; k < nkinds; ++k) {
      const auto code = io::read_le<std::uint8_t>(in);
      if (code > 2) throw Error("unknown descriptor code");
      rs.kinds_.push_back(static_cast<DescriptorKind>(code));
    }
    if (M == 0 || rs.kinds_.empty()) throw Error("empty representation set");
    for (std::uint32_t z = 0; z < M; ++z) rs.ids_.push_back(io::read_string(in));
    for (int m = 0; m < 2; ++m) {
      for (std::uint32_t z = 0; z < M; ++z) {
        GrayImage img(w, h);
        io::read_f32_array(in, img.pixels);
        rs.images_[m].push_back(std::move(img));
      }
    }
    const std::size_t npos = static_cast<std::size_t>(w - ps + 1) * (h - ps + 1);
    for (int m = 0; m < 2; ++m) {
      for (DescriptorKind kind : rs.kinds_) {
        FeatureMap fm;
        fm.kind = kind;
        fm.dim = static_cast<int>(io::read_le<std::uint32_t>(in));
        if (fm.dim != descriptor_dim(kind, ps)) throw Error("feature dimension mismatch");
        fm.values.resize(M * npos * fm.dim);
        io::read_f32_array(in, fm.values);
        rs.maps_[m].push_back(std::move(fm));
      }
    }
    return rs;
  } catch (const Error& e) {
    throw Error("representation set '" + path.string() + "': " + e.what());
  }
}

RepresentationSet build_repset(std::span<const ImagePair> pairs, const PatchGrid& grid,
                               std::span<const DescriptorKind> kinds, int jobs) {
  if (pairs.empty()) throw Error("build_repset: no image pairs (M = 0)");
  std::vector<std::string> ids;
  std::vector<GrayImage> a, b;
  for (const auto& p : pairs) {
    ids.push_back(p.id);
    a.push_back(normalize_geometry(p.a, grid.image_width(), grid.image_height()));
    b.push_back(normalize_geometry(p.b, grid.image_width(), grid.image_height()));
  }
  return RepresentationSet(grid, {kinds.begin(), kinds.end()}, std::move(ids), std::move(a), std::move(b), jobs);
}

std::vector<float> quantize_feature(const FeatureVector& f) {
  std::vector<float> q(f.values.size());
  for (std::size_t d = 0; d < q.size(); ++d) q[d] = static_cast<float>(f.values[d]);
  return q;
}

std::vector<SourceHit> nearest_sources(const RepresentationSet& rs, Modality m, DescriptorKind kind, int patch,
                                       std::span<const float> query, std::size_t K, const SearchOptions& opts) {
  const PatchGrid& grid = rs.grid();
  if (K == 0) throw Error("search: K must be at least 1");
  if (K > rs.size())
    throw Error("search: K = " + std::to_string(K) + " exceeds representation size M = " +
                std::to_string(rs.size()));
  const PatchRef ref = grid.ref(patch);
  const std::size_t dim = static_cast<std::size_t>(descriptor_dim(kind, grid.patch_size()));
  if (query.size() != dim) throw Error("search: query dimension does not match descriptor kind");

  const auto offsets = search_offsets(opts);
  const int max_x = grid.image_width() - grid.patch_size();
  const int max_y = grid.image_height() - grid.patch_size();
  std::vector<std::pair<int, int>> positions;  // clamped absolute window corners
  for (int dy : offsets)
    for (int dx : offsets)
      positions.emplace_back(std::clamp(ref.x0 + dx, 0, max_x), std::clamp(ref.y0 + dy, 0, max_y));

  std::vector<SourceHit> best(rs.size());
  for (std::size_t z = 0; z < rs.size(); ++z) {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::pair<int, int> best_pos = positions.front();
    for (const auto& pos : positions) {
      const auto f = rs.feature(m, kind, z, pos.first, pos.second);
      double d2 = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = double(f[d]) - double(query[d]);
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best_pos = pos;
      }
    }
    best[z] = {static_cast<std::uint32_t>(z), best_pos.first - ref.x0, best_pos.second - ref.y0, std::sqrt(best_d2)};
  }
  std::sort(best.begin(), best.end(), [](const SourceHit& a, const SourceHit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.source < b.source;
  });
  best.resize(K);
  return best;
}

CandidateSet search_candidates(const RepresentationSet& rs, Modality m, int patch, const FeatureVector& query,
                               std::size_t K, const SearchOptions& opts) {
  const auto q = quantize_feature(query);
  const auto hits = nearest_sources(rs, m, query.kind, patch, q, K, opts);
  const PatchGrid& grid = rs.grid();
  const PatchRef ref = grid.ref(patch);
  CandidateSet out{patch, m, {}};
  out.candidates.reserve(hits.size());
  for (const auto& h : hits) {
    Candidate c;
    c.source = h.source;
    c.dx = h.dx;
    c.dy = h.dy;
    c.distance = h.distance;
    const auto f = rs.feature(m, query.kind, h.source, ref.x0 + h.dx, ref.y0 + h.dy);
    c.feature = {query.kind, std::vector<double>(f.begin(), f.end())};
    c.intensities = extract_window(rs.image(m, h.source), ref.x0 + h.dx, ref.y0 + h.dy, grid.patch_size());
    out.candidates.push_back(std::move(c));
  }
  return out;
}

std::vector<double> candidate_overlap(const Candidate& c, const AdjacencyPair& pair, OverlapSide side,
                                      int patch_size) {
  return overlap_vector(c.intensities, pair, side, patch_size);
}

}  // namespace ghfr
