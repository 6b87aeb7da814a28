#include "ghfr/crsm.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ghfr/error.hpp"

namespace ghfr {

std::string metric_label(const MetricKey& key) {
  return std::string(to_string(key.kind)) + "_K" + std::to_string(key.K);
}

MetricKey parse_metric_label(const std::string& label) {
  const auto pos = label.rfind("_K");
  if (pos == std::string::npos) throw Error("bad metric label '" + label + "'");
  MetricKey key;
  key.kind = parse_descriptor_kind(label.substr(0, pos));
  try {
    std::size_t used = 0;
    key.K = std::stoi(label.substr(pos + 2), &used);
    if (used != label.size() - pos - 2) throw Error("");
  } catch (const std::exception&) {
    throw Error("bad metric label '" + label + "'");
  }
  if (key.K < 1) throw Error("bad metric label '" + label + "'");
  return key;
}

std::vector<MetricKey> metric_keys(std::span<const DescriptorKind> kinds, std::span<const int> Ks) {
  std::vector<int> sorted(Ks.begin(), Ks.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<MetricKey> keys;
  for (DescriptorKind kind : kinds)
    for (int K : sorted) keys.push_back({kind, K});
  return keys;
}

double patch_similarity(const SparseVector& wy, const SparseVector& wx) {
  double sum = 0.0;
  auto a = wy.begin();
  auto b = wx.begin();
  while (a != wy.end() && b != wx.end()) {
    if (a->index < b->index) {
      ++a;
    } else if (b->index < a->index) {
      ++b;
    } else {
      if (a->weight > kSupportThreshold && b->weight > kSupportThreshold)
        sum += double(a->weight) + double(b->weight);
      ++a;
      ++b;
    }
  }
  return std::clamp(0.5 * sum, 0.0, 1.0);
}

namespace {

void check_pair(const SparseRepresentation& ry, const SparseRepresentation& rx) {
  if (ry.M != rx.M) throw Error("similarity: representations index different set sizes M");
  if (ry.patches.size() != rx.patches.size()) throw Error("similarity: patch counts differ");
  if (ry.patches.empty()) throw Error("similarity: empty representation");
}

}  // namespace

SimilarityMap similarity_map(const SparseRepresentation& ry, const SparseRepresentation& rx, const PatchGrid& grid) {
  check_pair(ry, rx);
  if (ry.patches.size() != static_cast<std::size_t>(grid.size()))
    throw Error("similarity: representation does not match grid size");
  SimilarityMap map;
  map.cols = grid.cols();
  map.rows = grid.rows();
  map.scores.resize(ry.patches.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < ry.patches.size(); ++i) {
    map.scores[i] = patch_similarity(ry.patches[i], rx.patches[i]);
    sum += map.scores[i];
  }
  map.score = sum / static_cast<double>(map.scores.size());
  return map;
}

double image_similarity(const SparseRepresentation& ry, const SparseRepresentation& rx) {
  check_pair(ry, rx);
  double sum = 0.0;
  for (std::size_t i = 0; i < ry.patches.size(); ++i) sum += patch_similarity(ry.patches[i], rx.patches[i]);
  return sum / static_cast<double>(ry.patches.size());
}

BinaryMap binarize_map(const SimilarityMap& map, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw Error("binarize_map: threshold must lie in [0,1]");
  BinaryMap out{map.cols, map.rows, std::vector<std::uint8_t>(map.scores.size())};
  for (std::size_t i = 0; i < map.scores.size(); ++i) out.bright[i] = map.scores[i] > threshold ? 1 : 0;
  return out;
}

namespace {

template <typename Value>
GrayImage render_cells(int cols, int rows, std::size_t count, const PatchGrid& grid, Value value) {
  if (cols != grid.cols() || rows != grid.rows() || count != static_cast<std::size_t>(grid.size()))
    throw Error("render_map: map does not match grid");
  GrayImage img(grid.image_width(), grid.image_height());
  for (int y = 0; y < img.height; ++y) {
    const int r = std::min(y / grid.step(), rows - 1);
    for (int x = 0; x < img.width; ++x) {
      const int c = std::min(x / grid.step(), cols - 1);
      img.at(x, y) = static_cast<float>(value(static_cast<std::size_t>(r) * cols + c));
    }
  }
  return img;
}

}  // namespace

GrayImage render_map(const SimilarityMap& map, const PatchGrid& grid) {
  return render_cells(map.cols, map.rows, map.scores.size(), grid, [&](std::size_t i) { return map.scores[i]; });
}

GrayImage render_map(const BinaryMap& map, const PatchGrid& grid) {
  return render_cells(map.cols, map.rows, map.bright.size(), grid,
                      [&](std::size_t i) { return map.bright[i] ? 1.0 : 0.0; });
}

std::vector<double> score_vector(const RepresentationBundle& probe, const RepresentationBundle& gallery,
                                 std::span<const MetricKey> keys) {
  std::vector<double> out;
  out.reserve(keys.size());
  for (const auto& key : keys) {
    const auto p = probe.find(key);
    const auto g = gallery.find(key);
    if (p == probe.end() || g == gallery.end())
      throw Error("score_vector: missing representation for " + metric_label(key));
    out.push_back(image_similarity(p->second, g->second));
  }
  return out;
}

void write_score_table(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write score table '" + path.string() + "'");
  out << "probe_id\tgallery_id";
  for (const auto& k : table.keys) out << '\t' << metric_label(k);
  out << '\n';
  char buf[32];
  for (const auto& row : table.rows) {
    if (row.values.size() != table.keys.size()) throw Error("score table row has wrong width");
    out << row.probe_id << '\t' << row.gallery_id;
    for (double v : row.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing score table '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

ScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open score table '" + path.string() + "'");
  ScoreTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error("score table '" + path.string() + "' is empty");
  const auto header = split_tabs(line);
  if (header.size() < 3 || header[0] != "probe_id" || header[1] != "gallery_id")
    throw Error("score table '" + path.string() + "' has a malformed header");
  for (std::size_t c = 2; c < header.size(); ++c) table.keys.push_back(parse_metric_label(header[c]));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size())
      throw Error("score table '" + path.string() + "' line " + std::to_string(lineno) + ": wrong column count");
    ScoreRow row{fields[0], fields[1], {}};
    for (std::size_t c = 2; c < fields.size(); ++c) {
      try {
        row.values.push_back(std::stod(fields[c]));
      } catch (const std::exception&) {
        throw Error("score table '" + path.string() + "' line " + std::to_string(lineno) + ": bad number");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace ghfr
