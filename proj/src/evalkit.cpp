#include "ghfr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ghfr/error.hpp"
#include "ghfr/parallel.hpp"
#include "ghfr/rng.hpp"

namespace ghfr {

void MatchMatrix::validate() const {
  if (probe_labels.empty()) throw Error("match matrix has no probes");
  if (gallery_labels.empty()) throw Error("match matrix has an empty gallery");
  if (scores.size() != probes() * gallery()) throw Error("match matrix score count does not match its labels");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error("match matrix contains a non-finite score");
}

int rank_of_mate(std::span<const double> row, std::span<const std::string> labels, const std::string& mate) {
  if (row.size() != labels.size()) throw Error("rank_of_mate: row and labels differ in length");
  bool found = false;
  double best = 0.0;
  for (std::size_t g = 0; g < row.size(); ++g) {
    if (labels[g] != mate) continue;
    best = found ? std::max(best, row[g]) : row[g];
    found = true;
  }
  if (!found) throw Error("rank_of_mate: no gallery entry for identity '" + mate + "'");
  int rank = 1;
  for (std::size_t g = 0; g < row.size(); ++g)
    if (labels[g] != mate && row[g] >= best) ++rank;
  return rank;
}

std::vector<int> mate_ranks(const MatchMatrix& mm, int jobs) {
  mm.validate();
  std::vector<int> ranks(mm.probes());
  parallel_for(mm.probes(), jobs,
               [&](std::size_t p) { ranks[p] = rank_of_mate(mm.row(p), mm.gallery_labels, mm.probe_labels[p]); });
  return ranks;
}

double CmcCurve::at(int rank) const {
  if (rates.empty()) throw Error("empty CMC curve");
  if (rank < 1) throw Error("CMC rank must be >= 1");
  return rates[std::min<std::size_t>(static_cast<std::size_t>(rank), rates.size()) - 1];
}

CmcCurve cmc_from_ranks(std::span<const int> ranks, std::size_t gallery_size) {
  if (ranks.empty() || gallery_size == 0) throw Error("cmc: empty match matrix");
  std::vector<std::size_t> hist(gallery_size + 1, 0);
  for (int r : ranks) {
    if (r < 1 || static_cast<std::size_t>(r) > gallery_size) throw Error("cmc: rank out of range");
    ++hist[static_cast<std::size_t>(r)];
  }
  CmcCurve c;
  c.rates.resize(gallery_size);
  std::size_t cum = 0;
  for (std::size_t r = 1; r <= gallery_size; ++r) {
    cum += hist[r];
    c.rates[r - 1] = static_cast<double>(cum) / static_cast<double>(ranks.size());
  }
  return c;
}

CmcCurve cmc(const MatchMatrix& mm, int jobs) {
  const auto ranks = mate_ranks(mm, jobs);
  return cmc_from_ranks(ranks, mm.gallery());
}

double vr_at_far(std::span<const double> genuine, std::span<const double> impostor, double far) {
  if (genuine.empty() || impostor.empty()) throw Error("vr_at_far: empty score list");
  if (!(far > 0.0 && far < 1.0)) throw Error("vr_at_far: far must lie in (0,1)");
  std::vector<double> imp(impostor.begin(), impostor.end());
  std::sort(imp.begin(), imp.end());
  const double allowed = far * static_cast<double>(imp.size()) + 1e-9;
  double threshold = std::nextafter(imp.back(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < imp.size(); ++k) {
    if (k > 0 && imp[k] == imp[k - 1]) continue;
    if (static_cast<double>(imp.size() - k) <= allowed) {
      threshold = imp[k];
      break;
    }
  }
  std::size_t accepted = 0;
  for (double g : genuine)
    if (g >= threshold) ++accepted;
  return static_cast<double>(accepted) / static_cast<double>(genuine.size());
}

VerificationScores verification_scores(const MatchMatrix& mm) {
  mm.validate();
  VerificationScores v;
  for (std::size_t p = 0; p < mm.probes(); ++p)
    for (std::size_t g = 0; g < mm.gallery(); ++g)
      (mm.probe_labels[p] == mm.gallery_labels[g] ? v.genuine : v.impostor).push_back(mm.scores[p * mm.gallery() + g]);
  return v;
}

MatchMatrix populate_gallery(const MatchMatrix& mm, std::span<const std::string> labels,
                             std::span<const double> scores) {
  mm.validate();
  if (scores.size() != mm.probes() * labels.size())
    throw Error("populate_gallery: distractor score count does not match probes x distractors");
  const std::set<std::string> probe_ids(mm.probe_labels.begin(), mm.probe_labels.end());
  for (const auto& l : labels)
    if (probe_ids.count(l)) throw Error("populate_gallery: distractor identity '" + l + "' collides with a probe");
  MatchMatrix out;
  out.probe_labels = mm.probe_labels;
  out.gallery_labels = mm.gallery_labels;
  out.gallery_labels.insert(out.gallery_labels.end(), labels.begin(), labels.end());
  out.scores.reserve(mm.probes() * out.gallery());
  for (std::size_t p = 0; p < mm.probes(); ++p) {
    const auto r = mm.row(p);
    out.scores.insert(out.scores.end(), r.begin(), r.end());
    out.scores.insert(out.scores.end(), scores.begin() + p * labels.size(), scores.begin() + (p + 1) * labels.size());
  }
  out.validate();
  return out;
}

EvalMetrics evaluate(const MatchMatrix& mm, std::span<const int> ranks, double far, int jobs) {
  EvalMetrics m;
  m.curve = cmc(mm, jobs);
  for (int r : ranks) m.rank_accuracy[r] = m.curve.at(r);
  m.far = far;
  const auto v = verification_scores(mm);
  m.vr = (v.genuine.empty() || v.impostor.empty()) ? 0.0 : vr_at_far(v.genuine, v.impostor, far);
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_tsv(const std::filesystem::path& path, const EvalMetrics& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "metric\tvalue\n";
  for (const auto& [r, acc] : m.rank_accuracy) out << "rank" << r << '\t' << fmt(acc) << '\n';
  out << "vr_at_far\t" << fmt(m.vr) << '\n';
  out << "far\t" << fmt(m.far) << '\n';
}

void write_metrics_json(const std::filesystem::path& path, const EvalMetrics& m) {
  nlohmann::ordered_json j;
  for (const auto& [r, acc] : m.rank_accuracy) j["rank" + std::to_string(r)] = acc;
  j["far"] = m.far;
  j["vr_at_far"] = m.vr;
  j["gallery_size"] = m.curve.rates.size();
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void write_cmc(const std::filesystem::path& path, const CmcCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (std::size_t r = 0; r < curve.rates.size(); ++r) out << r + 1 << '\t' << fmt(curve.rates[r]) << '\n';
}

Partition random_partition(std::span<const std::string> ids, const SplitSizes& sizes, std::uint64_t seed) {
  const std::size_t need = sizes.representation + sizes.train + sizes.test;
  if (need > ids.size())
    throw Error("split sizes (" + std::to_string(need) + ") exceed the dataset (" + std::to_string(ids.size()) + ")");
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng(seed).shuffle(order);
  Partition p;
  auto it = order.begin();
  p.representation.assign(it, it + sizes.representation);
  it += sizes.representation;
  p.train.assign(it, it + sizes.train);
  it += sizes.train;
  p.test.assign(it, it + sizes.test);
  return p;
}

SplitReport run_split_protocol(std::span<const std::string> ids, std::uint64_t seed, const SplitSizes& sizes,
                               int repeats, const std::function<Metrics(const Partition&)>& evaluator) {
  if (repeats < 1) throw Error("run_split_protocol: repeats must be >= 1");
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
    throw Error("run_split_protocol: duplicate identity ids");
  Rng seeds(seed);
  SplitReport report;
  for (int r = 0; r < repeats; ++r) report.repeats.push_back(evaluator(random_partition(ids, sizes, seeds.bits())));
  for (const auto& row : report.repeats)
    for (const auto& [k, v] : row) report.mean[k] += v / repeats;
  return report;
}

}  // namespace ghfr
