#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ghfr {

/// Fused scores of every probe against every gallery entry, with the
/// identity label of each row and column.
struct MatchMatrix {
  std::vector<std::string> probe_labels;
  std::vector<std::string> gallery_labels;
  std::vector<double> scores;  // row-major, probes x gallery

  std::size_t probes() const { return probe_labels.size(); }
  std::size_t gallery() const { return gallery_labels.size(); }
  std::span<const double> row(std::size_t p) const { return {scores.data() + p * gallery(), gallery()}; }
  void validate() const;
};

/// 1 + number of non-mates scoring at least as high as the best mate entry.
int rank_of_mate(std::span<const double> row, std::span<const std::string> labels, const std::string& mate);

std::vector<int> mate_ranks(const MatchMatrix& mm, int jobs = 1);

/// rates[r-1] = fraction of probes with mate rank <= r, r = 1..gallery size.
struct CmcCurve {
  std::vector<double> rates;
  double at(int rank) const;
};

CmcCurve cmc(const MatchMatrix& mm, int jobs = 1);
CmcCurve cmc_from_ranks(std::span<const int> ranks, std::size_t gallery_size);

/// Threshold: the smallest score t with #(impostor >= t) <= far * |impostor|;
/// returns the fraction of genuine scores >= t.
double vr_at_far(std::span<const double> genuine, std::span<const double> impostor, double far);

/// All probe/gallery cells split by label equality.
struct VerificationScores {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

VerificationScores verification_scores(const MatchMatrix& mm);

/// Appends distractor columns. `scores` is probes x labels.size(), row-major.
MatchMatrix populate_gallery(const MatchMatrix& mm, std::span<const std::string> labels,
                             std::span<const double> scores);

struct EvalMetrics {
  std::map<int, double> rank_accuracy;
  double far = 0.001;
  double vr = 0.0;
  CmcCurve curve;
};

EvalMetrics evaluate(const MatchMatrix& mm, std::span<const int> ranks, double far, int jobs = 1);

/// One row per metric ("rank1", "rank10", "vr_at_far").
void write_metrics_tsv(const std::filesystem::path& path, const EvalMetrics& m);
void write_metrics_json(const std::filesystem::path& path, const EvalMetrics& m);
void write_cmc(const std::filesystem::path& path, const CmcCurve& curve);

struct SplitSizes {
  std::size_t representation = 30;
  std::size_t train = 30;
  std::size_t test = 40;
};

struct Partition {
  std::vector<std::string> representation;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded shuffle of `ids` cut into three disjoint blocks.
Partition random_partition(std::span<const std::string> ids, const SplitSizes& sizes, std::uint64_t seed);

using Metrics = std::map<std::string, double>;

struct SplitReport {
  std::vector<Metrics> repeats;
  Metrics mean;
};

/// Runs `evaluator` on `repeats` seeded partitions and averages the results.
SplitReport run_split_protocol(std::span<const std::string> ids, std::uint64_t seed, const SplitSizes& sizes,
                               int repeats, const std::function<Metrics(const Partition&)>& evaluator);

}  // namespace ghfr
