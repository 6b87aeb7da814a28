#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ghfr/config.hpp"
#include "ghfr/crsm.hpp"
#include "ghfr/evalkit.hpp"
#include "ghfr/fusion.hpp"
#include "ghfr/repset.hpp"

namespace ghfr {

/// Solves every configured (kind, K) representation of an image against one
/// representation set. The problems are built once per kind at the largest
/// K; smaller K reuse the leading candidates.
class Representer {
 public:
  Representer(const RepresentationSet& rs, const PipelineConfig& cfg);

  const std::vector<MetricKey>& keys() const { return keys_; }
  RepresentationBundle represent(const GrayImage& img, Modality m) const;

 private:
  const RepresentationSet& rs_;
  PipelineConfig cfg_;
  std::vector<int> Ks_;
  std::vector<MetricKey> keys_;
};

std::vector<RepresentationBundle> represent_all(const Representer& rep, std::span<const GrayImage> images,
                                                Modality m, int jobs);

/// Every probe against every gallery entry, probe-major.
ScoreTable score_all_pairs(std::span<const std::string> probe_ids, std::span<const RepresentationBundle> probes,
                           std::span<const std::string> gallery_ids, std::span<const RepresentationBundle> gallery,
                           std::span<const MetricKey> keys, int jobs);

using LabelMap = std::map<std::string, std::string>;  // image id -> identity

LabelMap read_labels(const std::filesystem::path& path);

/// Rows of `table` labeled intrapersonal when both ids share an identity;
/// pair_id is the row index.
std::vector<LabeledScore> label_scores(const ScoreTable& table, const LabelMap& labels);

/// Score columns of `table` in the order of `ordering` (metric labels).
std::vector<std::size_t> column_order(const ScoreTable& table, std::span<const std::string> ordering);

/// Arranges a probe x gallery table into a match matrix of fused scores.
/// Probes and gallery entries keep their first-appearance order.
MatchMatrix fused_matrix(const ScoreTable& table, const FusionModel& model, const LabelMap& labels);

/// Same arrangement using a single metric column.
MatchMatrix metric_matrix(const ScoreTable& table, std::size_t column, const LabelMap& labels);

/// Trains the configured fusion; a degenerate one-class problem falls back to
/// the mean model and sets `fell_back`.
FusionModel train_fusion(const PipelineConfig& cfg, const ScoreTable& table, const LabelMap& labels,
                         bool* fell_back = nullptr);

struct SyntheticData {
  std::vector<std::string> ids;
  std::vector<GrayImage> a;
  std::vector<GrayImage> b;
  Partition partition;
  std::vector<std::string> distractor_ids;
  std::vector<GrayImage> distractors;
};

SyntheticData synthesize(const PipelineConfig& cfg, int jobs);

struct PipelineResult {
  std::vector<MetricKey> keys;
  ScoreTable train_scores;
  ScoreTable test_scores;
  ScoreTable distractor_scores;  // test probes x distractors
  FusionModel model;
  bool fusion_fell_back = false;
  MatchMatrix fused;
  EvalMetrics metrics;
  std::vector<double> single_rank1;  // per key, test split
  double genuine_mean = 0.0;         // mean CRSM over metrics and genuine pairs
  double impostor_mean = 0.0;
  std::vector<int> mate_ranks;
  MatchMatrix populated;             // empty without distractors
  EvalMetrics populated_metrics;
  std::vector<int> populated_ranks;
};

/// Representation set, representations, scores, fusion and evaluation for
/// one partition of `data`.
PipelineResult run_pipeline(const PipelineConfig& cfg, const SyntheticData& data, const Partition& partition,
                            int jobs);

/// Flattened headline numbers of a result (rank accuracies, VR, gaps).
Metrics summarize(const PipelineResult& r);

}  // namespace ghfr
