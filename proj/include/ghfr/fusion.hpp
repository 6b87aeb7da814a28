#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ghfr {

struct LabeledScore {
  std::uint64_t pair_id = 0;
  bool intrapersonal = false;
  std::vector<double> scores;
};

/// All intrapersonal vectors plus an equal number of the hardest
/// (highest mean score) interpersonal vectors.
struct TrainingSet {
  std::vector<std::vector<double>> positives;
  std::vector<std::vector<double>> negatives;
  bool negatives_short = false;  // fewer interpersonal pairs than positives
};

TrainingSet select_training_pairs(std::span<const LabeledScore> scores);

enum class FusionMethod { OneClassSvm, Mean };

struct FusionParams {
  FusionMethod method = FusionMethod::OneClassSvm;
  std::optional<double> nu;  // unset: choose from 0.1..0.9 using the negatives
  double tol = 1e-6;
  int max_iter = 10000;
};

struct FusionModel {
  std::vector<std::string> ordering;  // metric labels, training order
  std::vector<double> weights;
  double rho = 0.0;
  double nu = 0.5;
  FusionMethod method = FusionMethod::OneClassSvm;
};

/// Linear nu-one-class SVM on the positives, solved in the dual
///   min 1/2 a'Ga  s.t.  0 <= a_i <= 1/(nu n), sum a = 1
/// by projected gradient; w = sum a_i x_i.
FusionModel train(const FusionParams& params, const TrainingSet& set, std::vector<std::string> ordering);

/// Equal-weight average of the metric scores.
FusionModel mean_model(std::vector<std::string> ordering);

/// Decision value w's - rho.
double fuse(const FusionModel& model, std::span<const double> scores);

void save_model(const std::filesystem::path& path, const FusionModel& model);
FusionModel load_model(const std::filesystem::path& path);

}  // namespace ghfr
