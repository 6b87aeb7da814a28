#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ghfr/descriptors.hpp"
#include "ghfr/image.hpp"
#include "ghfr/repset.hpp"

namespace ghfr {

/// alpha is the ratio of the evidence and compatibility variances; the two
/// variances never appear on their own.
struct SolverParams {
  double alpha = 0.025;
  int K = 15;
  int max_sweeps = 30;
  double tol = 1e-6;
  int region = 16;
  int stride = 2;

  void validate() const;
  SearchOptions search() const { return {region, stride}; }
};

struct NeighborOverlap {
  int neighbor = 0;
  Eigen::MatrixXd overlap;  // rows: overlap pixels, cols: candidates
};

/// Operands of one patch: query feature, candidate features as columns, and
/// the candidates' overlap intensities toward every grid neighbor. Column k
/// of every matrix comes from candidate k.
struct PatchProblem {
  std::vector<std::uint32_t> sources;
  Eigen::MatrixXd features;
  Eigen::VectorXd query;
  std::vector<NeighborOverlap> overlaps;

  int K() const { return static_cast<int>(features.cols()); }
  const Eigen::MatrixXd& overlap_with(int neighbor) const;
};

struct WeightField {
  std::vector<Eigen::VectorXd> weights;
  std::vector<std::vector<std::uint32_t>> sources;
  std::vector<double> evidence;  // ||f_i - F_i w_i||^2
  std::vector<double> coupling;  // half of alpha * each incident overlap term
  double objective = 0.0;
  std::vector<double> sweep_objectives;  // entry 0 is the uniform start
  int sweeps = 0;
};

struct SparseEntry {
  std::uint32_t index = 0;
  float weight = 0.0f;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

using SparseVector = std::vector<SparseEntry>;

/// Per-patch weights re-indexed onto the M representation pairs; indices
/// strictly increasing, at most K entries each.
struct SparseRepresentation {
  std::uint32_t M = 0;
  std::vector<SparseVector> patches;
  friend bool operator==(const SparseRepresentation&, const SparseRepresentation&) = default;
};

std::vector<PatchProblem> build_problems(const GrayImage& img, const RepresentationSet& rs, Modality modality,
                                         DescriptorKind kind, const SolverParams& params);

/// Evaluates
///   alpha * sum_{(i,j)} ||O_i^j w_i - O_j^i w_j||^2 + sum_i ||f_i - F_i w_i||^2
/// using the first weights[i].size() candidates of each problem.
double objective_value(std::span<const Eigen::VectorXd> weights, std::span<const PatchProblem> problems,
                       std::span<const AdjacencyPair> edges, double alpha);

/// Block-coordinate descent over the per-patch simplex QPs. Problems may carry
/// more candidates than params.K; the first K columns are used, so one
/// solver serves a nested list of K values. After each sweep the field rounded
/// to each patch's heaviest candidate replaces the iterate if it is no worse.
class WeightSolver {
 public:
  WeightSolver(std::vector<PatchProblem> problems, std::vector<AdjacencyPair> edges);
  WeightSolver(const WeightSolver&) = delete;
  WeightSolver& operator=(const WeightSolver&) = delete;
  WeightSolver(WeightSolver&&) = default;

  int max_K() const { return max_k_; }
  const std::vector<PatchProblem>& problems() const { return problems_; }
  WeightField solve(const SolverParams& params) const;

 private:
  // Objective from the precomputed Gram matrices; A holds the per-patch
  // quadratic blocks of the current K.
  double quadratic_objective(std::span<const Eigen::VectorXd> w, std::span<const Eigen::MatrixXd> A,
                             double alpha) const;

  struct Link {
    int other;
    Eigen::MatrixXd cross;  // O_i^j' O_j^i
  };

  std::vector<PatchProblem> problems_;
  std::vector<AdjacencyPair> edges_;
  std::vector<std::vector<Link>> links_;
  std::vector<Eigen::MatrixXd> feature_gram_;  // F'F
  std::vector<Eigen::MatrixXd> overlap_gram_;  // sum_j O_i^j' O_i^j
  std::vector<Eigen::VectorXd> feature_dot_;   // F'f
  std::vector<double> query_sq_;               // f'f
  int max_k_ = 0;
};

WeightField solve_weight_field(std::span<const PatchProblem> problems, std::span<const AdjacencyPair> edges,
                               const SolverParams& params);

SparseRepresentation to_sparse(const WeightField& wf, std::uint32_t M);

/// GHRW file: magic, u16 version, u8 descriptor, u16 K, u32 M, u32 N, then per
/// patch a varint count followed by (u32 index, f32 weight) pairs.
struct RepresentationFile {
  DescriptorKind kind = DescriptorKind::Hog;
  int K = 0;
  SparseRepresentation rep;
};

void save_representation(const std::filesystem::path& path, const RepresentationFile& file);
RepresentationFile load_representation(const std::filesystem::path& path);

}  // namespace ghfr
