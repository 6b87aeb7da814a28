#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "ghfr/image.hpp"
#include "ghfr/mrf_weights.hpp"
#include "ghfr/rng.hpp"

namespace ghfr::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ghfr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_simplex_point(Rng& rng, int K) {
  Eigen::VectorXd w(K);
  for (int k = 0; k < K; ++k) w[k] = -std::log(1.0 - rng.uniform());
  return w / w.sum();
}

// Brute-force minimum of w'Aw + g'w over a grid on the simplex.
inline double simplex_grid_min(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, double step) {
  const int n = static_cast<int>(std::lround(1.0 / step));
  const int K = static_cast<int>(g.size());
  auto f = [&](const Eigen::VectorXd& w) { return w.dot(A * w) + g.dot(w); };
  double best = 1e300;
  Eigen::VectorXd w(K);
  if (K == 1) return A(0, 0) + g[0];
  if (K == 2) {
    for (int a = 0; a <= n; ++a) {
      w << a / double(n), (n - a) / double(n);
      best = std::min(best, f(w));
    }
    return best;
  }
  for (int a = 0; a <= n; ++a)
    for (int b = 0; a + b <= n; ++b) {
      w << a / double(n), b / double(n), (n - a - b) / double(n);
      best = std::min(best, f(w));
    }
  return best;
}

// Random operands on a cols x rows 4-connected lattice. Features are
// Gaussian, overlap intensities uniform in [0,1].
struct RandomField {
  std::vector<PatchProblem> problems;
  std::vector<AdjacencyPair> edges;
};

inline RandomField random_field(Rng& rng, int cols, int rows, int K, int feature_dim, int overlap_dim) {
  RandomField rf;
  const int N = cols * rows;
  rf.problems.resize(N);
  for (int i = 0; i < N; ++i) {
    auto& p = rf.problems[i];
    p.features = random_matrix(rng, feature_dim, K);
    p.query = random_matrix(rng, feature_dim, 1).col(0);
    for (int k = 0; k < K; ++k) p.sources.push_back(static_cast<std::uint32_t>(i * K + k));
  }
  auto link = [&](int i, int j) {
    AdjacencyPair e;
    e.i = i;
    e.j = j;
    rf.edges.push_back(e);
    for (int s : {i, j}) {
      Eigen::MatrixXd o(overlap_dim, K);
      for (int c = 0; c < K; ++c)
        for (int r = 0; r < overlap_dim; ++r) o(r, c) = rng.uniform();
      rf.problems[s].overlaps.push_back({s == i ? j : i, o});
    }
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      if (c + 1 < cols) link(i, i + 1);
      if (r + 1 < rows) link(i, i + cols);
    }
  return rf;
}

inline double qp_value(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, const Eigen::VectorXd& w) {
  return w.dot(A * w) + g.dot(w);
}

}  // namespace ghfr::test
