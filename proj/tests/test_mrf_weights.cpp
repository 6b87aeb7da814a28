#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ghfr/error.hpp"
#include "ghfr/mrf_weights.hpp"
#include "ghfr/simplex_qp.hpp"
#include "test_util.hpp"

using namespace ghfr;
using test::qp_value;

namespace {

Eigen::MatrixXd random_psd(Rng& rng, int K, int rank) {
  const Eigen::MatrixXd B = test::random_matrix(rng, rank, K);
  return B.transpose() * B;
}

bool feasible(const Eigen::VectorXd& w) {
  return w.minCoeff() >= -1e-12 && w.maxCoeff() <= 1 + 1e-12 && std::abs(w.sum() - 1) <= 1e-9;
}

std::vector<PatchProblem> truncated(const std::vector<PatchProblem>& ps, int K) {
  auto out = ps;
  for (auto& p : out) {
    p.features = p.features.leftCols(K).eval();
    p.sources.resize(K);
    for (auto& o : p.overlaps) o.overlap = o.overlap.leftCols(K).eval();
  }
  return out;
}

}  // namespace

TEST_CASE("simplex QP fixed examples") {
  CHECK(solve_patch_qp(Eigen::MatrixXd::Constant(1, 1, 3.0), Eigen::VectorXd::Constant(1, -5.0))[0] == 1.0);

  const Eigen::VectorXd flat = solve_patch_qp(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2));
  CHECK(flat[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(flat[1] == doctest::Approx(0.5).epsilon(1e-9));

  // f = 3 with candidate features (0, 2): (3 - 2 w2)^2 = w'Aw + g'w + 9.
  Eigen::MatrixXd F(1, 2);
  F << 0, 2;
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(1, 3.0);
  const Eigen::MatrixXd A = F.transpose() * F;
  const Eigen::VectorXd g = -2.0 * F.transpose() * f;
  const Eigen::VectorXd w = solve_patch_qp(A, g);
  CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(qp_value(A, g, w) == doctest::Approx(test::simplex_grid_min(A, g, 1e-3)).epsilon(1e-9));
}

TEST_CASE("simplex QP agrees with the grid oracle and KKT") {
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int K = 1 + trial % 3;
    const Eigen::MatrixXd A = random_psd(rng, K, 1 + static_cast<int>(rng.below(K)));
    const Eigen::VectorXd g = test::random_matrix(rng, K, 1).col(0);
    const auto res = solve_simplex_qp(A, g);
    CHECK(feasible(res.w));
    CHECK(res.kkt_residual < 1e-8);
    CHECK(std::abs(qp_value(A, g, res.w) - test::simplex_grid_min(A, g, 1e-3)) <= 1e-4);
  }
}

TEST_CASE("simplex QP is equivariant under candidate permutation") {
  Rng rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const int K = 6;
    const Eigen::MatrixXd A = random_psd(rng, K, 3);
    const Eigen::VectorXd g = test::random_matrix(rng, K, 1).col(0);
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(K);
    for (int k = 0; k < K; ++k) P.indices()[k] = perm[k];
    const Eigen::VectorXd w = solve_patch_qp(A, g);
    const Eigen::VectorXd wp = solve_patch_qp(P * A * P.transpose(), P * g);
    CHECK((P * w - wp).cwiseAbs().maxCoeff() < 1e-7);
    const Eigen::VectorXd warm = test::random_simplex_point(rng, K);
    CHECK((solve_simplex_qp(A, g, &warm).w - w).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("simplex QP rejects bad input") {
  CHECK_THROWS_AS(solve_patch_qp(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2)), Error);
  Eigen::MatrixXd A(2, 2);
  A << 1, 2, 0, 1;
  CHECK_THROWS_AS(solve_patch_qp(A, Eigen::VectorXd::Zero(2)), Error);
  A << 1, 0, 0, std::nan("");
  CHECK_THROWS_AS(solve_patch_qp(A, Eigen::VectorXd::Zero(2)), Error);
}

TEST_CASE("alpha = 0 decouples the patches") {
  Rng rng(23);
  const auto rf = test::random_field(rng, 4, 3, 5, 6, 4);
  SolverParams params;
  params.alpha = 0.0;
  params.K = 5;
  const auto wf = solve_weight_field(rf.problems, rf.edges, params);
  double residuals = 0;
  for (std::size_t i = 0; i < rf.problems.size(); ++i) {
    const auto& p = rf.problems[i];
    const Eigen::VectorXd w = solve_patch_qp(p.features.transpose() * p.features, -2.0 * p.features.transpose() * p.query);
    CHECK((wf.weights[i] - w).cwiseAbs().maxCoeff() <= 1e-8);
    residuals += (p.query - p.features * wf.weights[i]).squaredNorm();
  }
  CHECK(objective_value(wf.weights, rf.problems, rf.edges, 0.0) == doctest::Approx(residuals).epsilon(1e-12));
}

TEST_CASE("weight field: feasibility, descent and sampled optimality") {
  Rng rng(24);
  for (int trial = 0; trial < 5; ++trial) {
    const auto rf = test::random_field(rng, 5, 4, 4, 8, 5);
    SolverParams params;
    params.alpha = 0.3;
    params.K = 4;
    params.tol = 1e-10;
    params.max_sweeps = 200;
    const auto wf = solve_weight_field(rf.problems, rf.edges, params);
    for (const auto& w : wf.weights) CHECK(feasible(w));
    for (std::size_t s = 1; s < wf.sweep_objectives.size(); ++s)
      CHECK(wf.sweep_objectives[s] <= wf.sweep_objectives[s - 1] + 1e-12);
    CHECK(wf.objective == doctest::Approx(objective_value(wf.weights, rf.problems, rf.edges, 0.3)).epsilon(1e-12));
    CHECK(wf.objective == doctest::Approx(wf.sweep_objectives.back()).epsilon(1e-9));
    double parts = 0;
    for (std::size_t i = 0; i < wf.evidence.size(); ++i) parts += wf.evidence[i] + wf.coupling[i];
    CHECK(parts == doctest::Approx(wf.objective).epsilon(1e-12));
    for (int sample = 0; sample < 100; ++sample) {
      std::vector<Eigen::VectorXd> w;
      for (std::size_t i = 0; i < rf.problems.size(); ++i) w.push_back(test::random_simplex_point(rng, 4));
      CHECK(wf.objective <= objective_value(w, rf.problems, rf.edges, 0.3));
    }
  }
}

TEST_CASE("solver at smaller K uses the leading candidates") {
  Rng rng(25);
  const auto rf = test::random_field(rng, 3, 3, 6, 5, 3);
  WeightSolver solver(rf.problems, rf.edges);
  CHECK(solver.max_K() == 6);
  SolverParams params;
  params.alpha = 0.5;
  params.K = 4;
  const auto a = solver.solve(params);
  const auto b = solve_weight_field(truncated(rf.problems, 4), rf.edges, params);
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    CHECK((a.weights[i] - b.weights[i]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.sources[i] == b.sources[i]);
  }
  params.K = 7;
  CHECK_THROWS_AS(solver.solve(params), Error);
}

TEST_CASE("self retrieval through build_problems") {
  Rng rng(26);
  std::vector<ImagePair> pairs;
  for (int z = 0; z < 4; ++z) {
    GrayImage a(30, 25), b(30, 25);
    for (float& v : a.pixels) v = static_cast<float>(rng.uniform());
    for (float& v : b.pixels) v = static_cast<float>(rng.uniform());
    pairs.push_back({"s" + std::to_string(z), a, b});
  }
  const PatchGrid g = build_grid(30, 25, 10, 5);
  const auto rs = build_repset(pairs, g, std::vector<DescriptorKind>{DescriptorKind::Hog, DescriptorKind::Raw});
  SolverParams params;
  params.K = 3;
  const auto problems = build_problems(pairs[2].a, rs, Modality::A, DescriptorKind::Hog, params);
  REQUIRE(problems.size() == static_cast<std::size_t>(g.size()));
  std::vector<Eigen::VectorXd> self;
  for (const auto& p : problems) {
    REQUIRE(p.sources[0] == 2);
    CHECK(p.features.col(0) == p.query);
    self.push_back(Eigen::VectorXd::Unit(3, 0));
  }
  CHECK(objective_value(self, problems, g.adjacency(), params.alpha) == 0.0);
  const auto wf = solve_weight_field(problems, g.adjacency(), params);
  CHECK(wf.objective <= 1e-8);
  for (const auto& w : to_sparse(wf, 4).patches) CHECK(w == SparseVector{{2, 1.0f}});
  CHECK_THROWS_AS(build_problems(GrayImage(20, 20), rs, Modality::A, DescriptorKind::Hog, params), Error);
  CHECK_THROWS_AS(build_problems(pairs[0].a, rs, Modality::A, DescriptorKind::DenseGrad, params), Error);
}

TEST_CASE("to_sparse") {
  WeightField wf;
  wf.weights.push_back((Eigen::VectorXd(2) << 0.7, 0.3).finished());
  wf.sources.push_back({3, 5});
  wf.weights.push_back((Eigen::VectorXd(3) << 0.0, 0.25, 0.75).finished());
  wf.sources.push_back({9, 4, 1});
  const auto rep = to_sparse(wf, 10);
  CHECK(rep.M == 10);
  CHECK(rep.patches[0] == SparseVector{{3, 0.7f}, {5, 0.3f}});
  CHECK(rep.patches[1] == SparseVector{{1, 0.75f}, {4, 0.25f}});
  for (const auto& p : rep.patches) {
    double s = 0;
    for (const auto& e : p) s += e.weight;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-7));
  }
  CHECK_THROWS_AS(to_sparse(wf, 9), Error);
}

TEST_CASE("representation files round-trip") {
  const auto dir = test::scratch_dir("ghrw");
  Rng rng(27);
  const auto rf = test::random_field(rng, 3, 2, 3, 4, 2);
  SolverParams params;
  params.K = 3;
  const auto wf = solve_weight_field(rf.problems, rf.edges, params);
  RepresentationFile file{DescriptorKind::DenseGrad, 3, to_sparse(wf, 18)};
  save_representation(dir / "r.ghrw", file);
  const auto back = load_representation(dir / "r.ghrw");
  CHECK(back.kind == DescriptorKind::DenseGrad);
  CHECK(back.K == 3);
  CHECK(back.rep == file.rep);
  const std::string bytes = test::slurp(dir / "r.ghrw");
  CHECK(bytes.substr(0, 4) == "GHRW");
  std::ofstream(dir / "short.ghrw", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(load_representation(dir / "short.ghrw"), Error);
}

TEST_CASE("solver parameter validation") {
  SolverParams p;
  p.alpha = -1;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.tol = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  CHECK(p.K == 15);
  CHECK(p.alpha == 0.025);
  CHECK(p.region == 16);
}
